from pathlib import Path
from typing import Dict, List, Optional, Sequence

from prefect import flow, task
from prefect.cache_policies import NO_CACHE
from prefect.task_runners import ThreadPoolTaskRunner

from core.steps.modules.controller import build_predictor
from core.steps.modules.latency import resolve_model
from core.steps.modules.metrics import capacity_table
from core.steps.modules.simulator import run_sim
from models.errors import ConfigError
from models.latency import LatencyModel
from models.simulation import SimMetrics
from settings import settings
from settings.experiment import ExperimentConfig, dump_experiment_config
from utils import setup_logger
from utils.helpers import ensure_dir, write_meta, write_rows

from .simulate import corpus_profile

logger = setup_logger("wisp.capacity")

CAPACITY_COLUMNS = ("scheduler", "class", "capacity", "violation_at_capacity")
SWEEP_COLUMNS = ("scheduler", "n_devices", "class", "n", "violation_rate", "goodput_tps")


@task(cache_policy=NO_CACHE)
def simulate_point(config: ExperimentConfig, scheduler: str, n_devices: int, model: LatencyModel, predictor) -> SimMetrics:
    sim = config.simulation.model_copy(update={"n_devices": n_devices, "scheduler": scheduler})
    return run_sim(
        sim,
        model,
        scheduler_config=config.scheduler,
        workload=config.workload,
        predictor=predictor,
        seed=config.seed,
        run_id=f"{config.run_id}-{scheduler}-{n_devices}",
    ).metrics


@flow(
    name="capacity",
    task_runner=ThreadPoolTaskRunner(max_workers=settings.PREFECT_TASK_WORKERS),
    validate_parameters=False,
)
def capacity_flow(
    config: ExperimentConfig,
    classes: Optional[Sequence[str]] = None,
    epsilon: Optional[float] = None,
    sweep: Optional[Sequence[int]] = None,
) -> List[Dict]:
    cap = config.capacity
    sweep = sorted(set(sweep or cap.sweep))
    epsilon = cap.epsilon if epsilon is None else epsilon
    known = [c.name for c in config.simulation.fleet.slo_classes]
    classes = list(classes or cap.classes or known)
    unknown = [c for c in classes if c not in known]
    if unknown:
        raise ConfigError(f"unknown SLO classes {unknown}; configured: {known}", field="capacity.classes")

    out = ensure_dir(config.out_dir)
    dump_experiment_config(config, out)
    model = resolve_model(config.latency)
    predictor = build_predictor(config.predictor, config.seed, config.workload, corpus_profile(config))

    futures = {
        (s, n): simulate_point.submit(config, s, n, model, predictor) for s in cap.schedulers for n in sweep
    }
    metrics: Dict[str, Dict[int, SimMetrics]] = {s: {n: futures[(s, n)].result() for n in sweep} for s in cap.schedulers}

    rate_fns = None
    if cap.bisect:
        def rate_fn_for(scheduler: str):
            def for_class(name: str):
                def rate(n: int):
                    if n not in metrics[scheduler]:
                        metrics[scheduler][n] = simulate_point.fn(config, scheduler, n, model, predictor)
                    return metrics[scheduler][n].violation_rate(name)
                return rate
            return for_class

        rate_fns = {s: rate_fn_for(s) for s in cap.schedulers}

    rows = capacity_table(
        {s: {n: metrics[s][n] for n in sweep} for s in cap.schedulers}, classes, epsilon, rate_fns, bisect=cap.bisect
    )
    write_rows(Path(out) / "capacity.csv", CAPACITY_COLUMNS, ([r[c] for c in CAPACITY_COLUMNS] for r in rows), command="capacity")
    write_rows(
        Path(out) / "sweep.csv",
        SWEEP_COLUMNS,
        (
            (s, n, name, m.per_class[name].n, m.violation_rate(name), m.goodput_tps)
            for s in cap.schedulers
            for n, m in sorted(metrics[s].items())
            for name in classes
        ),
        command="capacity",
    )
    write_meta(out, "capacity", seed=config.seed, epsilon=epsilon, sweep=sweep)
    logger.info("Finished capacity sweep", extra={"points": len(futures), "rows": len(rows)})
    return rows
