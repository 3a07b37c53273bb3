from pathlib import Path

from prefect import flow

from core.steps.modules.controller import build_predictor
from core.steps.modules.latency import resolve_model
from core.steps.modules.metrics import write_summary, write_trace
from core.steps.modules.simulator import SimResult, run_sim
from models.workload import DeviceProfile
from settings.experiment import ExperimentConfig, dump_experiment_config
from utils import setup_logger
from utils.helpers import ensure_dir, write_meta, write_rows

logger = setup_logger("wisp.sim")

BATCH_COLUMNS = ("batch_id", "dispatch", "completion", "size", "predicted", "actual", "memory", "policy", "forced", "spike")


def corpus_profile(config: ExperimentConfig) -> DeviceProfile:
    """The single device whose traces feed predictor corpora."""
    fleet = config.simulation.fleet
    return DeviceProfile(draft_speed_s_d=sum(fleet.draft_speed_range) / 2.0, alpha_base=sum(fleet.alpha_range) / 2.0, k_max=fleet.k_max)


@flow(name="simulate", validate_parameters=False)
def simulate_flow(config: ExperimentConfig) -> SimResult:
    log = logger.bind(run_id=config.run_id, seed=config.seed, scheduler=config.simulation.scheduler)
    out = ensure_dir(config.out_dir)
    dump_experiment_config(config, out)

    model = resolve_model(config.latency)
    predictor = build_predictor(config.predictor, config.seed, config.workload, corpus_profile(config))
    result = run_sim(
        config.simulation,
        model,
        scheduler_config=config.scheduler,
        workload=config.workload,
        predictor=predictor,
        seed=config.seed,
        run_id=config.run_id,
    )

    write_trace(Path(out) / "trace.csv", result.records)
    write_rows(
        Path(out) / "batches.csv",
        BATCH_COLUMNS,
        ((getattr(b, c) for c in BATCH_COLUMNS) for b in result.batches),
        command="simulate",
    )
    write_summary(Path(out) / "summary.json", result.metrics)
    write_meta(out, "simulate", seed=config.seed, run_id=config.run_id)
    log.info("Wrote simulation artifacts", extra={"out_dir": str(out), "records": len(result.records)})
    return result
