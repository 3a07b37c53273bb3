"""Run-level measurements over iteration records."""

from collections import deque
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy import stats

from models.errors import ContractError
from models.simulation import (
    TRACE_COLUMNS,
    BatchStats,
    ClassMetrics,
    DeviceFleetConfig,
    IterationRecord,
    SimMetrics,
)
from utils import setup_logger
from utils.helpers import write_json, write_rows

from .speculative import achieved_speed

logger = setup_logger("wisp.metrics")


def goodput(records: Sequence[IterationRecord], span: Optional[float] = None) -> float:
    """Committed tokens per second; the span defaults to first draft start through last delivery."""
    if not records:
        return 0.0
    if span is None:
        span = max(r.delivered for r in records) - min(r.start_time for r in records)
    if not span > 0.0:
        raise ContractError(f"records must span positive time, got {span}", operation="goodput")
    return sum(r.n_verified for r in records) / span


def attribute_violations(
    records: Sequence[IterationRecord],
    window_W: int = 20,
    rho_threshold: float = 1.5,
    mode: str = "events",
) -> List[str]:
    """Spike-based attribution of each violated record.

    ``rho = t_verify / MA`` where MA averages the previous ``window_W`` records'
    verification times (``events``) or the previous ``window_W`` batch times
    (``batches``). Only batches completed before the record's own batch count as
    history; with no history ``rho`` is 1. Labels align with the input order.
    """
    if window_W < 1:
        raise ContractError(f"window must be at least 1, got {window_W}", operation="attribute_violations")
    if not rho_threshold > 1.0:
        raise ContractError(f"threshold must exceed 1, got {rho_threshold}", operation="attribute_violations")
    if mode not in ("events", "batches"):
        raise ContractError(f"unknown attribution mode {mode!r}", operation="attribute_violations")

    order = sorted(range(len(records)), key=lambda i: (records[i].completion, records[i].batch_id, records[i].request_id))
    labels = ["none"] * len(records)
    history: deque = deque(maxlen=window_W)

    start = 0
    while start < len(order):
        head = records[order[start]]
        end = start
        while (
            end < len(order)
            and records[order[end]].batch_id == head.batch_id
            and records[order[end]].completion == head.completion
        ):
            end += 1
        group = order[start:end]
        ma = float(np.mean(history)) if history else None
        for i in group:
            r = records[i]
            if not r.violated:
                continue
            rho = r.t_verify / ma if ma else 1.0
            labels[i] = "compute_dominant" if rho > rho_threshold else "queue_dominant"
        if mode == "events":
            history.extend(records[i].t_verify for i in group)
        else:
            history.append(head.t_verify)
        start = end
    return labels


def record_self_check(records: Iterable[IterationRecord]) -> bool:
    """Recompute speed and violation flag from the stored time components."""
    for r in records:
        speed = achieved_speed(r.n_verified, r.t_draft, r.t_network, r.t_queue, r.t_verify)
        if speed != r.achieved_speed or (speed < r.slo_speed) != r.violated:
            return False
        if not (r.arrival <= r.dispatch <= r.completion) or r.wasted != r.k - r.accepted_len:
            return False
    return True


def capacity(
    violation_rate: Callable[[int], Optional[float]],
    sweep: Sequence[int],
    epsilon: float,
    bisect: bool = False,
) -> int:
    """Largest swept device count whose observed violation rate is at most ``epsilon`` (0 if none).

    A ``None`` rate means the class had no steady-state records at that count; such points
    are unmeasured and never pass. With ``bisect`` the gap between the last passing and the
    first failing sweep point is searched by bisection.
    """
    if not 0.0 < epsilon <= 1.0:
        raise ContractError(f"epsilon must lie in (0, 1], got {epsilon}", operation="capacity")
    points = sorted(set(int(n) for n in sweep))
    if not points:
        raise ContractError("sweep is empty", operation="capacity")

    def passes(rate: Optional[float]) -> bool:
        return rate is not None and rate <= epsilon

    rates = {n: violation_rate(n) for n in points}
    passing = [n for n in points if passes(rates[n])]
    best = max(passing) if passing else 0
    if bisect:
        failing_above = [n for n in points if n > best and rates[n] is not None and not passes(rates[n])]
        if failing_above:
            lo, hi = best, min(failing_above)
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if passes(violation_rate(mid)):
                    lo = mid
                else:
                    hi = mid
            best = lo
    return best


def _pearson(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    if len(x) < 3 or np.std(x) == 0 or np.std(y) == 0:
        return None
    return float(stats.pearsonr(x, y)[0])


def compute_metrics(
    records: Sequence[IterationRecord],
    batches: Sequence,
    fleet: DeviceFleetConfig,
    *,
    run_id: str,
    scheduler: str,
    n_devices: int,
    seed: int,
    span_end: float,
    warmup_fraction: float,
) -> SimMetrics:
    steady_start = warmup_fraction * span_end
    steady = [r for r in records if r.arrival >= steady_start]
    window = max(span_end - steady_start, 1e-12)

    per_class = {}
    for slo in fleet.slo_classes:
        rows = [r for r in steady if r.slo_class == slo.name]
        violations = sum(r.violated for r in rows)
        per_class[slo.name] = ClassMetrics(
            name=slo.name,
            speed=slo.speed,
            n=len(rows),
            violations=violations,
            violation_rate=violations / len(rows) if rows else None,
            mean_speed=float(np.mean([r.achieved_speed for r in rows])) if rows else None,
            compute_dominant=sum(r.attribution == "compute_dominant" for r in rows),
            queue_dominant=sum(r.attribution == "queue_dominant" for r in rows),
        )

    device_tokens: Dict[int, int] = {}
    device_wasted: Dict[int, List[int]] = {}
    for r in steady:
        device_tokens[r.device_id] = device_tokens.get(r.device_id, 0) + r.n_verified
        device_wasted.setdefault(r.device_id, []).append(r.wasted)
    devices = sorted(device_wasted)
    per_device = {str(d): device_tokens[d] / window for d in devices}

    drafted = sum(r.k for r in steady)
    steady_batches = [b for b in batches if b.dispatch >= steady_start]
    busy = sum(min(b.completion, span_end) - b.dispatch for b in batches if b.dispatch < span_end)
    batch_stats = BatchStats(
        count=len(steady_batches),
        mean_size=float(np.mean([b.size for b in steady_batches])) if steady_batches else 0.0,
        max_size=max((b.size for b in steady_batches), default=0),
        mean_predicted_s=float(np.mean([b.predicted for b in steady_batches])) if steady_batches else 0.0,
        mean_actual_s=float(np.mean([b.actual for b in steady_batches])) if steady_batches else 0.0,
        utilization=busy / span_end if span_end > 0 else 0.0,
        forced_dispatches=sum(b.forced for b in batches),
        spikes=sum(b.spike for b in batches),
    )

    return SimMetrics(
        run_id=run_id,
        scheduler=scheduler,
        n_devices=n_devices,
        seed=seed,
        span_s=span_end,
        steady_start_s=steady_start,
        iterations=len(steady),
        per_class=per_class,
        goodput_tps=sum(r.n_verified for r in steady) / window,
        per_device_goodput=per_device,
        mean_wdt_s=float(np.mean([r.tau_d * r.wasted for r in steady])) if steady else 0.0,
        mean_wasted_tokens=float(np.mean([r.wasted for r in steady])) if steady else 0.0,
        committed_fraction=sum(r.accepted_len for r in steady) / drafted if drafted else 0.0,
        born_violated=sum(r.born_violated for r in steady),
        wdt_goodput_corr=_pearson([float(np.mean(device_wasted[d])) for d in devices], [per_device[str(d)] for d in devices]),
        batches=batch_stats,
        self_check_passed=record_self_check(records),
    )


def write_trace(path, records: Iterable[IterationRecord], command: str = "simulate") -> Path:
    return write_rows(path, TRACE_COLUMNS, (r.trace_row() for r in records), command=command)


def write_summary(path, metrics: SimMetrics) -> Path:
    return write_json(path, metrics.model_dump(mode="json"))


def summary_table(metrics: SimMetrics) -> List[Dict]:
    """One row per SLO class, in configuration order."""
    return [
        {
            "class": c.name,
            "speed": c.speed,
            "n": c.n,
            "violation_rate": c.violation_rate,
            "mean_speed": c.mean_speed,
            "compute_dominant": c.compute_dominant,
            "queue_dominant": c.queue_dominant,
        }
        for c in metrics.per_class.values()
    ]


def capacity_table(
    sweep_metrics: Dict[str, Dict[int, SimMetrics]],
    classes: Sequence[str],
    epsilon: float,
    rate_fns: Optional[Dict[str, Callable[[str], Callable[[int], Optional[float]]]]] = None,
    bisect: bool = False,
) -> List[Dict]:
    """One row per (scheduler, class): capacity and the violation rate measured there.

    ``rate_fns[scheduler](class)`` supplies violation rates for device counts outside
    the sweep when bisecting.
    """
    rows = []
    for scheduler, by_n in sweep_metrics.items():
        sweep = sorted(by_n)
        for name in classes:
            if rate_fns is not None and scheduler in rate_fns:
                rate_fn = rate_fns[scheduler](name)
            else:
                rate_fn = lambda n, by_n=by_n, name=name: by_n[n].violation_rate(name)
            cap = capacity(rate_fn, sweep, epsilon, bisect=bisect)
            at_cap = rate_fn(cap) if cap else None
            rows.append({"scheduler": scheduler, "class": name, "capacity": cap, "violation_at_capacity": at_cap})
    return rows
