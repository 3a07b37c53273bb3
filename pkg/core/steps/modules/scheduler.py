"""SLO-aware verification batch construction."""

import math
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from models.errors import ContractError
from models.latency import BatchFeatures, LatencyModel
from models.scheduler import BatchPlan, SchedulerConfig, VerificationRequest
from utils import setup_logger

from .latency import predict_batch_time, request_features
from .speculative import server_budget

logger = setup_logger("wisp.scheduler")

MIN_COST_S = 1e-9
ORACLE_MAX_REQUESTS = 16
# absorbs summation-order rounding between the vectorized and incremental predictions
ORACLE_SLACK_S = 1e-12


def utility(g_hat: float, v_hat: float) -> float:
    if not v_hat > 0.0:
        raise ContractError(f"verification cost must be positive, got {v_hat}", operation="utility")
    return g_hat / v_hat


def latest_start_time(d_i: float, v_hat: float, delta: float) -> float:
    if delta < 0.0 or v_hat < 0.0:
        raise ContractError(f"negative cost or guard time (v={v_hat}, delta={delta})", operation="latest_start_time")
    return d_i - v_hat - delta


def estimate_cost(model: LatencyModel, l_new: int, l_cached: int) -> float:
    """Solo verification-time estimate: the model's prediction for the singleton batch."""
    return max(predict_batch_time(model, request_features(l_new, l_cached)), MIN_COST_S)


def estimate_memory(l_new: int, l_cached: int, page_size: int = 16, growth_tokens: Optional[int] = None) -> int:
    """KV pages held by the request: cached prefix, new tokens and expected committed growth."""
    growth = l_new + 1 if growth_tokens is None else growth_tokens
    return max(1, math.ceil((l_cached + l_new + growth) / page_size))


def build_request(
    request_id: int,
    arrival: float,
    slo_class: str,
    slo_speed: float,
    alpha_hat: float,
    n_draft: int,
    t_draft: float,
    t_network: float,
    l_new: int,
    l_cached: int,
    model: LatencyModel,
    config: SchedulerConfig,
    device_id: int = 0,
) -> VerificationRequest:
    budget = server_budget(alpha_hat, n_draft, slo_speed, t_draft, t_network)
    born_violated = budget <= 0.0
    return VerificationRequest(
        id=request_id,
        device_id=device_id,
        arrival_a_i=arrival,
        class_c=slo_class,
        deadline_d_i=arrival if born_violated else arrival + budget,
        est_verified_g_i=alpha_hat * n_draft,
        est_cost_v_i=estimate_cost(model, l_new, l_cached),
        est_memory_m_i=estimate_memory(l_new, l_cached, config.page_size_tokens, config.growth_tokens),
        l_new=l_new,
        l_cached=l_cached,
        born_violated=born_violated,
    )


def is_doomed(request: VerificationRequest, t_k: float) -> bool:
    """The request misses its deadline even if verified alone right now."""
    return t_k + request.est_cost_v_i > request.deadline_d_i


class _Tentative:
    """Running totals of a batch under construction."""

    __slots__ = ("members", "features", "memory", "d_min")

    def __init__(self):
        self.members: List[VerificationRequest] = []
        self.features = BatchFeatures()
        self.memory = 0
        self.d_min = math.inf

    def fits(self, cand: VerificationRequest, t_k: float, budget: int, model: LatencyModel, relax: bool) -> bool:
        if self.memory + cand.est_memory_m_i > budget:
            return False
        t_hat = predict_batch_time(model, self.features + request_features(cand.l_new, cand.l_cached))
        d_min = self.d_min
        if not (relax and is_doomed(cand, t_k)):
            d_min = min(d_min, cand.deadline_d_i)
        return t_k + t_hat <= d_min

    def add(self, cand: VerificationRequest, t_k: float, relax: bool):
        self.members.append(cand)
        self.features = self.features + request_features(cand.l_new, cand.l_cached)
        self.memory += cand.est_memory_m_i
        if not (relax and is_doomed(cand, t_k)):
            self.d_min = min(self.d_min, cand.deadline_d_i)

    def plan(self, t_k: float, model: LatencyModel, **kwargs) -> BatchPlan:
        predicted = predict_batch_time(model, self.features) if self.members else 0.0
        return BatchPlan(
            requests=list(self.members),
            dispatch_time=t_k,
            predicted_time=predicted,
            total_memory=self.memory,
            **kwargs,
        )


def feasible_add(
    batch: Union[BatchPlan, Sequence[VerificationRequest]],
    candidate: VerificationRequest,
    t_k: float,
    memory_budget: int,
    model: LatencyModel,
    relax_doomed: bool = False,
) -> bool:
    """Whether ``batch + candidate`` meets the memory budget and every (live) member deadline."""
    members = batch.requests if isinstance(batch, BatchPlan) else list(batch)
    if any(r.id == candidate.id for r in members):
        raise ContractError(f"request {candidate.id} is already in the batch", operation="feasible_add")
    state = _Tentative()
    for r in members:
        state.add(r, t_k, relax_doomed)
    return state.fits(candidate, t_k, memory_budget, model, relax_doomed)


def _edf_key(r: VerificationRequest):
    return (r.deadline_d_i, r.arrival_a_i, r.id)


def _fifo_key(r: VerificationRequest):
    return (r.arrival_a_i, r.id)


def _utility_key(r: VerificationRequest):
    return (-utility(r.est_verified_g_i, r.est_cost_v_i), r.arrival_a_i, r.id)


def edf_head(pending: Iterable[VerificationRequest]) -> Optional[VerificationRequest]:
    pending = list(pending)
    return min(pending, key=_edf_key) if pending else None


def _fill(state: _Tentative, ordered, t_k, budget, model, config) -> str:
    """Greedy admission in the given order; returns why it stopped."""
    for r in ordered:
        if len(state.members) >= config.max_batch_size:
            return "full"
        if not state.fits(r, t_k, budget, model, config.relax_doomed):
            return "infeasible"
        state.add(r, t_k, config.relax_doomed)
    return "exhausted"


def schedule_epoch(
    pending: Iterable[VerificationRequest], t_k: float, config: SchedulerConfig, model: LatencyModel
) -> BatchPlan:
    if t_k < 0:
        raise ContractError(f"dispatch time must be nonnegative, got {t_k}", operation="schedule_epoch")
    budget = config.memory_budget_at(t_k)
    critical, regular, backlog = [], [], []
    for r in pending:
        if config.expired_policy == "backlog" and r.deadline_d_i < t_k:
            backlog.append(r)
            continue
        starving = config.starvation_age_s is not None and t_k - r.arrival_a_i > config.starvation_age_s
        if starving or t_k >= latest_start_time(r.deadline_d_i, r.est_cost_v_i, config.guard_delta_s):
            critical.append(r)
        else:
            regular.append(r)
    critical.sort(key=_edf_key)
    regular.sort(key=_utility_key)
    backlog.sort(key=_fifo_key)

    state = _Tentative()
    stop = _fill(state, critical, t_k, budget, model, config)
    stopped = stop == "infeasible"
    critical_ids = [r.id for r in state.members]
    if stop == "exhausted":
        stop = _fill(state, regular, t_k, budget, model, config)
        if stop == "exhausted":
            _fill(state, backlog, t_k, budget, model, config)
    return state.plan(t_k, model, critical_ids=critical_ids, stopped=stopped, policy="wisp")


def schedule_edf(
    pending: Iterable[VerificationRequest], t_k: float, config: SchedulerConfig, model: LatencyModel
) -> BatchPlan:
    """Every request treated as critical: EDF admission with the stop rule, no utility fill."""
    budget = config.memory_budget_at(t_k)
    state = _Tentative()
    stop = _fill(state, sorted(pending, key=_edf_key), t_k, budget, model, config)
    return state.plan(
        t_k, model, critical_ids=[r.id for r in state.members], stopped=stop == "infeasible", policy="edf"
    )


def schedule_fcfs(
    pending: Iterable[VerificationRequest], t_k: float, config: SchedulerConfig, model: LatencyModel
) -> BatchPlan:
    budget = config.memory_budget_at(t_k)
    state = _Tentative()
    for r in sorted(pending, key=_fifo_key):
        if len(state.members) >= config.max_batch_size or state.memory + r.est_memory_m_i > budget:
            break
        state.members.append(r)
        state.features = state.features + request_features(r.l_new, r.l_cached)
        state.memory += r.est_memory_m_i
    return state.plan(t_k, model, policy="fcfs")


def knapsack_oracle(
    pending: Iterable[VerificationRequest], t_k: float, config: SchedulerConfig, model: LatencyModel
) -> BatchPlan:
    """Exhaustive search for the feasible subset with the largest total expected verified tokens.

    Ties go to fewer requests, then to the lexicographically smallest id tuple.
    """
    reqs = sorted(pending, key=lambda r: r.id)
    n = len(reqs)
    if n > ORACLE_MAX_REQUESTS:
        raise ContractError(f"oracle enumerates at most {ORACLE_MAX_REQUESTS} requests, got {n}", operation="knapsack_oracle")
    if n == 0:
        return BatchPlan(dispatch_time=t_k, policy="oracle")

    budget = config.memory_budget_at(t_k)
    masks = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(bool)
    feats = np.array([request_features(r.l_new, r.l_cached).as_tuple() for r in reqs])
    coef = np.array([model.a, model.b_compute, model.b_read])
    memory = np.array([r.est_memory_m_i for r in reqs], dtype=np.float64)
    value = np.array([r.est_verified_g_i for r in reqs])
    deadlines = np.array([r.deadline_d_i for r in reqs])
    live = np.array([not (config.relax_doomed and is_doomed(r, t_k)) for r in reqs])

    M = masks.astype(np.float64)
    t_hat = (M @ feats) @ coef + model.c
    d_min = np.where(masks & live, deadlines, np.inf).min(axis=1)
    size = masks.sum(axis=1)
    feasible = (M @ memory <= budget) & (size <= config.max_batch_size) & (t_k + t_hat <= d_min + ORACLE_SLACK_S)
    feasible[0] = True

    totals = np.where(feasible, M @ value, -np.inf)
    best = totals.max()
    tied = np.flatnonzero(totals >= best - 1e-12 * max(1.0, abs(best)))
    fewest = size[tied].min()
    tied = [i for i in tied if size[i] == fewest]
    choice = min(tied, key=lambda i: tuple(reqs[j].id for j in range(n) if masks[i, j]))

    state = _Tentative()
    for j in range(n):
        if masks[choice, j]:
            state.add(reqs[j], t_k, config.relax_doomed)
    return state.plan(t_k, model, policy="oracle")


SchedulerFn = Callable[[Iterable[VerificationRequest], float, SchedulerConfig, LatencyModel], BatchPlan]

SCHEDULERS: Dict[str, SchedulerFn] = {
    "wisp": schedule_epoch,
    "fcfs": schedule_fcfs,
    "edf": schedule_edf,
    "oracle": knapsack_oracle,
}


def get_scheduler(name: str) -> SchedulerFn:
    try:
        return SCHEDULERS[name]
    except KeyError:
        raise ContractError(f"unknown scheduler {name!r}; choose from {sorted(SCHEDULERS)}", operation="get_scheduler")
