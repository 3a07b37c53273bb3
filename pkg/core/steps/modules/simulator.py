"""Discrete-event simulation of many devices sharing one batched verifier."""

import heapq
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Callable, Dict, Iterator, List, Optional

from models.errors import SimulationError
from models.latency import LatencyModel
from models.predictor import AcceptPredictor
from models.scheduler import BatchPlan, SchedulerConfig, VerificationRequest
from models.simulation import IterationRecord, SimMetrics, SimulationConfig
from models.workload import DeviceProfile, DraftStep, WorkloadConfig
from utils import setup_logger
from utils.rng import substream

from .controller import draft_until_stop
from .latency import batch_features, predict_batch_time, request_features
from .metrics import attribute_violations, compute_metrics
from .scheduler import ORACLE_MAX_REQUESTS, build_request, edf_head, get_scheduler
from .speculative import achieved_speed, commit_count, verify_latent_block
from .workload import DEFAULT_CONFIG, draw_lengths, gen_device_profiles, gen_draft_window, initial_difficulty, next_difficulty

logger = setup_logger("wisp.simulator")

# key component separating batch-noise streams from per-iteration network streams
_BATCH_STREAM = 0xB47C


class EventKind(IntEnum):
    """Event types; the value orders simultaneous events."""

    BATCH_COMPLETE = 0
    RESPONSE_DELIVERED = 1
    SESSION_END = 2
    DRAFT_COMPLETE = 3
    REQUEST_ARRIVE = 4
    EPOCH_DISPATCH = 5


@dataclass(order=True)
class Event:
    timestamp: float
    kind: EventKind
    seq: int
    payload: Any = field(default=None, compare=False)


@dataclass
class BatchRecord:
    batch_id: int
    dispatch: float
    completion: float
    size: int
    predicted: float
    actual: float
    memory: int
    policy: str
    forced: bool = False
    spike: bool = False
    request_ids: List[int] = field(default_factory=list)


@dataclass
class _Iteration:
    window: List[DraftStep]
    k: int
    start_time: float
    t_draft: float
    uplink: float
    downlink: float
    l_new: int
    l_cached: int
    request: Optional[VerificationRequest] = None
    dispatch: float = 0.0
    completion: float = 0.0
    batch_id: int = -1
    spike: bool = False
    outcome: Any = None


@dataclass
class _Device:
    profile: DeviceProfile
    alpha_hat: float
    session: int = 0
    iteration: int = 0
    sessions_done: int = 0
    prompt_len: int = 0
    response_len: int = 0
    committed: int = 0
    difficulty: float = 0.5
    active: bool = True
    current: Optional[_Iteration] = None


@dataclass
class SimResult:
    records: List[IterationRecord]
    metrics: SimMetrics
    batches: List[BatchRecord]
    profiles: List[DeviceProfile]

    def __iter__(self) -> Iterator:
        return iter((self.records, self.metrics))


class Simulator:
    """Closed-loop fleet: each device drafts, uploads, waits for its verification, then drafts again."""

    def __init__(
        self,
        config: SimulationConfig,
        model: LatencyModel,
        scheduler_config: Optional[SchedulerConfig] = None,
        workload: Optional[WorkloadConfig] = None,
        predictor: Optional[AcceptPredictor] = None,
        seed: int = 0,
        run_id: str = "run",
        profiles: Optional[List[DeviceProfile]] = None,
    ):
        self.config = config
        self.model = model
        scheduler_config = scheduler_config or SchedulerConfig()
        if config.relax_doomed and not scheduler_config.relax_doomed:
            scheduler_config = scheduler_config.model_copy(update={"relax_doomed": True})
        self.scheduler_config = scheduler_config
        self.workload = workload or DEFAULT_CONFIG
        self.predictor = predictor
        self.seed = seed
        self.run_id = run_id
        self.schedule: Callable[..., BatchPlan] = get_scheduler(config.scheduler)
        self.profiles = profiles or gen_device_profiles(config.n_devices, config.fleet, seed)

        self.now = 0.0
        self._events: List[Event] = []
        self._seq = 0
        self._pending: Dict[int, VerificationRequest] = {}
        self._owner: Dict[int, _Device] = {}
        self._next_request = 0
        self._next_batch = 0
        self._busy = False
        self._epoch_scheduled = False
        self.records: List[IterationRecord] = []
        self.batches: List[BatchRecord] = []
        self.devices = [_Device(profile=p, alpha_hat=p.alpha_base) for p in self.profiles]

        self._handlers = {
            EventKind.DRAFT_COMPLETE: self._on_draft_complete,
            EventKind.REQUEST_ARRIVE: self._on_request_arrive,
            EventKind.EPOCH_DISPATCH: self._on_epoch_dispatch,
            EventKind.BATCH_COMPLETE: self._on_batch_complete,
            EventKind.RESPONSE_DELIVERED: self._on_response_delivered,
            EventKind.SESSION_END: self._on_session_end,
        }

    # ------------------------------------------------------------------
    # event queue
    # ------------------------------------------------------------------

    def _push(self, timestamp: float, kind: EventKind, payload=None):
        if timestamp < self.now:
            raise SimulationError(f"event {kind.name} scheduled in the past", sim_time=self.now)
        self._seq += 1
        heapq.heappush(self._events, Event(timestamp, kind, self._seq, payload))

    def run(self) -> SimResult:
        for dev in self.devices:
            jitter = substream(self.seed, "fleet", dev.profile.device_id, 1)
            self._start_session(dev, float(jitter.uniform(0.0, self.config.fleet.start_jitter_s)))

        horizon = self.config.duration_s
        while self._events:
            event = heapq.heappop(self._events)
            if horizon is not None and event.timestamp > horizon:
                break
            self.now = event.timestamp
            self._handlers[event.kind](event.payload)

        span_end = horizon if horizon is not None else max((r.delivered for r in self.records), default=0.0)
        if not span_end > 0.0:
            raise SimulationError("simulation produced no elapsed time", sim_time=self.now)

        labels = attribute_violations(
            self.records, self.config.attribution_window, self.config.attribution_threshold, self.config.attribution_mode
        )
        for record, label in zip(self.records, labels):
            record.attribution = label

        metrics = compute_metrics(
            self.records,
            self.batches,
            self.config.fleet,
            run_id=self.run_id,
            scheduler=self.config.scheduler,
            n_devices=len(self.devices),
            seed=self.seed,
            span_end=span_end,
            warmup_fraction=self.config.warmup_fraction,
        )
        logger.info(
            "Simulation finished",
            extra={
                "run_id": self.run_id,
                "scheduler": self.config.scheduler,
                "devices": len(self.devices),
                "iterations": len(self.records),
                "batches": len(self.batches),
                "goodput_tps": round(metrics.goodput_tps, 3),
            },
        )
        return SimResult(records=self.records, metrics=metrics, batches=self.batches, profiles=self.profiles)

    # ------------------------------------------------------------------
    # device side
    # ------------------------------------------------------------------

    def _start_session(self, dev: _Device, t: float):
        rng = substream(self.seed, "workload", dev.profile.device_id, dev.session)
        dev.prompt_len, dev.response_len = draw_lengths(self.workload, rng)
        dev.difficulty = initial_difficulty(self.workload, rng)
        dev.committed = 0
        dev.iteration = 0
        self._begin_iteration(dev, t)

    def _begin_iteration(self, dev: _Device, t: float):
        profile = dev.profile
        rng = substream(self.seed, "workload", profile.device_id, dev.session, dev.iteration + 1)
        if dev.iteration > 0:
            dev.difficulty = next_difficulty(dev.difficulty, self.workload, rng)
        # the full window is always drawn so runs with and without a predictor see the same tokens
        window = gen_draft_window(profile, dev.difficulty, profile.k_max, rng, self.workload)
        k = draft_until_stop(iter(window), self.predictor, profile.k_max).k_theta

        net = substream(self.seed, "sim", profile.device_id, dev.session, dev.iteration)
        half = profile.network_rtt / 2.0
        jitter = self.workload.rtt_jitter_s
        uplink = max(0.0, half + float(net.uniform(-jitter, jitter))) if jitter else half
        downlink = max(0.0, half + float(net.uniform(-jitter, jitter))) if jitter else half

        if not self.config.prefix_cache:
            l_cached, l_new = 0, dev.prompt_len + dev.committed + k
        elif dev.iteration == 0:
            l_cached, l_new = 0, dev.prompt_len + k
        else:
            l_cached, l_new = dev.prompt_len + dev.committed, k

        dev.current = _Iteration(
            window=window,
            k=k,
            start_time=t,
            t_draft=k * profile.tau_d,
            uplink=uplink,
            downlink=downlink,
            l_new=l_new,
            l_cached=l_cached,
        )
        self._push(t + dev.current.t_draft, EventKind.DRAFT_COMPLETE, dev)

    def _on_draft_complete(self, dev: _Device):
        self._push(self.now + dev.current.uplink, EventKind.REQUEST_ARRIVE, dev)

    def _on_request_arrive(self, dev: _Device):
        it = dev.current
        profile = dev.profile
        request = build_request(
            request_id=self._next_request,
            arrival=self.now,
            slo_class=profile.slo_class,
            slo_speed=profile.slo_speed,
            alpha_hat=dev.alpha_hat,
            n_draft=it.k,
            t_draft=it.t_draft,
            t_network=profile.network_rtt,
            l_new=it.l_new,
            l_cached=it.l_cached,
            model=self.model,
            config=self.scheduler_config,
            device_id=profile.device_id,
        )
        self._next_request += 1
        if request.est_memory_m_i > self.scheduler_config.max_memory_budget:
            raise SimulationError(
                f"request {request.id} needs {request.est_memory_m_i} pages, more than any memory budget",
                sim_time=self.now,
            )
        it.request = request
        self._pending[request.id] = request
        self._owner[request.id] = dev
        if not self._busy:
            self._schedule_epoch(self.now + self.scheduler_config.dwell_s)

    def _on_response_delivered(self, request_id: int):
        dev = self._owner.pop(request_id)
        it = dev.current
        profile = dev.profile
        n = commit_count(it.outcome, dev.response_len - dev.committed)
        t_network = it.uplink + it.downlink
        t_queue = it.dispatch - it.request.arrival_a_i
        t_verify = it.completion - it.dispatch
        speed = achieved_speed(n, it.t_draft, t_network, t_queue, t_verify)
        accepted = it.outcome.accepted_len_L

        self.records.append(
            IterationRecord(
                run_id=self.run_id,
                request_id=request_id,
                device_id=profile.device_id,
                session=dev.session,
                iteration=dev.iteration,
                slo_class=profile.slo_class,
                slo_speed=profile.slo_speed,
                start_time=it.start_time,
                arrival=it.request.arrival_a_i,
                dispatch=it.dispatch,
                completion=it.completion,
                delivered=self.now,
                deadline=it.request.deadline_d_i,
                t_draft=it.t_draft,
                t_network=t_network,
                t_queue=t_queue,
                t_verify=t_verify,
                k=it.k,
                accepted_len=accepted,
                wasted=it.outcome.wasted_W,
                n_verified=n,
                achieved_speed=speed,
                violated=speed < profile.slo_speed,
                batch_id=it.batch_id,
                tau_d=profile.tau_d,
                born_violated=it.request.born_violated,
                spike=it.spike,
            )
        )

        w = self.config.alpha_ewma
        dev.alpha_hat = (1.0 - w) * dev.alpha_hat + w * (accepted / it.k)
        dev.committed += n
        dev.iteration += 1
        if dev.committed >= dev.response_len:
            self._push(self.now, EventKind.SESSION_END, dev)
        else:
            self._begin_iteration(dev, self.now)

    def _on_session_end(self, dev: _Device):
        dev.sessions_done += 1
        dev.session += 1
        limit = self.config.sessions_per_device
        if limit is not None and dev.sessions_done >= limit:
            dev.active = False
            dev.current = None
            return
        self._start_session(dev, self.now)

    # ------------------------------------------------------------------
    # verifier side
    # ------------------------------------------------------------------

    def _schedule_epoch(self, t: float):
        if self._epoch_scheduled:
            return
        self._epoch_scheduled = True
        self._push(max(t, self.now), EventKind.EPOCH_DISPATCH)

    def _candidates(self) -> List[VerificationRequest]:
        pending = list(self._pending.values())
        if self.config.scheduler == "oracle" and len(pending) > ORACLE_MAX_REQUESTS:
            pending = sorted(pending, key=lambda r: (r.deadline_d_i, r.arrival_a_i, r.id))[:ORACLE_MAX_REQUESTS]
        return pending

    def _on_epoch_dispatch(self, _payload=None):
        self._epoch_scheduled = False
        if self._busy or not self._pending:
            return
        cfg = self.scheduler_config
        plan = self.schedule(self._candidates(), self.now, cfg, self.model)

        if not plan.requests:
            head = edf_head(self._pending.values())
            if head.est_memory_m_i > cfg.memory_budget_at(self.now):
                later = [start for start, _ in cfg.memory_schedule if start > self.now]
                if not later:
                    raise SimulationError(f"request {head.id} can never fit the memory budget", sim_time=self.now)
                self._schedule_epoch(later[0])
                return
            # forced progress: the most urgent request goes alone
            plan = BatchPlan(
                requests=[head],
                dispatch_time=self.now,
                predicted_time=predict_batch_time(self.model, request_features(head.l_new, head.l_cached)),
                total_memory=head.est_memory_m_i,
                forced=True,
                policy=plan.policy,
            )

        self._dispatch(plan)

    def _dispatch(self, plan: BatchPlan):
        batch_id = self._next_batch
        self._next_batch += 1
        rng = substream(self.seed, "sim", _BATCH_STREAM, batch_id)
        predicted = predict_batch_time(self.model, batch_features(plan.requests))
        actual = predicted * math.exp(self.config.batch_noise_sigma * float(rng.standard_normal()))
        spike = bool(rng.random() < self.config.spike_prob)
        if spike:
            actual *= self.config.spike_factor

        for request in plan.requests:
            del self._pending[request.id]
            it = self._owner[request.id].current
            it.dispatch = self.now
            it.completion = self.now + actual
            it.batch_id = batch_id
            it.spike = spike

        self.batches.append(
            BatchRecord(
                batch_id=batch_id,
                dispatch=self.now,
                completion=self.now + actual,
                size=len(plan.requests),
                predicted=predicted,
                actual=actual,
                memory=plan.total_memory,
                policy=plan.policy,
                forced=plan.forced,
                spike=spike,
                request_ids=plan.ids,
            )
        )
        self._busy = True
        self._push(self.now + actual, EventKind.BATCH_COMPLETE, self.batches[-1])

    def _on_batch_complete(self, batch: BatchRecord):
        self._busy = False
        for request_id in batch.request_ids:
            dev = self._owner[request_id]
            it = dev.current
            profile = dev.profile
            rng = substream(self.seed, "verify", profile.device_id, dev.session, dev.iteration)
            steps = it.window[: it.k]
            it.outcome = verify_latent_block(
                [s.latent_accept_prob for s in steps], [s.verify_uniform for s in steps], self.workload.vocab_size, rng
            )
            self._push(self.now + it.downlink, EventKind.RESPONSE_DELIVERED, request_id)
        if self._pending:
            oldest = min(r.arrival_a_i for r in self._pending.values())
            self._schedule_epoch(oldest + self.scheduler_config.dwell_s)


def run_sim(
    config: SimulationConfig,
    model: LatencyModel,
    scheduler_config: Optional[SchedulerConfig] = None,
    workload: Optional[WorkloadConfig] = None,
    predictor: Optional[AcceptPredictor] = None,
    seed: int = 0,
    run_id: str = "run",
    profiles: Optional[List[DeviceProfile]] = None,
) -> SimResult:
    """Run one simulation; the result unpacks as ``records, metrics``."""
    return Simulator(config, model, scheduler_config, workload, predictor, seed, run_id, profiles).run()
