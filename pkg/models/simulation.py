from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

ATTRIBUTION_LABELS = ("none", "queue_dominant", "compute_dominant")

# fixed trace column order; the leading block is the documented schema
TRACE_COLUMNS = (
    "run_id",
    "request_id",
    "slo_class",
    "arrival",
    "t_draft",
    "t_network",
    "t_queue",
    "t_verify",
    "k",
    "accepted_len",
    "wasted",
    "n_verified",
    "achieved_speed",
    "violated",
    "attribution",
    "device_id",
    "session",
    "iteration",
    "batch_id",
    "dispatch",
    "completion",
    "deadline",
    "born_violated",
    "spike",
)


class SLOClass(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    speed: float = Field(gt=0.0, description="Target token speed s_c, tokens/second")


def default_slo_classes() -> List[SLOClass]:
    return [
        SLOClass(name="class1", speed=2.0),
        SLOClass(name="class2", speed=4.0),
        SLOClass(name="class3", speed=6.0),
        SLOClass(name="class4", speed=8.0),
    ]


class DeviceFleetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    slo_classes: List[SLOClass] = Field(default_factory=default_slo_classes)
    class_mix: List[float] = Field(default_factory=lambda: [1.0, 1.0, 1.0, 1.0])
    draft_speed_range: Tuple[float, float] = (40.0, 60.0)
    rtt_range: Tuple[float, float] = (0.02, 0.08)
    alpha_range: Tuple[float, float] = (0.72, 0.72)
    k_max: int = Field(default=8, ge=1)
    start_jitter_s: float = Field(default=0.5, ge=0.0)

    @model_validator(mode="after")
    def _check(self):
        if not self.slo_classes:
            raise ValueError("at least one SLO class is required")
        if not self.class_mix:
            raise ValueError("class_mix is empty")
        if len(self.class_mix) != len(self.slo_classes):
            raise ValueError(f"class_mix has {len(self.class_mix)} weights for {len(self.slo_classes)} classes")
        if any(w < 0 for w in self.class_mix) or sum(self.class_mix) <= 0:
            raise ValueError("class_mix weights must be nonnegative with a positive sum")
        if len({c.name for c in self.slo_classes}) != len(self.slo_classes):
            raise ValueError("SLO class names must be unique")
        lo, hi = self.draft_speed_range
        if not 0 < lo <= hi:
            raise ValueError("draft_speed_range must satisfy 0 < low <= high")
        lo, hi = self.rtt_range
        if not 0 <= lo <= hi:
            raise ValueError("rtt_range must satisfy 0 <= low <= high")
        lo, hi = self.alpha_range
        if not 0 < lo <= hi < 1:
            raise ValueError("alpha_range must satisfy 0 < low <= high < 1")
        return self

    def class_speed(self, name: str) -> float:
        for c in self.slo_classes:
            if c.name == name:
                return c.speed
        raise KeyError(name)


class SimulationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_devices: int = Field(default=16, ge=1)
    fleet: DeviceFleetConfig = Field(default_factory=DeviceFleetConfig)
    scheduler: Literal["wisp", "fcfs", "edf", "oracle"] = "wisp"
    duration_s: Optional[float] = Field(default=60.0, gt=0.0)
    sessions_per_device: Optional[int] = Field(default=None, ge=1)
    warmup_fraction: float = Field(default=0.1, ge=0.0, lt=1.0)
    batch_noise_sigma: float = Field(default=0.05, ge=0.0, description="Lognormal sigma of actual/predicted batch time")
    spike_prob: float = Field(default=0.0, ge=0.0, le=1.0)
    spike_factor: float = Field(default=3.0, ge=1.0)
    prefix_cache: bool = True
    alpha_ewma: float = Field(default=0.1, gt=0.0, le=1.0)
    attribution_window: int = Field(default=20, ge=1)
    attribution_threshold: float = Field(default=1.5, gt=1.0)
    attribution_mode: Literal["events", "batches"] = "events"
    relax_doomed: bool = Field(
        default=True, description="Run the scheduler with doomed requests relaxed; off keeps every batch strictly deadline-safe"
    )

    @model_validator(mode="after")
    def _check_horizon(self):
        if self.duration_s is None and self.sessions_per_device is None:
            raise ValueError("set duration_s or sessions_per_device")
        return self


class CapacityConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sweep: List[int] = Field(default_factory=lambda: [4, 8, 12, 16, 24, 32, 48, 64])
    epsilon: float = Field(default=0.05, gt=0.0, le=1.0)
    schedulers: List[Literal["wisp", "fcfs", "edf", "oracle"]] = Field(default_factory=lambda: ["wisp", "fcfs"])
    classes: Optional[List[str]] = None
    bisect: bool = False

    @model_validator(mode="after")
    def _check(self):
        if not self.sweep or any(n < 1 for n in self.sweep):
            raise ValueError("sweep must be a nonempty list of positive device counts")
        if not self.schedulers:
            raise ValueError("at least one scheduler is required")
        return self


@dataclass
class IterationRecord:
    run_id: str
    request_id: int
    device_id: int
    session: int
    iteration: int
    slo_class: str
    slo_speed: float
    start_time: float
    arrival: float
    dispatch: float
    completion: float
    delivered: float
    deadline: float
    t_draft: float
    t_network: float
    t_queue: float
    t_verify: float
    k: int
    accepted_len: int
    wasted: int
    n_verified: int
    achieved_speed: float
    violated: bool
    batch_id: int
    tau_d: float
    born_violated: bool = False
    spike: bool = False
    attribution: str = "none"

    def trace_row(self) -> tuple:
        return tuple(getattr(self, name) for name in TRACE_COLUMNS)


class ClassMetrics(BaseModel):
    name: str
    speed: float
    n: int
    violations: int
    violation_rate: Optional[float] = None
    mean_speed: Optional[float] = None
    compute_dominant: int = 0
    queue_dominant: int = 0


class BatchStats(BaseModel):
    count: int = 0
    mean_size: float = 0.0
    max_size: int = 0
    mean_predicted_s: float = 0.0
    mean_actual_s: float = 0.0
    utilization: float = 0.0
    forced_dispatches: int = 0
    spikes: int = 0


class SimMetrics(BaseModel):
    run_id: str
    scheduler: str
    n_devices: int
    seed: int
    span_s: float
    steady_start_s: float
    iterations: int
    per_class: Dict[str, ClassMetrics]
    goodput_tps: float
    per_device_goodput: Dict[str, float]
    mean_wdt_s: float
    mean_wasted_tokens: float
    committed_fraction: float
    born_violated: int
    wdt_goodput_corr: Optional[float] = None
    batches: BatchStats = Field(default_factory=BatchStats)
    self_check_passed: bool = True

    def violation_rate(self, class_name: str) -> Optional[float]:
        return self.per_class[class_name].violation_rate
