from dataclasses import dataclass
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .latency import BatchFeatures
from .speculative import VerificationOutcome

FEATURE_NAMES = ("confidence", "entropy", "margin", "stddev")


class WorkloadConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    vocab_size: int = Field(default=16, ge=2, description="Synthetic vocabulary size V")
    latent_concentration: Optional[float] = Field(
        default=3.0, gt=0.0, description="Beta concentration of per-token acceptance around its center; None is noiseless"
    )
    easy_boost: float = Field(default=0.2, ge=0.0, le=1.0, description="Center shift at difficulty 0 (and -shift at 1)")
    difficulty_mean: float = Field(default=0.5, ge=0.0, le=1.0)
    difficulty_ar: float = Field(default=0.9, ge=0.0, lt=1.0, description="AR(1) coefficient of the difficulty process")
    difficulty_sd: float = Field(default=0.08, ge=0.0, description="AR(1) innovation standard deviation")
    feature_noise_sd: float = Field(default=0.25, ge=0.0, description="Feature noise relative to each transform's range")
    prompt_len_range: Tuple[int, int] = (64, 512)
    response_len_range: Tuple[int, int] = (32, 256)
    rtt_jitter_s: float = Field(default=0.0, ge=0.0, description="Half-width of uniform jitter added to each network leg")

    @model_validator(mode="after")
    def _check_ranges(self):
        for name in ("prompt_len_range", "response_len_range"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ValueError(f"{name} must satisfy 1 <= low <= high, got ({lo}, {hi})")
        return self


class DeviceProfile(BaseModel):
    device_id: int = Field(default=0, ge=0)
    draft_speed_s_d: float = Field(gt=0.0, description="Draft throughput, tokens/second")
    network_rtt: float = Field(default=0.0, ge=0.0, description="Round-trip time, seconds")
    slo_class: str = "class1"
    slo_speed: float = Field(default=2.0, gt=0.0, description="Target token speed of the SLO class")
    alpha_base: float = Field(default=0.72, gt=0.0, lt=1.0)
    k_max: int = Field(default=8, ge=1)

    @property
    def tau_d(self) -> float:
        return 1.0 / self.draft_speed_s_d


@dataclass(frozen=True)
class DraftFeatures:
    confidence: float
    entropy: float
    margin: float
    stddev: float

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.confidence, self.entropy, self.margin, self.stddev)


@dataclass(frozen=True)
class DraftStep:
    latent_accept_prob: float
    features: DraftFeatures
    token: int
    # the synthetic oracle: the target accepts this token iff verify_uniform <= latent_accept_prob
    verify_uniform: float = 0.0

    @property
    def accepted(self) -> bool:
        return self.verify_uniform <= self.latent_accept_prob


@dataclass(frozen=True)
class SessionIteration:
    difficulty: float
    steps: Tuple[DraftStep, ...]
    outcome: VerificationOutcome
    committed: int


@dataclass(frozen=True)
class SessionTrace:
    prompt_len: int
    response_len: int
    iterations: Tuple[SessionIteration, ...]

    @property
    def committed_total(self) -> int:
        return sum(it.committed for it in self.iterations)


@dataclass(frozen=True)
class CorpusRecord:
    session_id: int
    iteration: int
    position: int
    confidence: float
    entropy: float
    margin: float
    stddev: float
    latent_accept_prob: float
    label: int

    @property
    def features(self) -> Tuple[float, float, float, float]:
        return (self.confidence, self.entropy, self.margin, self.stddev)


@dataclass(frozen=True)
class ProfileSample:
    """One profiled batch configuration with its measured latency."""

    regime: str
    category: str
    split: str
    requests: Tuple[Tuple[int, int], ...]
    features: BatchFeatures
    latency_s: float


@dataclass
class ProfileDataset:
    samples: List[ProfileSample]

    def split(self, name: str) -> List[ProfileSample]:
        return [s for s in self.samples if s.split == name]

    @property
    def train(self) -> List[ProfileSample]:
        return self.split("train")

    @property
    def test(self) -> List[ProfileSample]:
        return self.split("test")
