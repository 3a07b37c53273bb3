from dataclasses import dataclass
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import ContractError

COEFFICIENTS = ("a", "b_compute", "b_read", "c")
COMPONENTS = ("linear", "interaction", "cached_read")


@dataclass(frozen=True)
class BatchFeatures:
    n_linear: float = 0.0
    n_interactions: float = 0.0
    n_cached: float = 0.0

    def __post_init__(self):
        if self.n_linear < 0 or self.n_interactions < 0 or self.n_cached < 0:
            raise ContractError(f"negative batch features {self}", operation="BatchFeatures")

    def __add__(self, other: "BatchFeatures") -> "BatchFeatures":
        return BatchFeatures(
            self.n_linear + other.n_linear,
            self.n_interactions + other.n_interactions,
            self.n_cached + other.n_cached,
        )

    def as_tuple(self):
        return (self.n_linear, self.n_interactions, self.n_cached)


class CoefficientCI(BaseModel):
    lower: float
    upper: float
    std_error: float = 0.0


class LatencyModel(BaseModel):
    """Additive batch verification-time model ``a*N_lin + b_c*N_int + b_r*N_cached + c``."""

    a: float = Field(description="seconds per new token")
    b_compute: float = Field(description="seconds per query-key interaction")
    b_read: float = Field(description="seconds per cached token read")
    c: float = Field(description="constant per-batch overhead, seconds")
    preset: Optional[str] = None
    ci: Dict[str, CoefficientCI] = Field(default_factory=dict)
    fit_meta: Dict[str, float] = Field(default_factory=dict)

    @field_validator("a", "b_compute", "b_read", "c")
    @classmethod
    def _finite(cls, value: float) -> float:
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError("coefficient must be finite")
        return value

    def coefficients(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in COEFFICIENTS}

    def scaled(self, factor: float) -> "LatencyModel":
        """The same model with every coefficient multiplied by ``factor``."""
        if not factor > 0.0:
            raise ContractError(f"scale factor must be positive, got {factor}", operation="LatencyModel.scaled")
        return LatencyModel(
            a=self.a * factor,
            b_compute=self.b_compute * factor,
            b_read=self.b_read * factor,
            c=self.c * factor,
            preset=self.preset,
            fit_meta=dict(self.fit_meta),
        )

    def predict(self, f: BatchFeatures) -> float:
        return self.a * f.n_linear + self.b_compute * f.n_interactions + self.b_read * f.n_cached + self.c


class SplitMetrics(BaseModel):
    n: int
    r2: float
    adjusted_r2: float
    rmse_s: float
    mae_s: float
    mape_pct: float
    mape_excluded: int = 0
    max_error_s: float


class FitReport(BaseModel):
    train: SplitMetrics
    test: Optional[SplitMetrics] = None
    ci: Dict[str, CoefficientCI] = Field(default_factory=dict)
    bootstrap_iterations: int = 0
    bootstrap_redraws: int = 0
    cv_r2: List[float] = Field(default_factory=list)
    cv_r2_mean: Optional[float] = None
    cv_r2_sd: Optional[float] = None
    solver: str = "normal_equations"
    condition_number: float = 1.0
    valid: bool = True
    warnings: List[str] = Field(default_factory=list)

    @property
    def generalization_gap(self) -> Optional[float]:
        if self.test is None:
            return None
        return self.train.r2 - self.test.r2

    @property
    def generalizes_well(self) -> Optional[bool]:
        gap = self.generalization_gap
        return None if gap is None else gap < 0.05


class RegimeSummary(BaseModel):
    n: int
    mean_abs_error_s: float
    p95_abs_error_s: float
    dominant: Dict[str, int] = Field(default_factory=dict)


class RegimeDiagnostics(BaseModel):
    regimes: Dict[str, RegimeSummary]
    dominant: List[str]


class LatencyConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    preset: str = Field(default="appendix-c", description="Named coefficient preset used when no model file is given")
    model_path: Optional[str] = Field(default=None, description="Fitted model file; overrides the preset")
    scale: float = Field(default=1.0, gt=0.0, description="Multiplier on every coefficient (slower or faster verifier)")
    n_configs: int = Field(default=173, ge=10, description="Synthetic profile dataset size")
    noise_sd: float = Field(default=0.004, ge=0.0, description="Synthetic profile noise, seconds")
    n_boot: int = Field(default=1000, ge=0)
    cv_folds: int = Field(default=5, ge=2)
