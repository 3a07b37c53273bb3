from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Optional, Protocol, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator

from .errors import ContractError
from .workload import DraftStep


class AcceptPredictor(Protocol):
    def predict_accept(self, step: DraftStep) -> bool: ...


class LayerWeights(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    n_in: int = Field(alias="in", ge=1)
    n_out: int = Field(alias="out", ge=1)
    weight: List[List[float]]
    bias: List[float]

    @model_validator(mode="after")
    def _check_shape(self):
        if len(self.weight) != self.n_out or any(len(row) != self.n_in for row in self.weight):
            raise ValueError(f"weight must be {self.n_out}x{self.n_in} (row-major)")
        if len(self.bias) != self.n_out:
            raise ValueError(f"bias must have {self.n_out} entries")
        return self


class PredictorModel(BaseModel):
    """Feed-forward rejection predictor exported for numpy inference.

    Hidden layers use ReLU, the last layer a sigmoid; the score is the predicted
    probability that the target accepts the token.
    """

    format: Literal["wisp-predictor"] = "wisp-predictor"
    version: int = 1
    layers: List[LayerWeights]
    feature_mean: List[float]
    feature_scale: List[float]
    threshold: float = Field(default=0.5, ge=0.0, le=1.0)
    train_meta: Dict[str, Any] = Field(default_factory=dict)

    _weights: List[Tuple[np.ndarray, np.ndarray]] = PrivateAttr(default_factory=list)
    _mean: np.ndarray = PrivateAttr(default=None)
    _scale: np.ndarray = PrivateAttr(default=None)

    @model_validator(mode="after")
    def _check_chain(self):
        if not self.layers:
            raise ValueError("at least one layer is required")
        if self.layers[0].n_in != len(self.feature_mean) or len(self.feature_mean) != len(self.feature_scale):
            raise ValueError("input width must match feature_mean and feature_scale")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.n_out != nxt.n_in:
                raise ValueError(f"layer widths do not chain: {prev.n_out} -> {nxt.n_in}")
        if self.layers[-1].n_out != 1:
            raise ValueError("the output layer must have a single unit")
        if any(s <= 0 for s in self.feature_scale):
            raise ValueError("feature_scale entries must be positive")
        return self

    def model_post_init(self, __context: Any) -> None:
        self._weights = [(np.asarray(l.weight, dtype=np.float64), np.asarray(l.bias, dtype=np.float64)) for l in self.layers]
        self._mean = np.asarray(self.feature_mean, dtype=np.float64)
        self._scale = np.asarray(self.feature_scale, dtype=np.float64)

    def predict_proba(self, features) -> np.ndarray:
        h = (np.atleast_2d(np.asarray(features, dtype=np.float64)) - self._mean) / self._scale
        last = len(self._weights) - 1
        for i, (w, b) in enumerate(self._weights):
            h = h @ w.T + b
            if i < last:
                h = np.maximum(h, 0.0)
        # numerically stable sigmoid
        z = h[:, 0]
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out

    def score(self, step: DraftStep) -> float:
        return float(self.predict_proba(step.features.as_tuple())[0])

    def predict_accept(self, step: DraftStep) -> bool:
        return self.score(step) >= self.threshold

    def with_threshold(self, threshold: float) -> "PredictorModel":
        return self.model_copy(update={"threshold": float(threshold)})


@dataclass(frozen=True)
class ConstantPredictor:
    accept: bool

    def predict_accept(self, step: DraftStep) -> bool:
        return self.accept


@dataclass(frozen=True)
class OraclePredictor:
    """Predicts the true verification outcome of each token."""

    def predict_accept(self, step: DraftStep) -> bool:
        return step.accepted


@dataclass(frozen=True)
class FalseAlarmPredictor:
    """Oracle with controlled error rates.

    A truly rejected token is predicted accept with probability ``fpr`` and a truly
    accepted one predicted reject with probability ``fnr``. Both errors reuse the
    token's verification uniform, so for a fixed trace a lower-``fpr`` predictor
    accepts a subset of what a higher-``fpr`` one accepts.
    """

    fpr: float
    fnr: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.fpr <= 1.0 and 0.0 <= self.fnr <= 1.0):
            raise ContractError(f"error rates must lie in [0, 1], got fpr={self.fpr}, fnr={self.fnr}", operation="FalseAlarmPredictor")

    def predict_accept(self, step: DraftStep) -> bool:
        x, u = step.latent_accept_prob, step.verify_uniform
        if u <= x:
            return x <= 0.0 or u / x >= self.fnr
        return (u - x) / (1.0 - x) < self.fpr


class ClassifierReport(BaseModel):
    tn: int
    fp: int
    fn: int
    tp: int
    accuracy: float
    auc: Optional[float] = None
    recall_accepted: float
    specificity: float
    fpr: float
    balanced_accuracy: float
    threshold: Optional[float] = None

    def table_row(self) -> Dict[str, Optional[float]]:
        return {
            "Acc": self.accuracy,
            "AUC": self.auc,
            "Rec1": self.recall_accepted,
            "Spec": self.specificity,
            "FPR": self.fpr,
            "BalAcc": self.balanced_accuracy,
        }


@dataclass(frozen=True)
class DraftPolicyOutcome:
    k_theta: int
    stopped_by_predictor: bool

    def __post_init__(self):
        if self.k_theta < 1:
            raise ContractError(f"policy must draft at least one token, got {self.k_theta}", operation="DraftPolicyOutcome")


@dataclass(frozen=True)
class PolicyTrial:
    """One drafting window replayed through a policy.

    ``stop_index`` is the first true rejection within the ``k_max`` window
    (``k_max + 1`` when every token would be accepted).
    """

    policy: DraftPolicyOutcome
    stop_index: int
    k_max: int
    predicted_accept_at_stop: Optional[bool] = None

    @property
    def accepted_len(self) -> int:
        return min(self.policy.k_theta, self.stop_index - 1)


class PredictorTrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hidden_sizes: List[int] = Field(default_factory=lambda: [32, 16])
    learning_rate: float = Field(default=0.05, gt=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    epochs: int = Field(default=40, ge=1)
    batch_size: int = Field(default=128, ge=1)
    dropout: float = Field(default=0.0, ge=0.0, lt=1.0)
    val_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    fpr_target: float = Field(default=0.45, gt=0.0, le=1.0)
    patience: int = Field(default=5, ge=1)
    balance_classes: bool = False

    @model_validator(mode="after")
    def _check_hidden(self):
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden sizes must be positive")
        return self


def default_tune_grid() -> Dict[str, List[Any]]:
    return {"hidden_sizes": [[16], [32, 16], [64, 32]], "learning_rate": [0.01, 0.05]}


class PredictorSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["off", "mlp", "oracle", "false_alarm", "always_accept", "always_reject"] = "mlp"
    fpr: float = Field(default=0.425, ge=0.0, le=1.0, description="False-alarm rate of the false_alarm mode")
    fnr: float = Field(default=0.0, ge=0.0, le=1.0, description="False-reject rate of the false_alarm mode")
    model_path: Optional[str] = None
    corpus_samples: int = Field(default=17510, ge=10)
    train: PredictorTrainConfig = Field(default_factory=PredictorTrainConfig)
    tune_grid: Dict[str, List[Any]] = Field(default_factory=default_tune_grid)


def corpus_arrays(records: Sequence) -> Tuple[np.ndarray, np.ndarray]:
    X = np.array([r.features for r in records], dtype=np.float64).reshape(-1, 4)
    y = np.array([r.label for r in records], dtype=np.float64)
    return X, y
