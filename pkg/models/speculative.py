from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .errors import ContractError

NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True)
class TokenDist:
    """A next-token distribution over a small integer vocabulary."""

    probs: Tuple[float, ...]
    _array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        if len(probs) < 2:
            raise ContractError(f"vocabulary size must be at least 2, got {len(probs)}", operation="TokenDist")
        array = np.asarray(probs, dtype=np.float64)
        if np.any(array < 0.0) or not np.all(np.isfinite(array)):
            raise ContractError("probabilities must be finite and nonnegative", operation="TokenDist")
        if abs(float(array.sum()) - 1.0) > NORMALIZATION_TOL:
            raise ContractError(f"probabilities sum to {array.sum()!r}, expected 1", operation="TokenDist")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_array", array)

    @classmethod
    def from_weights(cls, weights) -> "TokenDist":
        w = np.asarray(weights, dtype=np.float64)
        return cls(tuple(w / w.sum()))

    @property
    def vocab_size(self) -> int:
        return len(self.probs)

    @property
    def array(self) -> np.ndarray:
        return self._array


@dataclass(frozen=True)
class VerificationOutcome:
    """Result of verifying one draft block of ``k`` tokens."""

    k: int
    stop_index_R: int
    accepted_len_L: int
    extra_token: int
    wasted_W: int

    def __post_init__(self):
        if self.k < 1:
            raise ContractError(f"draft block must hold at least one token, got k={self.k}", operation="VerificationOutcome")
        if not 1 <= self.stop_index_R <= self.k + 1:
            raise ContractError(f"stop index {self.stop_index_R} outside [1, {self.k + 1}]", operation="VerificationOutcome")
        if self.accepted_len_L != self.stop_index_R - 1:
            raise ContractError("accepted length must equal stop index - 1", operation="VerificationOutcome")
        if self.wasted_W != max(0, self.k - self.accepted_len_L):
            raise ContractError("wasted count must equal max(0, K - L)", operation="VerificationOutcome")

    @property
    def all_accepted(self) -> bool:
        return self.stop_index_R == self.k + 1


@dataclass(frozen=True)
class DraftTimeBreakdown:
    total_s: float
    useful_s: float
    wdt_s: float
    per_token_tau_d: float
