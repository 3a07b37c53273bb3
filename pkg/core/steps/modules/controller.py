"""Drafting controller: features, predictor training and evaluation, and the stop policy."""

from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from models.errors import ContractError
from models.predictor import (
    AcceptPredictor,
    ClassifierReport,
    ConstantPredictor,
    DraftPolicyOutcome,
    FalseAlarmPredictor,
    OraclePredictor,
    PolicyTrial,
    PredictorModel,
    PredictorSettings,
    PredictorTrainConfig,
    corpus_arrays,
)
from models.workload import DeviceProfile, DraftStep, WorkloadConfig
from utils import setup_logger

from ..utils.classification import classifier_report, confusion_counts, roc_auc

logger = setup_logger("wisp.predictor")

CONVENTIONS = ("system", "launch")


def extract_features(step: DraftStep) -> np.ndarray:
    """``(confidence, entropy, margin, stddev)``."""
    return np.array(step.features.as_tuple(), dtype=np.float64)


def train_predictor(corpus: Sequence, config: Optional[PredictorTrainConfig] = None, seed: int = 0) -> PredictorModel:
    from .models.predictor import RejectionPredictorModule

    return RejectionPredictorModule(config).train(corpus, seed=seed)


def evaluate_predictor(model: PredictorModel, corpus: Sequence) -> ClassifierReport:
    X, y = corpus_arrays(corpus)
    scores = model.predict_proba(X) if len(y) else np.empty(0)
    counts = confusion_counts(scores >= model.threshold, y)
    return classifier_report(*counts, auc=roc_auc(scores, y), threshold=model.threshold)


def tune_predictor(
    corpus: Sequence,
    grid: Dict[str, List],
    base: Optional[PredictorTrainConfig] = None,
    seed: int = 0,
) -> Tuple[PredictorModel, List[Dict]]:
    """Grid scan ranked by validation balanced accuracy at the FPR-capped threshold."""
    base = base or PredictorTrainConfig()
    keys = sorted(grid)
    combos: List[Dict] = [{}]
    for key in keys:
        combos = [{**c, key: v} for c in combos for v in grid[key]]

    results, best_model, best_score = [], None, -1.0
    for overrides in combos:
        config = PredictorTrainConfig(**{**base.model_dump(), **overrides})
        model = train_predictor(corpus, config, seed)
        score = float(model.train_meta["val_balanced_accuracy"])
        results.append({**overrides, "val_balanced_accuracy": score, "val_fpr": model.train_meta["val_fpr"]})
        if score > best_score:
            best_model, best_score = model, score
    logger.info("Finished predictor grid scan", extra={"candidates": len(combos), "best_val_balanced_accuracy": best_score})
    return best_model, results


# ---------------------------------------------------------------------------
# stop-at-first-predicted-rejection policy
# ---------------------------------------------------------------------------

def draft_until_stop(steps: Iterable[DraftStep], predictor: Optional[AcceptPredictor], k_max: int) -> DraftPolicyOutcome:
    """Draft from ``steps`` until the first predicted rejection (inclusive) or ``k_max``.

    ``predictor=None`` drafts the full fixed window.
    """
    if k_max < 1:
        raise ContractError(f"k_max must be at least 1, got {k_max}", operation="draft_until_stop")
    k = 0
    for step in steps:
        k += 1
        if predictor is not None and not predictor.predict_accept(step):
            return DraftPolicyOutcome(k_theta=k, stopped_by_predictor=True)
        if k >= k_max:
            break
    if k == 0:
        raise ContractError("step source is empty", operation="draft_until_stop")
    return DraftPolicyOutcome(k_theta=k, stopped_by_predictor=False)


def first_rejection(window: Sequence[DraftStep]) -> int:
    """1-based index of the first truly rejected step, ``len(window) + 1`` if none."""
    for i, step in enumerate(window):
        if not step.accepted:
            return i + 1
    return len(window) + 1


def run_policy_trial(window: Sequence[DraftStep], predictor: Optional[AcceptPredictor]) -> PolicyTrial:
    k_max = len(window)
    policy = draft_until_stop(iter(window), predictor, k_max)
    stop = first_rejection(window)
    at_stop = None
    if stop <= k_max:
        at_stop = True if predictor is None else bool(predictor.predict_accept(window[stop - 1]))
    return PolicyTrial(policy=policy, stop_index=stop, k_max=k_max, predicted_accept_at_stop=at_stop)


def trial_waste(trial: PolicyTrial, convention: str = "system") -> int:
    """Wasted tokens of one trial.

    ``system`` counts every drafted token past the accepted prefix, the stopping token
    included. ``launch`` treats a predicted-reject token as never drafted.
    """
    if convention == "system":
        return max(0, trial.policy.k_theta - trial.accepted_len)
    if convention == "launch":
        launched = trial.policy.k_theta - 1 if trial.policy.stopped_by_predictor else trial.policy.k_theta
        return max(0, launched - (trial.stop_index - 1))
    raise ContractError(f"unknown convention {convention!r}", operation="trial_waste")


def empirical_wdt(trials: Sequence[PolicyTrial], tau_d: float = 1.0, convention: str = "system") -> float:
    """Mean wasted drafting time in seconds; ``tau_d=1`` gives mean wasted tokens."""
    if not trials:
        raise ContractError("need at least one trial", operation="empirical_wdt")
    return tau_d * float(np.mean([trial_waste(t, convention) for t in trials]))


def stop_distribution(trials: Sequence[PolicyTrial], k_max: int) -> np.ndarray:
    """Empirical ``Pr(R = r)`` for ``r = 1..k_max``."""
    counts = np.zeros(k_max)
    for t in trials:
        if t.stop_index <= k_max:
            counts[t.stop_index - 1] += 1
    return counts / max(len(trials), 1)


def per_position_fp(trials: Sequence[PolicyTrial], k_max: int) -> np.ndarray:
    """Empirical probability the predictor accepts the first true rejection, given it sits at ``r``."""
    hits = np.zeros(k_max)
    totals = np.zeros(k_max)
    for t in trials:
        if t.stop_index <= k_max:
            totals[t.stop_index - 1] += 1
            hits[t.stop_index - 1] += bool(t.predicted_accept_at_stop)
    return np.divide(hits, totals, out=np.zeros(k_max), where=totals > 0)


def wdt_bound(trials: Sequence[PolicyTrial], k_max: int) -> float:
    """Upper bound on mean launch-convention waste: sum_r (k_max - r + 1) Pr(R=r) FP(r)."""
    r = np.arange(1, k_max + 1)
    return float(np.sum((k_max - r + 1) * stop_distribution(trials, k_max) * per_position_fp(trials, k_max)))


# ---------------------------------------------------------------------------
# predictor resolution
# ---------------------------------------------------------------------------

def build_predictor(
    settings: PredictorSettings,
    seed: int,
    workload: Optional[WorkloadConfig] = None,
    corpus_profile: Optional[DeviceProfile] = None,
) -> Optional[AcceptPredictor]:
    """The predictor a simulation runs with; ``None`` drafts fixed ``k_max`` windows."""
    mode = settings.mode
    if mode == "off":
        return None
    if mode == "always_accept":
        return ConstantPredictor(True)
    if mode == "always_reject":
        return ConstantPredictor(False)
    if mode == "oracle":
        return OraclePredictor()
    if mode == "false_alarm":
        return FalseAlarmPredictor(fpr=settings.fpr, fnr=settings.fnr)

    from .models.predictor import load_predictor
    from .workload import DEFAULT_CONFIG, gen_corpus

    if settings.model_path:
        return load_predictor(settings.model_path)
    profile = corpus_profile or DeviceProfile(draft_speed_s_d=50.0)
    corpus = gen_corpus(profile, settings.corpus_samples, workload or DEFAULT_CONFIG, seed=seed)
    return train_predictor(corpus, settings.train, seed=seed)
