"""Additive verification-latency estimator: features, prediction, OLS fitting and diagnostics."""

from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from models.errors import ArtifactIOError, ConfigError, ContractError, FitError
from models.latency import (
    COEFFICIENTS,
    COMPONENTS,
    BatchFeatures,
    CoefficientCI,
    FitReport,
    LatencyConfig,
    LatencyModel,
    RegimeDiagnostics,
    RegimeSummary,
    SplitMetrics,
)
from utils import setup_logger
from utils.helpers import read_json, write_json
from utils.rng import substream

from ..utils import ols

logger = setup_logger("wisp.latency")

PRESETS: Dict[str, Dict] = {
    "appendix-c": {
        "a": 3.314e-5,
        "b_compute": 3.45e-8,
        "b_read": 4.62e-6,
        "c": 1.486e-2,
        "ci": {
            "a": {"lower": 3.12e-5, "upper": 3.49e-5},
            "b_compute": {"lower": 3.35e-8, "upper": 3.67e-8},
            "b_read": {"lower": 3.95e-6, "upper": 5.27e-6},
            "c": {"lower": 1.30e-2, "upper": 1.69e-2},
        },
    },
    # the main text reports no intercept; it is borrowed from appendix-c
    "main-text": {"a": 143.39e-6, "b_compute": 2.53e-9, "b_read": 2.67e-6, "c": 1.486e-2},
    # zero-latency limit: batches complete at dispatch, so t_verify = 0
    "instant": {"a": 0.0, "b_compute": 0.0, "b_read": 0.0, "c": 0.0},
}


def load_preset(name: str) -> LatencyModel:
    if name not in PRESETS:
        raise ConfigError(f"unknown latency preset {name!r}; choose from {sorted(PRESETS)}", field="latency.preset")
    spec = PRESETS[name]
    ci = {k: CoefficientCI(**v) for k, v in spec.get("ci", {}).items()}
    return LatencyModel(a=spec["a"], b_compute=spec["b_compute"], b_read=spec["b_read"], c=spec["c"], preset=name, ci=ci)


def _lengths(request) -> Tuple[int, int]:
    if isinstance(request, tuple):
        return request
    return request.l_new, request.l_cached


def request_features(l_new: int, l_cached: int) -> BatchFeatures:
    if l_new < 1 or l_cached < 0:
        raise ContractError(f"invalid request lengths l_new={l_new}, l_cached={l_cached}", operation="batch_features")
    return BatchFeatures(float(l_new), float((l_cached + l_new) * l_new), float(l_cached))


def batch_features(requests: Iterable) -> BatchFeatures:
    """Sum of per-request features; accepts ``(l_new, l_cached)`` pairs or objects carrying both."""
    n_linear = n_interactions = n_cached = 0
    for request in requests:
        l_new, l_cached = _lengths(request)
        if l_new < 1 or l_cached < 0:
            raise ContractError(f"invalid request lengths l_new={l_new}, l_cached={l_cached}", operation="batch_features")
        n_linear += l_new
        n_interactions += (l_cached + l_new) * l_new
        n_cached += l_cached
    return BatchFeatures(float(n_linear), float(n_interactions), float(n_cached))


def predict_batch_time(model: LatencyModel, f: BatchFeatures) -> float:
    return model.predict(f)


def component_breakdown(model: LatencyModel, f: BatchFeatures) -> Dict[str, float]:
    """Each additive term in seconds, plus its share of the total prediction."""
    terms = {
        "linear": model.a * f.n_linear,
        "interaction": model.b_compute * f.n_interactions,
        "cached_read": model.b_read * f.n_cached,
        "constant": model.c,
    }
    total = sum(terms.values())
    out = dict(terms)
    for name, value in terms.items():
        out[f"{name}_share"] = value / total if total > 0 else 0.0
    return out


def dominant_component(model: LatencyModel, f: BatchFeatures) -> str:
    """Largest workload-dependent term; the constant overhead is not a candidate."""
    terms = component_breakdown(model, f)
    return max(COMPONENTS, key=lambda name: terms[name])


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def _arrays(samples) -> Tuple[np.ndarray, np.ndarray]:
    X = ols.design_matrix([s.features for s in samples])
    y = np.array([s.latency_s for s in samples], dtype=np.float64)
    return X, y


def _to_model(beta: np.ndarray, **meta) -> LatencyModel:
    return LatencyModel(a=float(beta[0]), b_compute=float(beta[1]), b_read=float(beta[2]), c=float(beta[3]), **meta)


def split_metrics(model: LatencyModel, samples) -> SplitMetrics:
    X, y = _arrays(samples)
    beta = np.array([model.a, model.b_compute, model.b_read, model.c])
    y_hat = X @ beta
    err = y - y_hat
    r2 = ols.r_squared(y, y_hat)
    mape_pct, excluded = ols.mape(y, y_hat)
    return SplitMetrics(
        n=len(samples),
        r2=r2,
        adjusted_r2=ols.adjusted_r_squared(r2, len(samples)),
        rmse_s=float(np.sqrt(np.mean(err**2))),
        mae_s=float(np.mean(np.abs(err))),
        mape_pct=mape_pct,
        mape_excluded=excluded,
        max_error_s=float(np.max(np.abs(err))),
    )


def _split(samples, split) -> Tuple[list, list]:
    samples = list(samples)
    if split is None:
        train = [s for s in samples if getattr(s, "split", "train") == "train"]
        test = [s for s in samples if getattr(s, "split", "train") == "test"]
        return train, test
    train_idx, test_idx = split
    return [samples[i] for i in train_idx], [samples[i] for i in test_idx]


def cross_validate(samples: Sequence, folds: int = 5, seed: int = 0) -> List[float]:
    """R2 on each held-out fold of a seeded ``folds``-way partition."""
    samples = list(samples)
    if len(samples) < 2 * folds:
        return []
    order = substream(seed, "bootstrap", 0xCF).permutation(len(samples))
    scores = []
    for fold in np.array_split(order, folds):
        held = set(int(i) for i in fold)
        train = [samples[i] for i in range(len(samples)) if i not in held]
        X, y = _arrays(train)
        try:
            beta = ols.solve(X, y).beta
        except FitError:
            continue
        Xh, yh = _arrays([samples[i] for i in fold])
        scores.append(ols.r_squared(yh, Xh @ beta))
    return scores


def bootstrap_ci(samples: Sequence, n_boot: int = 1000, seed: int = 0) -> Tuple[Dict[str, CoefficientCI], int]:
    """Percentile 95% CIs from resampling ``samples`` with replacement.

    Rank-deficient resamples are redrawn; their count is returned alongside the CIs.
    """
    if n_boot < 100:
        raise ContractError(f"need at least 100 bootstrap iterations, got {n_boot}", operation="bootstrap_ci")
    X, y = _arrays(samples)
    n = len(y)
    betas = np.empty((n_boot, 4))
    redraws = 0
    for b in range(n_boot):
        rng = substream(seed, "bootstrap", b)
        attempt = 0
        while True:
            idx = rng.integers(0, n, size=n)
            try:
                betas[b] = ols.solve(X[idx], y[idx]).beta
                break
            except FitError:
                redraws += 1
                attempt += 1
                if attempt > 100:
                    raise FitError("bootstrap resamples are persistently rank-deficient", columns=ols.DESIGN_COLUMNS)
    lower = np.percentile(betas, 2.5, axis=0)
    upper = np.percentile(betas, 97.5, axis=0)
    sd = betas.std(axis=0, ddof=1)
    ci = {
        name: CoefficientCI(lower=float(lower[j]), upper=float(upper[j]), std_error=float(sd[j]))
        for j, name in enumerate(COEFFICIENTS)
    }
    return ci, redraws


def fit_ols(
    samples: Sequence,
    split: Optional[Tuple[Sequence[int], Sequence[int]]] = None,
    n_boot: int = 0,
    seed: int = 0,
    cv_folds: int = 5,
) -> Tuple[LatencyModel, FitReport]:
    """Fit on the training split only.

    ``split`` is a pair of index lists; when omitted the samples' own ``split`` tags are used.
    """
    train, test = _split(samples, split)
    if len(train) < 5:
        raise FitError(f"need at least 5 training samples, got {len(train)}")
    X, y = _arrays(train)
    solution = ols.solve(X, y)
    model = _to_model(solution.beta, fit_meta={"n_train": float(len(train)), "n_test": float(len(test))})

    cv = cross_validate(train, folds=cv_folds, seed=seed) if cv_folds > 1 else []
    report = FitReport(
        train=split_metrics(model, train),
        test=split_metrics(model, test) if test else None,
        cv_r2=cv,
        cv_r2_mean=float(np.mean(cv)) if cv else None,
        cv_r2_sd=float(np.std(cv, ddof=1)) if len(cv) > 1 else None,
        solver=solution.solver,
        condition_number=solution.condition_number,
    )
    if model.c < 0:
        report.valid = False
        report.warnings.append(f"negative intercept c={model.c!r}; the profile is suspect")
        logger.warning("Fitted intercept is negative; the profile is suspect", extra={"c": model.c})
    if n_boot:
        ci, redraws = bootstrap_ci(train, n_boot=n_boot, seed=seed)
        report.ci = ci
        report.bootstrap_iterations = n_boot
        report.bootstrap_redraws = redraws
        model.ci = ci

    logger.info(
        "Fitted latency model",
        extra={
            "coefficients": model.coefficients(),
            "train_r2": report.train.r2,
            "test_r2": report.test.r2 if report.test else None,
            "solver": solution.solver,
        },
    )
    return model, report


def regime_diagnostics(samples: Sequence, model: LatencyModel) -> RegimeDiagnostics:
    grouped: Dict[str, List[Tuple[float, str]]] = {}
    dominant = []
    for s in samples:
        label = dominant_component(model, s.features)
        dominant.append(label)
        err = abs(s.latency_s - predict_batch_time(model, s.features))
        grouped.setdefault(getattr(s, "regime", "unknown"), []).append((err, label))

    regimes = {}
    for regime, rows in sorted(grouped.items()):
        errs = np.array([e for e, _ in rows])
        counts: Dict[str, int] = {}
        for _, label in rows:
            counts[label] = counts.get(label, 0) + 1
        regimes[regime] = RegimeSummary(
            n=len(rows),
            mean_abs_error_s=float(errs.mean()),
            p95_abs_error_s=float(np.percentile(errs, 95)),
            dominant=counts,
        )
    return RegimeDiagnostics(regimes=regimes, dominant=dominant)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_model(model: LatencyModel, path, report: Optional[FitReport] = None) -> Path:
    payload = {"format": "wisp-latency-model", "version": 1, "model": model.model_dump(mode="json")}
    if report is not None:
        payload["report"] = report.model_dump(mode="json")
    return write_json(path, payload)


def load_model(path) -> LatencyModel:
    payload = read_json(path)
    if not isinstance(payload, dict) or payload.get("format") != "wisp-latency-model":
        raise ArtifactIOError("not a latency model file", path)
    return LatencyModel(**payload["model"])


def resolve_model(config: LatencyConfig) -> LatencyModel:
    """The verifier model a run uses: a fitted file if given, else the preset, then scaled."""
    model = load_model(config.model_path) if config.model_path else load_preset(config.preset)
    return model.scaled(config.scale) if config.scale != 1.0 else model
