"""Synthetic speculative-serving workloads.

Acceptance probability is the hidden cause: each drafted token gets a latent
acceptance probability drawn around a center set by the device's ``alpha_base``
and the current context difficulty, and its logit statistics are noisy monotone
transforms of that latent value.
"""

from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from models.errors import ArtifactIOError, ContractError
from models.latency import BatchFeatures, LatencyModel
from models.simulation import DeviceFleetConfig
from models.workload import (
    CorpusRecord,
    DeviceProfile,
    DraftFeatures,
    DraftStep,
    ProfileDataset,
    ProfileSample,
    SessionIteration,
    SessionTrace,
    WorkloadConfig,
)
from utils import setup_logger
from utils.helpers import read_rows, write_rows
from utils.rng import substream

from .latency import batch_features, predict_batch_time
from .speculative import commit_count, verify_latent_block

logger = setup_logger("wisp.workload")

DEFAULT_CONFIG = WorkloadConfig()

CORPUS_COLUMNS = (
    "session_id",
    "iteration",
    "position",
    "confidence",
    "entropy",
    "margin",
    "stddev",
    "latent_accept_prob",
    "label",
)
PROFILE_COLUMNS = ("regime", "category", "split", "requests", "n_linear", "n_interactions", "n_cached", "latency_s")

# (intercept, slope) of each feature as a function of the latent acceptance probability;
# entropy is expressed in units of ln(V)
_CONFIDENCE = (0.20, 0.75)
_MARGIN = (0.05, 0.80)
_ENTROPY = (0.90, -0.80)
_STDDEV = (1.50, -1.20)


# ---------------------------------------------------------------------------
# latent acceptance and features
# ---------------------------------------------------------------------------

def acceptance_center(alpha_base: float, difficulty, config: WorkloadConfig = DEFAULT_CONFIG):
    d = np.clip(np.asarray(difficulty, dtype=np.float64), 0.0, 1.0)
    return np.clip(alpha_base + config.easy_boost * (1.0 - 2.0 * d), 0.0, 1.0)


def _latent(centers: np.ndarray, config: WorkloadConfig, rng: np.random.Generator) -> np.ndarray:
    if config.latent_concentration is None:
        return centers
    kappa = config.latent_concentration
    inner = np.clip(centers, 1e-6, 1.0 - 1e-6)
    draws = rng.beta(inner * kappa, (1.0 - inner) * kappa)
    return np.where(centers <= 0.0, 0.0, np.where(centers >= 1.0, 1.0, draws))


def feature_transform(latent, vocab_size: int) -> np.ndarray:
    """Noise-free (confidence, entropy, margin, stddev) for each latent value, shape ``(n, 4)``."""
    x = np.atleast_1d(np.asarray(latent, dtype=np.float64))
    log_v = np.log(vocab_size)
    return np.stack(
        [
            _CONFIDENCE[0] + _CONFIDENCE[1] * x,
            log_v * (_ENTROPY[0] + _ENTROPY[1] * x),
            _MARGIN[0] + _MARGIN[1] * x,
            _STDDEV[0] + _STDDEV[1] * x,
        ],
        axis=1,
    )


def _noisy_features(latent: np.ndarray, config: WorkloadConfig, rng: np.random.Generator) -> np.ndarray:
    log_v = np.log(config.vocab_size)
    clean = feature_transform(latent, config.vocab_size)
    scale = config.feature_noise_sd * np.array(
        [abs(_CONFIDENCE[1]), log_v * abs(_ENTROPY[1]), abs(_MARGIN[1]), abs(_STDDEV[1])]
    )
    noisy = clean + rng.standard_normal(clean.shape) * scale
    noisy[:, 0] = np.clip(noisy[:, 0], 0.0, 1.0)
    noisy[:, 1] = np.clip(noisy[:, 1], 0.0, log_v)
    noisy[:, 2] = np.clip(noisy[:, 2], 0.0, 1.0)
    noisy[:, 3] = np.clip(noisy[:, 3], 0.0, None)
    return noisy


def gen_draft_window(
    profile: DeviceProfile,
    difficulty,
    k: int,
    rng: np.random.Generator,
    config: WorkloadConfig = DEFAULT_CONFIG,
) -> List[DraftStep]:
    """``k`` consecutive draft steps; ``difficulty`` is a scalar or one value per position."""
    if k < 1:
        raise ContractError(f"window length must be at least 1, got {k}", operation="gen_draft_window")
    centers = np.broadcast_to(acceptance_center(profile.alpha_base, difficulty, config), (k,)).astype(np.float64)
    latent = _latent(centers, config, rng)
    feats = _noisy_features(latent, config, rng)
    tokens = rng.integers(config.vocab_size, size=k)
    uniforms = rng.random(k)
    return [
        DraftStep(
            latent_accept_prob=float(latent[i]),
            features=DraftFeatures(*(float(v) for v in feats[i])),
            token=int(tokens[i]),
            verify_uniform=float(uniforms[i]),
        )
        for i in range(k)
    ]


def gen_draft_step(
    profile: DeviceProfile,
    context_difficulty: float,
    rng: np.random.Generator,
    config: WorkloadConfig = DEFAULT_CONFIG,
) -> DraftStep:
    return gen_draft_window(profile, context_difficulty, 1, rng, config)[0]


# ---------------------------------------------------------------------------
# difficulty process and sessions
# ---------------------------------------------------------------------------

def initial_difficulty(config: WorkloadConfig, rng: np.random.Generator) -> float:
    stationary_sd = config.difficulty_sd / np.sqrt(1.0 - config.difficulty_ar**2)
    return float(np.clip(config.difficulty_mean + stationary_sd * rng.standard_normal(), 0.0, 1.0))


def next_difficulty(previous: float, config: WorkloadConfig, rng: np.random.Generator) -> float:
    step = config.difficulty_mean + config.difficulty_ar * (previous - config.difficulty_mean)
    return float(np.clip(step + config.difficulty_sd * rng.standard_normal(), 0.0, 1.0))


def difficulty_path(
    n: int, config: WorkloadConfig, rng: np.random.Generator, start: Optional[float] = None
) -> np.ndarray:
    """AR(1) difficulty around ``difficulty_mean``, clipped to [0, 1]."""
    path = np.empty(n, dtype=np.float64)
    if n == 0:
        return path
    path[0] = initial_difficulty(config, rng) if start is None else float(np.clip(start, 0.0, 1.0))
    for t in range(1, n):
        path[t] = next_difficulty(path[t - 1], config, rng)
    return path


def draw_lengths(config: WorkloadConfig, rng: np.random.Generator) -> Tuple[int, int]:
    prompt = int(rng.integers(config.prompt_len_range[0], config.prompt_len_range[1] + 1))
    response = int(rng.integers(config.response_len_range[0], config.response_len_range[1] + 1))
    return prompt, response


def gen_session(
    profile: DeviceProfile,
    rng: np.random.Generator,
    config: WorkloadConfig = DEFAULT_CONFIG,
    response_len: Optional[int] = None,
    prompt_len: Optional[int] = None,
) -> SessionTrace:
    """A full speculate-verify session with a fixed ``k_max`` window per iteration."""
    prompt, response = draw_lengths(config, rng)
    prompt = prompt if prompt_len is None else prompt_len
    response = response if response_len is None else response_len
    if prompt < 1 or response < 1:
        raise ContractError(f"lengths must be positive, got prompt={prompt}, response={response}", operation="gen_session")

    difficulty = initial_difficulty(config, rng)
    committed = 0
    iterations = []
    while committed < response:
        if iterations:
            difficulty = next_difficulty(difficulty, config, rng)
        steps = gen_draft_window(profile, difficulty, profile.k_max, rng, config)
        outcome = verify_latent_block(
            [s.latent_accept_prob for s in steps], [s.verify_uniform for s in steps], config.vocab_size, rng
        )
        n = commit_count(outcome, response - committed)
        committed += n
        iterations.append(SessionIteration(difficulty=difficulty, steps=tuple(steps), outcome=outcome, committed=n))
    return SessionTrace(prompt_len=prompt, response_len=response, iterations=tuple(iterations))


# ---------------------------------------------------------------------------
# predictor corpus
# ---------------------------------------------------------------------------

def corpus_records(session_id: int, trace: SessionTrace) -> List[CorpusRecord]:
    """Labeled positions of a trace: the accepted prefix and the first rejection of each window."""
    records = []
    for it_idx, iteration in enumerate(trace.iterations):
        last = min(iteration.outcome.stop_index_R, iteration.outcome.k)
        for pos in range(1, last + 1):
            step = iteration.steps[pos - 1]
            f = step.features
            records.append(
                CorpusRecord(
                    session_id=session_id,
                    iteration=it_idx,
                    position=pos,
                    confidence=f.confidence,
                    entropy=f.entropy,
                    margin=f.margin,
                    stddev=f.stddev,
                    latent_accept_prob=step.latent_accept_prob,
                    label=int(pos < iteration.outcome.stop_index_R),
                )
            )
    return records


def gen_corpus(
    profile: DeviceProfile,
    n_samples: int,
    config: WorkloadConfig = DEFAULT_CONFIG,
    seed: int = 0,
) -> List[CorpusRecord]:
    if n_samples < 1:
        raise ContractError(f"corpus size must be positive, got {n_samples}", operation="gen_corpus")
    records: List[CorpusRecord] = []
    session_id = 0
    while len(records) < n_samples:
        trace = gen_session(profile, substream(seed, "workload", session_id), config)
        records.extend(corpus_records(session_id, trace))
        session_id += 1
    records = records[:n_samples]
    accepted = sum(r.label for r in records) / len(records)
    logger.info(
        "Generated predictor corpus",
        extra={"samples": len(records), "sessions": session_id, "accepted_fraction": round(accepted, 4)},
    )
    return records


def write_corpus(path, records: Iterable[CorpusRecord], command: Optional[str] = None) -> Path:
    rows = (
        (
            r.session_id,
            r.iteration,
            r.position,
            r.confidence,
            r.entropy,
            r.margin,
            r.stddev,
            r.latent_accept_prob,
            r.label,
        )
        for r in records
    )
    return write_rows(path, CORPUS_COLUMNS, rows, command=command)


def read_corpus(path) -> List[CorpusRecord]:
    columns, rows = read_rows(path)
    missing = [c for c in CORPUS_COLUMNS if c not in columns]
    if missing:
        raise ArtifactIOError(f"corpus is missing columns {missing}", path)
    try:
        return [
            CorpusRecord(
                session_id=int(row["session_id"]),
                iteration=int(row["iteration"]),
                position=int(row["position"]),
                confidence=float(row["confidence"]),
                entropy=float(row["entropy"]),
                margin=float(row["margin"]),
                stddev=float(row["stddev"]),
                latent_accept_prob=float(row["latent_accept_prob"]),
                label=int(row["label"]),
            )
            for row in rows
        ]
    except ValueError as e:
        raise ArtifactIOError(f"malformed corpus record: {e}", path)


# ---------------------------------------------------------------------------
# device fleets
# ---------------------------------------------------------------------------

def assign_classes(n: int, class_mix: Sequence[float]) -> List[int]:
    """Interleaved class assignment proportional to ``class_mix``; prefixes are stable in ``n``."""
    weights = np.asarray(class_mix, dtype=np.float64)
    weights = weights / weights.sum()
    counts = np.zeros(len(weights))
    assigned = []
    for i in range(n):
        deficit = weights * (i + 1) - counts
        c = int(np.argmax(deficit))
        counts[c] += 1
        assigned.append(c)
    return assigned


def gen_device_profiles(n: int, fleet: DeviceFleetConfig, seed: int) -> List[DeviceProfile]:
    """Heterogeneous devices; device ``i`` draws only from its own keyed stream."""
    classes = assign_classes(n, fleet.class_mix)
    profiles = []
    for i in range(n):
        rng = substream(seed, "fleet", i)
        slo = fleet.slo_classes[classes[i]]
        profiles.append(
            DeviceProfile(
                device_id=i,
                draft_speed_s_d=float(rng.uniform(*fleet.draft_speed_range)),
                network_rtt=float(rng.uniform(*fleet.rtt_range)),
                slo_class=slo.name,
                slo_speed=slo.speed,
                alpha_base=float(rng.uniform(*fleet.alpha_range)),
                k_max=fleet.k_max,
            )
        )
    return profiles


# ---------------------------------------------------------------------------
# latency profiling dataset
# ---------------------------------------------------------------------------

MEMORY_NEW = (1, 5, 10, 20, 50, 100)
MEMORY_TOTAL = (500, 1000, 1500, 2000)
COMPUTE_PATTERNS = ("single", "split-2", "split-4", "varied")

TRAIN_MIX = (("compute_det", 25), ("memory_det", 48), ("compute_rand", 15), ("memory_rand", 15), ("mixed", 20))
TEST_MIX = (("compute_rand", 15), ("memory_rand", 15), ("mixed", 20))

REGIME_OF = {
    "compute_det": "compute_bound",
    "compute_rand": "compute_bound",
    "memory_det": "memory_bound",
    "memory_rand": "memory_bound",
    "mixed": "mixed",
}


def _split_total(total: int, pattern: str) -> List[Tuple[int, int]]:
    if pattern == "single":
        parts = [total]
    elif pattern == "split-2":
        parts = [total // 2, total - total // 2]
    elif pattern == "split-4":
        q = total // 4
        parts = [q, q, q, total - 3 * q]
    else:
        first, second = int(total * 0.5), int(total * 0.3)
        parts = [first, second, total - first - second]
    return [(p, 0) for p in parts]


def _compute_det(count: int) -> List[Tuple[Tuple[int, int], ...]]:
    totals = np.linspace(1200, 2000, count) if count > 1 else np.array([1600.0])
    return [tuple(_split_total(int(round(t)), COMPUTE_PATTERNS[i % 4])) for i, t in enumerate(totals)]


def _memory_det(count: int) -> List[Tuple[Tuple[int, int], ...]]:
    grid = [
        ((l_new, l_total - l_new),) * batch
        for batch in (1, 8)
        for l_total in MEMORY_TOTAL
        for l_new in MEMORY_NEW
    ]
    if count >= len(grid):
        return [grid[i % len(grid)] for i in range(count)]
    idx = np.round(np.linspace(0, len(grid) - 1, count)).astype(int)
    return [grid[i] for i in idx]


def _compute_rand(count: int, rng: np.random.Generator):
    configs = []
    for _ in range(count):
        n = int(rng.integers(1, 3))
        configs.append(tuple((int(rng.integers(1200, 2001)), 0) for _ in range(n)))
    return configs


def _memory_rand(count: int, rng: np.random.Generator):
    configs = []
    for _ in range(count):
        n = int(rng.integers(1, 17))
        reqs = []
        for _ in range(n):
            l_new = int(rng.choice(MEMORY_NEW))
            l_total = int(rng.choice(MEMORY_TOTAL))
            reqs.append((l_new, l_total - l_new))
        configs.append(tuple(reqs))
    return configs


def _mixed(count: int, rng: np.random.Generator):
    configs = []
    for _ in range(count):
        reqs = [(int(rng.integers(200, 1201)), 0)]
        for _ in range(int(rng.integers(2, 9))):
            l_new = int(rng.integers(1, 21))
            reqs.append((l_new, int(rng.integers(500, 2001)) - l_new))
        configs.append(tuple(reqs))
    return configs


def _allocate(total: int, mix) -> List[Tuple[str, int]]:
    """Largest-remainder allocation of ``total`` configs across ``mix`` proportions."""
    weights = np.array([w for _, w in mix], dtype=np.float64)
    raw = total * weights / weights.sum()
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts), kind="stable")[: total - counts.sum()]:
        counts[i] += 1
    return [(name, int(c)) for (name, _), c in zip(mix, counts)]


def _category_configs(category: str, count: int, rng: np.random.Generator):
    if category == "compute_det":
        return _compute_det(count)
    if category == "memory_det":
        return _memory_det(count)
    if category == "compute_rand":
        return _compute_rand(count, rng)
    if category == "memory_rand":
        return _memory_rand(count, rng)
    return _mixed(count, rng)


def gen_latency_profile_dataset(
    model: LatencyModel,
    n_configs: int = 173,
    noise_sd: float = 0.004,
    rng: Optional[np.random.Generator] = None,
) -> ProfileDataset:
    """Synthetic profiling data over the compute-bound, memory-bound and mixed taxonomy.

    Training configurations cover all five categories; test configurations are drawn
    only from the randomized categories, after the training draws.
    """
    if n_configs < 10:
        raise ContractError(f"need at least 10 configurations, got {n_configs}", operation="gen_latency_profile_dataset")
    if noise_sd < 0:
        raise ContractError(f"noise_sd must be nonnegative, got {noise_sd}", operation="gen_latency_profile_dataset")
    rng = rng if rng is not None else substream(0, "profile")

    n_train = int(round(n_configs * 123 / 173))
    plan = [("train", _allocate(n_train, TRAIN_MIX)), ("test", _allocate(n_configs - n_train, TEST_MIX))]

    samples = []
    for split, allocation in plan:
        for category, count in allocation:
            for requests in _category_configs(category, count, rng):
                features = batch_features(requests)
                latency = predict_batch_time(model, features)
                if noise_sd > 0:
                    latency += noise_sd * rng.standard_normal()
                samples.append(
                    ProfileSample(
                        regime=REGIME_OF[category],
                        category=category,
                        split=split,
                        requests=tuple(requests),
                        features=features,
                        latency_s=float(latency),
                    )
                )
    return ProfileDataset(samples=samples)


def _format_requests(requests) -> str:
    return ";".join(f"{l_new}:{l_cached}" for l_new, l_cached in requests)


def _parse_requests(text: str) -> Tuple[Tuple[int, int], ...]:
    if not text:
        return ()
    pairs = []
    for chunk in text.split(";"):
        l_new, l_cached = chunk.split(":")
        pairs.append((int(l_new), int(l_cached)))
    return tuple(pairs)


def write_profile_dataset(path, dataset: ProfileDataset, command: Optional[str] = None) -> Path:
    rows = (
        (
            s.regime,
            s.category,
            s.split,
            _format_requests(s.requests),
            s.features.n_linear,
            s.features.n_interactions,
            s.features.n_cached,
            s.latency_s,
        )
        for s in dataset.samples
    )
    return write_rows(path, PROFILE_COLUMNS, rows, command=command)


def read_profile_dataset(path) -> ProfileDataset:
    """Read a profile dataset; features are recomputed from the per-request lengths when present."""
    columns, rows = read_rows(path)
    if "latency_s" not in columns:
        raise ArtifactIOError("profile dataset is missing the latency_s column", path)
    samples = []
    try:
        for row in rows:
            requests = _parse_requests(row.get("requests", ""))
            if requests:
                features = batch_features(requests)
            else:
                features = BatchFeatures(
                    float(row["n_linear"]), float(row["n_interactions"]), float(row["n_cached"])
                )
            samples.append(
                ProfileSample(
                    regime=row.get("regime") or "unknown",
                    category=row.get("category") or "unknown",
                    split=row.get("split") or "train",
                    requests=requests,
                    features=features,
                    latency_s=float(row["latency_s"]),
                )
            )
    except (KeyError, ValueError) as e:
        raise ArtifactIOError(f"malformed profile record: {e}", path)
    return ProfileDataset(samples=samples)
