"""Speculative verification semantics and wasted-drafting-time accounting."""

from typing import Sequence

import numpy as np

from models.errors import ContractError, InvalidDraftError
from models.speculative import DraftTimeBreakdown, TokenDist, VerificationOutcome


def _check_token(dist: TokenDist, token: int, operation: str):
    if not 0 <= int(token) < dist.vocab_size:
        raise ContractError(f"token {token} outside vocabulary of size {dist.vocab_size}", operation=operation)


def _sample(probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, len(probs) - 1)


def acceptance_prob(p: TokenDist, q: TokenDist, token: int) -> float:
    if p.vocab_size != q.vocab_size:
        raise ContractError("target and draft distributions differ in vocabulary size", operation="acceptance_prob")
    _check_token(q, token, "acceptance_prob")
    q_t = q.array[token]
    if q_t <= 0.0:
        raise InvalidDraftError(f"draft token {token} has zero draft probability", token=int(token))
    return min(1.0, float(p.array[token] / q_t))


def residual_distribution(p: TokenDist, q: TokenDist) -> np.ndarray:
    """Normalized positive part of ``p - q``; falls back to ``p`` when it has no mass."""
    diff = np.clip(p.array - q.array, 0.0, None)
    total = diff.sum()
    if total <= 0.0:
        return p.array
    return diff / total


def verify_block(
    draft_tokens: Sequence[int],
    q_dists: Sequence[TokenDist],
    p_dists: Sequence[TokenDist],
    rng: np.random.Generator,
) -> VerificationOutcome:
    k = len(draft_tokens)
    if k < 1:
        raise ContractError("draft block is empty", operation="verify_block")
    if len(q_dists) != k:
        raise ContractError(f"{len(q_dists)} draft distributions for {k} tokens", operation="verify_block")
    if len(p_dists) != k + 1:
        raise ContractError(
            f"{len(p_dists)} target distributions for {k} tokens, expected {k + 1}", operation="verify_block"
        )
    for dist in list(q_dists) + list(p_dists):
        if not isinstance(dist, TokenDist):
            raise ContractError("distributions must be TokenDist instances", operation="verify_block")

    stop = k + 1
    for i, token in enumerate(draft_tokens):
        a_i = acceptance_prob(p_dists[i], q_dists[i], token)
        if rng.random() > a_i:
            stop = i + 1
            break

    if stop <= k:
        extra = _sample(residual_distribution(p_dists[stop - 1], q_dists[stop - 1]), rng)
    else:
        extra = _sample(p_dists[k].array, rng)

    accepted = stop - 1
    return VerificationOutcome(
        k=k,
        stop_index_R=stop,
        accepted_len_L=accepted,
        extra_token=extra,
        wasted_W=wasted_tokens(k, accepted),
    )


def verify_latent_block(
    latent_probs: Sequence[float],
    uniforms: Sequence[float],
    vocab_size: int,
    rng: np.random.Generator,
) -> VerificationOutcome:
    """Verification when each drafted token carries only its acceptance probability.

    Token ``i`` is accepted iff ``uniforms[i] <= latent_probs[i]``; the extra token is a
    uniform synthetic id.
    """
    k = len(latent_probs)
    if k < 1:
        raise ContractError("draft block is empty", operation="verify_latent_block")
    if len(uniforms) != k:
        raise ContractError(f"{len(uniforms)} uniforms for {k} tokens", operation="verify_latent_block")
    if vocab_size < 2:
        raise ContractError(f"vocabulary size must be at least 2, got {vocab_size}", operation="verify_latent_block")

    rejected = np.flatnonzero(np.asarray(uniforms, dtype=np.float64) > np.asarray(latent_probs, dtype=np.float64))
    stop = int(rejected[0]) + 1 if rejected.size else k + 1
    accepted = stop - 1
    return VerificationOutcome(
        k=k,
        stop_index_R=stop,
        accepted_len_L=accepted,
        extra_token=int(rng.integers(vocab_size)),
        wasted_W=k - accepted,
    )


def wasted_tokens(k: int, accepted: int) -> int:
    if k < 0 or accepted < 0:
        raise ContractError(f"negative token counts K={k}, L={accepted}", operation="wasted_tokens")
    if accepted > k:
        raise ContractError(f"accepted length {accepted} exceeds drafted length {k}", operation="wasted_tokens")
    return max(0, k - accepted)


def commit_count(outcome: VerificationOutcome, remaining: int) -> int:
    """Output tokens committed by one iteration: the accepted prefix plus the extra token."""
    if remaining < 1:
        raise ContractError(f"nothing left to commit (remaining={remaining})", operation="commit_count")
    return min(outcome.accepted_len_L + 1, remaining)


def draft_breakdown(k: int, accepted: int, tau_d: float) -> DraftTimeBreakdown:
    wasted = wasted_tokens(k, accepted)
    if not tau_d > 0.0:
        raise ContractError(f"per-token draft time must be positive, got {tau_d}", operation="draft_breakdown")
    useful = tau_d * accepted
    wdt = tau_d * wasted
    return DraftTimeBreakdown(total_s=tau_d * k, useful_s=useful, wdt_s=wdt, per_token_tau_d=tau_d)


def achieved_speed(n_verified: float, t_draft: float, t_network: float, t_queue: float, t_verify: float) -> float:
    times = (t_draft, t_network, t_queue, t_verify)
    if n_verified < 0 or any(t < 0.0 for t in times):
        raise ContractError(f"negative inputs n={n_verified}, times={times}", operation="achieved_speed")
    total = t_draft + t_network + t_queue + t_verify
    if total <= 0.0:
        raise ContractError("total iteration time is zero", operation="achieved_speed")
    return n_verified / total


def server_budget(alpha: float, n_draft: float, s_c: float, t_draft: float, t_network: float) -> float:
    """Verification-side time budget; negative when the request is already infeasible."""
    if not s_c > 0.0:
        raise ContractError(f"SLO speed must be positive, got {s_c}", operation="server_budget")
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"acceptance rate {alpha} outside [0, 1]", operation="server_budget")
    if n_draft < 0:
        raise ContractError(f"negative draft length {n_draft}", operation="server_budget")
    return (alpha * n_draft) / s_c - t_draft - t_network
