"""Logit shaping and the sampling parameter set.

Order of operations for one draw: temperature, repetition penalty,
classifier-free guidance, admissibility mask, softmax, top-k, then
nucleus truncation.  All math runs in float64; -inf marks an excluded
id throughout.
"""

from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class SamplingParams:
    top_k: int = 50
    top_p: float = 0.93
    temperature: float = 1.0
    repetition_penalty: float = 1.1
    cfg_scale: float = 1.5
    max_new_tokens: int = 3000
    seed: int | None = None

    def __post_init__(self):
        if self.top_k < 0:
            raise ValueError("top_k must be >= 0 (0 disables it)")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.repetition_penalty <= 0:
            raise ValueError("repetition_penalty must be positive")
        if self.max_new_tokens <= 0:
            raise ValueError("max_new_tokens must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


def apply_temperature(logits: np.ndarray, temperature: float) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64).copy()
    if temperature != 1.0:
        logits /= temperature
    return logits


def apply_repetition_penalty(logits: np.ndarray, counts: dict, penalty: float) -> np.ndarray:
    """Discount ids already emitted: positive logits divide by the
    penalty, non-positive ones multiply, so both move down for
    penalty > 1.  Applied once per id regardless of count."""
    logits = np.asarray(logits, dtype=np.float64).copy()
    if penalty == 1.0 or not counts:
        return logits
    seen = np.fromiter(
        (tok for tok in counts if 0 <= tok < logits.shape[0]), dtype=np.int64
    )
    if seen.size == 0:
        return logits
    values = logits[seen]
    logits[seen] = np.where(values > 0, values / penalty, values * penalty)
    return logits


def cfg_combine(cond: np.ndarray, uncond: np.ndarray, scale: float) -> np.ndarray:
    """uncond + scale * (cond - uncond), with -inf exclusions honored.

    scale 1 returns the conditional logits exactly.  An id excluded on
    the conditional side stays excluded; one excluded only on the
    unconditional side falls back to its conditional logit.
    """
    cond = np.asarray(cond, dtype=np.float64)
    uncond = np.asarray(uncond, dtype=np.float64)
    if cond.shape != uncond.shape:
        raise ValueError("guidance logit shapes differ")
    if scale == 1.0:
        return cond.copy()
    with np.errstate(invalid="ignore"):
        out = uncond + scale * (cond - uncond)
    cond_dead = np.isneginf(cond)
    uncond_dead = np.isneginf(uncond) & ~cond_dead
    out[cond_dead] = -np.inf
    out[uncond_dead] = cond[uncond_dead]
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    finite = np.isfinite(logits)
    if not finite.any():
        raise ValueError("softmax over fully excluded logits")
    shifted = logits - logits[finite].max()
    with np.errstate(over="ignore"):
        weights = np.exp(shifted)
    weights[~finite] = 0.0
    return weights / weights.sum()


def filter_top_k_top_p(probs: np.ndarray, top_k: int, top_p: float) -> np.ndarray:
    """Zero everything outside the top-k ids and the smallest nucleus
    whose mass reaches top_p, then renormalize.

    Ordering is by descending probability with ascending id breaking
    ties; at least one id always survives.
    """
    probs = np.asarray(probs, dtype=np.float64)
    total = probs.sum()
    if total <= 0:
        raise ValueError("no probability mass to filter")
    order = np.argsort(-probs, kind="stable")
    if top_k > 0:
        order = order[:top_k]
    if top_p < 1.0:
        kept = probs[order]
        cum = np.cumsum(kept / kept.sum())
        cut = int(np.searchsorted(cum, top_p, side="left"))
        order = order[: cut + 1]
    out = np.zeros_like(probs)
    out[order] = probs[order]
    return out / out.sum()
