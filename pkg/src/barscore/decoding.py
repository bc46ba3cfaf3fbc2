"""Autoregressive decoding of song documents.

The decoder owns the document frame: markers and text regions are
forced, and the model only ever fills score regions pair by pair.  The
vocal side of a step may end the region; the accompaniment side may
not.  A second unconditional context (same prompt minus tags and
lyrics) drives classifier-free guidance.
"""

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .chain_of_score import (
    CosDocument,
    Marker,
    Segment,
    preamble_ids,
    section_header_ids,
)
from .dualstream import DualSequence
from .patching import NUM_RESERVED, PAD_ID, PatchVocabulary
from .sampling import (
    SamplingParams,
    apply_repetition_penalty,
    apply_temperature,
    cfg_combine,
    filter_top_k_top_p,
    softmax,
)


class NextPairModel(Protocol):
    """Anything that scores the next token given a full left context."""

    vocab_size: int

    def next_logits(self, context) -> np.ndarray: ...


class DecodeError(Exception):
    pass


@dataclass
class DecodeState:
    context: list[int] = field(default_factory=list)
    uncond_context: list[int] | None = None
    phase: str = "text"        # "text" between regions, "audio" inside one
    pairs_emitted: int = 0
    budget_left: int = 0
    counts: dict = field(default_factory=dict)
    rng: np.random.Generator | None = None

    def push(self, token: int, charge_budget: bool = True, count: bool = True) -> None:
        self.context.append(token)
        if self.uncond_context is not None:
            self.uncond_context.append(token)
        if count:
            self.counts[token] = self.counts.get(token, 0) + 1
        if charge_budget:
            self.budget_left -= 1


def audio_scope_mask(vocab_size: int, allow_eoa: bool) -> np.ndarray:
    """Admissible ids inside a score region: content, PAD, optionally EOA."""
    mask = np.zeros(vocab_size, dtype=bool)
    mask[NUM_RESERVED:] = True
    mask[PAD_ID] = True
    if allow_eoa:
        mask[int(Marker.EOA)] = True
    return mask


def _sample_masked(
    model: NextPairModel,
    state: DecodeState,
    params: SamplingParams,
    mask: np.ndarray,
    mode: str,
) -> int:
    def shaped(context) -> np.ndarray:
        logits = model.next_logits(context)
        logits = apply_temperature(logits, params.temperature)
        return apply_repetition_penalty(logits, state.counts, params.repetition_penalty)

    logits = shaped(state.context)
    if params.cfg_scale != 1.0 and state.uncond_context is not None:
        logits = cfg_combine(logits, shaped(state.uncond_context), params.cfg_scale)
    logits = logits.copy()
    logits[~mask] = -np.inf
    if not np.isfinite(logits).any():
        raise DecodeError("no admissible token")
    probs = filter_top_k_top_p(softmax(logits), params.top_k, params.top_p)
    if mode == "greedy":
        return int(np.argmax(probs))
    draw = state.rng.random()
    cum = np.cumsum(probs)
    return int(min(np.searchsorted(cum, draw, side="right"), probs.shape[0] - 1))


def next_pair(
    model: NextPairModel,
    state: DecodeState,
    params: SamplingParams,
    mode: str = "sample",
) -> tuple[int, int | None]:
    """Advance one step inside a score region.

    Returns (vocal, accomp); an accomp of None means the vocal side
    closed the region and the state is back in the text phase.
    """
    if state.phase != "audio":
        raise DecodeError("next_pair outside a score region")
    mask_v = audio_scope_mask(model.vocab_size, allow_eoa=True)
    vocal = _sample_masked(model, state, params, mask_v, mode)
    state.push(vocal)
    if vocal == int(Marker.EOA):
        state.phase = "text"
        return vocal, None
    mask_a = audio_scope_mask(model.vocab_size, allow_eoa=False)
    accomp = _sample_masked(model, state, params, mask_a, mode)
    state.push(accomp)
    state.pairs_emitted += 1
    return vocal, accomp


@dataclass
class GenerationResult:
    document: CosDocument
    stream: list[int]
    info: dict


def generate(
    model: NextPairModel,
    document: CosDocument,
    params: SamplingParams,
    vocabulary: PatchVocabulary,
    mode: str = "sample",
) -> GenerationResult:
    """Fill every score region of a prompt document.

    The prompt supplies instruct, tags, lyrics, section labels and
    section lyrics (and optionally a reference stream); generation
    produces the music.  max_new_tokens caps sampled tokens across the
    whole document; a region still open at the cap is closed with a
    forced, uncharged EOA.
    """
    if mode not in ("sample", "greedy"):
        raise DecodeError(f"unknown decode mode: {mode}")
    if not document.segments:
        raise DecodeError("prompt document has no sections")
    document.validate()

    uncond_document = CosDocument(
        instruct=document.instruct,
        tags=[],
        lyrics="",
        segments=document.segments,
        icl_ref=document.icl_ref,
    )
    state = DecodeState(
        uncond_context=[] if params.cfg_scale != 1.0 else None,
        budget_left=params.max_new_tokens,
        rng=np.random.default_rng(params.seed),
    )
    # prompt text may hold patches unseen in training; intern them so the
    # frame is expressible (the model only ever scores known ids anyway)
    state.context.extend(preamble_ids(document, vocabulary))
    if state.uncond_context is not None:
        state.uncond_context.extend(preamble_ids(uncond_document, vocabulary))

    out_segments: list[Segment] = []
    forced_terminators = 0
    for segment in document.segments:
        frame = section_header_ids(segment, vocabulary)
        state.context.extend(frame)
        if state.uncond_context is not None:
            state.uncond_context.extend(frame)
        state.phase = "audio"
        pairs: list[int] = []
        while True:
            if state.budget_left < 2:
                state.push(int(Marker.EOA), charge_budget=False, count=False)
                state.phase = "text"
                forced_terminators += 1
                break
            vocal, accomp = next_pair(model, state, params, mode)
            if accomp is None:
                break
            pairs.extend((vocal, accomp))
        state.push(int(Marker.END), charge_budget=False, count=False)
        out_segments.append(Segment(segment.label, segment.lyric, DualSequence.from_flat(pairs)))
    state.push(int(Marker.EOD), charge_budget=False, count=False)

    result_document = CosDocument(
        instruct=document.instruct,
        tags=list(document.tags),
        lyrics=document.lyrics,
        segments=out_segments,
        icl_ref=document.icl_ref,
    )
    info = {
        "params": params.as_dict(),
        "seed": params.seed,
        "rng": "numpy-pcg64",
        "mode": mode,
        "emitted_tokens": params.max_new_tokens - state.budget_left,
        "forced_terminators": forced_terminators,
        "segments": [
            {"label": seg.label.name, "score_tokens": len(seg.score.flat)}
            for seg in out_segments
        ],
    }
    return GenerationResult(result_document, list(state.context), info)
