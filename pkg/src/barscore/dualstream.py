"""Paired vocal and accompaniment token streams.

A song step t carries one vocal id and one accompaniment id.  The flat
layout alternates them (v1, a1, v2, a2, ...), which is what models
consume; the step layout is the structured view.  The shorter side of a
pairing is padded per step with the PAD id.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

from .patching import PAD_ID, PatchSequence, PatchVocabulary, encode_text
from .score import Score, print_voice_block

TokenStream = list[int]

STREAM_MAGIC = b"DNTP1"


class DualStreamError(Exception):
    pass


@dataclass(frozen=True)
class DualStep:
    v: int                  # vocal-side token id
    a: int                  # accompaniment-side token id
    t: int                  # 1-based step index


@dataclass
class DualSequence:
    steps: list[DualStep]

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    @property
    def flat(self) -> TokenStream:
        out: TokenStream = []
        for step in self.steps:
            out.append(step.v)
            out.append(step.a)
        return out

    @classmethod
    def from_flat(cls, ids) -> "DualSequence":
        ids = list(ids)
        if len(ids) % 2:
            raise DualStreamError(f"flat stream length must be even, got {len(ids)}")
        steps = [
            DualStep(ids[i], ids[i + 1], i // 2 + 1) for i in range(0, len(ids), 2)
        ]
        return cls(steps)


def interleave(vocal: TokenStream, accomp: TokenStream) -> DualSequence:
    """Zip two streams into steps, padding the shorter side with PAD."""
    length = max(len(vocal), len(accomp))
    steps = [
        DualStep(
            vocal[t] if t < len(vocal) else PAD_ID,
            accomp[t] if t < len(accomp) else PAD_ID,
            t + 1,
        )
        for t in range(length)
    ]
    return DualSequence(steps)


def deinterleave(sequence: DualSequence) -> tuple[TokenStream, TokenStream]:
    """Recover the two streams, stripping the per-side trailing padding."""
    vocal = [step.v for step in sequence.steps]
    accomp = [step.a for step in sequence.steps]
    while vocal and vocal[-1] == PAD_ID:
        vocal.pop()
    while accomp and accomp[-1] == PAD_ID:
        accomp.pop()
    return vocal, accomp


def split_tracks(
    score: Score,
    vocabulary: PatchVocabulary | None = None,
    freeze: bool = False,
) -> tuple[PatchSequence, PatchSequence, PatchVocabulary]:
    """Patch streams for the vocal voice and for everything else.

    The vocal voice is the one carrying lyrics (first voice otherwise);
    the remaining voices concatenate in score order on the other side.
    """
    if vocabulary is None:
        vocabulary = PatchVocabulary()
    vocal = score.vocal_voice
    others = [v for v in score.voices if v is not vocal]
    vocal_seq = encode_text(print_voice_block(vocal), vocabulary, freeze)
    accomp_text = "".join(print_voice_block(v) for v in others)
    accomp_seq = encode_text(accomp_text, vocabulary, freeze)
    return vocal_seq, accomp_seq, vocabulary


def pair_streams(
    vocal_seq: PatchSequence, accomp_seq: PatchSequence
) -> DualSequence:
    return interleave(vocal_seq.ids, accomp_seq.ids)


def write_steps_text(sequence: DualSequence, path) -> None:
    """Tab-separated step table: step, vocal id, accompaniment id."""
    with open(path, "w", encoding="ascii") as fp:
        for step in sequence.steps:
            fp.write(f"{step.t}\t{step.v}\t{step.a}\n")


def read_steps_text(path) -> DualSequence:
    steps: list[DualStep] = []
    with open(path, "r", encoding="ascii") as fp:
        for line_no, line in enumerate(fp, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DualStreamError(f"bad step row at line {line_no}: {line!r}")
            try:
                t, v, a = (int(p) for p in parts)
            except ValueError:
                raise DualStreamError(f"bad step row at line {line_no}: {line!r}") from None
            if t != len(steps) + 1:
                raise DualStreamError(f"step numbers must count from 1, got {t} at line {line_no}")
            steps.append(DualStep(v, a, t))
    return DualSequence(steps)


def write_flat_binary(sequence: DualSequence, path) -> None:
    """Magic DNTP1 followed by the flat ids as little-endian u32."""
    flat = sequence.flat
    with open(path, "wb") as fp:
        fp.write(STREAM_MAGIC)
        fp.write(struct.pack(f"<{len(flat)}I", *flat))


def read_flat_binary(path) -> DualSequence:
    data = Path(path).read_bytes()
    if data[: len(STREAM_MAGIC)] != STREAM_MAGIC:
        raise DualStreamError("bad stream file magic")
    body = data[len(STREAM_MAGIC) :]
    if len(body) % 4:
        raise DualStreamError("truncated stream file")
    ids = list(struct.unpack(f"<{len(body) // 4}I", body))
    return DualSequence.from_flat(ids)
