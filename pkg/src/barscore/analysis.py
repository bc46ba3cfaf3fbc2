"""Alignment and summary metrics over parsed scores."""

import warnings
from dataclasses import dataclass
from fractions import Fraction

from .abc_parser import _parse_fraction, _parse_tempo
from .score import (
    DEFAULT_TEMPO,
    LyricSyllable,
    PitchResolver,
    Score,
    ScoreError,
    Voice,
    parse_key,
    unroll_repeats,
)


class AlignmentWarning(UserWarning):
    pass


class TempoDefaultWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AlignedSyllable:
    event_index: int        # flat index over the voice's events, in order
    syllable: LyricSyllable


def _singable_slots(voice: Voice) -> list[tuple[int, int]]:
    """(flat event index, bar index) of syllable-bearing events.

    Rests and tie continuations take no syllable; a rest also breaks
    any tie left dangling across it.
    """
    slots: list[tuple[int, int]] = []
    flat = 0
    tied_over = False
    for bar_index, bar in enumerate(voice.bars):
        for event in bar.events:
            if event.kind == "rest":
                tied_over = False
            else:
                if not tied_over:
                    slots.append((flat, bar_index))
                tied_over = event.tie
            flat += 1
    return slots


def align_lyrics(voice: Voice) -> list[AlignedSyllable]:
    """Pair each lyric syllable with a singable note, per lyric line.

    Melisma holds and skip tokens consume a note without producing a
    pair; bar markers in the lyric advance to the next bar.  Syllables
    left over after the line's notes run out are reported through an
    AlignmentWarning.
    """
    slots = _singable_slots(voice)
    pairs: list[AlignedSyllable] = []
    for line in voice.lyric_lines:
        in_range = [s for s in slots if line.bar_start <= s[1] < line.bar_end]
        pos = 0
        floor = line.bar_start
        last_bar: int | None = None
        surplus = 0
        for syllable in line.syllables:
            if syllable.bar_advance:
                current = last_bar if last_bar is not None else line.bar_start
                floor = max(floor, current + syllable.bar_advance)
            while pos < len(in_range) and in_range[pos][1] < floor:
                pos += 1
            if pos >= len(in_range):
                if syllable.text:
                    surplus += 1
                continue
            flat_index, bar_index = in_range[pos]
            pos += 1
            last_bar = bar_index
            if syllable.text:
                pairs.append(AlignedSyllable(flat_index, syllable))
        if surplus:
            warnings.warn(
                f"{surplus} surplus syllable(s) on lyric line {line.line_no}",
                AlignmentWarning,
                stacklevel=2,
            )
    return pairs


def _field_parts(bar) -> tuple[str, str]:
    tag, value = bar.source_text.split(":", 1)
    return tag, value


def vocal_range(score: Score, voice_id: str | None = None) -> int:
    """Semitone span between the lowest and highest written pitch.

    Defaults to the lyric-carrying voice.  Raises ScoreError for an
    unknown voice or one without notes.
    """
    voice = score.voice(voice_id) if voice_id is not None else score.vocal_voice
    resolver = PitchResolver(score.headers.key)
    lowest: int | None = None
    highest: int | None = None
    for bar in voice.bars:
        if bar.is_field:
            tag, value = _field_parts(bar)
            if tag == "K":
                resolver.set_key(parse_key(value))
            continue
        resolver.start_bar()
        for event in bar.events:
            for pitch in event.pitches:
                number = resolver.resolve(pitch)
                if lowest is None or number < lowest:
                    lowest = number
                if highest is None or number > highest:
                    highest = number
    if lowest is None or highest is None:
        raise ScoreError(f"voice has no notes: {voice.id!r}")
    return highest - lowest


def estimate_duration(score: Score) -> Fraction:
    """Playing time in seconds, exact, repeats unrolled.

    Follows the voice with the most bars.  Mid-tune unit-length and
    tempo changes apply from the bar where they appear; a missing tempo
    header falls back to a quarter note at 120 with a warning.
    """
    tempo = score.headers.tempo
    if tempo is None:
        warnings.warn(
            "no tempo header; assuming 1/4=120", TempoDefaultWarning, stacklevel=2
        )
        tempo = DEFAULT_TEMPO
    if not score.voices:
        return Fraction(0)
    voice = max(score.voices, key=lambda v: sum(1 for b in v.bars if not b.is_field))
    unit = score.headers.unit_length
    seconds = Fraction(0)
    for bar in unroll_repeats(voice.bars):
        if bar.is_field:
            tag, value = _field_parts(bar)
            if tag == "L":
                frac = _parse_fraction(value)
                if frac is not None and frac > 0:
                    unit = frac
            elif tag == "Q":
                parsed = _parse_tempo(value, 0, [])
                if parsed is not None:
                    tempo = parsed
            continue
        content = sum((event.length for event in bar.events), Fraction(0)) * unit
        seconds += content * 240 / tempo.quarters_per_minute
    return seconds
