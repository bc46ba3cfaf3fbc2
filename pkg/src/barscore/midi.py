"""Standard MIDI file rendering.

Scores render to format 1 files at 480 ticks per quarter: one conductor
track holding tempo, meter and key metadata, then one track per voice.
The singing voice takes channel 0 and carries lyric meta events at each
syllable's note-on.  All timing is exact rational arithmetic until the
final tick rounding.
"""

import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .abc_parser import _parse_fraction
from .analysis import align_lyrics
from .score import (
    DEFAULT_TEMPO,
    Bar,
    PitchResolver,
    Score,
    Voice,
    parse_key,
    unroll_repeats,
)

TICKS_PER_QUARTER = 480
TICKS_PER_WHOLE = 4 * TICKS_PER_QUARTER
DEFAULT_VELOCITY = 96
NOTE_OFF_VELOCITY = 64
VLQ_MAX = 0x0FFFFFFF


class MidiError(Exception):
    pass


@dataclass(frozen=True)
class MidiEvent:
    tick: int
    kind: str
    data: tuple


# metadata first, then offs before ons so retriggers at a shared tick work
_PRIORITY = {"tempo": 0, "time_signature": 0, "key_signature": 0, "lyric": 1, "note_off": 2, "note_on": 3}


@dataclass
class MidiTrack:
    events: list[MidiEvent] = field(default_factory=list)

    @property
    def end_tick(self) -> int:
        return max((e.tick for e in self.events), default=0)


@dataclass
class MidiDocument:
    tracks: list[MidiTrack]
    division: int = TICKS_PER_QUARTER


def _tick(position: Fraction) -> int:
    # round half up on the exact rational, whole note = 1920 ticks
    return int(position * TICKS_PER_WHOLE + Fraction(1, 2))


def _conductor_track(score: Score) -> MidiTrack:
    headers = score.headers
    tempo = headers.tempo or DEFAULT_TEMPO
    usec_per_quarter = int(round(Fraction(60_000_000) / tempo.quarters_per_minute))
    return MidiTrack(
        [
            MidiEvent(0, "time_signature", (headers.meter.num, headers.meter.den)),
            MidiEvent(0, "tempo", (usec_per_quarter,)),
            MidiEvent(0, "key_signature", (headers.key.sharps, headers.key.minor)),
        ]
    )


def _syllable_texts(voice: Voice) -> dict[int, list[str]]:
    texts: dict[int, list[str]] = {}
    for pair in align_lyrics(voice):
        text = pair.syllable.text + ("-" if pair.syllable.continues else "")
        texts.setdefault(pair.event_index, []).append(text)
    return texts


@dataclass
class _Sounding:
    """A note group held open across tied events."""

    midis: tuple
    start: Fraction
    end: Fraction
    texts: list
    tied: bool


def _voice_track(score: Score, voice: Voice, channel: int) -> MidiTrack:
    resolver = PitchResolver(score.headers.key)
    unit = score.headers.unit_length
    texts_by_flat = _syllable_texts(voice)

    flat_start: dict[int, int] = {}
    acc = 0
    for bar in voice.bars:
        flat_start[id(bar)] = acc
        acc += len(bar.events)

    events_out: list[MidiEvent] = []
    emitted_lyric: set[int] = set()
    cursor = Fraction(0)
    pending: _Sounding | None = None

    def flush() -> None:
        nonlocal pending
        if pending is None:
            return
        on = _tick(pending.start)
        off = max(_tick(pending.end), on + 1)
        for text in pending.texts:
            events_out.append(MidiEvent(on, "lyric", (text,)))
        for midi in pending.midis:
            events_out.append(MidiEvent(on, "note_on", (channel, midi, DEFAULT_VELOCITY)))
            events_out.append(MidiEvent(off, "note_off", (channel, midi, NOTE_OFF_VELOCITY)))
        pending = None

    def field_bar(bar: Bar) -> None:
        nonlocal unit
        letter = bar.source_text[0].upper()
        value = bar.source_text[2:].strip()
        if letter == "K":
            resolver.set_key(parse_key(value))
        elif letter == "L":
            parsed = _parse_fraction(value)
            if parsed is not None:
                unit = parsed
        # mid-tune tempo changes stay out of the rendered file

    for bar in unroll_repeats(voice.bars):
        if bar.is_field:
            field_bar(bar)
            continue
        resolver.start_bar()
        base = flat_start[id(bar)]
        for position, event in enumerate(bar.events):
            duration = event.length * unit
            if event.kind == "rest":
                flush()
                cursor += duration
                continue
            flat = base + position
            midis = tuple(sorted({resolver.resolve(p) for p in event.pitches}))
            texts = []
            if flat not in emitted_lyric:
                texts = texts_by_flat.get(flat, [])
                emitted_lyric.add(flat)
            if pending is not None and pending.tied and pending.midis == midis and pending.end == cursor:
                pending.end = cursor + duration
                pending.texts.extend(texts)
                pending.tied = event.tie
            else:
                flush()
                pending = _Sounding(midis, cursor, cursor + duration, list(texts), event.tie)
            cursor += duration
    flush()
    return MidiTrack(events_out)


def score_to_midi(score: Score) -> MidiDocument:
    """Render every voice; the vocal voice takes channel 0."""
    vocal = score.vocal_voice
    channels: dict[str, int] = {vocal.id: 0}
    next_channel = 1
    for voice in score.voices:
        if voice.id in channels:
            continue
        if next_channel == 9:      # reserve the percussion channel
            next_channel = 10
        if next_channel > 15:
            raise MidiError("more voices than MIDI channels")
        channels[voice.id] = next_channel
        next_channel += 1
    tracks = [_conductor_track(score)]
    tracks.append(_voice_track(score, vocal, 0))
    for voice in score.voices:
        if voice is not vocal:
            tracks.append(_voice_track(score, voice, channels[voice.id]))
    return MidiDocument(tracks)


def _vlq(value: int) -> bytes:
    if value < 0 or value > VLQ_MAX:
        raise MidiError(f"delta time out of range: {value}")
    out = bytearray([value & 0x7F])
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def _encode_event(event: MidiEvent) -> bytes:
    kind, data = event.kind, event.data
    if kind == "tempo":
        (usec,) = data
        return b"\xff\x51\x03" + struct.pack(">I", usec)[1:]
    if kind == "time_signature":
        num, den = data
        log = den.bit_length() - 1
        if den != 1 << log:
            raise MidiError(f"meter denominator {den} is not a power of two")
        return b"\xff\x58\x04" + bytes([num, log, 24, 8])
    if kind == "key_signature":
        sharps, minor = data
        return b"\xff\x59\x02" + struct.pack(">bB", sharps, 1 if minor else 0)
    if kind == "lyric":
        (text,) = data
        payload = text.encode("utf-8")
        return b"\xff\x05" + _vlq(len(payload)) + payload
    if kind == "note_on":
        channel, note, velocity = data
        return bytes([0x90 | channel, note, velocity])
    if kind == "note_off":
        channel, note, velocity = data
        return bytes([0x80 | channel, note, velocity])
    raise MidiError(f"unknown event kind: {kind}")


def write_smf(document: MidiDocument) -> bytes:
    """Serialize to format 1 bytes.  Running status is never used."""
    chunks = [struct.pack(">4sIHHH", b"MThd", 6, 1, len(document.tracks), document.division)]
    for track in document.tracks:
        ordered = sorted(track.events, key=lambda e: (e.tick, _PRIORITY[e.kind], e.kind, e.data))
        payload = bytearray()
        tick = 0
        for event in ordered:
            payload += _vlq(event.tick - tick)
            tick = event.tick
            payload += _encode_event(event)
        payload += b"\x00\xff\x2f\x00"
        chunks.append(struct.pack(">4sI", b"MTrk", len(payload)) + bytes(payload))
    return b"".join(chunks)


def write_midi_file(score: Score, path) -> int:
    """Render and write; returns the byte count."""
    data = write_smf(score_to_midi(score))
    Path(path).write_bytes(data)
    return len(data)


def write_stems(score: Score, out_dir, stem: str) -> list[Path]:
    """One file per voice, each with its own conductor copy."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    document = score_to_midi(score)
    conductor = document.tracks[0]
    vocal = score.vocal_voice
    order = [vocal] + [v for v in score.voices if v is not vocal]
    paths = []
    for voice, track in zip(order, document.tracks[1:]):
        target = out_dir / f"{stem}-{voice.id}.mid"
        target.write_bytes(write_smf(MidiDocument([conductor, track])))
        paths.append(target)
    return paths
