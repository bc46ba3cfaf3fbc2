"""Data model for multi-voice ABC lead sheets.

Every bar keeps its exact source text, so printing a parsed score
reproduces the input bytes modulo canonical header layout, comment
removal and line-ending normalisation.  All durations are exact
rationals (fractions.Fraction); nothing in this package rounds a
duration to float.
"""

from dataclasses import dataclass, field
from fractions import Fraction

# MIDI numbers for the uppercase (middle) octave, C4..B4.
BASE_MIDI = {"C": 60, "D": 62, "E": 64, "F": 65, "G": 67, "A": 69, "B": 71}

SHARPS_ORDER = "FCGDAEB"
FLATS_ORDER = "BEADGCF"

ACCIDENTAL_SEMITONES = {"^": 1, "^^": 2, "_": -1, "__": -2, "=": 0}

# Circle-of-fifths position of each major tonic: positive = sharps.
_MAJOR_SHARPS = {
    "C": 0, "G": 1, "D": 2, "A": 3, "E": 4, "B": 5, "F#": 6, "C#": 7,
    "F": -1, "Bb": -2, "Eb": -3, "Ab": -4, "Db": -5, "Gb": -6, "Cb": -7,
}

# Signature shift of each church mode relative to the major scale on
# the same tonic.
_MODE_SHIFT = {
    "": 0, "maj": 0, "major": 0, "ion": 0, "ionian": 0,
    "m": -3, "min": -3, "minor": -3, "aeo": -3, "aeolian": -3,
    "dor": -2, "dorian": -2,
    "phr": -4, "phrygian": -4,
    "lyd": 1, "lydian": 1,
    "mix": -1, "mixolydian": -1,
    "loc": -5, "locrian": -5,
}

# Bar delimiters, two-character forms first so the scanner can match
# greedily.  "[|" needs a lookahead because "[" alone opens a chord.
BAR_DELIMS_2 = ("|:", "::", ":|", "||", "|]", "[|")
BAR_DELIMS = BAR_DELIMS_2 + ("|",)


class ScoreError(Exception):
    """Raised for requests the score model cannot satisfy."""


@dataclass(frozen=True)
class Pitch:
    letter: str             # diatonic letter, always uppercase A..G
    accidental: str | None  # "^", "^^", "_", "__", "=" or None (inherited)
    octave: int             # 0 for the uppercase octave; lowercase c is 1


@dataclass
class Event:
    kind: str               # "note" | "rest" | "chord"
    pitches: tuple[Pitch, ...]  # empty for rest, one for note, 2+ for chord
    length: Fraction        # multiple of the unit note length, > 0
    tie: bool = False       # tied into the following event
    slur_open: bool = False
    slur_close: bool = False


@dataclass
class Bar:
    source_text: str        # exact source slice, right delimiter included
    events: list[Event]
    barline: str            # one of BAR_DELIMS, or "" for a line fragment
    line_no: int = field(default=0, compare=False)

    @property
    def is_field(self) -> bool:
        """True for a mid-tune header line carried as a bar for fidelity."""
        return (
            self.barline == ""
            and not self.events
            and len(self.source_text) > 1
            and self.source_text[1] == ":"
            and self.source_text[0].isalpha()
        )


@dataclass(frozen=True)
class LyricSyllable:
    text: str               # "" for melisma holds and skips
    continues: bool = False  # joined to the next syllable with "-"
    melisma: bool = False   # "_": previous syllable keeps sounding
    bar_advance: int = 0    # number of "|" markers directly before this token

    @property
    def is_skip(self) -> bool:
        return self.text == "" and not self.melisma


@dataclass
class LyricLine:
    raw: str                # text after "w:" exactly as written
    syllables: list[LyricSyllable]
    bar_start: int          # first bar index this line aligns against
    bar_end: int            # one past the last such bar index
    line_no: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Meter:
    num: int
    den: int

    def __post_init__(self):
        if self.num <= 0 or self.den <= 0:
            raise ScoreError(f"meter terms must be positive, got {self.num}/{self.den}")

    @property
    def fraction(self) -> Fraction:
        """Bar capacity as a fraction of a whole note."""
        return Fraction(self.num, self.den)

    @property
    def compound(self) -> bool:
        return self.den == 8 and self.num in (6, 9, 12)

    def __str__(self) -> str:
        return f"{self.num}/{self.den}"


@dataclass(frozen=True)
class Tempo:
    unit: Fraction          # beat unit as a fraction of a whole note
    bpm: int                # beats of `unit` per minute

    def __post_init__(self):
        if self.unit <= 0 or self.bpm <= 0:
            raise ScoreError(f"tempo terms must be positive, got {self.unit}={self.bpm}")

    @property
    def quarters_per_minute(self) -> Fraction:
        return Fraction(self.bpm) * self.unit * 4

    def __str__(self) -> str:
        return f"{self.unit}={self.bpm}"


DEFAULT_TEMPO = Tempo(Fraction(1, 4), 120)


@dataclass(frozen=True)
class Key:
    raw: str                # key field text as written, e.g. "Gm" or "D mix"
    sharps: int             # signature on the circle of fifths, flats negative
    minor: bool = False

    def signature_accidentals(self) -> dict[str, str]:
        """Per-letter accidentals implied by the signature."""
        if self.sharps >= 0:
            return {letter: "^" for letter in SHARPS_ORDER[: self.sharps]}
        return {letter: "_" for letter in FLATS_ORDER[: -self.sharps]}


def parse_key(raw: str) -> Key:
    """Resolve a key field body to its signature.

    Unknown or exotic spellings fall back to C major rather than failing;
    the raw text is kept either way so printing reproduces it.
    """
    text = raw.strip()
    if not text or text.lower() == "none":
        return Key(raw=text or "none", sharps=0)
    tonic = text[0].upper()
    rest = text[1:]
    if rest[:1] in ("#", "b"):
        tonic += rest[0]
        rest = rest[1:]
    mode = rest.strip().split(" ")[0].lower() if rest.strip() else ""
    # tolerate glued spellings like "Gm" or "Amin"
    shift = _MODE_SHIFT.get(mode)
    if shift is None:
        shift = 0
        mode = ""
    base = _MAJOR_SHARPS.get(tonic)
    if base is None:
        return Key(raw=text, sharps=0)
    sharps = base + shift
    if sharps > 7 or sharps < -7:
        sharps = max(-7, min(7, sharps))
    return Key(raw=text, sharps=sharps, minor=mode in ("m", "min", "minor", "aeo", "aeolian"))


@dataclass
class Headers:
    index: int | None = None            # X
    title: str | None = None            # T
    meter: Meter = field(default_factory=lambda: Meter(4, 4))
    unit_length: Fraction = Fraction(1, 8)  # L
    tempo: Tempo | None = None          # Q; callers default to quarter=120
    key: Key = field(default_factory=lambda: parse_key("C"))
    extras: list[tuple[str, str]] = field(default_factory=list)  # other fields, in order


@dataclass
class Voice:
    id: str
    bars: list[Bar] = field(default_factory=list)
    lyric_lines: list[LyricLine] = field(default_factory=list)
    declared: bool = True   # False only for the implicit single voice
    decl_extra: str = ""    # V: line text after the id, e.g. ' name="Lead"'

    @property
    def has_lyrics(self) -> bool:
        return bool(self.lyric_lines)

    def events(self):
        """All events of all bars, in order."""
        for bar in self.bars:
            yield from bar.events


@dataclass
class Score:
    headers: Headers
    voices: list[Voice] = field(default_factory=list)

    def voice(self, voice_id: str) -> Voice:
        for v in self.voices:
            if v.id == voice_id:
                return v
        raise ScoreError(f"voice not found: {voice_id!r}")

    @property
    def vocal_voice(self) -> Voice:
        """The voice carrying lyrics, else the first voice."""
        if not self.voices:
            raise ScoreError("score has no voices")
        for v in self.voices:
            if v.has_lyrics:
                return v
        return self.voices[0]


@dataclass(frozen=True)
class Diagnostic:
    severity: str           # "error" | "warning"
    line: int               # 1-based source line, 0 when spanning the file
    col: int                # 1-based column, 0 when spanning the line
    message: str

    def __str__(self) -> str:
        return f"{self.severity}:{self.line}:{self.col}:{self.message}"


class PitchResolver:
    """Tracks key signature and bar accidentals while walking a voice.

    Accidentals written in a bar persist for that letter and octave to
    the end of the bar, as in common staff notation.
    """

    def __init__(self, key: Key):
        self.set_key(key)
        self._bar_acc: dict[tuple[str, int], str] = {}

    def set_key(self, key: Key) -> None:
        self._sig = key.signature_accidentals()

    def start_bar(self) -> None:
        self._bar_acc.clear()

    def resolve(self, pitch: Pitch) -> int:
        acc = pitch.accidental
        if acc is not None:
            self._bar_acc[(pitch.letter, pitch.octave)] = acc
        else:
            acc = self._bar_acc.get((pitch.letter, pitch.octave))
            if acc is None:
                acc = self._sig.get(pitch.letter, "=")
        midi = BASE_MIDI[pitch.letter] + 12 * pitch.octave + ACCIDENTAL_SEMITONES[acc]
        return max(0, min(127, midi))


def split_line_bars(line: str) -> list[tuple[str, str]]:
    """Split one music line into (bar_text, delimiter) pieces.

    bar_text includes the right delimiter; a trailing fragment without a
    delimiter is returned with delimiter "".  Delimiters inside quoted
    chord symbols, !decorations! and [...] groups are not split points.
    The scanner never fails; unparseable text just stays in one piece.
    """
    pieces: list[tuple[str, str]] = []
    i = 0
    start = 0
    in_quote = False
    in_deco = False
    depth = 0
    n = len(line)
    while i < n:
        c = line[i]
        if in_quote:
            if c == '"':
                in_quote = False
            i += 1
            continue
        if in_deco:
            if c == "!":
                in_deco = False
            i += 1
            continue
        if c == '"':
            in_quote = True
            i += 1
            continue
        if c == "!":
            in_deco = True
            i += 1
            continue
        if c == "[":
            if i + 1 < n and line[i + 1] == "|":
                pieces.append((line[start : i + 2], "[|"))
                i += 2
                start = i
            else:
                depth += 1
                i += 1
            continue
        if c == "]":
            depth = max(0, depth - 1)
            i += 1
            continue
        if depth == 0:
            two = line[i : i + 2]
            if two in BAR_DELIMS_2:
                pieces.append((line[start : i + 2], two))
                i += 2
                start = i
                continue
            if c == "|":
                pieces.append((line[start : i + 1], "|"))
                i += 1
                start = i
                continue
        i += 1
    if start < n:
        pieces.append((line[start:], ""))
    return pieces


def unroll_repeats(bars: list[Bar]) -> list[Bar]:
    """Performed bar order with one level of repeats expanded.

    ":|" replays from the bar after the most recent "|:" (or the start
    of the current section).  Section bars "||", "|]" and "[|" reset the
    replay origin.  Nested repeats are not modelled.
    """
    out: list[Bar] = []
    repeat_start = 0
    for idx, bar in enumerate(bars):
        out.append(bar)
        if bar.barline in (":|", "::"):
            out.extend(bars[repeat_start : idx + 1])
            repeat_start = idx + 1
        elif bar.barline in ("|:", "||", "|]", "[|"):
            repeat_start = idx + 1
    return out


def _voice_body_lines(voice: Voice) -> list[str]:
    lines: list[str] = []
    groups: list[tuple[int, list[Bar]]] = []
    for bar in voice.bars:
        if groups and groups[-1][0] == bar.line_no:
            groups[-1][1].append(bar)
        else:
            groups.append((bar.line_no, [bar]))
    gi = 0
    li = 0
    lyrics = voice.lyric_lines
    while gi < len(groups) or li < len(lyrics):
        if li >= len(lyrics) or (gi < len(groups) and groups[gi][0] <= lyrics[li].line_no):
            lines.append("".join(b.source_text for b in groups[gi][1]))
            gi += 1
        else:
            lines.append(f"w:{lyrics[li].raw}")
            li += 1
    return lines


def print_voice_block(voice: Voice, include_declaration: bool = True) -> str:
    """One voice as body text: its declaration line, bars, lyric lines."""
    lines: list[str] = []
    if include_declaration and voice.declared:
        lines.append(f"V:{voice.id}{voice.decl_extra}")
    lines.extend(_voice_body_lines(voice))
    return "\n".join(lines) + "\n" if lines else ""


def score_header_lines(score: Score) -> list[str]:
    """Canonical header lines, key field last."""
    h = score.headers
    lines: list[str] = []
    if h.index is not None:
        lines.append(f"X:{h.index}")
    if h.title is not None:
        lines.append(f"T:{h.title}")
    lines.append(f"M:{h.meter}")
    lines.append(f"L:{h.unit_length}")
    if h.tempo is not None:
        lines.append(f"Q:{h.tempo}")
    for tag, value in h.extras:
        lines.append(f"{tag}:{value}")
    lines.append(f"K:{h.key.raw}")
    return lines


def print_score(score: Score) -> str:
    """Render a score back to ABC text in canonical header order.

    Bars and lyric lines are emitted from their stored source text, so
    the body reproduces the parsed input byte for byte.
    """
    lines = score_header_lines(score)
    for voice in score.voices:
        if voice.declared:
            lines.append(f"V:{voice.id}{voice.decl_extra}")
        lines.extend(_voice_body_lines(voice))
    return "\n".join(lines) + "\n"
