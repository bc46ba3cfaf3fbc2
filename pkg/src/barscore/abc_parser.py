"""Parser for the ABC lead-sheet subset.

parse_score never raises on bad input.  It returns a ParseResult whose
diagnostics carry errors and warnings with 1-based line and column
positions; when any error is present the score is None.

The subset covers multi-voice tunes with lyrics: header fields, notes,
rests, chords, ties, slurs, depth-1 tuplets, broken rhythm, repeats and
section barlines.  Grace notes, decorations, quoted chord symbols and
inline bracket fields are carried through as bar text without being
modelled as events.
"""

import re
from dataclasses import dataclass, replace
from fractions import Fraction

from .score import (
    Bar,
    Diagnostic,
    Event,
    Headers,
    LyricLine,
    LyricSyllable,
    Meter,
    Pitch,
    Score,
    ScoreError,
    Tempo,
    Voice,
    parse_key,
    split_line_bars,
)

FIELD_RE = re.compile(r"^([A-Za-z]):(.*)$")
METER_RE = re.compile(r"^(\d+)/(\d+)$")
TEMPO_RE = re.compile(r"^(\d+)/(\d+)\s*=\s*(\d+)$")
DUR_RE = re.compile(r"(\d+)?(/+)?(\d+)?")
INLINE_FIELD_RE = re.compile(r"\[([A-Za-z]):([^\]]*)\]?")
TUPLET_RE = re.compile(r"\((\d)(?::(\d*))?(?::(\d*))?")

NOTE_LETTERS = set("ABCDEFGabcdefg")

# "p notes in the time of q": q by tuplet figure, duple-meter default.
_TUPLET_Q = {2: 3, 3: 2, 4: 3, 5: 2, 6: 2, 7: 2, 8: 3, 9: 2}

MAX_DURATION_TERM = 1_000_000


@dataclass
class ParseResult:
    score: Score | None
    diagnostics: list[Diagnostic]

    @property
    def ok(self) -> bool:
        return self.score is not None

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]

    @property
    def warnings(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "warning"]


def parse_or_raise(text: str) -> Score:
    """parse_score, raising ScoreError with the first error message."""
    result = parse_score(text)
    if result.score is None:
        detail = "; ".join(str(d) for d in result.errors) or "empty input"
        raise ScoreError(f"unparseable score: {detail}")
    return result.score


class _VoiceBuilder:
    def __init__(self, voice_id: str, declared: bool, decl_extra: str = ""):
        self.voice = Voice(id=voice_id, declared=declared, decl_extra=decl_extra)
        self.last_line_range: tuple[int, int] | None = None

    def add_bars(self, bars: list[Bar]) -> None:
        start = len(self.voice.bars)
        self.voice.bars.extend(bars)
        self.last_line_range = (start, len(self.voice.bars))

    def add_field_bar(self, bar: Bar) -> None:
        self.voice.bars.append(bar)


def parse_lyric_syllables(raw: str) -> list[LyricSyllable]:
    """Split a lyric line body into alignment tokens.

    "-" joins a syllable to the next one, "_" holds the previous
    syllable through another note, "*" skips a note, and "|" advances
    alignment to the next bar.  "~" inside a word stands for a space
    and "\\-" for a literal hyphen.
    """
    syllables: list[LyricSyllable] = []
    pending_bars = 0
    i = 0
    n = len(raw)
    while i < n:
        c = raw[i]
        if c in " \t":
            i += 1
        elif c == "|":
            pending_bars += 1
            i += 1
        elif c == "_":
            syllables.append(LyricSyllable("", melisma=True, bar_advance=pending_bars))
            pending_bars = 0
            i += 1
        elif c == "*":
            syllables.append(LyricSyllable("", bar_advance=pending_bars))
            pending_bars = 0
            i += 1
        elif c == "-":
            if syllables:
                syllables[-1] = replace(syllables[-1], continues=True)
            i += 1
        else:
            chars: list[str] = []
            j = i
            while j < n and raw[j] not in " \t|_*-":
                if raw[j] == "\\" and j + 1 < n:
                    chars.append(raw[j + 1])
                    j += 2
                elif raw[j] == "~":
                    chars.append(" ")
                    j += 1
                else:
                    chars.append(raw[j])
                    j += 1
            continues = j < n and raw[j] == "-"
            if continues:
                j += 1
            syllables.append(
                LyricSyllable("".join(chars), continues=continues, bar_advance=pending_bars)
            )
            pending_bars = 0
            i = j
    return syllables


def _parse_duration(text: str, pos: int) -> tuple[Fraction | None, int, str | None]:
    """Read a length suffix at pos.  Returns (value, new_pos, error).

    value is None with an error message for zero or absurd terms; a
    missing suffix reads as 1.
    """
    m = DUR_RE.match(text, pos)
    num_s, slashes, den_s = m.group(1), m.group(2), m.group(3)
    end = m.end()
    if not num_s and not slashes and not den_s:
        return Fraction(1), pos, None
    num = int(num_s) if num_s else 1
    den = 1
    if slashes:
        den = int(den_s) * (2 ** (len(slashes) - 1)) if den_s else 2 ** len(slashes)
    if num == 0 or den == 0:
        return None, end, "malformed duration token"
    if num > MAX_DURATION_TERM or den > MAX_DURATION_TERM:
        return None, end, "malformed duration token"
    return Fraction(num, den), end, None


def _parse_pitch(text: str, pos: int) -> tuple[Pitch | None, int]:
    """Read accidental, letter and octave marks at pos."""
    i = pos
    n = len(text)
    acc: str | None = None
    if i < n and text[i] in "^_=":
        c = text[i]
        if c == "=":
            acc = "="
            i += 1
        else:
            acc = c
            i += 1
            if i < n and text[i] == c:
                acc = c * 2
                i += 1
    if i >= n or text[i] not in NOTE_LETTERS:
        return None, pos
    letter = text[i]
    i += 1
    octave = 0 if letter.isupper() else 1
    while i < n and text[i] in "',":
        octave += 1 if text[i] == "'" else -1
        i += 1
    return Pitch(letter=letter.upper(), accidental=acc, octave=octave), i


class _BarEventParser:
    """One-shot scanner turning bar content into events."""

    def __init__(self, line_no: int, col_offset: int, meter: Meter, diags: list[Diagnostic]):
        self.line_no = line_no
        self.col_offset = col_offset
        self.meter = meter
        self.diags = diags
        self.events: list[Event] = []
        self.slur_open_pending = False
        self.tuplet_mult: Fraction | None = None
        self.tuplet_remaining = 0
        self.broken: tuple[str, int] | None = None

    def diag(self, severity: str, pos: int, message: str) -> None:
        self.diags.append(
            Diagnostic(severity, self.line_no, self.col_offset + pos + 1, message)
        )

    def push(self, event: Event) -> None:
        if self.slur_open_pending:
            event.slur_open = True
            self.slur_open_pending = False
        if self.tuplet_remaining > 0 and self.tuplet_mult is not None:
            event.length *= self.tuplet_mult
            self.tuplet_remaining -= 1
        if self.broken is not None and self.events:
            direction, count = self.broken
            short = Fraction(1, 2**count)
            long = 2 - short
            prev = self.events[-1]
            if direction == ">":
                prev.length *= long
                event.length *= short
            else:
                prev.length *= short
                event.length *= long
        self.broken = None
        self.events.append(event)

    def run(self, text: str) -> list[Event]:
        i = 0
        n = len(text)
        while i < n:
            c = text[i]
            if c in " \t`":
                i += 1
            elif c == '"':
                end = text.find('"', i + 1)
                i = n if end < 0 else end + 1
            elif c == "!":
                end = text.find("!", i + 1)
                i = i + 1 if end < 0 else end + 1
            elif c == "{":
                end = text.find("}", i + 1)
                i = n if end < 0 else end + 1
            elif c == "(":
                m = TUPLET_RE.match(text, i)
                if m:
                    i = self._tuplet(m)
                else:
                    self.slur_open_pending = True
                    i += 1
            elif c == ")":
                if self.events:
                    self.events[-1].slur_close = True
                i += 1
            elif c == "-":
                if self.events:
                    self.events[-1].tie = True
                i += 1
            elif c in "<>":
                j = i
                while j < n and text[j] == c:
                    j += 1
                self.broken = (c, j - i)
                i = j
            elif c == "[":
                i = self._bracket(text, i)
            elif c in "zx":
                i = self._rest(text, i)
            elif c == "Z":
                i = self._multibar_rest(text, i)
            elif c == "y":
                _, i, _ = _parse_duration(text, i + 1)
            elif c in NOTE_LETTERS or c in "^_=":
                i = self._note(text, i)
            else:
                i += 1
        return self.events

    def _tuplet(self, m: re.Match) -> int:
        p = int(m.group(1))
        q_s, r_s = m.group(2), m.group(3)
        if p < 2:
            return m.end()
        q = int(q_s) if q_s else _TUPLET_Q[p]
        if q == 0:
            q = _TUPLET_Q[p]
        if q == _TUPLET_Q[p] and not q_s and p in (5, 7, 9) and self.meter.compound:
            q = 3
        r = int(r_s) if r_s else p
        self.tuplet_mult = Fraction(q, p)
        self.tuplet_remaining = max(1, r)
        return m.end()

    def _note(self, text: str, i: int) -> int:
        pitch, j = _parse_pitch(text, i)
        if pitch is None:
            return i + 1
        length, j, err = _parse_duration(text, j)
        if err:
            self.diag("error", i, err)
            return j
        self.push(Event(kind="note", pitches=(pitch,), length=length))
        return j

    def _rest(self, text: str, i: int) -> int:
        length, j, err = _parse_duration(text, i + 1)
        if err:
            self.diag("error", i, err)
            return j
        self.push(Event(kind="rest", pitches=(), length=length))
        return j

    def _multibar_rest(self, text: str, i: int) -> int:
        count, j, err = _parse_duration(text, i + 1)
        if err:
            self.diag("error", i, err)
            return j
        length = count * self.meter.fraction / self.unit_length
        self.push(Event(kind="rest", pitches=(), length=length))
        return j

    def _bracket(self, text: str, i: int) -> int:
        if INLINE_FIELD_RE.match(text, i):
            end = text.find("]", i + 1)
            return len(text) if end < 0 else end + 1
        # chord
        j = i + 1
        n = len(text)
        pitches: list[Pitch] = []
        first_len: Fraction | None = None
        mismatched = False
        while j < n and text[j] != "]":
            pitch, k = _parse_pitch(text, j)
            if pitch is None:
                j += 1
                continue
            length, k, err = _parse_duration(text, k)
            if err:
                self.diag("error", j, err)
                return k
            pitches.append(pitch)
            if first_len is None:
                first_len = length
            elif length != first_len:
                mismatched = True
            j = k
        if j >= n:
            self.diag("warning", i, "unclosed chord")
        else:
            j += 1
        factor, j, err = _parse_duration(text, j)
        if err:
            self.diag("error", i, err)
            return j
        if not pitches:
            return j
        if mismatched:
            self.diag("warning", i, "chord notes of unequal length")
        length = (first_len or Fraction(1)) * factor
        kind = "note" if len(pitches) == 1 else "chord"
        self.push(Event(kind=kind, pitches=tuple(pitches), length=length))
        return j

    # set per call by parse_score; Z rests need it
    unit_length: Fraction = Fraction(1, 8)


def _default_unit_length(meter: Meter) -> Fraction:
    if meter.fraction < Fraction(3, 4):
        return Fraction(1, 16)
    return Fraction(1, 8)


def _parse_fraction(text: str) -> Fraction | None:
    text = text.strip()
    m = METER_RE.match(text)
    if m:
        num, den = int(m.group(1)), int(m.group(2))
        if num == 0 or den == 0:
            return None
        return Fraction(num, den)
    if text.isdigit() and text != "0":
        return Fraction(int(text))
    return None


def parse_score(text: str) -> ParseResult:
    diags: list[Diagnostic] = []
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")

    headers = Headers()
    length_set = False
    key_seen = False
    missing_key_reported = False

    builders: list[_VoiceBuilder] = []
    by_id: dict[str, _VoiceBuilder] = {}
    current: _VoiceBuilder | None = None

    meter = headers.meter
    unit_length: Fraction | None = None
    in_header = True

    def effective_unit() -> Fraction:
        return unit_length if unit_length is not None else _default_unit_length(meter)

    def get_voice(voice_id: str, declared: bool, decl_extra: str = "") -> _VoiceBuilder:
        nonlocal current
        builder = by_id.get(voice_id)
        if builder is None:
            builder = _VoiceBuilder(voice_id, declared, decl_extra)
            builders.append(builder)
            by_id[voice_id] = builder
        elif declared and not builder.voice.declared:
            builder.voice.declared = True
            builder.voice.decl_extra = decl_extra
        current = builder
        return builder

    def body_voice() -> _VoiceBuilder:
        nonlocal current
        if current is not None:
            return current
        if builders:
            current = builders[0]
            return current
        return get_voice("1", declared=False)

    def check_ascii(line_no: int, line: str, tag: str | None) -> bool:
        if line.isascii():
            return True
        col = next(idx for idx, ch in enumerate(line) if not ch.isascii()) + 1
        if tag in ("T", "w"):
            diags.append(Diagnostic("warning", line_no, col, "non-ascii text"))
            return True
        diags.append(Diagnostic("error", line_no, col, "non-ascii character"))
        return False

    def handle_header_field(line_no: int, tag: str, value: str) -> None:
        nonlocal meter, unit_length, length_set, key_seen, in_header, current
        if tag == "X":
            try:
                headers.index = int(value.strip())
            except ValueError:
                diags.append(Diagnostic("warning", line_no, 3, "bad index value"))
        elif tag == "T":
            headers.title = value.strip()
        elif tag == "M":
            parsed = _parse_meter(value)
            if parsed is None:
                diags.append(Diagnostic("error", line_no, 3, "malformed meter"))
            else:
                headers.meter = parsed
                meter = parsed
        elif tag == "L":
            frac = _parse_fraction(value)
            if frac is None or frac <= 0:
                diags.append(Diagnostic("error", line_no, 3, "malformed unit note length"))
            else:
                headers.unit_length = frac
                unit_length = frac
                length_set = True
        elif tag == "Q":
            tempo = _parse_tempo(value, line_no, diags)
            if tempo is not None:
                headers.tempo = tempo
        elif tag == "K":
            headers.key = parse_key(value)
            key_seen = True
            in_header = False
            # pre-declared voices read in header order; body music without
            # an explicit switch belongs to the first of them
            current = None
        elif tag == "V":
            handle_voice_field(line_no, value)
        elif tag == "w":
            diags.append(Diagnostic("warning", line_no, 1, "lyric line before any music"))
        else:
            headers.extras.append((tag, value))

    def handle_voice_field(line_no: int, value: str) -> None:
        stripped = value.strip()
        if not stripped:
            diags.append(Diagnostic("error", line_no, 3, "unbalanced voice declaration"))
            return
        voice_id = stripped.split()[0]
        decl_extra = stripped[len(voice_id):]
        builder = get_voice(voice_id, declared=True, decl_extra=decl_extra)
        builder.last_line_range = None

    def handle_body_field(line_no: int, line: str, tag: str, value: str) -> None:
        nonlocal meter, unit_length
        if tag == "V":
            handle_voice_field(line_no, value)
            return
        if tag == "w":
            attach_lyrics(line_no, value)
            return
        if tag == "M":
            parsed = _parse_meter(value)
            if parsed is None:
                diags.append(Diagnostic("error", line_no, 3, "malformed meter"))
                return
            meter = parsed
        elif tag == "L":
            frac = _parse_fraction(value)
            if frac is None or frac <= 0:
                diags.append(Diagnostic("error", line_no, 3, "malformed unit note length"))
                return
            unit_length = frac
        builder = body_voice()
        builder.add_field_bar(Bar(source_text=line, events=[], barline="", line_no=line_no))

    def attach_lyrics(line_no: int, value: str) -> None:
        if current is None or current.last_line_range is None:
            diags.append(Diagnostic("warning", line_no, 1, "lyric line before any music"))
            return
        start, end = current.last_line_range
        syllables = parse_lyric_syllables(value)
        current.voice.lyric_lines.append(
            LyricLine(raw=value, syllables=syllables, bar_start=start, bar_end=end, line_no=line_no)
        )

    def handle_music_line(line_no: int, line: str) -> None:
        builder = body_voice()
        pieces = split_line_bars(line)
        bars: list[Bar] = []
        col = 0
        for bar_text, delim in pieces:
            if delim == "" and bar_text.strip() == "":
                col += len(bar_text)
                continue
            content = bar_text[: len(bar_text) - len(delim)] if delim else bar_text
            parser = _BarEventParser(line_no, col, meter, diags)
            parser.unit_length = effective_unit()
            events = parser.run(content)
            if delim == "" and bar_text.strip():
                diags.append(Diagnostic("warning", line_no, col + 1, "line ends inside a bar"))
            if delim and events:
                total = sum((e.length for e in events), Fraction(0)) * effective_unit()
                if total > meter.fraction:
                    diags.append(
                        Diagnostic("warning", line_no, col + 1, f"bar overfull: {total} > {meter.fraction}")
                    )
            bars.append(Bar(source_text=bar_text, events=events, barline=delim, line_no=line_no))
            col += len(bar_text)
        if bars:
            builder.add_bars(bars)

    for line_no, raw_line in enumerate(lines, start=1):
        line = raw_line.rstrip("\\") if raw_line.endswith("\\") else raw_line
        if not line.strip() or line.lstrip().startswith("%"):
            continue
        m = FIELD_RE.match(line)
        tag = m.group(1) if m else None
        if not check_ascii(line_no, line, tag):
            continue
        if in_header:
            if m:
                handle_header_field(line_no, m.group(1), m.group(2))
            else:
                if not missing_key_reported:
                    diags.append(Diagnostic("error", line_no, 1, "missing key header"))
                    missing_key_reported = True
                in_header = False
                handle_music_line(line_no, line)
            continue
        if m:
            handle_body_field(line_no, line, m.group(1), m.group(2))
        else:
            handle_music_line(line_no, line)

    if not key_seen and not missing_key_reported:
        diags.append(Diagnostic("error", len(lines), 1, "missing key header"))

    if not builders:
        get_voice("1", declared=False)

    if any(d.severity == "error" for d in diags):
        return ParseResult(None, diags)
    if not length_set:
        headers.unit_length = _default_unit_length(headers.meter)
    score = Score(headers=headers, voices=[b.voice for b in builders])
    return ParseResult(score, diags)


def _parse_meter(value: str) -> Meter | None:
    text = value.strip()
    if text == "C":
        return Meter(4, 4)
    if text == "C|":
        return Meter(2, 2)
    m = METER_RE.match(text)
    if m:
        num, den = int(m.group(1)), int(m.group(2))
        if num > 0 and den > 0:
            return Meter(num, den)
    return None


def _parse_tempo(value: str, line_no: int, diags: list[Diagnostic]) -> Tempo | None:
    text = value.strip().strip('"')
    m = TEMPO_RE.match(text)
    if m:
        num, den, bpm = int(m.group(1)), int(m.group(2)), int(m.group(3))
        if num > 0 and den > 0 and bpm > 0:
            return Tempo(Fraction(num, den), bpm)
        diags.append(Diagnostic("warning", line_no, 3, "unparsed tempo"))
        return None
    if text.isdigit() and int(text) > 0:
        diags.append(Diagnostic("warning", line_no, 3, "tempo without beat unit, assuming 1/4"))
        return Tempo(Fraction(1, 4), int(text))
    if text:
        diags.append(Diagnostic("warning", line_no, 3, "unparsed tempo"))
    return None
