"""Fixed-width patch tokenizer over bar and header units.

Tune text splits into units: one per header-style line, one per bar.
Each unit becomes successive 16-character patches, the last one padded
on the right with spaces.  Decoding strips that padding, which makes
text with a literal space at a patch boundary indistinguishable from
padding; canonical_text and has_lossy_padding document the exact normal
form the round trip preserves.
"""

import hashlib
import re
from dataclasses import dataclass

from .score import split_line_bars

PATCH_SIZE = 16
PAD_CHAR = " "

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
START_ID = 3
END_ID = 4
SOA_ID = 5
EOA_ID = 6
EOD_ID = 7
NUM_RESERVED = 8

RESERVED_NAMES = {
    PAD_ID: "PAD",
    BOS_ID: "BOS",
    EOS_ID: "EOS",
    START_ID: "START",
    END_ID: "END",
    SOA_ID: "SOA",
    EOA_ID: "EOA",
    EOD_ID: "EOD",
}

# ids 0..2 pad and delimit plain patch streams; 3..7 frame documents
_RESERVED_KIND = {pid: ("special" if pid < 3 else "marker") for pid in RESERVED_NAMES}

FIELD_LINE_RE = re.compile(r"^([A-Za-z]):")


class PatchError(Exception):
    """Base class for tokenizer failures."""


class NonAsciiPatchError(PatchError):
    pass


class UnknownPatchError(PatchError):
    """Out-of-vocabulary chars under freeze, or an unknown id at decode."""


class VocabularyFormatError(PatchError):
    pass


@dataclass(frozen=True)
class Patch:
    chars: str              # exactly PATCH_SIZE chars; "" for special patches
    kind: str               # "content" | "special"
    id: int


@dataclass(frozen=True)
class PatchOrigin:
    line: int               # 1-based line in the source text
    kind: str               # "header" | "bar"
    voice: str | None = None
    bar: int | None = None  # per-voice bar ordinal for bar units
    tag: str | None = None  # field letter for header units


@dataclass(frozen=True)
class Unit:
    text: str
    line: int
    kind: str               # "header" | "bar"
    voice: str | None = None
    bar: int | None = None
    tag: str | None = None


@dataclass
class PatchSequence:
    patches: list[Patch]
    origins: list[PatchOrigin | None]

    def __post_init__(self):
        if len(self.patches) != len(self.origins):
            raise PatchError("patches and origins must stay parallel")

    def __len__(self) -> int:
        return len(self.patches)

    def __iter__(self):
        return iter(self.patches)

    @property
    def ids(self) -> list[int]:
        return [p.id for p in self.patches]

    def content_patches(self) -> list[Patch]:
        return [p for p in self.patches if p.kind == "content"]


class PatchVocabulary:
    """Bidirectional patch table with eight reserved control ids.

    Content ids start at NUM_RESERVED and are assigned in first-seen
    order, so encoding the same material twice gives identical ids.
    """

    def __init__(self):
        self._to_id: dict[str, int] = {}
        self._to_chars: list[str] = []

    def __len__(self) -> int:
        return NUM_RESERVED + len(self._to_chars)

    def __contains__(self, chars: str) -> bool:
        return chars in self._to_id

    def id_for(self, chars: str, freeze: bool = False) -> int:
        if len(chars) != PATCH_SIZE:
            raise PatchError(f"patch must be {PATCH_SIZE} chars, got {len(chars)}")
        pid = self._to_id.get(chars)
        if pid is None:
            if freeze:
                raise UnknownPatchError(f"patch not in frozen vocabulary: {chars!r}")
            pid = NUM_RESERVED + len(self._to_chars)
            self._to_id[chars] = pid
            self._to_chars.append(chars)
        return pid

    def lookup(self, chars: str) -> int | None:
        return self._to_id.get(chars)

    def chars_for(self, pid: int) -> str:
        if not NUM_RESERVED <= pid < len(self):
            raise UnknownPatchError(f"unknown patch id {pid}")
        return self._to_chars[pid - NUM_RESERVED]

    def content_ids(self) -> range:
        return range(NUM_RESERVED, len(self))

    def dumps(self) -> str:
        rows = []
        for pid in range(NUM_RESERVED):
            rows.append(f"{pid}\t{_RESERVED_KIND[pid]}\t{RESERVED_NAMES[pid]}#0")
        for offset, chars in enumerate(self._to_chars):
            core = chars.rstrip(PAD_CHAR)
            pad = len(chars) - len(core)
            rows.append(f"{NUM_RESERVED + offset}\tcontent\t{_escape(core)}#{pad}")
        return "\n".join(rows) + "\n"

    @classmethod
    def loads(cls, text: str) -> "PatchVocabulary":
        vocab = cls()
        expected = 0
        for raw in text.split("\n"):
            if not raw:
                continue
            parts = raw.split("\t")
            if len(parts) != 3:
                raise VocabularyFormatError(f"bad vocabulary row: {raw!r}")
            pid_s, kind, payload = parts
            try:
                pid = int(pid_s)
            except ValueError:
                raise VocabularyFormatError(f"bad vocabulary id: {pid_s!r}") from None
            if pid != expected:
                raise VocabularyFormatError(f"vocabulary ids must be consecutive, got {pid} after {expected - 1}")
            expected += 1
            cut = payload.rfind("#")
            if cut < 0:
                raise VocabularyFormatError(f"missing pad count in row: {raw!r}")
            core, count_s = payload[:cut], payload[cut + 1 :]
            try:
                pad = int(count_s)
            except ValueError:
                raise VocabularyFormatError(f"bad pad count: {count_s!r}") from None
            if pid < NUM_RESERVED:
                if kind != _RESERVED_KIND[pid] or core != RESERVED_NAMES[pid] or pad != 0:
                    raise VocabularyFormatError(f"reserved row mismatch for id {pid}")
                continue
            if kind != "content":
                raise VocabularyFormatError(f"unexpected kind {kind!r} for id {pid}")
            chars = _unescape(core) + PAD_CHAR * pad
            if len(chars) != PATCH_SIZE:
                raise VocabularyFormatError(f"patch for id {pid} is {len(chars)} chars, want {PATCH_SIZE}")
            if chars in vocab._to_id:
                raise VocabularyFormatError(f"duplicate patch for id {pid}")
            vocab._to_id[chars] = pid
            vocab._to_chars.append(chars)
        return vocab

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as fp:
            fp.write(self.dumps())

    @classmethod
    def load(cls, path) -> "PatchVocabulary":
        with open(path, "r", encoding="ascii") as fp:
            return cls.loads(fp.read())

    def sha256(self) -> str:
        return hashlib.sha256(self.dumps().encode("ascii")).hexdigest()


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def _unescape(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        c = text[i]
        if c == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            if nxt == "t":
                out.append("\t")
            elif nxt == "n":
                out.append("\n")
            elif nxt == "\\":
                out.append("\\")
            else:
                out.append(nxt)
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def segment_units(text: str) -> list[Unit]:
    """Split tune text into header-line and bar units.

    A line whose second character is ":" after a letter counts as a
    header unit; anything else splits into bar units at bar delimiters.
    Blank lines vanish; a whitespace-only tail after the last delimiter
    is dropped unless it contains something beyond spaces.
    """
    units: list[Unit] = []
    current_voice: str | None = None
    bar_counts: dict[str | None, int] = {}
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        m = FIELD_LINE_RE.match(line)
        if m:
            tag = m.group(1)
            if tag == "V":
                body = line[2:].strip()
                if body:
                    current_voice = body.split()[0]
            units.append(Unit(line, line_no, "header", voice=current_voice, tag=tag))
            continue
        for bar_text, delim in split_line_bars(line):
            if delim == "" and bar_text.strip(PAD_CHAR) == "":
                continue
            index = bar_counts.get(current_voice, 0)
            units.append(Unit(bar_text, line_no, "bar", voice=current_voice, bar=index))
            bar_counts[current_voice] = index + 1
    return units


def encode_unit(text: str, vocabulary: PatchVocabulary, freeze: bool = False) -> list[Patch]:
    """Chunk one unit into padded patches: exactly ceil(len/16) of them."""
    if not text.isascii():
        raise NonAsciiPatchError(f"unit contains non-ascii text: {text!r}")
    patches: list[Patch] = []
    for i in range(0, len(text), PATCH_SIZE):
        chunk = text[i : i + PATCH_SIZE].ljust(PATCH_SIZE, PAD_CHAR)
        patches.append(Patch(chars=chunk, kind="content", id=vocabulary.id_for(chunk, freeze=freeze)))
    return patches


def encode_text(text: str, vocabulary: PatchVocabulary, freeze: bool = False) -> PatchSequence:
    patches: list[Patch] = []
    origins: list[PatchOrigin | None] = []
    for unit in segment_units(text):
        origin = PatchOrigin(unit.line, unit.kind, unit.voice, unit.bar, unit.tag)
        for patch in encode_unit(unit.text, vocabulary, freeze):
            patches.append(patch)
            origins.append(origin)
    return PatchSequence(patches, origins)


def encode_score(text: str, vocabulary: PatchVocabulary, freeze: bool = False) -> PatchSequence:
    """encode_text wrapped in the stream delimiters BOS and EOS."""
    body = encode_text(text, vocabulary, freeze)
    bos = Patch("", "special", BOS_ID)
    eos = Patch("", "special", EOS_ID)
    return PatchSequence([bos] + body.patches + [eos], [None] + body.origins + [None])


def decode(sequence, vocabulary: PatchVocabulary) -> str:
    """Map patches back to text.

    Right-pad spaces are removed from each patch and control ids are
    discarded.  With a PatchSequence, newlines come back from the patch
    origins; with a bare id list they must already ride inside patches.
    """
    if isinstance(sequence, PatchSequence):
        items = list(zip(sequence.ids, sequence.origins))
    else:
        items = [(int(pid), None) for pid in sequence]
    parts: list[str] = []
    prev_line: int | None = None
    for pid, origin in items:
        if 0 <= pid < NUM_RESERVED:
            continue
        chars = vocabulary.chars_for(pid)
        if origin is not None:
            if prev_line is not None and origin.line > prev_line:
                parts.append("\n")
            prev_line = origin.line
        parts.append(chars.rstrip(PAD_CHAR))
    return "".join(parts)


def canonical_text(text: str) -> str:
    """The normal form decode(encode_score(text)) reproduces.

    Lines lose trailing spaces, blank lines and the final newline drop.
    """
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    return "\n".join(line.rstrip(PAD_CHAR) for line in lines if line.strip())


def has_lossy_padding(text: str) -> bool:
    """True when some unit has a space at a 16-char chunk boundary.

    Such a space is removed by decode along with padding, so the round
    trip glues the characters around it.  Inputs clear of this (and in
    canonical form) decode back exactly.
    """
    for unit in segment_units(text):
        for i in range(PATCH_SIZE - 1, len(unit.text) - 1, PATCH_SIZE):
            if unit.text[i] == PAD_CHAR:
                return True
    return False
