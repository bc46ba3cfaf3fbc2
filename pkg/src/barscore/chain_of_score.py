"""Multi-segment song documents as flat token streams.

A document is one training or generation example.  Its stream layout:

    [reference dual stream, EOA]   optional style excerpt
    instruct "\\n" tags "\\n" lyrics  patch-encoded text regions
    per section:  START  label "\\n" lyric  SOA  dual score  EOA  END
    EOD

Text regions embed their newlines inside the patches; score regions are
flat (v, a) pair streams from dualstream.  parse is strict: any marker
out of place, odd score region or trailing material raises.
"""

import enum
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .abc_parser import parse_score
from .analysis import estimate_duration
from .dualstream import DualSequence, deinterleave, interleave
from .patching import (
    EOA_ID,
    END_ID,
    EOD_ID,
    NUM_RESERVED,
    PAD_CHAR,
    PAD_ID,
    PATCH_SIZE,
    SOA_ID,
    START_ID,
    PatchVocabulary,
    decode,
    encode_unit,
)
from .score import Score, Voice, score_header_lines

CORPUS_MAGIC = b"COS1"

CANONICAL_SECTIONS = ("intro", "verse", "chorus", "bridge", "outro")


class CosError(Exception):
    pass


class CosFormatError(CosError):
    """A document or corpus artifact violates the format contract."""


class CosParseError(CosError):
    """A token stream does not scan as a document."""


class Marker(enum.IntEnum):
    """Framing tokens; values are the reserved vocabulary ids."""

    START = START_ID
    END = END_ID
    SOA = SOA_ID
    EOA = EOA_ID
    EOD = EOD_ID


_MARKER_VALUES = {int(m) for m in Marker}


@dataclass(frozen=True)
class SectionLabel:
    name: str

    def __post_init__(self):
        if not self.name:
            raise ValueError("section label must be non-empty")
        if "\n" in self.name or "\t" in self.name:
            raise ValueError(f"section label must be a single line: {self.name!r}")

    @property
    def is_canonical(self) -> bool:
        return self.name in CANONICAL_SECTIONS

    def __str__(self) -> str:
        return self.name


@dataclass
class Segment:
    label: SectionLabel
    lyric: str              # section lyric text, possibly multi-line or ""
    score: DualSequence


@dataclass
class CosDocument:
    instruct: str = ""
    tags: list[str] = field(default_factory=list)
    lyrics: str = ""
    segments: list[Segment] = field(default_factory=list)
    icl_ref: DualSequence | None = None

    def validate(self) -> None:
        if "\n" in self.instruct:
            raise CosFormatError("instruct must be a single line")
        for tag in self.tags:
            if not tag or tag != tag.strip() or "\n" in tag or "," in tag:
                raise CosFormatError(f"tag must be a trimmed, comma-free line: {tag!r}")


def _chunk_field_piece(piece: str) -> list[str]:
    """Split free text into patch-sized chunks that survive padding.

    Chunks break at space boundaries so none ends with a literal space
    (trailing spaces would read as padding).  Pieces that end in spaces
    lose them, and interior space runs of PATCH_SIZE or more do not
    survive either; canonical documents avoid both.
    """
    chunks: list[str] = []
    current = ""
    i = 0
    n = len(piece)
    while i < n:
        # one atom: optional run of spaces glued to the next non-space run
        j = i
        while j < n and piece[j] == PAD_CHAR:
            j += 1
        if j == n:
            break
        k = j
        while k < n and piece[k] != PAD_CHAR:
            k += 1
        atom = piece[i:k]
        i = k
        if len(current) + len(atom) <= PATCH_SIZE:
            current += atom
            continue
        if current:
            chunks.append(current)
            current = ""
        while len(atom) > PATCH_SIZE:
            chunks.append(atom[:PATCH_SIZE])
            atom = atom[PATCH_SIZE:]
        current = atom
    if current:
        chunks.append(current)
    return chunks


def _encode_field_text(text: str, vocabulary: PatchVocabulary, freeze: bool = False) -> list[int]:
    ids: list[int] = []
    lines = text.split("\n")
    for index, line in enumerate(lines):
        piece = line + ("\n" if index < len(lines) - 1 else "")
        for chunk in _chunk_field_piece(piece):
            ids.append(vocabulary.id_for(chunk.ljust(PATCH_SIZE, PAD_CHAR), freeze=freeze))
    return ids


def preamble_ids(document: CosDocument, vocabulary: PatchVocabulary, freeze: bool = False) -> list[int]:
    """Everything before the first section frame."""
    out: list[int] = []
    if document.icl_ref is not None:
        out.extend(document.icl_ref.flat)
        out.append(int(Marker.EOA))
    out.extend(_encode_field_text(document.instruct + "\n", vocabulary, freeze))
    out.extend(_encode_field_text(", ".join(document.tags) + "\n", vocabulary, freeze))
    out.extend(_encode_field_text(document.lyrics, vocabulary, freeze))
    return out


def section_header_ids(segment: Segment, vocabulary: PatchVocabulary, freeze: bool = False) -> list[int]:
    """START, the label and lyric text, then SOA."""
    out: list[int] = [int(Marker.START)]
    out.extend(_encode_field_text(segment.label.name + "\n", vocabulary, freeze))
    out.extend(_encode_field_text(segment.lyric, vocabulary, freeze))
    out.append(int(Marker.SOA))
    return out


def serialize(document: CosDocument, vocabulary: PatchVocabulary, freeze: bool = False) -> list[int]:
    document.validate()
    out = preamble_ids(document, vocabulary, freeze)
    for segment in document.segments:
        out.extend(section_header_ids(segment, vocabulary, freeze))
        out.extend(segment.score.flat)
        out.append(int(Marker.EOA))
        out.append(int(Marker.END))
    out.append(int(Marker.EOD))
    return out


def _require_content(stream: list[int], lo: int, hi: int, region: str) -> list[int]:
    for k in range(lo, hi):
        if stream[k] < NUM_RESERVED:
            raise CosParseError(f"control token in {region} at position {k}")
    return stream[lo:hi]


def _require_score_ids(stream: list[int], lo: int, hi: int) -> list[int]:
    for k in range(lo, hi):
        tok = stream[k]
        if tok < NUM_RESERVED and tok != PAD_ID:
            raise CosParseError(f"control token in score region at position {k}")
    return stream[lo:hi]


def _find_marker(stream: list[int], start: int, wanted: int, region: str) -> int:
    for k in range(start, len(stream)):
        tok = stream[k]
        if tok == wanted:
            return k
        if tok in _MARKER_VALUES:
            raise CosParseError(f"unexpected {Marker(tok).name} in {region} at position {k}")
    raise CosParseError(f"unclosed {region}")


def parse(stream, vocabulary: PatchVocabulary) -> CosDocument:
    """Scan a flat stream back into a document.

    Raises CosParseError for any framing violation: marker out of
    place, unclosed region, odd score region, trailing tokens.
    """
    stream = [int(tok) for tok in stream]
    n = len(stream)

    first_frame = None
    for k, tok in enumerate(stream):
        if tok in (int(Marker.START), int(Marker.EOD)):
            first_frame = k
            break
    if first_frame is None:
        raise CosParseError("missing end-of-document marker")

    prefix_eoa = None
    for k in range(first_frame):
        if stream[k] == int(Marker.EOA):
            prefix_eoa = k
            break
        if stream[k] in _MARKER_VALUES:
            raise CosParseError(f"unexpected {Marker(stream[k]).name} in preamble at position {k}")

    icl_ref = None
    text_lo = 0
    if prefix_eoa is not None:
        ref_ids = _require_score_ids(stream, 0, prefix_eoa)
        if len(ref_ids) % 2:
            raise CosParseError("odd reference stream length")
        icl_ref = DualSequence.from_flat(ref_ids)
        text_lo = prefix_eoa + 1

    preamble_text = decode(_require_content(stream, text_lo, first_frame, "preamble"), vocabulary)
    parts = preamble_text.split("\n", 2)
    if len(parts) < 3:
        raise CosParseError("malformed preamble")
    instruct, tag_line, lyrics = parts
    tags = [t.strip() for t in tag_line.split(",") if t.strip()]

    segments: list[Segment] = []
    i = first_frame
    while True:
        tok = stream[i]
        if tok == int(Marker.EOD):
            break
        if tok != int(Marker.START):
            raise CosParseError(f"expected section start or end of document at position {i}")
        soa = _find_marker(stream, i + 1, int(Marker.SOA), "section header")
        header_text = decode(_require_content(stream, i + 1, soa, "section header"), vocabulary)
        header_parts = header_text.split("\n", 1)
        if len(header_parts) < 2:
            raise CosParseError(f"malformed section header at position {i}")
        label_name, lyric = header_parts
        eoa = _find_marker(stream, soa + 1, int(Marker.EOA), "score region")
        score_ids = _require_score_ids(stream, soa + 1, eoa)
        if len(score_ids) % 2:
            raise CosParseError("odd score region length")
        if eoa + 1 >= n or stream[eoa + 1] != int(Marker.END):
            raise CosParseError(f"expected section end at position {eoa + 1}")
        try:
            label = SectionLabel(label_name)
        except ValueError as exc:
            raise CosParseError(str(exc)) from None
        segments.append(Segment(label, lyric, DualSequence.from_flat(score_ids)))
        i = eoa + 2
        if i >= n:
            raise CosParseError("missing end-of-document marker")
    if i != n - 1:
        raise CosParseError("trailing tokens")
    return CosDocument(instruct, tags, lyrics, segments, icl_ref)


def scans(stream, vocabulary: PatchVocabulary) -> bool:
    """True when the stream parses as a well-formed document."""
    try:
        parse(stream, vocabulary)
    except CosError:
        return False
    return True


def _carries_music(bar) -> bool:
    """Bars that advance time; field lines and bare delimiters do not."""
    return not bar.is_field and bool(bar.events)


def _voice_emission(voice: Voice) -> list[tuple[str, int]]:
    """Unit texts in source order, each with its owning bar section index.

    Bars emit bare; a "\\n" unit closes each source line; lyric lines
    follow the line they align to.  Field lines and empty structural
    bars take the index of the next sounding bar so a segment slice
    carries its state changes and repeat marks.
    """
    bars = voice.bars
    musical_count = sum(1 for b in bars if _carries_music(b))
    musical_of: list[int] = []
    m = 0
    for bar in bars:
        if _carries_music(bar):
            musical_of.append(m)
            m += 1
        else:
            musical_of.append(min(m, max(musical_count - 1, 0)))

    groups: list[tuple[int, list[int]]] = []
    for index, bar in enumerate(bars):
        if groups and groups[-1][0] == bar.line_no:
            groups[-1][1].append(index)
        else:
            groups.append((bar.line_no, [index]))

    items: list[tuple[str, int]] = []
    gi = 0
    li = 0
    lyrics = voice.lyric_lines
    while gi < len(groups) or li < len(lyrics):
        if li >= len(lyrics) or (gi < len(groups) and groups[gi][0] <= lyrics[li].line_no):
            _, members = groups[gi]
            gi += 1
            for index in members:
                items.append((bars[index].source_text, musical_of[index]))
            items.append(("\n", musical_of[members[-1]]))
        else:
            line = lyrics[li]
            li += 1
            anchor = line.bar_end - 1
            section = musical_of[anchor] if 0 <= anchor < len(musical_of) else 0
            items.append((f"w:{line.raw.rstrip()}", section))
            items.append(("\n", section))
    return items


def _slice_ids(
    items: list[tuple[str, int]],
    lo: int,
    hi: int,
    vocabulary: PatchVocabulary,
    freeze: bool,
) -> list[int]:
    ids: list[int] = []
    for text, section in items:
        if lo <= section <= hi:
            for patch in encode_unit(text, vocabulary, freeze):
                ids.append(patch.id)
    return ids


@dataclass
class SidecarData:
    instruct: str = ""
    tags: list[str] = field(default_factory=list)
    sections: list[tuple[str, int, int]] = field(default_factory=list)  # 1-based inclusive bars


def read_sidecar(path) -> SidecarData:
    """Section annotations: label TAB start TAB end rows plus optional
    instruct: and tags: lines.  Bars count from 1, ends inclusive."""
    data = SidecarData()
    for line_no, raw in enumerate(Path(path).read_text().split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("instruct:"):
            data.instruct = line[len("instruct:") :].strip()
            continue
        if line.startswith("tags:"):
            data.tags = [t.strip() for t in line[len("tags:") :].split(",") if t.strip()]
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise CosFormatError(f"bad sidecar line {line_no}: {raw!r}")
        label, start_s, end_s = parts
        try:
            start, end = int(start_s), int(end_s)
        except ValueError:
            raise CosFormatError(f"bad sidecar span at line {line_no}: {raw!r}") from None
        data.sections.append((label.strip(), start, end))
    return data


def document_from_score(
    score: Score,
    vocabulary: PatchVocabulary,
    sidecar: SidecarData | None = None,
    freeze: bool = False,
) -> CosDocument:
    """Build a document from a parsed score.

    Sidecar sections slice the music by bar spans; without one the whole
    tune is a single "song" section.  File headers and voice
    declarations ride in the first section's streams so the decoded
    document stands alone.
    """
    vocal = score.vocal_voice
    others = [v for v in score.voices if v is not vocal]
    vocal_items = _voice_emission(vocal)
    musical_total = sum(1 for b in vocal.bars if _carries_music(b))
    if musical_total == 0:
        raise CosFormatError("score has no bars to segment")

    if sidecar is not None and sidecar.sections:
        sections = []
        for label, start, end in sidecar.sections:
            if not (1 <= start <= end <= musical_total):
                raise CosFormatError(
                    f"sidecar section span outside bar range: {label} {start}..{end} of {musical_total}"
                )
            sections.append((label, start, end))
    else:
        sections = [("song", 1, musical_total)]
    instruct = sidecar.instruct if sidecar is not None else ""
    tags = list(sidecar.tags) if sidecar is not None else []

    prelude = [(text, 0) for line in score_header_lines(score) for text in (line, "\n")]
    if vocal.declared:
        prelude += [(f"V:{vocal.id}{vocal.decl_extra}", 0), ("\n", 0)]
    vocal_items = prelude + vocal_items

    accomp_items: list[tuple[str, int]] = []
    for other in others:
        if other.declared:
            accomp_items += [(f"V:{other.id}{other.decl_extra}", 0), ("\n", 0)]
        accomp_items += _voice_emission(other)

    musical_of: list[int] = []
    m = 0
    for bar in vocal.bars:
        musical_of.append(m if _carries_music(bar) else min(m, max(musical_total - 1, 0)))
        if _carries_music(bar):
            m += 1

    segments: list[Segment] = []
    for label_name, start, end in sections:
        lo, hi = start - 1, end - 1
        vocal_ids = _slice_ids(vocal_items, lo, hi, vocabulary, freeze)
        accomp_ids = _slice_ids(accomp_items, lo, hi, vocabulary, freeze)
        lyric_lines = [
            line.raw.strip()
            for line in vocal.lyric_lines
            if line.bar_end > line.bar_start
            and musical_of[line.bar_start] <= hi
            and musical_of[line.bar_end - 1] >= lo
        ]
        segments.append(
            Segment(SectionLabel(label_name), "\n".join(lyric_lines), interleave(vocal_ids, accomp_ids))
        )

    lyrics = "\n".join(line.raw.strip() for line in vocal.lyric_lines)
    return CosDocument(instruct, tags, lyrics, segments)


class ReferenceDurationWarning(UserWarning):
    pass


def reference_stream(score: Score, vocabulary: PatchVocabulary, freeze: bool = False) -> DualSequence:
    """Dual stream of a style reference excerpt.

    Warns when the excerpt plays for less than 15 or more than 60
    seconds; half a minute of material is the intended scale.
    """
    seconds = estimate_duration(score)
    if not 15 <= seconds <= 60:
        warnings.warn(
            f"reference excerpt duration {float(seconds):.1f} s outside 15-60 s",
            ReferenceDurationWarning,
            stacklevel=2,
        )
    document = document_from_score(score, vocabulary, None, freeze)
    flat: list[int] = []
    for segment in document.segments:
        flat.extend(segment.score.flat)
    return DualSequence.from_flat(flat)


def document_to_abc(document: CosDocument, vocabulary: PatchVocabulary) -> str:
    """Assemble a document's score regions into tune text.

    Vocal sides concatenate first, then accompaniment sides.  When the
    result lacks usable headers a minimal prelude is supplied so the
    output still parses."""
    vocal_parts: list[str] = []
    accomp_parts: list[str] = []
    for segment in document.segments:
        vocal_ids, accomp_ids = deinterleave(segment.score)
        vocal_parts.append(decode(vocal_ids, vocabulary))
        accomp_parts.append(decode(accomp_ids, vocabulary))
    text = "".join(vocal_parts)
    accomp = "".join(accomp_parts)
    if accomp.strip():
        if text and not text.endswith("\n"):
            text += "\n"
        text += accomp
    if text and not text.endswith("\n"):
        text += "\n"
    if parse_score(text).ok:
        return text
    fallback = "X:1\nM:4/4\nL:1/8\nQ:1/4=120\nK:C\nV:1\n" + text
    return fallback if parse_score(fallback).ok else text


class CorpusWriter:
    """Streaming writer for the binary corpus format.

    Layout: magic COS1, then per document a little-endian u64 token
    count followed by that many little-endian u32 ids.
    """

    def __init__(self, path):
        self._fp = open(path, "wb")
        self._fp.write(CORPUS_MAGIC)
        self.documents = 0

    def add(self, stream: list[int]) -> None:
        self._fp.write(struct.pack("<Q", len(stream)))
        self._fp.write(struct.pack(f"<{len(stream)}I", *stream))
        self.documents += 1

    def close(self) -> None:
        self._fp.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def read_corpus(path):
    """Yield each document's token stream."""
    with open(path, "rb") as fp:
        if fp.read(len(CORPUS_MAGIC)) != CORPUS_MAGIC:
            raise CosFormatError("bad corpus file magic")
        while True:
            head = fp.read(8)
            if not head:
                return
            if len(head) < 8:
                raise CosFormatError("truncated corpus file")
            (count,) = struct.unpack("<Q", head)
            body = fp.read(4 * count)
            if len(body) < 4 * count:
                raise CosFormatError("truncated corpus file")
            yield list(struct.unpack(f"<{count}I", body))


@dataclass
class BuildStats:
    documents: int = 0
    tokens: int = 0
    segments: int = 0
    skipped: list[tuple[str, str]] = field(default_factory=list)


def build_corpus(abc_dir, sidecar_dir, vocabulary: PatchVocabulary, out_path) -> BuildStats:
    """Serialize every tune under abc_dir into one corpus file.

    Sidecars match by stem with extension .sections.  Unreadable or
    unparseable tunes and bad section spans skip the file with a
    recorded reason rather than failing the build.
    """
    stats = BuildStats()
    with CorpusWriter(out_path) as writer:
        for path in sorted(Path(abc_dir).glob("*.abc")):
            try:
                text = path.read_text()
            except (OSError, UnicodeDecodeError) as exc:
                stats.skipped.append((path.name, str(exc)))
                continue
            result = parse_score(text)
            if result.score is None:
                reasons = "; ".join(str(d) for d in result.errors)
                stats.skipped.append((path.name, reasons or "unparseable"))
                continue
            sidecar = None
            if sidecar_dir is not None:
                sidecar_path = Path(sidecar_dir) / f"{path.stem}.sections"
                if sidecar_path.exists():
                    try:
                        sidecar = read_sidecar(sidecar_path)
                    except CosFormatError as exc:
                        stats.skipped.append((path.name, str(exc)))
                        continue
            try:
                document = document_from_score(result.score, vocabulary, sidecar)
            except CosFormatError as exc:
                stats.skipped.append((path.name, str(exc)))
                continue
            stream = serialize(document, vocabulary)
            writer.add(stream)
            stats.documents += 1
            stats.tokens += len(stream)
            stats.segments += len(document.segments)
    return stats
