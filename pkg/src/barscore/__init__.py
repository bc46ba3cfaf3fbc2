"""Bar-level song tooling: tune parsing, patch tokenization, paired
vocal/accompaniment streams, sectioned song documents, n-gram fitting,
guided decoding and MIDI rendering.

The usual round trip:

    result = parse_score(text)
    vocabulary = PatchVocabulary()
    document = document_from_score(result.score, vocabulary)
    stream = serialize_document(document, vocabulary)
    back = parse_document(stream, vocabulary)
"""

from .abc_parser import ParseResult, parse_or_raise, parse_score
from .analysis import (
    AlignedSyllable,
    AlignmentWarning,
    TempoDefaultWarning,
    align_lyrics,
    estimate_duration,
    vocal_range,
)
from .chain_of_score import (
    CANONICAL_SECTIONS,
    BuildStats,
    CorpusWriter,
    CosDocument,
    CosError,
    CosFormatError,
    CosParseError,
    Marker,
    SectionLabel,
    Segment,
    SidecarData,
    build_corpus,
    document_from_score,
    document_to_abc,
    read_corpus,
    read_sidecar,
    reference_stream,
)
from .chain_of_score import parse as parse_document
from .chain_of_score import serialize as serialize_document
from .decoding import (
    DecodeError,
    DecodeState,
    GenerationResult,
    NextPairModel,
    audio_scope_mask,
    generate,
    next_pair,
)
from .dualstream import (
    DualSequence,
    DualStep,
    DualStreamError,
    deinterleave,
    interleave,
    pair_streams,
    read_flat_binary,
    read_steps_text,
    split_tracks,
    write_flat_binary,
    write_steps_text,
)
from .midi import (
    MidiDocument,
    MidiError,
    MidiEvent,
    MidiTrack,
    score_to_midi,
    write_midi_file,
    write_smf,
    write_stems,
)
from .ngram import NGramError, NGramModel, fit_ngram
from .patching import (
    NUM_RESERVED,
    PATCH_SIZE,
    NonAsciiPatchError,
    Patch,
    PatchError,
    PatchSequence,
    PatchVocabulary,
    UnknownPatchError,
    canonical_text,
    decode,
    encode_score,
    encode_text,
    encode_unit,
    has_lossy_padding,
    segment_units,
)
from .sampling import (
    SamplingParams,
    apply_repetition_penalty,
    apply_temperature,
    cfg_combine,
    filter_top_k_top_p,
    softmax,
)
from .score import (
    Bar,
    Diagnostic,
    Event,
    Headers,
    Key,
    LyricLine,
    LyricSyllable,
    Meter,
    Pitch,
    PitchResolver,
    Score,
    ScoreError,
    Tempo,
    Voice,
    parse_key,
    print_score,
    unroll_repeats,
)

__version__ = "0.1.0"
