"""Command line front end.

One subcommand per pipeline stage: validate, tokenize, detokenize,
build-corpus, fit, generate, render, stats.  Domain failures print a
one-line error and exit 1; argparse problems do the same.
"""

import argparse
import hashlib
import json
import os
import sys
import traceback
from pathlib import Path

from .abc_parser import parse_score
from .analysis import estimate_duration, vocal_range
from .chain_of_score import (
    CosDocument,
    CosError,
    Marker,
    Segment,
    SectionLabel,
    build_corpus,
    document_to_abc,
    parse,
    reference_stream,
)
from .decoding import DecodeError, generate
from .dualstream import DualSequence, DualStreamError
from .midi import MidiError, write_midi_file, write_stems
from .ngram import NGramError, NGramModel, fit_ngram
from .patching import PatchError, PatchVocabulary, decode, encode_score
from .sampling import SamplingParams
from .score import ScoreError

ENV_CONFIG = "BARSCORE_CONFIG"

_MARKER_IDS = {int(m) for m in Marker}

_PARAM_NAMES = (
    "top_k",
    "top_p",
    "temperature",
    "repetition_penalty",
    "cfg_scale",
    "max_new_tokens",
    "seed",
)


class CliError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(1)


def _file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_vocabulary(path, must_exist: bool) -> PatchVocabulary:
    path = Path(path)
    if path.exists():
        return PatchVocabulary.load(path)
    if must_exist:
        raise CliError(f"vocabulary file not found: {path}")
    return PatchVocabulary()


def _parse_abc_file(path):
    result = parse_score(Path(path).read_text())
    if result.score is None:
        for diagnostic in result.diagnostics:
            print(f"{path}:{diagnostic}", file=sys.stderr)
        raise CliError(f"cannot parse {path}")
    return result.score


def _read_id_rows(path) -> list[list[int]]:
    rows: list[list[int]] = []
    for raw in Path(path).read_text().split("\n"):
        tokens = raw.split()
        if not tokens:
            continue
        try:
            rows.append([int(tok) for tok in tokens])
        except ValueError as exc:
            raise CliError(f"bad token id in {path}: {exc}") from None
    return rows


def _dump_id_rows(sequence) -> str:
    """One file row per source line, so line breaks survive the dump."""
    rows: list[list[str]] = []
    previous = object()
    for patch, origin in zip(sequence.patches, sequence.origins):
        line = None if origin is None else origin.line
        if not rows or line != previous:
            rows.append([])
        rows[-1].append(str(patch.id))
        previous = line
    return "".join(" ".join(row) + "\n" for row in rows)


def _write_text(path, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_validate(args) -> int:
    failed = False
    for path in args.paths:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            print(f"{path}:error:0:0:{exc}")
            failed = True
            continue
        result = parse_score(text)
        if not result.diagnostics:
            print(f"{path}: ok")
        for diagnostic in result.diagnostics:
            print(f"{path}:{diagnostic}")
        if result.errors:
            failed = True
    return 1 if failed else 0


def cmd_tokenize(args) -> int:
    vocabulary = _load_vocabulary(args.vocab, must_exist=args.freeze)
    text = Path(args.path).read_text()
    result = parse_score(text)
    if result.score is None:
        for diagnostic in result.diagnostics:
            print(f"{args.path}:{diagnostic}", file=sys.stderr)
        raise CliError(f"cannot parse {args.path}")
    sequence = encode_score(text, vocabulary, freeze=args.freeze)
    _write_text(args.out, _dump_id_rows(sequence))
    if not args.freeze:
        vocabulary.save(args.vocab)
    return 0


def cmd_detokenize(args) -> int:
    vocabulary = _load_vocabulary(args.vocab, must_exist=True)
    rows = _read_id_rows(args.ids)
    flat = [pid for row in rows for pid in row]
    if any(pid in _MARKER_IDS for pid in flat):
        text = document_to_abc(parse(flat, vocabulary), vocabulary)
    else:
        pieces = [decode(row, vocabulary) for row in rows]
        text = "\n".join(piece for piece in pieces if piece)
        if text and not text.endswith("\n"):
            text += "\n"
    _write_text(args.out, text)
    return 0


def cmd_build_corpus(args) -> int:
    vocabulary = _load_vocabulary(args.vocab, must_exist=False)
    stats = build_corpus(args.dir, args.sidecars, vocabulary, args.out)
    for name, reason in stats.skipped:
        print(f"skipped {name}: {reason}", file=sys.stderr)
    if stats.documents == 0:
        raise CliError("no documents built")
    vocabulary.save(args.vocab)
    print(f"documents\t{stats.documents}")
    print(f"segments\t{stats.segments}")
    print(f"tokens\t{stats.tokens}")
    print(f"vocabulary\t{len(vocabulary)}")
    return 0


def cmd_fit(args) -> int:
    vocabulary = _load_vocabulary(args.vocab, must_exist=True)
    model = fit_ngram(
        args.corpus,
        order=args.order,
        vocab_size=len(vocabulary),
        vocab_hash=vocabulary.sha256(),
        backoff_weight=args.backoff,
    )
    model.save(args.out)
    print(f"order\t{model.order}")
    print(f"vocab_size\t{model.vocab_size}")
    print(f"tokens\t{model.total_tokens}")
    return 0


def _read_prompt(path) -> CosDocument:
    """Prompt file: instruct/tags lines, a lyrics block, then one
    section: line per segment with its lyric lines below it."""
    document = CosDocument()
    section_label = None
    section_lines: list[str] = []
    lyric_lines: list[str] = []
    in_lyrics = False

    def close_section():
        nonlocal section_label, section_lines
        if section_label is not None:
            document.segments.append(
                Segment(SectionLabel(section_label), "\n".join(section_lines), DualSequence([]))
            )
        section_label = None
        section_lines = []

    for raw in Path(path).read_text().split("\n"):
        line = raw.rstrip()
        if line.startswith("section:"):
            close_section()
            section_label = line[len("section:") :].strip()
            if not section_label:
                raise CliError(f"empty section label in {path}")
            in_lyrics = False
        elif section_label is not None:
            if line:
                section_lines.append(line)
        elif line.startswith("instruct:"):
            document.instruct = line[len("instruct:") :].strip()
        elif line.startswith("tags:"):
            document.tags = [t.strip() for t in line[len("tags:") :].split(",") if t.strip()]
        elif line.startswith("lyrics:"):
            in_lyrics = True
            rest = line[len("lyrics:") :].strip()
            if rest:
                lyric_lines.append(rest)
        elif in_lyrics and line:
            lyric_lines.append(line)
        elif line:
            raise CliError(f"unrecognized prompt line: {line!r}")
    close_section()
    document.lyrics = "\n".join(lyric_lines)
    if not document.segments:
        raise CliError("prompt needs at least one section")
    return document


def _merged_params(args) -> tuple[SamplingParams, str]:
    settings: dict = {}
    mode = None
    config_path = args.config or os.environ.get(ENV_CONFIG)
    if config_path:
        with open(config_path) as fp:
            config = json.load(fp)
        if not isinstance(config, dict):
            raise CliError("config must be a JSON object")
        mode = config.pop("mode", None)
        unknown = set(config) - set(_PARAM_NAMES)
        if unknown:
            raise CliError(f"unknown config keys: {', '.join(sorted(unknown))}")
        settings.update(config)
    for name in _PARAM_NAMES:
        value = getattr(args, name)
        if value is not None:
            settings[name] = value
    if args.mode is not None:
        mode = args.mode
    try:
        params = SamplingParams(**settings)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad sampling settings: {exc}") from None
    return params, mode or "sample"


def cmd_generate(args) -> int:
    vocabulary = _load_vocabulary(args.vocab, must_exist=True)
    vocab_hash = vocabulary.sha256()      # before prompt text grows it
    model = NGramModel.load(args.model)
    if model.vocab_hash and model.vocab_hash != vocab_hash:
        raise CliError("model was fit against a different vocabulary")
    params, mode = _merged_params(args)
    document = _read_prompt(args.prompt)
    if args.icl_ref:
        document.icl_ref = reference_stream(_parse_abc_file(args.icl_ref), vocabulary)
    result = generate(model, document, params, vocabulary, mode=mode)

    prefix = Path(args.out_prefix)
    if prefix.parent != Path("."):
        prefix.parent.mkdir(parents=True, exist_ok=True)
    abc_path = Path(f"{args.out_prefix}.abc")
    tokens_path = Path(f"{args.out_prefix}.tokens")
    vocab_path = Path(f"{args.out_prefix}.vocab")
    meta_path = Path(f"{args.out_prefix}.json")
    abc_path.write_text(document_to_abc(result.document, vocabulary))
    tokens_path.write_text("".join(f"{tok}\n" for tok in result.stream))
    # prompt text may have grown the vocabulary; the emitted copy is the
    # one that detokenizes PREFIX.tokens
    vocabulary.save(vocab_path)
    meta = dict(result.info)
    meta["vocab_sha256"] = vocab_hash
    meta["output_vocab_sha256"] = vocabulary.sha256()
    meta["model_sha256"] = _file_sha256(args.model)
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"wrote {abc_path} {tokens_path} {vocab_path} {meta_path}")
    return 0


def cmd_render(args) -> int:
    score = _parse_abc_file(args.path)
    size = write_midi_file(score, args.out)
    print(f"wrote {args.out} ({size} bytes)")
    if args.stems:
        for path in write_stems(score, args.stems, Path(args.out).stem):
            print(f"wrote {path}")
    return 0


def cmd_stats(args) -> int:
    print("path\tvoices\tbars\tseconds\trange")
    for path in args.paths:
        score = _parse_abc_file(path)
        bars = max(sum(1 for b in v.bars if not b.is_field and b.events) for v in score.voices)
        seconds = float(estimate_duration(score))
        try:
            span = str(vocal_range(score))
        except ScoreError:
            span = "-"
        print(f"{path}\t{len(score.voices)}\t{bars}\t{seconds:.1f}\t{span}")
    return 0


def build_parser() -> _ArgumentParser:
    parser = _ArgumentParser(prog="barscore", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", action="store_true", help="tracebacks on internal errors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse tunes and report diagnostics")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("tokenize", help="encode a tune as patch ids")
    p.add_argument("path")
    p.add_argument("--vocab", required=True)
    p.add_argument("--freeze", action="store_true", help="reject patches missing from the vocabulary")
    p.add_argument("--out")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("detokenize", help="decode patch ids back to text")
    p.add_argument("ids", help="file of token ids, one source line per row")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_detokenize)

    p = sub.add_parser("build-corpus", help="serialize a tune directory into one corpus file")
    p.add_argument("dir")
    p.add_argument("--sidecars", help="directory of .sections files")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_corpus)

    p = sub.add_parser("fit", help="fit an n-gram model over a corpus")
    p.add_argument("corpus")
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backoff", type=float, default=0.1)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("generate", help="decode a song from a prompt")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--mode", choices=("sample", "greedy"))
    p.add_argument("--icl-ref", help="tune file used as a style reference")
    p.add_argument("--config", help=f"JSON defaults (or ${ENV_CONFIG})")
    p.add_argument("--top-k", type=int, dest="top_k")
    p.add_argument("--top-p", type=float, dest="top_p")
    p.add_argument("--temperature", type=float)
    p.add_argument("--repetition-penalty", type=float, dest="repetition_penalty")
    p.add_argument("--cfg-scale", type=float, dest="cfg_scale")
    p.add_argument("--max-new-tokens", type=int, dest="max_new_tokens")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("render", help="write a standard MIDI file")
    p.add_argument("path")
    p.add_argument("--out", required=True)
    p.add_argument("--stems", help="directory for per-voice files")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("stats", help="tabulate voice, bar, duration and range figures")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (
        ScoreError,
        PatchError,
        CosError,
        DualStreamError,
        NGramError,
        DecodeError,
        MidiError,
        OSError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        if args.verbose:
            traceback.print_exc()
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
