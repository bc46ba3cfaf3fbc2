#!/usr/bin/env python3
"""Build a corpus, fit a model and decode one song end to end.

Defaults point at the bundled tune set, so a bare run works from the
repository root and leaves every artifact under out/pipeline:

    python3 scripts/run_pipeline.py
    python3 scripts/run_pipeline.py --order 4 --seed 11 --mode greedy
"""

import argparse
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
try:
    import barscore  # noqa: F401
except ImportError:
    sys.path.insert(0, str(ROOT / "src"))

from barscore.abc_parser import parse_score
from barscore.analysis import TempoDefaultWarning, estimate_duration, vocal_range
from barscore.chain_of_score import (
    CosDocument,
    Segment,
    SectionLabel,
    build_corpus,
    document_to_abc,
)
from barscore.decoding import generate
from barscore.dualstream import DualSequence
from barscore.midi import write_midi_file
from barscore.ngram import fit_ngram
from barscore.patching import PatchVocabulary
from barscore.sampling import SamplingParams


@dataclass
class PipelineConfig:
    tunes: Path
    sidecars: Path | None
    out_dir: Path
    order: int
    seed: int
    mode: str
    max_new_tokens: int
    sections: list[str]
    lyrics: list[str]


def parse_args(argv=None) -> PipelineConfig:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--tunes", type=Path, default=ROOT / "tests" / "data" / "corpus")
    parser.add_argument("--sidecars", type=Path, default=ROOT / "tests" / "data" / "sidecars")
    parser.add_argument("--out-dir", type=Path, default=ROOT / "out" / "pipeline")
    parser.add_argument("--order", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--mode", choices=("sample", "greedy"), default="sample")
    parser.add_argument("--max-new-tokens", type=int, default=600)
    parser.add_argument(
        "--sections", default="verse,chorus",
        help="comma-separated section labels for the prompt",
    )
    parser.add_argument(
        "--lyric", action="append", dest="lyrics",
        help="one lyric line per section (repeatable)",
    )
    args = parser.parse_args(argv)
    sections = [s.strip() for s in args.sections.split(",") if s.strip()]
    lyrics = args.lyrics or ["Morning on the hillside", "sing the river down"]
    if len(lyrics) < len(sections):
        lyrics = (lyrics * len(sections))[: len(sections)]
    return PipelineConfig(
        tunes=args.tunes,
        sidecars=args.sidecars if args.sidecars and args.sidecars.exists() else None,
        out_dir=args.out_dir,
        order=args.order,
        seed=args.seed,
        mode=args.mode,
        max_new_tokens=args.max_new_tokens,
        sections=sections,
        lyrics=lyrics,
    )


def main(argv=None) -> int:
    config = parse_args(argv)
    config.out_dir.mkdir(parents=True, exist_ok=True)

    vocabulary = PatchVocabulary()
    corpus_path = config.out_dir / "songs.corpus"
    stats = build_corpus(config.tunes, config.sidecars, vocabulary, corpus_path)
    print(f"corpus: {stats.documents} documents, {stats.tokens} tokens "
          f"({len(stats.skipped)} skipped)")
    for name, reason in stats.skipped:
        print(f"  skipped {name}: {reason}")

    vocab_path = config.out_dir / "patches.vocab"
    vocabulary.save(vocab_path)
    model = fit_ngram(
        corpus_path, order=config.order,
        vocab_size=len(vocabulary), vocab_hash=vocabulary.sha256(),
    )
    print(f"model: order {config.order}, {model.total_tokens} tokens, "
          f"vocabulary {len(vocabulary)}")

    prompt = CosDocument(
        instruct="a short folk song",
        tags=["folk", "demo"],
        lyrics="\n".join(config.lyrics),
        segments=[
            Segment(SectionLabel(label), lyric, DualSequence([]))
            for label, lyric in zip(config.sections, config.lyrics)
        ],
    )
    params = SamplingParams(seed=config.seed, max_new_tokens=config.max_new_tokens)
    result = generate(model, prompt, params, vocabulary, mode=config.mode)
    print(f"decode: {result.info['emitted_tokens']} tokens emitted, "
          f"{result.info['forced_terminators']} terminators forced")

    text = document_to_abc(result.document, vocabulary)
    abc_path = config.out_dir / "song.abc"
    abc_path.write_text(text)
    score = parse_score(text).score
    midi_path = config.out_dir / "song.mid"
    write_midi_file(score, midi_path)

    print(f"wrote {abc_path}")
    print(f"wrote {midi_path} ({midi_path.stat().st_size} bytes)")
    with warnings.catch_warnings():
        # a decoded tune may omit its tempo header; the default is fine here
        warnings.simplefilter("ignore", TempoDefaultWarning)
        seconds = float(estimate_duration(score))
        span = vocal_range(score)
    print(f"song: {len(score.voices)} voices, {seconds:.1f} s, "
          f"vocal range {span} semitones")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
