#!/usr/bin/env python3
"""Sweep sampling settings and tabulate decode quality measures.

For every (temperature, top_p, cfg_scale) cell the script decodes a
batch of seeded songs and reports the share that validate, the mean
emitted token count, the mean tune duration and the distinct-token
ratio inside score regions.  A compact table goes to stdout; pass
--json to keep the raw cell records.

    python3 scripts/sampling_sweep.py
    python3 scripts/sampling_sweep.py --temperatures 0.7,1.0,1.3 --seeds 10
"""

import argparse
import json
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
from barscore.analysis import TempoDefaultWarning, estimate_duration
from barscore.chain_of_score import (
    CosDocument,
    Marker,
    Segment,
    SectionLabel,
    build_corpus,
    document_to_abc,
)
from barscore.decoding import generate
from barscore.dualstream import DualSequence
from barscore.ngram import fit_ngram
from barscore.patching import NUM_RESERVED, PatchVocabulary
from barscore.sampling import SamplingParams


@dataclass
class SweepConfig:
    tunes: Path
    sidecars: Path | None
    order: int
    seeds: int
    max_new_tokens: int
    temperatures: list[float]
    top_ps: list[float]
    cfg_scales: list[float]
    json_path: Path | None


def _floats(text: str) -> list[float]:
    return [float(piece) for piece in text.split(",") if piece.strip()]


def parse_args(argv=None) -> SweepConfig:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--tunes", type=Path, default=ROOT / "tests" / "data" / "corpus")
    parser.add_argument("--sidecars", type=Path, default=ROOT / "tests" / "data" / "sidecars")
    parser.add_argument("--order", type=int, default=3)
    parser.add_argument("--seeds", type=int, default=5, help="generations per cell")
    parser.add_argument("--max-new-tokens", type=int, default=400)
    parser.add_argument("--temperatures", type=_floats, default=[0.8, 1.0, 1.2])
    parser.add_argument("--top-ps", type=_floats, default=[0.85, 0.93, 1.0])
    parser.add_argument("--cfg-scales", type=_floats, default=[1.0, 1.5])
    parser.add_argument("--json", type=Path, dest="json_path")
    args = parser.parse_args(argv)
    return SweepConfig(
        tunes=args.tunes,
        sidecars=args.sidecars if args.sidecars and args.sidecars.exists() else None,
        order=args.order,
        seeds=args.seeds,
        max_new_tokens=args.max_new_tokens,
        temperatures=args.temperatures,
        top_ps=args.top_ps,
        cfg_scales=args.cfg_scales,
        json_path=args.json_path,
    )


def _prompt() -> CosDocument:
    return CosDocument(
        instruct="a lilting tune",
        tags=["folk"],
        lyrics="Morning on the hillside\nsing the river down",
        segments=[
            Segment(SectionLabel("verse"), "Morning on the hillside", DualSequence([])),
            Segment(SectionLabel("chorus"), "sing the river down", DualSequence([])),
        ],
    )


def _score_region_tokens(stream: list[int]) -> list[int]:
    tokens = []
    inside = False
    for token in stream:
        if token == int(Marker.SOA):
            inside = True
        elif token == int(Marker.EOA):
            inside = False
        elif inside and token >= NUM_RESERVED:
            tokens.append(token)
    return tokens


def run_cell(model, vocabulary, config: SweepConfig, temperature, top_p, cfg_scale) -> dict:
    valid = 0
    emitted = []
    durations = []
    distinct = []
    for seed in range(config.seeds):
        params = SamplingParams(
            temperature=temperature, top_p=top_p, cfg_scale=cfg_scale,
            seed=seed, max_new_tokens=config.max_new_tokens,
        )
        result = generate(model, _prompt(), params, vocabulary)
        emitted.append(result.info["emitted_tokens"])
        text = document_to_abc(result.document, vocabulary)
        outcome = parse_score(text)
        if outcome.score is not None and not outcome.errors:
            valid += 1
            with warnings.catch_warnings():
                # decoded tunes may omit the tempo header
                warnings.simplefilter("ignore", TempoDefaultWarning)
                durations.append(float(estimate_duration(outcome.score)))
        region = _score_region_tokens(result.stream)
        if region:
            distinct.append(len(set(region)) / len(region))
    return {
        "temperature": temperature,
        "top_p": top_p,
        "cfg_scale": cfg_scale,
        "valid": valid / config.seeds,
        "mean_tokens": sum(emitted) / len(emitted),
        "mean_seconds": sum(durations) / len(durations) if durations else None,
        "distinct_ratio": sum(distinct) / len(distinct) if distinct else None,
    }


def main(argv=None) -> int:
    config = parse_args(argv)
    vocabulary = PatchVocabulary()
    corpus_path = Path("sweep.corpus")
    try:
        stats = build_corpus(config.tunes, config.sidecars, vocabulary, corpus_path)
        model = fit_ngram(
            corpus_path, order=config.order,
            vocab_size=len(vocabulary), vocab_hash=vocabulary.sha256(),
        )
    finally:
        corpus_path.unlink(missing_ok=True)
    print(f"fit order {config.order} over {stats.documents} documents, "
          f"{config.seeds} seeds per cell\n")

    header = f"{'temp':>5} {'top_p':>6} {'cfg':>4} {'valid':>6} {'tokens':>7} {'secs':>6} {'distinct':>8}"
    print(header)
    print("-" * len(header))
    cells = []
    for temperature in config.temperatures:
        for top_p in config.top_ps:
            for cfg_scale in config.cfg_scales:
                cell = run_cell(model, vocabulary, config, temperature, top_p, cfg_scale)
                cells.append(cell)
                secs = "-" if cell["mean_seconds"] is None else f"{cell['mean_seconds']:.1f}"
                ratio = "-" if cell["distinct_ratio"] is None else f"{cell['distinct_ratio']:.3f}"
                print(f"{temperature:>5.2f} {top_p:>6.2f} {cfg_scale:>4.1f} "
                      f"{cell['valid']:>6.2f} {cell['mean_tokens']:>7.1f} "
                      f"{secs:>6} {ratio:>8}")

    if config.json_path:
        config.json_path.write_text(json.dumps(cells, indent=2) + "\n")
        print(f"\nwrote {config.json_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
