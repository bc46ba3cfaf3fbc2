from pathlib import Path

import pytest

from barscore import PatchVocabulary, parse_or_raise
from barscore.chain_of_score import build_corpus

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return DATA / "corpus"


@pytest.fixture(scope="session")
def sidecar_dir() -> Path:
    return DATA / "sidecars"


@pytest.fixture(scope="session")
def prompt_dir() -> Path:
    return DATA / "prompts"


@pytest.fixture(scope="session")
def corpus_texts(corpus_dir) -> dict[str, str]:
    return {p.name: p.read_text() for p in sorted(corpus_dir.glob("*.abc"))}


@pytest.fixture(scope="session")
def corpus_scores(corpus_texts):
    return {name: parse_or_raise(text) for name, text in corpus_texts.items()}


@pytest.fixture(scope="session")
def built_corpus(tmp_path_factory, corpus_dir, sidecar_dir):
    """(vocabulary, corpus path, build stats) over the bundled tunes."""
    out = tmp_path_factory.mktemp("corpus") / "corpus.bin"
    vocabulary = PatchVocabulary()
    stats = build_corpus(corpus_dir, sidecar_dir, vocabulary, out)
    assert not stats.skipped, stats.skipped
    return vocabulary, out, stats


@pytest.fixture()
def vocabulary() -> PatchVocabulary:
    return PatchVocabulary()


@pytest.fixture(scope="session")
def range_fixture_text() -> str:
    return (DATA / "range_c4_g4.abc").read_text()


@pytest.fixture(scope="session")
def eight_bar_text() -> str:
    return (DATA / "eight_bars.abc").read_text()
