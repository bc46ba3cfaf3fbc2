"""Frame-forced decoding: masks, budget, determinism, invariants."""

import numpy as np
import pytest

from barscore.chain_of_score import (
    CosDocument,
    Marker,
    SectionLabel,
    Segment,
    parse,
    serialize,
)
from barscore.decoding import (
    DecodeError,
    DecodeState,
    audio_scope_mask,
    generate,
    next_pair,
)
from barscore.dualstream import DualSequence
from barscore.ngram import NGramModel, fit_ngram
from barscore.patching import BOS_ID, EOA_ID, NUM_RESERVED, PAD_ID, PatchVocabulary
from barscore.sampling import SamplingParams


class StubModel:
    """Fixed logits, optionally switched on context length parity."""

    def __init__(self, vocab_size, logits, odd_logits=None):
        self.vocab_size = vocab_size
        self._even = np.asarray(logits, dtype=np.float64)
        self._odd = self._even if odd_logits is None else np.asarray(odd_logits, np.float64)

    def next_logits(self, context):
        return (self._even if len(context) % 2 == 0 else self._odd).copy()


def logits_favoring(vocab_size, *ranked):
    out = np.zeros(vocab_size)
    for height, tok in enumerate(reversed(ranked), start=1):
        out[tok] = float(height)
    return out


def fresh_state(cfg=False):
    return DecodeState(
        phase="audio",
        uncond_context=[] if cfg else None,
        budget_left=1000,
        rng=np.random.default_rng(0),
    )


GREEDY = SamplingParams(top_k=0, top_p=1.0, repetition_penalty=1.0, cfg_scale=1.0)


def prompt_document(labels=("verse",), section_lyrics=("la la",), **fields):
    segments = [
        Segment(SectionLabel(name), lyric, DualSequence.from_flat([]))
        for name, lyric in zip(labels, section_lyrics)
    ]
    return CosDocument(segments=segments, **fields)


class TestAudioScopeMask:
    def test_content_and_pad_admissible(self):
        mask = audio_scope_mask(12, allow_eoa=False)
        assert mask[PAD_ID]
        assert mask[NUM_RESERVED:].all()
        assert not mask[BOS_ID]
        assert not mask[int(Marker.START)]
        assert not mask[EOA_ID]

    def test_eoa_opt_in(self):
        assert audio_scope_mask(12, allow_eoa=True)[EOA_ID]


class TestNextPair:
    def test_requires_audio_phase(self):
        model = StubModel(12, logits_favoring(12, 8))
        state = fresh_state()
        state.phase = "text"
        with pytest.raises(DecodeError, match="outside a score region"):
            next_pair(model, state, GREEDY, mode="greedy")

    def test_emits_a_pair(self):
        model = StubModel(12, logits_favoring(12, 10), logits_favoring(12, 11))
        state = fresh_state()
        assert next_pair(model, state, GREEDY, mode="greedy") == (10, 11)
        assert state.context == [10, 11]
        assert state.pairs_emitted == 1
        assert state.phase == "audio"

    def test_vocal_eoa_closes_region(self):
        model = StubModel(12, logits_favoring(12, EOA_ID, 10))
        state = fresh_state()
        assert next_pair(model, state, GREEDY, mode="greedy") == (EOA_ID, None)
        assert state.phase == "text"
        assert state.pairs_emitted == 0

    def test_accomp_side_cannot_close(self):
        # the odd-position favorite is EOA, but the mask forbids it there
        model = StubModel(
            12, logits_favoring(12, 10), logits_favoring(12, EOA_ID, 11)
        )
        state = fresh_state()
        assert next_pair(model, state, GREEDY, mode="greedy") == (10, 11)

    def test_markers_never_sampled_as_content(self):
        model = StubModel(12, logits_favoring(12, int(Marker.START), BOS_ID, 9))
        state = fresh_state()
        assert next_pair(model, state, GREEDY, mode="greedy")[0] == 9

    def test_pad_is_a_legal_step_side(self):
        model = StubModel(12, logits_favoring(12, PAD_ID, 9))
        state = fresh_state()
        assert next_pair(model, state, GREEDY, mode="greedy") == (PAD_ID, PAD_ID)

    def test_no_admissible_token(self):
        model = StubModel(12, np.full(12, -np.inf))
        with pytest.raises(DecodeError, match="no admissible token"):
            next_pair(model, fresh_state(), GREEDY, mode="greedy")

    def test_budget_charged_per_token(self):
        model = StubModel(12, logits_favoring(12, 10))
        state = fresh_state()
        next_pair(model, state, GREEDY, mode="greedy")
        assert state.budget_left == 998


class TestGenerateWithStub:
    def test_eager_closer_yields_empty_sections(self, vocabulary):
        model = StubModel(64, logits_favoring(64, EOA_ID, 20))
        doc = prompt_document(("verse", "chorus"), ("one", "two"))
        out = generate(model, doc, GREEDY, vocabulary, mode="greedy")
        assert [len(s.score) for s in out.document.segments] == [0, 0]
        assert out.info["emitted_tokens"] == 2
        assert out.info["forced_terminators"] == 0

    def test_budget_forces_section_close(self, vocabulary):
        model = StubModel(64, logits_favoring(64, 20), logits_favoring(64, 21))
        doc = prompt_document(("verse", "chorus"), ("one", "two"))
        params = SamplingParams(
            top_k=0, top_p=1.0, repetition_penalty=1.0, cfg_scale=1.0, max_new_tokens=3
        )
        out = generate(model, doc, params, vocabulary, mode="greedy")
        assert out.info["forced_terminators"] == 2
        assert out.info["emitted_tokens"] == 2
        assert [len(s.score.flat) for s in out.document.segments] == [2, 0]
        assert parse(out.stream, vocabulary) == out.document

    def test_unknown_mode_rejected(self, vocabulary):
        model = StubModel(64, logits_favoring(64, 20))
        with pytest.raises(DecodeError, match="unknown decode mode: beam"):
            generate(model, prompt_document(), GREEDY, vocabulary, mode="beam")

    def test_prompt_needs_sections(self, vocabulary):
        model = StubModel(64, logits_favoring(64, 20))
        with pytest.raises(DecodeError, match="no sections"):
            generate(model, CosDocument(), GREEDY, vocabulary)

    def test_repetition_penalty_breaks_loops(self, vocabulary):
        # ids 20 and 21 nearly tied: penalizing the emitted one flips to the other
        logits = np.zeros(64)
        logits[20] = 1.00
        logits[21] = 0.99
        logits[EOA_ID] = 0.5
        model = StubModel(64, logits, logits)
        doc = prompt_document()
        params = SamplingParams(
            top_k=0, top_p=1.0, repetition_penalty=2.0, cfg_scale=1.0, max_new_tokens=4
        )
        out = generate(model, doc, params, vocabulary, mode="greedy")
        flat = out.document.segments[0].score.flat
        assert flat == [20, 21, EOA_ID, EOA_ID][: len(flat)] or flat == [20, 21]


@pytest.fixture(scope="module")
def fitted(built_corpus):
    vocabulary, corpus_path, _ = built_corpus
    model = fit_ngram(corpus_path, order=3, vocab_size=len(vocabulary))
    return model, vocabulary


class TestGenerateWithCorpusModel:
    def prompt(self):
        return prompt_document(
            ("verse", "chorus"),
            ("morning bells are ringing", "come along and sing"),
            instruct="gentle folk song",
            tags=["folk", "calm"],
            lyrics="morning bells are ringing\ncome along and sing",
        )

    def params(self, **over):
        base = dict(max_new_tokens=120, seed=11)
        base.update(over)
        return SamplingParams(**base)

    def test_stream_is_the_serialized_document(self, fitted):
        model, vocabulary = fitted
        out = generate(model, self.prompt(), self.params(), vocabulary)
        assert out.stream == serialize(out.document, vocabulary, freeze=True)
        assert parse(out.stream, vocabulary) == out.document

    def test_prompt_fields_survive(self, fitted):
        model, vocabulary = fitted
        out = generate(model, self.prompt(), self.params(), vocabulary)
        doc = out.document
        assert doc.instruct == "gentle folk song"
        assert doc.tags == ["folk", "calm"]
        assert [str(s.label) for s in doc.segments] == ["verse", "chorus"]
        assert doc.segments[1].lyric == "come along and sing"

    def test_same_seed_same_stream(self, fitted):
        model, vocabulary = fitted
        a = generate(model, self.prompt(), self.params(seed=21), vocabulary)
        b = generate(model, self.prompt(), self.params(seed=21), vocabulary)
        assert a.stream == b.stream
        assert a.document == b.document

    def test_different_seed_diverges(self, fitted):
        model, vocabulary = fitted
        a = generate(model, self.prompt(), self.params(seed=1), vocabulary)
        b = generate(model, self.prompt(), self.params(seed=2), vocabulary)
        assert a.stream != b.stream

    def test_greedy_ignores_seed(self, fitted):
        model, vocabulary = fitted
        a = generate(model, self.prompt(), self.params(seed=1), vocabulary, mode="greedy")
        b = generate(model, self.prompt(), self.params(seed=99), vocabulary, mode="greedy")
        assert a.stream == b.stream

    def test_guidance_off_at_scale_one(self, fitted):
        model, vocabulary = fitted
        out = generate(
            model, self.prompt(), self.params(cfg_scale=1.0), vocabulary
        )
        assert parse(out.stream, vocabulary) == out.document

    def test_info_fields(self, fitted):
        model, vocabulary = fitted
        params = self.params(seed=5)
        out = generate(model, self.prompt(), params, vocabulary)
        info = out.info
        assert info["params"] == params.as_dict()
        assert info["seed"] == 5
        assert info["rng"] == "numpy-pcg64"
        assert info["mode"] == "sample"
        assert info["emitted_tokens"] <= params.max_new_tokens
        assert [s["label"] for s in info["segments"]] == ["verse", "chorus"]
        for seg, entry in zip(out.document.segments, info["segments"]):
            assert entry["score_tokens"] == len(seg.score.flat)

    def test_budget_respected_and_sections_closed(self, fitted):
        model, vocabulary = fitted
        out = generate(model, self.prompt(), self.params(max_new_tokens=9), vocabulary)
        assert out.info["emitted_tokens"] <= 9
        assert parse(out.stream, vocabulary) == out.document


class TestModelProtocol:
    def test_ngram_model_satisfies_it(self):
        model = NGramModel(2, 16)
        model.fit_stream([8, 9, 8, 10])
        logits = model.next_logits([8])
        assert logits.shape == (16,)
        assert model.vocab_size == 16
