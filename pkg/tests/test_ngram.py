"""Interpolated n-gram counts, probabilities and the model file."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from barscore.chain_of_score import CorpusWriter, read_corpus
from barscore.ngram import NGramError, NGramModel, fit_ngram


def model_on(stream, order=3, vocab_size=10, lam=0.1):
    model = NGramModel(order, vocab_size, backoff_weight=lam)
    model.fit_stream(stream)
    return model


class TestConstruction:
    @pytest.mark.parametrize(
        "kwargs,message",
        [
            ({"order": 0, "vocab_size": 4}, "order must be at least 1"),
            ({"order": 2, "vocab_size": 0}, "vocab_size must be at least 1"),
            ({"order": 2, "vocab_size": 4, "backoff_weight": 1.0}, r"backoff_weight must be in \[0, 1\)"),
        ],
    )
    def test_validation(self, kwargs, message):
        with pytest.raises(NGramError, match=message):
            NGramModel(**kwargs)

    def test_token_range_checked(self):
        model = NGramModel(2, 4)
        with pytest.raises(NGramError, match="token 9 outside vocabulary of size 4"):
            model.fit_stream([1, 9])

    def test_empty_model_has_no_distribution(self):
        model = NGramModel(2, 4)
        with pytest.raises(NGramError, match="model has no counts"):
            model.prob_dist([])


class TestCounting:
    def test_windows_within_one_stream(self):
        model = model_on([1, 2, 3], order=3)
        assert model.counts[0][()] == {1: 1, 2: 1, 3: 1}
        assert model.counts[1][(1,)] == {2: 1}
        assert model.counts[1][(2,)] == {3: 1}
        assert model.counts[2][(1, 2)] == {3: 1}

    def test_windows_never_cross_streams(self):
        model = NGramModel(2, 10)
        model.fit_stream([1, 2])
        model.fit_stream([3, 4])
        # the 2 -> 3 seam between streams never counts
        assert (2,) not in model.counts[1]
        assert model.counts[1][(3,)] == {4: 1}

    def test_total_tokens(self):
        model = NGramModel(2, 10)
        model.fit_stream([1, 2, 3])
        model.fit_stream([4])
        assert model.total_tokens == 4


class TestProbabilities:
    def test_order_one_is_the_unigram_mle(self):
        model = model_on([1, 1, 1, 2], order=1, vocab_size=4)
        probs = model.prob_dist([1, 2, 1])
        assert np.allclose(probs, [0.0, 0.75, 0.25, 0.0])

    def test_interpolation_hand_check(self):
        # stream 1 2 1 3: unigram p(2) = 1/4; after context (1,) the
        # bigram MLE is {2: 1/2, 3: 1/2}, blended 0.9*MLE + 0.1*unigram
        model = model_on([1, 2, 1, 3], order=2, vocab_size=4)
        probs = model.prob_dist([1])
        assert probs[2] == pytest.approx(0.9 * 0.5 + 0.1 * 0.25)
        assert probs[1] == pytest.approx(0.1 * 0.5)
        assert probs.sum() == pytest.approx(1.0)

    def test_deeper_context_blends_on_top(self):
        model = model_on([1, 2, 3, 1, 2, 4], order=3, vocab_size=6, lam=0.5)
        shallow = model.prob_dist([2])
        deep = model.prob_dist([1, 2])
        # trigram context (1, 2) saw 3 and 4 equally
        expected = 0.5 * 0.5 + 0.5 * shallow[3]
        assert deep[3] == pytest.approx(expected)

    def test_unseen_context_falls_through(self):
        model = model_on([1, 2, 3], order=3, vocab_size=6)
        assert np.allclose(model.prob_dist([5]), model.prob_dist([]))
        assert np.allclose(model.prob_dist([5, 1]), model.prob_dist([1]))

    def test_long_context_uses_trailing_window(self):
        model = model_on([1, 2, 3], order=2, vocab_size=6)
        assert np.allclose(model.prob_dist([3, 3, 3, 2]), model.prob_dist([2]))

    def test_zero_backoff_is_pure_mle(self):
        model = model_on([1, 2, 1, 3], order=2, vocab_size=4, lam=0.0)
        probs = model.prob_dist([1])
        assert np.allclose(probs, [0.0, 0.0, 0.5, 0.5])

    def test_next_logits_log_of_probs(self):
        model = model_on([1, 2], order=2, vocab_size=4)
        logits = model.next_logits([1])
        probs = model.prob_dist([1])
        assert np.isneginf(logits[probs == 0]).all()
        assert np.allclose(np.exp(logits[probs > 0]), probs[probs > 0])

    @given(st.lists(st.integers(min_value=0, max_value=7), min_size=1, max_size=60))
    def test_always_a_distribution(self, stream):
        model = model_on(stream, order=3, vocab_size=8)
        for context in ([], stream[:1], stream[:2], [7, 0]):
            probs = model.prob_dist(context)
            assert probs.shape == (8,)
            assert probs.sum() == pytest.approx(1.0)
            assert (probs >= 0).all()


class TestModelFile:
    def test_save_load_identity(self, tmp_path):
        model = model_on([1, 2, 1, 3, 2, 1], order=3, vocab_size=5)
        model.vocab_hash = "abcd"
        path = tmp_path / "song.model"
        model.save(path)
        again = NGramModel.load(path)
        assert again.order == model.order
        assert again.vocab_size == model.vocab_size
        assert again.backoff_weight == model.backoff_weight
        assert again.vocab_hash == "abcd"
        assert again.counts == model.counts
        for context in ([], [1], [2, 1]):
            assert np.allclose(again.prob_dist(context), model.prob_dist(context))

    def test_save_is_deterministic(self, tmp_path):
        a = model_on([3, 1, 2, 1], order=2, vocab_size=5)
        b = NGramModel(2, 5)
        b.fit_stream([3, 1, 2, 1])
        a.save(tmp_path / "a.model")
        b.save(tmp_path / "b.model")
        assert (tmp_path / "a.model").read_bytes() == (tmp_path / "b.model").read_bytes()

    def test_magic_checked(self, tmp_path):
        path = tmp_path / "bad.model"
        path.write_text("WRONG\n")
        with pytest.raises(NGramError, match="bad model file magic"):
            NGramModel.load(path)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.model"
        path.write_text("NGRM1\norder 2\n")
        with pytest.raises(NGramError, match="malformed model header line"):
            NGramModel.load(path)

    def test_missing_header_field(self, tmp_path):
        path = tmp_path / "bad.model"
        path.write_text("NGRM1\norder\t2\nbackoff_weight\t0.1\n")
        with pytest.raises(NGramError, match="model header missing"):
            NGramModel.load(path)

    def test_malformed_row(self, tmp_path):
        model = model_on([1, 2], order=2, vocab_size=4)
        path = tmp_path / "bad.model"
        model.save(path)
        path.write_text(path.read_text() + "1 2\n")
        with pytest.raises(NGramError, match="malformed model row"):
            NGramModel.load(path)

    def test_overlong_context_rejected(self, tmp_path):
        model = model_on([1, 2], order=2, vocab_size=4)
        path = tmp_path / "bad.model"
        model.save(path)
        path.write_text(path.read_text() + "1 2 3\t1\t1\n")
        with pytest.raises(NGramError, match="context longer than order allows"):
            NGramModel.load(path)


class TestFitFromCorpus:
    def test_fit_over_fixture_corpus(self, built_corpus, tmp_path):
        vocabulary, corpus_path, stats = built_corpus
        model = fit_ngram(corpus_path, order=3, vocab_size=len(vocabulary))
        assert model.total_tokens == stats.tokens
        probs = model.prob_dist([])
        assert probs.sum() == pytest.approx(1.0)
        path = tmp_path / "fixture.model"
        model.save(path)
        assert NGramModel.load(path).counts == model.counts

    def test_vocab_size_defaults_to_max_seen(self, tmp_path, built_corpus):
        _, corpus_path, _ = built_corpus
        model = fit_ngram(corpus_path, order=2)
        top = max(max(stream) for stream in read_corpus(corpus_path))
        assert model.vocab_size == top + 1

    def test_empty_corpus_rejected(self, tmp_path):
        path = tmp_path / "empty.corpus"
        with CorpusWriter(path):
            pass
        with pytest.raises(NGramError, match="corpus holds no documents"):
            fit_ngram(path, order=2)
