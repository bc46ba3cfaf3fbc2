"""Interpolated n-gram model over token streams.

An order-n model conditions on up to n-1 trailing tokens.  Each context
length blends its maximum-likelihood estimate with the next shorter
context's distribution at a fixed backoff weight; unseen contexts fall
through entirely.  Order 1 is the plain corpus unigram distribution.
"""

from collections import Counter, defaultdict
from pathlib import Path

import numpy as np

from .chain_of_score import read_corpus

MODEL_MAGIC = "NGRM1"


class NGramError(Exception):
    pass


class NGramModel:
    def __init__(self, order: int, vocab_size: int, backoff_weight: float = 0.1, vocab_hash: str = ""):
        if order < 1:
            raise NGramError("order must be at least 1")
        if vocab_size < 1:
            raise NGramError("vocab_size must be at least 1")
        if not 0 <= backoff_weight < 1:
            raise NGramError("backoff_weight must be in [0, 1)")
        self.order = order
        self.vocab_size = vocab_size
        self.backoff_weight = backoff_weight
        self.vocab_hash = vocab_hash
        # counts[k] maps a length-k context tuple to a successor Counter
        self.counts: list[defaultdict] = [defaultdict(Counter) for _ in range(order)]
        self._unigram: np.ndarray | None = None

    def fit_stream(self, tokens) -> None:
        """Accumulate counts from one stream; windows never cross streams."""
        tokens = list(tokens)
        for tok in tokens:
            if not 0 <= tok < self.vocab_size:
                raise NGramError(f"token {tok} outside vocabulary of size {self.vocab_size}")
        self._unigram = None
        for i, tok in enumerate(tokens):
            for k in range(min(i, self.order - 1) + 1):
                context = tuple(tokens[i - k : i])
                self.counts[k][context][tok] += 1

    @property
    def total_tokens(self) -> int:
        empty = self.counts[0].get(())
        return sum(empty.values()) if empty else 0

    def _unigram_probs(self) -> np.ndarray:
        if self._unigram is None:
            empty = self.counts[0].get(())
            if not empty:
                raise NGramError("model has no counts")
            probs = np.zeros(self.vocab_size, dtype=np.float64)
            for tok, count in empty.items():
                probs[tok] = count
            self._unigram = probs / probs.sum()
        return self._unigram

    def prob_dist(self, context) -> np.ndarray:
        """Next-token distribution given trailing context; always sums to 1."""
        context = tuple(int(tok) for tok in context)
        probs = self._unigram_probs().copy()
        lam = self.backoff_weight
        for k in range(1, self.order):
            if len(context) < k:
                break
            ctx = context[len(context) - k :]
            successors = self.counts[k].get(ctx)
            if not successors:
                continue
            mle = np.zeros(self.vocab_size, dtype=np.float64)
            for tok, count in successors.items():
                mle[tok] = count
            mle /= mle.sum()
            probs = (1.0 - lam) * mle + lam * probs
        return probs

    def next_logits(self, context) -> np.ndarray:
        probs = self.prob_dist(context)
        with np.errstate(divide="ignore"):
            return np.log(probs)

    def save(self, path) -> None:
        """Plain-text model file: header fields then sorted count rows."""
        lines = [
            MODEL_MAGIC,
            f"order\t{self.order}",
            f"vocab_size\t{self.vocab_size}",
            f"vocab_hash\t{self.vocab_hash}",
            f"backoff_weight\t{self.backoff_weight!r}",
        ]
        rows = []
        for k in range(self.order):
            for context, successors in self.counts[k].items():
                for tok, count in successors.items():
                    rows.append((len(context), context, tok, count))
        rows.sort(key=lambda row: (row[0], row[1], row[2]))
        for _, context, tok, count in rows:
            ctx_field = " ".join(str(t) for t in context)
            lines.append(f"{ctx_field}\t{tok}\t{count}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")

    @classmethod
    def load(cls, path) -> "NGramModel":
        lines = Path(path).read_text(encoding="ascii").split("\n")
        if not lines or lines[0] != MODEL_MAGIC:
            raise NGramError("bad model file magic")
        fields = {}
        body_start = 1
        for line in lines[1:]:
            body_start += 1
            if "\t" not in line:
                raise NGramError(f"malformed model header line: {line!r}")
            name, value = line.split("\t", 1)
            fields[name] = value
            if name == "backoff_weight":
                break
        try:
            model = cls(
                order=int(fields["order"]),
                vocab_size=int(fields["vocab_size"]),
                backoff_weight=float(fields["backoff_weight"]),
                vocab_hash=fields.get("vocab_hash", ""),
            )
        except KeyError as exc:
            raise NGramError(f"model header missing {exc.args[0]}") from None
        for line in lines[body_start:]:
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise NGramError(f"malformed model row: {line!r}")
            ctx_field, tok_s, count_s = parts
            context = tuple(int(t) for t in ctx_field.split()) if ctx_field else ()
            if len(context) >= model.order:
                raise NGramError(f"context longer than order allows: {line!r}")
            model.counts[len(context)][context][int(tok_s)] = int(count_s)
        return model


def fit_ngram(
    corpus_path,
    order: int,
    vocab_size: int | None = None,
    vocab_hash: str = "",
    backoff_weight: float = 0.1,
) -> NGramModel:
    """Fit a model over every document stream in a corpus file."""
    streams = list(read_corpus(corpus_path))
    if not streams:
        raise NGramError("corpus holds no documents")
    if vocab_size is None:
        vocab_size = max((max(s) for s in streams if s), default=0) + 1
    model = NGramModel(order, vocab_size, backoff_weight=backoff_weight, vocab_hash=vocab_hash)
    for stream in streams:
        model.fit_stream(stream)
    return model
