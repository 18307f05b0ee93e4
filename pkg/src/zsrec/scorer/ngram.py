"""Count-based language model with Jelinek-Mercer interpolation.

P(w | h) = sum_k lambda_k * P_k(w | last k-1 tokens of h)

P_1 is the unigram distribution with a reserved unknown token:
P_1(w) = c(w) / (N + u) and P_1(<unk>) = u / (N + u), where N is the number
of training tokens and u the unknown-mass parameter. For k >= 2, P_k is the
maximum-likelihood estimate c(h, w) / c(h); when the history h was never
seen, P_k falls back to P_{k-1} on the shortened history, so every
interpolated distribution still sums to one.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from typing import Iterable, Sequence

from ..text import tokenize
from .base import LanguageModelScorer, SequenceScore

BOS = "<s>"
UNK = "<unk>"

DEFAULT_ORDER = 3
DEFAULT_WEIGHTS = (0.1, 0.3, 0.6)


class NgramError(ValueError):
    pass


class NgramModel(LanguageModelScorer):
    name = "ngram"

    def __init__(self, order: int, weights: Sequence[float], unk_mass: float = 1.0):
        super().__init__()
        if order < 1:
            raise NgramError("order must be >= 1")
        if len(weights) != order:
            raise NgramError(f"need {order} interpolation weights, got {len(weights)}")
        if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
            raise NgramError("interpolation weights must be non-negative and sum to 1")
        if unk_mass <= 0:
            raise NgramError("unk_mass must be positive")
        self.order = order
        self.weights = tuple(float(w) for w in weights)
        self.unk_mass = float(unk_mass)
        self.unigrams: Counter[str] = Counter()
        self.n_tokens = 0
        # tables[k][history] -> Counter of next tokens, for k = 2..order (index k-2)
        self.tables: list[dict[tuple[str, ...], Counter[str]]] = [defaultdict(Counter) for _ in range(order - 1)]
        self.history_totals: list[Counter[tuple[str, ...]]] = [Counter() for _ in range(order - 1)]

    @property
    def identifier(self) -> str:
        w = ",".join(f"{x:g}" for x in self.weights)
        return f"ngram(K={self.order},w={w})"

    @property
    def vocabulary(self) -> list[str]:
        return sorted(self.unigrams)

    # -- counting --------------------------------------------------------

    def _add(self, history: tuple[str, ...], word: str) -> None:
        self.unigrams[word] += 1
        self.n_tokens += 1
        for k in range(2, self.order + 1):
            h = history[len(history) - (k - 1):]
            self.tables[k - 2][h][word] += 1
            self.history_totals[k - 2][h] += 1

    def _padded(self, tokens: Sequence[str]) -> list[str]:
        return [BOS] * (self.order - 1) + list(tokens)

    def _add_line(self, tokens: Sequence[str]) -> None:
        padded = self._padded(tokens)
        k = self.order - 1
        for pos in range(k, len(padded)):
            self._add(tuple(padded[pos - k:pos]), padded[pos])

    def add_occurrence(self, context: Sequence[str], word: str) -> "NgramModel":
        """Copy of the model with one more occurrence of `word` after `context`."""
        new = NgramModel(self.order, self.weights, self.unk_mass)
        new.unigrams = Counter(self.unigrams)
        new.n_tokens = self.n_tokens
        for k in range(self.order - 1):
            for h, nxt in self.tables[k].items():
                new.tables[k][h] = Counter(nxt)
            new.history_totals[k] = Counter(self.history_totals[k])
        hist = tuple(new._padded(context)[-(self.order - 1):]) if self.order > 1 else ()
        new._add(hist, word)
        return new

    # -- probabilities ---------------------------------------------------

    def _map(self, token: str) -> str:
        return token if token in self.unigrams or token == BOS else UNK

    def _unigram(self, word: str) -> float:
        denom = self.n_tokens + self.unk_mass
        if word == UNK:
            return self.unk_mass / denom
        return self.unigrams[word] / denom

    def _ml(self, k: int, history: tuple[str, ...], word: str) -> float:
        while k >= 2:
            h = history[len(history) - (k - 1):]
            total = self.history_totals[k - 2].get(h, 0)
            if total:
                return self.tables[k - 2][h].get(word, 0) / total
            k -= 1
        return self._unigram(word)

    def prob(self, word: str, history: Sequence[str] = ()) -> float:
        """P(word | history); history is BOS-padded on the left as needed."""
        word = self._map(word)
        hist = tuple(self._map(t) for t in self._padded(history)[-(self.order - 1):]) if self.order > 1 else ()
        return sum(lam * self._ml(k, hist, word) for k, lam in enumerate(self.weights, start=1) if lam)

    def next_distribution(self, history: Sequence[str] = ()) -> dict[str, float]:
        return {w: self.prob(w, history) for w in self.vocabulary + [UNK]}

    # -- scoring ---------------------------------------------------------

    def _logprob_tokens(self, tokens: Sequence[str], start: int = 0) -> float:
        padded = self._padded(tokens)
        k = self.order - 1
        # fsum: exactly rounded, so equal term multisets give bit-equal totals
        return math.fsum(math.log(self.prob(padded[k + i], padded[i:k + i])) for i in range(start, len(tokens)))

    def _score_batch(self, texts: Sequence[str]) -> list[SequenceScore]:
        out = []
        for text in texts:
            toks = tokenize(text)
            out.append(SequenceScore(self._logprob_tokens(toks), len(toks)))
        return out

    def score_tokens(self, tokens: Sequence[str]) -> SequenceScore:
        return SequenceScore(self._logprob_tokens(tokens), len(tokens))

    def score_continuation(self, prefix: str, continuation: str) -> SequenceScore:
        if not continuation:
            return SequenceScore(0.0, 0)
        pre = tokenize(prefix)
        full = tokenize(prefix + continuation)
        if full[: len(pre)] != pre:
            # the boundary merged two tokens; fall back to the difference of totals
            return super().score_continuation(prefix, continuation)
        return SequenceScore(self._logprob_tokens(full, start=len(pre)), len(full) - len(pre))


def fit_ngram(
    corpus: Iterable[str | Sequence[str]],
    order: int = DEFAULT_ORDER,
    weights: Sequence[float] | None = None,
    unk_mass: float = 1.0,
) -> NgramModel:
    """Count n-grams over a corpus of lines (raw strings or token lists).

    Each line is padded with order-1 sentence-start tokens; windows never
    cross line boundaries.
    """
    if weights is None:
        weights = DEFAULT_WEIGHTS if order == DEFAULT_ORDER else tuple([1.0 / order] * order)
    model = NgramModel(order, weights, unk_mass)
    for line in corpus:
        tokens = tokenize(line) if isinstance(line, str) else list(line)
        if tokens:
            model._add_line(tokens)
    if model.n_tokens == 0:
        raise NgramError("corpus is empty")
    return model
