from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass
from typing import Sequence

from ..prompt import Prompt


class ScorerError(RuntimeError):
    pass


class UnsupportedOperation(ScorerError):
    pass


@dataclass(frozen=True)
class SequenceScore:
    total_logprob: float
    token_count: int

    def __post_init__(self):
        if self.token_count < 0:
            raise ValueError("token_count must be non-negative")


EMPTY = SequenceScore(0.0, 0)


def text_key(text: str) -> str:
    return hashlib.sha1(text.encode("utf-8")).hexdigest()


class Scorer:
    """Anything that can turn a rendered prompt into a relevance score."""

    name = "scorer"

    @property
    def identifier(self) -> str:
        return self.name

    def relevance(self, prompt: Prompt, per_token: bool = False) -> float:
        raise NotImplementedError

    def relevance_many(self, prompts: Sequence[Prompt], per_token: bool = False) -> list[float]:
        return [self.relevance(p, per_token) for p in prompts]

    def generate(self, prompt: str, max_tokens: int, greedy: bool = True) -> str:
        raise UnsupportedOperation(f"{self.identifier} does not support generation")


class LanguageModelScorer(Scorer):
    """Sequence-likelihood backend: R(u, i) = log P(prompt).

    Subclasses implement `_score_batch`. Full-text scores are cached per
    instance, keyed by text hash, so a prefix shared by several candidates
    is scored once.
    """

    def __init__(self, cache: bool = True):
        self._cache: dict[str, SequenceScore] | None = {} if cache else None
        self._cache_lock = threading.Lock()

    def _score_batch(self, texts: Sequence[str]) -> list[SequenceScore]:
        raise NotImplementedError

    def score_many(self, texts: Sequence[str]) -> list[SequenceScore]:
        results: list[SequenceScore | None] = [None] * len(texts)
        todo: dict[str, list[int]] = {}
        for k, text in enumerate(texts):
            if not text:
                results[k] = EMPTY
                continue
            key = text_key(text)
            if self._cache is not None:
                with self._cache_lock:
                    hit = self._cache.get(key)
                if hit is not None:
                    results[k] = hit
                    continue
            todo.setdefault(key, []).append(k)
        if todo:
            firsts = [texts[idx[0]] for idx in todo.values()]
            scored = self._score_batch(firsts)
            if len(scored) != len(firsts):
                raise ScorerError(f"backend returned {len(scored)} scores for {len(firsts)} texts")
            for (key, idx), score in zip(todo.items(), scored):
                for k in idx:
                    results[k] = score
                if self._cache is not None:
                    with self._cache_lock:
                        self._cache[key] = score
        return results  # type: ignore[return-value]

    def score_full(self, text: str) -> SequenceScore:
        return self.score_many([text])[0]

    def score_continuation(self, prefix: str, continuation: str) -> SequenceScore:
        if not continuation:
            return EMPTY
        full, pre = self.score_many([prefix + continuation, prefix])
        return SequenceScore(full.total_logprob - pre.total_logprob, full.token_count - pre.token_count)

    @staticmethod
    def _as_relevance(score: SequenceScore, per_token: bool) -> float:
        if per_token and score.token_count > 0:
            return score.total_logprob / score.token_count
        return score.total_logprob

    def relevance(self, prompt: Prompt, per_token: bool = False) -> float:
        score = self.score_continuation(prompt.prefix_text, prompt.continuation_text)
        return self._as_relevance(score, per_token)

    def relevance_many(self, prompts: Sequence[Prompt], per_token: bool = False) -> list[float]:
        # one round trip for all distinct prefixes and full texts
        texts = [p.full_text for p in prompts] + [p.prefix_text for p in prompts]
        scores = self.score_many(texts)
        n = len(prompts)
        out = []
        for k, p in enumerate(prompts):
            if not p.continuation_text:
                out.append(0.0)
                continue
            full, pre = scores[k], scores[n + k]
            s = SequenceScore(full.total_logprob - pre.total_logprob, full.token_count - pre.token_count)
            out.append(self._as_relevance(s, per_token))
        return out
