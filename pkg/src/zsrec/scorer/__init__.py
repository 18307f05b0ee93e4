from .base import EMPTY, LanguageModelScorer, Scorer, ScorerError, SequenceScore, UnsupportedOperation
from .baselines import ConstantScorer, PopularityScorer, RandomScorer
from .ngram import BOS, UNK, NgramError, NgramModel, fit_ngram
from .remote import RemoteScorer, RemoteScorerConfig, RemoteScorerError


def score_full(backend: LanguageModelScorer, text: str) -> SequenceScore:
    return backend.score_full(text)


def score_continuation(backend: LanguageModelScorer, prefix: str, continuation: str) -> SequenceScore:
    return backend.score_continuation(prefix, continuation)


def relevance(backend: Scorer, prompt, per_token: bool = False) -> float:
    return backend.relevance(prompt, per_token)


def generate(backend: Scorer, prompt: str, max_tokens: int, greedy: bool = True) -> str:
    if max_tokens <= 0:
        return ""
    return backend.generate(prompt, max_tokens, greedy)


__all__ = [
    "BOS",
    "EMPTY",
    "UNK",
    "ConstantScorer",
    "LanguageModelScorer",
    "NgramError",
    "NgramModel",
    "PopularityScorer",
    "RandomScorer",
    "RemoteScorer",
    "RemoteScorerConfig",
    "RemoteScorerError",
    "Scorer",
    "ScorerError",
    "SequenceScore",
    "UnsupportedOperation",
    "fit_ngram",
    "generate",
    "relevance",
    "score_continuation",
    "score_full",
]
