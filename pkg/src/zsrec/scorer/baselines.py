"""Reference scorers that ignore language entirely."""

from __future__ import annotations

import hashlib
import math
from collections import Counter
from typing import Iterable

from ..dataset import UserProfile
from ..prompt import Prompt
from .base import Scorer, ScorerError


class RandomScorer(Scorer):
    """Uniform [0, 1) score, a pure function of (seed, full prompt text)."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed

    @property
    def identifier(self) -> str:
        return f"random(seed={self.seed})"

    def relevance(self, prompt: Prompt, per_token: bool = False) -> float:
        h = hashlib.blake2b(prompt.full_text.encode("utf-8"), digest_size=8, key=str(self.seed).encode())
        return int.from_bytes(h.digest(), "big") / 2.0**64


class PopularityScorer(Scorer):
    """ln(1 + number of training users who rated the candidate positively)."""

    name = "popularity"

    def __init__(self, profiles: Iterable[UserProfile]):
        self.counts: Counter[int] = Counter()
        for p in profiles:
            self.counts.update(set(p.positives))

    def relevance(self, prompt: Prompt, per_token: bool = False) -> float:
        if prompt.candidate_item is None:
            raise ScorerError("popularity scorer needs the candidate item id on the prompt")
        return math.log1p(self.counts[prompt.candidate_item])


class ConstantScorer(Scorer):
    name = "constant"

    def relevance(self, prompt: Prompt, per_token: bool = False) -> float:
        return 0.0
