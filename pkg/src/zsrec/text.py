"""Tokenization shared by the n-gram scorer and the corpus miner."""

import re

_TOKEN_RE = re.compile(r"\w+(?:['’]\w+)*|[^\w\s]")

MOVIE_TAG = "<m>"


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and detach punctuation.

    Apostrophes inside a word stay attached ("pan's" is one token).
    """
    return _TOKEN_RE.findall(text.lower())
