"""Corpus prompt mining: tag catalog titles as <m>, count 3-6-grams around them.

Also used to pull catalog items back out of free-text LM generations.
"""

from __future__ import annotations

import csv
import sys
from collections import Counter
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Sequence

from .dataset import Item
from .text import MOVIE_TAG, tokenize

# Multi-token titles that are ordinary phrases far more often than film mentions.
DEFAULT_STOP_TITLES = frozenset(
    {
        "the game",
        "the thing",
        "the end",
        "the mission",
        "the program",
        "the client",
        "the kid",
        "the crow",
        "the fan",
        "the net",
        "the rock",
        "the island",
        "the sting",
        "the jerk",
        "the abyss",
        "the birds",
        "the blob",
        "the fly",
        "the hunted",
        "the mirror",
        "the others",
    }
)


class MiningError(ValueError):
    pass


@dataclass(frozen=True)
class PatternCount:
    pattern: tuple[str, ...]
    count: int

    @property
    def text(self) -> str:
        return " ".join(self.pattern)


@dataclass(frozen=True)
class Match:
    start: int
    end: int  # exclusive
    item_id: int


@dataclass
class TitleMatcher:
    """Longest-match dictionary matcher over lowercase token sequences."""

    trie: dict = field(default_factory=dict)
    min_tokens: int = 2
    excluded: list[str] = field(default_factory=list)
    n_titles: int = 0

    _END = "\x00item"

    def _insert(self, tokens: Sequence[str], item_id: int) -> None:
        node = self.trie
        for tok in tokens:
            node = node.setdefault(tok, {})
        # lowest item id wins for duplicate titles, independent of insertion order
        prev = node.get(self._END)
        if prev is None:
            self.n_titles += 1
        if prev is None or item_id < prev:
            node[self._END] = item_id

    def find_all(self, tokens: Sequence[str]) -> list[Match]:
        """Every (start, end) span that is a catalog title."""
        out = []
        for start in range(len(tokens)):
            node = self.trie
            for end in range(start, len(tokens)):
                node = node.get(tokens[end])
                if node is None:
                    break
                item = node.get(self._END)
                if item is not None:
                    out.append(Match(start, end + 1, item))
        return out

    def matches(self, tokens: Sequence[str]) -> list[Match]:
        """Non-overlapping matches: longer spans first, earlier start on ties."""
        taken = [False] * len(tokens)
        chosen = []
        for m in sorted(self.find_all(tokens), key=lambda m: (-(m.end - m.start), m.start)):
            if not any(taken[m.start:m.end]):
                chosen.append(m)
                for k in range(m.start, m.end):
                    taken[k] = True
        return sorted(chosen, key=lambda m: m.start)


def build_matcher(
    items: Iterable[Item],
    min_tokens: int = 2,
    stop_titles: Iterable[str] = DEFAULT_STOP_TITLES,
) -> TitleMatcher:
    items = list(items)
    if not items:
        raise MiningError("empty catalog")
    stop = {" ".join(tokenize(t)) for t in stop_titles}
    matcher = TitleMatcher(min_tokens=min_tokens)
    excluded = set()
    for it in items:
        keys = {it.display_title, *it.alt_titles}
        for title in sorted(keys):
            toks = tokenize(title)
            joined = " ".join(toks)
            if len(toks) < min_tokens or joined in stop:
                excluded.add(joined)
                continue
            matcher._insert(toks, it.item_id)
    matcher.excluded = sorted(excluded)
    return matcher


def tag_tokens(tokens: Sequence[str], matcher: TitleMatcher) -> tuple[list[str], int]:
    out: list[str] = []
    pos = 0
    ms = matcher.matches(tokens)
    for m in ms:
        out.extend(tokens[pos:m.start])
        out.append(MOVIE_TAG)
        pos = m.end
    out.extend(tokens[pos:])
    return out, len(ms)


def tag_corpus(lines: Iterable[str], matcher: TitleMatcher) -> Iterator[list[str]]:
    """Yield tagged token lines; lines mentioning no catalog title are dropped."""
    for line in lines:
        tagged, n = tag_tokens(tokenize(line), matcher)
        if n:
            yield tagged


def _as_tokens(line: str | Sequence[str]) -> Sequence[str]:
    return line.split() if isinstance(line, str) else line


def count_table(tagged: Iterable[str | Sequence[str]], n_min: int = 3, n_max: int = 6) -> Counter:
    """Unsorted n-gram -> count table, windows restricted to single lines."""
    if not 1 <= n_min <= n_max:
        raise MiningError("need 1 <= n_min <= n_max")
    table: Counter = Counter()
    for line in tagged:
        toks = tuple(_as_tokens(line))
        tag_pos = [k for k, t in enumerate(toks) if t == MOVIE_TAG]
        if not tag_pos:
            continue
        for n in range(n_min, n_max + 1):
            for s in range(len(toks) - n + 1):
                # window [s, s+n) must cover some tag position
                if any(s <= k < s + n for k in tag_pos):
                    table[toks[s:s + n]] += 1
    return table


def rank_patterns(table: Counter) -> list[PatternCount]:
    ranked = sorted(table.items(), key=lambda kv: (-kv[1], " ".join(kv[0])))
    return [PatternCount(p, c) for p, c in ranked]


def merge_tables(tables: Iterable[Counter]) -> Counter:
    total: Counter = Counter()
    for t in tables:
        total.update(t)
    return total


def count_patterns(tagged: Iterable[str | Sequence[str]], n_min: int = 3, n_max: int = 6) -> list[PatternCount]:
    return rank_patterns(count_table(tagged, n_min, n_max))


def _chunked(lines: Iterable, size: int) -> Iterator[list]:
    chunk = []
    for line in lines:
        chunk.append(line)
        if len(chunk) >= size:
            yield chunk
            chunk = []
    if chunk:
        yield chunk


def _mine_chunk(args) -> Counter:
    lines, matcher, n_min, n_max = args
    return count_table(tag_corpus(lines, matcher), n_min, n_max)


def mine(
    lines: Iterable[str],
    matcher: TitleMatcher,
    n_min: int = 3,
    n_max: int = 6,
    chunk_size: int = 10000,
    executor: Executor | None = None,
) -> list[PatternCount]:
    """Tag and count a corpus in line chunks; tables merge by addition."""
    jobs = ((chunk, matcher, n_min, n_max) for chunk in _chunked(lines, chunk_size))
    tables = executor.map(_mine_chunk, jobs) if executor is not None else map(_mine_chunk, jobs)
    return rank_patterns(merge_tables(tables))


def extract_items(text: str, matcher: TitleMatcher) -> list[int]:
    """Catalog items mentioned in `text`, in order of first mention, no repeats."""
    seen: dict[int, None] = {}
    for m in matcher.matches(tokenize(text)):
        seen.setdefault(m.item_id, None)
    return list(seen)


def read_corpus(fh: IO[str], column: int | None = None, delimiter: str = ",") -> Iterator[str]:
    """One document per line, or one field of a comma/tab separated dump."""
    if column is None:
        for line in fh:
            yield line.rstrip("\r\n")
        return
    csv.field_size_limit(sys.maxsize)
    for row in csv.reader(fh, delimiter=delimiter):
        if len(row) > column:
            yield row[column]


def write_patterns(patterns: Iterable[PatternCount], fh: IO[str]) -> None:
    for p in patterns:
        fh.write(f"{p.text}\t{p.count}\n")
