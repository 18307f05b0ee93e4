"""MovieLens ingestion and the evaluation-instance protocol.

Ratings are binarized (>= 4.0 positive, <= 2.5 negative, the rest dropped),
users with too few positives/negatives are filtered out, a seeded fraction
becomes test users, and each test user gets one held-out positive, four
held-out negatives and a sampled context of liked items.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping, Sequence

import numpy as np

# Stream tags mixed into per-user seeds so that independent draws never share a stream.
STREAM_EVAL = 0
STREAM_SHUFFLE = 1
STREAM_SPLIT = 2
STREAM_USERS = 3


class ParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Rating:
    user_id: int
    item_id: int
    value: float
    timestamp: int


@dataclass(frozen=True)
class Item:
    item_id: int
    raw_title: str
    display_title: str
    year: int | None = None
    genres: tuple[str, ...] = ()
    alt_titles: tuple[str, ...] = ()


@dataclass(frozen=True)
class UserProfile:
    user_id: int
    positives: tuple[int, ...]
    negatives: tuple[int, ...]


@dataclass(frozen=True)
class EvalInstance:
    user_id: int
    context_items: tuple[int, ...]
    candidates: tuple[tuple[int, int], ...]  # (item_id, label), sorted by item_id

    @property
    def positive_item(self) -> int:
        return next(i for i, label in self.candidates if label == 1)

    @property
    def candidate_items(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.candidates)

    def with_context(self, context: Sequence[int]) -> "EvalInstance":
        return EvalInstance(self.user_id, tuple(context), self.candidates)

    def to_json(self) -> str:
        return json.dumps(
            {
                "user_id": self.user_id,
                "context": list(self.context_items),
                "candidates": [[i, label] for i, label in self.candidates],
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "EvalInstance":
        rec = json.loads(line)
        return cls(
            int(rec["user_id"]),
            tuple(int(i) for i in rec["context"]),
            tuple((int(i), int(label)) for i, label in rec["candidates"]),
        )


@dataclass(frozen=True)
class DatasetConfig:
    pos_threshold: float = 4.0
    neg_threshold: float = 2.5
    min_pos: int = 21
    min_neg: int = 4
    test_fraction: float = 0.2
    context_size: int = 5
    num_neg_candidates: int = 4
    seed: int = 0
    foreign_articles: bool = False

    def __post_init__(self):
        if not self.pos_threshold > self.neg_threshold:
            raise DatasetError("pos_threshold must exceed neg_threshold")
        if self.min_pos < self.context_size + 1:
            raise DatasetError("min_pos must be at least context_size + 1")
        if not 0 < self.test_fraction < 1:
            raise DatasetError("test_fraction must lie in (0, 1)")
        if self.context_size < 0 or self.num_neg_candidates < 1:
            raise DatasetError("context_size must be >= 0 and num_neg_candidates >= 1")
        if self.min_neg < self.num_neg_candidates:
            raise DatasetError("min_neg must be at least num_neg_candidates")


def user_rng(seed: int, user_id: int, stream: int) -> np.random.Generator:
    """Generator keyed by (seed, user, stream); independent of iteration order."""
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, user_id, stream])


# ---------------------------------------------------------------------------
# parsing

_YEAR_RE = re.compile(r"\s*\((\d{4})\)\s*$")
_TRAILING_PAREN_RE = re.compile(r"^(.*\S)\s+\(([^()]*)\)$")
ARTICLES = ("The", "A", "An")
FOREIGN_ARTICLES = ("Les", "Le", "La", "L'", "Il", "Lo", "I", "Gli", "Das", "Der", "Die", "El", "Los", "Las", "Un", "Une", "Det", "Den")


def _reorder_article(title: str, articles: Sequence[str]) -> str:
    for art in articles:
        suffix = ", " + art
        if title.endswith(suffix) and len(title) > len(suffix):
            head = title[: -len(suffix)]
            sep = "" if art.endswith("'") else " "
            return f"{art}{sep}{head}"
    return title


def normalize_title(raw_title: str, foreign_articles: bool = False) -> str:
    """Strip a trailing "(YYYY)" and move a trailing ", The"/", A"/", An" to the front.

    A trailing alternate title in parentheses is kept, but the article in
    the main title before it is still reordered:
    "City of Lost Children, The (Cité des enfants perdus, La) (1995)"
    becomes "The City of Lost Children (Cité des enfants perdus, La)".
    """
    articles = ARTICLES + FOREIGN_ARTICLES if foreign_articles else ARTICLES
    title = raw_title.strip()
    while (stripped := _YEAR_RE.sub("", title).strip()) != title and stripped:
        title = stripped
    m = _TRAILING_PAREN_RE.match(title)
    if m:
        main = _reorder_article(m.group(1), articles)
        return f"{main} ({m.group(2)})"
    return _reorder_article(title, articles)


def alternate_titles(display_title: str, foreign_articles: bool = False) -> tuple[str, ...]:
    """Main title and parenthesized alias split out of a normalized title, if any."""
    m = _TRAILING_PAREN_RE.match(display_title)
    if not m:
        return ()
    alias = re.sub(r"^(a\.k\.a\.|aka)\s+", "", m.group(2), flags=re.I).strip()
    articles = ARTICLES + FOREIGN_ARTICLES if foreign_articles else ARTICLES
    out = [m.group(1)]
    if alias:
        out.append(_reorder_article(alias, articles))
    return tuple(out)


def _lines(stream: IO[bytes] | IO[str] | bytes | str) -> Iterator[str]:
    if isinstance(stream, bytes):
        stream = io.BytesIO(stream)
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    for raw in stream:
        if isinstance(raw, bytes):
            raw = raw.decode("latin-1")
        yield raw.rstrip("\r\n")


def _is_csv_header(line: str) -> bool:
    return "::" not in line and "," in line and not line.split(",")[0].strip().isdigit()


def parse_ratings(stream) -> list[Rating]:
    """Parse `UserID::MovieID::Rating::Timestamp` lines (or a headed CSV)."""
    lines = _lines(stream)
    out: list[Rating] = []
    first = True
    csv_mode = False
    for line_no, line in enumerate(lines, start=1):
        if first:
            first = False
            if _is_csv_header(line):
                csv_mode = True
                continue
        if not line.strip():
            continue
        parts = line.split(",") if csv_mode else line.split("::")
        if len(parts) != 4:
            raise ParseError(line_no, f"expected 4 fields, got {len(parts)}")
        try:
            user_id, item_id = int(parts[0]), int(parts[1])
            value, ts = float(parts[2]), int(parts[3])
        except ValueError as exc:
            raise ParseError(line_no, f"bad field ({exc})") from None
        if user_id < 1 or item_id < 1:
            raise ParseError(line_no, "ids must be positive")
        if not 0.0 <= value <= 5.0:
            raise ParseError(line_no, f"rating {value} outside [0, 5]")
        out.append(Rating(user_id, item_id, value, ts))
    return out


def parse_items(stream, foreign_articles: bool = False) -> list[Item]:
    """Parse `MovieID::Title::Genres` lines (or a headed CSV with quoted titles)."""
    lines = list(_lines(stream))
    if not lines:
        return []
    rows: Iterable[tuple[int, list[str]]]
    if _is_csv_header(lines[0]):
        rows = ((n, r) for n, r in enumerate(csv.reader(lines[1:]), start=2))
    else:
        rows = ((n, line.split("::")) for n, line in enumerate(lines, start=1))
    out = []
    for line_no, parts in rows:
        if not parts or parts == [""]:
            continue
        if len(parts) != 3:
            raise ParseError(line_no, f"expected 3 fields, got {len(parts)}")
        try:
            item_id = int(parts[0])
        except ValueError:
            raise ParseError(line_no, f"bad item id {parts[0]!r}") from None
        raw = parts[1]
        display = normalize_title(raw, foreign_articles)
        if not display:
            raise ParseError(line_no, "empty title")
        ym = _YEAR_RE.search(raw)
        genres = tuple(g for g in parts[2].split("|") if g and g != "(no genres listed)")
        out.append(
            Item(
                item_id,
                raw,
                display,
                int(ym.group(1)) if ym else None,
                genres,
                alternate_titles(display, foreign_articles),
            )
        )
    return out


# ---------------------------------------------------------------------------
# protocol


def binarize(ratings: Iterable[Rating], cfg: DatasetConfig) -> list[UserProfile]:
    latest: dict[tuple[int, int], Rating] = {}
    for r in ratings:
        key = (r.user_id, r.item_id)
        prev = latest.get(key)
        if prev is None or r.timestamp >= prev.timestamp:
            latest[key] = r
    by_user: dict[int, list[Rating]] = defaultdict(list)
    for r in latest.values():
        if r.value >= cfg.pos_threshold or r.value <= cfg.neg_threshold:
            by_user[r.user_id].append(r)
    profiles = []
    for uid in sorted(by_user):
        rs = sorted(by_user[uid], key=lambda r: (r.timestamp, r.item_id))
        profiles.append(
            UserProfile(
                uid,
                tuple(r.item_id for r in rs if r.value >= cfg.pos_threshold),
                tuple(r.item_id for r in rs if r.value <= cfg.neg_threshold),
            )
        )
    return profiles


def filter_users(profiles: Iterable[UserProfile], cfg: DatasetConfig) -> list[UserProfile]:
    return [
        p
        for p in profiles
        if len(p.positives) >= cfg.min_pos and len(p.negatives) >= cfg.min_neg
    ]


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_users(profiles: Sequence[UserProfile], cfg: DatasetConfig) -> tuple[list[int], list[int]]:
    """Seeded random test split; returns (train_ids, test_ids), both sorted."""
    if len(profiles) < 2:
        raise DatasetError("need at least 2 profiles to split")
    ids = np.array(sorted(p.user_id for p in profiles), dtype=np.int64)
    n_test = round_half_up(cfg.test_fraction * len(ids))
    rng = user_rng(cfg.seed, 0, STREAM_SPLIT)
    perm = rng.permutation(len(ids))
    test = sorted(int(i) for i in ids[perm[:n_test]])
    train = sorted(int(i) for i in ids[perm[n_test:]])
    return train, test


def build_eval_instances(
    test_profiles: Iterable[UserProfile],
    items: Mapping[int, Item] | None,
    cfg: DatasetConfig,
    context_size: int | None = None,
) -> list[EvalInstance]:
    """One instance per test user.

    Draw order per user is fixed: held-out positive, then held-out
    negatives, then a permutation of the remaining positives whose first
    `context_size` entries form the context. Contexts for different sizes
    are therefore nested and candidates do not depend on the size.
    """
    n = cfg.context_size if context_size is None else context_size
    out = []
    for p in test_profiles:
        if n > len(p.positives) - 1:
            raise DatasetError(
                f"user {p.user_id}: context_size {n} exceeds {len(p.positives) - 1} available positives"
            )
        if len(p.negatives) < cfg.num_neg_candidates:
            raise DatasetError(f"user {p.user_id}: fewer than {cfg.num_neg_candidates} negatives")
        if items is not None:
            missing = [i for i in p.positives + p.negatives if i not in items]
            if missing:
                raise DatasetError(f"user {p.user_id}: items {missing[:5]} missing from catalog")
        rng = user_rng(cfg.seed, p.user_id, STREAM_EVAL)
        pos = list(p.positives)
        held_pos = pos.pop(int(rng.integers(len(pos))))
        neg_idx = rng.choice(len(p.negatives), size=cfg.num_neg_candidates, replace=False)
        held_neg = [p.negatives[int(k)] for k in neg_idx]
        order = rng.permutation(len(pos))
        context = tuple(pos[int(k)] for k in order[:n])
        candidates = sorted([(held_pos, 1)] + [(j, 0) for j in held_neg])
        out.append(EvalInstance(p.user_id, context, tuple(candidates)))
    return out


def write_instances(instances: Iterable[EvalInstance], fh: IO[str]) -> None:
    for inst in instances:
        fh.write(inst.to_json() + "\n")


def read_instances(fh: IO[str]) -> list[EvalInstance]:
    return [EvalInstance.from_json(line) for line in fh if line.strip()]


@dataclass
class PreparedData:
    """Everything downstream experiments need, built deterministically from files + config."""

    cfg: DatasetConfig
    items: dict[int, Item]
    profiles: dict[int, UserProfile]  # filtered users only
    train_ids: list[int]
    test_ids: list[int]
    stats: dict[str, object] = field(default_factory=dict)

    def test_profiles(self) -> list[UserProfile]:
        return [self.profiles[u] for u in self.test_ids]

    def train_profiles(self) -> list[UserProfile]:
        return [self.profiles[u] for u in self.train_ids]

    def instances(self, context_size: int | None = None) -> list[EvalInstance]:
        return build_eval_instances(self.test_profiles(), self.items, self.cfg, context_size)


def rating_histogram(ratings: Iterable[Rating]) -> dict[float, int]:
    return dict(sorted(Counter(r.value for r in ratings).items()))


def prepare(ratings: Sequence[Rating], items: Sequence[Item], cfg: DatasetConfig) -> PreparedData:
    profiles = binarize(ratings, cfg)
    kept = filter_users(profiles, cfg)
    train_ids, test_ids = split_users(kept, cfg)
    hist = rating_histogram(ratings)
    stats: dict[str, object] = {
        "total_ratings": len(ratings),
        "catalog_items": len(items),
        "rated_items": len({r.item_id for r in ratings}),
        "total_users": len({r.user_id for r in ratings}),
        "binarized_users": len(profiles),
        "filtered_users": len(kept),
        "train_users": len(train_ids),
        "test_users": len(test_ids),
        "positive_ratings": sum(c for v, c in hist.items() if v >= cfg.pos_threshold),
        "negative_ratings": sum(c for v, c in hist.items() if v <= cfg.neg_threshold),
        "discarded_ratings": sum(
            c for v, c in hist.items() if cfg.neg_threshold < v < cfg.pos_threshold
        ),
        "users_with_min_pos": sum(len(p.positives) >= cfg.min_pos for p in profiles),
        "users_with_min_neg": sum(len(p.negatives) >= cfg.min_neg for p in profiles),
    }
    for v, c in hist.items():
        stats[f"ratings_value_{v:g}"] = c
    return PreparedData(
        cfg,
        {it.item_id: it for it in items},
        {p.user_id: p for p in kept},
        train_ids,
        test_ids,
        stats,
    )
