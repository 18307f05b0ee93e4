"""Planted-structure data for tests and demos.

Two item clusters; every user likes items of one cluster and dislikes items
of the other. The text corpus enumerates same-cluster titles ("movies like
X, Y, Z"), so a language model fit on it can recover the clusters.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import EvalInstance, UserProfile, normalize_title

_FIRST_A = [
    "crimson", "scarlet", "ruby", "amber", "copper", "rust", "coral", "garnet", "cherry", "blaze",
    "ember", "flame", "cinder", "sunset", "brick", "maroon", "rose", "salmon", "tiger", "phoenix",
    "autumn", "lava", "pepper", "poppy", "sienna", "tawny", "ginger", "carmine", "vermilion", "fox",
]
_FIRST_B = [
    "azure", "cobalt", "indigo", "sapphire", "teal", "navy", "cyan", "glacier", "frost", "arctic",
    "harbor", "tide", "ocean", "river", "lagoon", "mist", "rain", "winter", "steel", "slate",
    "silver", "storm", "cloud", "denim", "iris", "lake", "marine", "polar", "sky", "wave",
]
_SECOND_A = ["Dawn", "Road", "Night", "Legacy", "Empire"]
_SECOND_B = ["Harbor", "Voyage", "Dream", "Garden", "Letter"]


@dataclass
class SyntheticCatalog:
    titles: dict[int, str]  # item_id -> raw title as it would appear in movies.dat
    cluster: dict[int, int]  # item_id -> 0 or 1

    def items_of(self, c: int) -> list[int]:
        return sorted(i for i, k in self.cluster.items() if k == c)


def make_catalog(n_per_cluster: int = 30) -> SyntheticCatalog:
    if n_per_cluster > len(_FIRST_A):
        raise ValueError(f"at most {len(_FIRST_A)} items per cluster")
    titles, cluster = {}, {}
    for c, (firsts, seconds) in enumerate(((_FIRST_A, _SECOND_A), (_FIRST_B, _SECOND_B))):
        for k in range(n_per_cluster):
            item_id = 1 + c * n_per_cluster + k
            title = f"{firsts[k].capitalize()} {seconds[k % len(seconds)]}"
            if k % 7 == 3:
                title = f"{title}, The"
            titles[item_id] = f"{title} ({1980 + (item_id % 30)})"
            cluster[item_id] = c
    return SyntheticCatalog(titles, cluster)


def movies_dat(catalog: SyntheticCatalog) -> str:
    genres = ("Action|Drama", "Comedy|Romance")
    return "".join(f"{i}::{t}::{genres[catalog.cluster[i]]}\n" for i, t in sorted(catalog.titles.items()))


def ratings_dat(catalog: SyntheticCatalog, n_users: int = 120, seed: int = 0, n_sparse: int = 5) -> str:
    """Each user: 22-30 liked own-cluster items (4/5), 4-8 disliked (1/2), a few neutral 3s.

    The last `n_sparse` users rate too few items to survive filtering.
    """
    rng = np.random.default_rng(seed)
    lines = []
    for u in range(1, n_users + 1):
        c = int(rng.integers(2))
        own, other = catalog.items_of(c), catalog.items_of(1 - c)
        sparse = u > n_users - n_sparse
        n_pos = int(rng.integers(5, 12)) if sparse else int(rng.integers(22, min(30, len(own)) + 1))
        n_neg = int(rng.integers(4, 9))
        pos = rng.choice(own, size=n_pos, replace=False)
        rest_own = [i for i in own if i not in set(pos.tolist())]
        neg = rng.choice(other, size=n_neg, replace=False)
        neutral = rng.choice(rest_own, size=min(2, len(rest_own)), replace=False) if rest_own else []
        ts = 978300000 + u * 1000
        entries = [(int(i), int(rng.integers(4, 6))) for i in pos]
        entries += [(int(i), int(rng.integers(1, 3))) for i in neg]
        entries += [(int(i), 3) for i in neutral]
        for i, r in entries:
            lines.append(f"{u}::{i}::{r}::{ts + int(rng.integers(0, 500))}")
    return "\n".join(lines) + "\n"


def planted_corpus(catalog: SyntheticCatalog, n_lines: int = 400, seed: int = 0) -> list[str]:
    """Enumerations of same-cluster titles in several corpus-style phrasings."""
    rng = np.random.default_rng(seed)
    names = {i: normalize_title(t) for i, t in catalog.titles.items()}
    lines = []
    for _ in range(n_lines):
        c = int(rng.integers(2))
        pool = catalog.items_of(c)
        k = int(rng.integers(2, 6))
        picks = [names[int(i)] for i in rng.choice(pool, size=k, replace=False)]
        style = int(rng.integers(4))
        if style == 0:
            lines.append("Movies like " + ", ".join(picks))
        elif style == 1:
            lines.append(", ".join(picks))
        elif style == 2:
            lines.append(f"{picks[0]} and {picks[1]}")
        else:
            lines.append("Movies similar to " + ", ".join(picks))
    return lines


def write_dataset(out_dir: str | Path, n_users: int = 120, n_per_cluster: int = 30, seed: int = 0) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cat = make_catalog(n_per_cluster)
    paths = {
        "ratings": out / "ratings.dat",
        "movies": out / "movies.dat",
        "corpus": out / "corpus.txt",
    }
    paths["ratings"].write_bytes(ratings_dat(cat, n_users, seed).encode("latin-1"))
    paths["movies"].write_bytes(movies_dat(cat).encode("latin-1"))
    paths["corpus"].write_text("\n".join(planted_corpus(cat, seed=seed)) + "\n", encoding="utf-8")
    return paths


def two_cluster_interactions(
    n_users: int = 50, n_items: int = 40, holdout: float = 0.2, n_neg: int = 4, seed: int = 0
) -> tuple[list[UserProfile], list[EvalInstance]]:
    """BPR benchmark: users in the first half like items 1..n/2, the rest like n/2+1..n.

    A `holdout` fraction of each user's liked items is removed from
    training; one of them becomes the positive candidate against `n_neg`
    items from the other cluster.
    """
    rng = np.random.default_rng(seed)
    half = n_items // 2
    profiles, instances = [], []
    for u in range(1, n_users + 1):
        liked = list(range(1, half + 1)) if u <= n_users // 2 else list(range(half + 1, n_items + 1))
        other = sorted(set(range(1, n_items + 1)) - set(liked))
        n_hold = max(1, int(round(holdout * len(liked))))
        held = [int(i) for i in rng.choice(liked, size=n_hold, replace=False)]
        train_pos = tuple(i for i in liked if i not in held)
        negs = [int(i) for i in rng.choice(other, size=n_neg, replace=False)]
        profiles.append(UserProfile(u, train_pos, ()))
        instances.append(EvalInstance(u, train_pos, tuple(sorted([(held[0], 1)] + [(j, 0) for j in negs]))))
    return profiles, instances
