"""Bayesian Personalized Ranking matrix factorization.

Relevance is the plain dot product p_u . q_i (no bias terms). Training
runs SGD on triples (u, i, j), i a positive of u and j any item that is not,
maximizing ln sigmoid(x_uij) with x_uij = p_u . q_i - p_u . q_j and L2
penalty lambda/2 * ||theta||^2 on the touched rows.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .dataset import UserProfile

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

log = logging.getLogger(__name__)

ARTIFACT_FORMAT = "zsrec-bpr-v1"


class BprError(ValueError):
    pass


class UnknownEntityError(KeyError):
    pass


@dataclass(frozen=True)
class BprConfig:
    d: int = 10
    learning_rate: float = 0.001
    epochs: int = 100
    reg_lambda: float = 0.01
    init_scale: float = 0.01
    seed: int = 0
    probe_size: int = 1000

    def __post_init__(self):
        if self.d < 1:
            raise BprError("d must be >= 1")
        if not self.learning_rate > 0:
            raise BprError("learning_rate must be > 0")
        if self.reg_lambda < 0:
            raise BprError("reg_lambda must be >= 0")
        if self.epochs < 0 or self.init_scale < 0:
            raise BprError("epochs and init_scale must be non-negative")


@dataclass
class FactorModel:
    user_index: dict[int, int]
    item_index: dict[int, int]
    user_factors: np.ndarray
    item_factors: np.ndarray
    history: list[tuple[int, float]] = field(default_factory=list)

    @property
    def d(self) -> int:
        return self.user_factors.shape[1]

    def _rows(self, user_id: int, item_id: int) -> tuple[int, int]:
        try:
            u = self.user_index[user_id]
        except KeyError:
            raise UnknownEntityError(f"unknown user {user_id}") from None
        try:
            i = self.item_index[item_id]
        except KeyError:
            raise UnknownEntityError(f"unknown item {item_id}") from None
        return u, i

    def predict(self, user_id: int, item_id: int) -> float:
        u, i = self._rows(user_id, item_id)
        return float(self.user_factors[u] @ self.item_factors[i])

    def save(self, path: str | Path) -> None:
        users = np.array(sorted(self.user_index, key=self.user_index.get), dtype=np.int64)
        items = np.array(sorted(self.item_index, key=self.item_index.get), dtype=np.int64)
        with open(path, "wb") as fh:
            np.savez(
                fh,
                format=np.array(ARTIFACT_FORMAT),
                d=np.array(self.d, dtype=np.int64),
                user_ids=users,
                item_ids=items,
                user_factors=np.ascontiguousarray(self.user_factors, dtype=np.float64),
                item_factors=np.ascontiguousarray(self.item_factors, dtype=np.float64),
            )

    @classmethod
    def load(cls, path: str | Path) -> "FactorModel":
        with np.load(path, allow_pickle=False) as z:
            if str(z["format"]) != ARTIFACT_FORMAT:
                raise BprError(f"{path}: not a {ARTIFACT_FORMAT} artifact")
            uf, itf = z["user_factors"], z["item_factors"]
            if uf.shape[1] != int(z["d"]) or itf.shape[1] != int(z["d"]):
                raise BprError(f"{path}: factor width does not match d")
            return cls(
                {int(u): k for k, u in enumerate(z["user_ids"])},
                {int(i): k for k, i in enumerate(z["item_ids"])},
                uf.copy(),
                itf.copy(),
            )


def predict(model: FactorModel, user_id: int, item_id: int) -> float:
    return model.predict(user_id, item_id)


@njit(cache=True)
def _sgd_pass(P, Q, us, is_, js, lr, reg):
    d = P.shape[1]
    for k in range(us.shape[0]):
        u = us[k]
        i = is_[k]
        j = js[k]
        x = 0.0
        for f in range(d):
            x += P[u, f] * (Q[i, f] - Q[j, f])
        e = 1.0 / (1.0 + math.exp(x))
        for f in range(d):
            pu = P[u, f]
            qi = Q[i, f]
            qj = Q[j, f]
            P[u, f] = pu + lr * (e * (qi - qj) - reg * pu)
            Q[i, f] = qi + lr * (e * pu - reg * qi)
            Q[j, f] = qj + lr * (-e * pu - reg * qj)


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


class _TripleSampler:
    """Draws (u, i, j): (u, i) uniform over positive interactions, j uniform over u's non-positives."""

    def __init__(self, pos_mask: np.ndarray):
        self.pos_mask = pos_mask
        n_items = pos_mask.shape[1]
        eligible = pos_mask.sum(axis=1) < n_items  # a user who likes everything has no j
        us, is_ = np.nonzero(pos_mask & eligible[:, None])
        self.pair_u = us.astype(np.int64)
        self.pair_i = is_.astype(np.int64)
        self.n_items = n_items

    def __len__(self) -> int:
        return len(self.pair_u)

    def draw(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        idx = rng.integers(len(self.pair_u), size=size)
        us, is_ = self.pair_u[idx], self.pair_i[idx]
        js = rng.integers(self.n_items, size=size)
        bad = self.pos_mask[us, js]
        while bad.any():
            js[bad] = rng.integers(self.n_items, size=int(bad.sum()))
            bad = self.pos_mask[us, js]
        return us, is_, js


def train(
    profiles: Iterable[UserProfile],
    cfg: BprConfig,
    items: Iterable[int] | None = None,
    on_epoch: Callable[[int, float], None] | None = None,
) -> FactorModel:
    """Fit user/item factors on the positives of `profiles`.

    Negatives in the profiles never enter training; they only extend the
    item universe. `items` adds further item ids to the universe (e.g. the
    whole catalog, so that every evaluation candidate has a row).
    """
    profiles = list(profiles)
    universe = set(items or ())
    for p in profiles:
        universe.update(p.positives)
        universe.update(p.negatives)
    user_ids = sorted({p.user_id for p in profiles})
    item_ids = sorted(universe)
    user_index = {u: k for k, u in enumerate(user_ids)}
    item_index = {i: k for k, i in enumerate(item_ids)}

    pos_mask = np.zeros((len(user_ids), len(item_ids)), dtype=bool)
    for p in profiles:
        for i in p.positives:
            pos_mask[user_index[p.user_id], item_index[i]] = True
    sampler = _TripleSampler(pos_mask)
    if len(sampler) == 0:
        raise BprError("no trainable positive interactions")

    rng = np.random.default_rng(cfg.seed)
    P = rng.normal(0.0, cfg.init_scale, size=(len(user_ids), cfg.d))
    Q = rng.normal(0.0, cfg.init_scale, size=(len(item_ids), cfg.d))
    probe = sampler.draw(np.random.default_rng([cfg.seed, 1]), min(cfg.probe_size, max(len(sampler), 1)))

    model = FactorModel(user_index, item_index, P, Q)
    for epoch in range(1, cfg.epochs + 1):
        us, is_, js = sampler.draw(rng, len(sampler))
        _sgd_pass(P, Q, us, is_, js, cfg.learning_rate, cfg.reg_lambda)
        pu, qi, qj = P[probe[0]], Q[probe[1]], Q[probe[2]]
        fit = float(np.mean(_log_sigmoid(np.einsum("kd,kd->k", pu, qi - qj))))
        model.history.append((epoch, fit))
        if on_epoch is not None:
            on_epoch(epoch, fit)
        log.debug("epoch %d mean ln sigma(x) = %.6f", epoch, fit)
    if not (np.isfinite(P).all() and np.isfinite(Q).all()):
        raise BprError("training diverged (non-finite factors); lower the learning rate")
    return model


# -- gradient checking -------------------------------------------------------


def triple_loss(p_u: np.ndarray, q_i: np.ndarray, q_j: np.ndarray, reg: float) -> float:
    x = float(p_u @ (q_i - q_j))
    return -float(_log_sigmoid(np.array(x))) + 0.5 * reg * float(p_u @ p_u + q_i @ q_i + q_j @ q_j)


def triple_gradients(p_u, q_i, q_j, reg):
    """Gradients of `triple_loss`; the SGD pass steps along their negatives."""
    x = float(p_u @ (q_i - q_j))
    e = 1.0 / (1.0 + math.exp(x))
    return -e * (q_i - q_j) + reg * p_u, -e * p_u + reg * q_i, e * p_u + reg * q_j


def gradient_check(
    cfg: BprConfig,
    probe: tuple[int, int, int] | None = None,
    n_users: int = 3,
    n_items: int = 5,
    h: float = 1e-5,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Builds a small random model, picks (or uses) a probe triple and
    differentiates the per-triple loss with respect to every entry of every
    touched row. With i == j the two item rows are the same parameter, so
    their gradients are summed.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    P = rng.normal(size=(n_users, cfg.d))
    Q = rng.normal(size=(n_items, cfg.d))
    if probe is None:
        probe = (int(rng.integers(n_users)), int(rng.integers(n_items)), int(rng.integers(n_items)))
    u, i, j = probe
    reg = cfg.reg_lambda

    def loss(P, Q):
        return triple_loss(P[u], Q[i], Q[j], reg)

    g_pu, g_qi, g_qj = triple_gradients(P[u], Q[i], Q[j], reg)
    analytic_Q = {i: g_qi.copy()}
    analytic_Q[j] = analytic_Q[j] + g_qj if j == i else g_qj

    worst = 0.0

    def compare(analytic: float, numeric: float) -> float:
        return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)

    for f in range(cfg.d):
        Pp, Pm = P.copy(), P.copy()
        Pp[u, f] += h
        Pm[u, f] -= h
        worst = max(worst, compare(g_pu[f], (loss(Pp, Q) - loss(Pm, Q)) / (2 * h)))
        for row, grad in analytic_Q.items():
            Qp, Qm = Q.copy(), Q.copy()
            Qp[row, f] += h
            Qm[row, f] -= h
            worst = max(worst, compare(grad[f], (loss(P, Qp) - loss(P, Qm)) / (2 * h)))
    return worst


def score_triples(model: FactorModel, triples: Sequence[tuple[int, int, int]]) -> np.ndarray:
    """x_uij for (user_id, item_i, item_j) triples."""
    out = np.empty(len(triples))
    for k, (u, i, j) in enumerate(triples):
        out[k] = model.predict(u, i) - model.predict(u, j)
    return out
