"""MAP@1 evaluation and the three experiment runners.

With exactly one relevant candidate per user, MAP@1 is the fraction of
users whose top-ranked candidate is the held-out positive. Ties are broken
towards the smaller item id (never towards the positive) and counted.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable, Mapping, Sequence

import numpy as np

from . import bpr
from .dataset import STREAM_USERS, EvalInstance, Item, PreparedData, UserProfile, user_rng
from .prompt import ENUM, PromptTemplate, render, shuffle_context
from .scorer import Scorer

log = logging.getLogger(__name__)

DEFAULT_CONTEXT_SIZES = (0, 1, 2, 3, 5, 10, 15, 20)
DEFAULT_USER_COUNTS = (10, 25, 50, 100, 250, 500, 1000, 2173)
TSV_HEADER = "param\tmap_at_1\tci_lo\tci_hi\tties\tn_users\tscorer\tseed"

# relevance(instance, item_id) -> score
RelevanceFn = Callable[[EvalInstance, int], float]


class EvalError(RuntimeError):
    pass


@dataclass(frozen=True)
class RankedInstance:
    user_id: int
    ranking: tuple[tuple[int, float, int], ...]  # (item_id, score, label), best first
    tie: bool

    @property
    def top_item(self) -> int:
        return self.ranking[0][0]

    @property
    def correct(self) -> bool:
        return self.ranking[0][2] == 1


@dataclass
class EvalReport:
    map_at_1: float
    n_users: int
    rows: list[RankedInstance]
    ties: int
    ci: tuple[float, float]
    excluded: list[tuple[int, str]] = field(default_factory=list)

    def summary(self) -> dict[str, object]:
        return {
            "map_at_1": f"{self.map_at_1:.6f}",
            "n_users": self.n_users,
            "correct": sum(r.correct for r in self.rows),
            "ties": self.ties,
            "ci_lo": f"{self.ci[0]:.6f}",
            "ci_hi": f"{self.ci[1]:.6f}",
            "excluded": len(self.excluded),
        }


@dataclass(frozen=True)
class SweepRow:
    param: str
    map_at_1: float
    ci_lo: float
    ci_hi: float
    ties: int
    n_users: int
    scorer: str
    seed: int

    @classmethod
    def from_report(cls, param, report: EvalReport, scorer: str, seed: int) -> "SweepRow":
        return cls(str(param), report.map_at_1, report.ci[0], report.ci[1], report.ties, report.n_users, scorer, seed)

    def tsv(self) -> str:
        return (
            f"{self.param}\t{self.map_at_1:.6f}\t{self.ci_lo:.6f}\t{self.ci_hi:.6f}\t"
            f"{self.ties}\t{self.n_users}\t{self.scorer}\t{self.seed}"
        )


# -- relevance adapters -------------------------------------------------------


class PromptRelevance:
    """Scores a user's candidates by rendering one prompt per candidate.

    The context order is drawn once per user and shared by its candidates.
    If `trace` is a list, every rendered prompt is appended to it as
    (template, user_id, context order, candidate, full text).
    """

    def __init__(
        self,
        scorer: Scorer,
        template: PromptTemplate,
        items: Mapping[int, Item],
        seed: int = 0,
        per_token: bool = False,
        trace: list | None = None,
    ):
        self.scorer = scorer
        self.template = template
        self.items = items
        self.seed = seed
        self.per_token = per_token
        self.trace = trace

    def prompts(self, inst: EvalInstance):
        order = shuffle_context(inst.context_items, self.seed, inst.user_id)
        titles = [self.items[i].display_title for i in order]
        out = [render(self.template, titles, self.items[c].display_title, c) for c in inst.candidate_items]
        if self.trace is not None:
            for c, p in zip(inst.candidate_items, out):
                self.trace.append((self.template.name, inst.user_id, tuple(order), c, p.full_text))
        return out

    def score_instance(self, inst: EvalInstance) -> list[float]:
        return self.scorer.relevance_many(self.prompts(inst), self.per_token)

    def __call__(self, inst: EvalInstance, item_id: int) -> float:
        order = shuffle_context(inst.context_items, self.seed, inst.user_id)
        titles = [self.items[i].display_title for i in order]
        return self.scorer.relevance(render(self.template, titles, self.items[item_id].display_title, item_id), self.per_token)


class BprRelevance:
    def __init__(self, model: bpr.FactorModel):
        self.model = model

    def __call__(self, inst: EvalInstance, item_id: int) -> float:
        return self.model.predict(inst.user_id, item_id)


# -- ranking and MAP@1 ---------------------------------------------------------


def _scores(relevance, inst: EvalInstance) -> list[float]:
    batch = getattr(relevance, "score_instance", None)
    if batch is not None:
        scores = list(batch(inst))
    else:
        scores = [relevance(inst, i) for i in inst.candidate_items]
    if len(scores) != len(inst.candidates):
        raise EvalError(f"user {inst.user_id}: got {len(scores)} scores for {len(inst.candidates)} candidates")
    if any(s != s for s in scores):
        raise EvalError(f"user {inst.user_id}: NaN relevance score")
    return [float(s) for s in scores]


def rank_candidates(relevance, inst: EvalInstance) -> RankedInstance:
    scores = _scores(relevance, inst)
    ranking = sorted(
        ((item, s, label) for (item, label), s in zip(inst.candidates, scores)),
        key=lambda r: (-r[1], r[0]),
    )
    tie = len(ranking) > 1 and ranking[0][1] == ranking[1][1]
    return RankedInstance(inst.user_id, tuple(ranking), tie)


def bootstrap_ci(correct: np.ndarray, seed: int, n_boot: int = 1000, level: float = 0.95) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    n = len(correct)
    means = correct[rng.integers(n, size=(n_boot, n))].mean(axis=1)
    alpha = (1 - level) / 2
    lo, hi = np.quantile(means, [alpha, 1 - alpha])
    return float(lo), float(hi)


def evaluate(
    relevance,
    instances: Iterable[EvalInstance],
    seed: int = 0,
    lenient: bool = False,
    n_boot: int = 1000,
    workers: int = 1,
) -> EvalReport:
    instances = list(instances)
    if not instances:
        raise EvalError("no evaluation instances")

    def one(inst):
        try:
            return rank_candidates(relevance, inst), None
        except Exception as exc:
            if not lenient:
                raise EvalError(f"user {inst.user_id}: {exc}") from exc
            return None, (inst.user_id, str(exc))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, instances))
    else:
        results = [one(inst) for inst in instances]

    rows = sorted((r for r, _ in results if r is not None), key=lambda r: r.user_id)
    excluded = sorted(e for _, e in results if e is not None)
    for uid, msg in excluded:
        log.warning("excluded user %d: %s", uid, msg)
    if not rows:
        raise EvalError("every instance failed")
    correct = np.array([r.correct for r in rows], dtype=float)
    return EvalReport(
        map_at_1=float(correct.sum()) / len(rows),
        n_users=len(rows),
        rows=rows,
        ties=sum(r.tie for r in rows),
        ci=bootstrap_ci(correct, seed, n_boot),
        excluded=excluded,
    )


# -- experiment runners --------------------------------------------------------


def sweep_context_size(
    scorer: Scorer,
    data: PreparedData,
    sizes: Sequence[int] = DEFAULT_CONTEXT_SIZES,
    seed: int = 0,
    template: PromptTemplate = ENUM,
    per_token: bool = False,
    **eval_kw,
) -> list[SweepRow]:
    """Same users and candidates for every size; contexts are nested prefixes."""
    if not sizes:
        return []
    base = data.instances(context_size=max(sizes))
    rows = []
    for n in sizes:
        insts = [inst.with_context(inst.context_items[:n]) for inst in base]
        rel = PromptRelevance(scorer, template, data.items, seed, per_token)
        report = evaluate(rel, insts, seed=seed, **eval_kw)
        rows.append(SweepRow.from_report(n, report, scorer.identifier, seed))
        log.info("context n=%d map@1=%.4f", n, report.map_at_1)
    return rows


def compare_templates(
    scorer: Scorer,
    data: PreparedData,
    templates: Sequence[PromptTemplate],
    seed: int = 0,
    context_size: int | None = None,
    trace: list | None = None,
    per_token: bool = False,
    **eval_kw,
) -> list[SweepRow]:
    """Only the rendered text differs between rows."""
    insts = data.instances(context_size)
    rows = []
    for t in templates:
        report = evaluate(PromptRelevance(scorer, t, data.items, seed, per_token, trace), insts, seed=seed, **eval_kw)
        rows.append(SweepRow.from_report(t.name, report, scorer.identifier, seed))
        log.info("template %s map@1=%.4f", t.name, report.map_at_1)
    return rows


def sample_train_users(train_ids: Sequence[int], count: int, seed: int) -> list[int]:
    """Seeded sample of `count` users; samples for smaller counts are prefixes."""
    if not 1 <= count <= len(train_ids):
        raise EvalError(f"user count {count} outside [1, {len(train_ids)}]")
    perm = user_rng(seed, 0, STREAM_USERS).permutation(len(train_ids))
    ordered = sorted(train_ids)
    return [ordered[int(k)] for k in perm[:count]]


def bpr_training_profiles(data: PreparedData, train_users: Sequence[int], instances: Sequence[EvalInstance]) -> list[UserProfile]:
    """Sampled training users' full profiles plus each test user's context positives."""
    profiles = [data.profiles[u] for u in train_users]
    profiles += [UserProfile(inst.user_id, inst.context_items, ()) for inst in instances]
    return profiles


def sweep_train_users(
    data: PreparedData,
    user_counts: Sequence[int],
    bpr_cfg: bpr.BprConfig,
    baselines: Mapping[str, Scorer] | Sequence[Scorer] = (),
    seed: int = 0,
    template: PromptTemplate = ENUM,
    context_size: int | None = None,
    per_token: bool = False,
    **eval_kw,
) -> list[SweepRow]:
    """Zero-shot rows (param 0) first, then one BPR row per training-user count."""
    insts = data.instances(context_size)
    scorers = list(baselines.values()) if isinstance(baselines, Mapping) else list(baselines)
    rows = []
    for scorer in scorers:
        report = evaluate(PromptRelevance(scorer, template, data.items, seed, per_token), insts, seed=seed, **eval_kw)
        rows.append(SweepRow.from_report(0, report, scorer.identifier, seed))
    for c in user_counts:
        users = sample_train_users(data.train_ids, c, seed)
        model = bpr.train(bpr_training_profiles(data, users, insts), bpr_cfg, items=data.items.keys())
        report = evaluate(BprRelevance(model), insts, seed=seed, **eval_kw)
        rows.append(SweepRow.from_report(c, report, f"bpr(d={bpr_cfg.d},lr={bpr_cfg.learning_rate:g})", seed))
        log.info("bpr users=%d map@1=%.4f", c, report.map_at_1)
    return rows


# -- output ----------------------------------------------------------------------


def write_sweep(rows: Iterable[SweepRow], fh: IO[str]) -> None:
    fh.write(TSV_HEADER + "\n")
    for r in rows:
        fh.write(r.tsv() + "\n")


def write_summary(values: Mapping[str, object], fh: IO[str]) -> None:
    for k, v in values.items():
        fh.write(f"{k}={v}\n")


def write_per_user(report: EvalReport, fh: IO[str]) -> None:
    fh.write("user_id\ttop_item\tcorrect\ttie\n")
    for r in report.rows:
        fh.write(f"{r.user_id}\t{r.top_item}\t{int(r.correct)}\t{int(r.tie)}\n")
