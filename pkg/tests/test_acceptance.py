"""One test per acceptance criterion; the terminal summary prints a line for each."""

import os
import random
import time

import numpy as np
import pytest

from conftest import ml1m_dir
from oracles import brute_logprob, brute_window_counts
from zsrec import bpr, cli, synthetic
from zsrec.dataset import DatasetConfig, Item, parse_items, parse_ratings, prepare
from zsrec.evaluation import (
    BprRelevance,
    PromptRelevance,
    compare_templates,
    evaluate,
    sweep_context_size,
)
from zsrec.mining import build_matcher, count_patterns, tag_corpus
from zsrec.prompt import ENUM, IF_YOU_LIKE, MOVIES_LIKE, render
from zsrec.scorer import RandomScorer, fit_ngram
from zsrec.text import tokenize

pytestmark = pytest.mark.acceptance

HAND = ["the cat sat on the mat .", "the dog sat on the log .", "a cat saw a dog ."]
WORDS = ["the", "cat", "sat", "on", "mat", "dog", "log", "a", "saw", ".", "zebra"]


def _load(directory):
    ratings = parse_ratings((directory / "ratings.dat").read_bytes())
    items = parse_items((directory / "movies.dat").read_bytes())
    return ratings, items


@pytest.fixture(scope="module")
def chance_data(tmp_path_factory):
    """MovieLens 1M when available, else a synthetic set in the same format and size."""
    d = ml1m_dir()
    if d is None:
        d = tmp_path_factory.mktemp("chance")
        synthetic.write_dataset(d, n_users=2721, seed=0)
    return prepare(*_load(d), DatasetConfig(seed=0))


def test_criterion_1_dataset_protocol():
    d = ml1m_dir()
    if d is None:
        pytest.skip("MovieLens 1M not found (set ZSREC_ML1M_DIR or place it in data/ml-1m)")
    t0 = time.perf_counter()
    ratings, items = _load(d)
    data = prepare(ratings, items, DatasetConfig())
    elapsed = time.perf_counter() - t0
    hist = {k: v for k, v in data.stats.items() if k.startswith("ratings_value_")}
    print(f"filtered_users={data.stats['filtered_users']} histogram={hist} runtime={elapsed:.1f}s")
    assert data.stats["filtered_users"] == 2716, f"achieved {data.stats['filtered_users']}; histogram {hist}"
    assert elapsed < 60


def test_criterion_2_chance_level(chance_data):
    insts = chance_data.instances()
    assert 500 <= len(insts) <= 600
    r = evaluate(PromptRelevance(RandomScorer(0), ENUM, chance_data.items, 0), insts, seed=0)
    again = evaluate(PromptRelevance(RandomScorer(0), ENUM, chance_data.items, 0), insts, seed=0)
    assert 0.166 <= r.map_at_1 <= 0.234
    assert r.rows == again.rows and r.ci == again.ci


def test_criterion_3_scorer_exactness():
    toks = [tokenize(l) for l in HAND]
    assert sum(map(len, toks)) == 20
    m = fit_ngram(HAND)
    rng = random.Random(3)
    for _ in range(50):
        seq = [rng.choice(WORDS) for _ in range(rng.randint(1, 8))]
        assert abs(m.score_full(" ".join(seq)).total_logprob - brute_logprob(toks, 3, (0.1, 0.3, 0.6), 1, seq)) <= 1e-9
    for _ in range(100):
        dist = m.next_distribution([rng.choice(WORDS) for _ in range(rng.randint(0, 3))])
        assert abs(sum(dist.values()) - 1) <= 1e-9


def test_criterion_4_ranking_equivalence():
    m = fit_ngram(HAND)
    rng = random.Random(4)

    def phrase():
        return " ".join(rng.choice(WORDS) for _ in range(rng.randint(1, 3)))

    for _ in range(100):
        context = [phrase() for _ in range(rng.randint(0, 4))]
        cands = [phrase() for _ in range(5)]
        prompts = [render(ENUM, context, c, k) for k, c in enumerate(cands)]
        full = [m.score_full(p.full_text).total_logprob for p in prompts]
        cont = [m.score_continuation(p.prefix_text, p.continuation_text).total_logprob for p in prompts]
        batched = m.relevance_many(prompts)

        def order(s):
            return sorted(range(5), key=lambda k: (-s[k], k))

        assert order(full) == order(cont) == order(batched)


def test_criterion_5_bpr():
    rng = np.random.default_rng(5)
    worst = max(bpr.gradient_check(bpr.BprConfig(d=10, reg_lambda=0.01), rng=rng) for _ in range(100))
    assert worst < 1e-4
    profiles, instances = synthetic.two_cluster_interactions(n_users=50, n_items=40, seed=0)
    t0 = time.perf_counter()
    model = bpr.train(profiles, bpr.BprConfig(d=10, epochs=100, learning_rate=0.01, init_scale=0.01))
    report = evaluate(BprRelevance(model), instances)
    elapsed = time.perf_counter() - t0
    print(f"grad_check_max_rel_err={worst:.2e} map_at_1={report.map_at_1:.3f} runtime={elapsed:.2f}s")
    assert report.map_at_1 >= 0.9
    assert elapsed < 30


def test_criterion_6_mining_exactness():
    rng = random.Random(6)
    titles = ["The Matrix", "Star Wars", "Toy Story", "Blade Runner", "Pulp Fiction", "The Big Lebowski"]
    items = [Item(k, t, t) for k, t in enumerate(titles, start=1)]
    fillers = ["I", "really", "enjoyed", "the", "best", "films", "ever"]
    lines, expected_tagged = [], []
    # planted phrasings; the tagged form is known without running the matcher
    for _ in range(400):
        picks = rng.sample(titles, 3)
        style = rng.randrange(4)
        if style == 0:
            text, tagged = f"Movies like {picks[0]}", ["movies", "like", "<m>"]
        elif style == 1:
            text, tagged = f"{picks[0]} and {picks[1]}", ["<m>", "and", "<m>"]
        elif style == 2:
            text, tagged = ", ".join(picks), ["<m>", ",", "<m>", ",", "<m>"]
        else:
            words = rng.sample(fillers, 3)
            text, tagged = " ".join(words), None
        lines.append(text)
        if tagged is not None:
            expected_tagged.append(tagged)
    n_tokens = sum(len(tokenize(l)) for l in lines)
    assert n_tokens <= 10_000
    got_tagged = list(tag_corpus(lines, build_matcher(items)))
    assert got_tagged == expected_tagged
    got = {p.pattern: p.count for p in count_patterns(got_tagged)}
    assert got == brute_window_counts(expected_tagged)
    for pat in ("movies like <m>", "<m> and <m>", "<m> , <m> , <m>"):
        assert got[tuple(pat.split())] == brute_window_counts(expected_tagged)[tuple(pat.split())] > 0


def test_criterion_7_sweep_plumbing(synth_data, synth_ngram):
    class Spy:
        identifier = "spy"

        def __init__(self):
            self.seen = []

        def relevance_many(self, prompts, per_token=False):
            self.seen.extend(prompts)
            return [0.0] * len(prompts)

    sizes = (0, 1, 3, 5)
    spy = Spy()
    sweep_context_size(spy, synth_data, sizes, seed=0)
    per = len(spy.seen) // len(sizes)
    blocks = [spy.seen[k * per:(k + 1) * per] for k in range(len(sizes))]
    assert len({tuple(p.candidate_item for p in b) for b in blocks}) == 1
    base = synth_data.instances(5)
    for n in sizes:
        for inst, nested in zip(base, synth_data.instances(n)):
            assert nested.context_items == inst.context_items[:n] and nested.candidates == inst.candidates

    trace = []
    compare_templates(synth_ngram, synth_data, [ENUM, MOVIES_LIKE, IF_YOU_LIKE], seed=0, trace=trace)
    keys = {}
    for name, uid, order, cand, text in trace:
        keys.setdefault(name, []).append((uid, order, cand))
    assert keys["ENUM"] == keys["MOVIES_LIKE"] == keys["IF_YOU_LIKE"]
    assert len({t[4] for t in trace}) > len(keys["ENUM"])


def test_criterion_8_determinism(tmp_path, synth_paths, capsys):
    args = ["--ratings", synth_paths["ratings"], "--movies", synth_paths["movies"], "--corpus", synth_paths["corpus"], "--seed", "11"]
    args = [str(a) for a in args]
    for run in ("a", "b"):
        out = str(tmp_path / run)
        assert cli.main(["prepare", *args, "--out-dir", out]) == 0
        assert cli.main(["eval", *args, "--scorer", "ngram", "--out-dir", out]) == 0
    capsys.readouterr()
    for name in ("instances.jsonl", "report.tsv", "per_user.tsv", "summary.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


@pytest.mark.external
def test_criterion_9_remote_directional():
    endpoint, d = os.environ.get("ZSREC_ENDPOINT"), ml1m_dir()
    if not endpoint or d is None:
        pytest.skip("needs ZSREC_ENDPOINT (GPT-2-class model) and MovieLens 1M")
    from zsrec.scorer import RemoteScorer, RemoteScorerConfig

    data = prepare(*_load(d), DatasetConfig())
    with RemoteScorer(RemoteScorerConfig.from_env()) as lm:
        fig1 = {r.param: r.map_at_1 for r in compare_templates(lm, data, [ENUM, MOVIES_LIKE, IF_YOU_LIKE])}
        fig2 = {int(r.param): r.map_at_1 for r in sweep_context_size(lm, data, (0, 1, 5))}
    print(f"templates={fig1} context={fig2}")
    assert min(fig1["ENUM"], fig1["MOVIES_LIKE"]) >= fig1["IF_YOU_LIKE"]
    assert fig2[0] > 0.2
    assert fig2[5] >= fig2[1]
