"""zsrec command line.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bpr, evaluation, mining, synthetic
from .config import SCORERS, ConfigError, RunConfig, load_config, require_paths
from .dataset import (
    DatasetError,
    ParseError,
    PreparedData,
    parse_items,
    parse_ratings,
    prepare,
    write_instances,
)
from .prompt import TemplateError, get_template, load_templates, render, shuffle_context
from .scorer import (
    PopularityScorer,
    RandomScorer,
    RemoteScorer,
    RemoteScorerConfig,
    Scorer,
    ScorerError,
    UnsupportedOperation,
    fit_ngram,
)
from .scorer.remote import ENV_ENDPOINT

log = logging.getLogger("zsrec")

FIG_FILES = {"templates": "fig1_templates.tsv", "context": "fig2_context.tsv", "users": "fig3_users.tsv"}


class UsageError(Exception):
    pass


# -- shared helpers --------------------------------------------------------------


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(cfg.resolved())
    return out


def _load_data(cfg: RunConfig) -> PreparedData:
    paths = require_paths(cfg, "ratings", "movies")
    dcfg = cfg.dataset_config()
    with open(paths["ratings"], "rb") as fh:
        ratings = parse_ratings(fh)
    with open(paths["movies"], "rb") as fh:
        items = parse_items(fh, dcfg.foreign_articles)
    return prepare(ratings, items, dcfg)


def _templates(cfg: RunConfig):
    if not cfg.templates_file:
        return []
    with open(require_paths(cfg, "templates_file")["templates_file"], encoding="utf-8") as fh:
        return load_templates(fh)


def _corpus_lines(cfg: RunConfig):
    path = require_paths(cfg, "corpus")["corpus"]
    with open(path, encoding="utf-8", errors="replace") as fh:
        return list(mining.read_corpus(fh, cfg.corpus_column, cfg.corpus_delimiter))


def _remote_config(cfg: RunConfig) -> RemoteScorerConfig:
    try:
        return RemoteScorerConfig.from_env(
            endpoint=cfg.endpoint,
            model=cfg.model_id,
            timeout=cfg.timeout,
            max_retries=cfg.max_retries,
            max_batch_size=cfg.max_batch_size,
            max_concurrent_requests=cfg.max_concurrent,
        )
    except ValueError as exc:
        raise ConfigError(f"remote scorer: {exc} (set --endpoint or {ENV_ENDPOINT})") from None


def _build_scorer(cfg: RunConfig, data: PreparedData, name: str | None = None) -> Scorer:
    name = name or cfg.scorer
    if name == "ngram":
        return fit_ngram(_corpus_lines(cfg), cfg.ngram_order, cfg.ngram_weights, cfg.ngram_unk_mass)
    if name == "random":
        return RandomScorer(cfg.seed)
    if name == "popularity":
        return PopularityScorer(data.train_profiles())
    if name == "remote":
        return RemoteScorer(_remote_config(cfg))
    raise UsageError(f"scorer {name!r} is not a prompt scorer")


def _bpr_model(cfg: RunConfig, data: PreparedData, instances) -> bpr.FactorModel:
    if cfg.model_path and Path(cfg.model_path).exists():
        return bpr.FactorModel.load(cfg.model_path)
    profiles = evaluation.bpr_training_profiles(data, data.train_ids, instances)
    return bpr.train(profiles, cfg.bpr_config(), items=data.items.keys())


# -- commands ---------------------------------------------------------------------


def cmd_prepare(cfg: RunConfig) -> int:
    data = _load_data(cfg)
    out = _out_dir(cfg)
    instances = data.instances()
    with open(out / "instances.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        write_instances(instances, fh)
    stats = dict(data.stats)
    stats["instances"] = len(instances)
    stats["context_size"] = data.cfg.context_size
    with open(out / "stats.txt", "w", encoding="utf-8") as fh:
        evaluation.write_summary(stats, fh)
    for k, v in stats.items():
        print(f"{k}\t{v}")
    return 0


def cmd_mine(cfg: RunConfig) -> int:
    paths = require_paths(cfg, "movies", "corpus")
    with open(paths["movies"], "rb") as fh:
        items = parse_items(fh, cfg.foreign_articles)
    matcher = mining.build_matcher(items, cfg.min_title_tokens)
    log.info("matcher: %d titles indexed, %d excluded by min-token/stop-title rules", matcher.n_titles, len(matcher.excluded))
    patterns = mining.mine(_corpus_lines(cfg), matcher, cfg.n_min, cfg.n_max)
    if not patterns:
        log.warning("no catalog titles found in corpus; pattern table is empty")
    out = _out_dir(cfg)
    top = patterns[: cfg.top_k] if cfg.top_k else patterns
    with open(out / "patterns.tsv", "w", encoding="utf-8") as fh:
        mining.write_patterns(top, fh)
    with open(out / "excluded_titles.txt", "w", encoding="utf-8") as fh:
        fh.writelines(t + "\n" for t in matcher.excluded)
    for p in top:
        print(f"{p.text}\t{p.count}")
    return 0


def cmd_train_bpr(cfg: RunConfig) -> int:
    data = _load_data(cfg)
    out = _out_dir(cfg)
    instances = data.instances()
    profiles = evaluation.bpr_training_profiles(data, data.train_ids, instances)
    model = bpr.train(
        profiles,
        cfg.bpr_config(),
        items=data.items.keys(),
        on_epoch=lambda e, fit: log.info("epoch %d mean ln sigma(x) %.6f", e, fit),
    )
    path = Path(cfg.model_path) if cfg.model_path else out / "bpr_model.npz"
    model.save(path)
    with open(out / "train_log.tsv", "w", encoding="utf-8") as fh:
        fh.write("epoch\tmean_log_sigmoid\n")
        for epoch, fit in model.history:
            fh.write(f"{epoch}\t{fit:.6f}\n")
    report = evaluation.evaluate(evaluation.BprRelevance(model), instances, seed=cfg.seed)
    print(f"model\t{path}")
    print(f"map_at_1\t{report.map_at_1:.6f}")
    return 0


def _run_sweep(cfg: RunConfig, data: PreparedData, out: Path) -> None:
    kind = cfg.sweep
    eval_kw = {"lenient": not cfg.strict, "workers": cfg.workers}
    extra = _templates(cfg)
    template = get_template(cfg.template, extra)
    if kind == "context":
        scorer = _build_scorer(cfg, data)
        rows = evaluation.sweep_context_size(scorer, data, cfg.sizes, cfg.seed, template, cfg.per_token, **eval_kw)
    elif kind == "templates":
        scorer = _build_scorer(cfg, data)
        names = list(cfg.templates) + [t.name for t in extra if t.name not in cfg.templates]
        templates = [get_template(n, extra) for n in names]
        rows = evaluation.compare_templates(scorer, data, templates, cfg.seed, per_token=cfg.per_token, **eval_kw)
    else:
        baselines = [] if cfg.scorer == "bpr" else [_build_scorer(cfg, data)]
        counts = [min(c, len(data.train_ids)) for c in cfg.user_counts]
        counts = list(dict.fromkeys(counts))
        rows = evaluation.sweep_train_users(
            data, counts, cfg.bpr_config(), baselines, cfg.seed, template, per_token=cfg.per_token, **eval_kw
        )
    with open(out / FIG_FILES[kind], "w", encoding="utf-8", newline="\n") as fh:
        evaluation.write_sweep(rows, fh)
    for r in rows:
        print(r.tsv())


def cmd_eval(cfg: RunConfig) -> int:
    data = _load_data(cfg)
    out = _out_dir(cfg)
    if cfg.sweep:
        _run_sweep(cfg, data, out)
        return 0
    instances = data.instances()
    if cfg.scorer == "bpr":
        relevance = evaluation.BprRelevance(_bpr_model(cfg, data, instances))
        scorer_id = f"bpr(d={cfg.bpr_d},lr={cfg.bpr_lr:g})"
        param = "bpr"
    else:
        scorer = _build_scorer(cfg, data)
        template = get_template(cfg.template, _templates(cfg))
        relevance = evaluation.PromptRelevance(scorer, template, data.items, cfg.seed, cfg.per_token)
        scorer_id = scorer.identifier
        param = template.name
    report = evaluation.evaluate(relevance, instances, seed=cfg.seed, lenient=not cfg.strict, workers=cfg.workers)
    row = evaluation.SweepRow.from_report(param, report, scorer_id, cfg.seed)
    with open(out / "report.tsv", "w", encoding="utf-8", newline="\n") as fh:
        evaluation.write_sweep([row], fh)
    with open(out / "per_user.tsv", "w", encoding="utf-8", newline="\n") as fh:
        evaluation.write_per_user(report, fh)
    summary = {"scorer": scorer_id, "template": param, "seed": cfg.seed, **report.summary()}
    if cfg.scorer == "remote":
        summary["endpoint"] = _remote_config(cfg).endpoint
        summary["model_id"] = _remote_config(cfg).model
    with open(out / "summary.txt", "w", encoding="utf-8") as fh:
        evaluation.write_summary(summary, fh)
    for uid, msg in report.excluded:
        print(f"excluded user {uid}: {msg}", file=sys.stderr)
    print(evaluation.TSV_HEADER)
    print(row.tsv())
    return 0


def cmd_complete(cfg: RunConfig, prompt_text: str | None, user_id: int | None) -> int:
    if cfg.scorer != "remote":
        raise UnsupportedOperation(f"completion needs --scorer remote (got {cfg.scorer})")
    if (prompt_text is None) == (user_id is None):
        raise UsageError("give exactly one of --prompt or --user")
    paths = require_paths(cfg, "movies")
    with open(paths["movies"], "rb") as fh:
        items = parse_items(fh, cfg.foreign_articles)
    catalog = {it.item_id: it for it in items}
    if user_id is not None:
        data = _load_data(cfg)
        inst = next((i for i in data.instances() if i.user_id == user_id), None)
        if inst is None:
            raise UsageError(f"user {user_id} is not a test user")
        order = shuffle_context(inst.context_items, cfg.seed, user_id)
        prompt_text = ", ".join(catalog[i].display_title for i in order) + ":"
    matcher = mining.build_matcher(items, cfg.min_title_tokens)
    with RemoteScorer(_remote_config(cfg)) as scorer:
        completion = scorer.generate(prompt_text, cfg.max_tokens, greedy=True)
    print(f"prompt\t{prompt_text}")
    print(f"completion\t{completion}")
    found = mining.extract_items(completion, matcher)
    for item_id in found:
        print(f"item\t{item_id}\t{catalog[item_id].display_title}")
    if not found:
        print("item\t(none)")
    return 0


def cmd_synth(out_dir: str, n_users: int, seed: int) -> int:
    paths = synthetic.write_dataset(out_dir, n_users=n_users, seed=seed)
    for k, p in paths.items():
        print(f"{k}\t{p}")
    return 0


# -- argument parsing -------------------------------------------------------------


def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=argparse.FileType("r"), help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--scorer", choices=SCORERS)
    p.add_argument("--template")
    p.add_argument("--endpoint", help=f"remote scoring endpoint (overridden by ${ENV_ENDPOINT})")
    p.add_argument("--model-id", dest="model_id")
    p.add_argument("--strict", dest="strict", action="store_true", default=None)
    p.add_argument("--lenient", dest="strict", action="store_false")
    p.add_argument("--ratings")
    p.add_argument("--movies")
    p.add_argument("--corpus")
    p.add_argument("--model-path", dest="model_path")
    p.add_argument("--templates-file", dest="templates_file")
    p.add_argument("--context-size", dest="context_size", type=int)
    p.add_argument("--per-token", dest="per_token", action="store_true", default=None)
    p.add_argument("--workers", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zsrec", description="Zero-shot recommendation by LM prompt likelihood")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="parse MovieLens files and write evaluation instances")
    _add_shared(p)

    p = sub.add_parser("mine", help="count 3-6-gram patterns around catalog titles in a corpus")
    _add_shared(p)
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--column", dest="corpus_column", type=int, help="take this field of a delimited corpus")
    p.add_argument("--delimiter", dest="corpus_delimiter")

    p = sub.add_parser("train-bpr", help="train the BPR baseline and save the factor model")
    _add_shared(p)
    p.add_argument("--d", dest="bpr_d", type=int)
    p.add_argument("--lr", dest="bpr_lr", type=float)
    p.add_argument("--epochs", dest="bpr_epochs", type=int)

    for name in ("eval", "sweep"):
        p = sub.add_parser(name, help="MAP@1 evaluation" if name == "eval" else "run one of the experiment sweeps")
        _add_shared(p)
        p.add_argument("--sweep", "--kind", dest="sweep", choices=("context", "templates", "users"), required=name == "sweep")
        p.add_argument("--sizes", help="context sizes, e.g. 0,1,2,3,5,10,15,20")
        p.add_argument("--user-counts", dest="user_counts")
        p.add_argument("--templates", help="template names for the template comparison")

    p = sub.add_parser("complete", help="greedy completion from the remote LM plus title extraction")
    _add_shared(p)
    p.add_argument("--prompt", dest="prompt_text")
    p.add_argument("--user", dest="user_id", type=int)
    p.add_argument("--max-tokens", dest="max_tokens", type=int)

    p = sub.add_parser("synth", help="write a planted synthetic dataset (ratings, movies, corpus)")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--users", type=int, default=120)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


_NOT_CONFIG = {"command", "config", "set", "verbose", "prompt_text", "user_id", "users"}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command == "synth":
        return cmd_synth(args.out_dir, args.users, args.seed)

    overrides = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    for kv in args.set:
        if "=" not in kv:
            print(f"zsrec: --set expects KEY=VALUE, got {kv!r}", file=sys.stderr)
            return 2
        k, v = kv.split("=", 1)
        overrides[k.strip().replace("-", "_")] = v.strip()
    try:
        cfg = load_config(args.config, overrides)
        if args.config:
            args.config.close()
        if args.command == "prepare":
            return cmd_prepare(cfg)
        if args.command == "mine":
            return cmd_mine(cfg)
        if args.command == "train-bpr":
            return cmd_train_bpr(cfg)
        if args.command in ("eval", "sweep"):
            return cmd_eval(cfg)
        if args.command == "complete":
            return cmd_complete(cfg, args.prompt_text, args.user_id)
    except (ConfigError, UsageError, TemplateError, UnsupportedOperation, FileNotFoundError) as exc:
        print(f"zsrec: {exc}", file=sys.stderr)
        return 2
    except (ParseError, DatasetError, ScorerError, evaluation.EvalError, bpr.BprError, mining.MiningError, OSError) as exc:
        print(f"zsrec: {exc}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
