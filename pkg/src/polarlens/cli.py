"""Command line entry point: ``polarlens <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import crossdebate as cd
from .influencers import CATEGORIES
from .ingest import SchemaError, compute_activity, read_dataset, save_cache
from .pipeline import (ConfigError, Pipeline, PipelineConfig, derive_seed, dump_json, render_text,
                       resolve_threads, save_matrix)
from .synth import SynthConfig, generate_debate, generate_debate_family, write_debate

log = logging.getLogger("polarlens")

SUBCOMMANDS = ("ingest", "influencers", "ideology", "stats", "cross", "network", "synth", "report")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config (JSON)")
    common.add_argument("--seed", type=int, help="global seed, overrides the config")
    common.add_argument("--threads", type=int, help="worker threads (default: $POLARLENS_THREADS or 1)")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="polarlens", description="Latent ideology and engagement analysis "
                                "of retweet debates.")
    sub = p.add_subparsers(dest="command", required=True, metavar="{" + ",".join(SUBCOMMANDS) + "}")
    ing = sub.add_parser("ingest", parents=[common], help="parse a record file into the binary cache")
    ing.add_argument("input", nargs="?", help="records file (default: every debate in --config)")
    ing.add_argument("--debate-id")
    ing.add_argument("--format", choices=("jsonl", "csv"))
    ing.add_argument("--max-malformed", type=float, default=0.01)
    for name, text in (("influencers", "select and annotate influencers"),
                       ("ideology", "latent ideology scores"),
                       ("stats", "dip tests, Gini, category tests and null models"),
                       ("cross", "conditional matrices and joint distributions"),
                       ("network", "category co-retweet networks"),
                       ("report", "run everything and write report.json / report.txt")):
        sp_ = sub.add_parser(name, parents=[common], help=text)
        sp_.add_argument("--format", choices=("jsonl", "csv"), help="override every debate's input format")
    syn = sub.add_parser("synth", parents=[common], help="generate synthetic debates with planted truth")
    syn.add_argument("--format", choices=("jsonl",), default="jsonl")
    return p


def _load_config(args) -> PipelineConfig:
    if not args.config:
        raise ConfigError("--config is required for this subcommand")
    cfg = PipelineConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out = args.out
    if getattr(args, "format", None):
        for d in cfg.debates:
            d.format = args.format
    cfg.validate()
    return cfg


def _cmd_ingest(args) -> None:
    if args.input:
        path = Path(args.input)
        if not path.exists():
            raise ConfigError(f"input path does not exist: {path}")
        jobs = [(args.debate_id or path.stem, path, args.format)]
        out = Path(args.out or ".")
    else:
        cfg = _load_config(args)
        jobs = [(d.id, Path(d.path), args.format or d.format) for d in cfg.debates]
        out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for did, path, fmt in jobs:
        ds = read_dataset(path, debate_id=did, fmt=fmt, max_malformed_fraction=args.max_malformed)
        save_cache(ds, out / f"{did}.plds")
        compute_activity(ds).to_csv(out / f"{did}_activity.csv")
        rep = ds.report
        dump_json({"debate_id": did, "records": len(ds), "lines": rep.lines, "skipped": rep.skipped,
                   "self_retweets": rep.self_retweets, "duplicates": rep.duplicates,
                   "accounts": ds.n_accounts}, out / f"{did}_ingest.json")
        print(f"{did}: {len(ds)} records, {rep.skipped} skipped, {ds.n_accounts} accounts")


def _cmd_influencers(pipe: Pipeline) -> None:
    out = pipe.out
    for did in pipe.states:
        reg = pipe.registry(did)
        reg.to_csv(out / f"{did}_influencers.csv")
        with open(out / f"{did}_unannotated.txt", "w", encoding="utf-8") as fh:
            fh.writelines(f"{a}\n" for a in reg.unannotated)
        s = pipe.influencer_summary(did)
        print(f"{did}: {s['selected']} selected, {s['annotated']} annotated, {s['excluded']} excluded, "
              f"{s['unannotated']} unannotated")


def _cmd_ideology(pipe: Pipeline) -> None:
    for did in pipe.states:
        sc = pipe.ideology(did)
        sc.to_csv(pipe.out / f"{did}_ideology.csv")
        save_matrix(pipe.states[did].matrix, pipe.out / f"{did}_matrix.plmx")
        x = np.fromiter(sc.user_scores.values(), dtype=float)
        hist, edges = np.histogram(x, bins=50, range=(-1, 1))
        xi = np.fromiter(sc.influencer_scores.values(), dtype=float)
        hist_i, _ = np.histogram(xi, bins=50, range=(-1, 1))
        dump_json({"debate_id": did, "edges": edges.tolist(), "users": hist.tolist(),
                   "influencers": hist_i.tolist()}, pipe.out / "plots" / f"{did}_ideology_hist.json")
        print(f"{did}: {len(sc.user_scores)} users scored, sigma_1 = {sc.singular_value_1:.4f}, "
              f"flipped = {sc.orientation_flipped}")


def _cmd_stats(pipe: Pipeline) -> None:
    summary = {}
    for did in pipe.states:
        summary[did] = {"ideology": pipe.ideology_summary(did), **pipe.stats_summary(did),
                        "engagement_by_ideology": pipe.engagement_summary(did)}
        dists = cd.engagement_distributions(pipe.registry(did))
        with open(pipe.out / f"{did}_category_samples.csv", "w", encoding="utf-8") as fh:
            fh.write("category,retweets_received\n")
            for c in CATEGORIES:
                fh.writelines(f"{c.value},{int(v)}\n" for v in dists.samples[c])
        dump_json({"debate_id": did, "quantile_levels": list(cd.QUANTILES),
                   "quantiles": {c.value: dists.quantiles[c] for c in CATEGORIES},
                   "samples": {c.value: dists.samples[c].tolist() for c in CATEGORIES}},
                  pipe.out / "plots" / f"{did}_engagement.json")
        dip = summary[did]["ideology"]["dip"]
        print(f"{did}: dip D = {dip['D']:.4f} p = {dip['p_value']:.4f}; "
              f"user Gini median {summary[did]['gini']['median']:.3f}")
    dump_json(summary, pipe.out / "stats.json")


def _cmd_cross(pipe: Pipeline) -> None:
    if len(pipe.states) < 2:
        raise ConfigError("cross needs at least two debates")
    for g, m in pipe.conditional().items():
        m.to_csv(pipe.out / f"conditional_{g.value.lower()}.csv")
        for (a, b), v in m.entries.items():
            if a != b:
                print(f"{g.value} {a} -> {b}: {v:.3f} (n = {m.support[(a, b)]})")
    for (a, b), j in pipe.joints().items():
        dump_json({"x": a, "y": b, "edges": j.edges.tolist(), "histogram": j.histogram.tolist(),
                   "n_shared": j.n_shared, "n_balanced": len(j.account_ids)},
                  pipe.out / "plots" / f"joint_{a}_{b}.json")


def _cmd_network(pipe: Pipeline) -> None:
    for did in pipe.states:
        for side, net in pipe.networks(did).items():
            net.to_csv(pipe.out / f"{did}_network_{side.value.lower()}.csv")
        dump_json(pipe.network_summary(did), pipe.out / f"{did}_networks.json")
        print(f"{did}: category networks written")


def _cmd_report(pipe: Pipeline) -> None:
    report = pipe.report()
    dump_json(report, pipe.out / "report.json")
    text = render_text(report)
    (pipe.out / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")


def default_synth_config() -> dict:
    with resources.files("polarlens").joinpath("data/synthetic.json").open(encoding="utf-8") as fh:
        return json.load(fh)


def _cmd_synth(args) -> None:
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            spec = json.load(fh)
    else:
        spec = default_synth_config()
    seed = args.seed if args.seed is not None else spec.get("seed")
    if seed is None:
        raise ConfigError("synth config must set an explicit 'seed'")
    out = Path(args.out or spec.get("out", "synthetic"))
    configs = []
    for i, d in enumerate(spec["debates"]):
        d = dict(d)
        d.setdefault("seed", derive_seed(seed, "synth", d.get("debate_id", str(i))))
        configs.append(SynthConfig.from_dict(d))
    if len(configs) == 1:
        debates = [generate_debate(configs[0])]
    else:
        debates = generate_debate_family(configs, spec.get("cross_debate_consistency", 0.9),
                                         seed=derive_seed(seed, "synth", "family"))
    pipeline_debates = []
    for deb in debates:
        paths = write_debate(deb, out)
        n_acc = deb.dataset.n_accounts
        pipeline_debates.append({"id": deb.config.debate_id, "path": paths["records"].name,
                                 "annotations": paths["annotations"].name})
        print(f"{deb.config.debate_id}: {len(deb.dataset)} records, {n_acc} accounts -> {paths['records']}")
    # cut the retweet ranking right at the planted influencer count
    n_inf = max(c.n_influencers for c in configs)
    n_acc = min(d.dataset.n_accounts for d in debates)
    pipeline = dict(spec.get("pipeline", {}))
    pipeline.setdefault("retweet_quantile", 1 - n_inf / n_acc)
    pipeline.setdefault("producer_share", 1.0)
    pipeline.update({"seed": seed, "debates": pipeline_debates, "out": "report"})
    dump_json(pipeline, out / "pipeline.json")
    print(f"pipeline config: {out / 'pipeline.json'}")


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            _cmd_synth(args)
        elif args.command == "ingest":
            _cmd_ingest(args)
        else:
            cfg = _load_config(args)
            threads = args.threads
            if threads is None and os.environ.get("POLARLENS_THREADS"):
                threads = resolve_threads(None)
            pipe = Pipeline(cfg, threads=threads)
            pipe.out.mkdir(parents=True, exist_ok=True)
            {"influencers": _cmd_influencers, "ideology": _cmd_ideology, "stats": _cmd_stats,
             "cross": _cmd_cross, "network": _cmd_network, "report": _cmd_report}[args.command](pipe)
    except ConfigError as exc:
        print(f"polarlens: error: {exc}", file=sys.stderr)
        return 2
    except (SchemaError, OSError, ValueError, RuntimeError) as exc:
        print(f"polarlens: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
