"""Batch command line: link, analyze, evaluate, simulate, prior, study.

Every artifact a command writes either embeds (config hash, seed, package
version) or gets a ``.meta.json`` sidecar carrying them, and output bytes
are a pure function of config and seed. Failures print one JSON object to
stderr; usage and config errors exit 2, runtime errors exit 1.

Seed precedence: ``--seed`` flag, then LATENTLINK_SEED, then the config
file, then 0. Worker counts follow the same chain via LATENTLINK_JOBS.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .analysis import confusion_matrix, shared_mpmms_estimate
from .blocking import build_blocks
from .dataio import (
    IngestionSpec,
    RunConfig,
    env_jobs,
    env_seed,
    ingest,
    load_config,
    load_samples,
    save_config,
    save_dictionary,
    save_samples,
    write_records,
)
from .export import build_report, confusion_dict, render_report, to_dot, write_report
from .metrics import error_report, matched_fraction, roc_sweep
from .priors import PartitionPriorSpec, prior_cardinality_distribution
from .sampler import run_chain
from .simulate import (
    DEFAULT_THREE_WAVE_WEIGHTS,
    nltcs_like_schema,
    proportions_from_counts,
    simulate_dataset,
)
from .state import Hyperparameters
from .study import DEFAULT_LEVELS, distortion_study


class UsageError(Exception):
    """Bad flags or an invalid configuration; maps to exit code 2."""


def _emit(doc: dict, path: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _sidecar(path: str, doc: dict) -> None:
    with open(f"{path}.meta.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_seed(flag: int | None, config_seed: int | None = None) -> int:
    if flag is not None:
        return flag
    if env_seed() is not None:
        return env_seed()
    if config_seed is not None:
        return config_seed
    return 0


def _resolve_jobs(flag: int | None, config_jobs: int | None = None) -> int:
    if flag is not None:
        return flag
    if env_jobs() is not None:
        return env_jobs()
    if config_jobs is not None:
        return config_jobs
    return 1


def _parse_label(label: str) -> tuple[int, int]:
    """Record address "file.record", 1-based file and 0-based record."""
    try:
        f, r = label.split(".")
        f, r = int(f), int(r)
    except ValueError:
        raise UsageError(f"bad record label {label!r}: expected file.record")
    if f < 1 or r < 0:
        raise UsageError(f"bad record label {label!r}: file is 1-based")
    return f - 1, r


def _link_config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    elif args.data:
        cfg = RunConfig(ingestion=IngestionSpec(paths=list(args.data)))
    else:
        raise UsageError("link needs --config or --data")
    ing = cfg.ingestion
    if args.config and args.data:
        ing = replace(ing, paths=list(args.data))
    if args.truth_column is not None:
        ing = replace(ing, truth_column=args.truth_column)
    if args.block is not None:
        ing = replace(ing, block_fields=list(args.block) or None)
    if args.dictionary is not None:
        ing = replace(ing, dictionary_path=args.dictionary)
    chain_kw = {name: getattr(args, name) for name
                in ("mode", "s_g", "s_m", "t", "burn_in", "thinning")
                if getattr(args, name) is not None}
    chain_kw["seed"] = _resolve_seed(args.seed, cfg.chain.seed)
    run_kw = {name: getattr(args, name) for name in ("a", "b", "mu", "out_dir")
              if getattr(args, name) is not None}
    run_kw["jobs"] = _resolve_jobs(args.jobs, cfg.jobs)
    return replace(cfg, ingestion=ing, chain=replace(cfg.chain, **chain_kw),
                   **run_kw)


def cmd_link(args) -> int:
    try:
        cfg = _link_config(args)
    except ValueError as exc:  # bad values in flags or the config file
        raise UsageError(str(exc))
    table, _, _ = ingest(cfg.ingestion)
    hp = Hyperparameters.default(table, a=cfg.a, b=cfg.b, mu=cfg.mu)
    blocks = (build_blocks(table, cfg.ingestion.block_fields)
              if cfg.ingestion.block_fields else None)
    samples = run_chain(table, hp, cfg.chain, blocks)
    os.makedirs(cfg.out_dir, exist_ok=True)
    trace_path = os.path.join(cfg.out_dir, args.out)
    save_samples(samples, trace_path, config_hash=cfg.config_hash())
    save_config(cfg, os.path.join(cfg.out_dir, "config.json"))
    _emit({
        "command": "link",
        "config": os.path.join(cfg.out_dir, "config.json"),
        "config_hash": cfg.config_hash(),
        "n_records": table.n_records,
        "n_samples": samples.n_samples,
        "package_version": __version__,
        "samples": trace_path,
        "seed": cfg.chain.seed,
    }, None)
    return 0


def _samples_and_truth(args):
    """Load a trace; with a config, re-ingest for codes and ground truth."""
    truth = None
    cfg = None
    if args.config:
        cfg = load_config(args.config)
        table, truth, _ = ingest(cfg.ingestion)
        samples = load_samples(args.samples, table=table)
    else:
        samples = load_samples(args.samples)
    config_hash = cfg.config_hash() if cfg else samples.meta.get("config_hash")
    return samples, truth, config_hash


def cmd_analyze(args) -> int:
    samples, truth, config_hash = _samples_and_truth(args)
    queries = [(_parse_label(a), _parse_label(b)) for a, b in (args.query or [])]
    report = build_report(samples, threshold=args.threshold, truth=truth,
                          queries=queries, config_hash=config_hash)
    wrote = False
    if args.report:
        write_report(report, args.report)
        wrote = True
    if args.dot:
        header = (f"// latentlink {__version__}\n"
                  f"// config_hash: {config_hash}\n"
                  f"// seed: {samples.meta.get('seed')}\n")
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(header + to_dot(samples, threshold=args.threshold,
                                     truth=truth))
        wrote = True
    if not wrote:
        sys.stdout.write(render_report(report))
    return 0


def cmd_evaluate(args) -> int:
    samples, truth, config_hash = _samples_and_truth(args)
    if truth is None:
        raise UsageError("evaluate needs a truth column in the config")
    est = shared_mpmms_estimate(samples, args.threshold)
    rep = error_report(est, truth)
    doc = {
        "format": "latentlink-evaluation",
        "version": 1,
        "package_version": __version__,
        "config_hash": config_hash,
        "seed": samples.meta.get("seed"),
        "threshold": args.threshold,
        "error": {
            "true_links": rep.true_links,
            "false_links": rep.false_links,
            "missing_links": rep.missing_links,
            "fnr": rep.fnr,
            "fpr": rep.fpr,
            "matched_fraction": matched_fraction(est, truth),
        },
        "confusion": confusion_dict(confusion_matrix(samples, truth)),
        "roc": None,
    }
    if args.roc:
        grid = sorted(set(args.roc))
        doc["roc"] = [{"threshold": v, "fnr": fnr, "fpr": fpr}
                      for v, fnr, fpr in roc_sweep(samples, truth, grid)]
    _emit(doc, args.out)
    return 0


def _parse_weights(text: str) -> dict:
    try:
        raw = json.loads(text)
        weights = {tuple(int(c) for c in key.split(",")): float(v)
                   for key, v in raw.items()}
    except (json.JSONDecodeError, ValueError, AttributeError):
        raise UsageError('bad --weights: expected JSON like {"1,0,1": 0.25}')
    return proportions_from_counts(weights)


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args.seed)
    weights = (_parse_weights(args.weights) if args.weights
               else dict(DEFAULT_THREE_WAVE_WEIGHTS))
    rng = np.random.default_rng(seed)
    sim = simulate_dataset(nltcs_like_schema(), weights, args.entities,
                           args.distortion, rng)
    os.makedirs(args.out_dir, exist_ok=True)
    paths = [os.path.join(args.out_dir, f"{args.prefix}{i + 1}.csv")
             for i in range(sim.table.n_files)]
    dictionaries = write_records(sim.table, paths, truth=sim.truth,
                                 truth_column=args.truth_column)
    dict_path = os.path.join(args.out_dir, "dictionary.json")
    save_dictionary(dictionaries, dict_path)
    doc = {
        "command": "simulate",
        "config_hash": None,
        "dictionary": dict_path,
        "distortion": args.distortion,
        "files": paths,
        "n_entities": sim.n_entities,
        "n_records": sim.table.n_records,
        "package_version": __version__,
        "seed": seed,
        "truth_column": args.truth_column,
    }
    _sidecar(os.path.join(args.out_dir, args.prefix.rstrip("_") or "data"), doc)
    _emit(doc, None)
    return 0


def cmd_prior(args) -> int:
    try:
        spec = PartitionPriorSpec(args.N, args.M)
    except ValueError as exc:
        raise UsageError(str(exc))
    dist = prior_cardinality_distribution(spec)
    lines = ["k,probability"]
    lines += [f"{k + 1},{float(p)!r}" for k, p in enumerate(dist)]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        _sidecar(args.out, {"command": "prior", "N": args.N, "M": args.M,
                            "config_hash": None, "seed": None,
                            "package_version": __version__})
    else:
        sys.stdout.write(text)
    return 0


def cmd_study(args) -> int:
    seed = _resolve_seed(args.seed)
    rows = distortion_study(levels=tuple(args.levels),
                            replications=args.reps,
                            n_entities=args.entities,
                            threshold=args.threshold,
                            seed=seed, csv_path=args.out)
    _sidecar(args.out, {"command": "study", "config_hash": None,
                        "entities": args.entities, "levels": list(args.levels),
                        "package_version": __version__,
                        "replications": args.reps, "seed": seed})
    _emit({"command": "study", "csv": args.out, "rows": len(rows),
           "package_version": __version__, "seed": seed}, None)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentlink",
        description="Bayesian record linkage and de-duplication.")
    parser.add_argument("--version", action="version",
                        version=f"latentlink {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    link = sub.add_parser("link", help="ingest files and run the sampler")
    link.add_argument("--config", help="run config JSON")
    link.add_argument("--data", nargs="+", help="record files, one per list")
    link.add_argument("--truth-column", dest="truth_column")
    link.add_argument("--block", nargs="*", help="blocking field names")
    link.add_argument("--dictionary", help="label dictionary path")
    link.add_argument("--mode", choices=("smere", "smered"))
    link.add_argument("--sg", dest="s_g", type=int, help="Gibbs sweeps")
    link.add_argument("--sm", dest="s_m", type=int,
                      help="split-merge proposals per sweep")
    link.add_argument("--met", dest="t", type=int,
                      help="Metropolis steps per proposal")
    link.add_argument("--burn-in", dest="burn_in", type=int)
    link.add_argument("--thinning", type=int)
    link.add_argument("--a", type=float, help="distortion Beta shape a")
    link.add_argument("--b", type=float,
                      help="distortion Beta shape b; inf pins beta to 0")
    link.add_argument("--mu", type=float, help="Dirichlet concentration")
    link.add_argument("--out-dir", dest="out_dir")
    link.add_argument("--out", default="samples.jsonl",
                      help="trace filename inside the output directory")
    link.add_argument("--seed", type=int)
    link.add_argument("--jobs", type=int)
    link.set_defaults(func=cmd_link)

    analyze = sub.add_parser("analyze", help="summarize a sample trace")
    analyze.add_argument("--samples", required=True)
    analyze.add_argument("--config", help="re-ingest for codes and truth")
    analyze.add_argument("--threshold", type=float, default=0.8)
    analyze.add_argument("--report", help="write the JSON report here")
    analyze.add_argument("--dot", help="write the linkage graph here")
    analyze.add_argument("--query", nargs=2, action="append",
                         metavar=("A", "B"),
                         help="record pair as file.record labels")
    analyze.set_defaults(func=cmd_analyze)

    evaluate = sub.add_parser("evaluate", help="score a trace against truth")
    evaluate.add_argument("--samples", required=True)
    evaluate.add_argument("--config", required=True)
    evaluate.add_argument("--threshold", type=float, default=None)
    evaluate.add_argument("--roc", nargs="+", type=float,
                          help="probability thresholds to sweep")
    evaluate.add_argument("--out", help="write the JSON document here")
    evaluate.set_defaults(func=cmd_evaluate)

    simulate = sub.add_parser("simulate", help="write a synthetic corpus")
    simulate.add_argument("--out-dir", dest="out_dir", required=True)
    simulate.add_argument("--entities", type=int, default=500)
    simulate.add_argument("--distortion", type=float, default=0.01)
    simulate.add_argument("--weights",
                          help='overlap pattern JSON, e.g. {"1,0,1": 0.25}')
    simulate.add_argument("--prefix", default="data_")
    simulate.add_argument("--truth-column", dest="truth_column",
                          default="entity_id")
    simulate.add_argument("--seed", type=int)
    simulate.set_defaults(func=cmd_simulate)

    prior = sub.add_parser("prior", help="partition-prior cardinality table")
    prior.add_argument("--N", type=int, required=True,
                       help="number of records")
    prior.add_argument("--M", type=int, default=None,
                       help="latent population size (defaults to N)")
    prior.add_argument("--out", help="write the CSV here instead of stdout")
    prior.set_defaults(func=cmd_prior)

    study = sub.add_parser("study", help="distortion-level error study")
    study.add_argument("--out", required=True, help="CSV output path")
    study.add_argument("--levels", nargs="+", type=float,
                       default=list(DEFAULT_LEVELS))
    study.add_argument("--reps", type=int, default=3)
    study.add_argument("--entities", type=int, default=400)
    study.add_argument("--threshold", type=float, default=None)
    study.add_argument("--seed", type=int)
    study.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(json.dumps({"error": "UsageError", "message": str(exc)}),
              file=sys.stderr)
        return 2
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
