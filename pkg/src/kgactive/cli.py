"""Command-line entry points: run campaigns, prepare datasets, serve, compare.

Configuration precedence is built-in defaults, then ``--config`` file values,
then explicit flags.  Every ``run`` emits a ``resolved-config.json`` with all
defaults materialized; re-running with ``--config resolved-config.json`` and
no other flags reproduces the artifacts (timestamps aside).
"""
from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import Any, Sequence

from . import ea_model
from .campaign import STRATEGIES, CampaignConfig, InteractiveSession, run_campaign
from .dataset import inject_bachelors, load_openea, save_openea, validate_store
from .errors import KgactiveError
from .evaluation import LearningCurve, auc_at
from .recognizer import RecognizerConfig


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers: {exc}")
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def _parse_dims(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("dims must be 'input,output', e.g. 500,400")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _add_campaign_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--strategy", choices=STRATEGIES, help="sampling strategy")
    parser.add_argument("--budget", type=int, help="total number of oracle queries")
    parser.add_argument("--batch", type=int, help="queries per iteration (default 100)")
    parser.add_argument("--alpha", type=float, help="structural mixing weight (default 0.1)")
    parser.add_argument("--pi-eps", type=float, help="power-iteration tolerance (default 1e-6)")
    parser.add_argument("--pi-max-iters", type=int, help="power-iteration cap (default 1000)")
    parser.add_argument("--mc-samples", type=float, help="stochastic scoring sample count (default 20)")
    parser.add_argument("--dropout", type=float, help="embedding dropout rate for stochastic scoring")
    parser.add_argument("--no-recognizer", action="store_true", help="disable the bachelor filter factor")
    parser.add_argument("--recognizer-k", type=int, help="recognizer fold count (default 5)")
    parser.add_argument(
        "--recognizer-dims", type=_parse_dims, metavar="IN,OUT", help="recognizer encoder dims (default 500,400)"
    )
    parser.add_argument("--recognizer-epochs", type=int, help="recognizer training epochs")
    parser.add_argument("--lambda", dest="margin", type=float, help="contrastive margin (default 1.5)")
    parser.add_argument("--beta", type=float, help="negative-term balance (default 0.1)")
    parser.add_argument("--n-neg", type=int, help="negatives per labelled pair per side (default 10)")
    parser.add_argument("--ea-dim", type=int, help="embedding dimension of the alignment model")
    parser.add_argument("--ea-epochs", type=int, help="alignment model epochs per refresh")
    parser.add_argument("--ea-lr", type=float, help="alignment model learning rate")
    parser.add_argument("--config", type=Path, help="JSON config file; flags override its values")


def _campaign_config(args: argparse.Namespace, file_config: dict) -> CampaignConfig:
    """Merge defaults, config-file values, and explicit flags."""
    campaign: dict[str, Any] = dict(file_config.get("campaign", {}))
    model = dict(campaign.pop("model", {}))
    recognizer = dict(campaign.pop("recognizer", {}))

    def put(section: dict, key: str, value: Any) -> None:
        if value is not None:
            section[key] = value

    put(campaign, "strategy", args.strategy)
    put(campaign, "budget", args.budget)
    put(campaign, "batch_size", args.batch)
    put(campaign, "alpha", args.alpha)
    put(campaign, "pi_eps", args.pi_eps)
    put(campaign, "pi_max_iters", args.pi_max_iters)
    if args.mc_samples is not None:
        campaign["mc_samples"] = int(args.mc_samples)
    if args.no_recognizer:
        campaign["use_recognizer"] = False
    put(recognizer, "k_folds", args.recognizer_k)
    if args.recognizer_dims is not None:
        recognizer["input_dim"], recognizer["output_dim"] = args.recognizer_dims
    put(recognizer, "epochs", args.recognizer_epochs)
    put(recognizer, "margin", args.margin)
    put(recognizer, "balance", args.beta)
    put(recognizer, "n_negatives", args.n_neg)
    put(model, "dim", args.ea_dim)
    put(model, "epochs", args.ea_epochs)
    put(model, "lr", args.ea_lr)
    put(model, "dropout", args.dropout)
    if "strategy" not in campaign:
        raise KgactiveError("a strategy is required (flag --strategy or config file)")
    if "budget" not in campaign:
        raise KgactiveError("a budget is required (flag --budget or config file)")
    return CampaignConfig(
        model=ea_model.TrainConfig(**model),
        recognizer=RecognizerConfig(**recognizer),
        **campaign,
    )


def _load_config_file(path: Path | None) -> dict:
    if path is None:
        return {}
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise KgactiveError("config file must contain a JSON object")
    known = {"campaign", "dataset", "seeds", "auc_at", "out_dir"}
    unknown = set(raw) - known
    if unknown:
        raise KgactiveError(f"unknown config file keys: {sorted(unknown)}; known keys: {sorted(known)}")
    return raw


def _write_resolved_config(out_dir: Path, dataset: str, seeds: list[int], auc_x: float, config: CampaignConfig) -> None:
    resolved = {
        "dataset": dataset,
        "seeds": seeds,
        "auc_at": auc_x,
        "campaign": asdict(config),
    }
    (out_dir / "resolved-config.json").write_text(
        json.dumps(resolved, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def cmd_run(args: argparse.Namespace) -> int:
    file_config = _load_config_file(args.config)
    dataset_dir = args.dataset or file_config.get("dataset")
    if dataset_dir is None:
        print("error: a dataset directory is required (positional or config file)", file=sys.stderr)
        return 2
    seeds = args.seeds or [int(s) for s in file_config.get("seeds", [])] or [0]
    auc_x = args.auc_at if args.auc_at is not None else float(file_config.get("auc_at", 0.5))
    config = _campaign_config(args, file_config)
    kg1, kg2, store = load_openea(dataset_dir)
    validate_store(kg1, kg2, store)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_resolved_config(out_dir, str(dataset_dir), seeds, auc_x, config)

    aucs: list[float] = []
    for seed in seeds:
        seed_config = replace(config, seed=seed)
        log = run_campaign(kg1, kg2, store, seed_config)
        log.to_jsonl(out_dir / f"campaign_seed{seed}.jsonl")
        log.to_csv(out_dir / f"curve_seed{seed}.csv")
        auc = auc_at(log.curve(), auc_x)
        aucs.append(auc)
        print(f"seed {seed}: AUC@{auc_x:g} = {auc:.4f}")

    with (out_dir / "summary.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "seed", f"auc_at_{auc_x:g}"])
        for seed, auc in zip(seeds, aucs):
            writer.writerow([config.strategy, seed, f"{auc:.6f}"])
        mean = statistics.fmean(aucs)
        sd = statistics.stdev(aucs) if len(aucs) > 1 else 0.0
        writer.writerow([config.strategy, "mean±sd", f"{mean:.6f}±{sd:.6f}"])
    print(f"{config.strategy}: mean AUC@{auc_x:g} = {mean:.4f} ± {sd:.4f} over {len(seeds)} seed(s)")
    return 0


def cmd_inject(args: argparse.Namespace) -> int:
    kg1, kg2, store = load_openea(args.dataset)
    validate_store(kg1, kg2, store)
    kg2_out, injected = inject_bachelors(kg2, store, args.fraction, args.seed)
    validate_store(kg1, kg2_out, injected)
    save_openea(args.out, kg1, kg2_out, injected)
    print(
        f"wrote {args.out}: {len(injected.gold)} links, "
        f"{len(injected.bachelors1)} bachelors ({args.fraction:.0%} injected)"
    )
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    from .synthetic import make_benchmark

    kg1, kg2, store = make_benchmark(
        n_entities=args.entities,
        bachelor_fraction=args.bachelors,
        out_degree=args.out_degree,
        seed=args.seed,
        target_skew=args.target_skew,
    )
    save_openea(args.out, kg1, kg2, store)
    print(
        f"wrote {args.out}: {store.n1}+{store.n2} entities, "
        f"{len(store.gold)} links, {len(store.bachelors1)} bachelors"
    )
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import AnnotationService, create_app

    file_config = _load_config_file(args.config)
    dataset_dir = args.dataset or file_config.get("dataset")
    if dataset_dir is None:
        print("error: a dataset directory is required (positional or config file)", file=sys.stderr)
        return 2
    config = _campaign_config(args, file_config)
    kg1, kg2, store = load_openea(dataset_dir)
    validate_store(kg1, kg2, store)
    if args.resume:
        if args.snapshot_dir is None:
            print("error: --resume requires --snapshot-dir", file=sys.stderr)
            return 2
        session = InteractiveSession.resume(kg1, kg2, store, args.snapshot_dir)
    else:
        session = InteractiveSession(kg1, kg2, store, config, snapshot_dir=args.snapshot_dir)
    if args.ui is not None and not (Path(args.ui) / "index.html").exists():
        print(f"error: --ui directory {args.ui} has no index.html", file=sys.stderr)
        return 2
    app = create_app(AnnotationService(session, candidate_count=args.candidates), static_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _read_run_dir(directory: Path) -> tuple[str, float, list[tuple[list[float], list[float]]]]:
    resolved = json.loads((directory / "resolved-config.json").read_text(encoding="utf-8"))
    strategy = resolved["campaign"]["strategy"]
    auc_x = float(resolved["auc_at"])
    curves = []
    for seed in resolved["seeds"]:
        xs, ys = [], []
        with (directory / f"curve_seed{seed}.csv").open(encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                if row["hit_at_1"] != "":
                    xs.append(float(row["proportion"]))
                    ys.append(float(row["hit_at_1"]))
        curves.append((xs, ys))
    return strategy, auc_x, curves


def cmd_compare(args: argparse.Namespace) -> int:
    import numpy as np

    rows = []
    grid_ref: list[float] | None = None
    auc_ref: float | None = None
    for directory in args.log_dirs:
        strategy, auc_x, curves = _read_run_dir(Path(directory))
        if auc_ref is None:
            auc_ref = auc_x
        elif auc_x != auc_ref:
            print(f"error: {directory} uses AUC@{auc_x:g}, others use AUC@{auc_ref:g}", file=sys.stderr)
            return 1
        aucs = []
        for xs, ys in curves:
            if grid_ref is None:
                grid_ref = xs
            elif xs != grid_ref:
                print(
                    f"error: {directory} has a different evaluation grid; "
                    "compared runs must share dataset, budget, and batch size",
                    file=sys.stderr,
                )
                return 1
            aucs.append(auc_at(LearningCurve(np.asarray(xs), np.asarray(ys)), auc_x))
        mean = statistics.fmean(aucs)
        sd = statistics.stdev(aucs) if len(aucs) > 1 else 0.0
        rows.append((strategy, mean, sd, len(aucs)))

    rows.sort(key=lambda r: -r[1])
    width = max(len(r[0]) for r in rows)
    print(f"{'strategy'.ljust(width)}  mean_auc  sd      seeds")
    for strategy, mean, sd, n in rows:
        print(f"{strategy.ljust(width)}  {mean:.4f}    {sd:.4f}  {n}")
    if args.out:
        with Path(args.out).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["strategy", "mean_auc", "sd", "seeds"])
            for strategy, mean, sd, n in rows:
                writer.writerow([strategy, f"{mean:.6f}", f"{sd:.6f}", n])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgactive", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run simulated annotation campaigns")
    run.add_argument("dataset", nargs="?", help="dataset directory (OpenEA layout)")
    run.add_argument("--seeds", type=_parse_seeds, help="comma-separated campaign seeds (default 0)")
    run.add_argument("--auc-at", type=float, help="AUC integration limit (default 0.5)")
    run.add_argument("--out", required=True, help="output directory for logs and curves")
    _add_campaign_flags(run)
    run.set_defaults(func=cmd_run)

    inject = sub.add_parser("inject", help="derive a dataset with injected bachelors")
    inject.add_argument("dataset", help="source dataset directory")
    inject.add_argument("--fraction", type=float, required=True, help="share of gold links to sever")
    inject.add_argument("--seed", type=int, default=0, help="selection seed (default 0)")
    inject.add_argument("--out", required=True, help="output dataset directory")
    inject.set_defaults(func=cmd_inject)

    synth = sub.add_parser("synth", help="write a synthetic aligned benchmark dataset")
    synth.add_argument("--entities", type=int, default=300, help="entities per graph (default 300)")
    synth.add_argument(
        "--bachelors", type=float, default=0.2, help="fraction of source entities without counterpart (default 0.2)"
    )
    synth.add_argument("--out-degree", type=int, default=10, help="relation edges per entity (default 10)")
    synth.add_argument(
        "--target-skew",
        type=float,
        default=0.0,
        help="Zipf exponent biasing link targets toward hub entities (default 0 = uniform)",
    )
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, help="output dataset directory")
    synth.set_defaults(func=cmd_synth)

    serve = sub.add_parser("serve", help="serve an interactive annotation session")
    serve.add_argument("dataset", nargs="?", help="dataset directory (OpenEA layout)")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--candidates", type=int, default=10, help="ranked candidates per query (default 10)")
    serve.add_argument("--snapshot-dir", help="directory for per-iteration state snapshots")
    serve.add_argument("--resume", action="store_true", help="resume from --snapshot-dir")
    serve.add_argument("--ui", help="serve the browser UI from this directory (same origin as the API)")
    _add_campaign_flags(serve)
    serve.set_defaults(func=cmd_serve)

    compare = sub.add_parser("compare", help="tabulate AUC across strategy run directories")
    compare.add_argument("log_dirs", nargs="+", help="output directories of `kgactive run`")
    compare.add_argument("--out", help="also write the table as CSV to this path")
    compare.set_defaults(func=cmd_compare)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KgactiveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
