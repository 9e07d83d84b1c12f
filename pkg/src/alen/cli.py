"""Command-line entry point.

Subcommands:
    run        execute an experiment from a JSON config
    gradcheck  finite-difference audit of every gradient path
    gen-data   materialize a configured stream to CSV files
    eval       score saved checkpoints on a labeled CSV
    report     plot-ready CSV, summary, and figures from a results dir
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from alen.data import generate_domain, load_csv_domain, save_csv_domain
from alen.exceptions import ExperimentError, ParseError
from alen.experiment import parse_config, run_experiment
from alen.metrics import accuracy
from alen.nn import load_network
from alen.nn.gradcheck import run_gradcheck_suite
from alen.report import generate_report

SEED_ENV_VAR = "ALEN_SEED"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alen",
        description="Domain-incremental learning with Gaussian prototype "
                    "replay and adversarial adaptation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("--config", required=True, type=Path)
    p_run.add_argument("--output-dir", type=Path, default=None,
                       help="override the config's output_dir")

    p_grad = sub.add_parser("gradcheck",
                            help="finite-difference gradient audit")
    p_grad.add_argument("--seeds", type=int, default=5,
                        help="number of random seeds (default 5)")
    p_grad.add_argument("--tol", type=float, default=1e-4)

    p_gen = sub.add_parser("gen-data",
                           help="write a configured stream as CSV files")
    p_gen.add_argument("--config", required=True, type=Path)
    p_gen.add_argument("--out", required=True, type=Path)

    p_eval = sub.add_parser("eval", help="score saved checkpoints on a CSV")
    p_eval.add_argument("--checkpoint", required=True, type=Path,
                        help="checkpoint prefix; expects "
                             "PREFIX.feature_extractor.json and "
                             "PREFIX.classifier.json")
    p_eval.add_argument("--data", required=True, type=Path,
                        help="labeled CSV (label in the last column)")
    p_eval.add_argument("--predictions-out", type=Path, default=None,
                        help="optionally write predicted labels here")

    p_rep = sub.add_parser("report",
                           help="summaries and figures from a results dir")
    p_rep.add_argument("--result", required=True, type=Path)
    p_rep.add_argument("--out", type=Path, default=None,
                       help="destination (default RESULT/report)")
    return parser


def _load_config_doc(path: Path) -> dict:
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    doc = json.loads(path.read_text())
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        doc["seed"] = int(env_seed)
    return doc


def cmd_run(args) -> int:
    doc = _load_config_doc(args.config)
    if args.output_dir is not None:
        doc["output_dir"] = str(args.output_dir)
    config, echo = parse_config(doc, base_dir=args.config.parent)
    result = run_experiment(config, echo)
    print(f"avg_acc: {result.avg_acc * 100:.2f}%")
    if result.forgetting_pct is not None:
        print(f"forgetting: {result.forgetting_pct:+.2f}%")
    print(f"results written to {config.output_dir}")
    return 0


def cmd_gradcheck(args) -> int:
    seeds = list(range(args.seeds))
    results = run_gradcheck_suite(seeds, tol=args.tol)
    worst: dict[str, float] = {}
    failed = False
    for r in results:
        worst[r.name] = max(worst.get(r.name, 0.0), r.max_rel_err)
        failed = failed or not r.passed
    for name, err in worst.items():
        status = "ok" if err < args.tol or name == "grad_reverse_exact" else "FAIL"
        if name == "grad_reverse_exact":
            status = "ok" if err == 0.0 else "FAIL"
        print(f"{name:30s} max rel err {err:.3e}  {status}")
    print(f"{len(results)} checks over {args.seeds} seeds: "
          f"{'all passed' if not failed else 'FAILURES present'}")
    return 0 if not failed else 1


def cmd_gen_data(args) -> int:
    doc = _load_config_doc(args.config)
    config, _ = parse_config(doc, base_dir=args.config.parent)
    if config.scenario is None:
        print("config does not describe a synthetic scenario", file=sys.stderr)
        return 1
    args.out.mkdir(parents=True, exist_ok=True)
    for i in range(config.scenario.increment_count):
        batch = generate_domain(config.scenario, i)
        path = args.out / f"increment_{i:02d}.csv"
        save_csv_domain(batch, path)
        print(f"wrote {path} ({batch.n} rows)")
    return 0


def cmd_eval(args) -> int:
    f_path = args.checkpoint.with_name(
        args.checkpoint.name + ".feature_extractor.json")
    g_path = args.checkpoint.with_name(
        args.checkpoint.name + ".classifier.json")
    for p in (f_path, g_path, args.data):
        if not p.exists():
            raise FileNotFoundError(f"missing file: {p}")
    extractor, _ = load_network(f_path)
    classifier, _ = load_network(g_path)
    batch = load_csv_domain(args.data, has_labels=True)
    latents = extractor.eval().forward(batch.features)
    logits = classifier.eval().forward(latents)
    preds = np.argmax(logits, axis=1)
    acc = accuracy(preds, batch.labels)
    print(f"accuracy: {acc * 100:.2f}% ({batch.n} rows)")
    ood = classifier.out_dim - 1
    n_ood = int(np.sum(preds == ood))
    if n_ood:
        print(f"out-of-distribution predictions: {n_ood}")
    if args.predictions_out is not None:
        args.predictions_out.parent.mkdir(parents=True, exist_ok=True)
        args.predictions_out.write_text(
            "\n".join(str(int(p)) for p in preds) + "\n")
        print(f"predictions written to {args.predictions_out}")
    return 0


def cmd_report(args) -> int:
    written = generate_report(args.result, args.out)
    for path in written:
        print(f"wrote {path}")
    summary = next((p for p in written if p.name == "summary.txt"), None)
    if summary is not None:
        print()
        print(summary.read_text(), end="")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": cmd_run,
        "gradcheck": cmd_gradcheck,
        "gen-data": cmd_gen_data,
        "eval": cmd_eval,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (FileNotFoundError, ParseError, ExperimentError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
