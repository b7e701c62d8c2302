"""Command line entry point: ``possal run|summarize|gen-data|export-plot``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig
from .datasets import gen_blobs, gen_block, save_csv
from .loop import load_results, run_experiment
from .metrics import summarize, write_plot_csv, write_summary

log = logging.getLogger("possal")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="possal", description="Possibilistic active-learning benchmarks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment described by a JSON config")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", type=Path, default=Path("results"))
    run.add_argument("--seed", type=int, help="override master_seed")
    run.add_argument("--workers", type=int, help="override n_workers")

    summ = sub.add_parser("summarize", help="tabulate final-step quartiles, AUC and ranks")
    summ.add_argument("results", type=Path)
    summ.add_argument("--out", type=Path, help="directory for summary.csv / ranks.csv (default: results)")

    gen = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    gen.add_argument("kind", choices=["block_center", "block_corner", "blobs"])
    gen.add_argument("--out", type=Path, required=True)
    gen.add_argument("--seed", type=int, default=0)

    plot = sub.add_parser("export-plot", help="per-step accuracy quartiles as CSV")
    plot.add_argument("results", type=Path)
    plot.add_argument("--dataset", help="dataset name (required when results hold several)")
    plot.add_argument("--out", type=Path, required=True)
    return parser


def _cmd_run(args, parser) -> int:
    if not args.config.is_file():
        parser.print_usage(sys.stderr)
        print(f"possal run: error: config file {args.config} not found", file=sys.stderr)
        return 2
    config = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config.master_seed = args.seed
    if args.workers is not None:
        config.n_workers = args.workers
    grouped = run_experiment(config, args.out)
    for acq, recs in grouped.items():
        failed = sum(r.failed for r in recs)
        print(f"{config.dataset_name}/{acq}: {len(recs) - failed} runs ok, {failed} failed")
    return 0


def _cmd_summarize(args) -> int:
    records = load_results(args.results)
    table = summarize(records)
    write_summary(table, args.out or args.results)
    print(f"{'dataset':<16}{'acquisition':<12}{'final med [Q1, Q3]':<28}{'AUC':>8}")
    for r in table.rows:
        print(f"{r.dataset:<16}{r.acquisition:<12}{r.final_median:.3f} [{r.final_q1:.3f}, {r.final_q3:.3f}]"
              f"{'':<8}{r.auc_median:>8.3f}")
    for metric, ranks in table.average_ranks.items():
        print(f"average rank ({metric}): " + ", ".join(f"{k}={v:.2f}" for k, v in ranks.items()))
    return 0


def _cmd_gen(args) -> int:
    ds = gen_blobs(seed=args.seed) if args.kind == "blobs" else gen_block(args.kind.split("_")[1], seed=args.seed)
    save_csv(ds, args.out)
    print(f"wrote {len(ds)} rows to {args.out}")
    return 0


def _cmd_plot(args) -> int:
    records = load_results(args.results)
    datasets = sorted({ds for ds, _ in records})
    dataset = args.dataset
    if dataset is None:
        if len(datasets) != 1:
            raise ValueError(f"results contain datasets {datasets}; pass --dataset")
        dataset = datasets[0]
    if dataset not in datasets:
        raise ValueError(f"no results for dataset {dataset!r}")
    write_plot_csv(records, dataset, args.out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args, parser)
        if args.command == "summarize":
            return _cmd_summarize(args)
        if args.command == "gen-data":
            return _cmd_gen(args)
        return _cmd_plot(args)
    except Exception as exc:  # noqa: BLE001 - report and exit nonzero
        print(f"possal {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
