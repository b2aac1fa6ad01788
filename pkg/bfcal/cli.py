#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

"""Command line runner.

    bfcal simulate   records.csv + run.json
    bfcal check      checks.json + summary table
    bfcal history    curves.csv + first-80%-power summary
    bfcal table      table.csv of DAP test false positive rates and power
    bfcal report     plots/*.svg from the CSVs already in the output directory

Exit codes: 0 when every check passes, 2 when any check rejects, 1 on error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional, Sequence

import pandas as pd

from . import __version__, console
from .config import RunConfig, load_config
from .engine import RecordSet, run_sbc
from .history import curves_frame, curves_from_frame, fp_power_table, power_curve, run_histories
from .plots import plot_calibration, plot_ecdf_diff, plot_good_convergence, plot_history, write_svg
from .stats import run_checks, write_checks
from .typ import BfcalError
from .utils import draw_seed

logger = logging.getLogger(__name__)

EXIT_PASS, EXIT_ERROR, EXIT_REJECT = 0, 1, 2
COMMANDS = ("simulate", "check", "history", "table", "report")


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with 1 like every other error."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = ArgumentParser(add_help=False)
    p.add_argument("--config", help="flat key = value config file, or a directory holding bfcal.ini")
    p.add_argument("--seed", type=int, help="master seed; drawn and printed when omitted")
    p.add_argument("--sims", type=int, help="number of simulations")
    p.add_argument("--draws", type=int, help="posterior draws per simulation (M)")
    p.add_argument("--scenario", help="zoo member, e.g. binary, poisson-nb, good-normal:2")
    p.add_argument("--fault", help="flip, constant, ignore-half, log-noise:SD or log-bias:B")
    p.add_argument("--accept", help="accept rule: all, nonzero, mean-range:LO:HI or spread:T")
    p.add_argument("--candidate", help="b0,b1 candidate posterior for the binary toy")
    p.add_argument("--posterior", help="observed y1 values, e.g. 0 or 0.3,1.2: posterior SBC on nested-normal")
    p.add_argument("--posterior-mismatched", dest="posterior_mismatched", action="store_true", default=None, help="posterior SBC with a candidate that ignores y1")
    p.add_argument("--checks", help="comma separated checks, e.g. sbc,miscalibration,dap")
    p.add_argument("--out", help="output directory")
    p.add_argument("--records", help="read records.csv and run.json from this directory instead of simulating")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")
    p.add_argument("--history-length", dest="history_length", type=int, help="simulations per history")
    p.add_argument("--histories", type=int, help="number of histories")
    p.add_argument("--runs", type=int, help="runs per cell of the test table")
    p.add_argument("--progress", action="store_true", help="show progress bars")
    return p


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="bfcal", description="Validation checks for Bayes factor computations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)
    common = _common()
    helps = {
        "simulate": "run SBC simulations and write records.csv",
        "check": "run the check battery and write checks.json",
        "history": "evaluate checks along histories and write curves.csv",
        "table": "estimate false positive rates and power of the DAP tests",
        "report": "render SVG plots from existing CSVs",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
    return parser


_OVERRIDES = ("seed", "sims", "draws", "scenario", "fault", "accept", "candidate", "posterior", "posterior_mismatched", "checks", "out", "jobs", "log_level", "history_length", "histories", "runs")


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: getattr(args, k) for k in _OVERRIDES if getattr(args, k) is not None}


def _seed(cfg: RunConfig) -> int:
    if cfg.seed is not None:
        return cfg.seed
    seed = draw_seed()
    console.echo(f"seed: {seed}", force=True)
    return seed


def _records(cfg: RunConfig, args: argparse.Namespace, seed: int, n_sims: Optional[int] = None) -> RecordSet:
    """Records from --records when given, otherwise a fresh run written to the output dir."""
    if args.records:
        return RecordSet.read(args.records)
    result = run_sbc(cfg.problem(), cfg.engine(seed, n_sims, args.progress))
    result.write(cfg.output_dir)
    return result


def cmd_simulate(cfg: RunConfig, args: argparse.Namespace) -> int:
    result = _records(cfg, args, _seed(cfg))
    console.echo(f"{len(result)} simulations of {result.problem_id} written to {cfg.output_dir}")
    return EXIT_PASS


def cmd_check(cfg: RunConfig, args: argparse.Namespace) -> int:
    seed = _seed(cfg)
    records = _records(cfg, args, seed)
    reports = run_checks(records, cfg.alpha, cfg.gamma_mc, cfg.bootstrap, cfg.gaffke_mc, seed, cfg.checks)
    write_checks(reports, cfg.output_dir / "checks.json", records.problem_id)
    console.print_checks(reports)
    return EXIT_REJECT if any(r.rejected for r in reports) else EXIT_PASS


def history_checks(checks: Sequence[str], quantities: Sequence[str]) -> List[str]:
    """The checks a history can follow: SBC per quantity, miscalibration and dap."""
    out = []
    for c in checks:
        if c == "sbc":
            out.extend(f"sbc:{q}" for q in quantities)
        elif c.startswith("sbc:") or c in ("miscalibration", "dap"):
            out.append(c)
        else:
            logger.info("'%s' has no history statistic, skipped", c)
    return list(dict.fromkeys(out))


def cmd_history(cfg: RunConfig, args: argparse.Namespace) -> int:
    hcfg = cfg.history()
    if hcfg is None:
        raise BfcalError("history needs a history length; pass --history-length")
    seed = _seed(cfg)
    need = hcfg.history_length if hcfg.n_histories == 1 else hcfg.pool_size
    pool = _records(cfg, args, seed, n_sims=max(need, cfg.sims) if not args.records else None)

    checks = history_checks(cfg.checks, pool.quantity_names)
    curves = run_histories(pool, hcfg, checks, seed, cfg.jobs, args.progress)
    path = cfg.output_dir / "curves.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    curves_frame(curves, cfg.alpha).to_csv(path, index=False, float_format="%.17g")
    logger.info("wrote %s", path)

    if hcfg.n_histories < 20:
        console.echo(f"{hcfg.n_histories} histories written to {path}; power needs at least 20")
        return EXIT_PASS
    summary = {name: power_curve(curve, alpha=cfg.alpha)[1] for name, curve in curves.items()}
    console.print_power(summary)
    return EXIT_REJECT if any(first is not None for first in summary.values()) else EXIT_PASS


def cmd_table(cfg: RunConfig, args: argparse.Namespace) -> int:
    table = fp_power_table(
        cfg.table_scenarios,
        cfg.sample_sizes,
        cfg.table_tests,
        n_runs=cfg.runs,
        seed=_seed(cfg),
        alpha=cfg.alpha,
        gaffke_mc=cfg.gaffke_mc,
        jobs=cfg.jobs,
        progress=args.progress,
    )
    path = cfg.output_dir / "table.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format="%.6g")
    console.print_table(["scenario", "n", "test", "rate", "se"], list(table.itertuples(index=False, name=None)))
    return EXIT_PASS


def _file_name(check: str) -> str:
    return check.replace(":", "_")


def cmd_report(cfg: RunConfig, args: argparse.Namespace) -> int:
    src = Path(args.records) if args.records else cfg.output_dir
    plots = cfg.output_dir / "plots"
    has_records = (src / "records.csv").is_file()
    has_curves = (src / "curves.csv").is_file()
    if not (has_records or has_curves):
        raise FileNotFoundError(f"no records found in {src}; run `bfcal simulate` or `bfcal history` first")

    written = []
    if has_records:
        records = RecordSet.read(src)
        for q in records.quantity_names:
            ranks = records.ranks(q)
            if len(ranks) >= 10:
                svg = plot_ecdf_diff(ranks, records.M, title=f"{records.problem_id}: {q}", alpha=cfg.alpha, n_mc=cfg.gamma_mc)
                written.append(write_svg(svg, plots / f"ecdf_{q}.svg"))
        probs, indices = records.probs(), records.indices()
        if len(probs) >= 20:
            written.append(write_svg(plot_calibration(probs, indices, title=records.problem_id), plots / "calibration.svg"))
        log_bf01 = -records.log_bfs()[indices == 1]
        if len(log_bf01) >= 2:
            written.append(write_svg(plot_good_convergence(log_bf01, records.problem_id), plots / "good_convergence.svg"))
    if has_curves:
        for name, curve in curves_from_frame(pd.read_csv(src / "curves.csv")).items():
            written.append(write_svg(plot_history(curve, alpha=cfg.alpha), plots / f"history_{_file_name(name)}.svg"))

    console.echo(f"{len(written)} plots written to {plots}")
    return EXIT_PASS


HANDLERS = {
    "simulate": cmd_simulate,
    "check": cmd_check,
    "history": cmd_history,
    "table": cmd_table,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args)).validate()
        logging.basicConfig(level=cfg.log_level, format="%(levelname)s %(name)s: %(message)s")
        return HANDLERS[args.command](cfg, args)
    except (BfcalError, OSError, ValueError) as e:
        console.error(str(e))
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
