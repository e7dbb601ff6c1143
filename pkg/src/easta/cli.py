"""Command line entry point: ``easta {figure-overlap,figure-cost,sweep-tau,verify}``.

Exit codes: 0 success, 1 invariant failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, RunConfig
from .experiments import ResultTable, cmd_figure_cost, cmd_figure_overlap, cmd_sweep_tau, cmd_verify
from .model import GapError
from .propagation import StepSizeError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

OUTPUT_NAMES = {
    "figure-overlap": "figure_overlap.csv",
    "figure-cost": "figure_cost.csv",
    "sweep-tau": "sweep_tau.csv",
    "verify": "verify.json",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="easta", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="run-config JSON (schema 1); defaults apply when omitted")
        p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
        p.add_argument("--steps", type=int, help="grid steps K (overrides model.steps)")
        p.add_argument("--seed", type=int, help="random seed (overrides seed)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    changes = {}
    if args.steps is not None:
        changes["model_steps"] = args.steps
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = str(args.out)
    return config.replace(**changes) if changes else config


def _table_ok(command: str, table: ResultTable, config: RunConfig) -> tuple[bool, str]:
    if command == "figure-overlap":
        cols = [c for c in table.columns if c.startswith("easta_overlap")]
        worst = max(float((1.0 - table.column(c)).max()) for c in cols)
        return worst <= config.tolerances["easta_overlap"], f"1 - min EASTA overlap = {worst:.3e}"
    if command == "figure-cost":
        diff = float(table.column("abs_diff").max())
        bound = config.tolerances["cost_equality"] * (1.0 + float(table.column("C_CD").max()))
        return diff <= bound, f"max |C_CD - C_env| = {diff:.3e} (bound {bound:.3e})"
    diff = float(table.column("rel_diff").max())
    return diff <= config.tolerances["cost_equality"], f"max relative cost difference = {diff:.3e}"


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    log = logging.getLogger("easta")

    try:
        config = resolve_config(args)
        out_dir = Path(config.output_dir)
        target = out_dir / OUTPUT_NAMES[args.command]

        if args.command == "verify":
            report = cmd_verify(config, progress=log.info)
            out_dir.mkdir(parents=True, exist_ok=True)
            target.write_text(json.dumps(report, indent=2) + "\n")
            for c in report["checks"]:
                if not c["passed"]:
                    print(f"FAIL {c['name']}: {c['measured']:.3e} {c['relation']} {c['tolerance']:.3e}")
            print(f"{report['n_checks'] - report['n_failed']}/{report['n_checks']} checks passed "
                  f"in {report['elapsed_s']:.1f}s -> {target}")
            return EXIT_OK if report["passed"] else EXIT_FAIL

        command = {"figure-overlap": cmd_figure_overlap, "figure-cost": cmd_figure_cost,
                   "sweep-tau": cmd_sweep_tau}[args.command]
        table = command(config)
        table.write(target)
        ok, summary = _table_ok(args.command, table, config)
        print(f"{'ok' if ok else 'FAIL'}: {summary} -> {target}")
        return EXIT_OK if ok else EXIT_FAIL
    except (ConfigError, GapError, StepSizeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
