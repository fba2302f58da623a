"""Command-line scenario runner.

Subcommands: photon, atom, tps, oscillator. Each accepts --config <path>
(JSON), --seed <u64>, --shots <n>, --exact, --out <dir>, --print-config, and
--no-figures. Outputs are batch artifacts: report.json, CSV files (shots.csv
with columns shot,a,b,outcome1,outcome2,product; sweep.csv with columns
parameter,value), and PNG figures rendered alongside.

Exit codes: 0 success, 2 config error, 3 physics-sector error (for instance a
reservoir cutoff too small for its mean occupation), 4 internal invariant
breach.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import ConfigError, InvariantError, SectorError
from .scenarios import (
    ExperimentConfig,
    RunReport,
    load_config,
    run_scenario,
)

_SUBCOMMANDS = {
    "photon": "photon",
    "atom": "atom",
    "tps": "tps-demo",
    "oscillator": "oscillator-demo",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modebell",
        description=(
            "Exact occupation-number simulator: single-particle entanglement, "
            "CHSH tests under superselection, and structure-relative entropy demos."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, scenario in _SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run the {scenario} scenario")
        p.add_argument("--config", metavar="PATH", help="JSON config file")
        p.add_argument("--seed", type=int, metavar="U64", help="root seed override")
        p.add_argument("--shots", type=int, metavar="N", help="shots per correlator")
        p.add_argument(
            "--exact", action="store_true",
            help="force exact expectation values (no shot sampling)",
        )
        p.add_argument("--out", metavar="DIR", help="output directory for artifacts")
        p.add_argument(
            "--print-config", action="store_true",
            help="print the fully resolved config as JSON and exit",
        )
        p.add_argument(
            "--no-figures", action="store_true", help="skip PNG figure rendering"
        )
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        config = load_config(args.config)
    else:
        config = ExperimentConfig()
    overrides = {"scenario": _SUBCOMMANDS[args.command]}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.shots is not None:
        overrides["shots"] = args.shots
    if args.exact:
        overrides["mode"] = "exact"
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.no_figures:
        overrides["figures"] = False
    config = replace(config, **overrides)
    if config.out_dir is None and not args.print_config:
        config = replace(config, out_dir=f"runs/{args.command}")
    return config.validate()


def _summarize(report: RunReport) -> str:
    lines = [f"scenario: {report.scenario}   config hash: {report.config_hash[:16]}"]
    for stage in report.stage_entropies:
        lines.append(f"  entropy[{stage['stage']}] = {stage['bits']:.6f} bits")
    if report.chsh is not None:
        c = report.chsh
        lines.append(
            f"  S = {c['s_value']:.6f}"
            + (f" +- {c['std_error']:.6f} ({c['shots']} shots/correlator)"
               if c["shots"] else " (exact)")
        )
    for key in ("bell_state_fidelity", "trap_purity", "s_exact", "s_optimum",
                "violation_threshold_nbar", "factorized_count",
                "max_analytic_mismatch", "max_normal_mode_bits"):
        if key in report.extras and report.extras[key] is not None:
            value = report.extras[key]
            if isinstance(value, float):
                lines.append(f"  {key} = {value:.9g}")
            else:
                lines.append(f"  {key} = {value}")
    if report.outputs:
        lines.append("  wrote: " + ", ".join(sorted(report.outputs)))
    lines.append(f"  wall clock: {report.wall_clock_s:.3f} s")
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
        if args.print_config:
            import json

            print(json.dumps(config.to_dict(), indent=2))
            return 0
        report = run_scenario(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SectorError as exc:
        print(f"physics-sector error: {exc}", file=sys.stderr)
        return 3
    except InvariantError as exc:
        print(f"internal invariant breach: {exc}", file=sys.stderr)
        return 4
    print(_summarize(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())
