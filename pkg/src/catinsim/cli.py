"""Command-line interface.

Subcommands:

    simulate         run an ensemble (settings x replications) into an output tree
    analyze          post-process an output tree into delimited stats and figures
    grid             run the four-cell experiment (margin of safety x reinsurance)
    validate-config  parse and validate a config file, print the resolved values

Exit codes: 0 success, 2 configuration error, 1 runtime error. Environment
overrides: CATINSIM_OUT (default output directory), CATINSIM_WORKERS
(worker process count).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, ExperimentGrid, RunConfig, load_config

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _parse_settings(raw: str, n_regions: int) -> list[int]:
    try:
        settings = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"bad --settings value {raw!r}; expected e.g. 1,2,3,4")
    if not settings:
        raise ConfigError("--settings must name at least one diversity setting")
    for s in settings:
        if not 1 <= s <= n_regions:
            raise ConfigError(f"setting {s} outside [1, {n_regions}]")
    if len(set(settings)) != len(settings):
        raise ConfigError("duplicate settings requested")
    return settings


def _out_dir(value: str | None) -> Path:
    if value:
        return Path(value)
    env = os.environ.get("CATINSIM_OUT")
    if env:
        return Path(env)
    raise ConfigError("no output directory: pass --out or set CATINSIM_OUT")


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    overrides = {}
    if getattr(args, "no_reinsurance", False):
        overrides["reinsurance_enabled"] = False
    if getattr(args, "mu", None) is not None:
        overrides["margin_of_safety"] = args.mu
    if getattr(args, "seed", None) is not None:
        overrides["master_seed"] = args.seed
    if getattr(args, "replications", None) is not None:
        overrides["replications"] = args.replications
    return cfg.replaced(**overrides) if overrides else cfg


def cmd_simulate(args) -> int:
    from .ensemble import default_workers, run_ensemble

    cfg = _apply_overrides(load_config(args.config), args)
    settings = _parse_settings(args.settings, cfg.n_regions)
    out = _out_dir(args.out)
    summary = run_ensemble(
        cfg, settings, cfg.replications, out, workers=default_workers()
    )
    print(f"wrote {summary['runs']} runs to {summary['out_dir']}")
    if summary["failures"]:
        print(f"{len(summary['failures'])} runs failed; see failures.json", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_analyze(args) -> int:
    from .ensemble import load_records
    from .reporting import analyze_tree

    records = load_records(args.in_dir)
    if not any(records.values()):
        print(f"no runs found under {args.in_dir}", file=sys.stderr)
        return EXIT_RUNTIME
    out = _out_dir(args.out)
    result = analyze_tree(records, out)
    if args.figures:
        from .plots import render_figures

        figures = render_figures(records, result["ccdf_bands"], Path(out) / "figures")
        result["written"].extend(figures)
    for setting, row in sorted(result["summary"].items()):
        print(
            f"setting {setting}: {row['cascades']} cascades, "
            f"lambda_hat={row['lambda_hat']:.1f}, "
            f">10% events={row['tail_events']}"
        )
    print(f"wrote {len(result['written'])} files to {out}")
    return EXIT_OK


def cmd_grid(args) -> int:
    from .ensemble import default_workers, load_records, run_ensemble
    from .reporting import _write_csv, analyze_tree

    cfg = _apply_overrides(load_config(args.config), args)
    out = _out_dir(args.out)
    grid = ExperimentGrid()
    settings = list(range(1, cfg.n_regions + 1))
    rows = []
    failed_cells = 0
    for cell, cell_cfg in grid.configs(cfg):
        cell_dir = Path(out) / f"cell_{cell.label}"
        try:
            run_ensemble(
                cell_cfg, settings, cell_cfg.replications, cell_dir,
                workers=default_workers(),
            )
            records = load_records(cell_dir)
            result = analyze_tree(records, cell_dir / "analysis")
        except Exception as exc:  # cell failures are isolated
            print(f"cell {cell.label} failed: {exc}", file=sys.stderr)
            failed_cells += 1
            continue
        for setting, row in sorted(result["summary"].items()):
            rows.append(
                (
                    cell.label,
                    f"{cell.margin_of_safety:g}",
                    int(cell.reinsurance_enabled),
                    setting,
                    row["lambda_hat"],
                    row["tail_events"],
                )
            )
        print(f"cell {cell.label} done")
    _write_csv(
        Path(out) / "grid_summary.csv",
        ["cell", "margin_of_safety", "reinsurance", "setting", "lambda_hat",
         "tail_events_gt_10pct"],
        rows,
    )
    return EXIT_RUNTIME if failed_cells else EXIT_OK


def cmd_validate_config(args) -> int:
    cfg = load_config(args.config)
    print(json.dumps(cfg.as_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catinsim",
        description="Catastrophe insurance-reinsurance market simulator",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run an ensemble of replications")
    p.add_argument("--config", help="flat key=value config file (defaults if omitted)")
    p.add_argument("--settings", default="1", help="diversity settings, e.g. 1,2,3,4")
    p.add_argument("--replications", type=int, help="replications per setting")
    p.add_argument("--out", help="output directory")
    p.add_argument("--no-reinsurance", action="store_true",
                   help="counterfactual without a reinsurance sector")
    p.add_argument("--mu", type=float, help="margin of safety override")
    p.add_argument("--seed", type=int, help="master seed override")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="post-process an output tree")
    p.add_argument("--in", dest="in_dir", required=True, help="simulate output directory")
    p.add_argument("--out", help="analysis output directory")
    figures = p.add_mutually_exclusive_group()
    figures.add_argument("--figures", dest="figures", action="store_true", default=True)
    figures.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("grid", help="four-cell experiment: mu in {2,1} x reinsurance on/off")
    p.add_argument("--config", help="flat key=value config file (defaults if omitted)")
    p.add_argument("--replications", type=int, help="replications per setting per cell")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="master seed override")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("validate-config", help="validate a config file and echo it")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate_config)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
