"""Command-line entry point: ``python -m app.cli <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import pandas as pd
from pydantic import ValidationError

from . import services
from .config import load_config
from .errors import ConfigError, EstimationError, MeasurementParseError
from .harness import (
    bic_demo,
    monte_carlo_run,
    normalize_method,
    sensitivity_initialization,
    sensitivity_noise_levels,
)
from .schemas import (
    BicDemoOut,
    InitSweepOut,
    McReportOut,
    NoiseSweepOut,
    ScenarioConfig,
    report_json_schema,
)
from .storage import (
    read_ground_truth,
    read_measurements,
    select_window,
    write_frame,
    write_ground_truth,
    write_json,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_ESTIMATION = 2


def _float_list(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _method_list(text: str) -> List[str]:
    try:
        return [normalize_method(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _bins(text: str) -> List[Tuple[float, float]]:
    bins = []
    for item in text.split(","):
        low, _, high = item.partition(":")
        try:
            bins.append((float(low), float(high)))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bins look like 0:0.1,0.1:0.2, got {text!r}") from exc
    return bins


def _global_options(parser: argparse.ArgumentParser, *, suppress: bool) -> None:
    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--config", type=Path, default=default(None), help="TOML config file")
    parser.add_argument("--seed", type=int, default=default(None), help="override the configured seed")
    parser.add_argument("--out-dir", type=Path, default=default(Path("out")), help="output directory")
    parser.add_argument("--format", choices=("json", "csv"), default=default("json"), help="report format")
    parser.add_argument(
        "--log-level",
        default=default("WARNING"),
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="egle", description="Line parameter estimation under GMM noise")
    _global_options(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, suppress=True)
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", parents=[common], help="synthetic measurements + ground truth")
    generate.add_argument("--s", type=int, default=None, help="number of time instants")

    estimate = commands.add_parser("estimate", parents=[common], help="estimate line parameters from a CSV")
    estimate.add_argument("csv", type=Path)
    estimate.add_argument("--method", type=normalize_method, default="EGLE_FULL")
    estimate.add_argument("--x0", type=_float_list, default=None, help="Y1,Y2,Y3,Y4")
    estimate.add_argument("--truth", type=Path, default=None, help="ground-truth JSON (default: next to the CSV)")
    estimate.add_argument("--t-start", type=int, default=None)
    estimate.add_argument("--t-end", type=int, default=None)

    mc = commands.add_parser("mc", parents=[common], help="paired Monte-Carlo comparison")
    sweep_noise = commands.add_parser("sweep-noise", parents=[common], help="MARE against noise scale")
    sweep_init = commands.add_parser("sweep-init", parents=[common], help="MARE against initialization distance")
    for sub in (mc, sweep_noise, sweep_init):
        sub.add_argument("--runs", type=int, default=None)
        sub.add_argument("--methods", type=_method_list, default=None, help="e.g. ls,tls,egle")
        sub.add_argument("--workers", type=int, default=None)
    sweep_noise.add_argument("--scales", type=_float_list, default=[1.0, 2.0, 5.0, 10.0])
    sweep_init.add_argument("--bins", type=_bins, default=[(0.0, 0.1), (0.1, 0.2), (0.2, 0.3)])

    demo = commands.add_parser("bic-demo", parents=[common], help="BIC order selection on four-component noise")
    demo.add_argument("--n", type=int, default=5000)
    demo.add_argument("--m-max", type=int, default=10)
    demo.add_argument("--trials", type=int, default=10)

    commands.add_parser("schema", parents=[common], help="print the report JSON schema")
    return parser


def _mc_config(config, args):
    mc = config.mc_config(seed=args.seed, runs=args.runs, methods=args.methods)
    if args.workers is not None:
        mc = mc.model_copy(update={"workers": args.workers})
    return mc


def _cmd_generate(config, args) -> int:
    scenario = config.scenario_config(seed=args.seed)
    if args.s is not None:
        scenario = ScenarioConfig.model_validate({**scenario.model_dump(), "s": args.s})
    generated = services.generate(scenario)
    out = args.out_dir
    write_frame(generated["noisy"], out / "measurements.csv")
    write_frame(generated["clean"], out / "clean.csv")
    write_ground_truth(generated["ground_truth"], out / "ground_truth.json")
    print(out / "measurements.csv")
    return EXIT_OK


def _cmd_estimate(config, args) -> int:
    records = read_measurements(args.csv)
    if args.t_start is not None or args.t_end is not None:
        records = select_window(records, args.t_start, args.t_end)
    truth_path = args.truth or args.csv.parent / "ground_truth.json"
    truth = read_ground_truth(truth_path)["line_params"] if truth_path.exists() else None
    report = services.estimate(records, args.method, config, x0=args.x0, truth=truth)
    stem = f"estimate_{report['method'].lower()}"
    if args.format == "csv":
        rows = [
            {"method": report["method"], "parameter": name, "estimate": value,
             "are": report["are"][name] if report["are"] else None}
            for name, value in report["line_params"].items()
        ]
        path = write_frame(pd.DataFrame(rows), args.out_dir / f"{stem}.csv")
    else:
        path = write_json(report, args.out_dir / f"{stem}.json")
    print(path)
    return EXIT_OK


def _cmd_mc(config, args) -> int:
    report = monte_carlo_run(_mc_config(config, args), services.method_settings(config))
    summary = write_frame(report.summary_frame(), args.out_dir / "mc_summary.csv")
    if args.format == "csv":
        write_frame(report.runs, args.out_dir / "mc_runs.csv")
    else:
        payload = McReportOut.model_validate(report.to_dict()).model_dump(mode="json")
        write_json(payload, args.out_dir / "mc_report.json")
    print(summary)
    return EXIT_OK


def _cmd_sweep_noise(config, args) -> int:
    report = sensitivity_noise_levels(_mc_config(config, args), args.scales, services.method_settings(config))
    if args.format == "csv":
        path = write_frame(report.table, args.out_dir / "noise_sweep.csv")
    else:
        payload = NoiseSweepOut.model_validate(report.to_dict()).model_dump(mode="json")
        path = write_json(payload, args.out_dir / "noise_sweep.json")
    print(path)
    return EXIT_OK


def _cmd_sweep_init(config, args) -> int:
    report = sensitivity_initialization(_mc_config(config, args), args.bins, services.method_settings(config))
    if args.format == "csv":
        path = write_frame(report.table, args.out_dir / "init_sweep.csv")
    else:
        payload = InitSweepOut.model_validate(report.to_dict()).model_dump(mode="json")
        path = write_json(payload, args.out_dir / "init_sweep.json")
    print(path)
    return EXIT_OK


def _cmd_bic_demo(config, args) -> int:
    seed = args.seed if args.seed is not None else config.egle.em.seed
    report = bic_demo(n=args.n, m_max=args.m_max, trials=args.trials, seed=seed, em=config.egle.em)
    if args.format == "csv":
        rows = [{"trial": trial["trial"], "selected": trial["selected"]} for trial in report.trials]
        path = write_frame(pd.DataFrame(rows), args.out_dir / "bic_demo.csv")
    else:
        payload = BicDemoOut.model_validate(report.to_dict()).model_dump(mode="json")
        path = write_json(payload, args.out_dir / "bic_demo.json")
    print(path)
    return EXIT_OK


def _cmd_schema(config, args) -> int:
    print(json.dumps(report_json_schema(), indent=2))
    return EXIT_OK


COMMANDS = {
    "generate": _cmd_generate,
    "estimate": _cmd_estimate,
    "mc": _cmd_mc,
    "sweep-noise": _cmd_sweep_noise,
    "sweep-init": _cmd_sweep_init,
    "bic-demo": _cmd_bic_demo,
    "schema": _cmd_schema,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; 2 is reserved for estimation failures
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config)
        logger.info("running %s", args.command)
        return COMMANDS[args.command](config, args)
    except EstimationError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except (ConfigError, MeasurementParseError, ValidationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
