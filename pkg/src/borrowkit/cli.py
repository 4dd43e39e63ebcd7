"""``borrowkit`` command-line tool."""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    AnalysisConfig,
    analyze_frame,
    dumps,
    fixture_config,
    make_fixture,
    mpi_frame,
    read_dataset,
)
from .borrowing import Strategy
from .exceptions import BorrowkitError, SchemaError
from .inference import MPI_KINDS, MPI_WEIGHTING, CalibrationConfig
from .simulation import SCENARIO_IDS, GenConfig, MetricsRow, run_study, scenario_table

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
FLOAT_FMT = "{:.6f}"


class UsageError(Exception):
    pass


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else FLOAT_FMT.format(value)
    return str(value)


def metrics_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MetricsRow.CSV_FIELDS)
    for row in rows:
        writer.writerow([_fmt(getattr(row, f)) for f in MetricsRow.CSV_FIELDS])
    return buf.getvalue()


def metrics_markdown(rows) -> str:
    cols = MetricsRow.CSV_FIELDS + ("retries",)
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for row in rows:
        lines.append("| " + " | ".join(_fmt(getattr(row, c)) for c in cols) + " |")
    return "\n".join(lines) + "\n"


def metrics_json(rows) -> str:
    return dumps([asdict(r) for r in rows])


def scenarios_csv() -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scenario", "mu1", "mu2", "mu3", "sigma2", "mu_e1", "mu_e2", "mu_e3", "eta2"])
    for s in scenario_table():
        values = (*s.mu_current, s.sigma2, *s.mu_external, s.eta2)
        writer.writerow([s.id, *(f"{v:g}" for v in values)])
    return buf.getvalue()


def _emit(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _scenarios(value: str) -> list[str]:
    if value.strip().lower() == "all":
        return list(SCENARIO_IDS)
    ids = [v.strip().upper() for v in value.split(",") if v.strip()]
    bad = [v for v in ids if v not in SCENARIO_IDS]
    if bad or not ids:
        raise UsageError(f"--scenario must be I..XII, a comma list of them, or all; got {value!r}")
    return ids


def cmd_simulate(args) -> int:
    scenarios = _scenarios(args.scenario)
    try:
        strategies = [Strategy.parse(s, fb_weighted=args.fb_weighted) for s in (args.strategy or ["psw-bpp"])]
        gen = GenConfig(n=args.n, n_e=args.n_ext)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.reps < 1 or args.draws < 1 or args.burn_in < 0:
        raise UsageError("--reps and --draws must be positive and --burn-in non-negative")
    if args.threads is not None and args.threads < 1:
        raise UsageError("--threads must be positive")
    result = run_study(
        scenarios,
        strategies,
        gen,
        B=args.reps,
        draws=args.draws,
        burn_in=args.burn_in,
        seed=args.seed,
        threads=args.threads,
        calibration=CalibrationConfig(args.mpi_weighting, args.mpi_kind),
    )
    render = {"csv": metrics_csv, "md": metrics_markdown, "json": metrics_json}[args.format]
    _emit(render(result.rows), args.out)
    return EXIT_OK


def _load(args):
    config = AnalysisConfig.load(args.config)
    return read_dataset(args.data), config


def report_markdown(report: dict) -> str:
    eff, base = report["effect"], report["no_borrow_comparison"]
    lines = [
        "| analysis | estimate | 95% CrI | width | P(effect > 0) | a1 | a2 | ESS |",
        "|---|---|---|---|---|---|---|---|",
    ]
    for name, e in (("borrowing", eff), ("no borrowing", base)):
        lines.append(
            f"| {name} | {e['mean']:.3f} | ({e['lower95']:.3f}, {e['upper95']:.3f}) | {e['width']:.3f} "
            f"| {e['prob_positive']:.4f} | {e['a1']:.3f} | {e['a2']:.3f} | {e['ess_borrowed']:.2f} |"
        )
    lines.append("")
    lines.append(f"success: {str(report['success']).lower()}")
    lines.extend(f"note: {n}" for n in report["notes"])
    return "\n".join(lines) + "\n"


def cmd_analyze(args) -> int:
    frame, config = _load(args)
    report = analyze_frame(frame, config).to_dict()
    _emit(report_markdown(report) if args.format == "md" else dumps(report), args.out)
    return EXIT_OK


def cmd_mpi(args) -> int:
    frame, config = _load(args)
    _emit(dumps(mpi_frame(frame, config)), None)
    return EXIT_OK


def cmd_scenarios(args) -> int:
    _emit(scenarios_csv(), None)
    return EXIT_OK


def cmd_fixture(args) -> int:
    if args.noise_sd <= 0:
        raise UsageError("--noise-sd must be positive")
    frame = make_fixture(args.seed, effect=args.effect, noise_sd=args.noise_sd, matched=args.matched)
    _emit(frame.to_csv(index=False, lineterminator="\n"), args.out)
    if args.config_out:
        Path(args.config_out).write_text(dumps(fixture_config(args.seed)), encoding="utf-8")
    print(f"wrote SYNTHETIC fixture, not real subjects ({len(frame)} rows, matched={args.matched})", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="borrowkit", description=__doc__)
    p.add_argument("--version", action="version", version=f"borrowkit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the operating-characteristics study")
    s.add_argument("--scenario", required=True, help="I..XII, comma list, or all")
    s.add_argument("--n", type=int, default=100, help="current-study size (even)")
    s.add_argument("--n-ext", type=int, default=1000, help="external-study size")
    s.add_argument("--reps", type=int, default=100)
    s.add_argument("--draws", type=int, default=5000)
    s.add_argument("--burn-in", type=int, default=2000)
    s.add_argument("--strategy", action="append", help="psw-bpp or fixed:a1,a2 (repeatable)")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", help="output path (default stdout)")
    s.add_argument("--format", choices=("csv", "md", "json"), default="csv")
    s.add_argument("--threads", type=int, help="worker processes (default $BORROWKIT_THREADS or CPU count)")
    s.add_argument("--mpi-weighting", choices=MPI_WEIGHTING, default="weighted")
    s.add_argument("--mpi-kind", choices=MPI_KINDS, default="tail")
    s.add_argument("--fb-weighted", action="store_true", help="PS-weight external data for fixed strategies")
    s.set_defaults(func=cmd_simulate)

    for name, func, helptext in (
        ("analyze", cmd_analyze, "analyze a subject-level CSV"),
        ("mpi", cmd_mpi, "print mPI diagnostics and power parameters as JSON"),
    ):
        a = sub.add_parser(name, help=helptext)
        a.add_argument("data", help="dataset CSV")
        a.add_argument("config", help="analysis config JSON")
        if name == "analyze":
            a.add_argument("--out", help="report path (default stdout)")
            a.add_argument("--format", choices=("json", "md"), default="json")
        a.set_defaults(func=func)

    sc = sub.add_parser("scenarios", help="print the simulation scenario table as CSV")
    sc.set_defaults(func=cmd_scenarios)

    f = sub.add_parser("fixture", help="write a synthetic case-study-like dataset")
    f.add_argument("--seed", type=int, required=True)
    f.add_argument("--effect", type=float, default=0.17)
    f.add_argument("--noise-sd", type=float, default=0.75)
    f.add_argument("--matched", action="store_true", help="draw external covariates from the current-study distribution")
    f.add_argument("--out", help="CSV path (default stdout)")
    f.add_argument("--config-out", help="also write a matching analysis config JSON")
    f.set_defaults(func=cmd_fixture)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"borrowkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SchemaError as exc:
        print(f"borrowkit: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"borrowkit: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except (BorrowkitError, np.linalg.LinAlgError, ValueError, OSError) as exc:
        print(f"borrowkit: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
