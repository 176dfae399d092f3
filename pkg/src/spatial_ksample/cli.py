"""Command line front end.

Subcommands::

    spatial-ksample test      --input data.csv [options]
    spatial-ksample simulate  --scenario scenario.ini --trials 500 [options]
    spatial-ksample bandwidth --input data.csv

Reports are JSON documents written to ``--output`` (stdout for ``-``); log
messages go to stderr. Exit codes: 0 success, 1 usage error, 2 data error,
3 statistical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

from .data_model import (
    AUTO_CV,
    AUTO_ROT,
    KernelFamily,
    KernelSpec,
    Method,
    SpatialDataset,
    TestConfig,
    validate_dataset,
)
from .errors import (
    DataError,
    EmptyInput,
    InvalidArgument,
    ParseError,
    ReplicateError,
    SchemaError,
    StatisticalError,
    ValidationError,
)
from .estimator import variance_diagnostic
from .kernels import DEFAULT_LADDER, cv_scores, rule_of_thumb_bandwidth
from .resampling import block_side_for, run_test
from .simulation import FieldModel, LocationModel, Margin, ScenarioSpec, monte_carlo_rejection_rate
from .statistic import build_grid

SCHEMA_VERSION = "1.0"
REQUIRED_COLUMNS = ("pop", "x", "y", "value")
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_STAT = 0, 1, 2, 3

log = logging.getLogger("spatial_ksample")


def load_csv(path) -> SpatialDataset:
    """Read ``pop,x,y,value`` rows (any column order, extra columns ignored)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not any(h.strip() for h in header):
            raise EmptyInput(f"{path}: file is empty")
        header = [h.strip() for h in header]
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise SchemaError(col)
        pos = {col: header.index(col) for col in REQUIRED_COLUMNS}
        rows = []
        for line, record in enumerate(reader, start=2):
            if not record or all(not f.strip() for f in record):
                continue
            if len(record) < len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(record)}", line)
            try:
                x = float(record[pos["x"]])
                y = float(record[pos["y"]])
                value = float(record[pos["value"]])
            except ValueError as exc:
                raise ParseError(str(exc), line) from exc
            if not all(math.isfinite(v) for v in (x, y, value)):
                raise ValidationError(f"line {line}: non-finite value or coordinate")
            rows.append((value, x, y, record[pos["pop"]].strip()))
    if not rows:
        raise EmptyInput(f"{path}: no data rows")
    return validate_dataset(rows)


def load_scenario(path) -> ScenarioSpec:
    """Parse a ``key = value`` scenario file (an optional ``[scenario]`` header)."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.lstrip().startswith("["):
        text = "[scenario]\n" + text
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
        sec = parser["scenario"]
        kw = {}
        if "k" in sec:
            kw["k"] = sec.getint("k")
        if "n_i" in sec:
            kw["n_i"] = tuple(int(v) for v in sec["n_i"].split(","))
        if "margins" in sec:
            kw["margins"] = tuple(Margin.parse(m) for m in sec["margins"].split(";") if m.strip())
        if "domain" in sec:
            kw["domain"] = tuple(float(v) for v in sec["domain"].split(","))
        if "location_model" in sec:
            kw["location_model"] = LocationModel(sec["location_model"].strip())
        if "field_model" in sec:
            kw["field_model"] = FieldModel(sec["field_model"].strip())
        for key in ("field_range", "cluster_spread"):
            if key in sec:
                kw[key] = sec.getfloat(key)
        for key in ("cluster_count", "seed"):
            if key in sec:
                kw[key] = sec.getint(key)
        unknown = set(sec) - set(ScenarioSpec.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown keys {sorted(unknown)}")
        kw.setdefault("k", len(kw.get("n_i", ())) or 2)
        return ScenarioSpec(**kw)
    except (configparser.Error, ValueError, KeyError) as exc:
        raise DataError(f"{path}: invalid scenario: {exc}") from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _bandwidth(text):
    if text in (AUTO_CV, AUTO_ROT):
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, auto-cv or auto-rot, got {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError("bandwidth must be positive")
    return v


def _block_side(text):
    if text == "auto":
        return None
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("block side must be positive")
    return v


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _add_test_options(p):
    p.add_argument("--kernel", choices=["epanechnikov", "gaussian"], default="epanechnikov")
    p.add_argument("--truncation-radius", type=float, default=3.0,
                   help="support radius of the gaussian kernel, in bandwidths")
    p.add_argument("--bandwidth", type=_bandwidth, default=AUTO_ROT,
                   help="REAL, auto-cv or auto-rot (default)")
    p.add_argument("--grid", type=int, default=16, help="grid nodes per axis")
    p.add_argument("--method", choices=["perm", "block-boot"], default="perm")
    p.add_argument("--B", type=_positive_int, default=1000, help="resampling replicates")
    p.add_argument("--block-side", type=_block_side, default=None,
                   help="REAL or auto (four bandwidths)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--y-subsample", type=_positive_int, default=1,
                   help="use every m-th pooled order statistic as a y probe")
    p.add_argument("--min-denominator", type=float, default=1e-12)
    p.add_argument("--min-coverage", type=float, default=0.5)
    p.add_argument("--add-one", action="store_true",
                   help="report (1 + count) / (1 + B) instead of count / B")
    p.add_argument("--no-null-enforcement", action="store_true",
                   help="block bootstrap keeps each point's own label")
    p.add_argument("--cv-full", action="store_true",
                   help="cross-validate over every pooled value instead of deciles")
    p.add_argument("--workers", type=int, default=1, help="parallel workers (0 = auto)")
    p.add_argument("--output", default="-", help="report path, or - for stdout")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spatial-ksample",
                     description="k-sample test for spatially indexed observations")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("test", help="run the test on a CSV file")
    p.add_argument("--input", required=True, help="CSV with columns pop,x,y,value")
    p.add_argument("--null-values", default=None, help="write resampled statistics here")
    _add_test_options(p)

    p = sub.add_parser("simulate", help="Monte Carlo rejection rate for a scenario")
    p.add_argument("--scenario", required=True, help="key = value scenario file")
    p.add_argument("--trials", type=_positive_int, required=True)
    _add_test_options(p)

    p = sub.add_parser("bandwidth", help="print the cross-validation table")
    p.add_argument("--input", required=True)
    p.add_argument("--kernel", choices=["epanechnikov", "gaussian"], default="epanechnikov")
    p.add_argument("--truncation-radius", type=float, default=3.0)
    p.add_argument("--candidates", default=None,
                   help="comma-separated bandwidths (default: rule of thumb ladder)")
    p.add_argument("--min-denominator", type=float, default=1e-12)
    p.add_argument("--cv-full", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def config_from_args(args) -> TestConfig:
    kernel = KernelSpec(KernelFamily(args.kernel), args.truncation_radius)
    return TestConfig(
        kernel=kernel,
        bandwidth=args.bandwidth,
        grid_resolution=args.grid,
        method=Method.PERMUTATION if args.method == "perm" else Method.BLOCK_BOOTSTRAP,
        replicates=args.B,
        block_side=args.block_side,
        alpha=args.alpha,
        seed=args.seed,
        min_denominator=args.min_denominator,
        min_coverage=args.min_coverage,
        y_subsample=args.y_subsample,
        add_one=args.add_one,
        null_enforced=not args.no_null_enforcement,
        cv_full=args.cv_full,
    )


def _write(text, destination):
    if destination == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(destination).write_text(text, encoding="utf-8")


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _cmd_test(args) -> int:
    config = config_from_args(args)
    timing = {}
    t = time.perf_counter()
    data = load_csv(args.input)
    timing["load"] = time.perf_counter() - t
    log.info("loaded %d observations in %d populations from %s", data.total, data.k, args.input)

    result = run_test(data, config, workers=args.workers, timings=timing)
    t = time.perf_counter()
    grid = build_grid(data, config.grid_resolution, config.weights)
    diag = variance_diagnostic(data, grid, config.kernel, result.bandwidth_used,
                               config.min_denominator)
    timing["diagnostics"] = time.perf_counter() - t
    log.info("T_n=%.6g p=%.4g reject=%s", result.observed_Tn, result.p_value, result.reject)

    res = result.to_dict(include_null=False)
    config_echo = res.pop("config_echo")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "test",
        "input": {"path": str(args.input), "n": data.total, "k": data.k,
                  "counts": data.counts, "populations": list(data.label_names)},
        "config": config_echo,
        "result": res,
        "diagnostics": {
            "excluded_nodes": result.excluded_nodes,
            "coverage_fraction": result.coverage_fraction,
            "bandwidth_used": result.bandwidth_used,
            "block_side_used": (block_side_for(config, result.bandwidth_used)
                                if config.method is Method.BLOCK_BOOTSTRAP else None),
            "variance": diag,
        },
        "timing": timing,
    }
    doc["result"]["replicates"] = len(result.null_values)
    if args.null_values:
        Path(args.null_values).write_text(
            "".join(f"{float(v)!r}\n" for v in result.null_values), encoding="utf-8")
    _write(_dump(doc), args.output)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    config = config_from_args(args)
    scenario = load_scenario(args.scenario)
    t = time.perf_counter()
    mc = monte_carlo_rejection_rate(scenario, config, args.trials, workers=args.workers)
    elapsed = time.perf_counter() - t
    log.info("rejection rate %.4f over %d trials", mc.rate, mc.trials)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "scenario": scenario.to_dict(),
        "config": config.to_dict(),
        "result": {"rate": mc.rate, "trials": mc.trials, "rejections": mc.rejections,
                   "p_values": [float(p) for p in mc.p_values]},
        "timing": {"trials": elapsed},
    }
    _write(_dump(doc), args.output)
    return EXIT_OK


def _cmd_bandwidth(args) -> int:
    data = load_csv(args.input)
    kernel = KernelSpec(KernelFamily(args.kernel), args.truncation_radius)
    if args.candidates:
        try:
            candidates = [float(c) for c in args.candidates.split(",")]
        except ValueError:
            raise InvalidArgument(f"--candidates: cannot parse {args.candidates!r}")
    else:
        base = rule_of_thumb_bandwidth(data).value
        candidates = [base * f for f in DEFAULT_LADDER]
    scores = cv_scores(data, kernel, candidates, args.min_denominator, args.cv_full)
    valid = [s for s in scores if not math.isnan(s.score)]
    best = min(valid, key=lambda s: (s.score, s.bandwidth)) if valid else None
    lines = [f"{'bandwidth':>14}  {'cv_score':>14}  {'used':>6}"]
    for s in scores:
        mark = "  *" if s is best else ""
        score = "disqualified" if math.isnan(s.score) else f"{s.score:.8g}"
        lines.append(f"{s.bandwidth:>14.8g}  {score:>14}  {s.used:>6}{mark}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK if best is not None else EXIT_STAT


def _exit_code_for(exc) -> int:
    if isinstance(exc, ReplicateError) and exc.__cause__ is not None:
        return _exit_code_for(exc.__cause__)
    if isinstance(exc, DataError):
        return EXIT_DATA
    if isinstance(exc, StatisticalError):
        return EXIT_STAT
    if isinstance(exc, InvalidArgument):
        return EXIT_USAGE
    return EXIT_STAT


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s: %(message)s",
                        level=logging.INFO if args.verbose else logging.WARNING)
    handlers = {"test": _cmd_test, "simulate": _cmd_simulate, "bandwidth": _cmd_bandwidth}
    try:
        return handlers[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: file not found", file=sys.stderr)
        return EXIT_DATA
    except (DataError, StatisticalError, InvalidArgument, ReplicateError) as exc:
        where = getattr(args, "input", None) or getattr(args, "scenario", None)
        print(f"error: {where}: {exc}", file=sys.stderr)
        return _exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
