"""Command-line interface: ``knnkl {sample,estimate,experiment,rates}``.

Exit codes: 0 success, 1 runtime error, 2 usage error (bad flags, bad spec
strings, malformed input files).
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from knnkl import experiments as ex
from knnkl.distributions import (NotClosedFormError, RngState, SpecParseError, analytic_kl,
                                 parse_spec, sample)
from knnkl.estimators import EstimatorConfig, ZeroDistanceError, estimate_kl
from knnkl.special import Norm


class UsageError(Exception):
    pass


SPEC_GRAMMAR = """distribution specs (one line, space-separated key=value):
  uniform-box d=D lo=A hi=B               (A, B: one number or D comma-separated)
  gaussian d=D mean=MU scale=S            (covariance S * I)
  bump-mixture d=D m=M alpha=A D=R weights=U1,...,UM
"""

CONFIG_DOC = """config file: one `key = value` per line, `#` starts a comment.
  f_spec, g_spec   distribution specs (required)
  trials           trials per size, >= 2 (required)
  sizes            comma-separated ascending ints, or `logspace LO HI COUNT`
                   (default: logspace 2 3.5 8)
  k (3), norm (l2|linf), policy (error|clamp:FLOOR), seed (0)
  case (bounded|smooth; inferred for built-in pairs), gamma (1),
  ratio_bounded (true|false; inferred)

outputs in OUT_DIR:
  summary.csv  header n,trials,mean_estimate,bias,variance
  rates.csv    header metric,empirical_slope,theoretical_exponent,r_squared
  trials.csv   header n,trial,estimate (only with --raw)
"""


# ---------------------------------------------------------------------------
# file helpers

def _read_points(path: str) -> np.ndarray:
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError(f"{path}: empty file, expected header x1,...,xd")
    header = [c.strip() for c in rows[0]]
    if header != [f"x{j + 1}" for j in range(len(header))]:
        raise UsageError(f"{path}: line 1: expected header x1,...,xd")
    d = len(header)
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d:
            raise UsageError(f"{path}: line {lineno}: expected {d} fields, got {len(row)}")
        try:
            data.append([float(c) for c in row])
        except ValueError:
            raise UsageError(f"{path}: line {lineno}: non-numeric field") from None
    if not data:
        raise UsageError(f"{path}: no data rows")
    return np.array(data, dtype=np.float64)


def _write_points(points: np.ndarray, out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow([f"x{j + 1}" for j in range(points.shape[1])])
    for row in points:
        w.writerow([repr(float(v)) for v in row])


def _parse_sizes(text: str) -> tuple:
    parts = text.split()
    if parts and parts[0] == "logspace":
        if len(parts) != 4:
            raise UsageError("sizes: expected `logspace LO HI COUNT`")
        lo, hi, count = float(parts[1]), float(parts[2]), int(parts[3])
        return tuple(int(round(v)) for v in np.logspace(lo, hi, count))
    return tuple(int(s) for s in text.split(","))


_CONFIG_KEYS = {"f_spec", "g_spec", "sizes", "trials", "k", "norm", "policy", "seed",
                "case", "gamma", "ratio_bounded"}


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1"):
        return True
    if t in ("false", "no", "0"):
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def load_config(path: str):
    """Read an experiment config into (ExperimentPlan, TheoreticalCase)."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    values = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise UsageError(f"{path}: line {lineno}: expected `key = value`")
        if key not in _CONFIG_KEYS:
            raise UsageError(f"{path}: line {lineno}: unknown key {key!r}")
        values[key] = (lineno, value)
    for key in ("f_spec", "g_spec", "trials"):
        if key not in values:
            raise UsageError(f"{path}: missing required key {key!r}")

    def get(key, conv, default=None):
        if key not in values:
            return default
        lineno, value = values[key]
        try:
            return conv(value)
        except (ValueError, SpecParseError, UsageError) as exc:
            raise UsageError(f"{path}: line {lineno}: {key}: {exc}") from None

    f_spec = get("f_spec", parse_spec)
    g_spec = get("g_spec", parse_spec)
    try:
        cfg = EstimatorConfig(k=get("k", int, 3), norm=get("norm", Norm.parse, Norm.EUCLIDEAN),
                              clamp_floor=get("policy", EstimatorConfig.parse_policy, None))
        plan = ex.ExperimentPlan(f_spec, g_spec, get("sizes", _parse_sizes, ex.DEFAULT_SIZES),
                                 get("trials", int), cfg, get("seed", int, 0))
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    case = get("case", str)
    if case is None:
        try:
            case = ex.infer_case(f_spec, g_spec)
        except ValueError as exc:
            raise UsageError(f"{path}: {exc}; set `case` explicitly") from None
        if "gamma" in values or "ratio_bounded" in values:
            case = ex.TheoreticalCase(case.kind, case.d, get("gamma", float, case.gamma),
                                      get("ratio_bounded", _bool, case.density_ratio_bounded))
    else:
        try:
            case = ex.TheoreticalCase(case, f_spec.d, get("gamma", float, 1.0),
                                      get("ratio_bounded", _bool, True))
        except ValueError as exc:
            raise UsageError(f"{path}: {exc}") from None
    return plan, case


# ---------------------------------------------------------------------------
# subcommands

def cmd_sample(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    try:
        spec = parse_spec(args.dist)
    except SpecParseError as exc:
        raise UsageError(f"--dist: {exc}") from None
    pts = sample(spec, args.n, RngState(args.seed, args.stream))
    if args.out in (None, "-"):
        _write_points(pts, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            _write_points(pts, fh)
    return 0


def cmd_estimate(args) -> int:
    try:
        floor = EstimatorConfig.parse_policy(args.policy)
        cfg = EstimatorConfig(k=args.k, norm=args.norm, clamp_floor=floor)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    x = _read_points(args.x)
    y = _read_points(args.y)
    est = estimate_kl(x, y, cfg)
    print(f"kl_nats={est.value:.9f}")
    print(f"n={est.n}")
    print(f"m={est.m}")
    print(f"k={est.k}")
    return 0


def cmd_experiment(args) -> int:
    plan, case = load_config(args.config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        truth = analytic_kl(plan.f_spec, plan.g_spec)
    except NotClosedFormError as exc:
        print(f"error: experiments require an analytic-KL pair for the bias ground truth: {exc}",
              file=sys.stderr)
        return 1
    raw = ex.run_trials(plan, workers=args.workers)
    summaries = ex.summarize(plan, raw, truth)
    ex.write_summary_csv(summaries, out_dir / "summary.csv")
    if args.raw:
        ex.write_raw_csv(raw, out_dir / "trials.csv")
    report = ex.rate_report(summaries, case)
    ex.write_rates_csv(report, out_dir / "rates.csv")
    print(f"ground truth KL = {ex.fmt_num(truth)} nats")
    print(ex.format_rate_table(report))
    return 0


def cmd_rates(args) -> int:
    try:
        summaries = ex.read_summary_csv(args.summary)
    except OSError as exc:
        raise UsageError(f"cannot read {args.summary}: {exc.strerror}") from None
    except ValueError as exc:
        raise UsageError(f"{args.summary}: {exc}") from None
    if len(summaries) < 3:
        raise UsageError(f"{args.summary}: need at least 3 data rows, got {len(summaries)}")
    try:
        case = ex.TheoreticalCase(args.case, args.d, args.gamma, not args.ratio_unbounded)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = ex.rate_report(summaries, case)
    print(ex.format_rate_table(report))
    if args.out:
        ex.write_rates_csv(report, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(
        prog="knnkl", description="kNN KL divergence estimation and convergence-rate experiments",
        epilog=SPEC_GRAMMAR, formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw samples from a distribution spec",
                       epilog=SPEC_GRAMMAR + "\noutput CSV header: x1,...,xd; one row per sample",
                       formatter_class=fmt)
    p.add_argument("--dist", required=True, help="distribution spec string")
    p.add_argument("--n", type=int, required=True, help="number of samples (>= 1)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--stream", type=int, default=0, help="RNG stream id (default 0)")
    p.add_argument("--out", help="output CSV path (default stdout)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("estimate", help="estimate D(f||g) from two sample files",
                       epilog="input CSV header: x1,...,xd (as written by `sample`)\n"
                              "prints kl_nats=, n=, m=, k= lines",
                       formatter_class=fmt)
    p.add_argument("--x", required=True, help="CSV of samples from f")
    p.add_argument("--y", required=True, help="CSV of samples from g")
    p.add_argument("--k", type=int, default=3, help="neighbor order (default 3)")
    p.add_argument("--norm", choices=["l2", "linf"], default="l2", help="distance (default l2)")
    p.add_argument("--policy", default="error",
                   help="zero-distance policy: error (default) or clamp:FLOOR")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("experiment", help="run a Monte Carlo bias/variance experiment",
                       epilog=CONFIG_DOC + "\n" + SPEC_GRAMMAR, formatter_class=fmt)
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--out-dir", required=True, help="directory for output CSVs")
    p.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--raw", action="store_true", help="also write trials.csv")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("rates", help="fit convergence rates from a summary CSV",
                       epilog="input CSV header: n,trials,mean_estimate,bias,variance (>= 3 rows)\n"
                              "output CSV header: metric,empirical_slope,theoretical_exponent,"
                              "r_squared",
                       formatter_class=fmt)
    p.add_argument("--summary", required=True, help="summary.csv from `experiment`")
    p.add_argument("--case", choices=["bounded", "smooth"], required=True,
                   help="bounded support or smooth densities")
    p.add_argument("--d", type=int, required=True, help="dimension")
    p.add_argument("--gamma", type=float, default=1.0, help="tail exponent, smooth case (default 1)")
    p.add_argument("--ratio-unbounded", action="store_true",
                   help="f/g is unbounded: no variance exponent")
    p.add_argument("--out", help="write the rates CSV here")
    p.set_defaults(func=cmd_rates)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ZeroDistanceError as exc:
        print(f"error: ZeroDistance: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
