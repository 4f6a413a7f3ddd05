"""Monte Carlo measurement of bias and variance convergence rates.

For each sample size n (with M = N = n) the lab draws T independent sample
pairs, estimates the divergence on each, and summarizes the mean, bias and
unbiased variance. Log-log regressions of |bias| and variance against n give
empirical rates, which are compared with the exponents predicted for the
bounded-support and smooth cases. Logarithmic factors in the predictions are
suppressed: a 1.5-decade grid cannot resolve them.

Trial t at size n always uses RNG stream ``trial_stream(n, t)``, so serial and
parallel runs give identical numbers.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from knnkl.distributions import (BumpMixture, Gaussian, RngState, UniformBox, analytic_kl,
                                 sample, trial_stream)
from knnkl.estimators import EstimatorConfig, estimate_kl

__all__ = [
    "DEFAULT_SIZES",
    "ExperimentPlan",
    "RateReport",
    "SizeSummary",
    "TheoreticalCase",
    "fit_loglog_slope",
    "format_rate_table",
    "infer_case",
    "rate_report",
    "read_summary_csv",
    "run_experiment",
    "run_trial",
    "run_trials",
    "summarize",
    "theoretical_rates",
]

SUMMARY_HEADER = ["n", "trials", "mean_estimate", "bias", "variance"]
RAW_HEADER = ["n", "trial", "estimate"]
RATES_HEADER = ["metric", "empirical_slope", "theoretical_exponent", "r_squared"]

# 8 geometric points from 10^2 to 10^3.5
DEFAULT_SIZES = tuple(int(round(v)) for v in np.logspace(2.0, 3.5, 8))
UNRELIABLE_SNR = 10.0


def desk_trials(d: int) -> int:
    return 2000 if d == 1 else 500


def full_trials(d: int) -> int:
    return 100_000 if d == 1 else 10_000


def fmt_num(x: float) -> str:
    return f"{x:.9g}"


@dataclass(frozen=True)
class ExperimentPlan:
    f_spec: object
    g_spec: object
    sizes: tuple = DEFAULT_SIZES
    trials: int = 2000
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if self.f_spec.d != self.g_spec.d:
            raise ValueError("f_spec and g_spec must have the same dimension")
        if not sizes:
            raise ValueError("sizes must not be empty")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("sizes must be strictly ascending")
        if sizes[0] <= self.estimator.k + 1:
            raise ValueError(f"every size must exceed k + 1 = {self.estimator.k + 1}")
        if int(self.trials) != self.trials or self.trials < 2:
            raise ValueError("trials must be an integer >= 2")
        RngState(self.seed)  # validates the seed range

    @property
    def d(self) -> int:
        return self.f_spec.d


@dataclass(frozen=True)
class SizeSummary:
    n: int
    mean_estimate: float
    bias: float
    variance: float
    trials: int

    @property
    def standard_error(self) -> float:
        return math.sqrt(self.variance / self.trials)


def run_trial(plan: ExperimentPlan, n: int, t: int) -> float:
    """One divergence estimate from fresh X ~ f and Y ~ g, both of size n."""
    if n not in plan.sizes:
        raise ValueError(f"size {n} is not in the plan")
    if not 0 <= t < plan.trials:
        raise ValueError(f"trial index {t} outside [0, {plan.trials})")
    gen = RngState(plan.seed, trial_stream(n, t)).generator()
    x = sample(plan.f_spec, n, gen)
    y = sample(plan.g_spec, n, gen)
    return estimate_kl(x, y, plan.estimator).value


def _run_block(args):
    plan, n, start, stop = args
    return n, start, [run_trial(plan, n, t) for t in range(start, stop)]


def run_trials(plan: ExperimentPlan, workers: int = 1, chunk: int = 250) -> dict:
    """Raw estimates as ``{n: array of length T}`` in trial order."""
    out = {n: np.empty(plan.trials) for n in plan.sizes}
    blocks = [(plan, n, s, min(s + chunk, plan.trials))
              for n in plan.sizes for s in range(0, plan.trials, chunk)]
    if workers <= 1:
        results = map(_run_block, blocks)
        for n, start, vals in results:
            out[n][start:start + len(vals)] = vals
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for n, start, vals in pool.map(_run_block, blocks):
                out[n][start:start + len(vals)] = vals
    return out


def _mean_var(values: np.ndarray) -> tuple:
    mean = math.fsum(values) / values.size
    var = math.fsum((values - mean) ** 2) / (values.size - 1)
    return mean, var


def summarize(plan: ExperimentPlan, raw: dict, truth: float | None = None) -> list:
    if truth is None:
        truth = analytic_kl(plan.f_spec, plan.g_spec)
    summaries = []
    for n in plan.sizes:
        mean, var = _mean_var(np.asarray(raw[n], dtype=np.float64))
        summaries.append(SizeSummary(n, mean, mean - truth, var, int(plan.trials)))
    return summaries


def run_experiment(plan: ExperimentPlan, workers: int = 1) -> list:
    """One SizeSummary per planned size, ascending in n.

    Raises NotClosedFormError before any sampling if the pair has no analytic
    divergence, since bias needs a ground truth.
    """
    truth = analytic_kl(plan.f_spec, plan.g_spec)
    return summarize(plan, run_trials(plan, workers), truth)


def fit_loglog_slope(pairs: Sequence) -> tuple:
    """Least-squares fit of log10(value) on log10(n).

    Returns (slope, r_squared) with the slope negated, so value ~ n**-beta
    reports beta.
    """
    pairs = list(pairs)
    if len(pairs) < 3:
        raise ValueError(f"need at least 3 points for a slope fit, got {len(pairs)}")
    for n, v in pairs:
        if not (n > 0 and v > 0):
            raise ValueError(f"log-log fit needs positive n and value, got ({n}, {v}) ")
    x = np.log10([float(n) for n, _ in pairs])
    y = np.log10([float(v) for _, v in pairs])
    dx, dy = x - x.mean(), y - y.mean()
    sxx, sxy, syy = math.fsum(dx * dx), math.fsum(dx * dy), math.fsum(dy * dy)
    if sxx == 0.0:
        raise ValueError("log-log fit needs at least two distinct sample sizes")
    slope = -sxy / sxx + 0.0
    r2 = 1.0 if syy == 0.0 else sxy * sxy / (sxx * syy)
    return slope, r2


@dataclass(frozen=True)
class TheoreticalCase:
    """``kind`` is 'bounded' (bounded support, densities bounded below) or 'smooth'."""

    kind: str
    d: int
    gamma: float = 1.0
    density_ratio_bounded: bool = True

    def __post_init__(self):
        if self.kind not in ("bounded", "smooth"):
            raise ValueError(f"case must be 'bounded' or 'smooth', got {self.kind!r}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("d must be a positive integer")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")


class TheoreticalRates(NamedTuple):
    bias: float | None
    variance: float | None
    minimax_mse: float


def theoretical_rates(case: TheoreticalCase) -> TheoreticalRates:
    """Exponents beta with error ~ n**-beta at M = N, log factors dropped."""
    d = case.d
    if case.kind == "bounded":
        return TheoreticalRates(1.0 / d, 1.0, min(1.0, 2.0 / d))
    g = case.gamma
    variance = 1.0 if case.density_ratio_bounded else None
    return TheoreticalRates(2.0 * g / (d + 2), variance, min(1.0, 4.0 * g / (d + 2)))


def infer_case(f, g) -> TheoreticalCase:
    """Case for the built-in families: boxes and bump mixtures are bounded-support;
    Gaussian pairs are smooth with gamma = 1, and f/g is bounded iff g is wider
    (or the pair is identical)."""
    if all(isinstance(s, (UniformBox, BumpMixture)) for s in (f, g)):
        return TheoreticalCase("bounded", f.d)
    if isinstance(f, Gaussian) and isinstance(g, Gaussian):
        bounded = g.scale > f.scale or (g.scale == f.scale and g.mean == f.mean)
        return TheoreticalCase("smooth", f.d, 1.0, bounded)
    raise ValueError(f"cannot infer a theoretical case for {type(f).__name__} vs {type(g).__name__}")


@dataclass(frozen=True)
class RateReport:
    bias_slope: float
    variance_slope: float
    bias_r_squared: float
    variance_r_squared: float
    theoretical_bias_exponent: float | None
    theoretical_variance_exponent: float | None
    minimax_mse_exponent: float
    unreliable_sizes: tuple = ()

    def csv_rows(self) -> list:
        def opt(v):
            return "" if v is None else fmt_num(v)

        return [
            ["bias", fmt_num(self.bias_slope), opt(self.theoretical_bias_exponent),
             fmt_num(self.bias_r_squared)],
            ["variance", fmt_num(self.variance_slope), opt(self.theoretical_variance_exponent),
             fmt_num(self.variance_r_squared)],
        ]


def rate_report(summaries: Sequence[SizeSummary], case: TheoreticalCase) -> RateReport:
    """Fit |bias| and variance slopes and attach the predicted exponents.

    Sizes whose |bias| is under 10 Monte Carlo standard errors are listed in
    ``unreliable_sizes``; they stay in the fit.
    """
    if len(summaries) < 3:
        raise ValueError(f"need at least 3 sizes for a rate report, got {len(summaries)}")
    for s in summaries:
        if s.bias == 0.0 or not math.isfinite(s.bias):
            raise ValueError(f"zero or non-finite bias at n={s.n}")
        if not s.variance > 0.0 or not math.isfinite(s.variance):
            raise ValueError(f"zero or non-finite variance at n={s.n}")
    bias_slope, bias_r2 = fit_loglog_slope([(s.n, abs(s.bias)) for s in summaries])
    var_slope, var_r2 = fit_loglog_slope([(s.n, s.variance) for s in summaries])
    theory = theoretical_rates(case)
    unreliable = tuple(s.n for s in summaries
                       if abs(s.bias) < UNRELIABLE_SNR * s.standard_error)
    return RateReport(bias_slope, var_slope, bias_r2, var_r2, theory.bias,
                      theory.variance, theory.minimax_mse, unreliable)


def format_rate_table(report: RateReport) -> str:
    def opt(v):
        return "--" if v is None else f"{v:.2f}"

    lines = [
        f"{'metric':<10}{'empirical':>12}{'theory':>10}{'r_squared':>12}",
        f"{'bias':<10}{report.bias_slope:>12.4f}{opt(report.theoretical_bias_exponent):>10}"
        f"{report.bias_r_squared:>12.4f}",
        f"{'variance':<10}{report.variance_slope:>12.4f}"
        f"{opt(report.theoretical_variance_exponent):>10}{report.variance_r_squared:>12.4f}",
        f"minimax MSE exponent: {report.minimax_mse_exponent:.2f}",
        "theoretical exponents omit logarithmic factors",
    ]
    if report.unreliable_sizes:
        lines.append("regression-unreliable sizes (|bias| < 10 standard errors): "
                     + ", ".join(str(n) for n in report.unreliable_sizes))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# CSV files

def write_summary_csv(summaries: Sequence[SizeSummary], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for s in summaries:
            w.writerow([s.n, s.trials, fmt_num(s.mean_estimate), fmt_num(s.bias),
                        fmt_num(s.variance)])


def write_raw_csv(raw: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RAW_HEADER)
        for n in sorted(raw):
            for t, v in enumerate(raw[n]):
                w.writerow([n, t, repr(float(v))])


def write_rates_csv(report: RateReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RATES_HEADER)
        w.writerows(report.csv_rows())


def read_summary_csv(path) -> list:
    """Parse a summary CSV; errors name the offending line number."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != SUMMARY_HEADER:
        raise ValueError(f"line 1: expected header {','.join(SUMMARY_HEADER)}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(SUMMARY_HEADER):
            raise ValueError(f"line {lineno}: expected {len(SUMMARY_HEADER)} fields, got {len(row)}")
        try:
            n, trials = int(row[0]), int(row[1])
            mean, bias, var = (float(c) for c in row[2:])
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric field in {row!r}") from None
        out.append(SizeSummary(n, mean, bias, var, trials))
    return out
