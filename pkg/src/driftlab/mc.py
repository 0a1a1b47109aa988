"""Monte Carlo engine over trial-indexed kernels.

A kernel maps an array of trial indices to one value per trial. Trials own
disjoint counter blocks, so results depend only on (seed, trial index):
run_trials writes each batch into its slot of one output array and reduces
with a single np.sum, which makes every estimate bitwise independent of
batch size and thread schedule.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import beta

from ._rng import derive_key
from .drifts import Drift
from .errors import DegenerateNormalizerError, FitUnsupportedError, MCError
from .functionals import Shift, batch_derivative_integral, batch_shifted_difference
from .paths import TimeWindow

__all__ = [
    "TrialPlan",
    "ExpMomentReport",
    "TailCurve",
    "ConcentrationFit",
    "run_trials",
    "estimate_exp_moment",
    "exp_moment_report",
    "tail_curve",
    "tail_curve_from_values",
    "fit_concentration",
    "derivative_kernel",
    "shifted_difference_kernel",
]

Kernel = Callable[[np.ndarray], np.ndarray]

TRIM_FRACTION = 1e-3
EXCLUDED_LIMIT = 1e-3


@dataclass(frozen=True)
class TrialPlan:
    """How many trials to run and where their randomness comes from."""

    n_trials: int
    base_seed: int
    level: int
    batch: int = 1024
    threads: int = 1

    def __post_init__(self) -> None:
        if self.n_trials < 1 or self.batch < 1 or self.threads < 1:
            raise ValueError("n_trials, batch, and threads must be positive")


def run_trials(plan: TrialPlan, kernel: Kernel) -> np.ndarray:
    """Evaluate the kernel on every trial; output order is by trial index."""
    out = np.empty(plan.n_trials)
    starts = range(0, plan.n_trials, plan.batch)

    def one(start: int) -> None:
        stop = min(start + plan.batch, plan.n_trials)
        trials = np.arange(start, stop, dtype=np.int64)
        out[start:stop] = kernel(trials)

    if plan.threads == 1:
        for start in starts:
            one(start)
    else:
        with ThreadPoolExecutor(max_workers=plan.threads) as pool:
            list(pool.map(one, starts))
    return out


def derivative_kernel(spec: Drift, level: int, seed: int, horizon: float = 1.0) -> Kernel:
    return lambda trials: batch_derivative_integral(spec, level, seed, trials, horizon)


def shifted_difference_kernel(
    spec: Drift,
    level: int,
    seed: int,
    shift1: Shift,
    shift2: Shift,
    window: TimeWindow,
    horizon: float = 1.0,
) -> Kernel:
    return lambda trials: batch_shifted_difference(
        spec, level, seed, trials, shift1, shift2, window, horizon
    )


@dataclass(frozen=True)
class ExpMomentReport:
    """Estimate of E exp(alpha F^2) with a trimmed cross-check.

    trimmed_mean drops the largest TRIM_FRACTION of finite values; a ratio
    trimmed/mean far below 1 means a few trials carry the whole estimate.
    """

    alpha: float
    n_trials: int
    n_excluded: int
    mean: float
    trimmed_mean: float
    boot_se: float
    ci_low: float
    ci_high: float

    @property
    def trim_ratio(self) -> float:
        return self.trimmed_mean / self.mean if self.mean else math.nan


def exp_moment_report(
    values: np.ndarray, alpha: float, boot_seed: int, n_boot: int = 200
) -> ExpMomentReport:
    """Reduce per-trial F values to an exp-moment estimate with bootstrap CI."""
    values = np.asarray(values, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        weights = np.exp(alpha * values * values)
    finite = np.isfinite(weights)
    n_excluded = int(values.size - finite.sum())
    if n_excluded > EXCLUDED_LIMIT * values.size:
        raise MCError(
            f"{n_excluded} of {values.size} trials produced non-finite weights"
        )
    kept = weights[finite]
    mean = float(kept.mean())

    n_trim = math.ceil(TRIM_FRACTION * kept.size)
    trimmed = np.sort(kept)[: kept.size - n_trim] if n_trim < kept.size else kept
    trimmed_mean = float(trimmed.mean())

    rng = np.random.Generator(np.random.Philox(key=derive_key(boot_seed, "bootstrap")))
    boot = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, kept.size, kept.size)
        boot[b] = kept[idx].mean()
    boot.sort()
    return ExpMomentReport(
        alpha=alpha,
        n_trials=int(values.size),
        n_excluded=n_excluded,
        mean=mean,
        trimmed_mean=trimmed_mean,
        boot_se=float(boot.std(ddof=1)),
        ci_low=float(np.quantile(boot, 0.025)),
        ci_high=float(np.quantile(boot, 0.975)),
    )


def estimate_exp_moment(plan: TrialPlan, kernel: Kernel, alpha: float) -> ExpMomentReport:
    values = run_trials(plan, kernel)
    return exp_moment_report(values, alpha, plan.base_seed)


@dataclass(frozen=True)
class TailCurve:
    """Empirical exceedance of normalized values at each threshold.

    counts[j] = #{trials with value > lambdas[j] * normalizer}, strictly.
    ci_low/ci_high are per-threshold 95% Clopper-Pearson bounds on the
    exceedance probability.
    """

    lambdas: np.ndarray
    counts: np.ndarray
    n_trials: int
    normalizer: float
    p_hat: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray


def _clopper_pearson(counts: np.ndarray, n: int, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    tail = 0.5 * (1.0 - level)
    lo = np.where(counts > 0, beta.ppf(tail, counts, n - counts + 1), 0.0)
    hi = np.where(counts < n, beta.ppf(1.0 - tail, counts + 1, n - counts), 1.0)
    return lo, hi


def tail_curve_from_values(
    values: np.ndarray, normalizer: float, lambdas: Sequence[float]
) -> TailCurve:
    if normalizer == 0.0 or not math.isfinite(normalizer):
        raise DegenerateNormalizerError("normalizer must be finite and nonzero")
    values = np.asarray(values, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    counts = (values[None, :] > lambdas[:, None] * normalizer).sum(axis=1)
    n = values.size
    lo, hi = _clopper_pearson(counts, n)
    return TailCurve(
        lambdas=lambdas,
        counts=counts,
        n_trials=n,
        normalizer=normalizer,
        p_hat=counts / n,
        ci_low=lo,
        ci_high=hi,
    )


def tail_curve(
    plan: TrialPlan, kernel: Kernel, normalizer: float, lambdas: Sequence[float]
) -> TailCurve:
    return tail_curve_from_values(run_trials(plan, kernel), normalizer, lambdas)


@dataclass(frozen=True)
class ConcentrationFit:
    """Weighted fit of log p(lambda) = intercept - alpha_hat * lambda^2."""

    alpha_hat: float
    intercept: float
    r_squared: float
    n_bins_used: int
    non_decaying: bool


def fit_concentration(
    curve: TailCurve, min_count: int = 10, min_bins: int = 4
) -> ConcentrationFit:
    """Fit the Gaussian-type decay rate of the exceedance curve.

    Thresholds with fewer than min_count exceedances carry too little
    information about log p and are dropped; the weights are the inverse
    delta-method variances of log p_hat.
    """
    keep = curve.counts >= min_count
    if int(keep.sum()) < min_bins:
        raise FitUnsupportedError(
            f"only {int(keep.sum())} thresholds have >= {min_count} exceedances"
        )
    n = curve.n_trials
    p = curve.counts[keep] / n
    x = curve.lambdas[keep] ** 2
    y = np.log(p)
    var = (1.0 - p + 0.5 / n) / (n * p)
    w = 1.0 / var

    wx = np.average(x, weights=w)
    wy = np.average(y, weights=w)
    cov = np.average((x - wx) * (y - wy), weights=w)
    varx = np.average((x - wx) ** 2, weights=w)
    slope = cov / varx
    intercept = wy - slope * wx
    resid = y - (intercept + slope * x)
    ss_res = np.average(resid**2, weights=w)
    ss_tot = np.average((y - wy) ** 2, weights=w)
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    alpha_hat = -slope
    return ConcentrationFit(
        alpha_hat=float(alpha_hat),
        intercept=float(intercept),
        r_squared=float(r_squared),
        n_bins_used=int(keep.sum()),
        non_decaying=bool(alpha_hat <= 1e-12),
    )
