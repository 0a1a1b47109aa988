"""Figure rendering for the command-line runners.

Each subcommand gets one PNG summarizing its run. Renderers draw from the
same rows and summary that land in results.csv and summary.json, plus an
optional payload object the runner hands over for plots that need arrays
(fit curves, solution fields). Everything goes through the Agg backend,
so rendering works without a display.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg", force=True)

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_figure"]

Rows = Sequence[Mapping[str, Any]]


def _column(rows: Rows, key: str) -> np.ndarray:
    return np.asarray([row[key] for row in rows], dtype=float)


def _loglog_with_fit(ax, x: np.ndarray, y: np.ndarray, slope_label: str) -> None:
    """Scatter on log axes plus the least-squares power-law line, when legal."""
    keep = (x > 0) & (y > 0)
    ax.plot(x[keep], y[keep], "o", color="#1f6fb2")
    if keep.sum() >= 2:
        coef = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
        xs = np.array([x[keep].min(), x[keep].max()])
        ax.plot(xs, np.exp(coef[1]) * xs ** coef[0], "-", color="#d1495b",
                label=f"{slope_label} = {coef[0]:.3f}")
        ax.legend()
    ax.set_xscale("log")
    ax.set_yscale("log")


def _fig_exp_moment(ax, rows: Rows, summary: Mapping[str, Any], payload: Any) -> None:
    values = np.asarray(payload, dtype=float)
    ax.hist(values, bins=min(60, max(10, values.size // 20)), color="#1f6fb2")
    ax.axvline(float(summary["mean_value"]), color="#d1495b", label="mean")
    ax.set_xlabel("integral value")
    ax.set_ylabel("trials")
    ax.set_title(f"exp-moment estimate {summary['estimate']:.4g}")
    ax.legend()


def _fig_tail_fit(ax, rows: Rows, summary: Mapping[str, Any], payload: Any) -> None:
    lam2 = _column(rows, "lambda") ** 2
    p = _column(rows, "p_hat")
    keep = p > 0
    ax.semilogy(lam2[keep], p[keep], "o", color="#1f6fb2", label="exceedance")
    alpha = summary.get("alpha_hat")
    if alpha is not None and np.isfinite(alpha):
        xs = np.linspace(lam2.min(), lam2.max(), 64)
        ax.semilogy(xs, np.exp(summary["intercept"] - alpha * xs), "-",
                    color="#d1495b", label=f"slope {alpha:.3f}")
    ax.set_xlabel("lambda^2")
    ax.set_ylabel("tail probability")
    ax.legend()


def _fig_covariation(ax, rows: Rows, summary: Mapping[str, Any], payload: Any) -> None:
    gaps = _column(rows, "route_gap")
    ax.hist(gaps, bins=min(40, max(8, gaps.size // 8)), color="#1f6fb2")
    ax.axvline(float(summary["median_gap"]), color="#d1495b", label="median")
    ax.set_xlabel("|derivative route - partition route|")
    ax.set_ylabel("trials")
    ax.legend()


def _fig_zvonkin(ax, rows: Rows, summary: Mapping[str, Any], payload: Any) -> None:
    transform = payload
    grid = transform.grid
    im = ax.imshow(
        transform.U,
        aspect="auto",
        origin="lower",
        extent=(-grid.radius, grid.radius, 0.0, grid.horizon),
        cmap="RdBu_r",
    )
    ax.figure.colorbar(im, ax=ax, label="U")
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    ax.set_title(f"lambda = {transform.lam:g}, grad sup = {transform.grad_sup:.3f}")


def _fig_flow_holder(ax, rows: Rows, summary: Mapping[str, Any], payload: Any) -> None:
    fit = payload
    _loglog_with_fit(ax, np.asarray(fit.separations), np.asarray(fit.moduli), "alpha")
    ax.set_xlabel("start separation")
    ax.set_ylabel("sup gap across (s, t)")


def _fig_net_count(ax, rows: Rows, summary: Mapping[str, Any], payload: Any) -> None:
    eps = _column(rows, "epsilon")
    ax.plot(eps, _column(rows, "log_cardinality"), "o-", color="#1f6fb2", label="log count")
    ax.plot(eps, _column(rows, "bound_log"), "s--", color="#d1495b", label="log bound")
    ax.set_xscale("log")
    ax.invert_xaxis()
    ax.set_xlabel("epsilon")
    ax.set_ylabel("log cardinality")
    ax.legend()


def _fig_chain(ax, rows: Rows, summary: Mapping[str, Any], payload: Any) -> None:
    sweep = payload
    lengths = np.asarray([rep.window_length for rep in sweep.reports])
    moduli = np.asarray([rep.modulus for rep in sweep.reports])
    _loglog_with_fit(ax, lengths, moduli, "slope")
    ax.set_xlabel("window length")
    ax.set_ylabel("increment modulus")


def _fig_occupation(ax, rows: Rows, summary: Mapping[str, Any], payload: Any) -> None:
    values = _column(rows, "occupation")
    ax.hist(values, bins=min(40, max(8, values.size // 8)), color="#1f6fb2")
    ax.axvline(float(summary["mean_occupation"]), color="#d1495b", label="mean")
    ax.set_xlabel("time in the open set")
    ax.set_ylabel("trials")
    ax.legend()


def _fig_uniqueness(ax, rows: Rows, summary: Mapping[str, Any], payload: Any) -> None:
    levels = _column(rows, "level")
    endpoints = _column(rows, "endpoint_abs")
    if np.all(endpoints > 0):
        _loglog_with_fit(ax, levels, endpoints, "-slope")
    else:
        ax.plot(levels, endpoints, "o-", color="#1f6fb2")
        ax.set_xscale("log")
    ax.set_xlabel("span level")
    ax.set_ylabel("telescoped endpoint bound")


def _fig_continuity(ax, rows: Rows, summary: Mapping[str, Any], payload: Any) -> None:
    scales = _column(rows, "scale")
    gaps = _column(rows, "median_gap")
    keep = scales > 0
    ax.plot(scales[keep], gaps[keep], "o-", color="#1f6fb2", label="raw drift")
    report = payload
    for j, width in enumerate(report.widths):
        ax.plot(np.asarray(report.scales)[keep], report.width_gaps[j][keep],
                "--", alpha=0.6, label=f"smoothed {width:g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.invert_xaxis()
    ax.set_xlabel("perturbation scale")
    ax.set_ylabel("median integral gap")
    ax.legend(fontsize=8)


_RENDERERS: dict[str, Callable] = {
    "exp-moment": _fig_exp_moment,
    "tail-fit": _fig_tail_fit,
    "covariation": _fig_covariation,
    "zvonkin": _fig_zvonkin,
    "flow-holder": _fig_flow_holder,
    "net-count": _fig_net_count,
    "chain": _fig_chain,
    "occupation": _fig_occupation,
    "uniqueness": _fig_uniqueness,
    "continuity": _fig_continuity,
}


def render_figure(
    subcommand: str,
    rows: Rows,
    summary: Mapping[str, Any],
    payload: Any,
    out_dir: str | Path,
) -> str:
    """Write the subcommand's PNG into out_dir; returns the file name."""
    renderer = _RENDERERS[subcommand]
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=150)
    try:
        renderer(ax, rows, summary, payload)
        name = f"{subcommand}.png"
        fig.savefig(Path(out_dir) / name, bbox_inches="tight")
    finally:
        plt.close(fig)
    return name
