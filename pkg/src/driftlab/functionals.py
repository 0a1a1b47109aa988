"""Path functionals: quadratures along Brownian nodes.

Time integrals of bounded integrands use the midpoint rule per cell, with
the path interpolated by its endpoint average (midpoints are off-grid).
Stochastic integrals use left-endpoint sums. The singular weight 1/(1-t)
appearing after time reversal is integrated exactly per cell, and the final
cell is handled by the sqrt-substitution described in paths.time_reverse.

Per-path operations delegate to the batch kernels with a batch of one, so
Monte Carlo runs and single-path calls share every floating-point step.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .drifts import Drift, spatial_derivative
from .errors import UnsupportedDimensionError, WindowError
from .paths import BrownianPath, DyadicGrid, TimeWindow, grid_window_indices, node_block, time_reverse

__all__ = [
    "Box",
    "OpenSetSpec",
    "CovariationReport",
    "derivative_integral",
    "covariation_partition",
    "covariation_decomposition",
    "shifted_drift_integral",
    "occupation_time",
    "batch_derivative_integral",
    "batch_shifted_difference",
]

Shift = Callable[[np.ndarray], np.ndarray] | float | None


def _shift_values(shift: Shift, t_mid: np.ndarray) -> np.ndarray | float:
    if shift is None:
        return 0.0
    if callable(shift):
        return np.asarray(shift(t_mid), dtype=float)
    return float(shift)


def _cell_midpoints(grid: DyadicGrid, i0: int, i1: int) -> tuple[np.ndarray, float]:
    dt = grid.spacing
    t_mid = (np.arange(i0, i1) + 0.5) * dt
    return t_mid, dt


def _derivative_from_nodes(spec: Drift, nodes: np.ndarray, horizon: float) -> np.ndarray:
    n = nodes.shape[1] - 1
    dt = horizon / n
    t_mid = (np.arange(n) + 0.5) * dt
    w_mid = 0.5 * (nodes[:, :-1] + nodes[:, 1:])
    return spatial_derivative(spec, t_mid, w_mid).sum(axis=1) * dt


def derivative_integral(spec: Drift, path: BrownianPath) -> float:
    """int_0^T db/dx(t, W_t) dt by midpoint quadrature (first coordinate)."""
    nodes = path.values[:, 0][None, :]
    return float(_derivative_from_nodes(spec, nodes, path.grid.horizon)[0])


def batch_derivative_integral(
    spec: Drift, level: int, seed: int, trials: np.ndarray, horizon: float = 1.0
) -> np.ndarray:
    """Per-trial derivative integrals; row i matches the trial's sample_path."""
    block = node_block(level, 1, horizon, seed, np.asarray(trials))[:, :, 0]
    return _derivative_from_nodes(spec, block, horizon)


def covariation_partition(spec: Drift, path: BrownianPath) -> float:
    """Left-point partition sum of d[b(t, W), W] over the grid."""
    t = path.grid.nodes
    z = spec.value(t[:, None], path.values)
    dz = np.diff(z, axis=0)
    dw = np.diff(path.values, axis=0)
    return float((dz * dw).sum())


@dataclass(frozen=True)
class CovariationReport:
    """Both covariation routes and their disagreement.

    derivative_integral: direct quadrature of db/dx along the path.
    partition_sum: discrete covariation of b(t, W_t) against W.
    reversed_stochastic: left-point integral of b against the Brownian
        motion reconstructed from the reversed path.
    reversed_weight: time integral carrying the singular 1/(1-t) weight.
    forward_stochastic: negated left-point integral of b against W itself.
    residual: |sum of the three terms - derivative_integral|.
    """

    derivative_integral: float
    partition_sum: float
    reversed_stochastic: float
    reversed_weight: float
    forward_stochastic: float
    residual: float
    singular_cell_bound: float


def covariation_decomposition(spec: Drift, path: BrownianPath) -> CovariationReport:
    """Split the covariation into its time-reversal representation (d = 1)."""
    if path.dim != 1:
        raise UnsupportedDimensionError("decomposition is implemented for dim 1")
    rev = time_reverse(path)
    t = path.grid.nodes
    n = path.grid.n_cells
    w = path.values[:, 0]
    w_rev = rev.reversed_values[:, 0]
    bridge = rev.bridge_values[:, 0]

    z_rev = spec.value(1.0 - t, w_rev)
    i1 = -float(np.sum(z_rev[:-1] * np.diff(bridge)))

    g = w_rev * z_rev
    weights = np.log((1.0 - t[: n - 1]) / (1.0 - t[1:n]))
    interior = np.sum(0.5 * (g[: n - 1] + g[1:n]) * weights)
    i2 = float(interior + g[n - 1])

    z_fwd = spec.value(t, w)
    i3 = -float(np.sum(z_fwd[:-1] * np.diff(w)))

    deriv = derivative_integral(spec, path)
    total = i1 + i2 + i3
    return CovariationReport(
        derivative_integral=deriv,
        partition_sum=covariation_partition(spec, path),
        reversed_stochastic=i1,
        reversed_weight=i2,
        forward_stochastic=i3,
        residual=abs(total - deriv),
        singular_cell_bound=rev.singular_cell_bound,
    )


def _shifted_integral_from_nodes(
    spec: Drift,
    nodes: np.ndarray,
    grid: DyadicGrid,
    i0: int,
    i1: int,
    shift: Shift,
) -> np.ndarray:
    t_mid, dt = _cell_midpoints(grid, i0, i1)
    w_mid = 0.5 * (nodes[:, i0:i1] + nodes[:, i0 + 1 : i1 + 1])
    pos = w_mid + _shift_values(shift, t_mid)
    return spec.value(t_mid, pos).sum(axis=1) * dt


def shifted_drift_integral(
    spec: Drift, path: BrownianPath, shift: Shift = None, window: TimeWindow | None = None
) -> np.ndarray:
    """int_window b(s, W_s + h(s)) ds, one value per coordinate."""
    window = window or TimeWindow(0.0, path.grid.horizon)
    i0, i1 = grid_window_indices(path.grid, window)
    if i1 <= i0:
        raise WindowError("window covers no grid cell")
    out = np.empty(path.dim)
    for j in range(path.dim):
        out[j] = _shifted_integral_from_nodes(
            spec, path.values[:, j][None, :], path.grid, i0, i1, shift
        )[0]
    return out


def batch_shifted_difference(
    spec: Drift,
    level: int,
    seed: int,
    trials: np.ndarray,
    shift1: Shift,
    shift2: Shift,
    window: TimeWindow,
    horizon: float = 1.0,
) -> np.ndarray:
    """Per-trial |phi(h1, W) - phi(h2, W)| over the window (d = 1)."""
    grid = DyadicGrid(level, horizon)
    i0, i1 = grid_window_indices(grid, window)
    block = node_block(level, 1, horizon, seed, np.asarray(trials))[:, :, 0]
    t_mid, dt = _cell_midpoints(grid, i0, i1)
    w_mid = 0.5 * (block[:, i0:i1] + block[:, i0 + 1 : i1 + 1])
    phi1 = spec.value(t_mid, w_mid + _shift_values(shift1, t_mid)).sum(axis=1) * dt
    phi2 = spec.value(t_mid, w_mid + _shift_values(shift2, t_mid)).sum(axis=1) * dt
    return np.abs(phi1 - phi2)


@dataclass(frozen=True)
class Box:
    """Open box (t0, t1) x prod_j (lo_j, hi_j)."""

    t0: float
    t1: float
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.lo) != len(self.hi):
            raise ValueError("lo and hi must have equal length")
        if self.t1 <= self.t0 or any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("box must have positive extent on every axis")

    @property
    def volume(self) -> float:
        vol = self.t1 - self.t0
        for l, h in zip(self.lo, self.hi):
            vol *= h - l
        return vol


def box1(t0: float, t1: float, lo: float, hi: float) -> Box:
    return Box(t0, t1, (lo,), (hi,))


def _intersection_volume(boxes: Sequence[Box]) -> float:
    t0 = max(b.t0 for b in boxes)
    t1 = min(b.t1 for b in boxes)
    if t1 <= t0:
        return 0.0
    vol = t1 - t0
    dim = len(boxes[0].lo)
    for j in range(dim):
        lo = max(b.lo[j] for b in boxes)
        hi = min(b.hi[j] for b in boxes)
        if hi <= lo:
            return 0.0
        vol *= hi - lo
    return vol


@dataclass(frozen=True)
class OpenSetSpec:
    """Finite union of open space-time boxes with an exact measure."""

    boxes: tuple[Box, ...]

    def __post_init__(self) -> None:
        if not self.boxes:
            raise ValueError("need at least one box")
        dims = {len(b.lo) for b in self.boxes}
        if len(dims) != 1:
            raise ValueError("boxes must share one dimension")
        if len(self.boxes) > 20:
            raise ValueError("inclusion-exclusion capped at 20 boxes")

    @property
    def dim(self) -> int:
        return len(self.boxes[0].lo)

    def measure(self) -> float:
        total = 0.0
        for r in range(1, len(self.boxes) + 1):
            sign = 1.0 if r % 2 else -1.0
            for combo in itertools.combinations(self.boxes, r):
                total += sign * _intersection_volume(combo)
        return total

    def contains(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Pointwise membership; x has shape (..., dim), t broadcasts."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        inside = np.zeros(np.broadcast_shapes(t.shape, x.shape[:-1]), dtype=bool)
        for b in self.boxes:
            hit = (t > b.t0) & (t < b.t1)
            for j in range(self.dim):
                hit = hit & (x[..., j] > b.lo[j]) & (x[..., j] < b.hi[j])
            inside |= hit
        return inside


def occupation_time(
    path: BrownianPath,
    open_set: OpenSetSpec,
    shift: Shift = None,
    window: TimeWindow | None = None,
) -> float:
    """Time the shifted path spends in the open set, cell-midpoint sampled."""
    if open_set.dim != path.dim:
        raise UnsupportedDimensionError("open set dimension must match the path")
    window = window or TimeWindow(0.0, path.grid.horizon)
    i0, i1 = grid_window_indices(path.grid, window)
    t_mid, dt = _cell_midpoints(path.grid, i0, i1)
    w_mid = 0.5 * (path.values[i0:i1] + path.values[i0 + 1 : i1 + 1])
    sv = _shift_values(shift, t_mid)
    if isinstance(sv, np.ndarray) and sv.ndim == 1:
        sv = sv[:, None]
    inside = open_set.contains(t_mid, w_mid + sv)
    return float(inside.sum()) * dt
