"""Brownian paths on dyadic time grids with reproducible refinement.

Paths are built by midpoint (bridge) construction. The level-L path of a
trial consumes the first dim*2^L words of that trial's substream, laid out
in level bands: band 0 holds the terminal value's word, band k (k >= 1)
holds the 2^(k-1) midpoint words inserted when level k-1 is refined to
level k. Refining therefore draws words no coarser level ever touched, so
existing nodes are preserved bit for bit and sampling at level L equals
sampling at any coarser level plus refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._rng import derive_key, normals_from_words, raw_words, words_block
from .errors import CapacityError, GridAlignmentError, WindowError

__all__ = [
    "DEFAULT_VALUE_CAP",
    "TimeWindow",
    "DyadicGrid",
    "BrownianPath",
    "TimeReversal",
    "sample_path",
    "refine",
    "restrict",
    "time_reverse",
    "scale_to_unit",
    "grid_window_indices",
]

DEFAULT_VALUE_CAP = 1 << 25

_STREAM_TAG = "brownian-path"


@dataclass(frozen=True)
class TimeWindow:
    """Closed subinterval [start, end] of the simulation horizon."""

    start: float
    end: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise WindowError("window endpoints must be finite")
        if self.start < 0.0 or self.end <= self.start:
            raise WindowError(f"need 0 <= start < end, got [{self.start}, {self.end}]")

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class DyadicGrid:
    """Uniform grid with 2^level cells over [0, horizon]."""

    level: int
    horizon: float = 1.0

    def __post_init__(self) -> None:
        if self.level < 0:
            raise ValueError("level must be >= 0")
        if not (math.isfinite(self.horizon) and self.horizon > 0.0):
            raise ValueError("horizon must be positive and finite")

    @property
    def n_cells(self) -> int:
        return 1 << self.level

    @property
    def spacing(self) -> float:
        return self.horizon / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_cells + 1)


@dataclass(frozen=True)
class BrownianPath:
    """Sampled Brownian nodes; values has shape (2^level + 1, dim).

    seed and trial_index identify the substream the path was drawn from.
    Derived paths (rescaled windows) keep the parent's provenance.
    """

    grid: DyadicGrid
    dim: int
    values: np.ndarray
    seed: int
    trial_index: int

    def __post_init__(self) -> None:
        expected = (self.grid.n_cells + 1, self.dim)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != {expected}")

    @property
    def scalar_values(self) -> np.ndarray:
        if self.dim != 1:
            raise ValueError("scalar_values requires dim == 1")
        return self.values[:, 0]


@dataclass(frozen=True)
class TimeReversal:
    """Reversed nodes and the Brownian motion reconstructed from them.

    bridge_values holds B_t = W~_t - W~_0 + int_0^t W~_s / (1 - s) ds on the
    grid, with the cell integrals of 1/(1-s) taken exactly and the value
    averaged over each cell. singular_cell_bound records the magnitude bound
    applied to the final cell, where the weight blows up and the substitution
    v = sqrt(1 - s) keeps the integrand bounded.
    """

    grid: DyadicGrid
    dim: int
    reversed_values: np.ndarray
    bridge_values: np.ndarray
    singular_cell_bound: float


def _check_capacity(level: int, dim: int, max_values: int) -> None:
    need = ((1 << level) + 1) * dim
    if need > max_values:
        raise CapacityError(f"level {level} needs {need} values, cap is {max_values}")


def node_block(
    level: int,
    dim: int,
    horizon: float,
    seed: int,
    trials: np.ndarray,
    max_values: int = DEFAULT_VALUE_CAP,
) -> np.ndarray:
    """Node values for a batch of trials, shape (len(trials), 2^level + 1, dim).

    Row i is bit-identical to sample_path(..., trial_index=trials[i]).values.
    """
    _check_capacity(level, dim, max_values)
    key = derive_key(seed, _STREAM_TAG)
    n = 1 << level
    words = words_block(key, np.asarray(trials), dim * n)
    z = normals_from_words(words)
    batch = len(trials)
    vals = np.zeros((batch, n + 1, dim))
    root = math.sqrt(horizon)
    vals[:, n] = root * z[:, :dim]
    for lev in range(1, level + 1):
        m = 1 << (lev - 1)
        band = z[:, dim * m : 2 * dim * m].reshape(batch, m, dim)
        stride = 1 << (level - lev + 1)
        half = stride >> 1
        parents = np.arange(m) * stride
        std = root * 2.0 ** (-0.5 * (lev + 1))
        vals[:, parents + half] = 0.5 * (vals[:, parents] + vals[:, parents + stride]) + std * band
    return vals


def sample_path(
    level: int,
    dim: int = 1,
    horizon: float = 1.0,
    seed: int = 0,
    trial_index: int = 0,
    max_values: int = DEFAULT_VALUE_CAP,
) -> BrownianPath:
    """Draw the trial's path at the given level (W_0 = 0 exactly)."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    grid = DyadicGrid(level, horizon)
    vals = node_block(level, dim, horizon, seed, np.array([trial_index]), max_values)[0]
    return BrownianPath(grid=grid, dim=dim, values=vals, seed=seed, trial_index=trial_index)


def refine(path: BrownianPath, max_values: int = DEFAULT_VALUE_CAP) -> BrownianPath:
    """Insert bridge midpoints (variance spacing/4), keeping old nodes bitwise."""
    level = path.grid.level + 1
    _check_capacity(level, path.dim, max_values)
    key = derive_key(path.seed, _STREAM_TAG)
    m = 1 << (level - 1)
    words = raw_words(key, path.trial_index, path.dim * m, skip=path.dim * m)
    band = normals_from_words(words).reshape(m, path.dim)
    std = math.sqrt(path.grid.horizon) * 2.0 ** (-0.5 * (level + 1))
    old = path.values
    new = np.empty((2 * m + 1, path.dim))
    new[::2] = old
    new[1::2] = 0.5 * (old[:-1] + old[1:]) + std * band
    return replace(path, grid=DyadicGrid(level, path.grid.horizon), values=new)


def restrict(path: BrownianPath, level: int) -> BrownianPath:
    """Keep every 2^(L-level)-th node; exact inverse of repeated refinement."""
    if level > path.grid.level:
        raise ValueError("restrict target level exceeds the path's level")
    step = 1 << (path.grid.level - level)
    return replace(
        path, grid=DyadicGrid(level, path.grid.horizon), values=path.values[::step].copy()
    )


def time_reverse(path: BrownianPath) -> TimeReversal:
    """Reverse the path and reconstruct the Brownian motion driving it.

    Requires horizon 1 and level >= 4. The reversed process satisfies
    W~_t = W~_0 + B_t - int_0^t W~_s / (1 - s) ds for a Brownian motion B;
    solving for B on the grid uses per-cell value averages against the exact
    weight log((1-t_i)/(1-t_{i+1})). On the final cell the weight diverges;
    substituting v = sqrt(1 - s) and using the bridge interpolant (which
    vanishes at v = 0) the cell contributes exactly the last interior value.
    """
    if not math.isclose(path.grid.horizon, 1.0, rel_tol=0.0, abs_tol=1e-12):
        raise WindowError("time reversal requires horizon 1")
    if path.grid.level < 4:
        raise GridAlignmentError("time reversal requires level >= 4")
    w_rev = path.values[::-1].copy()
    t = path.grid.nodes
    n = path.grid.n_cells
    weights = np.log((1.0 - t[: n - 1]) / (1.0 - t[1:n]))
    avg = 0.5 * (w_rev[: n - 1] + w_rev[1:n])
    contrib = np.empty((n, path.dim))
    contrib[: n - 1] = avg * weights[:, None]
    contrib[n - 1] = w_rev[n - 1]
    integral = np.zeros((n + 1, path.dim))
    np.cumsum(contrib, axis=0, out=integral[1:])
    bridge = w_rev - w_rev[0] + integral
    bound = 2.0 * float(np.max(np.abs(w_rev[n - 1])))
    return TimeReversal(
        grid=path.grid,
        dim=path.dim,
        reversed_values=w_rev,
        bridge_values=bridge,
        singular_cell_bound=bound,
    )


def grid_window_indices(grid: DyadicGrid, window: TimeWindow) -> tuple[int, int]:
    """Node indices (i0, i1) such that nodes[i0] = start and nodes[i1] = end."""
    dt = grid.spacing
    i0 = round(window.start / dt)
    i1 = round(window.end / dt)
    tol = 1e-9 * dt
    if abs(i0 * dt - window.start) > tol or abs(i1 * dt - window.end) > tol:
        raise GridAlignmentError(f"window [{window.start}, {window.end}] is off-grid at level {grid.level}")
    if i1 > grid.n_cells:
        raise WindowError("window extends past the horizon")
    return i0, i1


def scale_to_unit(path: BrownianPath, window: TimeWindow) -> BrownianPath:
    """Map s -> (W(start + s*length) - W(start)) / sqrt(length) onto [0, 1].

    The window must be grid-aligned and span a power-of-two number of cells.
    Provenance fields carry over from the parent path.
    """
    i0, i1 = grid_window_indices(path.grid, window)
    span = i1 - i0
    if span < 1 or span & (span - 1):
        raise GridAlignmentError(f"window spans {span} cells; need a power of two")
    scale = 1.0 / math.sqrt(window.length)
    vals = (path.values[i0 : i1 + 1] - path.values[i0]) * scale
    grid = DyadicGrid(span.bit_length() - 1, 1.0)
    return BrownianPath(
        grid=grid, dim=path.dim, values=vals, seed=path.seed, trial_index=path.trial_index
    )
