"""Dyadic certificates comparing candidate solutions against span maps.

A candidate is any numerical solution of the drift equation riding one
fixed noise path. The audit rebuilds, per dyadic level M, the family of
solution maps over the spans [i*r/M, (i+1)*r/M] from an x-grid of start
points, measures how far the candidate drifts from the span images, and
telescopes those defects into a certified bound on the endpoint gap
between the candidate and the map started at x0. The bound should decay
in M for a genuine solution; its fitted decay rate is the certificate.

Span maps run at a finer step than any candidate (so the oracle carries
less discretization error) and may optionally ride the straightened
coordinates of a resolvent transform. Start-grid edges are clamped during
suffix composition; only the candidate itself leaving the hull is an
error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .drifts import ConditionReport, Drift, check_uniqueness_conditions
from .errors import (
    CertificateInapplicableError,
    DegeneratePairError,
    GridAlignmentError,
    HullError,
    WindowError,
)
from .flow import NoiseSpec, _steps_per_increment
from .functionals import _shifted_integral_from_nodes, batch_shifted_difference
from .paths import DyadicGrid, TimeWindow, node_block
from .zvonkin import ZvonkinTransform

__all__ = [
    "CandidateSolution",
    "UniquenessCertificate",
    "HolderCertificate",
    "ContinuityReport",
    "MollifiedDrift",
    "DEFAULT_VARIANTS",
    "DEFAULT_LEVELS",
    "make_candidates",
    "candidate_family",
    "certificate",
    "holder_certificate",
    "pairwise_gaps",
    "strong_convergence_envelope",
    "telescoped_decay_exponents",
    "mollified_drift",
    "drift_integral_continuity",
]

# the perturbation kick is 1.5 * dt: indicator-valued drifts move paths in
# whole multiples of dt, so a half-integer kick can never be cancelled back
# to an exact re-merge
DEFAULT_VARIANTS = ("euler", "euler-midpoint-drift", "picard:8", "restart-perturbed:1.5")
DEFAULT_LEVELS = (16, 32, 64, 128, 256, 512, 1024)
DEFAULT_WIDTHS = (2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7, 2.0**-8)

_ALIGN_TOL = 1e-9
_FLOW_EXPONENT = 0.8


@dataclass(frozen=True)
class CandidateSolution:
    """One numerical solution on a dyadic grid under one noise path."""

    scheme: str
    dt: float
    times: np.ndarray
    values: np.ndarray
    noise: NoiseSpec
    x0: float
    w_sup: float

    @property
    def max_abs(self) -> float:
        return float(np.abs(self.values).max())

    def truncation_margin(self) -> float:
        """|x0| + sup|W| + horizon * sup|b| for a unit-bounded drift."""
        return abs(self.x0) + self.w_sup + self.noise.horizon


def _parse_variant(name: str) -> tuple[str, float | int | None]:
    head, _, arg = name.partition(":")
    if head == "euler":
        return "euler", None
    if head == "euler-midpoint-drift":
        return "midpoint", None
    if head == "picard":
        k = int(arg) if arg else 8
        if k < 0:
            raise ValueError("picard iteration count must be non-negative")
        return "picard", k
    if head == "restart-perturbed":
        return "perturbed", float(arg) if arg else 1.0
    raise ValueError(f"unknown candidate variant {name!r}")


def _evolve_family(
    spec: Drift, noise: NoiseSpec, x0: float, dt: float, variant: str
) -> tuple[np.ndarray, np.ndarray]:
    """(values, w_sup) for every path of the family, one variant."""
    kind, param = _parse_variant(variant)
    per = _steps_per_increment(dt, noise)
    count = round(noise.horizon / dt)
    if abs(count * dt - noise.horizon) > _ALIGN_TOL:
        raise GridAlignmentError("dt must divide the horizon")
    nodes = node_block(noise.level, 1, noise.horizon, noise.seed, noise.trials())[:, :, 0]
    w = nodes[:, ::per]
    t_nodes = np.arange(count + 1) * dt
    w_sup = np.abs(w).max(axis=1)

    if kind == "picard":
        y = x0 + w
        for _ in range(param):
            contrib = spec.value(t_nodes[None, :-1], y[:, :-1]) * dt
            y = x0 + w + np.concatenate(
                [np.zeros((w.shape[0], 1)), np.cumsum(contrib, axis=1)], axis=1
            )
        return y, w_sup

    inc = np.diff(w, axis=1)
    out = np.empty_like(w)
    state = np.full(w.shape[0], float(x0))
    out[:, 0] = state
    for i in range(count):
        t = t_nodes[i]
        if kind == "midpoint":
            pred = state + 0.5 * (spec.value(t, state) * dt + inc[:, i])
            state = state + spec.value(t + 0.5 * dt, pred) * dt + inc[:, i]
        else:
            state = state + spec.value(t, state) * dt + inc[:, i]
        if kind == "perturbed" and i == 0:
            state = state + param * dt
        out[:, i + 1] = state
    return out, w_sup


def candidate_family(
    spec: Drift, noise: NoiseSpec, x0: float = 0.0, dt: float = 2.0**-10, variant: str = "euler"
) -> list[CandidateSolution]:
    """One CandidateSolution per path of the family, evolved in one pass."""
    values, w_sup = _evolve_family(spec, noise, x0, dt, variant)
    times = np.arange(values.shape[1]) * dt
    return [
        CandidateSolution(
            scheme=variant,
            dt=dt,
            times=times,
            values=values[n],
            noise=noise.single(n),
            x0=x0,
            w_sup=float(w_sup[n]),
        )
        for n in range(noise.n_noise)
    ]


def make_candidates(
    spec: Drift,
    noise: NoiseSpec,
    x0: float = 0.0,
    dt: float = 2.0**-10,
    variants: Sequence[str] = DEFAULT_VARIANTS,
) -> list[CandidateSolution]:
    """All requested scheme variants of the solution under one noise path."""
    if noise.n_noise != 1:
        raise ValueError("one candidate set per path; use candidate_family for families")
    return [candidate_family(spec, noise, x0, dt, variant)[0] for variant in variants]


def pairwise_gaps(candidates: Sequence[CandidateSolution]) -> dict[tuple[str, str], float]:
    """Max-over-time gap for every unordered pair of candidates."""
    if len(candidates) < 2:
        raise ValueError("need at least two candidates to compare")
    first = candidates[0]
    for cand in candidates[1:]:
        if cand.noise != first.noise or cand.dt != first.dt or cand.x0 != first.x0:
            raise ValueError("candidates must share noise, step, and start")
    out: dict[tuple[str, str], float] = {}
    for i, a in enumerate(candidates):
        for b in candidates[i + 1 :]:
            out[(a.scheme, b.scheme)] = float(np.abs(a.values - b.values).max())
    return out


def strong_convergence_envelope(dt: float, c: float = 1.0) -> float:
    """c * sqrt(dt) * log(1/dt), the half-order rate with a log factor."""
    if not 0.0 < dt < 1.0:
        raise ValueError("dt must lie in (0, 1)")
    return c * math.sqrt(dt) * math.log(1.0 / dt)


def telescoped_decay_exponents() -> tuple[Fraction, Fraction]:
    """Exact exponent bookkeeping for the telescoped endpoint bound.

    Each of the M spans contributes a gap of order M^(-4/3), damped
    through the solution map's 4/5-modulus; the sum of M such terms
    carries the exponent 1 - (4/3)*(4/5) = -1/15.
    """
    per_span = Fraction(4, 3) * Fraction(4, 5)
    return per_span, 1 - per_span


# --- certificate engine -----------------------------------------------------


def _row_interp(x_grid: np.ndarray, rows: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """rows[i] interpolated at queries[i]; clamps at the hull edges."""
    n = x_grid.size
    qc = np.clip(queries, x_grid[0], x_grid[-1])
    idx = np.clip(np.searchsorted(x_grid, qc) - 1, 0, n - 2)
    width = x_grid[idx + 1] - x_grid[idx]
    frac = (qc - x_grid[idx]) / width
    r = np.arange(rows.shape[0])
    return rows[r, idx] * (1.0 - frac) + rows[r, idx + 1] * frac


def _span_maps(
    spec: Drift,
    starts: np.ndarray,
    increments: np.ndarray,
    dt_flow: float,
    transform: ZvonkinTransform | None,
    scheme: str,
    t0: np.ndarray | None = None,
) -> np.ndarray:
    """Span images of per-span start points, all spans stepped together.

    starts is either (n_span, k) or (k,); a 1-D start vector is shared by
    every span (the start-grid case).  Spans tile the window back to back
    unless t0 supplies explicit per-span start times.
    """
    n_span, span_steps = increments.shape
    if t0 is None:
        offsets = np.arange(n_span) * (span_steps * dt_flow)
    else:
        offsets = np.asarray(t0, dtype=float)
    if starts.ndim == 1:
        state = np.tile(starts, (n_span, 1))
    else:
        state = starts.astype(float, copy=True)
    if scheme == "direct":
        for j in range(span_steps):
            t = offsets + j * dt_flow
            state = state + spec.value(t[:, None], state) * dt_flow + increments[:, j, None]
        return state
    state = transform.psi_rows(offsets, state)
    for j in range(span_steps):
        t = offsets + j * dt_flow
        b_t, sigma_t = transform.fields_at_rows(t, state)
        state = state + b_t * dt_flow + sigma_t * increments[:, j, None]
    return transform.psi_inverse_rows(offsets + span_steps * dt_flow, state)


def _level_audit(
    spec: Drift,
    candidate: CandidateSolution,
    level: int,
    x_grid: np.ndarray,
    increments: np.ndarray,
    dt_flow: float,
    r: float,
    transform: ZvonkinTransform | None,
    scheme: str,
) -> tuple[float, float, float, float, np.ndarray]:
    """(step_sup, endpoint_bound, terminal_gap, holder_const, f) at one level."""
    total_steps = increments.size
    span_steps = total_steps // level
    inc = increments.reshape(level, span_steps)
    span_vals = _span_maps(spec, x_grid, inc, dt_flow, transform, scheme)

    stride = round(r / (level * candidate.dt))
    y_nodes = candidate.values[np.arange(level + 1) * stride]
    if y_nodes.min() < x_grid[0] or y_nodes.max() > x_grid[-1]:
        raise HullError("candidate left the start-grid hull")

    # defects ride exact span runs from the candidate's own nodes; the
    # start-grid images above serve only the modulus constant and the
    # suffix composition
    mapped = _span_maps(spec, y_nodes[:-1, None], inc, dt_flow, transform, scheme)[:, 0]
    defects = np.abs(y_nodes[1:] - mapped)

    suffix = np.empty((level + 1, x_grid.size))
    suffix[level] = x_grid
    for i in range(level - 1, -1, -1):
        suffix[i] = np.interp(span_vals[i], x_grid, suffix[i + 1])

    push = _row_interp(x_grid, suffix, y_nodes)
    f = push[0] - push
    ratios = np.abs(np.diff(suffix, axis=1)) / np.diff(x_grid) ** _FLOW_EXPONENT
    c_holder = float(ratios.max())

    return (
        float(np.abs(np.diff(f)).max()),
        c_holder * float(np.sum(defects**_FLOW_EXPONENT)),
        float(abs(f[-1])),
        c_holder,
        f,
    )


@dataclass(frozen=True)
class UniquenessCertificate:
    """Per-level telescoped endpoint bounds and their fitted decay."""

    r: float
    levels: tuple[int, ...]
    step_sups: np.ndarray
    endpoint_abs: np.ndarray
    terminal_gaps: np.ndarray
    holder_consts: np.ndarray
    f_origin: np.ndarray
    decay_slope: float | None
    scheme: str
    candidate_scheme: str
    drift_name: str


def _certificate_frame(
    candidate: CandidateSolution,
    r: float,
    levels: Sequence[int],
    oracle_refine: int,
    transform: ZvonkinTransform | None,
    scheme: str | None,
) -> tuple[float, np.ndarray, str]:
    """Validated (dt_flow, flow increments over [0, r], scheme)."""
    if candidate.noise.n_noise != 1:
        raise ValueError("certificates audit one path at a time")
    if oracle_refine < 1:
        raise ValueError("oracle_refine must be a positive integer")
    lv = list(levels)
    if not lv or any(m <= 0 for m in lv) or any(b <= a for a, b in zip(lv, lv[1:])):
        raise ValueError("levels must be positive and strictly increasing")
    if not 0.0 < r <= candidate.noise.horizon + _ALIGN_TOL:
        raise WindowError("endpoint must lie inside the horizon")
    if abs(round(r / candidate.dt) * candidate.dt - r) > _ALIGN_TOL:
        raise GridAlignmentError("endpoint must land on the candidate grid")

    if scheme is None:
        scheme = "transformed" if transform is not None else "direct"
    if scheme not in ("direct", "transformed"):
        raise ValueError(f"unknown oracle scheme {scheme!r}")
    if scheme == "transformed" and transform is None:
        raise ValueError("transformed oracle needs a transform")

    dt_flow = candidate.dt / oracle_refine
    per = _steps_per_increment(dt_flow, candidate.noise)
    total_steps = round(r / dt_flow)
    for m in lv:
        if total_steps % m != 0:
            raise GridAlignmentError("every level must divide the oracle step count")
        if round(r / (m * candidate.dt)) < 1:
            raise GridAlignmentError("candidate grid is coarser than the finest level")

    noise = candidate.noise
    nodes = node_block(noise.level, 1, noise.horizon, noise.seed, noise.trials())[0, :, 0]
    increments = np.diff(nodes[::per])[:total_steps]
    return dt_flow, increments, scheme


def certificate(
    spec: Drift,
    candidate: CandidateSolution,
    r: float = 1.0,
    levels: Sequence[int] = DEFAULT_LEVELS,
    x_grid: np.ndarray | None = None,
    oracle_refine: int = 4,
    transform: ZvonkinTransform | None = None,
    scheme: str | None = None,
) -> UniquenessCertificate:
    """Audit one candidate against span maps at every dyadic level.

    endpoint_abs[k] is the telescoped bound holder_const * sum(defect^(4/5))
    certifying |candidate(r) - map-from-x0(r)| at level levels[k]; it decays
    for a genuine solution while the raw terminal gap stays level-flat.
    decay_slope is the fitted decay rate of that bound (positive = decaying),
    or None when some level is exactly zero.
    """
    dt_flow, increments, scheme = _certificate_frame(
        candidate, r, levels, oracle_refine, transform, scheme
    )
    if x_grid is None:
        window = candidate.values[: round(r / candidate.dt) + 1]
        radius = max(2.0, float(np.ceil(np.abs(window).max() + 3.0)))
        x_grid = np.linspace(-radius, radius, 257)
    else:
        x_grid = np.asarray(x_grid, dtype=float)

    rows = [
        _level_audit(spec, candidate, m, x_grid, increments, dt_flow, r, transform, scheme)
        for m in levels
    ]
    step_sups = np.array([row[0] for row in rows])
    endpoint_abs = np.array([row[1] for row in rows])
    terminal = np.array([row[2] for row in rows])
    consts = np.array([row[3] for row in rows])
    origin = np.array([row[4][0] for row in rows])

    slope: float | None = None
    if np.all(endpoint_abs > 0.0):
        coef = np.polyfit(np.log(np.asarray(levels, dtype=float)), np.log(endpoint_abs), 1)
        slope = float(-coef[0])
    return UniquenessCertificate(
        r=r,
        levels=tuple(int(m) for m in levels),
        step_sups=step_sups,
        endpoint_abs=endpoint_abs,
        terminal_gaps=terminal,
        holder_consts=consts,
        f_origin=origin,
        decay_slope=slope,
        scheme=scheme,
        candidate_scheme=candidate.scheme,
        drift_name=spec.name,
    )


@dataclass(frozen=True)
class HolderCertificate:
    """Feasible smoothing exponents plus the fitted gap-curve modulus."""

    condition: ConditionReport
    alpha: float
    delta: float
    target_exponent: float
    modulus_exponent: float
    modulus_stderr: float
    separations: np.ndarray
    moduli: np.ndarray
    f_origin: float

    def interval(self, width: float = 2.0) -> tuple[float, float]:
        return (
            self.modulus_exponent - width * self.modulus_stderr,
            self.modulus_exponent + width * self.modulus_stderr,
        )


def _window_leg(
    spec: Drift, y0: float, t0: float, dt_leg: float, inc: np.ndarray, kind: str, param: float
) -> float:
    """Endpoint of one candidate-scheme run over a window, scalar state."""
    count = inc.size
    times = t0 + np.arange(count + 1) * dt_leg
    if kind == "picard":
        w = np.concatenate([[0.0], np.cumsum(inc)])
        y = y0 + w
        for _ in range(int(param)):
            contrib = spec.value(times[:-1], y[:-1]) * dt_leg
            y = y0 + w + np.concatenate([[0.0], np.cumsum(contrib)])
        return float(y[-1])
    state = float(y0)
    for i in range(count):
        t = times[i]
        if kind == "midpoint":
            pred = state + 0.5 * (float(spec.value(t, state)) * dt_leg + inc[i])
            state = state + float(spec.value(t + 0.5 * dt_leg, pred)) * dt_leg + inc[i]
        else:
            state = state + float(spec.value(t, state)) * dt_leg + inc[i]
    return state


def _matched_defects(
    spec: Drift,
    candidate: CandidateSolution,
    r: float,
    octaves: int,
    oracle_refine: int,
    transform: ZvonkinTransform | None,
    scheme: str,
) -> np.ndarray:
    """Window defects with every window resolved by the same step count.

    Window k covers [r - r/2^k, r].  The candidate's own stepper rides it
    with as many steps as the candidate spends on the full window, the
    oracle at oracle_refine times finer; both legs restart from the
    candidate's value at the window start and share refined noise nodes,
    so the defect tracks the window's continuum modulus instead of a
    fixed-grid floor.
    """
    kind, param = _parse_variant(candidate.scheme)
    if kind == "perturbed":
        raise ValueError("perturbed variants re-kick on restart; audit a solution scheme")
    noise = candidate.noise
    s_count = round(r / candidate.dt)
    if s_count < 1 or abs(s_count * candidate.dt - r) > _ALIGN_TOL:
        raise GridAlignmentError("r must sit on the candidate grid")
    if s_count % 2 ** (octaves - 1) != 0:
        raise GridAlignmentError("candidate grid is coarser than the finest window")
    if oracle_refine & (oracle_refine - 1):
        raise ValueError("oracle_refine must be a power of two for matched windows")
    dt_min = (r / 2 ** (octaves - 1)) / (s_count * oracle_refine)
    level = round(math.log2(noise.horizon / dt_min))
    if abs(noise.horizon / 2**level - dt_min) > _ALIGN_TOL * dt_min:
        raise GridAlignmentError("window steps must land on dyadic noise nodes")
    nodes = node_block(level, 1, noise.horizon, noise.seed, noise.trials())[0, :, 0]
    n_fine = round(r / dt_min)
    out = np.empty(octaves)
    for k in range(octaves):
        step_b = 2 ** (octaves - 1 - k)
        step_a = step_b * oracle_refine
        i0 = n_fine - n_fine // 2**k
        u = r - r / 2**k
        y0 = float(candidate.values[s_count - s_count // 2**k])
        inc_a = np.diff(nodes[i0 : n_fine + 1 : step_a])
        inc_b = np.diff(nodes[i0 : n_fine + 1 : step_b])
        dt_a = (r / 2**k) / s_count
        leg_a = _window_leg(spec, y0, u, dt_a, inc_a, kind, param)
        leg_b = _span_maps(
            spec,
            np.array([[y0]]),
            inc_b[None, :],
            dt_a / oracle_refine,
            transform,
            scheme,
            t0=np.array([u]),
        )[0, 0]
        out[k] = abs(leg_a - float(leg_b))
    return out


def holder_certificate(
    spec: Drift,
    candidates: CandidateSolution | Sequence[CandidateSolution],
    r: float = 1.0,
    oracle_refine: int = 4,
    transform: ZvonkinTransform | None = None,
    scheme: str | None = None,
    octaves: int = 6,
) -> HolderCertificate:
    """Certificate for drifts carrying an envelope-exponent gate.

    Picks delta = min(0.2, (E - 1) / 2) for the gate value E and the
    matching modulus order alpha = (1 + delta) / E.  The fitted curve is
    the matched-window defect: for each octave separation tau, rerun the
    candidate's scheme and a refined oracle over [r - tau, r] from the
    candidate's value there, every window resolved by the same step
    count, and record the endpoint disagreement, taking the median across
    candidates when several (fresh noises) are supplied.  A fitted
    exponent at or above one (superlinear vanishing with separation) is
    consistent with the defect curve being identically zero.
    """
    if isinstance(candidates, CandidateSolution):
        candidates = [candidates]
    if not candidates:
        raise ValueError("at least one candidate is required")
    lead = candidates[0]
    cond = check_uniqueness_conditions(spec, horizon=lead.noise.horizon)
    if not cond.satisfied:
        raise CertificateInapplicableError(
            f"envelope gate fails: exponent value {cond.exponent_value:.4g}, "
            f"ordering_ok={cond.ordering_ok}"
        )
    delta = min(0.2, (cond.exponent_value - 1.0) / 2.0)
    alpha = (1.0 + delta) / cond.exponent_value

    if octaves < 3:
        raise ValueError("octaves must be at least 3 to fit a modulus slope")
    if not 0.0 < r <= lead.noise.horizon:
        raise WindowError("r must lie inside the candidate's horizon")
    if scheme is None:
        scheme = "transformed" if transform is not None else "direct"
    if scheme not in ("direct", "transformed"):
        raise ValueError(f"unknown oracle scheme: {scheme!r}")
    if scheme == "transformed" and transform is None:
        raise ValueError("transformed oracle needs a transform")
    curves = np.stack(
        [
            _matched_defects(spec, c, r, octaves, oracle_refine, transform, scheme)
            for c in candidates
        ]
    )
    seps_arr = r / 2.0 ** np.arange(octaves)
    mods_arr = np.median(curves, axis=0)
    if np.any(mods_arr == 0.0):
        raise DegeneratePairError(
            "matched-window defects vanish exactly; the oracle reproduces the candidate"
        )

    lx = np.log(seps_arr)
    ly = np.log(mods_arr)
    coef, res = np.polyfit(lx, ly, 1, full=True)[:2]
    dof = lx.size - 2
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    stderr = math.sqrt(float(res[0]) / dof / sxx) if dof > 0 and res.size else 0.0
    return HolderCertificate(
        condition=cond,
        alpha=alpha,
        delta=delta,
        target_exponent=1.0 + delta,
        modulus_exponent=float(coef[0]),
        modulus_stderr=stderr,
        separations=seps_arr,
        moduli=mods_arr,
        f_origin=0.0,
    )


# --- shifted-integral continuity --------------------------------------------


@dataclass(frozen=True)
class MollifiedDrift(Drift):
    """Base drift averaged in x against a compact bump of given width."""

    base: Drift = None  # type: ignore[assignment]
    width: float = 0.0
    offsets: np.ndarray = None  # type: ignore[assignment]
    weights: np.ndarray = None  # type: ignore[assignment]

    def value(self, t, x):
        x = np.asarray(x, dtype=float)
        out = self.weights[0] * self.base.value(t, x - self.offsets[0])
        for u, wgt in zip(self.offsets[1:], self.weights[1:]):
            out = out + wgt * self.base.value(t, x - u)
        return out


def mollified_drift(base: Drift, width: float, points: int = 17) -> MollifiedDrift:
    """Discrete mollification in x; weights sum to one exactly.

    Smoothing acts on the space variable only: shifted-integral gaps move
    the path in x, so spatial continuity is what the audit exercises.
    """
    if width <= 0.0:
        raise ValueError("mollification width must be positive")
    centers = -1.0 + (np.arange(points) + 0.5) * (2.0 / points)
    weights = np.exp(-1.0 / (1.0 - centers**2))
    weights /= weights.sum()
    reach = None if base.support_radius is None else base.support_radius + width
    return MollifiedDrift(
        name=f"{base.name}|smoothed={width:g}",
        dim=base.dim,
        bound=base.bound,
        support_radius=reach,
        base=base,
        width=width,
        offsets=width * centers,
        weights=weights,
    )


def _default_bump(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    safe = np.where(inside, t, 0.5)
    return np.where(inside, np.exp(1.0 - 1.0 / (4.0 * safe * (1.0 - safe))), 0.0)


@dataclass(frozen=True)
class ContinuityReport:
    """Shifted-integral gaps as the shift perturbation vanishes."""

    scales: tuple[float, ...]
    widths: tuple[float, ...]
    scale_gaps: np.ndarray
    scale_gap_maxima: np.ndarray
    width_gaps: np.ndarray
    moll_defects: np.ndarray
    exceed_fractions: np.ndarray
    level: int
    trials: int


def drift_integral_continuity(
    spec: Drift,
    h_limit: Callable[[np.ndarray], np.ndarray] | float | None,
    scales: Sequence[float],
    seed: int,
    trials: int = 128,
    level: int = 11,
    widths: Sequence[float] = DEFAULT_WIDTHS,
    horizon: float = 1.0,
    bump: Callable[[np.ndarray], np.ndarray] | None = None,
) -> ContinuityReport:
    """Gap of int b(s, W_s + h) ds between perturbed and limit shifts.

    For each scale the shift is h_limit plus scale * bump. Rows are
    reported for the raw drift and for each smoothed stand-in; the
    smoothing defect and the fraction of paths whose raw-vs-smoothed
    gap difference beats the 4 * sqrt(width) envelope complete the
    report (that fraction should be zero when smoothing is faithful).
    """
    sc = [float(s) for s in scales]
    if not sc or any(s < 0.0 for s in sc) or any(b >= a for a, b in zip(sc, sc[1:])):
        raise ValueError("scales must be non-negative and strictly decreasing")
    bump_fn = bump if bump is not None else _default_bump
    if callable(h_limit):
        base_fn = h_limit
    else:
        base_val = 0.0 if h_limit is None else float(h_limit)
        base_fn = lambda tt: np.full_like(np.asarray(tt, dtype=float), base_val)

    def perturbed(scale: float) -> Callable[[np.ndarray], np.ndarray]:
        return lambda tt: base_fn(tt) + scale * bump_fn(tt)

    window = TimeWindow(0.0, horizon)
    trial_ids = np.arange(trials)
    gaps_raw = np.stack(
        [
            batch_shifted_difference(
                spec, level, seed, trial_ids, perturbed(s), base_fn, window, horizon
            )
            for s in sc
        ]
    )

    mols = [mollified_drift(spec, w) for w in widths]
    gaps_mol = np.stack(
        [
            np.stack(
                [
                    batch_shifted_difference(
                        mol, level, seed, trial_ids, perturbed(s), base_fn, window, horizon
                    )
                    for s in sc
                ]
            )
            for mol in mols
        ]
    )

    grid = DyadicGrid(level, horizon)
    block = node_block(level, 1, horizon, seed, trial_ids)[:, :, 0]
    cells = 2**level
    base_ints = _shifted_integral_from_nodes(spec, block, grid, 0, cells, base_fn)
    defects = np.stack(
        [
            np.abs(_shifted_integral_from_nodes(mol, block, grid, 0, cells, base_fn) - base_ints)
            for mol in mols
        ]
    )

    envelopes = 4.0 * np.sqrt(np.asarray(widths, dtype=float))
    excess = gaps_raw[-1][None, :] - gaps_mol[:, -1, :]
    exceed = (excess > envelopes[:, None]).mean(axis=1)

    return ContinuityReport(
        scales=tuple(sc),
        widths=tuple(float(w) for w in widths),
        scale_gaps=np.median(gaps_raw, axis=1),
        scale_gap_maxima=gaps_raw.max(axis=1),
        width_gaps=np.median(gaps_mol, axis=2),
        moll_defects=np.median(defects, axis=1),
        exceed_fractions=exceed,
        level=level,
        trials=trials,
    )
