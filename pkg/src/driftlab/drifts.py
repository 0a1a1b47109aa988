"""Catalog of drift fields b(t, x) grouped by regularity class.

Every drift is coordinatewise: in dimension d the same scalar profile is
applied to each component of x. Values are plain numpy broadcasting maps,
cheap enough to evaluate on (trials x cells) blocks inside the Monte Carlo
kernels. The catalog is intentionally small and frozen: experiments cite
drifts by identifier strings such as "checkerboard:cell=0.1".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import MissingMetadataError, UnsupportedFamilyError

__all__ = [
    "Drift",
    "SmoothDrift",
    "HoelderDrift",
    "BorelDrift",
    "TruncatedDrift",
    "SumDrift",
    "ConstantProfile",
    "ClippedPowerProfile",
    "ConditionReport",
    "spatial_derivative",
    "conjugate_exponent",
    "exponent_check",
    "check_uniqueness_conditions",
    "parse_drift",
    "smooth_suite",
    "borel_suite",
    "bounded_catalog",
]

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class Drift:
    """Base type: a bounded measurable field with a declared sup bound."""

    name: str
    dim: int = 1
    bound: float = 1.0
    support_radius: float | None = None

    def value(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def family(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class SmoothDrift(Drift):
    """Closed-form b and db/dx, both numpy-broadcasting callables."""

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray] = None  # type: ignore[assignment]
    dfn: Callable[[np.ndarray, np.ndarray], np.ndarray] = None  # type: ignore[assignment]

    def value(self, t, x):
        return self.fn(np.asarray(t, dtype=float), np.asarray(x, dtype=float))

    def derivative(self, t, x):
        return self.dfn(np.asarray(t, dtype=float), np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ConstantProfile:
    level: float

    def __call__(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.level)

    def lq_norm(self, q: float, horizon: float = 1.0) -> float:
        if math.isinf(q):
            return self.level
        return self.level * horizon ** (1.0 / q)

    @property
    def sup(self) -> float:
        return self.level


@dataclass(frozen=True)
class ClippedPowerProfile:
    """min(cap, coef * t^-exponent): singular at 0 but in L^q for q*exponent < 1."""

    cap: float
    coef: float
    exponent: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            raw = np.where(t > 0.0, self.coef * t ** (-self.exponent), np.inf)
        return np.minimum(self.cap, raw)

    def lq_norm(self, q: float, horizon: float = 1.0) -> float:
        if math.isinf(q):
            return self.sup
        t_star = min((self.coef / self.cap) ** (1.0 / self.exponent), horizon)
        total = self.cap**q * t_star
        if t_star < horizon:
            a = q * self.exponent
            if a >= 1.0:
                return math.inf
            total += self.coef**q * (horizon ** (1.0 - a) - t_star ** (1.0 - a)) / (1.0 - a)
        return total ** (1.0 / q)

    @property
    def sup(self) -> float:
        return self.cap


@dataclass(frozen=True)
class HoelderDrift(Drift):
    """b(t, x) = m2(t) * |sin x|^beta.

    The shape |sin|^beta has Hoelder seminorm at most 1 for beta in (0, 1],
    so m2 is an exact Hoelder envelope; m1 = m2 dominates |b| since the
    shape is bounded by one.
    """

    beta: float = 0.75
    q1: float = 6.0
    q2: float = 6.0
    m1: ConstantProfile | ClippedPowerProfile = field(default_factory=lambda: ConstantProfile(1.0))
    m2: ConstantProfile | ClippedPowerProfile = field(default_factory=lambda: ConstantProfile(1.0))

    def value(self, t, x):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        return self.m2(t) * np.abs(np.sin(x)) ** self.beta


@dataclass(frozen=True)
class BorelDrift(Drift):
    """Merely measurable fixtures; `kind` selects the construction."""

    kind: str = "checkerboard"
    cell: float = 0.1
    depth: int = 8
    salt: int = 13
    _endpoints: np.ndarray | None = field(default=None, repr=False, compare=False)

    def value(self, t, x):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        if self.kind == "checkerboard":
            parity = (np.floor(x / self.cell) + np.floor(t / self.cell)) % 2.0
            return np.broadcast_to(1.0 - 2.0 * parity, np.broadcast_shapes(t.shape, x.shape)).copy()
        if self.kind == "oscillatory":
            safe = np.where(x == 0.0, 1.0, x)
            out = np.sign(np.sin(1.0 / safe))
            out = np.where(x == 0.0, 0.0, out)
            return np.broadcast_to(out, np.broadcast_shapes(t.shape, x.shape)).copy()
        if self.kind == "fatcantor":
            frac = x - np.floor(x)
            idx = np.searchsorted(self._endpoints, frac, side="right")
            out = (idx % 2 == 1).astype(float)
            return np.broadcast_to(out, np.broadcast_shapes(t.shape, x.shape)).copy()
        if self.kind == "frozen":
            # wrapping uint64 mix; overflow is the point
            with np.errstate(over="ignore"):
                ix = np.floor(x / self.cell).astype(np.int64).astype(np.uint64)
                it = np.floor(t / self.cell).astype(np.int64).astype(np.uint64)
                z = ix * np.uint64(0x9E3779B97F4A7C15) ^ it * np.uint64(0xC2B2AE3D27D4EB4F)
                z = z ^ np.uint64((self.salt * 0xD6E8FEB86659FD93) & 0xFFFFFFFFFFFFFFFF)
                z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
                z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
                z ^= z >> np.uint64(31)
            return np.where((z >> np.uint64(63)).astype(bool), 1.0, -1.0)
        raise UnsupportedFamilyError(f"unknown measurable kind {self.kind!r}")


def _svc_endpoints(depth: int) -> np.ndarray:
    """Sorted endpoints of the depth-n fat Cantor (positive measure) set."""
    intervals = [(0.0, 1.0)]
    for k in range(1, depth + 1):
        half_gap = 0.5 * 4.0**-k
        nxt = []
        for a, b in intervals:
            mid = 0.5 * (a + b)
            nxt.append((a, mid - half_gap))
            nxt.append((mid + half_gap, b))
        intervals = nxt
    return np.asarray(intervals, dtype=float).ravel()


@dataclass(frozen=True)
class TruncatedDrift(Drift):
    inner: Drift = None  # type: ignore[assignment]

    def value(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) < self.support_radius, self.inner.value(t, x), 0.0)


@dataclass(frozen=True)
class SumDrift(Drift):
    parts: tuple[Drift, ...] = ()

    def value(self, t, x):
        total = self.parts[0].value(t, x)
        for p in self.parts[1:]:
            total = total + p.value(t, x)
        return total

    def derivative(self, t, x):
        try:
            total = self.parts[0].derivative(t, x)  # type: ignore[attr-defined]
            for p in self.parts[1:]:
                total = total + p.derivative(t, x)  # type: ignore[attr-defined]
        except AttributeError as exc:
            raise UnsupportedFamilyError("sum has a non-smooth part") from exc
        return total


def spatial_derivative(spec: Drift, t, x):
    """db/dx for smooth fields; other families have none."""
    if not hasattr(spec, "derivative"):
        raise UnsupportedFamilyError(f"{spec.family} has no spatial derivative")
    return spec.derivative(t, x)


def conjugate_exponent(q: float) -> float:
    if math.isinf(q):
        return 1.0
    if q <= 1.0:
        raise ValueError("integrability exponent must exceed 1")
    return q / (q - 1.0)


@dataclass(frozen=True)
class ConditionReport:
    beta: float
    q1: float
    q2: float
    p1: float
    p2: float
    exponent_value: float
    ordering_ok: bool
    exponent_ok: bool
    bound_finite: bool
    envelope_present: bool

    @property
    def satisfied(self) -> bool:
        return self.ordering_ok and self.exponent_ok and self.bound_finite and self.envelope_present


def exponent_check(beta: float, q1: float, q2: float) -> tuple[float, bool, bool]:
    """(beta/p1 + 1/p2, ordering q1 >= q2 > 2, exponent value > 1)."""
    p1 = conjugate_exponent(q1)
    p2 = conjugate_exponent(q2)
    value = beta / p1 + 1.0 / p2
    ordering = q1 >= q2 > 2.0 and beta > 0.0
    return value, ordering, value > 1.0


def check_uniqueness_conditions(spec: Drift, horizon: float = 1.0) -> ConditionReport:
    """Verify the integrability/regularity gate for pathwise uniqueness."""
    if not isinstance(spec, HoelderDrift):
        raise MissingMetadataError(f"{spec.family} carries no envelope metadata")
    value, ordering, exp_ok = exponent_check(spec.beta, spec.q1, spec.q2)
    return ConditionReport(
        beta=spec.beta,
        q1=spec.q1,
        q2=spec.q2,
        p1=conjugate_exponent(spec.q1),
        p2=conjugate_exponent(spec.q2),
        exponent_value=value,
        ordering_ok=ordering,
        exponent_ok=exp_ok,
        bound_finite=math.isfinite(spec.m1.lq_norm(spec.q1, horizon)),
        envelope_present=math.isfinite(spec.m2.lq_norm(spec.q2, horizon)),
    )


# --- fixtures -------------------------------------------------------------


def zero_drift(dim: int = 1) -> SmoothDrift:
    return SmoothDrift(
        name="zero", dim=dim, bound=0.0,
        fn=lambda t, x: np.zeros(np.broadcast_shapes(t.shape, x.shape)),
        dfn=lambda t, x: np.zeros(np.broadcast_shapes(t.shape, x.shape)),
    )


def constant_drift(level: float = 0.5, dim: int = 1) -> SmoothDrift:
    return SmoothDrift(
        name=f"const:level={level}", dim=dim, bound=abs(level),
        fn=lambda t, x: np.full(np.broadcast_shapes(t.shape, x.shape), float(level)),
        dfn=lambda t, x: np.zeros(np.broadcast_shapes(t.shape, x.shape)),
    )


def linear_drift(dim: int = 1) -> SmoothDrift:
    """b(t, x) = x: unbounded, used only for exact-value oracles."""
    return SmoothDrift(
        name="linear", dim=dim, bound=math.inf,
        fn=lambda t, x: (x + np.zeros(np.broadcast_shapes(t.shape, x.shape))),
        dfn=lambda t, x: np.ones(np.broadcast_shapes(t.shape, x.shape)),
    )


def sine_drift(dim: int = 1) -> SmoothDrift:
    return SmoothDrift(
        name="sine", dim=dim, bound=1.0,
        fn=lambda t, x: np.sin(x) + 0.0 * t,
        dfn=lambda t, x: np.cos(x) + 0.0 * t,
    )


def cosine_drift(dim: int = 1) -> SmoothDrift:
    return SmoothDrift(
        name="cosine", dim=dim, bound=1.0,
        fn=lambda t, x: np.cos(x) + 0.0 * t,
        dfn=lambda t, x: -np.sin(x) + 0.0 * t,
    )


def tanh_drift(dim: int = 1) -> SmoothDrift:
    return SmoothDrift(
        name="tanh", dim=dim, bound=1.0,
        fn=lambda t, x: np.tanh(x) + 0.0 * t,
        dfn=lambda t, x: 1.0 / np.cosh(x) ** 2 + 0.0 * t,
    )


def bump_drift(dim: int = 1) -> SmoothDrift:
    return SmoothDrift(
        name="bump", dim=dim, bound=1.0,
        fn=lambda t, x: np.exp(-0.5 * x**2) + 0.0 * t,
        dfn=lambda t, x: -x * np.exp(-0.5 * x**2) + 0.0 * t,
    )


def wave_drift(dim: int = 1) -> SmoothDrift:
    two_pi = 2.0 * math.pi
    return SmoothDrift(
        name="wave", dim=dim, bound=1.0,
        fn=lambda t, x: np.sin(x) * np.cos(two_pi * t),
        dfn=lambda t, x: np.cos(x) * np.cos(two_pi * t),
    )


def checkerboard_drift(cell: float = 0.1, dim: int = 1) -> BorelDrift:
    return BorelDrift(name=f"checkerboard:cell={cell}", dim=dim, bound=1.0, kind="checkerboard", cell=cell)


def oscillatory_drift(dim: int = 1) -> BorelDrift:
    return BorelDrift(name="oscillatory", dim=dim, bound=1.0, kind="oscillatory")


def fatcantor_drift(depth: int = 8, dim: int = 1) -> BorelDrift:
    return BorelDrift(
        name=f"fatcantor:depth={depth}", dim=dim, bound=1.0, kind="fatcantor", depth=depth,
        _endpoints=_svc_endpoints(depth),
    )


def frozen_drift(cell: float = 0.1, salt: int = 13, dim: int = 1) -> BorelDrift:
    return BorelDrift(
        name=f"frozen:cell={cell},salt={salt}", dim=dim, bound=1.0, kind="frozen", cell=cell, salt=salt
    )


def holder_drift(
    beta: float = 0.75,
    q1: float = 6.0,
    q2: float = 6.0,
    cap: float = 1.0,
    coef: float = 0.7,
    exponent: float = 0.125,
    dim: int = 1,
) -> HoelderDrift:
    profile = ClippedPowerProfile(cap=cap, coef=coef, exponent=exponent)
    return HoelderDrift(
        name=f"holder:beta={beta},q1={q1},q2={q2}", dim=dim, bound=profile.sup,
        beta=beta, q1=q1, q2=q2, m1=profile, m2=profile,
    )


def truncated_drift(inner: Drift | None = None, radius: float = 3.0) -> TruncatedDrift:
    inner = inner if inner is not None else sine_drift()
    return TruncatedDrift(
        name=f"trunc({inner.name}):radius={radius}", dim=inner.dim, bound=inner.bound,
        support_radius=radius, inner=inner,
    )


def sum_drift(*parts: Drift) -> SumDrift:
    bound = sum(p.bound for p in parts)
    return SumDrift(
        name="+".join(p.name for p in parts), dim=parts[0].dim, bound=bound, parts=tuple(parts)
    )


def smooth_suite(dim: int = 1) -> list[SmoothDrift]:
    return [sine_drift(dim), cosine_drift(dim), tanh_drift(dim), bump_drift(dim), wave_drift(dim)]


def borel_suite(dim: int = 1) -> list[BorelDrift]:
    return [checkerboard_drift(dim=dim), oscillatory_drift(dim), fatcantor_drift(dim=dim), frozen_drift(dim=dim)]


def bounded_catalog(dim: int = 1) -> list[Drift]:
    """Every catalog fixture with sup bound at most 1."""
    return [
        zero_drift(dim),
        constant_drift(0.5, dim),
        *smooth_suite(dim),
        *borel_suite(dim),
        holder_drift(dim=dim),
        truncated_drift(sine_drift(dim)),
    ]


_FACTORIES: dict[str, Callable[..., Drift]] = {
    "zero": zero_drift,
    "const": constant_drift,
    "linear": linear_drift,
    "sine": sine_drift,
    "cosine": cosine_drift,
    "tanh": tanh_drift,
    "bump": bump_drift,
    "wave": wave_drift,
    "checkerboard": checkerboard_drift,
    "oscillatory": oscillatory_drift,
    "fatcantor": fatcantor_drift,
    "frozen": frozen_drift,
    "holder": holder_drift,
    "trunc-sine": lambda **kw: truncated_drift(sine_drift(), **kw),
}


def parse_drift(text: str) -> Drift:
    """Build a catalog drift from 'name' or 'name:key=value,key=value'."""
    name, _, args = text.partition(":")
    factory = _FACTORIES.get(name)
    if factory is None:
        raise UnsupportedFamilyError(f"unknown drift {name!r}; known: {sorted(_FACTORIES)}")
    kwargs = {}
    if args:
        for pair in args.split(","):
            key, _, raw = pair.partition("=")
            if not raw:
                raise UnsupportedFamilyError(f"malformed drift argument {pair!r}")
            key = key.strip()
            try:
                value: float | int = int(raw)
            except ValueError:
                value = float(raw)
            kwargs[key] = value
    return factory(**kwargs)


def catalog_names() -> Sequence[str]:
    return sorted(_FACTORIES)
