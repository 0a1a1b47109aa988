"""Acceptance gate: one test per shipped guarantee, one verdict line each.

Run as `pytest tests/test_acceptance.py -v -s`. Every test prints
`ACCEPTANCE <n> <slug>: PASS` after its assertions, so the console log
carries one line per criterion. Scales and tolerances are pinned; the
full file is CPU-heavy (the tail criterion alone draws two million
level-12 paths) and takes on the order of fifteen minutes on one core.
"""

from __future__ import annotations

import csv
import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from driftlab import drifts
from driftlab._rng import derive_key
from driftlab.cli import main as cli_main
from driftlab.drifts import exponent_check
from driftlab.flow import (
    NoiseSpec,
    composition_refinement,
    coupled_transform_gap,
    dyadic_times,
    flow_tables,
    holder_fit,
    two_point_slope,
)
from driftlab.functionals import TimeWindow, covariation_decomposition
from driftlab.lipnets import EpsNet, chain_experiment, chain_sweep, covering_gap, enumerate_elements
from driftlab.mc import (
    TrialPlan,
    derivative_kernel,
    exp_moment_report,
    fit_concentration,
    run_trials,
    shifted_difference_kernel,
    tail_curve,
)
from driftlab.paths import sample_path
from driftlab.uniqueness import (
    DEFAULT_LEVELS,
    candidate_family,
    certificate,
    holder_certificate,
    make_candidates,
    pairwise_gaps,
    strong_convergence_envelope,
    telescoped_decay_exponents,
)
from driftlab.zvonkin import PdeGrid, constant_drift_closed_form, default_grid, find_lambda, solve_resolvent

SEED = 20260821
FIXTURES = Path(__file__).parent / "fixtures"


def verdict(number: int, slug: str) -> None:
    print(f"\nACCEPTANCE {number:2d} {slug}: PASS")


def test_criterion_01_covariation_two_routes_agree():
    for spec in drifts.smooth_suite():
        medians = {}
        for level in (12, 16):
            gaps, residuals = [], []
            for trial in range(200):
                rep = covariation_decomposition(spec, sample_path(level, 1, 1.0, SEED, trial))
                gaps.append(abs(rep.partition_sum - rep.derivative_integral))
                residuals.append(abs(rep.residual))
            medians[level] = float(np.median(residuals))
            if level == 16:
                assert np.mean(np.asarray(gaps) <= 0.02) >= 0.95, spec.name
                assert np.mean(np.asarray(residuals) <= 0.05) >= 0.95, spec.name
        assert medians[16] < medians[12], spec.name
    verdict(1, "covariation-consistency")


def test_criterion_02_exponential_moment_bounded_and_frozen():
    with open(FIXTURES / "exp_moment_reference.json") as handle:
        reference = json.load(handle)
    smooth = [s for s in drifts.bounded_catalog() if hasattr(s, "derivative")]
    assert sorted(reference) == sorted(s.name for s in smooth)
    for spec in smooth:
        ref = reference[spec.name]
        plan = TrialPlan(ref["trials"], ref["seed"], ref["level"])
        kernel = derivative_kernel(spec, ref["level"], ref["seed"])
        rep = exp_moment_report(run_trials(plan, kernel), ref["alpha"], plan.base_seed)
        assert math.isfinite(rep.mean), spec.name
        assert 0.9 <= rep.trimmed_mean / rep.mean <= 1.0, spec.name
        assert abs(rep.mean - ref["mean"]) <= max(3.0 * ref["boot_se"], 1e-12), spec.name
    verdict(2, "exp-moment-boundedness")


def test_criterion_03_sub_gaussian_tails_at_scale():
    window = TimeWindow(0.0, 1.0)
    shift = 0.25
    lambdas = tuple(0.25 * k for k in range(1, 9))
    for name in ("checkerboard", "oscillatory"):
        spec = drifts.parse_drift(name)
        plan = TrialPlan(10**6, SEED, 12)
        kernel = shifted_difference_kernel(spec, 12, SEED, shift, None, window)
        curve = tail_curve(plan, kernel, math.sqrt(window.length) * shift, lambdas)
        fit = fit_concentration(curve)
        assert fit.r_squared >= 0.95, name
        assert fit.alpha_hat > 0.0, name

    # normalizer-scaling invariant: for b(t, x) = x the shifted difference is
    # deterministic, so doubling the shift and the normalizer together leaves
    # every exceedance count unchanged
    linear = drifts.parse_drift("linear")
    short = TimeWindow(0.0, 1.0)
    probe_lambdas = [0.5, 0.9, 1.1, 2.0]
    counts = []
    for scale in (1.0, 2.0):
        kernel = shifted_difference_kernel(linear, 10, SEED, 0.3 * scale, None, short)
        curve = tail_curve(TrialPlan(64, SEED, 10), kernel, 0.3 * scale, probe_lambdas)
        counts.append(curve.counts)
    assert np.array_equal(counts[0], counts[1])
    verdict(3, "sub-gaussian-tails")


def _random_lipschitz(rng: np.random.Generator, bound: float, length: float):
    cells = 64
    t = np.linspace(0.0, length, cells + 1)
    vals = np.empty(cells + 1)
    vals[0] = rng.uniform(-bound, bound)
    steps = rng.uniform(-1.0, 1.0, cells) * (length / cells)
    for j in range(cells):
        vals[j + 1] = min(max(vals[j] + steps[j], -bound), bound)
    return lambda s: np.interp(np.asarray(s, dtype=float), t, vals)


def test_criterion_04_entropy_bound_and_covering():
    cases = []
    for eps in (1.0, 0.5, 0.25, 0.2):
        for bound in (0.5, 1.0, 2.0):
            for length in (0.5, 1.0):
                if eps > 2 * bound:
                    continue
                net = EpsNet(eps, bound, length)
                if net.cardinality <= 60_000:
                    cases.append(net)
    cases = cases[:20]
    assert len(cases) == 20

    rng = np.random.Generator(np.random.Philox(key=derive_key(SEED, "net-probe")))
    for net in cases:
        assert sum(1 for _ in enumerate_elements(net)) == net.cardinality
        start_states = 2 * math.ceil(2 * net.bound / net.epsilon) + 1
        entropy_bound = math.log(start_states) + math.log(3.0) * (len(net.knots) - 1)
        assert net.log_cardinality <= entropy_bound + 1e-12
        assert abs(net.log_cardinality - entropy_bound) <= 1e-9
        gaps = [
            covering_gap(net, _random_lipschitz(rng, net.bound, net.length))
            for _ in range(1000)
        ]
        assert max(gaps) <= net.epsilon
    verdict(4, "entropy-bound")


def test_criterion_05_chaining_modulus_slope():
    lengths = [2.0**-k for k in range(3, 8)]
    slopes = []
    for spec in drifts.borel_suite():
        sweep = chain_sweep(
            spec, lengths, 1.0, 1.0, SEED, elements_per_scale=150, max_pairs=10**4, n_noise=20
        )
        slopes.append(sweep.modulus_slope)
    assert float(np.median(slopes)) >= 4.0 / 3.0 - 0.15
    const = chain_experiment(
        drifts.constant_drift(0.5), 0.125, 1.0, 1.0, SEED,
        elements_per_scale=60, max_pairs=2000, n_noise=8,
    )
    assert const.failure_freq == 0.0
    verdict(5, "chaining-modulus")


def test_criterion_06_zvonkin_transform():
    for spec in drifts.bounded_catalog():
        transform = find_lambda(spec, default_grid(spec, 512, 1024), target=0.5)
        assert transform.grad_sup <= 0.5, spec.name

    grid = PdeGrid(radius=12.0, nx=512, nt=1024)
    solved = solve_resolvent(drifts.constant_drift(0.8), 1.0, grid)
    exact = constant_drift_closed_form(0.8, 1.0, grid.times)
    assert np.max(np.abs(solved.U - exact[:, None])) < 1e-6

    for name in ("sine", "tanh"):
        spec = drifts.parse_drift(name)
        sols = {
            f: solve_resolvent(spec, 4.0, PdeGrid(radius=12.0, nx=128 * f, nt=256 * f))
            for f in (1, 2, 4)
        }
        e1 = np.max(np.abs(sols[1].U - sols[2].U[::2, ::2]))
        e2 = np.max(np.abs(sols[2].U - sols[4].U[::2, ::2]))
        assert 3.0 <= e1 / e2 <= 5.0, name

    sine = drifts.parse_drift("sine")
    transform = find_lambda(sine, default_grid(sine, 512, 1024), target=0.5)
    noise = NoiseSpec(SEED, 12, 32)
    starts = np.linspace(-1.0, 1.0, 17)
    coarse = coupled_transform_gap(sine, transform, noise, starts, 2.0**-8)
    fine = coupled_transform_gap(sine, transform, noise, starts, 2.0**-10)
    assert 2.0 * 0.7 <= coarse / fine <= 2.0 * 1.3
    verdict(6, "zvonkin-transform")


def test_criterion_07_flow_regularity():
    noise = NoiseSpec(SEED, 12, 20)
    grids = dict(
        s_grid=dyadic_times(3), t_grid=dyadic_times(4),
        x_grid=np.linspace(-2.0, 2.0, 33), dt=2.0**-12,
    )
    zero_fit = holder_fit(flow_tables(drifts.zero_drift(), noise, **grids), n_radius=1.5)
    assert abs(zero_fit.alpha_hat - 1.0) <= 1e-12
    assert abs(zero_fit.c_hat - 1.0) <= 1e-12

    for spec in drifts.smooth_suite():
        fit = holder_fit(flow_tables(spec, noise, **grids), n_radius=1.5)
        assert fit.alpha_hat >= 0.95, spec.name

    borel_alphas = [
        holder_fit(flow_tables(spec, noise, **grids), n_radius=1.5).alpha_hat
        for spec in drifts.borel_suite()
    ]
    assert float(np.median(borel_alphas)) >= 0.8

    points = composition_refinement(
        drifts.sine_drift(), NoiseSpec(SEED, 10, 6), dt=2.0**-6, steps=2
    )
    assert points[0].dt == 4 * points[1].dt
    assert points[0].residual / points[1].residual >= 1.5

    osc = drifts.parse_drift("oscillatory")
    transform = find_lambda(osc, default_grid(osc, 512, 1024), target=0.5)
    for a in (2.0, 4.0):
        fit = two_point_slope(transform, NoiseSpec(SEED, 11, 48), a, dt=2.0**-8)
        lo, hi = fit.interval()
        assert lo <= a and hi >= a - 1.0, a
    verdict(7, "flow-regularity")


def test_criterion_08_uniqueness_certificate():
    # a flow-own solution leaves no defect: the telescoped endpoint bound is
    # exactly zero at every level once the oracle rides the candidate's grid
    checker = drifts.checkerboard_drift()
    own = candidate_family(checker, NoiseSpec(SEED, 10, 1), 0.0, 2.0**-10, "euler")[0]
    own_cert = certificate(checker, own, oracle_refine=1)
    assert np.all(own_cert.endpoint_abs <= 1e-9)
    assert np.all(own_cert.endpoint_abs == 0.0)

    growth, telescoped = telescoped_decay_exponents()
    assert growth == Fraction(16, 15) and telescoped == Fraction(-1, 15)
    for m in (2.0, 8.0, 1024.0):
        lhs = m * (m ** (-4.0 / 3.0)) ** (4.0 / 5.0)
        assert lhs == pytest.approx(m ** (-1.0 / 15.0), rel=1e-12)

    floor = 1.0 / 15.0 - 0.05
    for spec in drifts.borel_suite():
        family = candidate_family(
            spec, NoiseSpec(SEED, 10, 20), 0.0, 2.0**-10, "restart-perturbed:1.5"
        )
        slopes = [
            certificate(spec, cand, levels=DEFAULT_LEVELS, oracle_refine=1).decay_slope
            for cand in family
        ]
        assert all(s is not None for s in slopes), spec.name
        assert float(np.median(slopes)) >= floor, spec.name

    for spec in drifts.smooth_suite():
        cands = make_candidates(spec, NoiseSpec(SEED, 14, 1), 0.0, 2.0**-14)
        worst = max(pairwise_gaps(cands).values())
        assert worst <= strong_convergence_envelope(2.0**-14), spec.name
    verdict(8, "uniqueness-certificate")


def test_criterion_09_holder_modulus_certificate():
    value, ordering, ok = exponent_check(1.0, math.inf, math.inf)
    assert value == 2.0 and ordering and ok
    value, ordering, ok = exponent_check(0.2, 4.0, 2.5)
    assert value == pytest.approx(0.75) and not ok

    spec = drifts.holder_drift()
    cands = candidate_family(spec, NoiseSpec(SEED, 8, 16), 0.0, 2.0**-8, "euler")
    rep = holder_certificate(spec, cands, oracle_refine=4, octaves=6)
    assert rep.modulus_exponent >= 1.0
    assert rep.interval()[0] >= 1.0
    verdict(9, "holder-modulus")


CLI_CASES = {
    "exp-moment": ["--drift", "sine", "--trials", "100", "--level", "8"],
    "tail-fit": ["--drift", "checkerboard", "--trials", "3000", "--level", "9"],
    "covariation": ["--drift", "sine", "--trials", "6", "--level", "8"],
    "zvonkin": ["--drift", "sine", "--nx", "64", "--nt", "128"],
    "flow-holder": ["--drift", "sine", "--noises", "3", "--level", "9",
                    "--dt", "0.0078125", "--points", "17"],
    "net-count": ["--probes", "10"],
    "chain": ["--l", "0.0625", "--N", "1", "--trials", "150", "--noises", "3",
              "--elements", "20"],
    "occupation": ["--trials", "16", "--level", "8"],
    "uniqueness": ["--level", "10"],
    "continuity": ["--trials", "8", "--level", "8", "--scales", "0.08,0.04"],
}


def test_criterion_10_manifest_determinism(tmp_path):
    for name, extra in CLI_CASES.items():
        first = tmp_path / name
        assert cli_main([name, *extra, "--no-figures", "--out", str(first)]) == 0, name
        with open(first / "manifest.json") as handle:
            argv = json.load(handle)["argv"]
        second = tmp_path / f"{name}-replay"
        argv[argv.index("--out") + 1] = str(second)
        assert cli_main(argv) == 0, name
        assert (first / "results.csv").read_bytes() == (second / "results.csv").read_bytes(), name
        with open(first / "results.csv", newline="") as handle:
            header = next(csv.reader(handle))
        assert {"seed", "trial_lo", "trial_hi", "level"} <= set(header), name
    verdict(10, "manifest-determinism")
