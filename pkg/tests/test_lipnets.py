import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftlab import drifts
from driftlab.errors import GridAlignmentError, NetTooLargeError
from driftlab.lipnets import (
    ChainReport,
    EpsNet,
    batch_knot_values,
    chain_experiment,
    chain_schedule,
    chain_sweep,
    covering_gap,
    enumerate_elements,
    evaluate_members,
    knot_values,
    project,
    sample_elements,
)

SEED = 20260821


def test_cardinality_matches_enumeration():
    for eps, bound, length in ((0.5, 1.0, 1.0), (0.25, 0.5, 0.6), (1.0, 2.0, 2.5)):
        net = EpsNet(epsilon=eps, bound=bound, length=length)
        assert net.cardinality == sum(1 for _ in enumerate_elements(net))


def test_cardinality_closed_form_sweep():
    # u = bound/eps and v = length/eps integral: start grid has 4u + 1 points
    cases = [(u, v) for u in (1, 2, 3, 5) for v in (1, 2, 3, 4, 8)]
    assert len(cases) == 20
    for u, v in cases:
        for eps in (0.125, 0.3):
            net = EpsNet(epsilon=eps, bound=u * eps, length=v * eps)
            expected = (4 * u + 1) * 3**v
            assert net.cardinality == expected
            assert abs(net.log_cardinality - math.log(expected)) < 1e-9
            assert net.count_bound_log() >= net.log_cardinality - 1e-12


def test_cardinality_scales_with_dimension():
    net1 = EpsNet(epsilon=0.5, bound=1.0, length=1.0, dim=1)
    net3 = EpsNet(epsilon=0.5, bound=1.0, length=1.0, dim=3)
    assert net3.cardinality == net1.cardinality**3
    assert abs(net3.log_cardinality - 3 * net1.log_cardinality) < 1e-12


def test_count_bound_needs_unit_ratio():
    net = EpsNet(epsilon=0.5, bound=0.3, length=1.0)
    with pytest.raises(ValueError):
        net.count_bound_log()


def test_members_are_lipschitz_and_bounded():
    # non-integral length/eps leaves a short final cell; steps scale with it
    net = EpsNet(epsilon=0.3, bound=1.0, length=1.0)
    cells = np.diff(net.knots)
    assert cells[-1] < net.epsilon
    for element in sample_elements(net, 60, SEED):
        vals = knot_values(net, element)
        assert np.all(np.abs(vals) <= net.bound + 1e-15)
        assert np.all(np.abs(np.diff(vals)) <= cells + 1e-15)


def test_batch_knot_values_matches_loop():
    net = EpsNet(epsilon=0.2, bound=1.0, length=1.0)
    elements = sample_elements(net, 25, SEED)
    batch = batch_knot_values(net, elements)
    for row, element in enumerate(elements):
        assert np.array_equal(batch[row], knot_values(net, element))


def test_evaluate_members_interpolates_knots():
    net = EpsNet(epsilon=0.3, bound=1.0, length=1.0)
    elements = sample_elements(net, 10, SEED)
    values = batch_knot_values(net, elements)
    at_knots = evaluate_members(net, values, net.knots)
    assert np.allclose(at_knots, values, atol=1e-12)
    mid = evaluate_members(net, values, np.array([0.15]))
    assert np.allclose(mid[:, 0], 0.5 * (values[:, 0] + values[:, 1]))


def test_projection_recovers_members_exactly():
    net = EpsNet(epsilon=0.25, bound=1.0, length=1.0)
    for element in sample_elements(net, 40, SEED, tag="roundtrip"):
        vals = knot_values(net, element)
        member = lambda t, v=vals: evaluate_members(net, v[None, :], np.atleast_1d(t))[0]
        projected = project(net, member)
        assert np.array_equal(knot_values(net, projected), vals)


def test_projection_tie_breaks_toward_smaller_code():
    net = EpsNet(epsilon=0.5, bound=1.0, length=1.0)
    element = project(net, lambda t: np.where(np.atleast_1d(t) > 0.25, 0.25, 0.0))
    # from 0, codes 0 and +1 are equidistant from 0.25; the smaller wins
    assert net.start_grid[element.start_index] == 0.0
    assert element.codes[0] == 0


def test_projection_covers_lipschitz_targets():
    rng = np.random.default_rng(5)
    for eps in (0.5, 0.125):
        net = EpsNet(epsilon=eps, bound=1.0, length=1.0)
        for _ in range(30):
            a = rng.uniform(0.2, 1.0)
            w = rng.uniform(0.1, 1.0) / a
            ph = rng.uniform(0.0, 2 * math.pi)
            target = lambda t, a=a, w=w, ph=ph: a * np.sin(w * np.atleast_1d(t) + ph)
            assert covering_gap(net, target) <= eps
        sawtooth = lambda t: np.abs((np.atleast_1d(t) % (eps / 2)) - eps / 4) - eps / 8
        assert covering_gap(net, sawtooth) <= eps


def test_enumeration_cap():
    net = EpsNet(epsilon=0.01, bound=1.0, length=1.0)
    with pytest.raises(NetTooLargeError):
        list(enumerate_elements(net, cap=10**6))


def test_sample_elements_seeded_and_distinct():
    net = EpsNet(epsilon=0.1, bound=1.0, length=1.0)
    a = sample_elements(net, 50, SEED)
    b = sample_elements(net, 50, SEED)
    assert a == b
    assert len({(e.start_index, e.codes) for e in a}) == 50
    tiny = EpsNet(epsilon=0.5, bound=0.5, length=0.5)
    assert len(sample_elements(tiny, 10**6, SEED)) == tiny.cardinality


def test_schedule_identity():
    for l in (0.25, 0.125, 0.3):
        sched = chain_schedule(l, alpha=1.2, gamma=2.0)
        assert sched.mu == math.sqrt(3.0 / 1.2)
        for k in range(sched.n_scales):
            lhs = math.sqrt(l) * sched.epsilons[k] * sched.lambdas[k]
            rhs = sched.budget(k)
            assert abs(lhs - rhs) <= 1e-12 * abs(rhs)
        assert np.all(np.diff(sched.epsilons) < 0)
        assert np.all(np.diff(sched.lambdas) > 0)
        assert sched.epsilons[-1] >= 1e-8
        assert sched.n_scales <= 41


def test_schedule_budgets_sum_geometrically():
    sched = chain_schedule(0.25, alpha=1.0, gamma=1.0)
    budgets = [sched.budget(k) for k in range(sched.n_scales)]
    total = sum(budgets)
    # ratio l^(1/12) < 1 so the tail is controlled by the first term
    assert total <= budgets[0] / (1.0 - 0.25 ** (1.0 / 12.0)) + 1e-12


def test_schedule_validation():
    with pytest.raises(ValueError):
        chain_schedule(0.6, 1.0, 1.0)
    with pytest.raises(ValueError):
        chain_schedule(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        chain_schedule(0.25, -1.0, 1.0)
    assert chain_schedule(0.25, 1.0, 1.0).theta == 5.0
    assert chain_schedule(0.25, 1.0, 1.0, refinements=2).theta == 7.0


def test_chain_constant_drift_never_fails():
    report = chain_experiment(
        drifts.parse_drift("const:level=0.7"), 2**-5, 1.0, 1.0, SEED,
        elements_per_scale=40, max_pairs=1500, n_noise=4,
    )
    assert sum(s.n_failures for s in report.scales) == 0
    assert report.failure_freq == 0.0
    assert report.modulus == 0.0


def test_chain_experiment_reports():
    report = chain_experiment(
        drifts.parse_drift("checkerboard:cell=1.0"), 2**-5, 1.0, 1.0, SEED,
        elements_per_scale=40, max_pairs=1500, n_noise=4,
    )
    assert isinstance(report, ChainReport)
    assert report.zeta_hat is None
    assert len(report.scales) >= 2
    assert report.modulus > 0.0
    for scale in report.scales:
        assert report.window_length / scale.epsilon <= 512
        assert scale.n_events == scale.n_pairs * 4
        assert 0 <= scale.n_failures <= scale.n_events


def test_chain_experiment_is_deterministic():
    kwargs = dict(elements_per_scale=30, max_pairs=800, n_noise=3)
    a = chain_experiment(drifts.parse_drift("oscillatory"), 2**-4, 1.0, 1.0, SEED, **kwargs)
    b = chain_experiment(drifts.parse_drift("oscillatory"), 2**-4, 1.0, 1.0, SEED, **kwargs)
    assert a == b


def test_chain_rejects_non_dyadic_window():
    with pytest.raises(GridAlignmentError):
        chain_experiment(drifts.parse_drift("sine"), 0.3, 1.0, 1.0, SEED)


def test_chain_sweep_slope_sanity():
    sweep = chain_sweep(
        drifts.parse_drift("checkerboard:cell=1.0"),
        [2**-4, 2**-5, 2**-6], 1.0, 1.0, SEED,
        elements_per_scale=60, max_pairs=3000, n_noise=8,
    )
    assert sweep.modulus_slope is not None
    assert 0.8 < sweep.modulus_slope < 2.5
    sine_sweep = chain_sweep(
        drifts.parse_drift("sine"), [2**-4, 2**-5], 1.0, 1.0, SEED,
        elements_per_scale=30, max_pairs=800, n_noise=3,
    )
    assert sine_sweep.zeta_hat is None


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.05, 0.5),
    st.integers(1, 6),
    st.floats(0.3, 2.0),
)
def test_member_values_stay_clipped_property(eps, ratio, length):
    net = EpsNet(epsilon=eps, bound=ratio * eps, length=length)
    element = sample_elements(net, 1, 7)[0]
    vals = knot_values(net, element)
    assert np.all(np.abs(vals) <= net.bound + 1e-12)
    dense = evaluate_members(net, vals[None, :], np.linspace(0, net.length, 64))[0]
    assert np.all(np.abs(dense) <= net.bound + 1e-12)
