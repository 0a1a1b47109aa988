import numpy as np
import pytest

from driftlab import drifts
from driftlab.errors import ExtrapolationError, LambdaSearchError, PdeSolverError
from driftlab.zvonkin import (
    PdeGrid,
    cell_averaged_drift,
    constant_drift_closed_form,
    default_grid,
    find_lambda,
    solve_resolvent,
)


def test_constant_drift_matches_closed_form():
    spec = drifts.parse_drift("const:level=0.8")
    grid = PdeGrid(radius=12.0, nx=512, nt=1024)
    tr = solve_resolvent(spec, 1.0, grid)
    exact = constant_drift_closed_form(0.8, 1.0, grid.times)
    assert np.max(np.abs(tr.U - exact[:, None])) < 1e-6
    assert tr.grad_sup < 1e-10


def test_zero_drift_is_identity():
    spec = drifts.parse_drift("zero")
    grid = PdeGrid(radius=6.0, nx=64, nt=64)
    tr = solve_resolvent(spec, 1.0, grid)
    assert np.all(tr.U == 0.0)
    x = np.linspace(-5.0, 5.0, 11)
    assert np.array_equal(tr.psi(0.3, x), x)
    assert np.max(np.abs(tr.psi_inverse(0.3, x) - x)) < 1e-10


def test_gradient_shrinks_with_lambda():
    spec = drifts.parse_drift("sine")
    grid = PdeGrid(radius=12.0, nx=128, nt=256)
    b_values = cell_averaged_drift(spec, grid)
    grads = [
        solve_resolvent(spec, lam, grid, b_values).grad_sup for lam in (1.0, 4.0, 16.0, 64.0)
    ]
    assert all(a > b for a, b in zip(grads, grads[1:]))
    assert grads[-1] < 0.05


def test_self_convergence_is_second_order():
    for name in ("sine", "tanh"):
        spec = drifts.parse_drift(name)
        sols = {}
        for f in (1, 2, 4):
            grid = PdeGrid(radius=12.0, nx=128 * f, nt=256 * f)
            sols[f] = solve_resolvent(spec, 4.0, grid)
        e1 = np.max(np.abs(sols[1].U - sols[2].U[::2, ::2]))
        e2 = np.max(np.abs(sols[2].U - sols[4].U[::2, ::2]))
        assert 3.0 < e1 / e2 < 5.0


def test_find_lambda_meets_gradient_target():
    spec = drifts.parse_drift("oscillatory")
    grid = PdeGrid(radius=12.0, nx=256, nt=512)
    tr = find_lambda(spec, grid, target=0.5)
    assert tr.grad_sup <= 0.5
    assert tr.lam > 1.0


def test_find_lambda_gives_up_at_cap():
    spec = drifts.parse_drift("sine")
    grid = PdeGrid(radius=8.0, nx=64, nt=64)
    with pytest.raises(LambdaSearchError):
        find_lambda(spec, grid, target=1e-12)


def test_psi_inverse_roundtrip():
    spec = drifts.parse_drift("sine")
    grid = PdeGrid(radius=12.0, nx=256, nt=256)
    tr = solve_resolvent(spec, 2.0, grid)
    x = np.linspace(-10.0, 10.0, 41)
    for t in (0.0, 0.37, 0.5, 0.99):
        y = tr.psi(t, x)
        assert np.all(np.diff(y) > 0)
        back = tr.psi_inverse(t, y)
        assert np.max(np.abs(back - x)) < 1e-9


def test_psi_inverse_strictness():
    spec = drifts.parse_drift("sine")
    grid = PdeGrid(radius=6.0, nx=64, nt=64)
    tr = solve_resolvent(spec, 2.0, grid)
    outside = np.array([100.0])
    with pytest.raises(ExtrapolationError):
        tr.psi_inverse(0.5, outside)
    clipped = tr.psi_inverse(0.5, outside, strict=False)
    assert abs(clipped[0] - 6.0) < 1e-9


def test_transformed_coefficients_stay_in_range():
    spec = drifts.parse_drift("oscillatory")
    grid = default_grid(spec, nx=256, nt=512)
    tr = find_lambda(spec, grid, target=0.5)
    y = np.linspace(-8.0, 8.0, 101)
    for t in (0.0, 0.5, 1.0):
        sig = tr.sigma_tilde(t, y)
        assert np.all(sig >= 0.5 - 1e-9)
        assert np.all(sig <= 1.5 + 1e-9)
        assert np.max(np.abs(tr.b_tilde(t, y))) <= tr.lam * tr.sup + 1e-12


def test_cell_averaging_is_tight_for_smooth_drifts():
    grid = PdeGrid(radius=4.0, nx=128, nt=8)
    sine = drifts.parse_drift("sine")
    avg = cell_averaged_drift(sine, grid)
    point = sine.value(0.0, grid.x)
    assert np.max(np.abs(avg[0] - point)) < 1e-3
    const = drifts.parse_drift("const:level=0.4")
    assert np.all(cell_averaged_drift(const, grid) == 0.4)


def test_solver_validation():
    spec = drifts.parse_drift("sine")
    grid = PdeGrid(radius=4.0, nx=32, nt=16)
    with pytest.raises(ValueError):
        solve_resolvent(spec, 0.0, grid)
    with pytest.raises(PdeSolverError):
        solve_resolvent(spec, 1.0, grid, b_values=np.zeros((3, 3)))
    with pytest.raises(ValueError):
        PdeGrid(radius=0.0, nx=32, nt=16)
    with pytest.raises(ValueError):
        PdeGrid(radius=4.0, nx=4, nt=16)


def test_default_grid_padding():
    global_spec = drifts.parse_drift("sine")
    assert default_grid(global_spec).radius == 12.0
    local = drifts.parse_drift("trunc-sine:radius=2.0")
    assert default_grid(local).radius == 6.0
