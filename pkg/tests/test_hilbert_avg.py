import numpy as np
import pytest

from dyadweights.dyadic import DyadicGrid, GridError, haar_decompose, haar_reconstruct
from dyadweights.hilbert_avg import (
    _shift_batch,
    hilbert_exact,
    hilbert_kernel_matrix,
    mc_average,
    sample_grid,
    sample_parameters,
    shift_on_grid,
    standard_grid,
    trace_csv,
    weighted_grid_shift_norm,
    weighted_hilbert_scan,
)
from dyadweights.operators import dyadic_shift, shift_weighted_norm
from dyadweights.weights import generate

MESH = DyadicGrid(9, (-4.0, 4.0))
X = MESH.midpoints


def ind(a, b, x=X):
    return ((x >= a) & (x < b)).astype(float)


def test_analytic_log_formula_outside_support():
    f = 2.0 * ind(0.0, 0.5) - 3.0 * ind(0.5, 1.0)
    pts = np.array([-3.7, -1.0, -0.01, 1.01, 2.5, 3.9])
    expect = (2.0 * (np.log(np.abs(pts)) - np.log(np.abs(pts - 0.5)))
              - 3.0 * (np.log(np.abs(pts - 0.5)) - np.log(np.abs(pts - 1.0))))
    np.testing.assert_allclose(hilbert_exact(f, MESH, pts)[:, 0], expect, atol=1e-10, rtol=0)


def test_matches_fine_quadrature():
    f = ind(0.0, 0.25) - ind(0.25, 0.5)
    x0 = 2.0
    t = np.linspace(0.0, 0.5, 400_001)
    vals = np.where(t < 0.25, 1.0, -1.0) / (x0 - t)
    quad = np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(t))
    assert hilbert_exact(f, MESH, [x0])[0, 0] == pytest.approx(quad, abs=1e-6)


def test_antisymmetric_under_reflection():
    rng = np.random.default_rng(0)
    f = rng.standard_normal(MESH.num_cells)
    Hf = hilbert_exact(f, MESH)[:, 0]
    Hr = hilbert_exact(f[::-1], MESH)[:, 0]
    np.testing.assert_allclose(Hr, -Hf[::-1], atol=1e-10)


def test_linearity():
    rng = np.random.default_rng(1)
    f, g = rng.standard_normal((2, MESH.num_cells))
    lhs = hilbert_exact(2.5 * f - g, MESH)
    rhs = 2.5 * hilbert_exact(f, MESH) - hilbert_exact(g, MESH)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * np.max(np.abs(rhs)))


def test_kernel_matrix_agrees_with_jump_form():
    f = np.random.default_rng(3).standard_normal(MESH.num_cells)
    np.testing.assert_allclose(hilbert_kernel_matrix(MESH) @ f, hilbert_exact(f, MESH)[:, 0], atol=1e-9)
    with pytest.raises(GridError):
        hilbert_exact(ind(0.0, 1.0), MESH, [1.0])


def test_zero_at_midpoint_of_symmetric_cell():
    mesh = DyadicGrid(0, (0.0, 1.0))
    assert hilbert_exact([1.0], mesh)[0, 0] == 0.0


def test_standard_grid_reproduces_dyadic_shift():
    mesh = DyadicGrid(6, (0.0, 1.0))
    f = np.random.default_rng(2).standard_normal((64, 2))
    ref = haar_reconstruct(dyadic_shift(haar_decompose(f, mesh)))
    out = shift_on_grid(standard_grid((0.0, 1.0), (0, 6)), f, mesh)
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_single_forced_sample_equals_standard_shift():
    mesh = DyadicGrid(6, (0.0, 1.0))
    f = ind(0.0, 0.25, mesh.midpoints) - ind(0.25, 0.5, mesh.midpoints)
    avg, _ = mc_average(f, 1, 0, (0.0, 1.0), (0, 6), force_standard=True)
    ref = haar_reconstruct(dyadic_shift(haar_decompose(f, mesh)))
    np.testing.assert_array_equal(avg, shift_on_grid(standard_grid((0.0, 1.0), (0, 6)), f, mesh))
    np.testing.assert_allclose(avg, ref, atol=1e-12)


def test_batched_path_matches_per_grid_path():
    f = np.column_stack([ind(0.0, 0.5) - ind(0.5, 1.0), ind(0.25, 0.75)])
    params = [sample_parameters(3, i) for i in range(40)]
    rs = np.array([p[0] for p in params])
    betas = np.array([p[1] for p in params])
    batch = _shift_batch(rs, betas, (-6, 6), f, MESH)
    single = sum(shift_on_grid(sample_grid(3, i), f, MESH) for i in range(40))
    np.testing.assert_allclose(batch, single, atol=1e-12)


def test_sampled_dilations_in_range_and_seeded():
    rs = [sample_parameters(5, i)[0] for i in range(200)]
    assert min(rs) >= 1.0 and max(rs) < 2.0
    assert sample_parameters(5, 7)[0] == sample_parameters(5, 7)[0]


def test_average_is_proportional_to_hilbert():
    f = ind(0.5, 1.0) - ind(0.0, 0.5)
    _, rep = mc_average(f, 2000, 0, checkpoints=[500, 1000])
    assert rep.c > 0 and rep.residual < 0.1
    rows = trace_csv(rep).splitlines()
    assert rows[0] == "sample_count,fitted_c,residual" and len(rows) == 3


def test_scaling_covariance_exact():
    f = ind(0.0, 0.25) - ind(0.25, 0.5)
    _, a = mc_average(f, 300, 1)
    _, b = mc_average(2 * f, 300, 1)
    assert b.c == pytest.approx(a.c, rel=1e-12)


def test_translation_covariance():
    f = ind(0.5, 1.0) - ind(0.0, 0.5)
    g = ind(1.0, 1.5) - ind(0.5, 1.0)
    _, a = mc_average(f, 20000, 0)
    _, b = mc_average(g, 20000, 0)
    # exact only in expectation; the Monte Carlo noise floor is near 1e-3
    assert b.c == pytest.approx(a.c, rel=5e-3)


def test_mc_average_errors():
    with pytest.raises(ValueError):
        mc_average(ind(0, 1), 0, 0)


def test_weighted_scan_identity_and_consistency():
    W = generate("constant", D=5, window=(-4.0, 4.0))
    tests = [ind(0.0, 0.5, W.grid.midpoints) - ind(0.5, 1.0, W.grid.midpoints)]
    out = weighted_hilbert_scan(W, W, tests, num_grids=3)
    unweighted = np.linalg.norm(hilbert_exact(tests[0], W.grid)) / np.linalg.norm(tests[0])
    assert out["hilbert_ratios"][0] == pytest.approx(unweighted, rel=1e-12)
    U = generate("scalar_power", {"alpha": 0.4}, D=5, window=(0.0, 1.0))
    V = generate("scalar_power", {"alpha": 0.2}, D=5, window=(0.0, 1.0))
    grid = standard_grid((0.0, 1.0), (0, 5))
    assert weighted_grid_shift_norm(grid, U, V) == pytest.approx(shift_weighted_norm(U, V), rel=1e-9)
