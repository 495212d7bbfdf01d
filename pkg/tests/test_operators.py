import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadweights.conditions import joint_a2
from dyadweights.dyadic import DyadicGrid, DyadicInterval, HaarCoefficients, haar_matrix
from dyadweights.matops import psd_power
from dyadweights.operators import (
    BandSpec,
    BlockMultiplier,
    OperatorError,
    SignPattern,
    assemble_matrix,
    band_apply,
    band_decompose,
    band_weighted_bound,
    block_multiply,
    diagonal_product_norm,
    dplus_domination_check,
    dyadic_shift,
    factorization_bound,
    make_DW,
    make_DW_minus,
    make_DW_offset,
    make_DW_plus,
    martingale_transform,
    shift_part_one,
    shift_part_two,
    shift_weighted_norm,
    sigma_norm_scan,
    sign_patterns,
    weighted_conjugate,
)
from dyadweights.weights import generate


def _coeffs(grid, N, seed):
    rng = np.random.default_rng(seed)
    return HaarCoefficients(rng.standard_normal((grid.num_haar, N)), np.zeros(N), grid)


def _pair(N, D, seed, cond=10.0):
    U = generate("random_logbounded", {"cond_max": cond}, N=N, D=D, seed=seed)
    V = generate("random_logbounded", {"cond_max": cond}, N=N, D=D, seed=seed + 10_000)
    return U, V


def test_martingale_transform_involution_and_isometry():
    g = DyadicGrid(4)
    c = _coeffs(g, 2, 0)
    sigma = SignPattern.random(g, np.random.default_rng(1))
    t = martingale_transform(sigma, c)
    np.testing.assert_array_equal(martingale_transform(sigma, t).entries, c.entries)
    assert t.norm_squared() == pytest.approx(c.norm_squared(), rel=1e-12)


def test_sign_pattern_validation():
    with pytest.raises(OperatorError):
        SignPattern(np.array([1.0, 0.5]))


def test_transform_commutes_with_blocks():
    W = generate("random_logbounded", {"cond_max": 5}, N=2, D=3, seed=4)
    B = make_DW(W)
    c = _coeffs(W.grid, 2, 3)
    sigma = SignPattern.alternating(W.grid)
    a = block_multiply(B, martingale_transform(sigma, c)).entries
    b = martingale_transform(sigma, block_multiply(B, c)).entries
    np.testing.assert_array_equal(a, b)


def test_block_multiplier_missing_block():
    g = DyadicGrid(2)
    B = BlockMultiplier.from_mapping(g, {DyadicInterval(0, 0): np.eye(1)}, 1)
    with pytest.raises(OperatorError, match=r"level=1"):
        block_multiply(B, _coeffs(g, 1, 0))


def test_shift_on_haar_functions():
    g = DyadicGrid(4)
    for I in g.haar_intervals():
        if I.level + 1 >= g.depth:
            continue
        left, right = I.children()
        out = dyadic_shift(HaarCoefficients.unit(g, left))
        np.testing.assert_array_equal(out.entries, HaarCoefficients.unit(g, I).entries)
        out = dyadic_shift(HaarCoefficients.unit(g, right))
        np.testing.assert_array_equal(out.entries, -HaarCoefficients.unit(g, I).entries)


def test_shift_parts_and_norm():
    for depth in range(2, 7):
        g = DyadicGrid(depth)
        c = _coeffs(g, 1, depth)
        np.testing.assert_array_equal(
            dyadic_shift(c).entries, shift_part_one(c).entries + shift_part_two(c).entries)
        H = assemble_matrix(dyadic_shift, g, 1)
        assert np.linalg.svd(H, compute_uv=False)[0] == pytest.approx(np.sqrt(2), abs=1e-12)


def test_sigma_scan_identity_exhaustive():
    U = generate("constant", N=2, D=3)
    scan = sigma_norm_scan(U, U)
    assert len(scan.norms) == 2**7
    assert max(abs(v - 1) for v in scan.norms.values()) < 1e-9


def test_sigma_scan_two_value_example():
    W = generate("two_value", {"a": 1, "b": 4}, D=1)
    scan = sigma_norm_scan(W, W, with_bound=True)
    assert scan.max == pytest.approx(1.25, abs=1e-9)
    assert scan.bound[2] == pytest.approx(1.25, abs=1e-9)
    assert "sigma_id,norm" in scan.to_csv()


def test_weighted_norm_matches_dense_svd():
    U, V = _pair(2, 3, 5)
    sigma = SignPattern.random(U.grid, np.random.default_rng(0))
    M = weighted_conjugate(lambda c: martingale_transform(sigma, c), U, V).matrix()
    # independent assembly from cell matrices
    H = np.kron(haar_matrix(U.grid), np.eye(2))
    S = np.diag(np.concatenate([[1.0, 1.0], np.repeat(sigma.values, 2)]))
    S[:2, :2] = 0.0
    Uh = np.zeros((16, 16))
    Vm = np.zeros((16, 16))
    for k in range(8):
        Uh[2 * k:2 * k + 2, 2 * k:2 * k + 2] = psd_power(U.cells[k], 0.5)
        Vm[2 * k:2 * k + 2, 2 * k:2 * k + 2] = psd_power(V.cells[k], -0.5)
    ref = Uh @ H.T @ S @ H @ Vm
    np.testing.assert_allclose(M, ref, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(N=st.integers(1, 3), D=st.integers(1, 4), seed=st.integers(0, 10_000))
def test_scan_below_factorization_bound(N, D, seed):
    U, V = _pair(N, D, seed)
    scan = sigma_norm_scan(U, V, num_sigma=4, seed=seed, exhaustive=False, with_bound=True)
    assert scan.max <= scan.bound[2] + 1e-8


def test_diagonal_product_identity():
    for seed in range(10):
        U, V = _pair(2, 3, seed)
        assert diagonal_product_norm(U, V) ** 2 == pytest.approx(joint_a2(U, V).constant, rel=1e-10)
    W = generate("two_value", {"a": 1, "b": 4}, D=1)
    assert diagonal_product_norm(W, W) == pytest.approx(1.25, abs=1e-12)


def test_factorization_trivial_weights():
    U = generate("constant", N=2, D=3)
    f1, f2, p = factorization_bound(U, U)
    assert (f1, f2, p) == pytest.approx((1.0, 1.0, 1.0), abs=1e-9)


def test_sign_patterns_families():
    g = DyadicGrid(5)
    pats = sign_patterns(g, num_sigma=3, seed=1)
    assert [p.name for p in pats[:2]] == ["plus", "alternating"] and len(pats) == 5
    with pytest.raises(OperatorError):
        sign_patterns(g, exhaustive=True)


def test_band_radius_zero_is_transform():
    g = DyadicGrid(4)
    sigma = SignPattern.random(g, np.random.default_rng(2))
    spec = BandSpec.diagonal(g, sigma.values)
    c = _coeffs(g, 2, 1)
    np.testing.assert_array_equal(band_apply(spec, c).entries, martingale_transform(sigma, c).entries)


def test_band_shift_and_decomposition():
    g = DyadicGrid(5)
    spec = BandSpec.shift(g)
    c = _coeffs(g, 1, 3)
    np.testing.assert_allclose(band_apply(spec, c).entries, dyadic_shift(c).entries, atol=1e-12)
    rand = BandSpec.random(g, 2, np.random.default_rng(5))
    parts = band_decompose(rand)
    total = sum(band_apply(p, c).entries for p in parts)
    np.testing.assert_allclose(total, band_apply(rand, c).entries, atol=1e-12)
    for p in parts:
        targets = [J for (_, J) in p.phi]
        assert len(targets) == len(set(targets))


def test_band_radius_enforced():
    g = DyadicGrid(4)
    with pytest.raises(OperatorError):
        BandSpec(g, 1, {(DyadicInterval(0, 0), DyadicInterval(2, 0)): 1.0})


def test_band_bound_holds():
    U, V = _pair(1, 4, 7)
    spec = BandSpec.random(U.grid, 2, np.random.default_rng(8))
    norm, bound, _ = band_weighted_bound(spec, U, V)
    assert norm <= bound + 1e-8
    # the shift as a band agrees with the direct weighted shift
    n2, _, _ = band_weighted_bound(BandSpec.shift(U.grid), U, V)
    assert n2 == pytest.approx(shift_weighted_norm(U, V), rel=1e-9)


def test_plus_minus_blocks():
    W = generate("two_value", {"a": 1, "b": 4}, D=2)
    root = DyadicInterval(0, 0).position
    assert make_DW_plus(W).blocks[root][0, 0] == pytest.approx(1.0)
    assert make_DW_minus(W).blocks[root][0, 0] == pytest.approx(2.0)
    off = make_DW_offset(W, {DyadicInterval(0, 0): DyadicInterval(1, 1)}, radius=1)
    assert off.blocks[root][0, 0] == pytest.approx(2.0)
    with pytest.raises(OperatorError):
        make_DW_offset(W, {DyadicInterval(0, 0): DyadicInterval(2, 3)}, radius=1)


def test_domination_checks():
    U = generate("constant", N=2, D=3)
    f = np.random.default_rng(0).standard_normal((8, 2))
    lhs, rhs, ok = dplus_domination_check(U, U, f)
    assert ok and lhs == pytest.approx(rhs / 2, rel=1e-12)
    assert dplus_domination_check(U, U, np.zeros((8, 2))) == (0.0, 0.0, True)
    rng = np.random.default_rng(1)
    for seed in range(20):
        U, V = _pair(1, 4, seed, cond=30)
        f = rng.standard_normal(16)
        for variant in ("plus", "minus"):
            assert dplus_domination_check(U, V, f, variant)[2]
        offsets = {DyadicInterval(1, 0): DyadicInterval(2, 2)}
        assert dplus_domination_check(U, V, f, "offset", offsets, radius=3)[2]
