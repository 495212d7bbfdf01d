"""Haar-side operators and their weighted norms.

Haar operators act on :class:`HaarCoefficients` and annihilate the mean
slot. A weighted operator ``L2(V) -> L2(U)`` is realized on the unweighted
space as ``g -> U^1/2 op(V^-1/2 g)``.

Dense matrices use orthonormal coordinates throughout: a leaf field ``f``
becomes ``sqrt(cell_width) * f.ravel()`` and Haar coefficients become
``entries.ravel()`` (index ``position * N + component``).
"""

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .dyadic import DyadicInterval, GridError, HaarCoefficients, _as_field, haar_decompose, haar_reconstruct, tree_distance
from .matops import largest_singular_value, psd_inv_sqrt, psd_sqrt, spectral_norm
from .weights import _require_compatible, inverse_weight, pointwise_multiply, weight_power

EXHAUSTIVE_MAX_DEPTH = 3


class OperatorError(ValueError):
    pass


# -- sign patterns and martingale transforms ---------------------------------

@dataclass(frozen=True, eq=False)
class SignPattern:
    """sigma(I) = +-1 for every Haar interval, heap order."""

    values: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if np.any(np.abs(v) != 1.0):
            raise OperatorError("sign pattern entries must be exactly +1 or -1")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid, sign=1):
        return cls(np.full(grid.num_haar, float(sign)), "plus" if sign > 0 else "minus")

    @classmethod
    def alternating(cls, grid):
        levels = np.array([I.level for I in grid.haar_intervals()])
        return cls((-1.0) ** levels, "alternating")

    @classmethod
    def random(cls, grid, rng, name="random"):
        return cls(rng.choice([-1.0, 1.0], size=grid.num_haar), name)

    @classmethod
    def from_mapping(cls, grid, mapping, name="custom"):
        v = np.ones(grid.num_haar)
        for I, s in mapping.items():
            grid.validate(I)
            v[I.position] = s
        return cls(v, name)

    @classmethod
    def from_bits(cls, grid, bits):
        v = np.array([1.0 if (bits >> p) & 1 == 0 else -1.0 for p in range(grid.num_haar)])
        return cls(v, f"bits{bits}")

    def __getitem__(self, interval):
        return self.values[interval.position]


def martingale_transform(sigma, c):
    if sigma.values.size != c.grid.num_haar:
        raise OperatorError("sign pattern and coefficients live on different grids")
    return c.with_entries(sigma.values[:, None] * c.entries)


# -- block Haar multipliers ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class BlockMultiplier:
    """``f_I -> B_I f_I``. ``blocks`` has shape ``(2**D - 1, N, N)``; rows
    with ``present == False`` have no block assigned."""

    blocks: np.ndarray
    grid: object
    present: np.ndarray = None

    def __post_init__(self):
        b = np.asarray(self.blocks, dtype=float)
        if b.ndim != 3 or b.shape[0] != self.grid.num_haar or b.shape[1] != b.shape[2]:
            raise OperatorError(f"blocks must have shape ({self.grid.num_haar}, N, N), got {b.shape}")
        present = np.ones(b.shape[0], bool) if self.present is None else np.asarray(self.present, bool)
        object.__setattr__(self, "blocks", b)
        object.__setattr__(self, "present", present)

    @classmethod
    def from_mapping(cls, grid, mapping, N):
        blocks = np.zeros((grid.num_haar, N, N))
        present = np.zeros(grid.num_haar, bool)
        for I, B in mapping.items():
            grid.validate(I)
            blocks[I.position] = B
            present[I.position] = True
        return cls(blocks, grid, present)

    def __getitem__(self, interval):
        if not self.present[interval.position]:
            raise OperatorError(f"no block for {interval}")
        return self.blocks[interval.position]


def block_multiply(B, c):
    active = np.any(c.entries != 0, axis=1) & ~B.present
    if np.any(active):
        missing = DyadicInterval.from_position(int(np.nonzero(active)[0][0]))
        raise OperatorError(f"block multiplier has no block for {missing}")
    return c.with_entries(np.einsum("pij,pj->pi", B.blocks, c.entries))


def _child_averages(W, which):
    """Averages over the left (which=0, I_+) or right (which=1, I_-) child of each Haar interval."""
    return np.concatenate([W.level_averages[n + 1][which::2] for n in range(W.depth)])


def make_DW(W):
    return BlockMultiplier(psd_sqrt(W.haar_averages()), W.grid)


def make_DW_inv(W):
    return BlockMultiplier(psd_inv_sqrt(W.haar_averages()), W.grid)


def make_DW_plus(W):
    """Blocks ``<W>_{I_+}^1/2`` (left child)."""
    return BlockMultiplier(psd_sqrt(_child_averages(W, 0)), W.grid)


def make_DW_minus(W):
    """Blocks ``<W>_{I_-}^1/2`` (right child)."""
    return BlockMultiplier(psd_sqrt(_child_averages(W, 1)), W.grid)


def make_DW_offset(W, offsets, radius=None):
    """Blocks ``<W>_{offsets[I]}^1/2``; intervals missing from ``offsets`` use ``I`` itself.

    Targets may be leaf cells. With ``radius`` given, every pair must lie
    within that tree distance.
    """
    grid = W.grid
    avgs = W.haar_averages().copy()
    for I, target in offsets.items():
        grid.validate(I)
        try:
            grid.validate(target, allow_leaf=True)
        except GridError as exc:
            raise OperatorError(f"offset target {target} of {I} is outside the grid") from exc
        if radius is not None and tree_distance(I, target) > radius:
            raise OperatorError(f"offset {I} -> {target} exceeds radius {radius}")
        avgs[I.position] = W.level_averages[target.level][target.index]
    return BlockMultiplier(psd_sqrt(avgs), grid)


def pointwise_weight_half(W, sign, f):
    """``f(x) -> W(x)^(+-1/2) f(x)`` cellwise."""
    if sign not in (1, -1):
        raise OperatorError("sign must be +1 or -1")
    f = _as_field(f, W.grid)
    return pointwise_multiply(weight_power(W, 0.5 * sign), f)


# -- dyadic shift and band operators --------------------------------------------

def _shift_entries(entries, part):
    out = np.zeros_like(entries)
    n = entries.shape[0]
    parents = np.arange(n)
    left, right = 2 * parents + 1, 2 * parents + 2
    ok = right < n  # children must carry Haar functions
    if part in (0, 1):
        out[ok] += entries[left[ok]]
    if part in (0, 2):
        out[ok] -= entries[right[ok]]
    return out


def dyadic_shift(c):
    """``(H f)_I = f_{I_+} - f_{I_-}`` for intervals whose children carry Haar functions."""
    return c.with_entries(_shift_entries(c.entries, 0))


def shift_part_one(c):
    """``(H_1 f)_I = f_{I_+}``."""
    return c.with_entries(_shift_entries(c.entries, 1))


def shift_part_two(c):
    """``(H_2 f)_I = -f_{I_-}``."""
    return c.with_entries(_shift_entries(c.entries, 2))


@dataclass(frozen=True, eq=False)
class BandSpec:
    """Coefficients ``phi[(source, target)]`` of ``f -> sum phi(I, J) f_I h_J``."""

    grid: object
    radius: int
    phi: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.radius < 0:
            raise OperatorError("radius must be nonnegative")
        clean = {}
        for (I, J), value in self.phi.items():
            self.grid.validate(I)
            self.grid.validate(J)
            if tree_distance(I, J) > self.radius:
                raise OperatorError(f"pair {I} -> {J} is farther than radius {self.radius}")
            value = float(value)
            if not np.isfinite(value):
                raise OperatorError(f"non-finite coefficient for {I} -> {J}")
            clean[(I, J)] = value
        object.__setattr__(self, "phi", clean)

    @classmethod
    def diagonal(cls, grid, values):
        return cls(grid, 0, {(I, I): v for I, v in zip(grid.haar_intervals(), values)})

    @classmethod
    def shift(cls, grid):
        """The dyadic shift as a radius-1 band: phi(I_+, I) = 1, phi(I_-, I) = -1."""
        phi = {}
        for I in grid.haar_intervals():
            if I.level + 1 < grid.depth:
                left, right = I.children()
                phi[(left, I)] = 1.0
                phi[(right, I)] = -1.0
        return cls(grid, 1, phi)

    @classmethod
    def random(cls, grid, radius, rng, density=0.5, scale=1.0):
        phi = {}
        haar = grid.haar_intervals()
        for I in haar:
            for J in haar:
                if tree_distance(I, J) <= radius and rng.random() < density:
                    phi[(I, J)] = rng.uniform(-scale, scale)
        return cls(grid, radius, phi)

    def matrix(self):
        """Scalar ``(num_haar, num_haar)`` matrix, rows are targets."""
        M = np.zeros((self.grid.num_haar, self.grid.num_haar))
        for (I, J), v in self.phi.items():
            M[J.position, I.position] += v
        return M


def band_apply(spec, c):
    out = np.zeros_like(c.entries)
    for (I, J), v in spec.phi.items():
        out[J.position] += v * c.entries[I.position]
    return c.with_entries(out)


def band_decompose(spec):
    """Split into parts that each send at most one source to every target.

    Sources of each target are ordered lexicographically and the i-th one
    goes to part i, so the number of parts is the largest in-degree.
    """
    by_target = defaultdict(list)
    for (I, J) in spec.phi:
        by_target[J].append(I)
    nparts = max((len(v) for v in by_target.values()), default=0)
    parts = [dict() for _ in range(max(nparts, 1))]
    for J, sources in by_target.items():
        for i, I in enumerate(sorted(sources)):
            parts[i][(I, J)] = spec.phi[(I, J)]
    return [BandSpec(spec.grid, spec.radius, p) for p in parts]


def phi_sup(spec):
    return max((abs(v) for v in spec.phi.values()), default=0.0)


def band_source_map(part):
    """target -> source for a single-source part of :func:`band_decompose`."""
    out = {}
    for (I, J) in part.phi:
        if J in out:
            raise OperatorError(f"target {J} has more than one source")
        out[J] = I
    return out


# -- assembly and weighted norms ----------------------------------------------

def _field_basis(grid, N):
    """Unit-L2 leaf fields, one per (cell, component)."""
    scale = 1.0 / np.sqrt(grid.cell_width)
    for j in range(grid.num_cells * N):
        f = np.zeros(grid.num_cells * N)
        f[j] = scale
        yield f.reshape(grid.num_cells, N)


def _haar_basis(grid, N):
    for j in range(grid.num_haar * N):
        e = np.zeros(grid.num_haar * N)
        e[j] = 1.0
        yield HaarCoefficients.from_flat(e, grid, N)


def _to_vector(out, grid):
    if isinstance(out, HaarCoefficients):
        return out.flat()
    return np.sqrt(grid.cell_width) * np.asarray(out, dtype=float).reshape(-1)


def assemble_matrix(op, grid, N):
    """Matrix of a Haar operator on the mean-zero span, basis ``e_j (x) h_I``."""
    cols = [_to_vector(op(c), grid) for c in _haar_basis(grid, N)]
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def field_matrix(fn, grid, N):
    """Matrix of ``fn`` applied to unit leaf fields; ``fn`` may return a field or coefficients."""
    return np.column_stack([_to_vector(fn(f), grid) for f in _field_basis(grid, N)])


def haar_to_field_matrix(fn, grid, N):
    return np.column_stack([_to_vector(fn(c), grid) for c in _haar_basis(grid, N)])


@dataclass(frozen=True, eq=False)
class WeightedOperator:
    """Unweighted realization ``g -> U^1/2 op(V^-1/2 g)`` on leaf fields."""

    op: object
    U: object
    V: object

    def __call__(self, g):
        h = pointwise_weight_half(self.V, -1, g)
        out = self.op(haar_decompose(h, self.V.grid))
        return pointwise_weight_half(self.U, 1, haar_reconstruct(out))

    def matrix(self):
        return field_matrix(self, self.U.grid, self.U.N)

    def norm(self, seed=0):
        return largest_singular_value(self.matrix(), seed=seed)


def weighted_conjugate(op, U, V):
    _require_compatible(U, V)
    return WeightedOperator(op, U, V)


def _left_factor(U, blocks=None):
    """Haar -> field matrix of ``c -> U^1/2 R(B c)``."""
    Uh = weight_power(U, 0.5)
    grid, N = U.grid, U.N

    def fn(c):
        if blocks is not None:
            c = block_multiply(blocks, c)
        return pointwise_multiply(Uh, haar_reconstruct(c))

    return haar_to_field_matrix(fn, grid, N)


def _right_factor(W, power, blocks=None):
    """Field -> Haar matrix of ``g -> B P Dec(W^power g)``."""
    Wp = weight_power(W, power)
    grid = W.grid

    def fn(g):
        c = haar_decompose(pointwise_multiply(Wp, g), grid)
        c = c.with_entries(c.entries)  # drop the mean slot
        return block_multiply(blocks, c) if blocks is not None else c

    return field_matrix(fn, grid, W.N)


def square_function_norm(U, V, seed=0):
    """``||M_U^1/2 D_{V^-1}||`` (Haar coefficients -> fields)."""
    _require_compatible(U, V)
    return largest_singular_value(_left_factor(U, make_DW(inverse_weight(V))), seed=seed)


def embedding_norm(W, seed=0):
    """``||D_W^-1 M_W^1/2||`` (fields -> Haar coefficients, mean dropped)."""
    return largest_singular_value(_right_factor(W, 0.5, make_DW_inv(W)), seed=seed)


def factorization_bound(U, V, seed=0):
    """``(||M_V^-1/2 D_{V^-1}^-1||, ||D_{V^-1} M_U^1/2||, product)``.

    The product dominates every weighted martingale transform norm since
    the adjoint of ``U^1/2 T_s V^-1/2`` factors through ``D_{V^-1}``.
    """
    _require_compatible(U, V)
    Vinv = inverse_weight(V)
    first = embedding_norm(Vinv, seed=seed)  # adjoint of M_V^-1/2 D_{V^-1}^-1
    second = square_function_norm(U, V, seed=seed)  # adjoint of D_{V^-1} M_U^1/2
    return first, second, first * second


def diagonal_product_values(U, V):
    """``||<V^-1>_I^1/2 <U>_I^1/2||`` over all intervals (leaves included), heap order."""
    _require_compatible(U, V)
    A = psd_sqrt(np.concatenate(inverse_weight(V).level_averages))
    B = psd_sqrt(np.concatenate(U.level_averages))
    return spectral_norm(A @ B)


def diagonal_product_norm(U, V):
    return float(np.max(diagonal_product_values(U, V)))


@dataclass
class ScanReport:
    norms: dict
    bound: tuple = None

    @property
    def max(self):
        return max(self.norms.values())

    @property
    def min(self):
        return min(self.norms.values())

    def rows(self):
        return list(self.norms.items())

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sigma_id", "norm"])
        for k, v in self.rows():
            w.writerow([k, repr(float(v))])
        return buf.getvalue()

    def summary(self):
        out = {"max": self.max, "min": self.min}
        if self.bound is not None:
            out["bound_product"] = self.bound[2]
        return out


def sign_patterns(grid, num_sigma=8, seed=0, exhaustive=None):
    """Constant, alternating-by-level and seeded random patterns; every
    pattern when ``exhaustive`` (default: depth <= 3)."""
    if num_sigma < 1:
        raise OperatorError("num_sigma must be at least 1")
    if exhaustive is None:
        exhaustive = grid.depth <= EXHAUSTIVE_MAX_DEPTH
    if exhaustive:
        if grid.depth > EXHAUSTIVE_MAX_DEPTH:
            raise OperatorError(f"exhaustive enumeration is capped at depth {EXHAUSTIVE_MAX_DEPTH}")
        return [SignPattern.from_bits(grid, b) for b in range(1 << grid.num_haar)]
    rng = np.random.default_rng(seed)
    pats = [SignPattern.constant(grid), SignPattern.alternating(grid)]
    pats += [SignPattern.random(grid, rng, f"random{i}") for i in range(num_sigma)]
    return pats


def sigma_norm_scan(U, V, num_sigma=8, seed=0, exhaustive=None, with_bound=False):
    """Norms of ``U^1/2 T_sigma V^-1/2`` over a family of sign patterns."""
    _require_compatible(U, V)
    grid, N = U.grid, U.N
    if grid.num_haar == 0:
        raise OperatorError("depth 0 carries no Haar functions")
    left = _left_factor(U)
    right = _right_factor(V, -0.5)
    norms = {}
    for pat in sign_patterns(grid, num_sigma, seed, exhaustive):
        s = np.repeat(pat.values, N)
        norms[pat.name] = largest_singular_value((left * s) @ right, seed=seed)
    bound = factorization_bound(U, V, seed=seed) if with_bound else None
    return ScanReport(norms, bound)


def band_weighted_bound(spec, U, V, seed=0):
    """Weighted band norm next to its factorized bound.

    Returns ``(norm, bound, terms)`` where ``bound`` is
    ``(sum_i ||M_U^1/2 D^i|| ||T_i||) * ||D_{V^-1}^-1 M_{V^-1}^1/2||`` and
    ``D^i`` carries ``<V^-1>^1/2`` of each target's source in part ``i``.
    """
    _require_compatible(U, V)
    N = U.N
    Vinv = inverse_weight(V)
    weighted = weighted_conjugate(lambda c: band_apply(spec, c), U, V).norm(seed)
    terms = []
    for part in band_decompose(spec):
        D_i = make_DW_offset(Vinv, band_source_map(part))
        t_norm = largest_singular_value(np.kron(part.matrix(), np.eye(N)), seed=seed)
        terms.append((largest_singular_value(_left_factor(U, D_i), seed=seed), t_norm))
    tail = embedding_norm(Vinv, seed=seed)
    bound = sum(a * b for a, b in terms) * tail
    return weighted, bound, {"parts": terms, "embedding": tail}


def shift_weighted_norm(U, V, seed=0):
    return weighted_conjugate(dyadic_shift, U, V).norm(seed)


def generalized_min_eig(A, B):
    """Smallest lambda with ``A v = lambda B v`` for symmetric A and positive B."""
    Bi = psd_inv_sqrt(B)
    return float(np.linalg.eigvalsh(Bi @ A @ Bi)[0])


def dplus_domination_check(U, V, f, variant="plus", offsets=None, radius=None):
    """Compare ``||D' M_U^1/2 f||^2`` with a multiple of ``||D_{V^-1} M_U^1/2 f||^2``.

    ``variant`` is ``"plus"``/``"minus"`` (factor 2) or ``"offset"`` with an
    ``offsets`` map and ``radius``; then the factor is ``2**radius / beta``,
    ``beta`` the smallest generalized eigenvalue of
    ``(int_I V^-1, int_I' V^-1)`` over sources ``I`` with ``I'`` the common
    ancestor of ``I`` and its target.
    """
    _require_compatible(U, V)
    Vinv = inverse_weight(V)
    c = haar_decompose(pointwise_weight_half(U, 1, f), U.grid)
    base = block_multiply(make_DW(Vinv), c).norm_squared()
    if variant == "plus":
        lhs, factor = block_multiply(make_DW_plus(Vinv), c).norm_squared(), 2.0
    elif variant == "minus":
        lhs, factor = block_multiply(make_DW_minus(Vinv), c).norm_squared(), 2.0
    elif variant == "offset":
        if offsets is None or radius is None:
            raise OperatorError("offset variant needs offsets and radius")
        lhs = block_multiply(make_DW_offset(Vinv, offsets, radius), c).norm_squared()
        beta = 1.0
        for I, target in offsets.items():
            anc = _common_ancestor(I, target)
            lenI = Vinv.grid.interval_length(I)
            lenA = Vinv.grid.interval_length(anc)
            beta = min(beta, generalized_min_eig(lenI * Vinv.level_averages[I.level][I.index],
                                                 lenA * Vinv.level_averages[anc.level][anc.index]))
        factor = 2.0**radius / beta
    else:
        raise OperatorError(f"unknown variant {variant!r}")
    rhs = factor * base
    return lhs, rhs, bool(lhs <= rhs + 1e-9)


def _common_ancestor(a, b):
    while a.level > b.level:
        a = a.parent()
    while b.level > a.level:
        b = b.parent()
    while a != b:
        a, b = a.parent(), b.parent()
    return a


def scan_summary_json(scan, U, V, rh=None):
    from .conditions import a2zero, joint_a2

    out = scan.summary()
    out["a2"] = joint_a2(U, V).constant
    out["a2zero_U"] = a2zero(U).constant
    out["a2zero_Vinv"] = a2zero(inverse_weight(V)).constant
    out["rh_r"], out["rh_const"] = (None, None) if rh is None else (rh[0], None if rh[1] is None else rh[1].constant)
    return json.dumps(out)

