"""Exact discrete Hilbert transform and Monte Carlo averages of dyadic shifts
over random translated/dilated grids.

Kernel normalization: ``Hf(x) = p.v. int f(t) / (x - t) dt`` (no ``1/pi``).
Fields live on a :class:`DyadicGrid` mesh and are evaluated at cell
midpoints.
"""

import csv
import io
import math
import json
from dataclasses import dataclass, field

import numpy as np

from .dyadic import DyadicGrid, GridError, ShiftedGrid, _as_field
from .matops import largest_singular_value
from .operators import field_matrix
from .weights import _require_compatible, pointwise_multiply, weight_power

DEFAULT_WINDOW = (-4.0, 4.0)
DEFAULT_LEVELS = (-6, 6)
INTERIOR_TRIM = 0.1
BATCH = 256


def hilbert_kernel_matrix(mesh, points=None):
    """``K[i, j] = int_{cell j} dt / (x_i - t)``, principal value inside the cell."""
    x = mesh.midpoints if points is None else np.asarray(points, dtype=float)
    edges = mesh.window[0] + mesh.cell_width * np.arange(mesh.num_cells + 1)
    d = x[:, None] - edges[None, :]
    if np.any(d == 0):
        raise GridError("evaluation point lies on a cell boundary")
    logs = np.log(np.abs(d))
    return logs[:, :-1] - logs[:, 1:]


def hilbert_exact(f, mesh, points=None):
    """Hilbert transform of the piecewise-constant field ``f`` at ``points``
    (default: the mesh midpoints).

    Evaluated as ``sum_k (f_k - f_{k-1}) log|x - e_k|`` over the cell edges
    ``e_k``, so points may sit on any edge where ``f`` does not jump.
    """
    f = _as_field(f, mesh)
    x = mesh.midpoints if points is None else np.asarray(points, dtype=float).reshape(-1)
    edges = mesh.window[0] + mesh.cell_width * np.arange(mesh.num_cells + 1)
    zero = np.zeros((1, f.shape[1]))
    jumps = np.diff(np.vstack([zero, f, zero]), axis=0)
    active = np.nonzero(np.any(jumps != 0, axis=1))[0]
    d = x[:, None] - edges[None, active]
    if np.any(d == 0):
        raise GridError("evaluation point lies on a discontinuity of f")
    return np.log(np.abs(d)) @ jumps[active]


def _cumulative(f, mesh):
    edges = mesh.window[0] + mesh.cell_width * np.arange(mesh.num_cells + 1)
    F = np.vstack([np.zeros((1, f.shape[1])), np.cumsum(f * mesh.cell_width, axis=0)])
    return edges, F


def _support(f, mesh):
    nz = np.nonzero(np.any(f != 0, axis=1))[0]
    if nz.size == 0:
        return None
    lo = mesh.window[0] + nz[0] * mesh.cell_width
    return lo, lo + (nz[-1] + 1 - nz[0]) * mesh.cell_width


def shift_on_grid(grid, f, mesh):
    """``sum_I (f_{I_+} - f_{I_-}) h_I`` on ``grid``, evaluated at the mesh midpoints.

    Haar coefficients of ``f`` on the shifted intervals are exact (via the
    piecewise-linear primitive of ``f``). Output intervals run over levels
    ``coarsest .. finest - 2`` so that both children carry Haar functions.
    """
    f = _as_field(f, mesh)
    out = np.zeros_like(f)
    supp = _support(f, mesh)
    if supp is None:
        return out
    glo, ghi = grid.window
    if supp[0] < glo - 1e-12 or supp[1] > ghi + 1e-12:
        raise GridError(f"support {supp} escapes the grid window {grid.window}")
    edges, F = _cumulative(f, mesh)
    x = mesh.midpoints
    r = grid.r

    def prim(t):
        if F.shape[1] == 1:
            return np.interp(t, edges, F[:, 0])[:, None]
        return np.column_stack([np.interp(t, edges, F[:, j]) for j in range(F.shape[1])])

    for n in range(grid.coarsest, grid.finest - 1):
        # children at level n + 1 meeting the support, grouped by parent
        m = n + 1
        om, scale = grid.offset(m), 2.0**m
        k0 = math.floor((supp[0] / r - om) * scale)
        k1 = math.floor((np.nextafter(supp[1], -np.inf) / r - om) * scale)
        bit = grid.bit(m)
        p0, p1 = (k0 - bit) // 2, (k1 - bit) // 2
        kids = 2 * np.arange(p0, p1 + 1) + bit  # left child indices
        half = kids.size
        w = grid.width(m)
        a = r * (kids * (1.0 / scale) + om)  # left child start; parent spans [a, a + 2w)
        pts = np.concatenate([a, a + 0.5 * w, a + w, a + 1.5 * w, a + 2 * w])
        P = prim(pts).reshape(5, half, -1)
        left = P[2] - 2.0 * P[1] + P[0]
        right = P[4] - 2.0 * P[3] + P[2]
        parent_coef = (left - right) / np.sqrt(w)  # f_{I_+} - f_{I_-}
        # evaluate sum_parents parent_coef * h_parent on midpoints inside the parents
        pw = 2 * w
        lo_i, hi_i = np.searchsorted(x, [a[0], a[-1] + pw])
        if lo_i >= hi_i:
            continue
        xs = x[lo_i:hi_i]
        k = np.floor((xs - a[0]) / pw).astype(np.int64).clip(0, half - 1)
        sign = np.where(xs >= a[k] + w, 1.0, -1.0)
        out[lo_i:hi_i] += parent_coef[k] * (sign / np.sqrt(pw))[:, None]
    return out


def _shift_batch(rs, betas, levels, f, mesh):
    """Sum of ``shift_on_grid`` over a batch of grids given by dilations
    ``rs`` (B,) and bit rows ``betas`` (B, finest - coarsest)."""
    coarsest, finest = levels
    supp = _support(f, mesh)
    total = np.zeros_like(f)
    if supp is None:
        return total
    edges, F = _cumulative(f, mesh)
    x = mesh.midpoints
    B = rs.size
    weights = 2.0 ** -np.arange(coarsest + 1, finest + 1)
    # omega_n = sum_{j > n} beta_j 2^-j, one column per level coarsest..finest
    tails = np.cumsum((betas * weights)[:, ::-1], axis=1)[:, ::-1]
    offsets = np.hstack([tails, np.zeros((B, 1))])
    rows = np.arange(B)[:, None]
    s_hi = np.nextafter(supp[1], -np.inf)
    for n in range(coarsest, finest - 1):
        m = n + 1
        om = offsets[:, m - coarsest]
        bit = betas[:, m - coarsest - 1]
        scale = 2.0**m
        k0 = np.floor((supp[0] / rs - om) * scale).astype(np.int64)
        k1 = np.floor((s_hi / rs - om) * scale).astype(np.int64)
        p0, p1 = (k0 - bit) // 2, (k1 - bit) // 2
        count = p1 - p0 + 1
        L = int(count.max())
        idx = np.arange(L)[None, :]
        valid = idx < count[:, None]
        w = (rs / scale)[:, None]
        a = rs[:, None] * ((2 * (p0[:, None] + idx) + bit[:, None]) / scale + om[:, None])
        pts = np.stack([a, a + 0.5 * w, a + w, a + 1.5 * w, a + 2 * w])  # (5, B, L)
        coef = np.empty((B, L, f.shape[1]))
        for j in range(f.shape[1]):
            P = np.interp(pts, edges, F[:, j])
            coef[:, :, j] = ((P[2] - 2 * P[1] + P[0]) - (P[4] - 2 * P[3] + P[2])) / np.sqrt(w)
        coef[~valid] = 0.0
        pw = 2 * w
        k = np.floor((x[None, :] - a[:, :1]) / pw).astype(np.int64)  # (B, C)
        inside = (k >= 0) & (k < count[:, None])
        kc = np.clip(k, 0, L - 1)
        sign = np.where(x[None, :] >= np.take_along_axis(a, kc, axis=1) + w, 1.0, -1.0)
        amp = np.where(inside, sign / np.sqrt(pw), 0.0)
        total += np.einsum("bc,bcj->cj", amp, coef[rows, kc])
    return total


def sample_parameters(seed, index, levels=DEFAULT_LEVELS):
    rng = np.random.default_rng([seed, index])
    r = float(2.0 ** rng.random())
    return r, rng.integers(0, 2, size=levels[1] - levels[0])


def sample_grid(seed, index, window=DEFAULT_WINDOW, levels=DEFAULT_LEVELS):
    """Grid for Monte Carlo sample ``index``: fair bits and ``r`` with density ``1/(r log 2)``."""
    r, beta = sample_parameters(seed, index, levels)
    return ShiftedGrid(r, beta, tuple(window), levels[0], levels[1])


def standard_grid(window=(0.0, 1.0), levels=(0, 6)):
    return ShiftedGrid(1.0, np.zeros(levels[1] - levels[0], dtype=int), tuple(window), *levels)


@dataclass
class AveragingReport:
    samples: int
    c: float
    residual: float
    breakdown: dict = field(default_factory=dict)

    def to_dict(self):
        return {"samples": self.samples, "c": self.c, "residual": self.residual,
                "breakdown": self.breakdown}

    def to_json(self):
        return json.dumps(self.to_dict())


def interior_mask(mesh, trim=INTERIOR_TRIM):
    lo, hi = mesh.window
    cut = trim * (hi - lo)
    x = mesh.midpoints
    return (x > lo + cut) & (x < hi - cut)


def fit_proportion(avg, target, mask):
    """Least-squares ``c`` with ``c * avg ~ target`` on ``mask`` and the relative residual."""
    a, t = avg[mask].ravel(), target[mask].ravel()
    denom = float(a @ a)
    if denom == 0.0:
        raise ValueError("degenerate fit: the averaged shift vanishes on the interior")
    c = float(a @ t) / denom
    return c, float(np.linalg.norm(c * a - t) / np.linalg.norm(t))


def mc_average(f, num_samples, seed, window=DEFAULT_WINDOW, levels=DEFAULT_LEVELS,
               apply_on_grid=shift_on_grid, force_standard=False, checkpoints=()):
    """Average of ``apply_on_grid(grid, f, mesh)`` over sampled grids.

    ``f`` is a leaf field on ``window`` (its length fixes the mesh depth).
    ``apply_on_grid`` defaults to the dyadic shift; any per-grid operator
    (e.g. a band operator) can be averaged the same way. Sample ``i`` uses
    the generator seeded with ``(seed, i)``. ``checkpoints`` lists sample
    counts at which ``(count, c, residual)`` rows are recorded.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be at least 1")
    f = np.asarray(f, dtype=float)
    ncell = f.shape[0]
    mesh = DyadicGrid(ncell.bit_length() - 1, window)
    f = _as_field(f, mesh)
    total = np.zeros_like(f)
    target = hilbert_exact(f, mesh)
    mask = interior_mask(mesh)
    trace = []
    marks = sorted(set(c for c in checkpoints if 1 <= c <= num_samples))
    batched = apply_on_grid is shift_on_grid and not force_standard
    done = 0
    stops = marks + [num_samples]
    while done < num_samples:
        upto = min(next(c for c in stops if c > done), done + BATCH)
        if batched:
            params = [sample_parameters(seed, i, levels) for i in range(done, upto)]
            rs = np.array([p[0] for p in params])
            betas = np.array([p[1] for p in params]).reshape(len(params), -1)
            total += _shift_batch(rs, betas, levels, f, mesh)
        else:
            for i in range(done, upto):
                grid = standard_grid(window, levels) if force_standard else sample_grid(seed, i, window, levels)
                total += apply_on_grid(grid, f, mesh)
        done = upto
        if done in marks and np.any(target[mask]):
            trace.append((done, *fit_proportion(total / done, target, mask)))
    avg = total / num_samples
    if not np.any(f):
        return avg, AveragingReport(num_samples, 0.0, 0.0, {"trace": trace})
    c, res = fit_proportion(avg, target, mask)
    return avg, AveragingReport(num_samples, c, res, {"trace": trace})


def trace_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_count", "fitted_c", "residual"])
    for row in report.breakdown.get("trace", []):
        w.writerow([row[0], repr(row[1]), repr(row[2])])
    return buf.getvalue()


def grid_shift_matrix(grid, mesh, N=1):
    """Dense matrix of ``shift_on_grid`` on mesh fields (orthonormal coordinates)."""
    return field_matrix(lambda g: shift_on_grid(grid, g, mesh), mesh, N)


def weighted_grid_shift_norm(grid, U, V, seed=0):
    """``||U^1/2 H^{grid} V^-1/2||`` with the shift evaluated on the weights' mesh."""
    _require_compatible(U, V)
    mesh = U.grid
    Uh, Vmh = weight_power(U, 0.5), weight_power(V, -0.5)
    M = field_matrix(lambda g: pointwise_multiply(Uh, shift_on_grid(grid, pointwise_multiply(Vmh, g), mesh)),
                     mesh, U.N)
    return largest_singular_value(M, seed=seed)


def weighted_hilbert_scan(U, V, test_functions, num_grids=20, seed=0, levels=None):
    """Weighted Hilbert ratios next to weighted shift norms on random grids.

    Returns a dict with ``hilbert_ratios`` (``||U^1/2 H V^-1/2 f|| / ||f||``
    per test function), ``shift_norms`` per grid, ``c_star`` (their max),
    ``dispersion`` (max / min over grids) and ``ratio`` (largest Hilbert
    ratio over ``c_star``).
    """
    _require_compatible(U, V)
    mesh = U.grid
    if levels is None:
        levels = (-2, mesh.depth)
    Uh, Vmh = weight_power(U, 0.5), weight_power(V, -0.5)
    ratios = []
    for f in test_functions:
        f = _as_field(f, mesh)
        g = pointwise_multiply(Uh, hilbert_exact(pointwise_multiply(Vmh, f), mesh))
        ratios.append(float(np.linalg.norm(g) / np.linalg.norm(f)))
    norms = [weighted_grid_shift_norm(sample_grid(seed, i, mesh.window, levels), U, V, seed)
             for i in range(num_grids)]
    c_star = max(norms)
    return {
        "hilbert_ratios": ratios,
        "shift_norms": norms,
        "c_star": c_star,
        "dispersion": c_star / min(norms),
        "ratio": max(ratios) / c_star if ratios else None,
    }
