"""Piecewise-constant matrix weights on a dyadic mesh."""

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dyadic import DyadicGrid, GridError, _as_field
from .matops import MatrixError, psd_power, psd_sqrt, symmetrize

MAX_CELL_COND = 1e12


class WeightError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MatrixWeight:
    """One symmetric positive definite ``N x N`` matrix per leaf cell.

    ``cells`` has shape ``(2**depth, N, N)``.
    """

    cells: np.ndarray
    window: tuple = (0.0, 1.0)

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=float)
        if cells.ndim == 1:
            cells = cells[:, None, None]
        if cells.ndim != 3 or cells.shape[1] != cells.shape[2]:
            raise WeightError(f"cells must have shape (2**D, N, N), got {cells.shape}")
        n = cells.shape[0]
        if n & (n - 1) or n == 0:
            raise WeightError(f"number of cells {n} is not a power of two")
        if np.max(np.abs(cells - np.swapaxes(cells, 1, 2))) > 1e-12 * max(np.max(np.abs(cells)), 1.0):
            raise WeightError("cell matrices must be symmetric")
        eig = np.linalg.eigvalsh(cells)
        bad = np.nonzero(eig[:, 0] <= 0)[0]
        if bad.size:
            raise WeightError(f"cell {bad[0]} is not positive definite (eigenvalue {eig[bad[0], 0]:.3e})")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "window", tuple(map(float, self.window)))

    @property
    def N(self):
        return self.cells.shape[1]

    @property
    def depth(self):
        return self.cells.shape[0].bit_length() - 1

    @cached_property
    def grid(self):
        return DyadicGrid(self.depth, self.window)

    @cached_property
    def level_averages(self):
        """``level_averages[n][k]`` is the average over interval ``(n, k)``.

        Built bottom-up by averaging the two children, so the midpoint
        identity holds exactly.
        """
        levels = [self.cells]
        for _ in range(self.depth):
            prev = levels[-1]
            levels.append(0.5 * (prev[0::2] + prev[1::2]))
        out = levels[::-1]
        for a in out:
            a.setflags(write=False)
        return out

    def haar_averages(self):
        """Averages over the Haar intervals in heap order, shape ``(2**D - 1, N, N)``."""
        if self.depth == 0:
            return np.zeros((0, self.N, self.N))
        return np.concatenate(self.level_averages[: self.depth])

    def scaled(self, c):
        return MatrixWeight(c * self.cells, self.window)

    def compatible(self, other):
        return self.cells.shape == other.cells.shape and np.allclose(self.window, other.window, rtol=0, atol=1e-15)

    def to_json(self):
        return json.dumps({
            "N": self.N,
            "D": self.depth,
            "window": list(self.window),
            "cells": [c.reshape(-1).tolist() for c in self.cells],
        })

    @classmethod
    def from_json(cls, text):
        data = json.loads(text) if isinstance(text, str) else text
        try:
            n, d = int(data["N"]), int(data["D"])
            cells = np.array(data["cells"], dtype=float).reshape(1 << d, n, n)
            return cls(cells, tuple(data["window"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise WeightError(f"malformed weight document: {exc}") from exc


def _require_compatible(*weights):
    first = weights[0]
    for w in weights[1:]:
        if not first.compatible(w):
            raise WeightError("weights must live on the same mesh with the same matrix size")


def average(W, interval):
    """Exact average of ``W`` over a dyadic interval (leaf cells allowed)."""
    W.grid.validate(interval, allow_leaf=True)
    return W.level_averages[interval.level][interval.index]


def inverse_weight(W):
    eig = np.linalg.eigvalsh(W.cells)
    cond = eig[:, -1] / eig[:, 0]
    bad = np.nonzero(cond > MAX_CELL_COND)[0]
    if bad.size:
        raise WeightError(f"cell {bad[0]} is ill-conditioned (condition number {cond[bad[0]]:.3e})")
    return MatrixWeight(symmetrize(np.linalg.inv(W.cells)), W.window)


def weight_power(W, p):
    """Cellwise ``W(x)**p``; used for the pointwise multipliers ``W**(+-1/2)``."""
    if p == 0.5:
        return psd_sqrt(W.cells)
    try:
        return psd_power(W.cells, p)
    except MatrixError as exc:
        raise WeightError(str(exc)) from exc


def weighted_norm(f, W):
    """``(sum_cells |cell| <W f, f>)**0.5``."""
    f = _as_field(f, W.grid)
    if f.shape[1] != W.N:
        raise WeightError(f"field has {f.shape[1]} components, weight is {W.N}x{W.N}")
    q = np.einsum("ci,cij,cj->", f, W.cells, f)
    return float(np.sqrt(max(q, 0.0) * W.grid.cell_width))


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def generate(kind, params=None, N=1, D=4, seed=0, window=(0.0, 1.0)):
    """Build a test weight.

    kinds and their ``params``:

    ``constant``
        ``matrix`` (N x N, default identity) or ``scale``.
    ``two_value``
        ``(a, b)``: ``a*Id`` on the left half of the window, ``b*Id`` on the
        right; matrices are accepted too.
    ``scalar_power``
        ``alpha`` in (-1, 1): ``|x|**alpha * Id`` sampled at cell midpoints.
    ``rotating``
        ``frequency`` (turns across the window), ``eccentricity`` t > 0:
        ``R(theta(x)) diag(1, t, 1, ...) R(theta(x))^T`` with ``theta`` linear
        in ``x``. Needs N >= 2.
    ``random_logbounded``
        ``cond_max`` > 1: random orthogonal frame per cell, eigenvalues
        ``exp(u)`` with ``u`` uniform in ``[-log cond_max, log cond_max]``.
    """
    params = dict(params or {})
    grid = DyadicGrid(D, window)
    ncell = grid.num_cells
    eye = np.eye(N)
    if kind == "constant":
        M = np.asarray(params.get("matrix", params.get("scale", 1.0) * eye), dtype=float)
        cells = np.broadcast_to(M, (ncell, N, N)).copy()
    elif kind == "two_value":
        values = params.get("values", params.get("ab"))
        if values is None:
            values = (params.get("a", 1.0), params.get("b", 4.0))
        if D < 1:
            raise WeightError("two_value needs depth >= 1")
        a, b = (np.asarray(v, dtype=float) for v in values)
        a = a * eye if a.ndim == 0 else a
        b = b * eye if b.ndim == 0 else b
        cells = np.empty((ncell, N, N))
        cells[: ncell // 2] = a
        cells[ncell // 2:] = b
    elif kind == "scalar_power":
        alpha = float(params.get("alpha", 0.5))
        if not -1.0 < alpha < 1.0:
            raise WeightError(f"scalar_power needs alpha in (-1, 1), got {alpha}")
        x = np.abs(grid.midpoints)
        if np.any(x == 0):
            raise WeightError("a cell midpoint sits on the singularity x = 0")
        cells = (x**alpha)[:, None, None] * eye
    elif kind == "rotating":
        if N < 2:
            raise WeightError("rotating weights need N >= 2")
        freq = float(params.get("frequency", 1.0))
        ecc = float(params.get("eccentricity", 4.0))
        if ecc <= 0:
            raise WeightError("eccentricity must be positive")
        lo = grid.window[0]
        theta = 2 * np.pi * freq * (grid.midpoints - lo) / grid.length
        R = np.tile(eye, (ncell, 1, 1))
        R[:, :2, :2] = _rotation(theta)
        d = np.ones(N)
        d[1] = ecc
        cells = (R * d[None, None, :]) @ np.swapaxes(R, 1, 2)
    elif kind == "random_logbounded":
        cond_max = float(params.get("cond_max", 10.0))
        if cond_max <= 1:
            raise WeightError("cond_max must exceed 1")
        rng = np.random.default_rng(seed)
        L = np.log(cond_max)
        u = rng.uniform(-L, L, size=(ncell, N))
        Q, Rr = np.linalg.qr(rng.standard_normal((ncell, N, N)))
        Q = Q * np.sign(np.diagonal(Rr, axis1=1, axis2=2))[:, None, :]
        cells = (Q * np.exp(u)[:, None, :]) @ np.swapaxes(Q, 1, 2)
    else:
        raise WeightError(f"unknown weight kind {kind!r}")
    return MatrixWeight(symmetrize(cells), grid.window)


def pointwise_multiply(M, f):
    """Apply the cell matrices ``M`` (shape ``(C, N, N)``) to the field ``f``."""
    return np.einsum("cij,cj->ci", M, f)


__all__ = [
    "GridError",
    "MatrixWeight",
    "WeightError",
    "average",
    "generate",
    "inverse_weight",
    "pointwise_multiply",
    "weight_power",
    "weighted_norm",
]
