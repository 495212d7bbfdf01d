"""Dyadic grids, the Haar basis and exact finite Haar transforms.

Functions are piecewise constant on the ``2**depth`` leaf cells of a
half-open window ``[lo, hi)``. The window itself is the root interval
(level 0), so on ``[0, 1)`` the grid is the standard dyadic grid.

Haar sign convention: ``h_I = (chi_right - chi_left) / sqrt(|I|)``. The left
half of ``I`` is called ``I_+`` and the right half ``I_-``.

Haar-indexed arrays use heap order: interval ``(n, k)`` sits at position
``2**n - 1 + k``, so the children of position ``p`` are ``2p + 1`` (left)
and ``2p + 2`` (right).
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class DyadicInterval:
    """Interval ``(level, index)``; geometry comes from the owning grid."""

    level: int
    index: int

    def parent(self):
        return DyadicInterval(self.level - 1, self.index // 2)

    def children(self):
        """(left, right) = (I_+, I_-) on a standard grid."""
        return (DyadicInterval(self.level + 1, 2 * self.index),
                DyadicInterval(self.level + 1, 2 * self.index + 1))

    @property
    def position(self):
        return (1 << self.level) - 1 + self.index

    @classmethod
    def from_position(cls, pos):
        level = int(pos + 1).bit_length() - 1
        return cls(level, int(pos) - ((1 << level) - 1))

    def contains(self, other):
        if other.level < self.level:
            return False
        return other.index >> (other.level - self.level) == self.index


@dataclass(frozen=True)
class DyadicGrid:
    """Standard dyadic grid on ``window`` with leaf cells at level ``depth``."""

    depth: int
    window: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.depth < 0:
            raise GridError("depth must be nonnegative")
        lo, hi = map(float, self.window)
        if not hi > lo:
            raise GridError(f"empty window {self.window}")
        object.__setattr__(self, "window", (lo, hi))

    @property
    def length(self):
        return self.window[1] - self.window[0]

    @property
    def num_cells(self):
        return 1 << self.depth

    @property
    def num_haar(self):
        return (1 << self.depth) - 1

    @property
    def cell_width(self):
        return self.length / self.num_cells

    @cached_property
    def midpoints(self):
        return self.window[0] + (np.arange(self.num_cells) + 0.5) * self.cell_width

    def interval_length(self, interval):
        return self.length / (1 << interval.level)

    def bounds(self, interval):
        self.validate(interval, allow_leaf=True)
        w = self.interval_length(interval)
        a = self.window[0] + interval.index * w
        return a, a + w

    def validate(self, interval, allow_leaf=False):
        top = self.depth if allow_leaf else self.depth - 1
        if not (0 <= interval.level <= top and 0 <= interval.index < (1 << interval.level)):
            raise GridError(f"{interval} is not in the grid (depth {self.depth}, window {self.window})")

    def intervals(self, level):
        return [DyadicInterval(level, k) for k in range(1 << level)]

    def haar_intervals(self):
        """All intervals carrying a Haar function, in heap order."""
        return [DyadicInterval.from_position(p) for p in range(self.num_haar)]

    def cell_slice(self, interval):
        """Leaf cells covered by ``interval``."""
        self.validate(interval, allow_leaf=True)
        span = 1 << (self.depth - interval.level)
        return slice(interval.index * span, (interval.index + 1) * span)

    def same_as(self, other):
        return self.depth == other.depth and np.allclose(self.window, other.window, rtol=0, atol=1e-15)


@dataclass(frozen=True, eq=False)
class HaarCoefficients:
    """Haar coefficients of an R^N-valued leaf field.

    ``entries`` has shape ``(2**depth - 1, N)`` in heap order; ``mean`` is the
    coefficient of the normalized indicator of the root.
    """

    entries: np.ndarray
    mean: np.ndarray
    grid: DyadicGrid

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim == 1:
            entries = entries[:, None]
        if entries.shape[0] != self.grid.num_haar:
            raise GridError(f"expected {self.grid.num_haar} Haar rows, got {entries.shape[0]}")
        mean = np.asarray(self.mean, dtype=float).reshape(entries.shape[1])
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "mean", mean)

    @property
    def dim(self):
        return self.entries.shape[1]

    def __getitem__(self, interval):
        self.grid.validate(interval)
        return self.entries[interval.position]

    @classmethod
    def zeros(cls, grid, dim):
        return cls(np.zeros((grid.num_haar, dim)), np.zeros(dim), grid)

    @classmethod
    def unit(cls, grid, interval, dim=1, component=0):
        c = np.zeros((grid.num_haar, dim))
        grid.validate(interval)
        c[interval.position, component] = 1.0
        return cls(c, np.zeros(dim), grid)

    def with_entries(self, entries, keep_mean=False):
        return HaarCoefficients(entries, self.mean if keep_mean else np.zeros(self.dim), self.grid)

    def flat(self):
        """Mean-zero part as a flat vector, index ``position * N + component``."""
        return self.entries.reshape(-1).copy()

    @classmethod
    def from_flat(cls, vec, grid, dim):
        return cls(np.asarray(vec, dtype=float).reshape(grid.num_haar, dim), np.zeros(dim), grid)

    def norm_squared(self):
        return float(np.sum(self.entries**2) + np.sum(self.mean**2))


def _as_field(f, grid):
    f = np.asarray(f, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    if f.ndim != 2 or f.shape[0] != grid.num_cells:
        raise GridError(
            f"field has {f.shape[0] if f.ndim else 0} cells but the grid on {grid.window} "
            f"at depth {grid.depth} has {grid.num_cells}"
        )
    return f


def haar_decompose(f, grid):
    """Exact Haar transform of a leaf field ``f`` of shape ``(2**depth,)`` or ``(2**depth, N)``."""
    f = _as_field(f, grid)
    entries = np.empty((grid.num_haar, f.shape[1]))
    sums = f * grid.cell_width  # integrals over the current level's intervals
    for level in range(grid.depth - 1, -1, -1):
        left, right = sums[0::2], sums[1::2]
        scale = np.sqrt(grid.length / (1 << level))
        start = (1 << level) - 1
        entries[start:start + (1 << level)] = (right - left) / scale
        sums = left + right
    mean = sums[0] / np.sqrt(grid.length)
    return HaarCoefficients(entries, mean, grid)


def haar_reconstruct(c, grid=None):
    """Leaf-cell values of ``mean * |root|**-0.5 + sum_I c_I h_I``."""
    grid = c.grid if grid is None else grid
    if not grid.same_as(c.grid):
        raise GridError("coefficients belong to a different grid")
    vals = (c.mean / np.sqrt(grid.length))[None, :]
    for level in range(grid.depth):
        start = (1 << level) - 1
        d = c.entries[start:start + (1 << level)] / np.sqrt(grid.length / (1 << level))
        nxt = np.empty((2 * vals.shape[0], vals.shape[1]))
        nxt[0::2] = vals - d
        nxt[1::2] = vals + d
        vals = nxt
    return vals


def haar_matrix(grid):
    """Orthogonal change of basis from L2-normalized cell indicators to
    (root indicator, h_I in heap order), for scalar fields."""
    eye = np.eye(grid.num_cells)
    rows = np.empty((grid.num_cells, grid.num_cells))
    for j in range(grid.num_cells):
        c = haar_decompose(eye[j] / np.sqrt(grid.cell_width), grid)
        rows[:, j] = np.concatenate([c.mean, c.entries[:, 0]])
    return rows


def tree_distance(a, b, grid=None, coarsest=0):
    """Path length between ``a`` and ``b`` in the parent/child tree.

    ``grid`` supplies the parent map (needed for shifted grids); by default
    the standard map ``(n, k) -> (n - 1, k // 2)`` is used and ancestors stop
    at ``coarsest``.
    """
    if grid is not None and hasattr(grid, "coarsest"):
        coarsest = grid.coarsest
    parent = grid.parent if grid is not None and hasattr(grid, "parent") else DyadicInterval.parent
    dist = 0
    while a.level > b.level:
        a, dist = parent(a), dist + 1
    while b.level > a.level:
        b, dist = parent(b), dist + 1
    while a != b:
        if a.level <= coarsest:
            raise GridError(f"no common ancestor at or below level {coarsest}")
        a, b, dist = parent(a), parent(b), dist + 2
    return dist


@dataclass(frozen=True, eq=False)
class ShiftedGrid:
    """Translated and dilated dyadic lattice restricted to levels ``coarsest..finest``.

    Level-``n`` intervals are ``r * ([k 2^-n, (k+1) 2^-n) + omega_n)`` with
    ``omega_n = sum_{n < j <= finest} beta_j 2^-j``. ``beta[i]`` is the bit
    for level ``coarsest + 1 + i``.
    """

    r: float
    beta: np.ndarray
    window: tuple
    coarsest: int
    finest: int
    offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 1.0 <= self.r < 2.0:
            raise GridError(f"dilation r={self.r} outside [1, 2)")
        if self.finest <= self.coarsest:
            raise GridError("finest level must exceed coarsest level")
        beta = np.asarray(self.beta, dtype=np.int64).reshape(-1)
        if beta.size != self.finest - self.coarsest or np.any((beta != 0) & (beta != 1)):
            raise GridError(f"beta must be {self.finest - self.coarsest} bits")
        lo, hi = map(float, self.window)
        if not hi > lo:
            raise GridError(f"empty window {self.window}")
        levels = np.arange(self.coarsest, self.finest + 1)
        # omega_n for each level, exact in binary
        bits = beta.astype(float) * 2.0 ** -np.arange(self.coarsest + 1, self.finest + 1)
        offsets = np.array([bits[n - self.coarsest:].sum() for n in levels])
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "window", (lo, hi))
        object.__setattr__(self, "offsets", offsets)

    def bit(self, level):
        return int(self.beta[level - self.coarsest - 1])

    def offset(self, level):
        return self.offsets[level - self.coarsest]

    def width(self, level):
        return self.r * 2.0**-level

    def bounds(self, interval):
        w = 2.0**-interval.level
        a = self.r * (interval.index * w + self.offset(interval.level))
        return a, a + self.r * w

    def index_range(self, level):
        """Indices of level-``level`` intervals meeting the window."""
        scale = 2.0**level
        lo, hi = self.window
        first = int(np.floor((lo / self.r - self.offset(level)) * scale))
        last = int(np.ceil((hi / self.r - self.offset(level)) * scale)) - 1
        while self.bounds(DyadicInterval(level, first))[1] <= lo:
            first += 1
        while self.bounds(DyadicInterval(level, last))[0] >= hi:
            last -= 1
        return first, last

    def index_of(self, x, level):
        return np.floor((np.asarray(x) / self.r - self.offset(level)) * 2.0**level).astype(np.int64)

    def parent(self, interval):
        if interval.level <= self.coarsest:
            raise GridError(f"{interval} is at the coarsest level")
        return DyadicInterval(interval.level - 1, (interval.index - self.bit(interval.level)) // 2)

    def children(self, interval):
        """(left, right) halves; left is I_+."""
        if interval.level >= self.finest:
            raise GridError(f"{interval} is at the finest level")
        k = 2 * interval.index + self.bit(interval.level + 1)
        return DyadicInterval(interval.level + 1, k), DyadicInterval(interval.level + 1, k + 1)


def sample_dilation(rng):
    """Draw r from the density 1 / (r log 2) on [1, 2)."""
    return float(2.0 ** rng.random())


def sample_shifted_grid(seed, r, window=(0.0, 1.0), levels=(0, 6), beta=None):
    """Grid with i.i.d. fair shift bits from ``numpy.random.default_rng(seed)``.

    Pass ``beta`` explicitly to force particular bits (e.g. zeros for the
    standard grid).
    """
    coarsest, finest = levels
    if not 1.0 <= r < 2.0:
        raise GridError(f"dilation r={r} outside [1, 2)")
    if beta is None:
        beta = np.random.default_rng(seed).integers(0, 2, size=finest - coarsest)
    grid = ShiftedGrid(float(r), beta, tuple(window), coarsest, finest)
    lo, hi = grid.window
    if hi - lo < grid.width(finest):
        raise GridError("window is narrower than a finest-level interval")
    return grid
