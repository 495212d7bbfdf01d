"""Stopping-time generations, free families and the Delta_j / S_j pieces.

A proper subinterval ``I`` of ``J`` stops when any of

1. ``||<V^-1>_J^1/2 <U>_I <V^-1>_J^1/2|| > lam``
2. ``||<V^-1>_J^-1/2 <V^-1>_I <V^-1>_J^-1/2|| > lam``
3. ``||<U>_J^-1/2 <U>_I <U>_J^-1/2|| > lam``

holds. Intervals are scanned top-down and descent stops at the first
violation, so the selected intervals are maximal. Leaf cells are tested as
well; they can stop but have no Haar subintervals of their own.
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .dyadic import DyadicInterval, haar_decompose, haar_reconstruct
from .matops import psd_inv_sqrt, psd_sqrt, sym_spectral_norm
from .operators import block_multiply, make_DW, pointwise_weight_half
from .weights import _require_compatible, inverse_weight


def _ratios(U, Vinv, J, level):
    """Three condition norms for every level-``level`` subinterval of ``J``."""
    uJ = U.level_averages[J.level][J.index]
    vJ = Vinv.level_averages[J.level][J.index]
    span = 1 << (level - J.level)
    sl = slice(J.index * span, (J.index + 1) * span)
    uI = U.level_averages[level][sl]
    vI = Vinv.level_averages[level][sl]
    a, b, c = psd_sqrt(vJ), psd_inv_sqrt(vJ), psd_inv_sqrt(uJ)
    return np.stack([sym_spectral_norm(a @ uI @ a),
                     sym_spectral_norm(b @ vI @ b),
                     sym_spectral_norm(c @ uI @ c)], axis=1)


def _children(U, Vinv, lam, J):
    found = []
    blocked = np.zeros(1, bool)  # descendants of already selected intervals
    for level in range(J.level + 1, U.depth + 1):
        blocked = np.repeat(blocked, 2)
        bad = np.any(_ratios(U, Vinv, J, level) > lam, axis=1) & ~blocked
        base = J.index << (level - J.level)
        found.extend(DyadicInterval(level, base + int(i)) for i in np.nonzero(bad)[0])
        blocked |= bad
    return found


def stopping_children(U, V, lam, J=DyadicInterval(0, 0)):
    """Maximal proper subintervals of ``J`` violating one of the three conditions."""
    if not lam > 1:
        raise ValueError("lambda must exceed 1")
    _require_compatible(U, V)
    U.grid.validate(J, allow_leaf=True)
    return _children(U, inverse_weight(V), lam, J)


@dataclass
class StoppingTree:
    lam: float
    root: DyadicInterval
    generations: list  # generations[k - 1] is J_{lam,k}
    free_families: list  # free_families[k - 1] is F_{lam,k}
    children: dict = field(repr=False)
    U: object = field(repr=False, default=None)
    V: object = field(repr=False, default=None)

    @property
    def depth(self):
        return self.U.depth

    def family_mask(self, j):
        """Boolean mask over Haar positions for ``F_j`` (1-based)."""
        mask = np.zeros(self.U.grid.num_haar, bool)
        if 1 <= j <= len(self.free_families):
            mask[[I.position for I in self.free_families[j - 1]]] = True
        return mask

    def region_mask(self, k):
        """Leaf cells of ``U J_{lam,k}``; ``k = 0`` is the root."""
        cells = np.zeros(self.U.grid.num_cells, bool)
        intervals = [self.root] if k == 0 else (self.generations[k - 1] if k <= len(self.generations) else [])
        for I in intervals:
            cells[self.U.grid.cell_slice(I)] = True
        return cells


def _free_family(J, stops, depth):
    fam = []
    for level in range(J.level, depth):
        base = J.index << (level - J.level)
        for k in range(base, base + (1 << (level - J.level))):
            I = DyadicInterval(level, k)
            if not any(S.contains(I) for S in stops):
                fam.append(I)
    return fam


def build_tree(U, V, lam, J=DyadicInterval(0, 0), k_max=None):
    """Iterate the stopping rule from ``J``.

    Stops after ``k_max`` generations when given; the Haar subintervals of
    the last generation then form one final free family so the families
    still partition the subintervals of ``J``.
    """
    if not lam > 1:
        raise ValueError("lambda must exceed 1")
    _require_compatible(U, V)
    U.grid.validate(J, allow_leaf=True)
    Vinv = inverse_weight(V)
    generations, families, children = [], [], {}
    current = [J]
    while current:
        if k_max is not None and len(generations) >= k_max:
            families.append([I for S in current for I in _free_family(S, [], U.depth)])
            break
        nxt, fam = [], []
        for S in current:
            kids = _children(U, Vinv, lam, S)
            children[S] = kids
            fam.extend(_free_family(S, kids, U.depth))
            nxt.extend(kids)
        families.append(fam)
        if nxt:
            generations.append(nxt)
        current = nxt
    while families and not families[-1] and len(families) > 1:
        families.pop()
    return StoppingTree(float(lam), J, generations, families, children, U, V)


@dataclass
class DecayReport:
    lam: float
    counts: list
    measures: list
    delta_fit: float
    monotone: bool
    passed: bool
    trace_bound_single: float
    trace_bound_union: float

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "count", "measure_fraction"])
        for k, (n, m) in enumerate(zip(self.counts, self.measures), start=1):
            w.writerow([k, n, repr(float(m))])
        return buf.getvalue()

    def summary(self):
        return {"lambda": self.lam, "delta_fit": self.delta_fit, "pass": self.passed,
                "measures": [float(m) for m in self.measures],
                "trace_bound_single": self.trace_bound_single,
                "trace_bound_union": self.trace_bound_union}

    def to_json(self):
        return json.dumps(self.summary())


def decay_report(tree):
    """Generation measures ``m_k = |U J_k| / |J|`` and ``delta = max_k m_k^(1/k)``.

    Also reports the trace-norm counting bounds on ``m_1``: ``N / lam`` for a
    single condition and ``N (C + 2) / lam`` for the union of all three,
    ``C`` the measured joint A2 constant.
    """
    from .conditions import joint_a2

    grid = tree.U.grid
    total = grid.interval_length(tree.root)
    counts = [len(g) for g in tree.generations]
    measures = [sum(grid.interval_length(I) for I in g) / total for g in tree.generations]
    delta = max((m ** (1.0 / k) for k, m in enumerate(measures, start=1) if m > 0), default=0.0)
    monotone = all(b <= a for a, b in zip(measures, measures[1:]))
    N = tree.U.N
    C = joint_a2(tree.U, tree.V).constant
    return DecayReport(tree.lam, counts, measures, float(delta), monotone,
                       bool(monotone and delta < 1.0), N / tree.lam, N * (C + 2) / tree.lam)


def delta_projection(tree, j, c):
    """Restriction of the Haar coefficients to ``F_j``; the mean slot is dropped."""
    return c.with_entries(c.entries * tree.family_mask(j)[:, None])


def s_projection(U, V, tree, j, c):
    """``S_j c = U^1/2 R(D_{V^-1} Delta_j c)`` as a leaf field."""
    D = make_DW(inverse_weight(V))
    return pointwise_weight_half(U, 1, haar_reconstruct(block_multiply(D, delta_projection(tree, j, c))))


def cotlar_offdiag(U, V, tree, j, k, f):
    """``(int over U J_{k-1} of |S_j f|^2, ||Delta_j f||^2)`` for ``k > j``."""
    if k <= j:
        raise ValueError("need k > j")
    c = haar_decompose(f, U.grid)
    s = s_projection(U, V, tree, j, c)
    region = tree.region_mask(k - 1)
    lhs = float(np.sum(s[region] ** 2) * U.grid.cell_width)
    return lhs, delta_projection(tree, j, c).norm_squared()


def cotlar_table(U, V, tree, f):
    """Rows ``(j, k, lhs, reference, ratio)`` for all ``1 <= j < k <= len(families) + 1``."""
    rows = []
    nfam = len(tree.free_families)
    for j in range(1, nfam + 1):
        for k in range(j + 1, nfam + 2):
            lhs, ref = cotlar_offdiag(U, V, tree, j, k, f)
            rows.append((j, k, lhs, ref, lhs / ref if ref > 0 else 0.0))
    return rows


def s_matrix(U, V, tree, j):
    """Dense matrix of ``S_j`` (Haar coefficients -> leaf fields), orthonormal coordinates."""
    from .operators import haar_to_field_matrix

    return haar_to_field_matrix(lambda c: s_projection(U, V, tree, j, c), U.grid, U.N)


def pointwise_bound_max(tree):
    """Largest of the three condition norms over free cells, all stopping nodes.

    For each node ``J`` (root and every stopping interval) the free cells
    are the leaf cells of ``J`` outside its stopping children.
    """
    U, grid = tree.U, tree.U.grid
    Vinv = inverse_weight(tree.V)
    worst = 0.0
    nodes = [tree.root] + [I for g in tree.generations for I in g]
    for J in nodes:
        ratios = _ratios(U, Vinv, J, U.depth) if J.level < U.depth else None
        if ratios is None:
            continue
        free = np.ones(ratios.shape[0], bool)
        base = J.index << (U.depth - J.level)
        for S in tree.children.get(J, []):
            sl = grid.cell_slice(S)
            free[sl.start - base:sl.stop - base] = False
        if np.any(free):
            worst = max(worst, float(np.max(ratios[free])))
    return worst
