"""Measured weight-condition constants with witnesses.

Every scan covers all dyadic intervals of the weight's mesh, levels 0
through ``depth`` (leaf cells included). Witness ties go to the smallest
``(level, index)``, which is heap order, so a plain ``argmax`` suffices.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .dyadic import DyadicInterval
from .matops import logdet, psd_inv_sqrt, psd_sqrt, symmetrize
from .weights import _require_compatible, inverse_weight

RH_LADDER = (2.25, 2.5, 3.0, 4.0, 6.0, 8.0)
DEFAULT_RH_SAMPLES = 64


@dataclass
class ConditionReport:
    condition: str
    constant: float
    witness_interval: DyadicInterval
    witness_direction: np.ndarray = None
    parameters: dict = field(default_factory=dict)

    def to_dict(self):
        d = self.witness_direction
        return {
            "condition": self.condition,
            "constant": float(self.constant),
            "witness": {"level": self.witness_interval.level, "index": self.witness_interval.index},
            "direction": None if d is None else [float(v) for v in d],
            "r": self.parameters.get("r"),
            "depth": self.parameters.get("depth"),
        }

    def to_json(self):
        return json.dumps(self.to_dict())


def _all_averages(W):
    return np.concatenate(W.level_averages)


def _witness(values):
    pos = int(np.argmax(values))
    return pos, DyadicInterval.from_position(pos)


def joint_a2_values(U, V):
    """``||<V^-1>_I^1/2 <U>_I <V^-1>_I^1/2||`` for every interval, heap order."""
    _require_compatible(U, V)
    S = psd_sqrt(_all_averages(inverse_weight(V)))
    M = symmetrize(S @ _all_averages(U) @ S)
    vals, vecs = np.linalg.eigh(M)
    return vals[:, -1], vecs[:, :, -1]


def joint_a2(U, V):
    values, vecs = joint_a2_values(U, V)
    pos, interval = _witness(values)
    return ConditionReport("joint_a2", float(values[pos]), interval, vecs[pos],
                           {"depth": U.depth})


def a2zero_values(W):
    # <log det W>_I averaged with the same pairwise tree as the matrices
    ld = logdet(W.cells)
    levels = [ld]
    for _ in range(W.depth):
        levels.append(0.5 * (levels[-1][0::2] + levels[-1][1::2]))
    mean_ld = np.concatenate(levels[::-1])
    return logdet(_all_averages(W)) - mean_ld


def a2zero(W):
    """``max_I det<W>_I / exp(<log det W>_I)``, evaluated in log space."""
    logs = a2zero_values(W)
    pos, interval = _witness(logs)
    return ConditionReport("a2zero", float(np.exp(logs[pos])), interval, None, {"depth": W.depth})


def sphere_directions(N, count=DEFAULT_RH_SAMPLES, seed=0):
    y = np.random.default_rng(seed).standard_normal((count, N))
    return y / np.linalg.norm(y, axis=1, keepdims=True)


def reverse_holder_values(U, r, samples=DEFAULT_RH_SAMPLES, seed=0):
    """Per-interval RH values and maximizing directions (heap order)."""
    if not r > 2:
        raise ValueError(f"reverse Hoelder exponent must exceed 2, got {r}")
    N = U.N
    fixed = np.vstack([np.eye(N), sphere_directions(N, samples, seed)]) if samples else np.eye(N)
    values, directions = [], []
    for n, avgs in enumerate(U.level_averages):
        blocks = U.cells.reshape(1 << n, -1, N, N)
        A = psd_inv_sqrt(avgs)
        _, eigvecs = np.linalg.eigh(avgs)
        Y = np.concatenate([np.broadcast_to(fixed, (1 << n,) + fixed.shape),
                            np.swapaxes(eigvecs, 1, 2)], axis=1)  # (2^n, K, N)
        Z = Y @ A  # rows are A y (A symmetric)
        q = np.einsum("ikn,ijnp,ikp->ijk", Z, blocks, Z)
        moment = np.mean(np.clip(q, 0.0, None) ** (r / 2), axis=1) ** (1.0 / r)
        best = np.argmax(moment, axis=1)
        values.append(moment[np.arange(1 << n), best])
        directions.append(Y[np.arange(1 << n), best])
    return np.concatenate(values), np.concatenate(directions)


def reverse_holder(U, r, samples=DEFAULT_RH_SAMPLES, seed=0):
    """Largest ``((1/|I|) int_I ||U^1/2(x) <U>_I^-1/2 y||^r dx)^(1/r)`` found.

    Candidate directions ``y`` are the eigenvectors of ``<U>_I`` plus a fixed
    set (canonical basis vectors with ``samples`` seeded sphere points). The
    result is a lower bound for the supremum over all unit ``y`` (exact
    when N = 1).
    """
    values, dirs = reverse_holder_values(U, r, samples, seed)
    pos, interval = _witness(values)
    return ConditionReport("reverse_holder", float(values[pos]), interval, dirs[pos],
                           {"r": float(r), "depth": U.depth, "samples": samples})


def rh_exponent_search(U, budget, ladder=RH_LADDER, samples=DEFAULT_RH_SAMPLES, seed=0):
    """Largest ladder exponent whose RH constant stays within ``budget``.

    Returns ``(None, None)`` when even the smallest exponent fails.
    """
    if not budget > 1:
        raise ValueError("budget must exceed 1")
    best = (None, None)
    for r in sorted(ladder):
        report = reverse_holder(U, r, samples, seed)
        if report.constant > budget:
            break
        best = (r, report)
    return best
