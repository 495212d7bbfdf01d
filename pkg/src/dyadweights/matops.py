"""Small symmetric positive (semi)definite matrix numerics.

All functions accept a single ``(N, N)`` matrix or a stack ``(..., N, N)``
of them; stacked input is handled with batched ``numpy.linalg.eigh``.
"""

import logging

import numpy as np

logger = logging.getLogger(__name__)

SYM_TOL = 1e-12
NEG_TOL = 1e-10
SINGULAR_TOL = 1e-12


class MatrixError(ValueError):
    """Raised for matrices that violate a positivity or symmetry precondition."""


class ConvergenceError(RuntimeError):
    """Power iteration failed; carries the last iterate and its residual."""

    def __init__(self, message, iterate, residual):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


def symmetrize(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _check_symmetric(M):
    scale = np.max(np.abs(M)) if M.size else 0.0
    asym = np.max(np.abs(M - np.swapaxes(M, -1, -2))) if M.size else 0.0
    if asym > SYM_TOL * max(scale, 1.0):
        raise MatrixError(f"matrix is not symmetric (max asymmetry {asym:.3e})")


def _eigh(M):
    M = np.asarray(M, dtype=float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise MatrixError(f"expected square matrices, got shape {M.shape}")
    _check_symmetric(M)
    return np.linalg.eigh(symmetrize(M))


def _recompose(vals, vecs):
    return symmetrize((vecs * vals[..., None, :]) @ np.swapaxes(vecs, -1, -2))


def psd_sqrt(M):
    """Unique PSD square root. Negatives down to -1e-10*||M|| are clamped to 0."""
    vals, vecs = _eigh(M)
    top = np.max(np.abs(vals), axis=-1, keepdims=True)
    bad = vals < -NEG_TOL * np.maximum(top, np.finfo(float).tiny)
    if np.any(bad):
        raise MatrixError(f"matrix has negative eigenvalue {vals[bad].min():.6e}")
    return _recompose(np.sqrt(np.clip(vals, 0.0, None)), vecs)


def _positive_eigh(M):
    vals, vecs = _eigh(M)
    top = np.max(np.abs(vals), axis=-1, keepdims=True)
    bad = vals <= SINGULAR_TOL * top
    if np.any(bad) or np.any(top == 0):
        offending = vals[bad].min() if np.any(bad) else 0.0
        raise MatrixError(f"matrix is singular or indefinite: eigenvalue {offending:.6e}")
    return vals, vecs


def psd_inv_sqrt(M):
    vals, vecs = _positive_eigh(M)
    return _recompose(1.0 / np.sqrt(vals), vecs)


def psd_power(M, p):
    """M**p for strictly positive definite M (any real p)."""
    vals, vecs = _positive_eigh(M)
    return _recompose(vals**p, vecs)


def logdet(M):
    vals, _ = _positive_eigh(M)
    return np.sum(np.log(vals), axis=-1)


def spectral_norm(M):
    """Largest singular value of a matrix (or of each matrix in a stack)."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    s = np.linalg.svd(M, compute_uv=False)
    return s[..., 0] if s.ndim > 1 else float(s[0])


def sym_spectral_norm(M):
    """Spectral norm of symmetric matrices via eigenvalues (cheaper than SVD)."""
    vals = np.linalg.eigvalsh(symmetrize(M))
    return np.max(np.abs(vals), axis=-1)


def _as_operator(op, dim, adjoint, seed):
    if isinstance(op, np.ndarray) or hasattr(op, "__array__") and not callable(op):
        A = np.asarray(op, dtype=float)
        return (lambda x: A @ x), (lambda y: A.T @ y), A.shape[1], A.shape[0]
    if dim is None:
        raise ValueError("dim is required when the operator is a callable")
    out_dim = np.asarray(op(np.zeros(dim))).shape[0]
    if adjoint is None:
        # no adjoint supplied: assemble the matrix column by column
        A = np.column_stack([op(e) for e in np.eye(dim)]) if dim else np.zeros((out_dim, 0))
        return (lambda x: A @ x), (lambda y: A.T @ y), dim, out_dim
    _check_linear(op, dim, seed)
    return op, adjoint, dim, out_dim


def _check_linear(op, dim, seed, trials=2):
    rng = np.random.default_rng([seed, 0x1EAF])
    for _ in range(trials):
        x, y = rng.standard_normal((2, dim))
        a, b = rng.standard_normal(2)
        lhs = np.asarray(op(a * x + b * y))
        rhs = a * np.asarray(op(x)) + b * np.asarray(op(y))
        scale = max(np.linalg.norm(lhs), np.linalg.norm(rhs), 1.0)
        if np.linalg.norm(lhs - rhs) > 1e-8 * scale:
            raise ValueError("operator failed the probabilistic linearity check")


def _power(apply, adjoint, x, tol, max_iter):
    """Power iteration on A^T A from unit vector x; returns (sigma, x, converged, residual)."""
    sigma_old = None
    residual = np.inf
    for _ in range(max_iter):
        y = adjoint(apply(x))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0, x, False, 0.0
        sigma = np.sqrt(ny)  # ||A^T A x|| -> sigma_max^2 for converged x
        x = y / ny
        if sigma_old is not None:
            residual = abs(sigma - sigma_old) / sigma
            if residual < tol:
                # Rayleigh quotient on the final iterate
                return float(np.linalg.norm(apply(x))), x, True, residual
        sigma_old = sigma
    return float(np.linalg.norm(apply(x))), x, False, residual


def largest_singular_value(op, dim=None, adjoint=None, tol=1e-9, max_iter=10000, seed=0,
                           probe_iter=50):
    """Dominant singular value by power iteration on A^T A.

    ``op`` is either a dense matrix or a callable computing ``A @ x``; in the
    callable case pass ``adjoint`` for ``A.T @ y`` or the matrix is assembled
    from ``dim`` basis vectors.

    Iteration starts from the normalized all-ones vector. The run counts as
    stagnated when it fails to converge (a collapse to zero included) or when
    a seeded random probe run for ``probe_iter`` steps finds a larger value,
    since the all-ones start can be orthogonal to the dominant singular
    subspace. One restart is then made from the probe iterate.
    """
    apply, adj, dim, out_dim = _as_operator(op, dim, adjoint, seed)
    if dim == 0 or out_dim == 0:
        return 0.0
    x0 = np.ones(dim) / np.sqrt(dim)
    sigma, x, converged, residual = _power(apply, adj, x0, tol, max_iter)

    rng = np.random.default_rng(seed)
    z = rng.standard_normal(dim)
    z /= np.linalg.norm(z)
    probe, z_it, _, _ = _power(apply, adj, z, 0.0, probe_iter)
    stagnated = not converged or probe > sigma * (1.0 + 10 * tol)
    if not stagnated:
        return sigma
    logger.debug("power iteration stagnated (sigma=%g, probe=%g); restarting", sigma, probe)
    if probe == 0.0 and sigma == 0.0:
        return 0.0
    sigma2, x2, converged2, residual2 = _power(apply, adj, z_it, tol, max_iter)
    if not converged2:
        raise ConvergenceError(
            f"power iteration did not converge in {max_iter} iterations "
            f"(relative change {residual2:.3e})",
            iterate=x2,
            residual=residual2,
        )
    return max(sigma2, sigma if converged else 0.0)
