"""Dense complex linear algebra helpers shared by every other module.

Matrices are plain ``numpy.ndarray`` objects of dtype ``complex128``; states
are 1-D arrays. Nothing here holds state, so all functions are safe to call
from concurrent workers as long as each worker owns its random generator.
"""

from __future__ import annotations

import warnings

import numpy as np

__all__ = [
    "DegenerateSolutionWarning",
    "as_matrix",
    "dagger",
    "error_metric",
    "fidelity",
    "is_unitary",
    "nearest_unitary",
    "numerical_rank",
    "optimal_global_phase",
    "random_state",
    "random_unitary",
    "tensor_product",
]

MAX_GRAM_SCHMIDT_RETRIES = 16
DEGENERATE_SINGULAR_VALUE = 1e-12


class DegenerateSolutionWarning(RuntimeWarning):
    """The nearest unitary of a rank-deficient matrix is not unique."""


def as_matrix(a) -> np.ndarray:
    """Return ``a`` as a finite 2-D complex array (1-D input becomes a column)."""
    m = np.asarray(a, dtype=complex)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got an array with shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return m


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def tensor_product(*factors) -> np.ndarray:
    """Kronecker product of one or more matrices, left factor most significant.

    ``(a ⊗ b)[i*rb + k, j*cb + l] == a[i, j] * b[k, l]``, which is the
    ordering that makes the first qubit the leading bit of the basis index.
    """
    if not factors:
        raise ValueError("tensor_product needs at least one factor")
    out = as_matrix(factors[0])
    for f in factors[1:]:
        out = np.kron(out, as_matrix(f))
    return out


def is_unitary(u, atol: float | None = None) -> bool:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    d = u.shape[0]
    if atol is None:
        atol = 1e-8 * d
    return bool(np.linalg.norm(dagger(u) @ u - np.eye(d)) <= atol)


def _modified_gram_schmidt(a: np.ndarray, tol: float) -> np.ndarray | None:
    q = np.array(a, dtype=complex, copy=True)
    n = q.shape[1]
    for j in range(n):
        for i in range(j):
            q[:, j] -= (np.vdot(q[:, i], q[:, j])) * q[:, i]
        norm = np.linalg.norm(q[:, j])
        if norm < tol:
            return None
        q[:, j] /= norm
    return q


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Random ``dim x dim`` unitary by Gram-Schmidt on a complex Gaussian matrix.

    Entries of the seed matrix are i.i.d. circularly-symmetric standard
    complex normals. Modified Gram-Schmidt is run on the columns; a draw that
    is numerically rank deficient is discarded and redrawn.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    for _ in range(MAX_GRAM_SCHMIDT_RETRIES):
        g = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
        q = _modified_gram_schmidt(g, tol=1e-10)
        if q is not None:
            # second pass restores orthogonality lost to rounding
            return _modified_gram_schmidt(q, tol=0.5)
    raise np.linalg.LinAlgError(
        f"Gram-Schmidt failed on {MAX_GRAM_SCHMIDT_RETRIES} consecutive draws"
    )


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform pure state: a normalized complex Gaussian vector."""
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def optimal_global_phase(estimate, reference) -> float:
    """Phase ``phi`` minimizing ``||reference - estimate * exp(i phi)||_F``.

    Returns 0 when ``tr(estimate^* reference)`` vanishes, where every phase
    is equally good.
    """
    t = np.vdot(np.asarray(estimate), np.asarray(reference))
    if t == 0:
        return 0.0
    return float(np.angle(t))


def error_metric(estimate, reference) -> float:
    """Global-phase-invariant distance between two unitaries.

    ``eps = ||reference - estimate * exp(i phi)||_F / sqrt(2 d)`` with the
    optimal ``phi``. It is 0 for matrices equal up to a global phase and 1 for
    Hilbert-Schmidt orthogonal ones.
    """
    est = np.asarray(estimate, dtype=complex)
    ref = np.asarray(reference, dtype=complex)
    if est.shape != ref.shape or est.ndim != 2:
        raise ValueError(f"shape mismatch: {est.shape} vs {ref.shape}")
    d = ref.shape[0]
    phi = optimal_global_phase(est, ref)
    eps = np.linalg.norm(ref - est * np.exp(1j * phi)) / np.sqrt(2 * d)
    # rounding can push the value a hair outside [0, 1]
    return float(min(max(eps, 0.0), 1.0))


def fidelity(estimate, reference) -> float:
    """Process fidelity of two unitaries, ``1 - eps**2``."""
    return 1.0 - error_metric(estimate, reference) ** 2


def numerical_rank(a, rtol: float = 1e-8) -> int:
    """Number of singular values above ``rtol`` times the largest one."""
    s = np.linalg.svd(np.asarray(a, dtype=complex), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def nearest_unitary(b, return_flag: bool = False):
    """Unitary factor ``U V^*`` of the SVD ``b = U S V^*``.

    This is the closest unitary to ``b`` in Frobenius norm. If a singular
    value is below ``1e-12`` the answer is not unique; a
    :class:`DegenerateSolutionWarning` is emitted unless ``return_flag`` is
    set, in which case ``(unitary, degenerate)`` is returned instead.
    """
    b = as_matrix(b)
    if b.shape[0] != b.shape[1]:
        raise ValueError(f"nearest_unitary needs a square matrix, got {b.shape}")
    u, s, vh = np.linalg.svd(b)
    degenerate = bool(s.size and s[-1] < DEGENERATE_SINGULAR_VALUE)
    q = u @ vh
    if return_flag:
        return q, degenerate
    if degenerate:
        warnings.warn("input is rank deficient; nearest unitary is not unique",
                      DegenerateSolutionWarning, stacklevel=2)
    return q
