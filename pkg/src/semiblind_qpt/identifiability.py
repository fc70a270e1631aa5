"""When can a unitary be recovered from states known only up to column phases?

For a matrix ``x`` of unit-norm columns, two columns are linked when their
dot product does not vanish (its modulus is at least ``threshold``). The
closure of a column is the set of columns reachable from it through links.
A unitary ``M`` is determined up to a global phase by the pairs
``(x_l, M x_l e^{i xi_l})`` with unknown ``xi_l`` exactly when every closure
spans the full space. Equivalently, the only matrices commuting with all the
projectors ``x_l x_l^*`` are multiples of the identity.

When the condition fails, :func:`build_counterexample` constructs a second
unitary that maps every column to the same state, up to a phase, and so
cannot be told apart from ``M``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .linalg import dagger, error_metric, is_unitary, numerical_rank
from .qpt import first_maximum

__all__ = [
    "ORTH_TOL",
    "IdentifiabilityReport",
    "OrthogonalityGraph",
    "build_counterexample",
    "check_commutant",
    "check_nsc",
    "check_sufficient",
    "closure_partition",
    "column_phase_offsets",
    "commutant_dimension",
    "f_s_closure",
    "identifiability_report",
]

ORTH_TOL = 1e-10
RANK_RTOL = 1e-8


def _columns(x) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim == 1:
        x = x[:, None]
    return x


@dataclass
class OrthogonalityGraph:
    adjacency: np.ndarray
    threshold: float

    @classmethod
    def from_columns(cls, x, threshold: float = ORTH_TOL) -> "OrthogonalityGraph":
        x = _columns(x)
        g = np.abs(dagger(x) @ x)
        adj = g >= threshold
        np.fill_diagonal(adj, True)
        return cls(adj, threshold)

    @property
    def n_x(self) -> int:
        return self.adjacency.shape[0]


def f_s_closure(x, seed_column: int, threshold: float = ORTH_TOL) -> list[int]:
    """Indices of the columns reachable from ``seed_column`` (0-based, sorted).

    Repeatedly adds every column not orthogonal to one already in the set,
    stopping at the fixpoint, which is reached after at most ``n_x`` rounds.
    """
    adj = OrthogonalityGraph.from_columns(x, threshold).adjacency
    members = np.zeros(adj.shape[0], dtype=bool)
    members[seed_column] = True
    for _ in range(adj.shape[0]):
        grown = adj[members].any(axis=0)
        if np.array_equal(grown, members):
            break
        members = grown
    return [int(i) for i in np.flatnonzero(members)]


def closure_partition(x, threshold: float = ORTH_TOL) -> list[list[int]]:
    """Connected components of the non-orthogonality graph, ordered by first index."""
    n_x = _columns(x).shape[1]
    seen: set[int] = set()
    blocks = []
    for l in range(n_x):
        if l in seen:
            continue
        block = f_s_closure(x, l, threshold)
        seen.update(block)
        blocks.append(block)
    return blocks


@dataclass
class IdentifiabilityReport:
    satisfies_nsc: bool
    satisfies_sufficient: bool
    per_seed_ranks: list[tuple[int, int]]
    margin: tuple[float, float]
    anchor: int | None = None
    blocks: list[list[int]] = field(default_factory=list)

    def __post_init__(self):
        assert not self.satisfies_sufficient or self.satisfies_nsc


def check_sufficient(x, threshold: float = ORTH_TOL) -> tuple[bool, int | None]:
    """Full rank plus one column linked to every other column.

    Returns ``(holds, anchor)``; ``anchor`` is the column whose smallest
    |dot product| with the others is largest (smallest index on ties), or
    ``None`` when no column is linked to all others.
    """
    x = _columns(x)
    d, n_x = x.shape
    g = np.abs(dagger(x) @ x)
    np.fill_diagonal(g, np.inf)
    mins = g.min(axis=1)
    best = first_maximum(mins)
    anchor = best if mins[best] >= threshold else None
    full_rank = numerical_rank(x, RANK_RTOL) == d
    return bool(full_rank and anchor is not None), anchor


def identifiability_report(x, threshold: float = ORTH_TOL) -> IdentifiabilityReport:
    x = _columns(x)
    d, n_x = x.shape
    blocks = closure_partition(x, threshold)
    ranks = []
    for block in blocks:
        r = numerical_rank(x[:, block], RANK_RTOL)
        ranks.extend((l, r) for l in block)
    ranks.sort()
    nsc = all(r == d for _, r in ranks)
    suff, anchor = check_sufficient(x, threshold)
    s = np.linalg.svd(x, compute_uv=False)
    sigma_min = float(s[d - 1]) if s.size >= d else 0.0
    if n_x > 1 and anchor is not None:
        g = np.abs(dagger(x) @ x[:, anchor])
        g[anchor] = np.inf
        anchor_dot = float(g.min())
    else:
        anchor_dot = float("inf") if n_x == 1 else 0.0
    return IdentifiabilityReport(nsc, suff, ranks, (sigma_min, anchor_dot), anchor, blocks)


def check_nsc(x, threshold: float = ORTH_TOL) -> tuple[bool, IdentifiabilityReport]:
    """Every closure spans the space. Returns ``(holds, report)``."""
    report = identifiability_report(x, threshold)
    return report.satisfies_nsc, report


def check_commutant(x, threshold: float = ORTH_TOL) -> bool:
    """True iff only multiples of the identity commute with every ``x_l x_l^*``.

    Columns in different blocks of the closure partition are mutually
    orthogonal, so a matrix acting as a different scalar on the span of each
    block commutes with all projectors. Within one block, any commuting
    matrix must share each column as an eigenvector and, because linked
    columns are not orthogonal, with one common eigenvalue. Hence the
    commutant is trivial exactly when a single block spans the space.
    """
    x = _columns(x)
    d = x.shape[0]
    blocks = closure_partition(x, threshold)
    return len(blocks) == 1 and numerical_rank(x, RANK_RTOL) == d


def commutant_dimension(x, rtol: float = 1e-9) -> int:
    """Dimension of the algebra of matrices commuting with all ``x_l x_l^*``.

    Computed directly as the null space of the linear map
    ``C -> (C P_l - P_l C)_l`` on ``d x d`` matrices. It is 1 exactly when
    the commutant holds only multiples of the identity.
    """
    x = _columns(x)
    d = x.shape[0]
    eye = np.eye(d)
    blocks = []
    for l in range(x.shape[1]):
        p = np.outer(x[:, l], np.conj(x[:, l]))
        # row-major vec: vec(C P) = (I kron P^T) vec(C), vec(P C) = (P kron I) vec(C)
        blocks.append(np.kron(eye, p.T) - np.kron(p, eye))
    op = np.vstack(blocks) if blocks else np.zeros((1, d * d))
    return int(scipy.linalg.null_space(op, rcond=rtol).shape[1])


def column_phase_offsets(m, m2, x) -> np.ndarray:
    """Phases ``xi`` with ``M x_l = M2 x_l e^{-i xi_l}`` (meaningful only if they exist)."""
    x = _columns(x)
    a = np.asarray(m) @ x
    b = np.asarray(m2) @ x
    return np.angle(np.sum(np.conj(a) * b, axis=0))


def _orthonormal_basis(a) -> np.ndarray:
    return scipy.linalg.orth(np.asarray(a, dtype=complex), rcond=RANK_RTOL)


def build_counterexample(x, m, phi: float, threshold: float = ORTH_TOL) -> np.ndarray:
    """Unitary ``M2`` that differs from ``m`` yet maps each column of ``x`` alike.

    If ``x`` is rank deficient, ``M2 = M (I + (e^{i phi} - 1) v v^*)`` with
    ``v`` a unit vector orthogonal to every column, so ``M2 x_l = M x_l``.
    Otherwise some closure ``S`` spans a proper subspace with orthonormal
    basis ``P_s``; with ``P_f`` a basis of its complement,
    ``M2 = M (e^{i phi} P_s P_s^* + P_f P_f^*)`` multiplies the images of the
    columns in ``S`` by ``e^{i phi}`` and leaves the others unchanged.

    Raises ``ValueError`` if ``x`` satisfies the identifiability condition or
    ``phi`` is a multiple of 2 pi.
    """
    x = _columns(x)
    m = np.asarray(m, dtype=complex)
    d = x.shape[0]
    if np.isclose(np.exp(1j * phi), 1.0, atol=1e-12):
        raise ValueError("phi must not be a multiple of 2*pi: M2 would equal M")
    ok, report = check_nsc(x, threshold)
    if ok:
        raise ValueError("columns satisfy the identifiability condition; no counterexample exists")
    phase = np.exp(1j * phi)
    if numerical_rank(x, RANK_RTOL) < d:
        kernel = scipy.linalg.null_space(dagger(x), rcond=RANK_RTOL)
        v = kernel[:, -1]
        # P_v = [V_hker, v] is unitary, so M P_v = [C1, c2]
        m2 = m @ (np.eye(d) + (phase - 1) * np.outer(v, np.conj(v)))
        xi = np.zeros(x.shape[1])
    else:
        block = next(b for b in report.blocks if numerical_rank(x[:, b], RANK_RTOL) < d)
        p_s = _orthonormal_basis(x[:, block])
        proj_s = p_s @ dagger(p_s)
        proj_f = np.eye(d) - proj_s
        m2 = m @ (phase * proj_s + proj_f)
        xi = np.zeros(x.shape[1])
        xi[block] = phi
    assert is_unitary(m2, 1e-9 * d)
    assert error_metric(m2, m) > 0
    d_star = np.diag(np.exp(-1j * xi))
    assert np.allclose(m @ x, m2 @ x @ d_star, atol=1e-9)
    return m2
