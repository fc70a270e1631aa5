"""Unitary process estimation from estimated input/output state pairs.

The estimated states are arranged in two ``d x n_x`` matrices: column ``l``
of ``x_hat`` is an estimate of a state and column ``l`` of ``y_hat`` an
estimate of the same state after one more application of the process. Each
column is only known up to its own global phase, so the relative phases
between ``y_hat`` columns are first recovered from inner products (which a
unitary preserves); the re-phased outputs are then matched to the inputs by
the unitary solving the constrained total least squares problem, i.e. the
unitary factor of the SVD of ``y_tilde @ x_hat^*``.

Column indices are 0-based throughout. States are labelled ``"M^k v<j>"``
(``"M v<j>"`` for ``k = 1``) with 1-based ``j`` and ``k``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .linalg import dagger, nearest_unitary, numerical_rank
from .measurement import CountsFile, CountsRecord, MeasurementSet
from .qst import N_RESTARTS, QstEstimate, qst_batch

__all__ = [
    "B_ORTH",
    "IdentifiabilityFailure",
    "OrthogonalPairError",
    "PhaseAssignment",
    "QptProblem",
    "QptResult",
    "assemble_problem",
    "choose_anchor",
    "parse_state_label",
    "pairwise_phase",
    "qpt_from_estimates",
    "qpt_pipeline",
    "recover_phases",
    "solve_unitary_tls",
    "sqpt_pipeline",
    "state_label",
]

B_ORTH = 0.05
# |dot| below this counts as orthogonal once b_orth has been relaxed
ZERO_TOL = 1e-10
SPAN_RTOL = 1e-8
# dot products closer than this count as tied (rounding noise)
TIE_TOL = 1e-12


class OrthogonalPairError(ValueError):
    """The output dot product needed for a relative phase vanishes."""


class IdentifiabilityFailure(RuntimeError):
    """Phase recovery cannot connect all columns: the process is not identifiable."""

    def __init__(self, unresolved: Sequence[int], resolved: Sequence[int]):
        self.unresolved = list(unresolved)
        self.resolved = list(resolved)
        super().__init__(
            "identifiability violated: the phases of columns "
            f"{self.unresolved} cannot be linked to the anchor and the linked "
            f"columns {self.resolved} do not span the whole space")


_LABEL_RE = re.compile(r"^\s*M(?:\s*\^\s*(\d+))?\s*v_?(\d+)\s*$")


def state_label(j: int, k: int) -> str:
    return f"M v{j}" if k == 1 else f"M^{k} v{j}"


def parse_state_label(label: str) -> tuple[int, int]:
    """``"M^2 v3"`` -> ``(3, 2)``: (initial state index, number of delays)."""
    m = _LABEL_RE.match(label)
    if m is None:
        raise ValueError(f"state label {label!r} is not of the form 'M^k vj'")
    k = int(m.group(1)) if m.group(1) else 1
    return int(m.group(2)), k


@dataclass
class QptProblem:
    x_hat: np.ndarray
    y_hat: np.ndarray
    n_i: int
    n_s: int
    column_map: list[tuple[int, int]]

    @property
    def n_x(self) -> int:
        return self.x_hat.shape[1]

    @property
    def dim(self) -> int:
        return self.x_hat.shape[0]


@dataclass
class PhaseAssignment:
    """Relative output phases; ``xi_hat[l]`` is NaN for dropped columns."""

    xi_hat: np.ndarray
    anchor_index: int
    dropped_columns: list[int] = field(default_factory=list)
    b_orth: float = B_ORTH
    relaxed: bool = False
    direct: bool = False
    passes: int = 0

    @property
    def kept_columns(self) -> list[int]:
        return [i for i in range(self.xi_hat.size) if i not in set(self.dropped_columns)]


@dataclass
class QptResult:
    m_hat: np.ndarray
    phases: PhaseAssignment | None
    tls_residual: float
    degenerate: bool
    problem: QptProblem | None = None
    estimates: list[QstEstimate] | None = None


def _unit_columns(a) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    if a.ndim == 1:
        a = a[:, None]
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0):
        raise ValueError("zero column in state matrix")
    return a / norms


def assemble_problem(estimates: Mapping[tuple[int, int], object], n_i: int,
                     n_s: int) -> QptProblem:
    """Arrange per-(j, k) state estimates into ``x_hat``/``y_hat``.

    ``estimates`` maps 1-based ``(j, k)`` to a state vector or
    :class:`QstEstimate`. Column ``l = (n_s - 1)(j - 1) + (k - 1)`` of
    ``x_hat`` holds ``(j, k)`` and the same column of ``y_hat`` holds
    ``(j, k + 1)``. Columns are renormalized.
    """
    if n_i < 1 or n_s < 2:
        raise ValueError("need n_i >= 1 and n_s >= 2")

    def get(j, k):
        try:
            e = estimates[(j, k)]
        except KeyError:
            raise KeyError(f"missing estimate for state {state_label(j, k)!r}") from None
        return e.state if isinstance(e, QstEstimate) else np.asarray(e, dtype=complex)

    xs, ys, cmap = [], [], []
    for j in range(1, n_i + 1):
        for k in range(1, n_s):
            xs.append(get(j, k))
            ys.append(get(j, k + 1))
            cmap.append((j, k))
    x_hat = _unit_columns(np.stack(xs, axis=1))
    y_hat = _unit_columns(np.stack(ys, axis=1))
    return QptProblem(x_hat, y_hat, n_i, n_s, cmap)


def pairwise_phase(x_hat, y_hat, l1: int, l2: int) -> float:
    """Estimate of ``xi[l2] - xi[l1]``: ``arg((x1^* x2) / (y1^* y2))``."""
    num = np.vdot(x_hat[:, l1], x_hat[:, l2])
    den = np.vdot(y_hat[:, l1], y_hat[:, l2])
    if den == 0 or abs(den) < ZERO_TOL * 1e-3:
        raise OrthogonalPairError(f"columns {l1} and {l2} of y_hat are orthogonal")
    return float(np.angle(num / den))


def _abs_gram(y_hat) -> np.ndarray:
    return np.abs(dagger(y_hat) @ y_hat)


def choose_anchor(y_hat) -> int:
    """Column whose smallest |dot product| with the other columns is largest.

    Ties go to the smallest index; a single column is its own anchor.
    """
    g = _abs_gram(np.asarray(y_hat, dtype=complex))
    np.fill_diagonal(g, np.inf)
    return first_maximum(g.min(axis=1))


def first_maximum(values, tol: float = TIE_TOL) -> int:
    """Smallest index whose value is within ``tol`` of the maximum."""
    values = np.asarray(values, dtype=float)
    top = values.max()
    if np.isinf(top):
        return int(np.argmax(values))
    return int(np.flatnonzero(values >= top - tol)[0])


def recover_phases(x_hat, y_hat=None, b_orth: float = B_ORTH, zero_tol: float = ZERO_TOL,
                   span_rtol: float = SPAN_RTOL) -> PhaseAssignment:
    """Recover the relative phases of the ``y_hat`` columns.

    Two columns count as orthogonal when the |dot product| of their inputs or
    of their outputs is below the current threshold (``b_orth`` at first, ``zero_tol`` after relaxation).
    The anchor's phase is 0 and every column non-orthogonal to the anchor
    gets its phase directly. The remaining columns are reached by repeated
    passes, each linking an unresolved column through the resolved column it
    is least orthogonal to. When a pass makes no progress, the unresolved
    columns are dropped if the resolved ones already span the space;
    otherwise the threshold is relaxed once, and if that still does not help
    :class:`IdentifiabilityFailure` is raised.

    Either pass a :class:`QptProblem` alone or the two matrices.
    """
    if isinstance(x_hat, QptProblem):
        x_hat, y_hat = x_hat.x_hat, x_hat.y_hat
    x_hat = np.asarray(x_hat, dtype=complex)
    y_hat = np.asarray(y_hat, dtype=complex)
    n_x = y_hat.shape[1]
    d = y_hat.shape[0]
    # a pair is usable only if neither dot product in the phase quotient vanishes
    g = np.minimum(_abs_gram(y_hat), _abs_gram(x_hat))
    anchor = choose_anchor(y_hat)
    xi = np.full(n_x, np.nan)
    xi[anchor] = 0.0
    threshold = max(b_orth, zero_tol)

    def linked(a, b):
        return g[a, b] >= threshold

    # step 1: columns non-orthogonal to the anchor
    for l2 in range(n_x):
        if l2 != anchor and linked(anchor, l2):
            xi[l2] = pairwise_phase(x_hat, y_hat, anchor, l2)
    # step 2
    unresolved = [l for l in range(n_x) if np.isnan(xi[l])]
    resolved = [l for l in range(n_x) if not np.isnan(xi[l])]
    direct = not unresolved
    passes = 0
    progress_returns = 0
    relaxations = 0
    while unresolved:
        # step 3: one pass over the unresolved columns in index order
        passes += 1
        size_before = len(unresolved)
        for lf in list(unresolved):
            candidates = [ls for ls in resolved if linked(ls, lf)]
            if not candidates:
                continue
            candidates.sort()
            best = candidates[first_maximum([g[ls, lf] for ls in candidates])]
            xi[lf] = xi[best] + pairwise_phase(x_hat, y_hat, best, lf)
            unresolved.remove(lf)
            resolved.append(lf)
        if not unresolved:                                   # step 4
            break
        if len(unresolved) < size_before:                    # step 5
            progress_returns += 1
            # every such return shrinks the unresolved set, so fewer than n_x occur
            assert progress_returns < n_x, "phase recovery exceeded its pass bound"
            continue
        if numerical_rank(y_hat[:, resolved], span_rtol) == d:   # step 6
            return PhaseAssignment(_wrap(xi), anchor, sorted(unresolved), threshold,
                                   relaxations > 0, False, passes)
        if threshold > zero_tol and relaxations == 0:        # step 7
            threshold = zero_tol
            relaxations += 1
            assert relaxations <= 1
            continue
        raise IdentifiabilityFailure(sorted(unresolved), sorted(resolved))  # step 8
    return PhaseAssignment(_wrap(xi), anchor, [], threshold, relaxations > 0, direct, passes)


def _wrap(xi):
    return np.where(np.isnan(xi), np.nan, np.angle(np.exp(1j * np.nan_to_num(xi))))


def solve_unitary_tls(x_hat, y_tilde, rank_rtol: float = SPAN_RTOL) -> QptResult:
    """Unitary ``M`` best matching ``y_tilde ≈ M x_hat`` in total least squares.

    ``M = U V^*`` from the SVD of ``y_tilde @ x_hat^*``. The achieved
    objective ``||dX||^2 + ||dY||^2`` equals ``||y_tilde - M x_hat||^2 / 2``.
    ``degenerate`` is set when either matrix is rank deficient, in which case
    the minimizer is not unique.
    """
    x_hat = np.asarray(x_hat, dtype=complex)
    y_tilde = np.asarray(y_tilde, dtype=complex)
    b = y_tilde @ dagger(x_hat)
    m_hat, flag = nearest_unitary(b, return_flag=True)
    d = x_hat.shape[0]
    degenerate = (flag or numerical_rank(x_hat, rank_rtol) < d
                  or numerical_rank(y_tilde, rank_rtol) < d)
    residual = 0.5 * float(np.linalg.norm(y_tilde - m_hat @ x_hat) ** 2)
    return QptResult(m_hat, None, residual, bool(degenerate))


def qpt_from_estimates(x_hat, y_hat, b_orth: float = B_ORTH,
                       problem: QptProblem | None = None) -> QptResult:
    """Phase recovery followed by the unitary TLS solve on the kept columns."""
    x_hat = _unit_columns(x_hat)
    y_hat = _unit_columns(y_hat)
    phases = recover_phases(x_hat, y_hat, b_orth)
    keep = phases.kept_columns
    y_tilde = y_hat[:, keep] * np.exp(1j * phases.xi_hat[keep])
    result = solve_unitary_tls(x_hat[:, keep], y_tilde)
    result.phases = phases
    result.problem = problem
    return result


def _group_records(records) -> dict[str, list[CountsRecord]]:
    if isinstance(records, CountsFile):
        return records.by_state()
    if isinstance(records, Mapping):
        return {k: list(v) for k, v in records.items()}
    grouped: dict[str, list[CountsRecord]] = {}
    for rec in records:
        grouped.setdefault(rec.state, []).append(rec)
    return grouped


def qpt_pipeline(records, meas: MeasurementSet, n_i: int, n_s: int,
                 b_orth: float = B_ORTH, seed: int = 0,
                 n_restarts: int = N_RESTARTS) -> QptResult:
    """Semi-blind estimate of the process from raw count records.

    ``records`` is a :class:`CountsFile`, a mapping from state label to its
    records, or a flat list of records. Every state ``M^k v_j`` with
    ``1 <= j <= n_i`` and ``1 <= k <= n_s`` must be present.
    """
    grouped = _group_records(records)
    wanted = {}
    for label in grouped:
        j, k = parse_state_label(label)
        if 1 <= j <= n_i and 1 <= k <= n_s:
            wanted[label] = grouped[label]
    missing = [state_label(j, k) for j in range(1, n_i + 1) for k in range(1, n_s + 1)
               if state_label(j, k) not in {state_label(*parse_state_label(s)) for s in wanted}]
    if missing:
        raise KeyError(f"no records for state(s) {', '.join(missing)}")
    estimates = qst_batch(wanted, meas, seed=seed, n_restarts=n_restarts)
    by_index = {parse_state_label(e.label): e for e in estimates}
    problem = assemble_problem(by_index, n_i, n_s)
    result = qpt_from_estimates(problem.x_hat, problem.y_hat, b_orth, problem)
    result.estimates = estimates
    return result


def sqpt_pipeline(known_inputs: Sequence, output_records, meas: MeasurementSet,
                  b_orth: float = B_ORTH, seed: int = 0,
                  n_restarts: int = N_RESTARTS) -> QptResult:
    """Standard-setup estimate: trusted inputs, outputs measured once.

    ``output_records`` is grouped by state label (or a flat record list) with
    one group per known input, in the same order as ``known_inputs``.
    """
    grouped = _group_records(output_records)
    if len(grouped) != len(known_inputs):
        raise ValueError(
            f"{len(known_inputs)} known inputs but records for {len(grouped)} output states")
    estimates = qst_batch(grouped, meas, seed=seed, n_restarts=n_restarts)
    x_hat = _unit_columns(np.stack([np.asarray(v, dtype=complex) for v in known_inputs], axis=1))
    y_hat = _unit_columns(np.stack([e.state for e in estimates], axis=1))
    problem = QptProblem(x_hat, y_hat, len(known_inputs), 2,
                         [(j, 1) for j in range(1, len(known_inputs) + 1)])
    result = qpt_from_estimates(x_hat, y_hat, b_orth, problem)
    result.estimates = estimates
    return result
