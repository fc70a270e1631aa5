"""Pure-state tomography from unentangled measurement counts.

The estimate minimizes the Gaussian-weighted misfit between model and
empirical outcome frequencies::

    sum_{m, j} (|E_m^* v|^2 - f_mj)^2 / max(f_mj (1 - f_mj) / n_c, 1 / (4 n_c^2))

over unit vectors ``v``. The search runs a damped Newton iteration (exact Hessian, Levenberg
damping) on the 2d real coordinates of ``v``, renormalizing after each
accepted step, from several starting points: a linear-inversion start and
random pure states. The global phase of the
result is fixed so that the first non-negligible amplitude is real and
non-negative.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .linalg import random_state
from .measurement import CountsRecord, MeasurementSet

__all__ = [
    "QstError",
    "QstEstimate",
    "canonical_phase",
    "fit_pure_state",
    "linear_inversion_start",
    "qst_batch",
    "qst_estimate",
]

N_RESTARTS = 8
GRAD_TOL = 1e-9
MAX_ITER = 300
DECREMENT_TOL = 1e-12
CANONICAL_MODULUS = 1e-6


class QstError(ValueError):
    """Count records for a state are missing or inconsistent."""

    def __init__(self, message: str, state: str | None = None):
        super().__init__(message if state is None else f"state {state!r}: {message}")
        self.state = state


@dataclass
class QstEstimate:
    state: np.ndarray
    residual: float
    converged: bool
    label: str | None = None
    n_iter: int = 0
    history: list[float] = field(default_factory=list, repr=False)


def canonical_phase(v) -> np.ndarray:
    """Normalize ``v`` and rotate it so its first sizeable amplitude is >= 0."""
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    idx = np.flatnonzero(np.abs(v) > CANONICAL_MODULUS)
    if idx.size:
        a = v[idx[0]]
        v = v * (np.conj(a) / abs(a))
        v[idx[0]] = abs(v[idx[0]])
    return v


def quadratic_forms(meas_stack) -> tuple[np.ndarray, np.ndarray]:
    """Real vectors ``a1, a2`` with ``|e^* v|^2 = (a1 . w)^2 + (a2 . w)^2``.

    ``w = [Re v, Im v]``; one pair per eigenvector ``e`` (column of each
    eigenvector matrix). Shapes are ``(n_t * d, 2d)``.
    """
    mats = np.asarray(meas_stack, dtype=complex)
    d = mats.shape[-1]
    cols = np.conj(np.swapaxes(mats, -1, -2)).reshape(-1, d)   # rows: e^*
    alpha, beta = cols.real, cols.imag
    a1 = np.concatenate([alpha, -beta], axis=1)
    a2 = np.concatenate([beta, alpha], axis=1)
    return a1, a2


def _objective(w, a1, a2, freqs, sigma):
    u1, u2 = a1 @ w, a2 @ w
    p = (u1 ** 2 + u2 ** 2) / (w @ w)
    r = (p - freqs) / sigma
    return float(r @ r)


def _derivatives(w, a1, a2, freqs, sigma):
    """Objective, gradient and Hessian at a unit vector ``w``."""
    u1, u2 = a1 @ w, a2 @ w
    p = u1 ** 2 + u2 ** 2
    r = (p - freqs) / sigma
    qw = a1 * u1[:, None] + a2 * u2[:, None]             # rows: Q_i w
    dp = 2 * (qw - p[:, None] * w)                        # rows: grad p_i
    dr = dp / sigma[:, None]
    grad = 2 * dr.T @ r
    c = 2 * r / sigma                                     # weights of the curvature terms
    cq = (a1 * c[:, None]).T @ a1 + (a2 * c[:, None]).T @ a2
    cqw = (qw * c[:, None]).sum(axis=0)
    cp = c @ p
    curv = 2 * cq - 4 * (np.outer(cqw, w) + np.outer(w, cqw)) - 2 * cp * np.eye(w.size) \
        + 8 * cp * np.outer(w, w)
    hess = 2 * dr.T @ dr + curv
    return float(r @ r), grad, hess


def _decrement_floor(w, a1, a2, freqs, sigma, f):
    u1, u2 = a1 @ w, a2 @ w
    p = u1 ** 2 + u2 ** 2
    r = (p - freqs) / sigma
    # rounding error of f from the few-ulp error on each probability
    rounding = 2 * np.sum(np.abs(r) * 8 * np.finfo(float).eps * np.maximum(p, freqs) / sigma)
    return max(DECREMENT_TOL * max(f, 1.0), 100 * rounding)


def fit_pure_state(meas_stack, freqs, sigma, start, max_iter: int = MAX_ITER,
                   grad_tol: float = GRAD_TOL):
    """Damped Newton descent of the weighted misfit from ``start``.

    ``meas_stack`` holds the eigenvector matrices ``(n_t, d, d)``; ``freqs``
    and ``sigma`` are ``(n_t, d)``. Steps are taken in the tangent space of
    the unit sphere orthogonal to the global-phase direction and accepted
    only when the objective decreases. Returns
    ``(state, objective, converged, history)``; ``history`` lists the
    objective after every accepted step.
    """
    a1, a2 = quadratic_forms(meas_stack)
    freqs = np.asarray(freqs, dtype=float).ravel()
    sigma = np.asarray(sigma, dtype=float).ravel()
    v = np.asarray(start, dtype=complex)
    v = v / np.linalg.norm(v)
    w = np.concatenate([v.real, v.imag])
    n = w.size
    f, grad, hess = _derivatives(w, a1, a2, freqs, sigma)
    history = [f]
    lam = 1e-3
    converged = False
    for _ in range(max_iter):
        gnorm = np.linalg.norm(grad)
        if gnorm < grad_tol:
            converged = True
            break
        iw = np.concatenate([-w[n // 2:], w[: n // 2]])   # i * v
        proj = np.eye(n) - np.outer(w, w) - np.outer(iw, iw)
        h = proj @ hess @ proj
        g = proj @ grad
        scale = max(np.abs(np.diag(h)).max(), 1e-300)
        eye = np.eye(n)
        try:
            newton = np.linalg.solve(np.linalg.cholesky(h + 1e-12 * scale * eye), g)
        except np.linalg.LinAlgError:
            newton = None
        # once the predicted Newton gain is lost in the rounding of f the
        # iterate is a local minimum at working precision
        if newton is not None and newton @ newton < _decrement_floor(w, a1, a2, freqs, sigma, f):
            converged = True
            break
        improved = False
        while lam < 1e14:
            try:
                chol = np.linalg.cholesky(h + lam * scale * eye)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            step = -np.linalg.solve(chol.T, np.linalg.solve(chol, g))
            w_new = w + step
            w_new /= np.linalg.norm(w_new)
            f_new = _objective(w_new, a1, a2, freqs, sigma)
            if f_new < f:
                w = w_new
                f, grad, hess = _derivatives(w, a1, a2, freqs, sigma)
                history.append(f)
                lam = max(lam / 10, 1e-15)
                improved = True
                break
            lam *= 10
        if not improved:
            break
    v = w[: n // 2] + 1j * w[n // 2:]
    return v, f, converged, history


@functools.lru_cache(maxsize=16)
def _inversion_operator(labels: tuple[str, ...], n_qb: int) -> np.ndarray:
    from .measurement import custom_measurement_set

    mats = custom_measurement_set(labels).stacked()
    d = 2 ** n_qb
    # tr(P rho) = sum_ab conj(e_a) e_b rho_ab with P = e e^*, e = column of E
    cols = np.swapaxes(mats, -1, -2).reshape(-1, d)           # rows: eigenvectors
    design = (np.conj(cols)[:, :, None] * cols[:, None, :]).reshape(-1, d * d)
    return np.linalg.pinv(design)


def linear_inversion_start(meas: MeasurementSet, freqs) -> np.ndarray:
    """Starting state from a minimum-norm linear inversion of the frequencies.

    The leading eigenvector of the inverted (hermitized) matrix supplies the
    phases; the moduli come from the all-Z frequencies when that measurement
    is part of the set.
    """
    d = meas.dim
    pinv = _inversion_operator(meas.labels, meas.n_qb)
    rho = (pinv @ np.asarray(freqs, dtype=float).ravel()).reshape(d, d)
    rho = (rho + rho.conj().T) / 2
    _, vecs = np.linalg.eigh(rho)
    v = vecs[:, -1]
    all_z = "Z" * meas.n_qb
    if all_z in meas.labels:
        moduli = np.sqrt(np.clip(freqs[meas.labels.index(all_z)], 0, None))
        phases = np.exp(1j * np.angle(v))
        v = moduli * phases
        if np.linalg.norm(v) == 0:
            v = vecs[:, -1]
    return v / np.linalg.norm(v)


def _frequency_table(records: Sequence[CountsRecord], meas: MeasurementSet,
                     label: str | None):
    by_meas = {}
    for rec in records:
        if rec.measurement in by_meas:
            raise QstError(f"duplicate record for measurement {rec.measurement!r}", label)
        by_meas[rec.measurement] = rec
    missing = [m for m in meas.labels if m not in by_meas]
    if missing:
        raise QstError(f"missing measurement type(s) {', '.join(missing)}", label)
    totals = {by_meas[m].n_c for m in meas.labels}
    if len(totals) != 1:
        raise QstError(f"inconsistent n_c across records: {sorted(totals)}", label)
    n_c = totals.pop()
    if n_c <= 0:
        raise QstError("records contain no counts", label)
    counts = np.stack([by_meas[m].counts for m in meas.labels]).astype(float)
    if counts.shape[1] != meas.dim:
        raise QstError(f"records have {counts.shape[1]} outcomes, expected {meas.dim}", label)
    return counts / n_c, n_c


def qst_estimate(records: Sequence[CountsRecord], meas: MeasurementSet,
                 rng: np.random.Generator | int | None = 0,
                 n_restarts: int = N_RESTARTS, label: str | None = None) -> QstEstimate:
    """Estimate one pure state from its records across every measurement type.

    ``rng`` seeds the random restarts; the same seed always gives the same
    estimate. The best of ``n_restarts`` local fits is returned (the first
    start is the linear-inversion state, the others are Haar-random).
    """
    rng = np.random.default_rng(rng)
    freqs, n_c = _frequency_table(records, meas, label)
    sigma = np.sqrt(np.maximum(freqs * (1 - freqs) / n_c, 1.0 / (4.0 * n_c ** 2)))
    stack = meas.stacked()
    starts = [linear_inversion_start(meas, freqs)]
    starts += [random_state(meas.dim, rng) for _ in range(max(n_restarts, 1) - 1)]
    best = None
    for start in starts:
        v, f, ok, hist = fit_pure_state(stack, freqs, sigma, start)
        if best is None or f < best[1]:
            best = (v, f, ok, hist)
    v, f, ok, hist = best
    return QstEstimate(canonical_phase(v), f, ok, label, len(hist) - 1, hist)


def qst_batch(records_by_state: Mapping[str, Sequence[CountsRecord]], meas: MeasurementSet,
              seed: int = 0, n_restarts: int = N_RESTARTS) -> list[QstEstimate]:
    """Run :func:`qst_estimate` for every state in the mapping's order.

    Each state gets its own generator spawned from ``seed`` and the state's
    position, so the result does not depend on evaluation order.
    """
    labels = list(records_by_state)
    children = np.random.SeedSequence(seed).spawn(len(labels))
    out = []
    for lab, ss in zip(labels, children):
        out.append(qst_estimate(records_by_state[lab], meas, np.random.default_rng(ss),
                                n_restarts=n_restarts, label=lab))
    return out
