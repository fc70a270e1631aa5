"""Generators shared by several test modules."""

import numpy as np

from semiblind_qpt.linalg import random_state, random_unitary


def unit(v):
    v = np.asarray(v, dtype=complex)
    return v / np.linalg.norm(v)


def chain(m, v, steps):
    cols, s = [], np.asarray(v, dtype=complex)
    for _ in range(steps):
        s = m @ s
        cols.append(s)
    return np.stack(cols, axis=1)


def adversarial_columns(rng, d):
    """Columns grouped in mutually orthogonal blocks of a random basis, with
    random block sizes and occasional rank deficiency or extra generic columns."""
    basis = random_unitary(d, rng)
    n_blocks = rng.integers(1, d + 1)
    cuts = np.sort(rng.choice(np.arange(1, d), size=n_blocks - 1, replace=False)) if d > 1 else []
    cols = []
    for block in np.split(np.arange(d), cuts):
        use = block if rng.random() < 0.8 else block[:-1]
        if use.size == 0:
            continue
        for _ in range(rng.integers(1, use.size + 2)):
            coef = np.zeros(d, dtype=complex)
            coef[use] = rng.normal(size=use.size) + 1j * rng.normal(size=use.size)
            cols.append(unit(basis @ coef))
    if not cols or rng.random() < 0.3:
        cols.append(random_state(d, rng))
    return np.stack(cols, axis=1)
