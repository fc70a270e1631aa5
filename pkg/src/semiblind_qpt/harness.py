"""Simulated setups, error models, Monte Carlo campaigns and data replication.

A campaign is a list of grid points, each a :class:`SetupSpec`. Every trial
draws a random process, simulates the measurement counts of its setup and
runs the estimator. Trial ``t`` of grid point ``g`` uses the generator seeded
from ``SeedSequence([seed, g, t])``, so trials can run in any order or in
parallel and the CSV output is still reproducible.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .linalg import error_metric, random_state, random_unitary, tensor_product
from .measurement import (
    CountsFile,
    CountsRecord,
    born_probabilities,
    custom_measurement_set,
    default_measurement_set,
    exact_counts,
    read_counts_file,
    sample_counts,
)
from .qpt import (
    B_ORTH,
    IdentifiabilityFailure,
    QptResult,
    qpt_pipeline,
    sqpt_pipeline,
    state_label,
)

__all__ = [
    "CNOT",
    "CampaignResult",
    "ReplicationReport",
    "SetupSpec",
    "StateFamily",
    "TrialOutcome",
    "apply_imperfect_hadamards",
    "apply_systematic_error",
    "baldwin_states",
    "format_matrix",
    "generate_hadamard_states",
    "preset_grid",
    "replicate_experiment",
    "run_campaign",
    "run_trial",
    "setup2_n_c",
    "simulate_setup",
    "table2_path",
]

CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)

_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_KET0 = np.array([1, 0], dtype=complex)


class StateFamily(str, enum.Enum):
    HADAMARD = "hadamard"
    SINGLE_RANDOM = "random"
    SINGLE_GIVEN = "given"
    EXPLICIT = "list"
    BALDWIN = "baldwin"


class SetupVariant(str, enum.Enum):
    SEMIBLIND = "semiblind"
    SQPT = "sqpt"


def generate_hadamard_states(n_qb: int) -> list[np.ndarray]:
    """Columns of the n_qb-fold tensor power of ``[[1, 1/sqrt2], [0, 1/sqrt2]]``.

    State ``k`` (1-based) is ``|0...0>`` with a Hadamard on every qubit whose
    bit is set in ``k - 1`` (qubit 1 is the leading bit).
    """
    if not 1 <= n_qb <= 6:
        raise ValueError("n_qb must be between 1 and 6")
    factor = np.array([[1, 1 / np.sqrt(2)], [0, 1 / np.sqrt(2)]], dtype=complex)
    mat = tensor_product(*([factor] * n_qb))
    return [mat[:, k].copy() for k in range(mat.shape[1])]


def baldwin_states(d: int) -> list[np.ndarray]:
    """``e_1`` and ``(e_1 + e_k) / sqrt2`` for ``k = 2..d``."""
    eye = np.eye(d, dtype=complex)
    return [eye[0]] + [(eye[0] + eye[k]) / np.sqrt(2) for k in range(1, d)]


def _noisy_hadamard(angle_std: float, rng: np.random.Generator) -> np.ndarray:
    theta, phi = rng.normal(0.0, angle_std, size=2)
    c, s, e = np.cos(theta), np.sin(theta), np.exp(1j * phi)
    return np.array([[c, -s * e], [s, c * e]]) @ _HADAMARD


def apply_imperfect_hadamards(n_qb: int, k: int, angle_std: float,
                              rng: np.random.Generator) -> np.ndarray:
    """State ``k`` of the Hadamard family prepared with miscalibrated gates.

    Each Hadamard is preceded (on the left) by a rotation with independent
    Gaussian angles ``theta, phi`` of standard deviation ``angle_std``.
    Qubits without a Hadamard stay exactly in ``|0>``.
    """
    if angle_std < 0:
        raise ValueError("angle_std must be >= 0")
    d = 2 ** n_qb
    if not 1 <= k <= d:
        raise ValueError(f"k must be in 1..{d}")
    bits = format(k - 1, f"0{n_qb}b")
    factors = []
    for b in bits:
        if b == "1":
            gate = _noisy_hadamard(angle_std, rng) if angle_std > 0 else _HADAMARD
            factors.append(gate @ _KET0)
        else:
            factors.append(_KET0)
    return tensor_product(*factors)[:, 0]


def apply_systematic_error(state, std: float, rng: np.random.Generator) -> np.ndarray:
    """Add one complex Gaussian perturbation per component and renormalize.

    ``std`` is the standard deviation of each complex coefficient (real and
    imaginary parts each get ``std / sqrt2``). ``std = inf`` returns a
    Haar-random state that ignores the input.
    """
    v = np.asarray(state, dtype=complex)
    if std < 0:
        raise ValueError("std must be >= 0")
    if math.isinf(std):
        return random_state(v.size, rng)
    if std == 0:
        return v.copy()
    noise = (rng.standard_normal(v.size) + 1j * rng.standard_normal(v.size)) * std / np.sqrt(2)
    w = v + noise
    return w / np.linalg.norm(w)


def setup2_n_c(d: int, base: int = 2500) -> int:
    """Copies per state that equalize total measurements with the n_s=2 setup."""
    return int(np.rint(base * 2 * d / (d + 1)))


@dataclass
class SetupSpec:
    n_qb: int = 2
    n_i: int | None = None
    n_s: int = 2
    n_c: int = 1000
    states: StateFamily = StateFamily.HADAMARD
    systematic_std: float = 0.0
    hadamard_angle_std: float = 0.0
    seed: int = 0
    exact: bool = False
    variant: SetupVariant = SetupVariant.SEMIBLIND
    initial_states: list | None = None
    measurements: tuple[str, ...] | None = None
    b_orth: float = B_ORTH

    def __post_init__(self):
        self.states = StateFamily(self.states)
        self.variant = SetupVariant(self.variant)
        if not 1 <= self.n_qb <= 6:
            raise ValueError("n_qb must be between 1 and 6")
        if self.n_i is None:
            self.n_i = {StateFamily.SINGLE_RANDOM: 1, StateFamily.SINGLE_GIVEN: 1}.get(
                self.states, self.dim if self.initial_states is None else len(self.initial_states))
        if self.n_i < 1 or self.n_s < 1 or self.n_c < 1:
            raise ValueError("n_i, n_s and n_c must be positive")
        if self.variant is SetupVariant.SEMIBLIND and self.n_s < 2:
            raise ValueError("the semi-blind setup needs n_s >= 2")
        if self.states in (StateFamily.SINGLE_GIVEN, StateFamily.EXPLICIT) and not self.initial_states:
            raise ValueError(f"state family {self.states.value!r} needs initial_states")
        if self.states in (StateFamily.HADAMARD, StateFamily.BALDWIN) and self.n_i > self.dim:
            raise ValueError(f"the {self.states.value} family has only {self.dim} states")
        n_x = self.n_i * (self.n_s - 1) if self.variant is SetupVariant.SEMIBLIND else self.n_i
        if n_x < self.dim:
            warnings.warn(f"only {n_x} input/output pairs for dimension {self.dim}: "
                          "the process cannot be identified", RuntimeWarning, stacklevel=2)

    @property
    def dim(self) -> int:
        return 2 ** self.n_qb

    def measurement_set(self):
        if self.measurements is None:
            return default_measurement_set(self.n_qb)
        return custom_measurement_set(self.measurements)

    def target_states(self) -> list[np.ndarray]:
        """The intended (error-free) initial states."""
        if self.states is StateFamily.HADAMARD:
            return generate_hadamard_states(self.n_qb)[: self.n_i]
        if self.states is StateFamily.BALDWIN:
            return baldwin_states(self.dim)[: self.n_i]
        if self.states is StateFamily.SINGLE_RANDOM:
            raise ValueError("random initial states have no fixed target")
        vs = [np.asarray(v, dtype=complex) for v in self.initial_states]
        return [v / np.linalg.norm(v) for v in vs[: self.n_i]]

    def prepare_states(self, rng: np.random.Generator) -> list[np.ndarray]:
        """Initial states as actually prepared, with preparation errors."""
        if self.states is StateFamily.SINGLE_RANDOM:
            states = [random_state(self.dim, rng) for _ in range(self.n_i)]
        elif self.states is StateFamily.HADAMARD and self.hadamard_angle_std > 0:
            states = [apply_imperfect_hadamards(self.n_qb, k, self.hadamard_angle_std, rng)
                      for k in range(1, self.n_i + 1)]
        else:
            states = self.target_states()
        return [apply_systematic_error(v, self.systematic_std, rng) for v in states]


def _counts(probs, spec: SetupSpec, rng) -> np.ndarray:
    return exact_counts(probs, spec.n_c) if spec.exact else sample_counts(probs, spec.n_c, rng)


def simulate_setup(spec: SetupSpec, m, rng: np.random.Generator,
                   initial_states: Sequence | None = None) -> CountsFile:
    """Counts for every measured state ``M^k v_j`` and every measurement type.

    The semi-blind variant measures ``k = 1..n_s``; the standard variant
    measures only ``k = 1``. ``initial_states`` overrides the states the setup
    would prepare (useful when the caller needs them afterwards).
    """
    m = np.asarray(m, dtype=complex)
    if m.shape != (spec.dim, spec.dim):
        raise ValueError(f"process has shape {m.shape}, expected {(spec.dim, spec.dim)}")
    meas = spec.measurement_set()
    stack = meas.stacked()
    vs = spec.prepare_states(rng) if initial_states is None else list(initial_states)
    n_s = spec.n_s if spec.variant is SetupVariant.SEMIBLIND else 1
    records, labels = [], []
    for j, v in enumerate(vs, start=1):
        state = np.asarray(v, dtype=complex)
        for k in range(1, n_s + 1):
            state = m @ state
            label = state_label(j, k)
            labels.append(label)
            probs = born_probabilities(stack, state)
            for lab, p in zip(meas.labels, probs):
                records.append(CountsRecord(label, lab, _counts(p, spec, rng)))
    return CountsFile(spec.n_qb, spec.n_c, list(meas.labels), labels, records)


@dataclass
class TrialOutcome:
    grid_point: str
    trial: int
    seed: int
    epsilon: float
    status: str
    wall_time: float


def _trial_seed(master: int, grid_index: int, trial: int) -> int:
    ss = np.random.SeedSequence([int(master), int(grid_index), int(trial)])
    return int(ss.generate_state(1, np.uint64)[0])


def run_trial(spec: SetupSpec, seed: int, m=None) -> tuple[float, str, QptResult | None]:
    """One simulated estimation; returns ``(epsilon, status, result)``.

    ``status`` is ``"ok"``, ``"identifiability"`` (phase recovery failed) or
    ``"error: ..."``; epsilon is NaN unless the status is ``"ok"``.
    """
    rng = np.random.default_rng(seed)
    if m is None:
        m = random_unitary(spec.dim, rng)
    try:
        vs = spec.prepare_states(rng)
        counts = simulate_setup(spec, m, rng, initial_states=vs)
        meas = spec.measurement_set()
        qst_seed = int(rng.integers(2 ** 63))
        if spec.variant is SetupVariant.SQPT:
            # the estimator trusts the intended states, not the prepared ones
            known = vs if spec.states is StateFamily.SINGLE_RANDOM else spec.target_states()
            result = sqpt_pipeline(known, counts, meas, b_orth=spec.b_orth, seed=qst_seed)
        else:
            result = qpt_pipeline(counts, meas, spec.n_i, spec.n_s, b_orth=spec.b_orth,
                                  seed=qst_seed)
    except IdentifiabilityFailure:
        return float("nan"), "identifiability", None
    except (ValueError, np.linalg.LinAlgError) as exc:
        return float("nan"), f"error: {exc}", None
    return error_metric(result.m_hat, m), "ok", result


def _run_one(args):
    name, spec, seed, trial = args
    t0 = time.perf_counter()
    eps, status, _ = run_trial(spec, seed)
    return TrialOutcome(name, trial, seed, eps, status, time.perf_counter() - t0)


SUMMARY_FIELDS = ("grid_point", "n_trials", "n_ok", "p5", "q1", "median", "q3", "p95")


@dataclass
class CampaignResult:
    outcomes: list[TrialOutcome]
    grid: list[tuple[str, SetupSpec]] = field(repr=False, default_factory=list)

    def epsilons(self, grid_point: str) -> np.ndarray:
        return np.array([o.epsilon for o in self.outcomes
                         if o.grid_point == grid_point and o.status == "ok"])

    def summary(self) -> list[dict]:
        rows = []
        for name, _ in self.grid:
            eps = self.epsilons(name)
            n = sum(o.grid_point == name for o in self.outcomes)
            if eps.size:
                p = np.percentile(eps, [5, 25, 50, 75, 95])
            else:
                p = [float("nan")] * 5
            rows.append(dict(zip(SUMMARY_FIELDS, [name, n, int(eps.size), *map(float, p)])))
        return rows

    def medians(self) -> dict[str, float]:
        return {r["grid_point"]: r["median"] for r in self.summary()}

    def long_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["grid_point", "trial", "seed", "epsilon", "status"])
        for o in self.outcomes:
            w.writerow([o.grid_point, o.trial, o.seed, _fmt(o.epsilon), o.status])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for r in self.summary():
            w.writerow([r[k] if k in ("grid_point", "n_trials", "n_ok") else _fmt(r[k])
                        for k in SUMMARY_FIELDS])
        return buf.getvalue()

    def timing_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["grid_point", "trial", "wall_time"])
        for o in self.outcomes:
            w.writerow([o.grid_point, o.trial, f"{o.wall_time:.6f}"])
        return buf.getvalue()

    def write(self, out_dir, prefix: str = "campaign") -> dict[str, Path]:
        """Write ``<prefix>_trials.csv``, ``_summary.csv`` and ``_timing.csv``.

        Only the timing file varies between identical seeded runs.
        """
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "trials": out / f"{prefix}_trials.csv",
            "summary": out / f"{prefix}_summary.csv",
            "timing": out / f"{prefix}_timing.csv",
        }
        paths["trials"].write_text(self.long_csv())
        paths["summary"].write_text(self.summary_csv())
        paths["timing"].write_text(self.timing_csv())
        return paths


def _fmt(x: float) -> str:
    return "nan" if x != x else repr(float(x))


def run_campaign(grid: Sequence[tuple[str, SetupSpec]], trials: int = 50, seed: int = 0,
                 workers: int = 1) -> CampaignResult:
    """Run ``trials`` trials at every grid point.

    Failed trials are recorded with their status and do not stop the
    campaign. Results are ordered by (grid point, trial) whatever the number
    of ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    grid = list(grid)
    names = [name for name, _ in grid]
    if len(set(names)) != len(names):
        raise ValueError("grid point names must be unique")
    jobs = [(name, spec, _trial_seed(seed, g, t), t)
            for g, (name, spec) in enumerate(grid) for t in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        outcomes = [_run_one(job) for job in jobs]
    return CampaignResult(outcomes, grid)


def preset_grid(name: str, base: SetupSpec | None = None) -> list[tuple[str, SetupSpec]]:
    """Named parameter grids.

    ``nc``: copies per state in {20, 100, 1000, 10000, 25000};
    ``systematic``: systematic error std in {0, 0.05, 0.1, 0.2, 0.3, inf} at n_c = 1000;
    ``qubits``: 1 to 3 qubits, d inputs with 2 steps (imperfect Hadamards,
    n_c = 2500) against one random input with d + 1 steps;
    ``sqpt``: semi-blind at n_c = 1000 against the standard setup at n_c = 2000.
    """
    base = base or SetupSpec()
    if name == "nc":
        return [(f"n_c={n}", replace(base, n_c=n)) for n in (20, 100, 1000, 10000, 25000)]
    if name == "systematic":
        return [(f"std={s}", replace(base, n_c=1000, systematic_std=s))
                for s in (0.0, 0.05, 0.1, 0.2, 0.3, math.inf)]
    if name == "qubits":
        grid = []
        for n in (1, 2, 3):
            d = 2 ** n
            grid.append((f"n_qb={n},setup=1", replace(
                base, n_qb=n, n_i=d, n_s=2, n_c=2500, states=StateFamily.HADAMARD,
                hadamard_angle_std=0.05)))
            grid.append((f"n_qb={n},setup=2", replace(
                base, n_qb=n, n_i=1, n_s=d + 1, n_c=setup2_n_c(d), states=StateFamily.SINGLE_RANDOM)))
        return grid
    if name == "sqpt":
        return [
            ("semiblind", replace(base, n_qb=2, n_i=4, n_s=2, n_c=1000)),
            ("sqpt", replace(base, n_qb=2, n_i=4, n_c=2000, states=StateFamily.BALDWIN,
                             variant=SetupVariant.SQPT)),
        ]
    raise ValueError(f"unknown preset {name!r}")


# ---------------------------------------------------------------------------
# experimental data


def table2_path() -> Path:
    """Bundled counts of the two-qubit CNOT experiment (250 shots per setting)."""
    return Path(str(resources.files("semiblind_qpt") / "data" / "table2_counts.csv"))


def _fmt_complex(z: complex) -> str:
    re, im = round(z.real, 2) + 0.0, round(z.imag, 2) + 0.0
    sign = "-" if im < 0 else "+"
    return f"{re:5.2f}{sign}{abs(im):.2f}i"


def format_matrix(a, name: str | None = None) -> str:
    a = np.asarray(a, dtype=complex)
    rows = ["  ".join(_fmt_complex(z) for z in row) for row in a]
    body = "\n".join(f"  [{r}]" for r in rows)
    return f"{name} =\n{body}" if name else body


@dataclass
class ReplicationReport:
    epsilon: float
    m_hat: np.ndarray
    x_hat: np.ndarray
    y_hat: np.ndarray
    result: QptResult

    def text(self) -> str:
        return "\n".join([
            format_matrix(self.x_hat, "X_hat"),
            format_matrix(self.y_hat, "Y_hat"),
            format_matrix(self.m_hat, "M_hat"),
            f"epsilon = {self.epsilon:.4f}",
        ])


def replicate_experiment(counts, target=CNOT, n_i: int | None = None, n_s: int = 2,
                         seed: int = 0, b_orth: float = B_ORTH) -> ReplicationReport:
    """Estimate the process from recorded counts and compare with ``target``.

    ``counts`` is a :class:`CountsFile` or a path. The estimate is rotated by
    the global phase that best aligns it with the target before printing.
    """
    if not isinstance(counts, CountsFile):
        counts = read_counts_file(counts)
    meas = counts.measurement_set()
    if n_i is None:
        n_i = 2 ** counts.n_qb
    result = qpt_pipeline(counts, meas, n_i, n_s, b_orth=b_orth, seed=seed)
    target = np.asarray(target, dtype=complex)
    theta = np.angle(np.trace(result.m_hat.conj().T @ target))
    aligned = result.m_hat * np.exp(1j * theta)
    eps = error_metric(result.m_hat, target)
    return ReplicationReport(eps, aligned, result.problem.x_hat, result.problem.y_hat, result)
