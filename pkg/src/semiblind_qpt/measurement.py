"""Unentangled Pauli measurements, Born-rule probabilities and count records.

A measurement type is a string of axis letters, one per qubit (``"ZX"``
measures qubit 1 along Z and qubit 2 along X). Its eigenvector matrix is the
tensor product of the per-qubit 2x2 matrices below; outcome ``j`` corresponds
to column ``j``, i.e. to the bit string of ``j`` with qubit 1 as leading bit.

Count records are stored as JSON::

    {"n_qb": 2, "n_c": 250, "measurements": ["ZZ", ...], "states": ["M v1", ...],
     "records": [{"state": "M v1", "measurement": "ZZ", "counts": [243, 6, 0, 1]}, ...]}

A CSV layout mirroring the published count table (one column per state,
one row per ``"<measurement> <outcome bits>"``) is accepted as well.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .linalg import tensor_product

__all__ = [
    "CountsFile",
    "CountsFormatError",
    "CountsRecord",
    "CountsSumWarning",
    "MeasurementSet",
    "PauliAxis",
    "born_probabilities",
    "counts_to_json",
    "custom_measurement_set",
    "default_measurement_set",
    "exact_counts",
    "pauli_matrix",
    "read_counts_csv",
    "read_counts_file",
    "sample_counts",
    "write_counts_csv",
    "write_counts_file",
]

logger = logging.getLogger(__name__)

_SQ2 = 1 / np.sqrt(2)


class PauliAxis(str, Enum):
    X = "X"
    Y = "Y"
    Z = "Z"


_PAULI_EIGENVECTORS = {
    PauliAxis.X: np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    PauliAxis.Y: np.array([[_SQ2, _SQ2], [1j * _SQ2, -1j * _SQ2]], dtype=complex),
    PauliAxis.Z: np.eye(2, dtype=complex),
}


def pauli_matrix(axis) -> np.ndarray:
    """Eigenvector matrix of a single-qubit measurement along ``axis``."""
    try:
        axis = PauliAxis(axis)
    except ValueError:
        raise ValueError(f"invalid measurement axis {axis!r}; expected X, Y or Z") from None
    return _PAULI_EIGENVECTORS[axis].copy()


@dataclass(frozen=True)
class MeasurementSet:
    """An ordered list of measurement types and their eigenvector matrices."""

    n_qb: int
    labels: tuple[str, ...]
    matrices: tuple[np.ndarray, ...] = field(repr=False, compare=False)

    @property
    def dim(self) -> int:
        return 2 ** self.n_qb

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(zip(self.labels, self.matrices))

    def matrix(self, label: str) -> np.ndarray:
        return self.matrices[self.labels.index(label)]

    def stacked(self) -> np.ndarray:
        """Eigenvector matrices as one ``(n_t, d, d)`` array."""
        return np.stack(self.matrices)


def _eigenvector_matrix(label: str) -> np.ndarray:
    return tensor_product(*(pauli_matrix(c) for c in label))


def custom_measurement_set(labels: Sequence[str]) -> MeasurementSet:
    """Measurement set for arbitrary axis strings, e.g. ``["ZZ", "XX", "YY"]``."""
    labels = tuple(str(lab).upper() for lab in labels)
    if not labels:
        raise ValueError("a measurement set needs at least one measurement type")
    n_qb = len(labels[0])
    for lab in labels:
        if len(lab) != n_qb or n_qb == 0:
            raise ValueError(f"measurement label {lab!r} does not have {n_qb} axes")
        bad = set(lab) - {"X", "Y", "Z"}
        if bad:
            raise ValueError(f"measurement label {lab!r}: invalid axis {''.join(sorted(bad))}")
    if len(set(labels)) != len(labels):
        raise ValueError("duplicate measurement labels")
    return MeasurementSet(n_qb, labels, tuple(_eigenvector_matrix(lab) for lab in labels))


def default_labels(n_qb: int) -> list[str]:
    """The ``2 n_qb + 1`` labels: all-Z, then ``Z^(n-i) S X^(i-1)`` for S in X, Y."""
    if not 1 <= n_qb <= 6:
        raise ValueError("n_qb must be between 1 and 6")
    labels = ["Z" * n_qb]
    for i in range(1, n_qb + 1):
        for s in "XY":
            labels.append("Z" * (n_qb - i) + s + "X" * (i - 1))
    return labels


def default_measurement_set(n_qb: int) -> MeasurementSet:
    return custom_measurement_set(default_labels(n_qb))


def born_probabilities(meas, state) -> np.ndarray:
    """Outcome probabilities ``|E^* v|^2`` of measuring ``state`` with ``meas``.

    ``meas`` may also be a stack ``(n_t, d, d)``; the result is then
    ``(n_t, d)``.
    """
    e = np.asarray(meas, dtype=complex)
    v = np.asarray(state, dtype=complex)
    if e.shape[-1] != v.shape[0] or e.shape[-2] != v.shape[0]:
        raise ValueError(f"dimension mismatch: measurement {e.shape}, state {v.shape}")
    amps = np.conj(np.swapaxes(e, -1, -2)) @ v
    return amps.real ** 2 + amps.imag ** 2


def sample_counts(probs, n_c: int, rng: np.random.Generator) -> np.ndarray:
    """One multinomial draw of ``n_c`` outcomes with probabilities ``probs``.

    numpy's multinomial sampler draws the outcomes by sequential binomial
    conditioning, so the result is exact and stable for a given generator.
    """
    p = np.asarray(probs, dtype=float)
    if np.any(p < -1e-12):
        raise ValueError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > 1e-8:
        raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
    if n_c < 1:
        raise ValueError("n_c must be >= 1")
    p = np.clip(p, 0.0, None)
    return rng.multinomial(n_c, p / p.sum()).astype(np.int64)


def exact_counts(probs, n_c: int) -> np.ndarray:
    """Noise-free counts: ``n_c * probs`` rounded so they still sum to ``n_c``.

    Largest-remainder rounding keeps the total exact.
    """
    p = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    p = p / p.sum()
    raw = p * n_c
    base = np.floor(raw).astype(np.int64)
    short = int(n_c - base.sum())
    if short > 0:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:short]] += 1
    return base


# ---------------------------------------------------------------------------
# count records and files


class CountsFormatError(ValueError):
    """A counts file could not be parsed."""


class CountsSumWarning(UserWarning):
    """A record's counts do not add up to the declared n_c."""


@dataclass
class CountsRecord:
    state: str
    measurement: str
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 1:
            raise ValueError("counts must be a 1-D vector")
        if np.any(self.counts < 0):
            raise ValueError(f"record ({self.state}, {self.measurement}) has negative counts")

    @property
    def n_c(self) -> int:
        return int(self.counts.sum())

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    def __eq__(self, other):
        if not isinstance(other, CountsRecord):
            return NotImplemented
        return (self.state == other.state and self.measurement == other.measurement
                and np.array_equal(self.counts, other.counts))


@dataclass
class CountsFile:
    """Parsed content of a counts file."""

    n_qb: int
    n_c: int
    measurements: list[str]
    states: list[str]
    records: list[CountsRecord]

    def measurement_set(self) -> MeasurementSet:
        return custom_measurement_set(self.measurements)

    def by_state(self) -> dict[str, list[CountsRecord]]:
        grouped: dict[str, list[CountsRecord]] = {s: [] for s in self.states}
        for rec in self.records:
            grouped.setdefault(rec.state, []).append(rec)
        return grouped


def _check_sums(records: Iterable[CountsRecord], n_c: int) -> None:
    for rec in records:
        if rec.n_c != n_c:
            warnings.warn(
                f"record ({rec.state}, {rec.measurement}): counts sum to {rec.n_c}, "
                f"declared n_c is {n_c}", CountsSumWarning, stacklevel=3)


def counts_to_json(counts: CountsFile) -> str:
    payload = {
        "n_qb": counts.n_qb,
        "n_c": counts.n_c,
        "measurements": list(counts.measurements),
        "states": list(counts.states),
        "records": [
            {"state": r.state, "measurement": r.measurement, "counts": [int(c) for c in r.counts]}
            for r in counts.records
        ],
    }
    return json.dumps(payload, indent=1) + "\n"


def write_counts_file(counts: CountsFile, path) -> None:
    Path(path).write_text(counts_to_json(counts))


def read_counts_file(path) -> CountsFile:
    """Read a counts file (JSON, or the table-style CSV if the suffix is .csv)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_counts_csv(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CountsFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    for key in ("n_qb", "n_c", "measurements", "states", "records"):
        if key not in payload:
            raise CountsFormatError(f"{path}: missing top-level key {key!r}")
    n_qb, n_c = int(payload["n_qb"]), int(payload["n_c"])
    d = 2 ** n_qb
    records = []
    for i, item in enumerate(payload["records"]):
        try:
            rec = CountsRecord(str(item["state"]), str(item["measurement"]), item["counts"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CountsFormatError(f"{path}: record {i}: {exc}") from exc
        if rec.counts.shape != (d,):
            raise CountsFormatError(
                f"{path}: record {i} ({rec.state}, {rec.measurement}) has "
                f"{rec.counts.size} counts, expected {d}")
        if rec.measurement not in payload["measurements"]:
            raise CountsFormatError(
                f"{path}: record {i} uses undeclared measurement {rec.measurement!r}")
        records.append(rec)
    _check_sums(records, n_c)
    return CountsFile(n_qb, n_c, list(payload["measurements"]), list(payload["states"]), records)


def _outcome_bits(j: int, n_qb: int) -> str:
    return format(j, f"0{n_qb}b")


def write_counts_csv(counts: CountsFile, path) -> None:
    """Write the table layout: header of state labels, rows ``"ZZ 00"``."""
    table = {(r.state, r.measurement): r.counts for r in counts.records}
    d = 2 ** counts.n_qb
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["MEAS OUTCOME", *counts.states])
        for m in counts.measurements:
            for j in range(d):
                row = [f"{m} {_outcome_bits(j, counts.n_qb)}"]
                for s in counts.states:
                    c = table.get((s, m))
                    row.append("" if c is None else int(c[j]))
                w.writerow(row)


def read_counts_csv(path, n_c: int | None = None) -> CountsFile:
    """Parse the table layout written by :func:`write_counts_csv`.

    ``n_c`` defaults to the most common per-record total.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise CountsFormatError(f"{path}: empty file")
    states = [c.strip() for c in rows[0][1:]]
    cells: dict[tuple[str, str], dict[int, int]] = {}
    measurements: list[str] = []
    n_qb = None
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            meas, bits = row[0].split()
        except ValueError:
            raise CountsFormatError(f"{path}:{lineno}: bad row label {row[0]!r}") from None
        if n_qb is None:
            n_qb = len(meas)
        if len(bits) != n_qb or len(meas) != n_qb or set(bits) - {"0", "1"}:
            raise CountsFormatError(f"{path}:{lineno}: bad row label {row[0]!r}")
        if len(row) - 1 != len(states):
            raise CountsFormatError(
                f"{path}:{lineno}: expected {len(states)} values, got {len(row) - 1}")
        if meas not in measurements:
            measurements.append(meas)
        for s, cell in zip(states, row[1:]):
            cell = cell.strip()
            if not cell:
                continue
            try:
                value = int(cell)
            except ValueError:
                raise CountsFormatError(
                    f"{path}:{lineno}: non-integer count {cell!r} for state {s!r}") from None
            cells.setdefault((s, meas), {})[int(bits, 2)] = value
    if n_qb is None:
        raise CountsFormatError(f"{path}: no data rows")
    d = 2 ** n_qb
    records = []
    for s in states:
        for m in measurements:
            got = cells.get((s, m))
            if got is None:
                continue
            if sorted(got) != list(range(d)):
                raise CountsFormatError(f"{path}: ({s}, {m}) does not list all {d} outcomes")
            records.append(CountsRecord(s, m, [got[j] for j in range(d)]))
    if n_c is None:
        totals = [r.n_c for r in records]
        n_c = max(set(totals), key=totals.count) if totals else 0
    _check_sums(records, n_c)
    return CountsFile(n_qb, int(n_c), measurements, states, records)
