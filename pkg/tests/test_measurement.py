import json
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from semiblind_qpt.linalg import random_state, tensor_product
from semiblind_qpt.measurement import (
    CountsFile,
    CountsFormatError,
    CountsRecord,
    CountsSumWarning,
    PauliAxis,
    born_probabilities,
    custom_measurement_set,
    default_labels,
    default_measurement_set,
    exact_counts,
    pauli_matrix,
    read_counts_csv,
    read_counts_file,
    sample_counts,
    write_counts_csv,
    write_counts_file,
)
from semiblind_qpt.harness import table2_path

SQ2 = 1 / np.sqrt(2)


class TestPauliMatrices:
    def test_z_is_identity(self):
        assert np.array_equal(pauli_matrix("Z"), np.eye(2))

    def test_x(self):
        assert np.allclose(pauli_matrix(PauliAxis.X), SQ2 * np.array([[1, 1], [1, -1]]), atol=0)

    def test_y(self):
        assert np.allclose(pauli_matrix("Y"), SQ2 * np.array([[1, 1], [1j, -1j]]), atol=0)

    def test_invalid_axis(self):
        with pytest.raises(ValueError):
            pauli_matrix("Q")

    @pytest.mark.parametrize("axis", "XYZ")
    def test_columns_are_eigenvectors_of_pauli_operator(self, axis):
        ops = {"X": np.array([[0, 1], [1, 0]]), "Y": np.array([[0, -1j], [1j, 0]]),
               "Z": np.diag([1, -1])}
        e = pauli_matrix(axis)
        for col, sign in zip(e.T, (1, -1)):
            assert np.allclose(ops[axis] @ col, sign * col)


class TestMeasurementSets:
    def test_one_qubit(self):
        assert default_measurement_set(1).labels == ("Z", "X", "Y")

    def test_two_qubits(self):
        assert default_measurement_set(2).labels == ("ZZ", "ZX", "ZY", "XX", "YX")

    def test_three_qubits(self):
        labels = default_labels(3)
        assert len(labels) == 7 and labels[0] == "ZZZ"
        assert labels == ["ZZZ", "ZZX", "ZZY", "ZXX", "ZYX", "XXX", "YXX"]

    @pytest.mark.parametrize("n_qb", [0, 7])
    def test_n_qb_range(self, n_qb):
        with pytest.raises(ValueError):
            default_measurement_set(n_qb)

    def test_experimental_set(self):
        meas = custom_measurement_set(["ZZ", "ZX", "ZY", "XX", "YY"])
        assert len(meas) == 5
        ey = SQ2 * np.array([[1, 1], [1j, -1j]])
        assert np.allclose(meas.matrices[4], np.kron(ey, ey), atol=1e-15)

    def test_single_type(self):
        meas = custom_measurement_set(["Z"])
        assert meas.n_qb == 1 and meas.dim == 2

    @pytest.mark.parametrize("labels", [["QQ"], ["ZZ", "Z"], [], ["ZZ", "ZZ"]])
    def test_malformed(self, labels):
        with pytest.raises(ValueError):
            custom_measurement_set(labels)

    @pytest.mark.parametrize("n_qb", range(1, 7))
    def test_matrices_are_unitary_tensor_products(self, n_qb):
        meas = default_measurement_set(n_qb)
        for lab, e in zip(meas.labels, meas.matrices):
            assert np.linalg.norm(e.conj().T @ e - np.eye(meas.dim)) < 1e-12
            expected = np.array([[1.0]])
            for c in lab:
                expected = np.kron(expected, pauli_matrix(c))
            assert np.allclose(e, expected, atol=1e-15)


class TestBornProbabilities:
    def test_uniform_example(self):
        v = np.array([0.5, 0.5, 0.5j, 0.5j])
        assert np.allclose(born_probabilities(np.eye(4), v), [0.25] * 4, atol=1e-15)

    def test_eigenstate_gives_indicator(self):
        e = default_measurement_set(2).matrix("YX")
        for j in range(4):
            p = born_probabilities(e, e[:, j])
            assert np.allclose(p, np.eye(4)[j], atol=1e-14)

    def test_x_on_zero(self):
        assert np.allclose(born_probabilities(pauli_matrix("X"), [1, 0]), [0.5, 0.5], atol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            born_probabilities(np.eye(4), np.ones(2))

    def test_outcome_bit_order(self):
        # |01> (qubit 2 excited) is outcome 1, |10> is outcome 2
        v = tensor_product(np.array([1, 0]), np.array([0, 1]))[:, 0]
        assert np.argmax(born_probabilities(np.eye(4), v)) == 1

    @given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.floats(-7, 7))
    def test_normalized_and_phase_invariant(self, seed, n_qb, theta):
        rng = np.random.default_rng(seed)
        meas = default_measurement_set(n_qb)
        v = random_state(meas.dim, rng)
        p = born_probabilities(meas.stacked(), v)
        assert np.all(p >= 0)
        assert np.allclose(p.sum(axis=1), 1, atol=1e-10)
        q = born_probabilities(meas.stacked(), np.exp(1j * theta) * v)
        assert np.allclose(p, q, atol=1e-14)


class TestSampling:
    def test_degenerate(self, rng):
        assert np.array_equal(sample_counts([1, 0, 0, 0], 50, rng), [50, 0, 0, 0])

    def test_sum_and_determinism(self):
        a = sample_counts([0.25] * 4, 50, np.random.default_rng(5))
        b = sample_counts([0.25] * 4, 50, np.random.default_rng(5))
        assert a.sum() == 50 and np.array_equal(a, b)

    def test_binomial_concentration(self):
        n_c = 10**6
        half_width = 3 * np.sqrt(n_c * 0.25)
        hits = [abs(sample_counts([0.5, 0.5], n_c, np.random.default_rng(s))[0] - n_c / 2)
                <= half_width for s in range(400)]
        # nominal coverage 0.9973; 400 draws put the 1e-3 quantile near 0.985
        assert np.mean(hits) >= 0.985

    def test_frequencies_converge(self, rng):
        p = np.array([0.1, 0.2, 0.3, 0.4])
        c = sample_counts(p, 10**6, rng)
        assert np.max(np.abs(c / 10**6 - p)) < 5e-3

    @pytest.mark.parametrize("probs,n_c", [([-0.1, 1.1], 10), ([0.5, 0.4], 10), ([0.5, 0.5], 0)])
    def test_invalid(self, rng, probs, n_c):
        with pytest.raises(ValueError):
            sample_counts(probs, n_c, rng)

    @given(st.lists(st.floats(0, 1), min_size=2, max_size=16).filter(lambda x: sum(x) > 0.1),
           st.integers(1, 10**9))
    def test_exact_counts_total_and_rounding(self, weights, n_c):
        p = np.array(weights) / sum(weights)
        c = exact_counts(p, n_c)
        assert c.sum() == n_c
        assert np.all(np.abs(c - p * n_c) < 1 + 1e-6)


@pytest.fixture
def small_file():
    recs = [CountsRecord("M v1", "Z", [3, 1]), CountsRecord("M v1", "X", [2, 2]),
            CountsRecord("M^2 v1", "Z", [0, 4]), CountsRecord("M^2 v1", "X", [4, 0])]
    return CountsFile(1, 4, ["Z", "X"], ["M v1", "M^2 v1"], recs)


class TestCountsFiles:
    def test_round_trip(self, tmp_path, small_file):
        p = tmp_path / "c.json"
        write_counts_file(small_file, p)
        back = read_counts_file(p)
        assert back.records == small_file.records
        assert back.states == small_file.states and back.n_c == 4

    def test_empty(self, tmp_path):
        p = tmp_path / "e.json"
        write_counts_file(CountsFile(2, 10, ["ZZ"], [], []), p)
        assert read_counts_file(p).records == []

    def test_sum_mismatch_warns_and_keeps(self, tmp_path):
        p = tmp_path / "w.json"
        payload = {"n_qb": 1, "n_c": 250, "measurements": ["Z"], "states": ["M v1"],
                   "records": [{"state": "M v1", "measurement": "Z", "counts": [200, 49]}]}
        p.write_text(json.dumps(payload))
        with pytest.warns(CountsSumWarning, match="M v1"):
            cf = read_counts_file(p)
        assert len(cf.records) == 1 and cf.records[0].n_c == 249

    @pytest.mark.parametrize("payload,match", [
        ("{", "invalid JSON"),
        ('{"n_qb": 1}', "missing top-level key"),
        ('{"n_qb": 1, "n_c": 2, "measurements": ["Z"], "states": [], "records": '
         '[{"state": "a", "measurement": "Z", "counts": [1, 1, 0]}]}', "record 0"),
        ('{"n_qb": 1, "n_c": 2, "measurements": ["Z"], "states": [], "records": '
         '[{"state": "a", "measurement": "X", "counts": [1, 1]}]}', "undeclared"),
        ('{"n_qb": 1, "n_c": 2, "measurements": ["Z"], "states": [], "records": '
         '[{"state": "a", "measurement": "Z", "counts": [-1, 3]}]}', "negative"),
    ])
    def test_parse_errors(self, tmp_path, payload, match):
        p = tmp_path / "bad.json"
        p.write_text(payload)
        with pytest.raises(CountsFormatError, match=match):
            read_counts_file(p)

    def test_csv_round_trip(self, tmp_path, small_file):
        p = tmp_path / "c.csv"
        write_counts_csv(small_file, p)
        back = read_counts_file(p)
        assert back.records == small_file.records

    def test_bundled_experiment_table(self):
        cf = read_counts_csv(table2_path())
        assert cf.n_qb == 2 and cf.n_c == 250
        assert cf.measurements == ["ZZ", "ZX", "ZY", "XX", "YY"]
        assert len(cf.states) == 8 and len(cf.records) == 40
        assert all(r.n_c == 250 for r in cf.records)
        by = {(r.state, r.measurement): r.counts.tolist() for r in cf.records}
        assert by[("M v1", "ZZ")] == [243, 6, 0, 1]
        assert by[("M^2 v4", "YY")] == [68, 71, 58, 53]
        assert by[("M v3", "ZX")] == [54, 71, 82, 43]

    def test_bundled_table_csv_is_bit_exact(self, tmp_path):
        cf = read_counts_csv(table2_path())
        out = tmp_path / "t.csv"
        write_counts_csv(cf, out)
        assert out.read_text() == table2_path().read_text()
