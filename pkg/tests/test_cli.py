import json

import numpy as np
import pytest

from semiblind_qpt.cli import main, parse_args
from semiblind_qpt.harness import CNOT
from semiblind_qpt.linalg import error_metric


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_then_qpt(tmp_path, capsys):
    counts = tmp_path / "c.json"
    gate = tmp_path / "g.npy"
    m_out = tmp_path / "m.npy"
    code, out, _ = run(capsys, "simulate", "--n-c", "5000", "--seed", "3",
                       "--out", str(counts), "--gate-out", str(gate))
    assert code == 0 and "wrote 40 records" in out
    code, out, _ = run(capsys, "qpt", str(counts), "--out", str(m_out), "--target", f"file:{gate}")
    assert code == 0 and "M_hat" in out and "epsilon" in out
    assert error_metric(np.load(m_out), np.load(gate)) < 0.1


def test_simulate_stdout_json(capsys):
    code, out, _ = run(capsys, "simulate", "--n-qb", "1", "--n-c", "10", "--gate", "cnot")
    # a CNOT needs two qubits
    assert code == 1
    code, out, _ = run(capsys, "simulate", "--n-qb", "1", "--n-c", "10")
    assert code == 0 and json.loads(out)["n_qb"] == 1


def test_simulate_deterministic(capsys):
    a = run(capsys, "simulate", "--seed", "9", "--n-c", "50")[1]
    b = run(capsys, "simulate", "--seed", "9", "--n-c", "50")[1]
    assert a == b


def test_replicate(capsys):
    code, out, _ = run(capsys, "replicate")
    assert code == 0
    eps = float(out.strip().splitlines()[-1].split("=")[1])
    assert 0.08 <= eps <= 0.14


def test_check_exit_codes(tmp_path, capsys):
    code, out, _ = run(capsys, "check", "--states", "hadamard")
    assert code == 0 and "identifiable: True" in out and "anchor column 1" in out
    basis = tmp_path / "basis.json"
    basis.write_text(json.dumps(np.eye(4).tolist()))
    code, out, _ = run(capsys, "check", "--states", f"file:{basis}")
    assert code == 2 and "identifiable: False" in out


def test_qpt_identifiability_failure(tmp_path, capsys):
    states = tmp_path / "s.json"
    states.write_text(json.dumps(np.eye(2).tolist()))
    counts = tmp_path / "c.json"
    diag = tmp_path / "g.json"
    diag.write_text(json.dumps([[1, 0], [0, "0+1i"]]))
    assert run(capsys, "simulate", "--n-qb", "1", "--states", f"file:{states}",
               "--gate", f"file:{diag}", "--exact", "--n-c", "1000",
               "--out", str(counts))[0] == 0
    code, _, err = run(capsys, "qpt", str(counts))
    assert code == 2 and "error" in err


def test_io_error(tmp_path, capsys):
    code, _, err = run(capsys, "qpt", str(tmp_path / "missing.json"))
    assert code == 3 and "error" in err


def test_invalid_inputs(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "qpt", str(bad))[0] == 1
    assert run(capsys, "campaign", "--vary", "colour=1")[0] == 1
    assert run(capsys, "simulate", "--states", "sunny")[0] == 1
    assert run(capsys, "simulate", "--n-c", "0")[0] == 1
    assert run(capsys, "simulate", "--no-such-flag")[0] == 1
    assert run(capsys, "simulate", "--systematic-std", "-1")[0] == 1


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_c": 77, "n-qb": 1}))
    args = parse_args(["simulate", "--config", str(cfg)])
    assert args.n_c == 77 and args.n_qb == 1
    # flags on the command line win over the file
    args = parse_args(["simulate", "--config", str(cfg), "--n-c", "5"])
    assert args.n_c == 5
    cfg.write_text(json.dumps({"colour": 1}))
    assert run(capsys, "simulate", "--config", str(cfg))[0] == 1


def test_campaign_writes_deterministic_csv(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        code, out, _ = run(capsys, "campaign", "--vary", "n_c=100,1000", "--trials", "3",
                           "--seed", "11", "--out", str(d))
        assert code == 0 and out.count("wrote") == 3
        outs.append({p.name: p.read_bytes() for p in d.iterdir() if "timing" not in p.name})
    assert outs[0] == outs[1] and len(outs[0]) == 2


def test_campaign_preset_stdout(capsys):
    code, out, _ = run(capsys, "campaign", "--preset", "nc", "--trials", "1", "--n-qb", "1")
    assert code == 0
    assert out.splitlines()[0] == "grid_point,n_trials,n_ok,p5,q1,median,q3,p95"
    assert len(out.splitlines()) == 6


def test_gate_file_validation(tmp_path, capsys):
    g = tmp_path / "g.json"
    g.write_text(json.dumps([[1, 1], [0, 1]]))
    assert run(capsys, "simulate", "--n-qb", "1", "--gate", f"file:{g}")[0] == 1
    np.save(tmp_path / "cnot.npy", CNOT)
    assert run(capsys, "simulate", "--gate", f"file:{tmp_path / 'cnot.npy'}", "--n-c", "5")[0] == 0
