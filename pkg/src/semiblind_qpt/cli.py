"""Command-line interface: ``semiblind-qpt <command> [options]``.

Commands
--------
simulate   simulate a setup and write its counts file
qpt        estimate a process from a counts file
campaign   run a Monte Carlo campaign and write CSV files
replicate  estimate the CNOT process from the bundled (or given) experiment counts
check      report whether a set of input states identifies every unitary

Exit codes: 0 success, 1 invalid input, 2 identifiability failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .harness import (
    CNOT,
    SetupSpec,
    StateFamily,
    format_matrix,
    preset_grid,
    replicate_experiment,
    run_campaign,
    simulate_setup,
    table2_path,
)
from .identifiability import check_nsc
from .linalg import error_metric, is_unitary, random_unitary
from .measurement import CountsFormatError, counts_to_json, read_counts_file, write_counts_file
from .qpt import IdentifiabilityFailure, parse_state_label, qpt_pipeline
from .qst import QstError

EXIT_OK, EXIT_INVALID, EXIT_IDENTIFIABILITY, EXIT_IO = 0, 1, 2, 3


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # bad flags are validation errors (exit 1), keeping 2 for identifiability
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _real_or_inf(text: str) -> float:
    value = float(text)
    if value < 0 or math.isnan(value):
        raise argparse.ArgumentTypeError(f"expected a non-negative number or 'inf', got {text!r}")
    return value


def _parse_complex(item) -> complex:
    if isinstance(item, (list, tuple)) and len(item) == 2:
        return complex(float(item[0]), float(item[1]))
    if isinstance(item, str):
        return complex(item.replace(" ", "").replace("i", "j"))
    return complex(item)


def load_matrix(path) -> np.ndarray:
    """Matrix from ``.npy`` or JSON (rows of numbers, ``[re, im]`` pairs or strings)."""
    path = Path(path)
    if path.suffix == ".npy":
        return np.asarray(np.load(path), dtype=complex)
    data = json.loads(path.read_text())
    if isinstance(data, dict):
        data = data.get("states", data.get("matrix"))
    return np.array([[_parse_complex(z) for z in row] for row in data], dtype=complex)


def load_states(path) -> list[np.ndarray]:
    """States file: a JSON list of state vectors (or ``{"states": [...]}``), or ``.npy`` columns."""
    path = Path(path)
    if path.suffix == ".npy":
        mat = np.asarray(np.load(path), dtype=complex)
        return [mat[:, j] for j in range(mat.shape[1])]
    return [row for row in load_matrix(path)]


def _gate(text: str | None, dim: int, rng) -> np.ndarray:
    if text is None or text == "random":
        return random_unitary(dim, rng)
    if text == "cnot":
        return CNOT.copy()
    if text.startswith("file:"):
        m = load_matrix(text[5:])
        if m.shape != (dim, dim) or not is_unitary(m, 1e-6):
            raise UsageError(f"gate in {text[5:]} is not a {dim}x{dim} unitary")
        return m
    raise UsageError(f"unknown gate {text!r} (use random, cnot or file:<path>)")


def _spec_from_args(args) -> SetupSpec:
    states = args.states
    initial = None
    if states.startswith("file:"):
        initial = load_states(states[5:])
        family = StateFamily.EXPLICIT if len(initial) > 1 else StateFamily.SINGLE_GIVEN
    else:
        try:
            family = StateFamily(states)
        except ValueError:
            raise UsageError(f"unknown state family {states!r}") from None
    return SetupSpec(n_qb=args.n_qb, n_i=args.n_i, n_s=args.n_s, n_c=args.n_c, states=family,
                     systematic_std=args.systematic_std,
                     hadamard_angle_std=args.hadamard_angle_std, seed=args.seed,
                     exact=args.exact, initial_states=initial, b_orth=args.b_orth)


def cmd_simulate(args) -> int:
    spec = _spec_from_args(args)
    rng = np.random.default_rng(args.seed)
    m = _gate(args.gate, spec.dim, rng)
    counts = simulate_setup(spec, m, rng)
    if args.out:
        write_counts_file(counts, args.out)
        print(f"wrote {len(counts.records)} records to {args.out}")
    else:
        sys.stdout.write(counts_to_json(counts))
    if args.gate_out:
        np.save(args.gate_out, m)
    return EXIT_OK


def _infer_shape(counts) -> tuple[int, int]:
    pairs = [parse_state_label(s) for s in counts.states]
    return max(j for j, _ in pairs), max(k for _, k in pairs)


def cmd_qpt(args) -> int:
    counts = read_counts_file(args.counts)
    n_i, n_s = _infer_shape(counts)
    n_i = args.n_i or n_i
    n_s = args.n_s or n_s
    result = qpt_pipeline(counts, counts.measurement_set(), n_i, n_s, b_orth=args.b_orth,
                          seed=args.seed)
    print(format_matrix(result.m_hat, "M_hat"))
    print(f"tls_residual = {result.tls_residual:.6g}")
    if result.degenerate:
        print("warning: rank-deficient problem, the estimate is not unique")
    if result.phases.dropped_columns:
        print(f"dropped columns: {result.phases.dropped_columns}")
    if args.target:
        target = _gate(args.target, result.m_hat.shape[0], None)
        print(f"epsilon = {error_metric(result.m_hat, target):.6g}")
    if args.out:
        np.save(args.out, result.m_hat)
    return EXIT_OK


def cmd_campaign(args) -> int:
    base = _spec_from_args(args)
    if args.preset:
        grid = preset_grid(args.preset, base)
    elif args.vary:
        key, _, values = args.vary.partition("=")
        field = key.strip().replace("-", "_")
        casts = {"n_c": int, "n_qb": int, "n_s": int, "n_i": int,
                 "systematic_std": _real_or_inf, "hadamard_angle_std": _real_or_inf}
        if field not in casts or not values:
            raise UsageError(f"--vary expects one of {sorted(casts)} as key=v1,v2,...")
        grid = []
        for text in values.split(","):
            value = casts[field](text)
            spec = replace(base, **{field: value})
            if field == "n_qb" and args.n_i is None and base.states is StateFamily.HADAMARD:
                spec = replace(spec, n_i=2 ** value)
            grid.append((f"{field}={text}", spec))
    else:
        grid = [("base", base)]
    result = run_campaign(grid, trials=args.trials, seed=args.seed, workers=args.workers)
    if args.out:
        paths = result.write(args.out, prefix=args.prefix)
        for p in paths.values():
            print(f"wrote {p}")
    sys.stdout.write(result.summary_csv())
    return EXIT_OK


def cmd_replicate(args) -> int:
    path = args.counts or table2_path()
    target = _gate(args.target, 4, None) if args.target else CNOT
    report = replicate_experiment(path, target, seed=args.seed, b_orth=args.b_orth)
    print(report.text())
    return EXIT_OK


def cmd_check(args) -> int:
    if args.states.startswith("file:"):
        x = np.stack(load_states(args.states[5:]), axis=1)
    elif args.states == "hadamard":
        from .harness import generate_hadamard_states

        x = np.stack(generate_hadamard_states(args.n_qb), axis=1)
    else:
        raise UsageError("check needs --states hadamard or file:<path>")
    x = x / np.linalg.norm(x, axis=0)
    ok, report = check_nsc(x, args.threshold)
    print(f"columns: {x.shape[1]}, dimension: {x.shape[0]}")
    print(f"identifiable: {ok}")
    print(f"sufficient condition: {report.satisfies_sufficient}"
          + (f" (anchor column {report.anchor + 1})" if report.anchor is not None else ""))
    print(f"closure blocks: {[[l + 1 for l in b] for b in report.blocks]}")
    print(f"smallest singular value: {report.margin[0]:.4g}, "
          f"smallest anchor |dot|: {report.margin[1]:.4g}")
    return EXIT_OK if ok else EXIT_IDENTIFIABILITY


def _add_setup_flags(p):
    p.add_argument("--n-qb", type=int, default=2)
    p.add_argument("--n-i", type=int, default=None, help="initial states (default: d, or 1 for random)")
    p.add_argument("--n-s", type=int, default=2, help="time steps measured per initial state")
    p.add_argument("--n-c", type=int, default=1000, help="copies per state and measurement type")
    p.add_argument("--states", default="hadamard",
                   help="hadamard | random | baldwin | file:<path>")
    p.add_argument("--systematic-std", type=_real_or_inf, default=0.0)
    p.add_argument("--hadamard-angle-std", type=_real_or_inf, default=0.0)
    p.add_argument("--exact", action="store_true", help="expected counts instead of sampling")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="semiblind-qpt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--b-orth", type=float, default=0.05)
    common.add_argument("--out", default=None)
    common.add_argument("--config", default=None, help="JSON file with flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate counts")
    _add_setup_flags(p)
    p.add_argument("--gate", default="random", help="random | cnot | file:<path>")
    p.add_argument("--gate-out", default=None, help="save the simulated process (.npy)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("qpt", parents=[common], help="estimate a process from counts")
    p.add_argument("counts")
    p.add_argument("--n-i", type=int, default=None)
    p.add_argument("--n-s", type=int, default=None)
    p.add_argument("--target", default=None, help="cnot | file:<path>")
    p.set_defaults(func=cmd_qpt)

    p = sub.add_parser("campaign", parents=[common], help="Monte Carlo campaign")
    _add_setup_flags(p)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--preset", choices=["nc", "systematic", "qubits", "sqpt"], default=None)
    p.add_argument("--vary", default=None, help="e.g. n_c=100,1000,10000")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--prefix", default="campaign")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("replicate", parents=[common], help="replicate the CNOT experiment")
    p.add_argument("--counts", default=None, help="counts file (default: bundled data)")
    p.add_argument("--target", default=None, help="cnot (default) | file:<path>")
    p.set_defaults(func=cmd_replicate)

    p = sub.add_parser("check", parents=[common], help="identifiability report")
    p.add_argument("--states", default="hadamard")
    p.add_argument("--n-qb", type=int, default=2)
    p.add_argument("--threshold", type=float, default=1e-10)
    p.set_defaults(func=cmd_check)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    """Parse ``argv``; values from ``--config`` fill in flags not given explicitly."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.config}: invalid JSON: {exc.msg}") from exc
        if not isinstance(config, dict):
            raise UsageError(f"{args.config}: expected a JSON object")
        known = vars(args)
        defaults = {}
        for key, value in config.items():
            dest = key.lstrip("-").replace("-", "_")
            if dest not in known:
                raise UsageError(f"{args.config}: unknown key {key!r}")
            defaults[dest] = value
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        return args.func(args)
    except IdentifiabilityFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IDENTIFIABILITY
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, CountsFormatError, QstError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
