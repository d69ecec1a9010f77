"""Command-line surface: load a model file, run any computation, emit tables.

Model files are JSON documents with three keys:

* ``states``: the number of background states N;
* ``claims``: a map from claim size (integer-like string key) to an N x N
  row-major matrix of reals;
* ``initial``: the literal token ``"stationary"`` or an N-vector.

Subcommands exit 0 on success, 2 on validation problems (unreadable or
invalid model), and 1 on runtime errors.  Output is a human-readable table
by default; ``--format csv`` emits one row per quantity with the columns
``n,x,method,value,stderr`` and ``--format structured`` emits JSON.  All
floating-point output carries 12 significant digits.  There is no
environment-variable configuration; everything is a flag.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Any

import numpy as np

from . import ballot as ballot_mod
from . import hitting as hitting_mod
from . import montecarlo as mc_mod
from . import ruin as ruin_mod
from . import series as series_mod
from .algebra import conv_cache
from .model import (
    MatrixSeq,
    ModelSpec,
    ModelValidationError,
    reverse,
    stationary_distribution,
    validate,
)

__all__ = ["main", "entrypoint", "load_model_file", "parse_model_document", "model_document"]

DET_TOL = 1e-9
MC_SIGMAS = 3.0


class ModelFileError(ValueError):
    """The model document cannot be parsed into a model at all."""


def parse_model_document(doc: Any) -> ModelSpec:
    """Build an (unvalidated) model from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ModelFileError("model document must be a JSON object")
    unknown = set(doc) - {"states", "claims", "initial"}
    if unknown:
        raise ModelFileError(f"unknown keys in model document: {sorted(unknown)}")
    try:
        n = int(doc["states"])
        raw_claims = doc["claims"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"model document needs integer 'states' and a 'claims' map: {exc}")
    if not isinstance(raw_claims, dict) or not raw_claims:
        raise ModelFileError("'claims' must be a non-empty map of claim size to matrix")
    mats = {}
    for key, rows in raw_claims.items():
        try:
            m = int(key)
        except (TypeError, ValueError):
            raise ModelFileError(f"claim size key {key!r} is not an integer")
        if m < 0:
            raise ModelFileError(f"claim size key {key!r} is negative")
        arr = np.asarray(rows, dtype=float)
        if arr.shape != (n, n):
            raise ModelFileError(f"claim matrix for size {m} has shape {arr.shape}, expected ({n}, {n})")
        mats[m] = arr
    initial = doc.get("initial", "stationary")
    if isinstance(initial, str):
        if initial != "stationary":
            raise ModelFileError(f"'initial' must be \"stationary\" or an {n}-vector, got {initial!r}")
    else:
        initial = np.asarray(initial, dtype=float)
    return ModelSpec(n_states=n, claims=MatrixSeq(mats), initial=initial)


def model_document(spec: ModelSpec) -> dict:
    """Normalized JSON document for a model (inverse of the parser)."""
    return {
        "states": spec.n_states,
        "claims": {str(m): mat.tolist() for m, mat in spec.claims.items()},
        "initial": "stationary" if spec.stationary_initial else np.asarray(spec.initial).tolist(),
    }


def load_model_file(path: str) -> ModelSpec:
    """Parse and fully validate a model file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"model file {path} is not valid JSON: {exc}")
    spec = parse_model_document(doc)
    violations = validate(spec)
    if violations:
        raise ModelValidationError(violations)
    return spec


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _print_matrix(mat: np.ndarray, indent: str = "    ") -> None:
    for row in mat:
        print(indent + "  ".join(_fmt(v) for v in row))


def _csv_row(n, x, method, value, stderr="") -> str:
    parts = [
        "" if n is None else str(n),
        "" if x is None else str(x),
        method,
        _fmt(value),
        "" if stderr == "" else _fmt(stderr),
    ]
    return ",".join(parts)


def _emit_structured(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        with open(args.model, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        spec = parse_model_document(doc)
    except (OSError, json.JSONDecodeError, ModelFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    violations = validate(spec)
    if violations:
        for v in violations:
            print(f"violation: {v}")
        return 2
    if args.echo:
        print(json.dumps(model_document(spec), indent=2, sort_keys=True))
    else:
        print("OK")
    return 0


def cmd_ruin(args) -> int:
    spec = load_model_file(args.model)
    cfg = None
    if args.method == "mc":
        cfg = mc_mod.SimConfig(paths=args.paths, horizon=args.n, seed=args.seed, x0=args.x)
    report = ruin_mod.survival_report(spec, args.x, args.n, args.method, mc_config=cfg)
    phi = None
    if args.v is not None:
        phi = ruin_mod.phi_transform(spec, args.v, args.x)

    if args.format == "csv":
        print("n,x,method,value,stderr")
        for n in report.horizons:
            se = report.stderr[n] if report.stderr else ""
            print(_csv_row(n, report.x, report.method, report.survival[n], se))
        return 0
    if args.format == "structured":
        payload = {
            "command": "ruin",
            "x": report.x,
            "method": report.method,
            "horizons": report.horizons,
            "survival": {str(n): report.survival[n] for n in report.horizons},
            "ruin": {str(n): 1.0 - report.survival[n] for n in report.horizons},
        }
        if report.stderr:
            payload["stderr"] = {str(n): report.stderr[n] for n in report.horizons}
        if report.ruin_time_matrices:
            payload["ruin_time_matrices"] = {
                str(n): mat.tolist() for n, mat in report.ruin_time_matrices.items()
            }
        if phi is not None:
            payload["phi"] = {"v": args.v, "matrix": phi.tolist()}
        _emit_structured(payload)
        return 0

    print(f"model={args.model} x={report.x} method={report.method}")
    header = "n  survival        ruin"
    if report.stderr:
        header += "            stderr"
    print(header)
    for n in report.horizons:
        line = f"{n:<3}{_fmt(report.survival[n]):<16}{_fmt(1.0 - report.survival[n]):<16}"
        if report.stderr:
            line += _fmt(report.stderr[n])
        print(line.rstrip())
    if phi is not None:
        pi = stationary_distribution(spec).probs
        print(f"discounted ruin transform at v={_fmt(args.v)} (x={args.x}):")
        _print_matrix(phi)
        print(f"  weighted: {_fmt(float(pi @ phi @ np.ones(spec.n_states)))}")
    return 0


def cmd_hitting(args) -> int:
    spec = load_model_file(args.model)
    pi = stationary_distribution(spec).probs
    mats: dict[int, np.ndarray] | None = None
    estimates = None
    if args.method == "dp":
        table = hitting_mod.dp_Q(spec, args.n_max, args.level)
        mats = {n: table.matrix(n) for n in range(1, args.n_max + 1)}
    elif args.method == "lagrange":
        mats = {n: series_mod.lagrange_Q(spec, n, args.level) for n in range(1, args.n_max + 1)}
    else:
        cfg = mc_mod.SimConfig(paths=args.paths, horizon=args.n_max, seed=args.seed)
        estimates = mc_mod.estimate_hitting(spec, cfg, args.level)

    if args.format == "csv":
        print("n,x,method,value,stderr")
        for n in range(1, args.n_max + 1):
            if mats is not None:
                value = float(pi @ mats[n] @ np.ones(spec.n_states))
                print(_csv_row(n, args.level, args.method, value))
            else:
                print(_csv_row(n, args.level, args.method, estimates[n].value, estimates[n].stderr))
        return 0
    if args.format == "structured":
        payload: dict[str, Any] = {
            "command": "hitting",
            "level": args.level,
            "method": args.method,
            "horizons": list(range(1, args.n_max + 1)),
        }
        if mats is not None:
            payload["matrices"] = {str(n): mats[n].tolist() for n in mats}
            payload["weighted"] = {
                str(n): float(pi @ mats[n] @ np.ones(spec.n_states)) for n in mats
            }
        else:
            payload["weighted"] = {str(n): estimates[n].value for n in estimates}
            payload["stderr"] = {str(n): estimates[n].stderr for n in estimates}
        _emit_structured(payload)
        return 0

    print(f"model={args.model} level={args.level} method={args.method}")
    for n in range(1, args.n_max + 1):
        if mats is not None:
            value = float(pi @ mats[n] @ np.ones(spec.n_states))
            print(f"n={n}  weighted={_fmt(value)}")
            _print_matrix(mats[n])
        else:
            print(f"n={n}  weighted={_fmt(estimates[n].value)}  stderr={_fmt(estimates[n].stderr)}")
    return 0


def cmd_lundberg(args) -> int:
    spec = load_model_file(args.model)
    results: dict[str, Any] = {"command": "lundberg", "v": args.v, "side": args.side}
    lines: list[str] = [f"model={args.model} v={_fmt(args.v)}"]
    csv_rows: list[str] = []

    if args.side in ("right", "both"):
        sol = hitting_mod.lundberg_G(spec, args.v)
        results["G"] = sol.G.tolist()
        results["residual_G"] = sol.residuals["G"]
        lines.append(f"right solution (residual {_fmt(sol.residuals['G'])}):")
        lines.extend("    " + "  ".join(_fmt(v) for v in row) for row in sol.G)
        csv_rows.append(_csv_row(None, None, "lundberg-right-residual", sol.residuals["G"]))
    if args.side in ("left", "both"):
        sol = hitting_mod.lundberg_R(spec, args.v)
        gap = float(np.max(np.abs(sol.R - hitting_mod.r_from_reversal(spec, args.v))))
        results["R"] = sol.R.tolist()
        results["residual_R"] = sol.residuals["R"]
        results["reversal_gap"] = gap
        lines.append(f"left solution (residual {_fmt(sol.residuals['R'])}):")
        lines.extend("    " + "  ".join(_fmt(v) for v in row) for row in sol.R)
        lines.append(f"reversal cross-check gap: {_fmt(gap)}")
        csv_rows.append(_csv_row(None, None, "lundberg-left-residual", sol.residuals["R"]))
        csv_rows.append(_csv_row(None, None, "lundberg-reversal-gap", gap))

    if args.format == "csv":
        print("n,x,method,value,stderr")
        for row in csv_rows:
            print(row)
    elif args.format == "structured":
        _emit_structured(results)
    else:
        print("\n".join(lines))
    return 0


def cmd_ballot(args) -> int:
    spec = load_model_file(args.model)
    lhs = ballot_mod.ballot_conditional(spec, args.n, args.m)
    closed = max(0.0, 1.0 - args.m / args.n)
    diff = lhs - closed
    if args.format == "csv":
        print("n,x,method,value,stderr")
        print(_csv_row(args.n, args.m, "ballot-dp", lhs))
        print(_csv_row(args.n, args.m, "ballot-closed", closed))
        print(_csv_row(args.n, args.m, "ballot-diff", diff))
    elif args.format == "structured":
        _emit_structured(
            {
                "command": "ballot",
                "n": args.n,
                "m": args.m,
                "conditional": lhs,
                "closed_form": closed,
                "difference": diff,
            }
        )
    else:
        print(f"model={args.model} n={args.n} m={args.m}")
        print(f"conditional (constrained recursion): {_fmt(lhs)}")
        print(f"closed form 1 - m/n:                 {_fmt(closed)}")
        print(f"difference:                          {_fmt(diff)}")
    return 0


def cmd_simulate(args) -> int:
    spec = load_model_file(args.model)
    cfg = mc_mod.SimConfig(paths=args.paths, horizon=args.horizon, seed=args.seed, x0=args.x)
    curve = mc_mod.estimate_survival_curve(spec, cfg)
    if args.format == "csv":
        print("n,x,method,value,stderr")
        for n in sorted(curve):
            print(_csv_row(n, args.x, "mc", curve[n].value, curve[n].stderr))
    elif args.format == "structured":
        _emit_structured(
            {
                "command": "simulate",
                "x": args.x,
                "paths": args.paths,
                "seed": args.seed,
                "survival": {str(n): curve[n].value for n in curve},
                "stderr": {str(n): curve[n].stderr for n in curve},
            }
        )
    else:
        print(f"model={args.model} x={args.x} paths={args.paths} seed={args.seed}")
        print("n  survival        stderr")
        for n in sorted(curve):
            print(f"{n:<3}{_fmt(curve[n].value):<16}{_fmt(curve[n].stderr)}")
    return 0


def _crosscheck_checks(spec: ModelSpec, n_max: int, paths: int, seed: int):
    """Yield (name, deviation, tolerance, passed) for the invariant suite."""
    pi = stationary_distribution(spec).probs
    e = np.ones(spec.n_states)
    cache = conv_cache(spec)

    q_tables = {a: hitting_mod.dp_Q(spec, n_max, a) for a in range(1, n_max + 1)}
    dev = 0.0
    for n in range(1, n_max + 1):
        for a in range(1, n + 1):
            dev = max(dev, float(np.max(np.abs(
                series_mod.lagrange_Q(spec, n, a) - q_tables[a].matrix(n)
            ))))
    yield ("hitting: inversion vs dynamic programming", dev, DET_TOL, dev <= DET_TOL)

    v_tables = {a: hitting_mod.dp_V(spec, n_max, a) for a in range(1, n_max + 1)}
    dev = 0.0
    for n in range(1, n_max + 1):
        for a in range(1, n + 1):
            dev = max(dev, float(np.max(np.abs(
                series_mod.lagrange_V(spec, n, a) - v_tables[a].matrix(n)
            ))))
    yield ("hitting: inversion vs time reversal", dev, DET_TOL, dev <= DET_TOL)

    dev = 0.0
    dist_report = ruin_mod.survival_report(spec, 0, n_max, "distribution")
    for n in range(1, n_max + 1):
        values = [
            ruin_mod.takacs_survival(spec, n),
            ruin_mod.seal_survival(spec, 0, n),
            dist_report.survival[n],
            ruin_mod.dp_survival(spec, 0, n),
        ]
        dev = max(dev, max(values) - min(values))
    yield ("ruin: takacs = seal = distribution = recursion (x=0)", dev, DET_TOL, dev <= DET_TOL)

    dev = 0.0
    for n in range(1, n_max + 1):
        for m in range(1, n + 1):
            total = cache.nfold(n)(n - m).copy()
            for k in range(m, n + 1):
                total -= cache.nfold(n - k)(n - k) @ v_tables[m].matrix(k)
            dev = max(dev, abs(float(pi @ total @ e)))
    yield ("ruin: seal identity", dev, DET_TOL, dev <= DET_TOL)

    dev = 0.0
    for n in range(1, n_max + 1):
        for m in range(0, n):
            if float(pi @ cache.nfold(n)(m) @ e) <= 1e-300:
                continue
            lhs = ballot_mod.ballot_conditional(spec, n, m)
            dev = max(dev, abs(lhs - (1.0 - m / n)))
    yield ("ballot identity", dev, DET_TOL, dev <= DET_TOL)

    dev = 0.0
    for v in (0.5, 0.9):
        gap = np.max(np.abs(hitting_mod.lundberg_R(spec, v).R - hitting_mod.r_from_reversal(spec, v)))
        dev = max(dev, float(gap))
    yield ("lundberg: left solution vs reversal", dev, DET_TOL, dev <= DET_TOL)

    n_mc = min(3, n_max)
    cfg = mc_mod.SimConfig(paths=paths, horizon=n_mc, seed=seed)
    est = mc_mod.estimate_survival(spec, cfg, n_mc)
    exact = ruin_mod.seal_survival(spec, 0, n_mc)
    z = abs(est.value - exact) / est.stderr if est.stderr > 0 else 0.0
    yield (f"monte carlo: survival x=0 n={n_mc} (z-score)", z, MC_SIGMAS, z <= MC_SIGMAS)


def cmd_crosscheck(args) -> int:
    spec = load_model_file(args.model)
    checks = list(_crosscheck_checks(spec, args.n_max, args.paths, args.seed))
    all_ok = all(ok for _, _, _, ok in checks)
    if args.format == "csv":
        print("n,x,method,value,stderr")
        for name, dev, _, _ in checks:
            print(_csv_row(None, None, name.replace(",", ";"), dev))
    elif args.format == "structured":
        _emit_structured(
            {
                "command": "crosscheck",
                "n_max": args.n_max,
                "checks": [
                    {"name": name, "deviation": dev, "tolerance": tol, "passed": ok}
                    for name, dev, tol, ok in checks
                ],
                "passed": all_ok,
            }
        )
    else:
        print(f"model={args.model} n_max={args.n_max}")
        for name, dev, tol, ok in checks:
            print(f"{'PASS' if ok else 'FAIL'}  {name}: max deviation {dev:.3e} (tol {tol:g})")
        print("all checks passed" if all_ok else "some checks FAILED")
    return 0 if all_ok else 1


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_format(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--format", choices=["human", "csv", "structured"], default="human",
        help="output format (default: human-readable table)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="markovruin",
        description="Finite-time ruin probabilities and first-passage laws "
        "for Markov-modulated binomial risk models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file against every invariant")
    p.add_argument("model")
    p.add_argument("--echo", action="store_true", help="re-emit the normalized model document")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("ruin", help="finite-time survival/ruin probabilities")
    p.add_argument("--model", required=True)
    p.add_argument("--x", type=int, default=0, help="initial surplus")
    p.add_argument("--n", type=int, required=True, help="largest horizon")
    p.add_argument("--method", choices=["takacs", "seal", "distribution", "mc"], default="seal")
    p.add_argument("--v", type=float, default=None,
                   help="also report the discounted ruin transform at this discount")
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    _add_format(p)
    p.set_defaults(func=cmd_ruin)

    p = sub.add_parser("hitting", help="first-passage law to an upper level")
    p.add_argument("--model", required=True)
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument("--method", choices=["dp", "lagrange", "mc"], default="dp")
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    _add_format(p)
    p.set_defaults(func=cmd_hitting)

    p = sub.add_parser("lundberg", help="matrix Lundberg solutions and residuals")
    p.add_argument("--model", required=True)
    p.add_argument("--v", type=float, required=True)
    p.add_argument("--side", choices=["right", "left", "both"], default="both")
    _add_format(p)
    p.set_defaults(func=cmd_lundberg)

    p = sub.add_parser("ballot", help="ballot conditional probability vs closed form")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    _add_format(p)
    p.set_defaults(func=cmd_ballot)

    p = sub.add_parser("simulate", help="seeded Monte Carlo survival estimates")
    p.add_argument("--model", required=True)
    p.add_argument("--paths", type=int, required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--x", type=int, default=0)
    _add_format(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("crosscheck", help="run the full invariant suite")
    p.add_argument("--model", required=True)
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    _add_format(p)
    p.set_defaults(func=cmd_crosscheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ModelFileError, ModelValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
