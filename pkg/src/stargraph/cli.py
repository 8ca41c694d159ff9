"""Command-line front end.

Exit codes: 0 success, 1 input error, 2 numerical failure. Failures print a
JSON object with ``error`` and ``diagnostics`` to standard error.
"""
from __future__ import annotations

import argparse
import contextlib
import dataclasses
import io
import json
import math
import os
import sys

import numpy as np

from .characteristic import build, phi_reference
from .inverse import PhiSamples, fit_potentials, standard_nodes, write_samples_csv
from .model import EdgePotential, InvalidProblemError, Problem, StarGraphError, load_problem
from .zeros import ContourError, estimate_density, estimate_support_extent, spectrum

SEED_ENV = "STARGRAPH_SEED"


class InputError(Exception):
    pass


class NumericalFailure(Exception):
    def __init__(self, message: str, diagnostics: dict | None = None, payload: str | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
        self.payload = payload


def _load(path: str) -> Problem:
    if path is None:
        raise InputError("--input is required")
    try:
        problem = load_problem(path)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    seed = os.environ.get(SEED_ENV)
    if seed is not None:
        try:
            value = int(seed)
        except ValueError:
            raise InputError(f"{SEED_ENV} must be an integer, got {seed!r}") from None
        problem = dataclasses.replace(problem, policy=dataclasses.replace(problem.policy, rng_seed=value))
    return problem


def _json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def parse_grid(text: str) -> np.ndarray:
    """``re:a:b:n[:im]`` -> ``n`` equispaced points ``a..b`` shifted by ``im * 1j``."""
    parts = text.split(":")
    if parts[0] != "re" or len(parts) not in (4, 5):
        raise InputError(f"grid must look like re:a:b:n[:im], got {text!r}")
    try:
        a, b = float(parts[1]), float(parts[2])
        n = int(parts[3])
        im = float(parts[4]) if len(parts) == 5 else 0.0
    except ValueError:
        raise InputError(f"malformed grid {text!r}") from None
    if n < 1:
        raise InputError("grid needs at least one point")
    return np.linspace(a, b, n) + 1j * im


# -- verbs --------------------------------------------------------------------


def cmd_spectrum(args) -> str:
    problem = _load(args.input)
    zs = spectrum(build(problem), args.rmax, problem.policy)
    roots = sorted(zs.roots, key=lambda r: (abs(r.location), r.location.real, r.location.imag))
    out = io.StringIO()
    out.write("re_z,im_z,multiplicity,structural\n")
    for r in roots:
        out.write(f"{r.location.real:.17g},{r.location.imag:.17g},{r.multiplicity},{str(r.structural).lower()}\n")
    return out.getvalue()


def cmd_char_eval(args) -> str:
    problem = _load(args.input)
    if args.nodes == "standard":
        nodes = standard_nodes(problem.graph, pole_band=problem.policy.pole_band)
    elif args.grid:
        nodes = np.concatenate([parse_grid(g) for g in args.grid])
    else:
        raise InputError("char-eval needs --grid or --nodes standard")
    values = build(problem).phi(nodes)
    out = io.StringIO()
    write_samples_csv(out, nodes, values)
    return out.getvalue()


def cmd_density(args) -> str:
    problem = _load(args.input)
    fit = estimate_density(build(problem), args.rmax, args.radii, tol=problem.policy.winding_round_tol)
    data = fit.to_dict()
    data["reference_slope"] = problem.graph.total_length / math.pi
    return _json(data)


def _potentials_from(path: str, m: int, order: int) -> tuple[EdgePotential, ...]:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    raw = data.get("potentials") if isinstance(data, dict) else data
    if raw is None or len(raw) != m:
        raise InputError(f"{path}: expected {m} potentials")
    pots = []
    for entry in raw:
        re = np.asarray(entry.get("re", []), float)
        im = np.asarray(entry.get("im", np.zeros_like(re)), float)
        if re.shape != im.shape:
            raise InputError(f"{path}: 're' and 'im' lengths differ")
        pots.append(EdgePotential(re + 1j * im).resized(order))
    return tuple(pots)


def cmd_invert(args) -> str:
    graph_problem = _load(args.graph)
    graph = graph_problem.graph
    try:
        target = PhiSamples.from_csv(args.target)
    except FileNotFoundError:
        raise InputError(f"{args.target}: no such file") from None
    if args.init:
        init = _potentials_from(args.init, graph.m, args.order)
    else:
        init = tuple(EdgePotential.zeros(args.order) for _ in range(graph.m))
    report = fit_potentials(target, graph, args.order, init, real_only=not args.complex,
                            fit_tol=args.fit_tol, max_iter=args.max_iter, policy=graph_problem.policy)
    text = _json(report.to_dict())
    if not report.converged:
        raise NumericalFailure("fit did not converge",
                               {"final_residual": report.final_residual, "fit_tol": report.fit_tol,
                                "iterations": report.iterations, "messages": report.messages},
                               payload=text)
    return text


def verify_problem(problem: Problem, n_points: int = 50, radius: float = 20.0) -> dict:
    """Run the identity, parity, reality and nonlocal-residual checks at seeded random points."""
    rng = np.random.default_rng(problem.policy.rng_seed)
    cf = build(problem)
    z = radius * np.sqrt(rng.uniform(0, 1, n_points)) * np.exp(2j * np.pi * rng.uniform(0, 1, n_points))
    x = rng.uniform(-radius, radius, n_points)
    scale = cf.magnitude(z)
    xscale = cf.magnitude(x)
    phi = cf.phi(z)
    suites = {}

    ref = phi_reference(problem, z)
    err = float(np.max(np.abs(phi - ref) / scale))
    suites["identity"] = {"max_error": err, "tolerance": 1e-8, "passed": err <= 1e-8}

    sign = (-1.0) ** problem.graph.m
    err = float(np.max(np.abs(cf.phi(-z) - sign * phi) / scale))
    suites["parity"] = {"max_error": err, "tolerance": 1e-11, "passed": err <= 1e-11}

    entry = {"conjugate_error": float(np.max(np.abs(cf.phi(np.conj(z)) - np.conj(phi)) / scale))}
    real_coeffs = all(not np.any(p.coeffs.imag) for p in problem.potentials)
    entry["imag_on_real_axis"] = float(np.max(np.abs(cf.phi(x).imag) / xscale))
    entry["tolerance"] = 1e-11
    entry["passed"] = entry["conjugate_error"] <= 1e-11 and entry["imag_on_real_axis"] <= 1e-11
    entry["real_coefficients"] = real_coeffs
    suites["reality"] = entry

    err = float(np.max(np.abs(cf.nonlocal_residual(z) + phi) / scale))
    suites["nonlocal-residual"] = {"max_error": err, "tolerance": 1e-8, "passed": err <= 1e-8}
    return {"suites": suites, "passed": all(s["passed"] for s in suites.values()),
            "seed": problem.policy.rng_seed, "points": n_points}


def cmd_verify(args) -> str:
    problem = _load(args.input)
    report = verify_problem(problem, args.points, args.radius)
    text = _json(report)
    if not report["passed"]:
        failed = [k for k, v in report["suites"].items() if not v["passed"]]
        raise NumericalFailure("verification failed", {"failed": failed}, payload=text)
    return text


def cmd_support(args) -> str:
    problem = _load(args.input)
    edges = []
    for j, (p, l) in enumerate(zip(problem.potentials, problem.graph.lengths)):
        entry = {"edge": j, "length": float(l)}
        try:
            entry["extent"] = estimate_support_extent(p, float(l), args.rmax)
        except ValueError as exc:
            entry["extent"] = None
            entry["error"] = str(exc)
        edges.append(entry)
    return _json({"edges": edges})


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stargraph", description="Characteristic functions of star graphs.")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add(name, func, needs_input=True):
        p = sub.add_parser(name)
        if needs_input:
            p.add_argument("--input", required=True, help="problem JSON file")
        p.add_argument("--output", help="output file (default: stdout)")
        p.set_defaults(func=func)
        return p

    p = add("spectrum", cmd_spectrum)
    p.add_argument("--rmax", type=float, required=True)

    p = add("char-eval", cmd_char_eval)
    p.add_argument("--grid", action="append", help="re:a:b:n[:im], repeatable")
    p.add_argument("--nodes", choices=["standard"])

    p = add("density", cmd_density)
    p.add_argument("--rmax", type=float, required=True)
    p.add_argument("--radii", type=int, default=20)

    p = add("invert", cmd_invert, needs_input=False)
    p.add_argument("--target", required=True, help="Phi samples CSV")
    p.add_argument("--graph", required=True, help="problem JSON providing the lengths")
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--init", help="JSON with initial potentials (default: zeros)")
    p.add_argument("--complex", action="store_true", help="fit imaginary parts too")
    p.add_argument("--fit-tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=100)

    p = add("verify", cmd_verify)
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--radius", type=float, default=20.0)

    p = add("support", cmd_support)
    p.add_argument("--rmax", type=float, default=None)
    return parser


def _write(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _fail(code: int, message: str, diagnostics=None) -> int:
    sys.stderr.write(json.dumps({"error": message, "diagnostics": diagnostics or {}}, sort_keys=True,
                                default=str) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        text = args.func(args)
        _write(text, args.output)
        return 0
    except NumericalFailure as exc:
        if exc.payload is not None:
            with contextlib.suppress(OSError):
                _write(exc.payload, args.output)
        return _fail(2, str(exc), exc.diagnostics)
    except InvalidProblemError as exc:
        return _fail(1, "invalid problem", {"messages": exc.diagnostics})
    except ContourError as exc:
        return _fail(2, str(exc), getattr(exc, "diagnostics", {}))
    except (InputError, ValueError, OSError, KeyError, TypeError) as exc:
        return _fail(1, str(exc))
    except (StarGraphError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(2, str(exc), {"type": type(exc).__name__})


if __name__ == "__main__":
    raise SystemExit(main())
