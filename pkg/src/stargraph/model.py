"""Star-graph geometry, edge potentials and problem configuration.

A potential on edge ``j`` is stored as its Fourier-sine coefficients in the
basis ``sin(n*pi*(l_j - x)/l_j)``, ``n = 1..N``. Pointwise values are always
obtained by synthesizing that finite series.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np


class StarGraphError(Exception):
    """Base class for errors raised by this package."""


class InvalidProblemError(StarGraphError, ValueError):
    """Raised when a problem configuration violates its invariants."""

    def __init__(self, diagnostics: Sequence[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StarGraph:
    """``m`` edges of lengths ``l_j`` joined at the vertex ``x = 0``."""

    lengths: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lengths", _frozen_array(self.lengths, float))

    @property
    def m(self) -> int:
        return int(self.lengths.size)

    @property
    def total_length(self) -> float:
        return float(np.sum(self.lengths))

    def __eq__(self, other):
        if not isinstance(other, StarGraph):
            return NotImplemented
        return np.array_equal(self.lengths, other.lengths)

    def __hash__(self):
        return hash(self.lengths.tobytes())


@dataclass(frozen=True)
class EdgePotential:
    """Fourier-sine coefficients ``q_n``, ``n = 1..N``, of one edge potential."""

    coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _frozen_array(self.coeffs, complex))

    @classmethod
    def zeros(cls, n: int) -> "EdgePotential":
        return cls(np.zeros(n, complex))

    @property
    def order(self) -> int:
        return int(self.coeffs.size)

    def conj(self) -> "EdgePotential":
        return EdgePotential(np.conj(self.coeffs))

    def resized(self, n: int) -> "EdgePotential":
        """Truncate or zero-pad to ``n`` coefficients."""
        out = np.zeros(n, complex)
        k = min(n, self.order)
        out[:k] = self.coeffs[:k]
        return EdgePotential(out)

    def __eq__(self, other):
        if not isinstance(other, EdgePotential):
            return NotImplemented
        return np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash(self.coeffs.tobytes())


@dataclass(frozen=True)
class NumericalPolicy:
    pole_band: float = 1e-6
    quad_points_per_wavelength: int = 8
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    winding_round_tol: float = 0.1
    rng_seed: int = 0

    @classmethod
    def from_dict(cls, data: dict | None) -> "NumericalPolicy":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidProblemError([f"unknown policy field {name!r}" for name in sorted(unknown)])
        return cls(**data)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class Problem:
    graph: StarGraph
    potentials: tuple[EdgePotential, ...]
    policy: NumericalPolicy = field(default_factory=NumericalPolicy)

    def __post_init__(self):
        object.__setattr__(self, "potentials", tuple(self.potentials))

    @classmethod
    def from_lengths(cls, lengths, coeffs=None, policy: NumericalPolicy | None = None) -> "Problem":
        """Convenience constructor; ``coeffs`` is one coefficient sequence per edge."""
        graph = StarGraph(lengths)
        if coeffs is None:
            coeffs = [()] * graph.m
        potentials = tuple(EdgePotential(c) for c in coeffs)
        return cls(graph, potentials, policy or NumericalPolicy())

    @property
    def order(self) -> int:
        """Largest coefficient count over the edges."""
        return max((p.order for p in self.potentials), default=0)

    def with_potentials(self, potentials) -> "Problem":
        return replace(self, potentials=tuple(potentials))


def validate(problem: Problem) -> list[str]:
    """Return one diagnostic string per violated invariant (empty if valid)."""
    diags = []
    lengths = problem.graph.lengths
    if problem.graph.m < 2:
        diags.append("edge count below 2")
    if not np.all(np.isfinite(lengths)):
        diags.append("nonfinite length")
    elif np.any(lengths <= 0):
        diags.append("nonpositive length")
    if len(problem.potentials) != problem.graph.m:
        diags.append(
            f"potential count {len(problem.potentials)} does not match edge count {problem.graph.m}"
        )
    for j, p in enumerate(problem.potentials):
        if not np.all(np.isfinite(p.coeffs)):
            diags.append(f"nonfinite coefficient on edge {j + 1}")

    pol = problem.policy
    for name in ("pole_band", "newton_tol", "winding_round_tol"):
        value = getattr(pol, name)
        if not (math.isfinite(value) and value > 0):
            diags.append(f"policy {name} must be positive")
    if pol.winding_round_tol >= 0.5:
        diags.append("policy winding_round_tol must be below 0.5")
    if pol.quad_points_per_wavelength < 1:
        diags.append("policy quad_points_per_wavelength must be positive")
    if pol.newton_max_iter < 1:
        diags.append("policy newton_max_iter must be positive")
    if pol.rng_seed < 0:
        diags.append("policy rng_seed must be unsigned")
    return diags


def rational_independence_check(lengths, max_coeff: int = 20, tol: float = 1e-9):
    """Search for an integer relation ``sum n_j l_j = 0`` with ``|n_j| <= max_coeff``.

    Returns ``(independent, witness)``. ``witness`` is ``None`` when no
    relation exists in the search box, otherwise the relation with the
    smallest L1 norm, normalized so its first nonzero entry is positive.
    A relation counts when ``|sum n_j l_j| < tol * max|l_j|``.
    """
    lengths = np.asarray(lengths, dtype=float)
    if max_coeff < 1:
        raise ValueError("max_coeff must be at least 1")
    if np.any(lengths <= 0):
        raise ValueError("lengths must be positive")
    m = lengths.size
    span = np.arange(-max_coeff, max_coeff + 1)
    threshold = tol * float(np.max(lengths))

    best = None
    # Chunk over the first coordinate so memory stays (2M+1)^(m-1).
    rest = np.array(list(itertools.product(span, repeat=m - 1)), dtype=np.int64).reshape(-1, m - 1)
    rest_dot = rest @ lengths[1:] if m > 1 else np.zeros(1)
    for n0 in range(0, max_coeff + 1):
        vals = n0 * lengths[0] + rest_dot
        hits = np.abs(vals) < threshold
        if n0 == 0:
            # first nonzero entry must be positive among the remaining coordinates
            hits &= _first_nonzero_positive(rest)
        for idx in np.flatnonzero(hits):
            cand = np.concatenate(([n0], rest[idx]))
            key = (int(np.abs(cand).sum()), abs(float(vals[idx])))
            if best is None or key < best[0]:
                best = (key, cand)
    if best is None:
        return True, None
    return False, tuple(int(v) for v in best[1])


def _first_nonzero_positive(rows: np.ndarray) -> np.ndarray:
    nz = rows != 0
    has = nz.any(axis=1)
    first = np.argmax(nz, axis=1)
    vals = rows[np.arange(rows.shape[0]), first]
    return has & (vals > 0)


def project_to_fourier(samples, l: float, n: int) -> EdgePotential:
    """Fourier-sine coefficients of uniformly sampled values on ``[0, l]``.

    Samples must include both endpoints. The composite trapezoid rule is used;
    on a uniform grid it is exact for sine series of order below the number
    of intervals, so synthesize-then-project reproduces coefficients.
    """
    samples = np.asarray(samples, dtype=complex).reshape(-1)
    if l <= 0:
        raise ValueError("edge length must be positive")
    if n < 0:
        raise ValueError("coefficient count must be nonnegative")
    if samples.size < 2 * n + 2:
        raise ValueError(f"need at least {2 * n + 2} samples for {n} coefficients, got {samples.size}")
    x = np.linspace(0.0, l, samples.size)
    h = l / (samples.size - 1)
    w = np.full(samples.size, h)
    w[0] = w[-1] = h / 2
    modes = np.arange(1, n + 1)
    basis = np.sin(np.outer(modes, np.pi * (l - x) / l))
    return EdgePotential((2.0 / l) * basis @ (w * samples))


# -- JSON problem files ------------------------------------------------------


def problem_from_dict(data: dict[str, Any]) -> Problem:
    try:
        lengths = [float(v) for v in data["lengths"]]
    except KeyError:
        raise InvalidProblemError(["missing 'lengths'"]) from None
    except (TypeError, ValueError):
        raise InvalidProblemError(["'lengths' must be a list of numbers"]) from None
    raw = data.get("potentials")
    if raw is None:
        raw = [{"re": []} for _ in lengths]
    potentials = []
    for j, entry in enumerate(raw):
        re = np.asarray(entry.get("re", []), dtype=float)
        im = np.asarray(entry.get("im", np.zeros_like(re)), dtype=float)
        if re.shape != im.shape:
            raise InvalidProblemError([f"edge {j + 1}: 're' and 'im' lengths differ"])
        potentials.append(EdgePotential(re + 1j * im))
    policy = NumericalPolicy.from_dict(data.get("policy"))
    return Problem(StarGraph(lengths), tuple(potentials), policy)


def problem_to_dict(problem: Problem) -> dict[str, Any]:
    return {
        "lengths": [float(v) for v in problem.graph.lengths],
        "potentials": [
            {"re": [float(v) for v in p.coeffs.real], "im": [float(v) for v in p.coeffs.imag]}
            for p in problem.potentials
        ],
        "policy": problem.policy.to_dict(),
    }


def load_problem(path) -> Problem:
    with open(Path(path)) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidProblemError([f"{path}: invalid JSON ({exc})"]) from None
    return problem_from_dict(data)


def save_problem(problem: Problem, path) -> None:
    Path(path).write_text(json.dumps(problem_to_dict(problem), indent=2) + "\n")
