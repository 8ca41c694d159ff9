"""Recovery of edge potentials from samples of the characteristic function.

The fit works on the coefficient vectors directly. At fixed nodes ``z_k``

    Phi(z_k) = base_k + sum_j E_j[k, :] @ b_j,
    b_{j,n} = 2 Re q_{j,n} + c_{j,n} |q_{j,n}|^2,   c_{j,n} = (-1)^n l_j^2 / (2 n pi),

with ``E_j`` the basis transforms times ``prod_{k != j} sin(z l_k)``. The
model is therefore quadratic in the coefficients and its Jacobian is exact.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .characteristic import _sine_products, build
from .model import EdgePotential, NumericalPolicy, Problem, StarGraph, project_to_fourier, rational_independence_check
from .transforms import basis_transforms
from .zeros import ContourError, estimate_support_extent, real_zero_extent

DEFAULT_FIT_TOL = 1e-10


def standard_nodes(graph: StarGraph, n_real: int = 200, n_offaxis: int = 50, z_max: float | None = None,
                   pole_band: float = 1e-6) -> np.ndarray:
    """Default sample nodes: ``n_real`` points on ``(0, z_max]`` and ``n_offaxis`` on ``Im z = 1``.

    ``z_max`` defaults to ``4 * sum(l_j)``. Nodes falling inside a pole band
    of some ``n*pi/l_j`` are nudged just outside it.
    """
    z_max = 4.0 * graph.total_length if z_max is None else z_max
    real = z_max * np.arange(1, n_real + 1) / n_real
    off = z_max * np.arange(1, n_offaxis + 1) / n_offaxis + 1j
    nodes = np.concatenate([real.astype(complex), off])
    for l in graph.lengths:
        k = math.pi / l
        n = np.round(nodes.real / k)
        w = n * k
        near = (n > 0) & (np.abs(nodes - w) < pole_band * np.abs(w) * 10)
        nodes[near] += 20 * pole_band * np.abs(w[near])
    return nodes


@dataclass(frozen=True)
class PhiSamples:
    nodes: np.ndarray
    values: np.ndarray
    provenance: str = "external"

    def __post_init__(self):
        nodes = np.asarray(self.nodes, complex).reshape(-1)
        values = np.asarray(self.values, complex).reshape(-1)
        if nodes.shape != values.shape:
            raise ValueError("nodes and values must have the same length")
        if np.unique(nodes).size != nodes.size:
            raise ValueError("sample nodes must be distinct")
        if not np.all(np.isfinite(values)):
            raise ValueError("sample values must be finite")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    def to_csv(self, path) -> None:
        write_samples_csv(path, self.nodes, self.values)

    @classmethod
    def from_csv(cls, path) -> "PhiSamples":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"re_z", "im_z", "re_phi", "im_phi"} - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing columns {sorted(missing)}")
            rows = [(float(r["re_z"]), float(r["im_z"]), float(r["re_phi"]), float(r["im_phi"])) for r in reader]
        arr = np.array(rows, float).reshape(-1, 4)
        return cls(arr[:, 0] + 1j * arr[:, 1], arr[:, 2] + 1j * arr[:, 3], provenance=str(path))


def write_samples_csv(path_or_file, nodes, values) -> None:
    def emit(fh):
        fh.write("re_z,im_z,re_phi,im_phi\n")
        for z, v in zip(nodes, values):
            fh.write(f"{z.real:.17g},{z.imag:.17g},{v.real:.17g},{v.imag:.17g}\n")

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            emit(fh)


def sample_phi(problem: Problem, nodes=None) -> PhiSamples:
    nodes = standard_nodes(problem.graph, pole_band=problem.policy.pole_band) if nodes is None else nodes
    values = build(problem).phi(np.asarray(nodes, complex))
    return PhiSamples(nodes, values, provenance="synthetic")


def phi_distance(p1: Problem, p2: Problem, nodes=None) -> float:
    """``max_k |Phi1(z_k) - Phi2(z_k)|`` over ``nodes`` (standard nodes by default)."""
    if p1.graph != p2.graph:
        raise ValueError("characteristic functions on different graphs cannot be compared")
    nodes = standard_nodes(p1.graph, pole_band=p1.policy.pole_band) if nodes is None else np.asarray(nodes, complex)
    return float(np.max(np.abs(build(p1).phi(nodes) - build(p2).phi(nodes))))


# -- least squares ------------------------------------------------------------


class PhiFit:
    """Residual and Jacobian of ``Phi(params; z_k) - target_k``, scaled by ``||target||``.

    ``params`` holds ``Re q_{j,n}`` edge by edge, followed by ``Im q_{j,n}``
    when ``real_only`` is false. Residuals stack real then imaginary parts.
    """

    def __init__(self, target: PhiSamples, graph: StarGraph, order: int, real_only: bool = True,
                 pole_band: float = 1e-6):
        self.target = target
        self.graph = graph
        self.order = order
        self.real_only = real_only
        z = target.nodes
        _, _, prod, _ = _sine_products(z, graph.lengths)
        self.base = np.zeros(z.size, complex)
        self.basis = []
        self.quad = []
        for j, l in enumerate(graph.lengths):
            self.base += z * np.cos(z * l) * prod[:, j]
            self.basis.append(basis_transforms(z, l, order, pole_band) * prod[:, j][:, None])
            n = np.arange(1, order + 1)
            self.quad.append((-1.0) ** n * l * l / (2 * n * math.pi))
        self.scale = float(np.linalg.norm(target.values)) or 1.0

    @property
    def n_params(self) -> int:
        k = self.graph.m * self.order
        return k if self.real_only else 2 * k

    def pack(self, potentials: Sequence[EdgePotential]) -> np.ndarray:
        c = np.array([p.resized(self.order).coeffs for p in potentials]).reshape(-1)
        return c.real.copy() if self.real_only else np.concatenate([c.real, c.imag])

    def unpack(self, x: np.ndarray) -> tuple[EdgePotential, ...]:
        k = self.graph.m * self.order
        c = x[:k] + (0j if self.real_only else 1j * x[k:])
        return tuple(EdgePotential(row) for row in np.asarray(c, complex).reshape(self.graph.m, self.order))

    def _split(self, x):
        k = self.graph.m * self.order
        a = x[:k].reshape(self.graph.m, self.order)
        b = np.zeros_like(a) if self.real_only else x[k:].reshape(self.graph.m, self.order)
        return a, b

    def model(self, x: np.ndarray) -> np.ndarray:
        a, b = self._split(np.asarray(x, float))
        phi = self.base.copy()
        for j in range(self.graph.m):
            if self.order:
                phi += self.basis[j] @ (2 * a[j] + self.quad[j] * (a[j] ** 2 + b[j] ** 2))
        return phi

    def residual(self, x: np.ndarray) -> np.ndarray:
        d = (self.model(x) - self.target.values) / self.scale
        return np.concatenate([d.real, d.imag])

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        a, b = self._split(np.asarray(x, float))
        cols = []
        for j in range(self.graph.m):
            cols.append(self.basis[j] * (2 + 2 * self.quad[j] * a[j])[None, :])
        if not self.real_only:
            for j in range(self.graph.m):
                cols.append(self.basis[j] * (2 * self.quad[j] * b[j])[None, :])
        if not cols or self.order == 0:
            return np.zeros((2 * self.target.nodes.size, 0))
        jc = np.concatenate(cols, axis=1) / self.scale
        return np.concatenate([jc.real, jc.imag], axis=0)

    def cost(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(self.residual(x)))


@dataclass
class FitReport:
    recovered: tuple[EdgePotential, ...]
    initial: tuple[EdgePotential, ...]
    residual_history: list[float]
    iterations: int
    converged: bool
    final_residual: float
    fit_tol: float = DEFAULT_FIT_TOL
    damping: float = 1e-3
    messages: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        def pots(ps):
            return [{"re": [float(v) for v in p.coeffs.real], "im": [float(v) for v in p.coeffs.imag]} for p in ps]

        return {
            "recovered": pots(self.recovered),
            "initial": pots(self.initial),
            "residual_history": [float(r) for r in self.residual_history],
            "iterations": self.iterations,
            "converged": self.converged,
            "final_residual": float(self.final_residual),
            "fit_tol": self.fit_tol,
            "damping": self.damping,
            "messages": list(self.messages),
        }


def fit_potentials(target: PhiSamples, graph: StarGraph, order: int,
                   init: Sequence[EdgePotential] | None = None, real_only: bool = True,
                   fit_tol: float = DEFAULT_FIT_TOL, max_iter: int = 100,
                   policy: NumericalPolicy | None = None) -> FitReport:
    """Damped Gauss-Newton (Levenberg-Marquardt) fit of edge coefficients to ``target``.

    The residual is ``||Phi_candidate - target|| / ||target||`` over the
    sample nodes; a step is accepted only if it lowers it.
    """
    policy = policy or NumericalPolicy()
    n_eq = 2 * target.nodes.size
    if target.nodes.size < 2 * graph.m * order:
        raise ValueError(f"need at least {2 * graph.m * order} sample nodes, got {target.nodes.size}")
    if init is None:
        init = tuple(EdgePotential.zeros(order) for _ in range(graph.m))
    if len(init) != graph.m:
        raise ValueError("init must provide one potential per edge")
    if any(p.order != order for p in init):
        raise ValueError(f"init potentials must have {order} coefficients")
    problem = PhiFit(target, graph, order, real_only, policy.pole_band)
    x = problem.pack(init)
    r = problem.residual(x)
    cost = float(np.linalg.norm(r))
    history = [cost]
    messages: list[str] = []
    mu = 1e-3
    accepted = 0
    converged = cost <= fit_tol
    attempts = 0
    while not converged and accepted < max_iter and attempts < 10 * max_iter:
        attempts += 1
        jac = problem.jacobian(x)
        diag = np.sum(jac * jac, axis=0)
        diag = np.maximum(diag, 1e-12 * max(float(diag.max(initial=0.0)), 1e-300))
        aug = np.vstack([jac, np.diag(np.sqrt(mu * diag))])
        rhs = np.concatenate([-r, np.zeros(x.size)])
        try:
            step = np.linalg.lstsq(aug, rhs, rcond=None)[0]
        except np.linalg.LinAlgError:
            mu *= 10
            messages.append(f"singular normal equations; damping raised to {mu:g}")
            continue
        x_new = x + step
        r_new = problem.residual(x_new)
        cost_new = float(np.linalg.norm(r_new))
        if cost_new < cost:
            small = np.linalg.norm(step) <= 1e-15 * (1 + np.linalg.norm(x))
            x, r = x_new, r_new
            stalled = cost - cost_new <= 1e-15 * cost
            cost = cost_new
            history.append(cost)
            accepted += 1
            mu = max(mu / 10, 1e-12)
            converged = cost <= fit_tol
            if not converged and (small or stalled):
                messages.append("step below working precision")
                break
        else:
            mu *= 10
            if mu > 1e16:
                messages.append("damping exceeded 1e16 without descent")
                break
    if not converged and accepted >= max_iter:
        messages.append(f"iteration cap {max_iter} reached")
    if n_eq < problem.n_params:
        messages.append("underdetermined system")
    return FitReport(problem.unpack(x), tuple(init), history, accepted, converged, cost, fit_tol, mu, messages)


def jacobian_rank(target: PhiSamples, graph: StarGraph, potentials: Sequence[EdgePotential],
                  real_only: bool = True, rtol: float = 1e-9) -> tuple[int, int]:
    """Numerical rank of the fit Jacobian at ``potentials`` and the parameter count."""
    order = max(p.order for p in potentials)
    fit = PhiFit(target, graph, order, real_only)
    jac = fit.jacobian(fit.pack(potentials))
    if jac.shape[1] == 0:
        return 0, 0
    s = np.linalg.svd(jac, compute_uv=False)
    return int(np.sum(s > rtol * s[0])), jac.shape[1]


# -- experiments --------------------------------------------------------------


def coefficient_error(a: Sequence[EdgePotential], b: Sequence[EdgePotential]) -> float:
    errs = [np.max(np.abs(p.coeffs - q.coeffs), initial=0.0) for p, q in zip(a, b)]
    return float(max(errs, default=0.0))


def perturb(potentials: Sequence[EdgePotential], fraction: float, rng: np.random.Generator) -> tuple:
    """Multiply every real coefficient by ``1 + U(-fraction, fraction)``."""
    out = []
    for p in potentials:
        factor = 1 + rng.uniform(-fraction, fraction, p.order)
        out.append(EdgePotential(p.coeffs.real * factor))
    return tuple(out)


@dataclass
class UniquenessReport:
    lengths: list[float]
    order: int
    trials: int
    seed: int
    independent: bool
    witness: list[int] | None
    warnings: list[str]
    min_pairwise_distance: float | None
    separation_floor: float
    recovery_errors: list[float]
    final_residuals: list[float]
    converged: list[bool]
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def uniqueness_experiment(graph: StarGraph, order: int, trials: int, seed: int = 0,
                          perturbation: float = 0.5, nodes=None, recovery_tol: float = 1e-5,
                          fit_tol: float = DEFAULT_FIT_TOL) -> UniquenessReport:
    """Distinguishability and round-trip recovery for random real potentials."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    independent, witness = rational_independence_check(graph.lengths, 20, 1e-9)
    warnings = [] if independent else [f"edge lengths are rationally dependent (relation {list(witness)})"]
    nodes = standard_nodes(graph) if nodes is None else np.asarray(nodes, complex)
    truths = [tuple(EdgePotential(rng.uniform(-0.5, 0.5, order)) for _ in range(graph.m)) for _ in range(trials)]
    samples = [sample_phi(Problem(graph, t), nodes) for t in truths]
    scale = max(float(np.max(np.abs(s.values))) for s in samples)
    floor = 1e-6 * scale

    min_dist = None
    for a, b in itertools.combinations(range(trials), 2):
        d = float(np.max(np.abs(samples[a].values - samples[b].values)))
        min_dist = d if min_dist is None else min(min_dist, d)

    errors, residuals, conv = [], [], []
    for t, s in zip(truths, samples):
        init = perturb(t, perturbation, rng)
        rep = fit_potentials(s, graph, order, init, real_only=True, fit_tol=fit_tol)
        errors.append(coefficient_error(rep.recovered, t))
        residuals.append(rep.final_residual)
        conv.append(rep.converged)

    if order == 0:
        warnings.append("order 0: every potential is zero; distinguishability is vacuous")
        separated = True
    else:
        separated = min_dist is None or min_dist > floor
    passed = separated and all(e <= recovery_tol for e in errors)
    return UniquenessReport(
        [float(v) for v in graph.lengths], order, trials, seed, bool(independent),
        None if witness is None else list(witness), warnings, min_dist, floor,
        errors, residuals, conv, bool(passed),
    )


def bump_samples(l: float, start: float, stop: float, amplitude: float, n_samples: int = 4097) -> np.ndarray:
    """Samples of a smooth bump ``amplitude * exp(-1/(1 - t^2))`` supported on ``[start, stop]``."""
    x = np.linspace(0.0, l, n_samples)
    t = (2 * x - start - stop) / (stop - start)
    y = np.zeros(n_samples)
    inside = np.abs(t) < 1
    y[inside] = amplitude * math.e * np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return y


@dataclass
class EdgeExtent:
    edge: int
    support: list[float]
    measured: float | None
    oracle: float | None
    continuum_prediction: float
    below_threshold: bool | None
    note: str = ""


@dataclass
class PartialInfoReport:
    lengths: list[float]
    support_fraction: float
    margin: float
    anchor: str
    order: int
    seed: int
    extents: list[EdgeExtent]
    extent_check: str  # "passed", "failed" or "inconclusive"
    jacobian_rank: int
    n_params: int
    recovery_error: float
    final_residual: float
    converged: bool
    passed: bool
    notes: list[str]

    def to_dict(self) -> dict:
        return asdict(self)


def partial_info_experiment(graph: StarGraph, support_fraction: float, order: int, seed: int = 0, *,
                            margin: float = 0.1, anchor: str = "vertex", perturbation: float = 0.3,
                            r_max: float | None = None, zero_potentials: bool = False,
                            recovery_tol: float = 1e-5) -> PartialInfoReport:
    """Compact-support experiment: support extents and round-trip recovery.

    Each edge gets a smooth bump on ``[0, s*l_j]`` (``anchor="vertex"``) or
    ``[(1-s)*l_j, l_j]`` (``anchor="end"``), projected onto ``order`` sine
    modes. Extents are measured by the zero density of each edge transform
    and cross-checked against a real-zero count. ``continuum_prediction`` is
    the exponential type of the unprojected bump, ``l_j - inf(support)``.
    No rational-independence requirement is applied.
    """
    if not 0 < support_fraction < 1:
        raise ValueError("support_fraction must lie in (0, 1)")
    if anchor not in ("vertex", "end"):
        raise ValueError("anchor must be 'vertex' or 'end'")
    rng = np.random.default_rng(seed)
    notes: list[str] = []
    potentials, extents = [], []
    inconclusive = support_fraction + margin >= 1
    for j, l in enumerate(graph.lengths):
        if anchor == "vertex":
            start, stop = 0.0, support_fraction * l
        else:
            start, stop = (1 - support_fraction) * l, l
        amp = 0.0 if zero_potentials else rng.uniform(0.2, 0.5) * rng.choice([-1.0, 1.0])
        p = project_to_fourier(bump_samples(l, start, stop, amp), l, order)
        p = EdgePotential(p.coeffs.real)
        potentials.append(p)
        cont = l - start
        try:
            measured = estimate_support_extent(p, l, r_max)
            oracle = real_zero_extent(p, l, r_max)
            below = measured < l * (support_fraction + margin)
            ext = EdgeExtent(j, [start, stop], measured, oracle, cont, None if inconclusive else bool(below))
        except (ValueError, ContourError) as exc:
            ext = EdgeExtent(j, [start, stop], None, None, cont, None, f"extent unavailable: {exc}")
        extents.append(ext)

    if inconclusive:
        extent_check = "inconclusive"
        notes.append("support_fraction + margin >= 1: extent threshold is not below the edge length")
    elif any(e.measured is None for e in extents):
        extent_check = "inconclusive"
    else:
        extent_check = "passed" if all(e.below_threshold for e in extents) else "failed"

    truth = tuple(potentials)
    nodes = standard_nodes(graph, z_max=max(4 * graph.total_length, 1.5 * (order + 1) * math.pi / min(graph.lengths)))
    target = sample_phi(Problem(graph, truth), nodes)
    rank, n_params = jacobian_rank(target, graph, truth) if order else (0, 0)
    if rank < n_params:
        notes.append(f"fit Jacobian has rank {rank} < {n_params}: coefficients are not locally identifiable")
    init = perturb(truth, perturbation, rng)
    rep = fit_potentials(target, graph, order, init, fit_tol=DEFAULT_FIT_TOL)
    err = coefficient_error(rep.recovered, truth)
    recovered_ok = err <= recovery_tol
    passed = recovered_ok and extent_check == "passed"
    return PartialInfoReport(
        [float(v) for v in graph.lengths], support_fraction, margin, anchor, order, seed, extents,
        extent_check, rank, n_params, err, rep.final_residual, rep.converged, bool(passed), notes,
    )


def report_json(report) -> str:
    data = report.to_dict() if hasattr(report, "to_dict") else report
    return json.dumps(data, indent=2, sort_keys=True)
