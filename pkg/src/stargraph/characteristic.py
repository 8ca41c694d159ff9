"""The characteristic function of the star-graph problem and its residual checks.

With ``P_j(z) = prod_{k != j} sin(z l_k)`` the characteristic function is

    Phi(z) = sum_j [Tc_j(z) + T_j(z) + S_j(z) + z cos(z l_j)] P_j(z)

where ``T_j``/``Tc_j`` are sine transforms of ``q_j`` and of its conjugate and
``S_j(z) = sin(z l_j) sum_n q_n <s_n, q_j> / (z^2 - k_n^2)`` is the pairing
term, ``<s_n, q_j> = int_0^l s_n conj(q_j) dx = (l_j/2) conj(q_n)``.
"""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

import numpy as np

from .model import EdgePotential, InvalidProblemError, Problem, validate
from .transforms import (
    SineTransform,
    _gauss_legendre,
    _as_complex,
    _restore,
    basis_transforms,
    gram_coeffs,
    sin_ratio,
    sine_transform_quadrature,
    synthesize,
    wavenumbers,
)


def pairing_coeffs(p: EdgePotential, l: float) -> np.ndarray:
    """Coefficients of the sine series whose transform is the pairing term ``S_j``."""
    return 0.5 * l * gram_coeffs(p, l).coeffs


def bracket_coeffs(p: EdgePotential, l: float) -> np.ndarray:
    """Sine coefficients of ``q + conj(q) + G`` (only ``Re q`` and ``|q|^2`` enter)."""
    return 2.0 * p.coeffs.real + pairing_coeffs(p, l)


def _sine_products(z: np.ndarray, lengths: np.ndarray):
    """``sin(z l_k)``, ``cos(z l_k)``, ``P_j`` and ``P_j'`` as ``(len(z), m)`` arrays."""
    zl = z[:, None] * lengths[None, :]
    s = np.sin(zl)
    c = np.cos(zl)
    m = lengths.size
    prod = np.ones((z.size, m), complex)
    dprod = np.zeros((z.size, m), complex)
    for j in range(m):
        for i in range(m):
            if i == j:
                continue
            # derivative of prod_{k != j} via the product rule
            dprod[:, j] = dprod[:, j] * s[:, i] + prod[:, j] * lengths[i] * c[:, i]
            prod[:, j] = prod[:, j] * s[:, i]
    return s, c, prod, dprod


class CharacteristicFn:
    """Evaluable characteristic function of a validated :class:`Problem`.

    Calling the object evaluates ``Phi``; :meth:`derivative` gives ``Phi'``.
    Both accept scalars or arrays of complex ``z``.
    """

    def __init__(self, problem: Problem):
        diags = validate(problem)
        if diags:
            raise InvalidProblemError(diags)
        self.problem = problem
        self.lengths = problem.graph.lengths
        self.m = problem.graph.m
        band = problem.policy.pole_band
        self.pole_band = band
        self.transforms = tuple(SineTransform.of(p, l, band) for p, l in zip(problem.potentials, self.lengths))
        self.conj_transforms = tuple(
            SineTransform.of(p.conj(), l, band) for p, l in zip(problem.potentials, self.lengths)
        )
        self.pairing_transforms = tuple(
            SineTransform(pairing_coeffs(p, l), l, band) for p, l in zip(problem.potentials, self.lengths)
        )
        self._brackets = tuple(
            bracket_coeffs(p, l) for p, l in zip(problem.potentials, self.lengths)
        )

    def __repr__(self):
        return f"CharacteristicFn(lengths={self.lengths.tolist()}, order={self.problem.order})"

    def __call__(self, z):
        return self.phi(z)

    def _bracket(self, zs: np.ndarray, j: int, derivative: bool = False) -> np.ndarray:
        l = self.lengths[j]
        b = self._brackets[j]
        coeff_part = np.zeros(zs.size, complex)
        if b.size:
            coeff_part = basis_transforms(zs, l, b.size, self.pole_band, derivative) @ b
        if derivative:
            return coeff_part + np.cos(zs * l) - zs * l * np.sin(zs * l)
        return coeff_part + zs * np.cos(zs * l)

    def phi(self, z):
        zs, scalar = _as_complex(z)
        _, _, prod, _ = _sine_products(zs, self.lengths)
        total = np.zeros(zs.size, complex)
        for j in range(self.m):
            total += self._bracket(zs, j) * prod[:, j]
        return _restore(total, scalar)

    def derivative(self, z):
        zs, scalar = _as_complex(z)
        _, _, prod, dprod = _sine_products(zs, self.lengths)
        total = np.zeros(zs.size, complex)
        for j in range(self.m):
            total += self._bracket(zs, j, True) * prod[:, j] + self._bracket(zs, j) * dprod[:, j]
        return _restore(total, scalar)

    phi_derivative = derivative

    def magnitude(self, z):
        """Sum of absolute values of the terms of ``Phi``; the natural error scale."""
        zs, scalar = _as_complex(z)
        _, _, prod, _ = _sine_products(zs, self.lengths)
        total = np.zeros(zs.size)
        for j in range(self.m):
            l = self.lengths[j]
            inner = np.abs(zs * np.cos(zs * l))
            for t in (self.transforms[j], self.conj_transforms[j], self.pairing_transforms[j]):
                inner += np.abs(t(zs)) if t.coeffs.size else 0.0
            total += inner * np.abs(prod[:, j])
        out = total + np.finfo(float).tiny
        return float(out[0]) if scalar else out

    # -- edge solutions and residuals ------------------------------------

    def _edge_solution(self, j: int, x: np.ndarray, z: complex) -> np.ndarray:
        l = self.lengths[j]
        p = self.problem.potentials[j]
        zv = np.array([z], complex)
        _, _, prod, _ = _sine_products(zv, self.lengths)
        u = l - x
        vals = np.sin(z * u).astype(complex)
        if p.order:
            g = sin_ratio(zv, l, wavenumbers(l, p.order), self.pole_band)[0]
            basis = np.sin(np.outer(np.pi * u / l, np.arange(1, p.order + 1)))
            vals = vals + basis @ (p.coeffs * g)
        return vals * prod[0, j]

    def _check_edge(self, j: int):
        if not 0 <= j < self.m:
            raise IndexError(f"edge index {j} out of range for {self.m} edges")

    def edge_solution(self, j: int, x, z: complex):
        """The special solution ``phi_j(x; z)`` on edge ``j`` (0-based)."""
        self._check_edge(j)
        l = self.lengths[j]
        xs = np.asarray(x, dtype=float)
        if np.any(xs < 0) or np.any(xs > l):
            raise ValueError(f"x must lie in [0, {l}]")
        vals = self._edge_solution(j, xs.reshape(-1), complex(z))
        return complex(vals[0]) if xs.ndim == 0 else vals.reshape(xs.shape)

    def vertex_value(self, z):
        """``phi_j(0; z) = prod_k sin(z l_k)``, common to every edge."""
        zs, scalar = _as_complex(z)
        return _restore(np.prod(np.sin(zs[:, None] * self.lengths[None, :]), axis=1), scalar)

    def ode_residual(self, j: int, z: complex, grid_points: int = 512, order: int = 8) -> float:
        """Max over the interior grid of ``|-phi'' + q(x) phi(0) - z^2 phi|``.

        ``phi''`` comes from central differences of accuracy ``order`` on
        ``grid_points`` intervals, with one-sided stencils next to the ends.
        ``order=4`` is the classical 5-point stencil.
        """
        self._check_edge(j)
        if grid_points < 16:
            raise ValueError("grid_points must be at least 16")
        z = complex(z)
        l = self.lengths[j]
        x = np.linspace(0.0, l, grid_points + 1)
        h = l / grid_points
        phi = self._edge_solution(j, x, z)
        d2 = second_derivative(phi, h, order)
        q = synthesize(self.problem.potentials[j], l, x)
        phi0 = self.vertex_value(z)
        res = -d2 + q * phi0 - z * z * phi
        return float(np.max(np.abs(res[1:-1])))

    def nonlocal_residual(self, z):
        """``sum_j [phi_j'(0; z) - int_0^{l_j} phi_j conj(q_j) dx]``.

        Assembled from vertex derivatives and closed-form pairings written with
        ``int_0^l sin(z u) sin(k u) du = (l/2)[sinc((z-k) l) - sinc((z+k) l)]``,
        independently of the series path used by :meth:`phi`.
        """
        zs, scalar = _as_complex(z)
        _, _, prod, _ = _sine_products(zs, self.lengths)
        total = np.zeros(zs.size, complex)
        for j in range(self.m):
            l = self.lengths[j]
            p = self.problem.potentials[j]
            dphi0 = -zs * np.cos(zs * l)
            pairing = np.zeros(zs.size, complex)
            if p.order:
                k = wavenumbers(l, p.order)
                n = np.arange(1, p.order + 1)
                e = _sinc_overlap(zs, l, k)
                dphi0 = dphi0 - e @ p.coeffs
                inner = 0.5 * l * np.conj(p.coeffs)  # int_0^l s_n conj(q) dx
                g = e / ((-1.0) ** n * k)[None, :]
                pairing = e @ np.conj(p.coeffs) + g @ (p.coeffs * inner)
            total += (dphi0 - pairing) * prod[:, j]
        return _restore(total, scalar)


def _sinc_overlap(z: np.ndarray, l: float, k: np.ndarray) -> np.ndarray:
    """``int_0^l sin(z u) sin(k u) du`` as a ``(len(z), len(k))`` array."""
    a = (z[:, None] - k[None, :]) * l / np.pi
    b = (z[:, None] + k[None, :]) * l / np.pi
    return 0.5 * l * (np.sinc(a) - np.sinc(b))


def build(problem: Problem) -> CharacteristicFn:
    return CharacteristicFn(problem)


def phi_reference(problem: Problem, z, points_per_wavelength: int | None = None):
    """Quadrature assembly of ``Phi`` from its literal sum form (test oracle).

    Sine transforms are computed by Gauss-Legendre quadrature of the
    synthesized potentials and the pairings by quadrature of
    ``s_n * conj(q_j)``; the series quotient is evaluated directly, so ``z``
    must avoid the points ``n*pi/l_j``.
    """
    ppw = points_per_wavelength or problem.policy.quad_points_per_wavelength
    zs, scalar = _as_complex(z)
    lengths = problem.graph.lengths
    total = np.zeros(zs.size, complex)
    for j, (p, l) in enumerate(zip(problem.potentials, lengths)):
        others = np.prod(np.sin(zs[:, None] * np.delete(lengths, j)[None, :]), axis=1)
        term = zs * np.cos(zs * l)
        if p.order:
            term = term + sine_transform_quadrature(p.conj(), l, zs, ppw)
            term = term + sine_transform_quadrature(p, l, zs, ppw)
            pairs = _pairings(p, l)
            k = wavenumbers(l, p.order)
            series = (p.coeffs * pairs)[None, :] / (zs[:, None] ** 2 - k[None, :] ** 2)
            term = term + np.sin(zs * l) * series.sum(axis=1)
        total += term * others
    return _restore(total, scalar)


def _pairings(p: EdgePotential, l: float, panels: int = 64) -> np.ndarray:
    nodes, weights = _gauss_legendre(8)
    edges = np.linspace(0.0, l, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = np.clip((mid[:, None] + half[:, None] * nodes[None, :]).ravel(), 0.0, l)
    w = (half[:, None] * weights[None, :]).ravel()
    qbar = np.conj(synthesize(p, l, x))
    basis = np.sin(np.outer(np.arange(1, p.order + 1), np.pi * (l - x) / l))
    return basis @ (w * qbar)


# -- finite differences -------------------------------------------------


@lru_cache(maxsize=None)
def fd_weights(offsets: tuple[int, ...], deriv: int) -> tuple[float, ...]:
    """Exact finite-difference weights at 0 for integer ``offsets`` (Fornberg)."""
    xs = [Fraction(o) for o in offsets]
    n = len(xs)
    c = [[Fraction(0)] * (deriv + 1) for _ in range(n)]
    c[0][0] = Fraction(1)
    c1 = Fraction(1)
    c4 = xs[0]
    for i in range(1, n):
        mn = min(i, deriv)
        c2 = Fraction(1)
        c5 = c4
        c4 = xs[i]
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2
            for k in range(mn, 0, -1):
                c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3
            c[j][0] = c4 * c[j][0] / c3
        c1 = c2
    return tuple(float(c[i][deriv]) for i in range(n))


def second_derivative(values: np.ndarray, h: float, order: int = 8) -> np.ndarray:
    """Second derivative of uniformly spaced samples, accuracy ``O(h**order)``.

    Interior rows use the symmetric ``order+1``-point stencil; rows too close
    to an end use a one-sided window of ``order+2`` points.
    """
    if order < 2 or order % 2:
        raise ValueError("order must be an even integer >= 2")
    n = values.size
    half = order // 2
    width = order + 2
    if n < width:
        raise ValueError("too few samples for the requested stencil")
    out = np.empty(n, dtype=values.dtype)
    central = np.array(fd_weights(tuple(range(-half, half + 1)), 2))
    core = slice(half, n - half)
    acc = np.zeros(n - 2 * half, dtype=values.dtype)
    for w, off in zip(central, range(-half, half + 1)):
        acc += w * values[half + off : n - half + off]
    out[core] = acc
    for i in list(range(half)) + list(range(n - half, n)):
        start = min(max(i - half, 0), n - width)
        offs = tuple(range(start - i, start - i + width))
        w = np.array(fd_weights(offs, 2))
        out[i] = w @ values[start : start + width]
    return out / (h * h)
