"""Fourier-sine synthesis and the finite sine transform.

For ``f(x) = sum_n c_n sin(n*pi*(l - x)/l)`` the transform

    F(z) = int_0^l sin(z*(l - x)) f(x) dx

has the closed form ``sin(z l) * sum_n (-1)^n k_n c_n / (z^2 - k_n^2)`` with
``k_n = n*pi/l``. Each term has a removable singularity at ``z = +-k_n``;
inside a relative band of half-width ``pole_band`` around it the quotient is
replaced by its Taylor expansion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .model import EdgePotential

DEFAULT_POLE_BAND = 1e-6
GL_ORDER = 8


def _as_complex(z) -> tuple[np.ndarray, bool]:
    arr = np.asarray(z, dtype=complex)
    return arr.reshape(-1), arr.ndim == 0


def _restore(values: np.ndarray, scalar: bool):
    return complex(values[0]) if scalar else values


def wavenumbers(l: float, n: int) -> np.ndarray:
    return np.arange(1, n + 1) * (math.pi / l)


def synthesize(p: EdgePotential, l: float, x):
    """Evaluate ``sum_n q_n sin(n*pi*(l - x)/l)`` for ``0 <= x <= l``."""
    xs = np.asarray(x, dtype=float)
    if np.any(xs < 0) or np.any(xs > l):
        raise ValueError(f"x must lie in [0, {l}]")
    flat = xs.reshape(-1)
    basis = np.sin(np.outer(np.pi * (l - flat) / l, np.arange(1, p.order + 1)))
    vals = basis @ p.coeffs if p.order else np.zeros(flat.size, complex)
    return complex(vals[0]) if xs.ndim == 0 else vals.reshape(xs.shape)


def sin_ratio(z: np.ndarray, l: float, k: np.ndarray, pole_band: float = DEFAULT_POLE_BAND,
              derivative: bool = False) -> np.ndarray:
    """Pole-safe ``sin(z l) / (z^2 - k^2)`` (or its z-derivative), shape ``(len(z), len(k))``.

    ``k`` must hold exact multiples of ``pi/l`` so that ``sin(k l) = 0``.
    Near ``w = +-k``, ``sin(z l) = cos(w l) sin((z - w) l)`` and
    ``z^2 - k^2 = (z - w)(z + w)``, which gives ``cos(w l) l sinc((z-w) l)/(z + w)``.
    That factorized form is used within a quarter pole spacing of ``w``;
    inside the relative ``pole_band`` the sinc is replaced by its Taylor series.
    """
    zz = z[:, None]
    kk = k[None, :]
    s = np.sin(zz * l)
    den = zz * zz - kk * kk
    with np.errstate(divide="ignore", invalid="ignore"):
        if derivative:
            out = l * np.cos(zz * l) / den - 2.0 * zz * s / (den * den)
        else:
            out = s / den
    radius = 0.25 * math.pi / l
    for sign in (1.0, -1.0):
        w = sign * kk
        delta = zz - w
        near = np.abs(delta) < radius
        if not near.any():
            continue
        rows, cols = np.nonzero(near)
        d = delta[rows, cols]
        wv = w[0, cols]
        t = d * l
        t2 = t * t
        in_band = np.abs(d) < pole_band * np.abs(wv)
        with np.errstate(divide="ignore", invalid="ignore"):
            sinc = np.where(in_band, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(t) / t)
        c = np.cos(wv * l)  # (-1)^n
        zp = zz[rows, 0] + wv
        if derivative:
            small = np.abs(t) < 0.05
            with np.errstate(divide="ignore", invalid="ignore"):
                closed = (t * np.cos(t) - np.sin(t)) / t2
            series = t * (-1.0 / 3.0 + t2 * (1.0 / 30.0 + t2 * (-1.0 / 840.0 + t2 / 45360.0)))
            dsinc = np.where(small, series, closed)
            out[rows, cols] = c * l * (l * dsinc / zp - sinc / (zp * zp))
        else:
            out[rows, cols] = c * l * sinc / zp
    return out


def basis_transforms(z, l: float, n: int, pole_band: float = DEFAULT_POLE_BAND,
                     derivative: bool = False) -> np.ndarray:
    """Transforms of the basis functions, ``(-1)^n k_n sin(z l)/(z^2 - k_n^2)``.

    Column ``n-1`` is the sine transform of ``sin(n*pi*(l - x)/l)``.
    """
    zs = np.asarray(z, dtype=complex).reshape(-1)
    if n == 0:
        return np.zeros((zs.size, 0), complex)
    k = wavenumbers(l, n)
    signs = (-1.0) ** np.arange(1, n + 1)
    return sin_ratio(zs, l, k, pole_band, derivative) * (signs * k)[None, :]


@dataclass(frozen=True)
class SineTransform:
    """The entire function ``z -> int_0^l sin(z(l - x)) f(x) dx`` of a sine series ``f``."""

    coeffs: np.ndarray
    l: float
    pole_band: float = DEFAULT_POLE_BAND

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=complex).reshape(-1)
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)
        if not self.l > 0:
            raise ValueError("transform length must be positive")

    @classmethod
    def of(cls, p: EdgePotential, l: float, pole_band: float = DEFAULT_POLE_BAND) -> "SineTransform":
        return cls(p.coeffs, l, pole_band)

    def __call__(self, z):
        return sine_transform_series(self, z)

    def derivative(self, z):
        zs, scalar = _as_complex(z)
        b = basis_transforms(zs, self.l, self.coeffs.size, self.pole_band, derivative=True)
        return _restore(b @ self.coeffs if self.coeffs.size else np.zeros(zs.size, complex), scalar)


def sine_transform_series(t: SineTransform, z):
    """Closed-form sine transform, continuous through ``z = +-n*pi/l``."""
    zs, scalar = _as_complex(z)
    if t.coeffs.size == 0:
        return _restore(np.zeros(zs.size, complex), scalar)
    b = basis_transforms(zs, t.l, t.coeffs.size, t.pole_band)
    return _restore(b @ t.coeffs, scalar)


@lru_cache(maxsize=None)
def _gauss_legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def panel_count(z: complex, l: float, points_per_wavelength: int = 8) -> int:
    """Number of order-8 Gauss-Legendre panels used for the kernel ``sin(z(l - x))``."""
    n = math.ceil(points_per_wavelength * (abs(z) * l / (2 * math.pi) + 1))
    return max(n, 32 // GL_ORDER)


def sine_transform_quadrature(f: Callable | EdgePotential | np.ndarray, l: float, z,
                              points_per_wavelength: int = 8):
    """Composite Gauss-Legendre value of ``int_0^l sin(z(l - x)) f(x) dx``.

    ``f`` is a vectorized callable, an :class:`EdgePotential` (synthesized),
    or an array of uniformly spaced samples on ``[0, l]`` including both
    endpoints (integrated by Simpson's rule instead).
    """
    if l <= 0:
        raise ValueError("edge length must be positive")
    zs, scalar = _as_complex(z)
    if isinstance(f, np.ndarray):
        from scipy.integrate import simpson

        x = np.linspace(0.0, l, f.size)
        out = np.array([simpson(np.sin(zk * (l - x)) * f, x=x) for zk in zs], dtype=complex)
        return _restore(out, scalar)
    if isinstance(f, EdgePotential):
        p = f
        f = lambda x: synthesize(p, l, x)  # noqa: E731
    nodes, weights = _gauss_legendre(GL_ORDER)
    out = np.empty(zs.size, complex)
    for i, zk in enumerate(zs):
        n = panel_count(zk, l, points_per_wavelength)
        edges = np.linspace(0.0, l, n + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        # guard against rounding just outside [0, l]
        x = np.clip(x, 0.0, l)
        w = (half[:, None] * weights[None, :]).ravel()
        out[i] = np.sum(w * np.sin(zk * (l - x)) * np.asarray(f(x), dtype=complex))
    return _restore(out, scalar)


def gram_coeffs(p: EdgePotential, l: float, pole_band: float = DEFAULT_POLE_BAND) -> SineTransform:
    """Sine series ``G`` whose transform is ``sin(z l) sum_n |q_n|^2 / (z^2 - k_n^2)``.

    Term-by-term matching ``(-1)^n k_n G_n = |q_n|^2`` gives
    ``G_n = (-1)^n (l/(n pi)) |q_n|^2``.
    """
    n = np.arange(1, p.order + 1)
    g = (-1.0) ** n * (l / (n * math.pi)) * np.abs(p.coeffs) ** 2
    return SineTransform(g.astype(complex), l, pole_band)
