"""Zero location and counting for entire functions.

Functions passed here are vectorized callables over complex arrays. The
derivative is taken from the ``df`` argument or, failing that, from an
attribute ``f.derivative`` (as on :class:`~stargraph.characteristic.CharacteristicFn`
and :class:`~stargraph.transforms.SineTransform`).

Counts come from the argument principle ``(1/2 pi i) \\oint f'/f dz``;
a contour integral is accepted only when two successive refinements agree
and the value is close to an integer.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .model import EdgePotential, NumericalPolicy, StarGraphError
from .transforms import SineTransform, _gauss_legendre

log = logging.getLogger(__name__)

START_POINTS = 64
MAX_POINTS = 2**16
SUBDIVISION_FLOOR = 1e-8
# deterministic off-centre split fractions for quadrisection
_SPLITS = (0.5 + 0.0137, 0.5 - 0.0291, 0.5 + 0.0533, 0.5 - 0.0719)


class ContourError(StarGraphError):
    """Raised when a contour integral cannot be resolved to an integer."""

    def __init__(self, message: str, **diagnostics):
        self.diagnostics = {"error": message, **diagnostics}
        super().__init__(message)


def cluster_tol(z: complex) -> float:
    return 1e-7 * (1.0 + abs(z))


def _derivative_of(f, df):
    if df is not None:
        return df
    df = getattr(f, "derivative", None)
    if df is None:
        raise TypeError("a derivative is required: pass df= or an object with .derivative")
    return df


def _logderiv(f, df, z: np.ndarray) -> np.ndarray:
    fv = np.asarray(f(z), dtype=complex)
    dv = np.asarray(df(z), dtype=complex)
    if not (np.all(np.isfinite(fv)) and np.all(np.isfinite(dv))):
        raise ContourError("non-finite function values on contour")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = dv / fv
    if not np.all(np.isfinite(out)):
        raise ContourError("zero on the contour")
    return out


# -- disks --------------------------------------------------------------------


@dataclass(frozen=True)
class Winding:
    """A resolved argument-principle integral."""

    count: int
    raw: complex
    points: int
    moment: complex = 0j  # (1/2 pi i) \oint z f'/f dz, the sum of enclosed zeros


def winding_disk(f, r: float, df=None, center: complex = 0j, tol: float = 0.1,
                 max_points: int = MAX_POINTS) -> Winding:
    """Argument-principle integral over ``|z - center| = r`` by trapezoid doubling."""
    if r <= 0:
        raise ValueError("radius must be positive")
    df = _derivative_of(f, df)
    n = START_POINTS
    theta = 2 * np.pi * np.arange(n) / n
    w = r * np.exp(1j * theta)
    acc = np.sum(_logderiv(f, df, center + w) * w)
    prev = acc / n
    while n < max_points:
        theta = 2 * np.pi * (np.arange(n) + 0.5) / n
        w = r * np.exp(1j * theta)
        acc = acc + np.sum(_logderiv(f, df, center + w) * w)
        n *= 2
        cur = acc / n
        near_int = abs(cur.real - round(cur.real)) < tol and abs(cur.imag) < tol
        if abs(cur - prev) < tol / 2 and near_int:
            return Winding(int(round(cur.real)), complex(cur), n)
        prev = cur
    raise ContourError("disk contour integral did not converge", radius=r, center=[center.real, center.imag],
                       last_value=[prev.real, prev.imag], points=n)


def _perturbed_radii(r: float):
    yield r
    for i in range(1, 9):
        yield r * (1.0 + (-1) ** i * 1.7e-3 * ((i + 1) // 2))


def count_zeros_disk(f, r: float, df=None, center: complex = 0j, tol: float = 0.1,
                     with_radius: bool = False):
    """Number of zeros (with multiplicity) of ``f`` in ``|z - center| < r``.

    When the contour integral cannot be resolved the radius is perturbed by
    a few parts per thousand and retried; ``with_radius=True`` also returns
    the radius actually used.
    """
    last = None
    for radius in _perturbed_radii(r):
        try:
            wnd = winding_disk(f, radius, df, center, tol)
        except ContourError as exc:
            last = exc
            log.debug("retrying disk count at perturbed radius: %s", exc)
            continue
        return (wnd.count, radius) if with_radius else wnd.count
    raise last


# -- rectangles -----------------------------------------------------------


@dataclass(frozen=True)
class Rect:
    lo: complex
    hi: complex

    def __post_init__(self):
        lo, hi = complex(self.lo), complex(self.hi)
        if not (hi.real > lo.real and hi.imag > lo.imag):
            raise ValueError("rectangle needs lo < hi in both coordinates")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> float:
        return self.hi.real - self.lo.real

    @property
    def height(self) -> float:
        return self.hi.imag - self.lo.imag

    @property
    def center(self) -> complex:
        return 0.5 * (self.lo + self.hi)

    def contains(self, z: complex, margin: float = 0.0) -> bool:
        return (self.lo.real - margin <= z.real <= self.hi.real + margin
                and self.lo.imag - margin <= z.imag <= self.hi.imag + margin)

    def corners(self):
        lo, hi = self.lo, self.hi
        return (lo, complex(hi.real, lo.imag), hi, complex(lo.real, hi.imag))

    def split(self, fx: float, fy: float) -> list["Rect"]:
        xm = self.lo.real + fx * self.width
        ym = self.lo.imag + fy * self.height
        x0, x1, y0, y1 = self.lo.real, self.hi.real, self.lo.imag, self.hi.imag
        return [Rect(complex(x0, y0), complex(xm, ym)), Rect(complex(xm, y0), complex(x1, ym)),
                Rect(complex(x0, ym), complex(xm, y1)), Rect(complex(xm, ym), complex(x1, y1))]


def _rect_nodes(rect: Rect, panels_per_unit: float):
    nodes, weights = _gauss_legendre(8)
    zs, ws = [], []
    corners = rect.corners()
    for a, b in zip(corners, corners[1:] + corners[:1]):
        n = max(1, math.ceil(abs(b - a) * panels_per_unit))
        t = np.linspace(0.0, 1.0, n + 1)
        half = 0.5 * np.diff(t)
        mid = 0.5 * (t[1:] + t[:-1])
        s = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        zs.append(a + (b - a) * s)
        ws.append((b - a) * (half[:, None] * weights[None, :]).ravel())
    return np.concatenate(zs), np.concatenate(ws)


def winding_rect(f, rect: Rect, df=None, tol: float = 0.1, max_points: int = MAX_POINTS) -> Winding:
    """Argument-principle integral over the boundary of ``rect`` (composite Gauss-Legendre)."""
    df = _derivative_of(f, df)
    perimeter = 2 * (rect.width + rect.height)
    density = 2.0 / perimeter  # about 8 panels in total to start
    prev = None
    points = 0
    while True:
        z, w = _rect_nodes(rect, density)
        points = z.size
        ld = _logderiv(f, df, z)
        cur = np.sum(w * ld) / (2j * np.pi)
        if prev is not None:
            near_int = abs(cur.real - round(cur.real)) < tol and abs(cur.imag) < tol
            if abs(cur - prev) < tol / 2 and near_int:
                moment = np.sum(w * ld * z) / (2j * np.pi)
                return Winding(int(round(cur.real)), complex(cur), points, complex(moment))
        if points > max_points:
            raise ContourError("rectangle contour integral did not converge",
                               rect=[rect.lo.real, rect.lo.imag, rect.hi.real, rect.hi.imag],
                               last_value=[cur.real, cur.imag], points=points)
        prev = cur
        density *= 2


@dataclass(frozen=True)
class Root:
    location: complex
    multiplicity: int = 1
    structural: bool = False


@dataclass(frozen=True)
class ZeroSet:
    """Located zeros with multiplicities.

    ``region`` is a :class:`Rect` or a disk radius (float). ``total_count``
    is the argument-principle count of the whole region and equals the sum
    of multiplicities.
    """

    roots: tuple[Root, ...]
    region: Rect | float
    total_count: int

    def __post_init__(self):
        object.__setattr__(self, "roots", tuple(sorted(self.roots, key=lambda r: (r.location.real, r.location.imag))))
        found = sum(r.multiplicity for r in self.roots)
        if found != self.total_count:
            raise ContourError("located zeros do not match the contour count",
                               located=found, counted=self.total_count)

    def locations(self, include_structural: bool = True) -> np.ndarray:
        return np.array([r.location for r in self.roots if include_structural or not r.structural], complex)

    def by_modulus(self, include_structural: bool = False) -> list[Root]:
        picked = [r for r in self.roots if include_structural or not r.structural]
        return sorted(picked, key=lambda r: (abs(r.location), r.location.real, r.location.imag))


def newton(f, df, z0: complex, tol: float = 1e-12, max_iter: int = 50, multiplicity: int = 1):
    """(Modified) Newton iteration; returns ``(z, converged)``."""
    z = complex(z0)
    for _ in range(max_iter):
        fz = complex(np.asarray(f(np.array([z])))[0])
        if fz == 0:
            return z, True
        dz = complex(np.asarray(df(np.array([z])))[0])
        if dz == 0 or not np.isfinite(dz):
            return z, False
        step = multiplicity * fz / dz
        z -= step
        if not np.isfinite(z):
            return z0, False
        if abs(step) <= tol * (1.0 + abs(z)):
            return z, True
    return z, False


def find_zeros_rect(f, rect: Rect | tuple, df=None, policy: NumericalPolicy | None = None,
                    structural_origin: bool = True) -> ZeroSet:
    """All zeros inside ``rect`` by recursive quadrisection and Newton polishing.

    ``structural_origin`` flags a root at ``z = 0`` as structural.
    """
    policy = policy or NumericalPolicy()
    df = _derivative_of(f, df)
    if not isinstance(rect, Rect):
        rect = Rect(*rect)
    tol = policy.winding_round_tol
    top = winding_rect(f, rect, df, tol)
    roots: list[tuple[complex, int]] = []

    def solve(r: Rect, wnd: Winding, depth: int):
        if wnd.count == 0:
            return
        size = max(r.width, r.height)
        if wnd.count == 1:
            z, ok = newton(f, df, wnd.moment, policy.newton_tol, policy.newton_max_iter)
            if ok and r.contains(z, margin=1e-9 * (1 + abs(z))):
                roots.append((z, 1))
                return
            if size <= SUBDIVISION_FLOOR * (1 + abs(r.center)):
                roots.append((wnd.moment, 1))
                return
        elif size <= SUBDIVISION_FLOOR * (1 + abs(r.center)):
            est = wnd.moment / wnd.count
            z, ok = newton(f, df, est, policy.newton_tol, policy.newton_max_iter, wnd.count)
            roots.append((z if ok and r.contains(z, size) else est, wnd.count))
            return
        for fx in _SPLITS:
            fy = 1.0 - fx if depth % 2 else fx
            kids = r.split(fx, fy)
            try:
                winds = [winding_rect(f, k, df, tol) for k in kids]
            except ContourError:
                continue
            if sum(w.count for w in winds) == wnd.count:
                for k, w in zip(kids, winds):
                    solve(k, w, depth + 1)
                return
        raise ContourError("quadrisection failed to conserve the zero count",
                           rect=[r.lo.real, r.lo.imag, r.hi.real, r.hi.imag], count=wnd.count)

    solve(rect, top, 0)
    merged = _merge(roots)
    out = tuple(
        Root(z, k, structural_origin and abs(z) <= cluster_tol(0.0) * 10) for z, k in merged
    )
    return ZeroSet(out, rect, top.count)


def _merge(roots: Sequence[tuple[complex, int]]) -> list[tuple[complex, int]]:
    merged: list[list] = []
    for z, k in sorted(roots, key=lambda t: (t[0].real, t[0].imag)):
        for item in merged:
            if abs(item[0] - z) <= cluster_tol(z):
                item[0] = (item[0] * item[1] + z * k) / (item[1] + k)
                item[1] += k
                break
        else:
            merged.append([z, k])
    return [(complex(z), int(k)) for z, k in merged]


# -- real axis ----------------------------------------------------------------


def find_real_zeros(f, a: float, b: float, step: float, tol: float = 1e-12) -> np.ndarray:
    """Real zeros of a real-on-the-axis ``f`` in ``[a, b]`` located by sign changes.

    Each bracket is refined by Brent's method to ``tol`` relative. Zeros of
    even order do not change sign and are not found.
    """
    if b <= a:
        raise ValueError("need a < b")
    if step <= 0:
        raise ValueError("step must be positive")
    n = max(2, math.ceil((b - a) / step) + 1)
    x = np.linspace(a, b, n)
    vals = np.asarray(f(x.astype(complex)), dtype=complex)
    scale = np.max(np.abs(vals)) or 1.0
    if np.max(np.abs(vals.imag)) > 1e-8 * scale:
        raise ValueError("function is not real-valued on the interval")
    y = vals.real

    def g(t):
        return float(np.asarray(f(np.array([t], complex)))[0].real)

    roots = list(x[y == 0])
    sign = np.sign(y)
    idx = np.flatnonzero(sign[:-1] * sign[1:] < 0)
    for i in idx:
        r = brentq(g, x[i], x[i + 1], xtol=tol * max(1.0, abs(x[i])) * 1e-2, rtol=4 * np.finfo(float).eps,
                   maxiter=200)
        roots.append(r)
    return np.array(sorted(roots))


def origin_multiplicity(f, df=None, radius: float = 1e-2, tol: float = 0.1) -> int:
    return count_zeros_disk(f, radius, df, tol=tol)


def spectrum(cf, r_max: float, policy: NumericalPolicy | None = None) -> ZeroSet:
    """Zeros of a characteristic function in the disk ``|z| < r_max``.

    Real zeros are located by sign changes on ``(0, r_max)`` and mirrored by
    parity; the total is checked against the disk count. On mismatch (tangential
    or non-real zeros) the disk is searched by rectangle quadrisection instead.
    The zero at the origin is reported as structural.
    """
    policy = policy or getattr(getattr(cf, "problem", None), "policy", None) or NumericalPolicy()
    tol = policy.winding_round_tol
    total, radius = count_zeros_disk(cf, r_max, tol=tol, with_radius=True)
    lengths = getattr(cf, "lengths", None)
    total_length = float(np.sum(lengths)) if lengths is not None else 1.0
    first = min(0.5 * math.pi / total_length, 0.05 * radius)
    m0 = origin_multiplicity(cf, radius=first * 0.5, tol=tol)
    step = math.pi / (4 * total_length)
    real = find_real_zeros(cf, first * 0.5, radius, step, policy.newton_tol)
    real = real[real < radius]
    roots = [Root(0j, m0, True)] if m0 else []
    for x in real:
        roots += [Root(complex(x), 1), Root(complex(-x), 1)]
    if sum(r.multiplicity for r in roots) == total:
        return ZeroSet(tuple(roots), radius, total)
    log.info("real scan found %d of %d zeros; switching to rectangle search",
             sum(r.multiplicity for r in roots), total)
    for height in (min(radius, 4.0), radius):
        square = Rect(complex(-radius, -height), complex(radius, height))
        zs = find_zeros_rect(cf, square, policy=policy)
        inside = tuple(r for r in zs.roots if abs(r.location) < radius)
        if sum(r.multiplicity for r in inside) == total:
            return ZeroSet(inside, radius, total)
    raise ContourError("could not locate all zeros in the disk", radius=radius, counted=total)


# -- densities ------------------------------------------------------------------


@dataclass(frozen=True)
class DensityFit:
    radii: np.ndarray
    counts: np.ndarray
    slope: float
    intercept: float
    residual: float
    raw_counts: np.ndarray = field(default_factory=lambda: np.zeros(0))
    origin_multiplicity: int = 0
    convention: str = "eigenvalue"

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "radii": [float(r) for r in self.radii],
            "counts": [float(c) for c in self.counts],
            "raw_counts": [int(c) for c in self.raw_counts],
            "origin_multiplicity": self.origin_multiplicity,
            "convention": self.convention,
        }


def estimate_density(f, r_max: float, n_radii: int = 20, df=None, *, r_min: float | None = None,
                     convention: str = "eigenvalue", origin_radius: float = 1e-2,
                     origin_share: float = 0.0, tol: float = 0.1) -> DensityFit:
    """Least-squares slope of the zero-counting function against the radius.

    ``convention="eigenvalue"`` counts ``(N(r) - m0)/2 + origin_share`` where
    ``m0`` is the order of the zero at the origin; this counts each ``+-z``
    pair of an even or odd function once. ``convention="raw"`` uses ``N(r)``.
    """
    if convention not in ("eigenvalue", "raw"):
        raise ValueError("convention must be 'eigenvalue' or 'raw'")
    if n_radii < 2:
        raise ValueError("need at least two radii")
    df = _derivative_of(f, df)
    r_min = r_max / 5 if r_min is None else r_min
    targets = np.linspace(r_min, r_max, n_radii)
    m0 = count_zeros_disk(f, origin_radius, df, tol=tol)
    radii, raw = [], []
    for r in targets:
        n, used = count_zeros_disk(f, r, df, tol=tol, with_radius=True)
        radii.append(used)
        raw.append(n)
    radii = np.array(radii)
    raw = np.array(raw)
    order = np.argsort(radii)
    radii, raw = radii[order], raw[order]
    if convention == "eigenvalue":
        counts = (raw - m0) / 2.0 + origin_share
    else:
        counts = raw.astype(float)
    slope, intercept = np.polyfit(radii, counts, 1)
    resid = counts - (slope * radii + intercept)
    return DensityFit(radii, counts, float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))),
                      raw, int(m0), convention)


def estimate_support_extent(p: EdgePotential, l: float, r_max: float | None = None,
                            n_radii: int = 20) -> float:
    """Exponential-type extent ``pi * density`` of the sine transform of ``p``.

    The density is estimated by zero counting in the eigenvalue convention.
    The default radius reaches well past the last pole cancelled by the series.
    """
    if p.order == 0 or not np.any(p.coeffs):
        raise ValueError("support extent of the zero potential is undefined")
    t = SineTransform.of(p, l)
    if r_max is None:
        r_max = math.pi * (p.order + 40) / l
    fit = estimate_density(t, r_max, n_radii, r_min=r_max / 4)
    return math.pi * fit.slope


def real_zero_extent(p: EdgePotential, l: float, r_max: float | None = None, step: float | None = None) -> float:
    """``pi`` times the slope of the positive real-zero count of the sine transform of ``p``.

    Independent of contour counting; meaningful when the zeros are
    asymptotically real. Requires real coefficients.
    """
    if p.order == 0 or not np.any(p.coeffs):
        raise ValueError("support extent of the zero potential is undefined")
    if np.any(p.coeffs.imag != 0):
        raise ValueError("real-zero extent requires real coefficients")
    t = SineTransform.of(p, l)
    if r_max is None:
        r_max = math.pi * (p.order + 40) / l
    step = step or math.pi / (8 * l)
    roots = find_real_zeros(lambda z: t(z).real, step / 2, r_max, step)
    radii = np.linspace(r_max / 4, r_max, 20)
    counts = np.searchsorted(np.sort(roots), radii)
    slope = np.polyfit(radii, counts, 1)[0]
    return math.pi * float(slope)
