"""Area forms on the plane and on the Riemann sphere.

A form is stored through its density ``rho`` with respect to Lebesgue measure
``dA`` in a chart, so that ``omega = rho dA``.  Potentials obey
``rho = Laplacian(phi) / (4 pi)``, the normalisation under which
``ln|z - z0|^2`` carries a unit point mass.

Sphere forms are described in the chart ``z`` and in the chart ``w = 1/z``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

from .exceptions import DomainError, UnsupportedError

EULER_GAMMA = float(np.euler_gamma)
OVERLAP = (0.8, 1.25)


@dataclass(frozen=True)
class RadialProfile:
    """Profile ``u(s) = phi(exp(-s/2))`` of a radial potential, ``s = -ln|z|^2``."""

    u: Callable[[np.ndarray], np.ndarray]
    du: Callable[[np.ndarray], np.ndarray]
    s_range: tuple = (-60.0, 60.0)
    name: str = ""


@dataclass(frozen=True)
class AreaForm:
    """Area form ``omega = rho dA``.

    ``density`` and ``potential`` act on arrays of complex points of the
    z-chart.  Sphere forms additionally carry ``density_w`` (and optionally
    ``potential_w``) on the w-chart.
    """

    kind: str
    density: Callable
    potential: Optional[Callable] = None
    name: str = "custom"
    z0: complex = 0j
    region: Optional[tuple] = None
    radial: Optional[RadialProfile] = None
    density_w: Optional[Callable] = None
    potential_w: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("plane", "sphere"):
            raise DomainError(f"kind must be 'plane' or 'sphere', not {self.kind!r}")
        if self.kind == "sphere" and self.density_w is None:
            raise DomainError("sphere forms need a w-chart density")

    def rho(self, z) -> np.ndarray:
        return np.asarray(self.density(np.asarray(z, dtype=complex)), dtype=float)

    def rho_w(self, w) -> np.ndarray:
        if self.density_w is None:
            raise UnsupportedError("plane form has no w-chart")
        return np.asarray(self.density_w(np.asarray(w, dtype=complex)), dtype=float)

    def kappa(self, z) -> np.ndarray:
        r = self.rho(z)
        with np.errstate(divide="ignore"):
            return np.where(r > 0, 1.0 / np.where(r > 0, r, 1.0), np.inf)

    def scaled(self, lam: float) -> "AreaForm":
        """The form ``lam * omega``."""
        lam = float(lam)
        pot = None if self.potential is None else (lambda z, p=self.potential: lam * p(z))
        pot_w = None if self.potential_w is None else (lambda w, p=self.potential_w: lam * p(w))
        dens_w = None if self.density_w is None else (lambda w, d=self.density_w: lam * d(w))
        radial = None
        if self.radial is not None:
            r = self.radial
            radial = RadialProfile(lambda s: lam * r.u(s), lambda s: lam * r.du(s), r.s_range, r.name)
        return AreaForm(self.kind, lambda z, d=self.density: lam * d(z), pot, self.name + f"*{lam:g}",
                        self.z0, self.region, radial, dens_w, pot_w, dict(self.params, scale=lam))

    def with_z0(self, z0: complex) -> "AreaForm":
        return AreaForm(self.kind, self.density, self.potential, self.name, complex(z0), self.region,
                        self.radial if z0 == 0 else None, self.density_w, self.potential_w, self.params)


def density_at(form: AreaForm, z: complex) -> float:
    """Density of ``form`` at a single point of its z-chart."""
    z = complex(z)
    if not np.isfinite(z.real) or not np.isfinite(z.imag):
        raise DomainError("point at infinity: use the w-chart density")
    if form.region is not None:
        x0, x1, y0, y1 = form.region
        if not (x0 <= z.real <= x1 and y0 <= z.imag <= y1):
            raise DomainError(f"{z} lies outside the configured region of {form.name}")
    return float(form.rho(np.array([z]))[0])


def laplacian_density(potential: Callable, z, step: float = 1e-3) -> np.ndarray:
    """``Laplacian(potential)/(4 pi)`` by a fourth-order 9-point stencil."""
    z = np.asarray(z, dtype=complex)
    s = step
    acc = -60.0 * potential(z)
    for d in (1, -1, 1j, -1j):
        acc = acc + 16.0 * potential(z + d * s) - potential(z + 2 * d * s)
    return acc / (12.0 * s * s) / (4.0 * np.pi)


def total_mass(form: AreaForm, box: Optional[tuple] = None, order: int = 400) -> float:
    """Integral of ``omega``.

    Plane forms integrate over ``box`` (or the configured region).  Sphere
    forms split the sphere into the unit disc of each chart and integrate in
    polar coordinates with Gauss-Legendre rules.
    """
    if form.kind == "sphere":
        r, wr = np.polynomial.legendre.leggauss(order)
        r = 0.5 * (r + 1.0)
        wr = 0.5 * wr
        th = 2 * np.pi * np.arange(2 * order) / (2 * order)
        wth = 2 * np.pi / (2 * order)
        R, TH = np.meshgrid(r, th, indexing="ij")
        pts = R * np.exp(1j * TH)
        jac = R * wr[:, None] * wth
        inner = np.sum(form.rho(pts) * jac)
        outer = np.sum(form.rho_w(pts) * jac)
        return float(inner + outer)
    if box is None:
        box = form.region
    if box is None:
        raise DomainError("plane total mass needs a bounding box")
    x0, x1, y0, y1 = box
    gx, wx = np.polynomial.legendre.leggauss(order)
    xs = 0.5 * (x1 - x0) * (gx + 1) + x0
    ys = 0.5 * (y1 - y0) * (gx + 1) + y0
    X, Y = np.meshgrid(xs, ys)
    W = np.outer(wx, wx) * 0.25 * (x1 - x0) * (y1 - y0)
    return float(np.sum(form.rho(X + 1j * Y) * W))


def radial_profile(form: AreaForm) -> RadialProfile:
    if form.radial is None:
        raise UnsupportedError(f"form {form.name!r} is not declared radial about 0")
    return form.radial


def growth_margin(form: AreaForm, t: float, R: float, samples: int = 720) -> float:
    """``min_{|z|=R} phi(z) - t ln|z|^2`` for a plane form."""
    if form.kind != "plane":
        raise UnsupportedError("growth margin is defined for plane forms")
    z = form.z0 + R * np.exp(2j * np.pi * np.arange(samples) / samples)
    if form.potential is None:
        raise UnsupportedError("growth margin needs a potential")
    vals = form.potential(z) - t * np.log(np.abs(z - form.z0) ** 2)
    return float(np.min(vals))


def numeric_profile(potential: Callable, step: float = 1e-6, name: str = "") -> RadialProfile:
    """Radial profile from a potential with a centred-difference derivative."""

    def u(s):
        return potential(np.exp(-np.asarray(s, dtype=float) / 2) + 0j)

    def du(s):
        s = np.asarray(s, dtype=float)
        return (u(s + step) - u(s - step)) / (2 * step)

    return RadialProfile(u, du, name=name)


# ---------------------------------------------------------------- presets

def quadratic(scale: float = 1.0, half_width: float = 2.0) -> AreaForm:
    """``phi = scale |z|^2``: constant density ``scale/pi``."""
    c = float(scale)
    prof = RadialProfile(lambda s: c * np.exp(-np.asarray(s)), lambda s: -c * np.exp(-np.asarray(s)),
                         name="quadratic")
    return AreaForm("plane", lambda z: np.full(np.shape(z), c / np.pi), lambda z: c * np.abs(z) ** 2,
                    "quadratic", 0j, (-half_width, half_width, -half_width, half_width), prof,
                    params={"scale": c})


def quartic(half_width: float = 2.0) -> AreaForm:
    """``phi = |z|^4 / 2``; degenerate at the origin."""
    prof = RadialProfile(lambda s: 0.5 * np.exp(-2 * np.asarray(s)), lambda s: -np.exp(-2 * np.asarray(s)),
                         name="quartic")
    return AreaForm("plane", lambda z: 2 * np.abs(z) ** 2 / np.pi, lambda z: 0.5 * np.abs(z) ** 4,
                    "quartic", 0j, (-half_width, half_width, -half_width, half_width), prof)


def fubini_study() -> AreaForm:
    """Fubini-Study form of unit mass, ``phi = ln(1 + |z|^2)``."""
    prof = RadialProfile(lambda s: np.log1p(np.exp(-np.asarray(s))),
                         lambda s: -1.0 / (1.0 + np.exp(np.asarray(s))), name="fubini-study")
    fs = lambda z: 1.0 / (np.pi * (1.0 + np.abs(z) ** 2) ** 2)  # noqa: E731
    return AreaForm("sphere", fs, lambda z: np.log1p(np.abs(z) ** 2), "fubini-study", 0j, None, prof,
                    density_w=fs, potential_w=lambda w: np.log1p(np.abs(w) ** 2))


def _ein(x):
    """Entire exponential integral ``Ein(x) = int_0^x (1 - e^-u)/u du``."""
    x = np.asarray(x, dtype=float)
    small = x < 1e-2
    xs = np.where(small, x, 0.0)
    series = xs * (1 - xs / 4 * (1 - 2 * xs / 9 * (1 - 3 * xs / 16 * (1 - 4 * xs / 25))))
    xl = np.where(small, 1.0, x)
    large = special.exp1(xl) + np.log(xl) + EULER_GAMMA
    return np.where(small, series, large)


def gaussian_bump(amplitude: float = 1.5, center: complex = 0.35 + 0.2j, width: float = 0.3,
                  half_width: float = 2.0) -> AreaForm:
    """``rho = (1 + a exp(-|z-b|^2/sigma^2)) / pi`` with its exact potential."""
    a, b, sg = float(amplitude), complex(center), float(width)

    def dens(z):
        return (1.0 + a * np.exp(-np.abs(z - b) ** 2 / sg ** 2)) / np.pi

    def pot(z):
        return np.abs(z) ** 2 + a * sg ** 2 * _ein(np.abs(z - b) ** 2 / sg ** 2)

    return AreaForm("plane", dens, pot, "gaussian-bump", 0j, (-half_width, half_width, -half_width, half_width),
                    params={"amplitude": a, "center": [b.real, b.imag], "width": sg})


def _smoothstep(x):
    """C^2 ramp from 0 (x <= 0) to 1 (x >= 1)."""
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10 - 15 * x + 6 * x ** 2)


def annulus(center: complex = 0.5 + 0j, r_in: float = 0.3, r_out: float = 0.7, ramp: float = 0.08,
            eps: float = 0.05, far_scale: float = 8.0, normalize: bool = True) -> AreaForm:
    """Sphere form putting mass ``1 - eps`` on an annulus around ``center``.

    The injection point 0 sits inside the band ``r_in < |z - center| < r_out``.
    The remaining ``eps`` is a Fubini-Study form of scale ``far_scale``; for a
    large scale it is light next to the band and heavy near infinity, so the
    fluid leaking out of the band runs around it and closes off a cap about
    infinity before that cap fills.
    """
    L = float(far_scale)
    c = complex(center)

    def band(z):
        r = np.abs(np.asarray(z, dtype=complex) - c)
        up = _smoothstep((r - (r_in - ramp / 2)) / ramp)
        down = _smoothstep((r - (r_out - ramp / 2)) / ramp)
        return up * (1 - down)

    band_proto = AreaForm("plane", lambda z: band(z) / np.pi, None, "band", 0j,
                          (c.real - r_out - ramp, c.real + r_out + ramp, c.imag - r_out - ramp, c.imag + r_out + ramp))
    band_mass = total_mass(band_proto)
    weight = (1.0 - eps) / band_mass if normalize else 1.0
    scale = eps if normalize else 1.0

    def dens(z):
        z = np.asarray(z, dtype=complex)
        return weight * band(z) / np.pi + scale * L ** 2 / (np.pi * (L ** 2 + np.abs(z) ** 2) ** 2)

    def dens_w(w):
        w = np.asarray(w, dtype=complex)
        zero = np.abs(w) < 1e-300
        ws = np.where(zero, 1.0, w)
        far = np.abs(1.0 / ws - c) > r_out + ramp
        inner = np.where(far, 0.0, weight * band(1.0 / ws) / np.pi / np.abs(ws) ** 4)
        return np.where(zero, scale * L ** 2 / np.pi,
                        inner + scale * L ** 2 / (np.pi * (L ** 2 * np.abs(ws) ** 2 + 1.0) ** 2))

    params = {"center": [c.real, c.imag], "r_in": r_in, "r_out": r_out, "ramp": ramp, "eps": eps,
              "far_scale": L, "band_mass": band_mass}
    return AreaForm("sphere", dens, None, "annulus", 0j, None, None, dens_w, params=params)


def bump_alpha(x):
    """``exp(-1/(x-1))`` for ``x > 1``, else 0."""
    x = np.asarray(x, dtype=float)
    pos = x > 1.0
    xs = np.where(pos, x, 2.0)
    return np.where(pos, np.exp(-1.0 / (xs - 1.0)), 0.0)


def _soft_abs(x):
    """Convex C^2 function equal to ``|x|`` for ``|x| >= 1``."""
    x = np.asarray(x, dtype=float)
    inner = (-x ** 4 + 6 * x ** 2 + 3) / 8
    return np.where(np.abs(x) >= 1, np.abs(x), inner)


def regmax(a, b, delta: float):
    """Regularised maximum: equals ``max(a, b)`` when ``|a - b| >= delta``."""
    return 0.5 * (a + b + delta * _soft_abs((a - b) / delta))


def slit(eps: float = 0.02, shift: float = 1.0, delta: float = 0.1, cutoff: float = 3.0,
         step: float = 1e-3) -> AreaForm:
    """Sphere form whose final domain is the sphere minus the slit [-1, 1] of the w-chart.

    In the w-chart the potential is ``regmax(eps*u*chi, ln(1+|w|^2) - shift)``
    with ``u(w) = bump_alpha(|w|^2) + Im(w)^2`` and ``chi`` a cutoff beyond
    ``cutoff``.  The potential vanishes exactly on the slit and is positive
    elsewhere; it grows like ``ln|w|^2`` so the total mass is one.
    """

    def chi(r):
        return 1.0 - _smoothstep((r - cutoff) / cutoff)

    def pot_w(w):
        w = np.asarray(w, dtype=complex)
        r2 = np.abs(w) ** 2
        u = (bump_alpha(r2) + w.imag ** 2) * chi(np.sqrt(r2))
        return regmax(eps * u, np.log1p(r2) - shift, delta)

    def pot_z(z):
        z = np.asarray(z, dtype=complex)
        big = np.abs(z) > 1e-8
        zs = np.where(big, z, 1.0)
        w = 1.0 / zs
        # near z = 0 the second branch of regmax is active: ln(1+|z|^2) - shift
        val = pot_w(w) + np.log(np.abs(zs) ** 2)
        return np.where(big, val, np.log1p(np.abs(z) ** 2) - shift)

    dens_z = lambda z: laplacian_density(pot_z, z, step)  # noqa: E731
    dens_w = lambda w: laplacian_density(pot_w, w, step)  # noqa: E731
    return AreaForm("sphere", dens_z, pot_z, "slit", 0j, None, None, dens_w, pot_w,
                    params={"eps": eps, "shift": shift, "delta": delta, "cutoff": cutoff})


def drop_geometry(corner_point: complex, angle: float):
    """Disc radius and tangency abscissa of the drop with the given corner."""
    d = abs(complex(corner_point))
    r = d * np.sin(angle / 2)
    return d, r, r * r / d


def drop_indicator(z, corner_point: complex = 0.6 + 0j, angle: float = np.pi / 3) -> np.ndarray:
    """Membership in the drop: convex hull of a disc at 0 and the corner point.

    The disc radius is chosen so the two tangent lines from the corner meet
    at the opening ``angle``.
    """
    c = complex(corner_point)
    d, r, xt = drop_geometry(c, angle)
    u = np.asarray(z, dtype=complex) / (c / d)  # corner on the positive axis
    in_disc = np.abs(u) < r
    cone = np.abs(np.angle(d - u)) < angle / 2
    in_wedge = (u.real >= xt) & (u.real < d) & cone
    return in_disc | in_wedge


def drop_outline(corner_point: complex = 0.6 + 0j, angle: float = np.pi / 3, n: int = 2000) -> np.ndarray:
    """Closed counter-clockwise polyline of the drop boundary."""
    c = complex(corner_point)
    d, r, _ = drop_geometry(c, angle)
    rot = c / d
    beta = np.pi / 2 - angle / 2
    arc = r * np.exp(1j * np.linspace(beta, 2 * np.pi - beta, n))
    t1, t2 = arc[0], arc[-1]
    k = max(8, n // 4)
    seg_in = t2 + (d - t2) * np.arange(1, k) / k
    seg_out = d + (t1 - d) * np.arange(0, k) / k
    return rot * np.concatenate([arc, seg_in, seg_out])


def corner(corner_point: complex = 0.6 + 0j, angle: float = np.pi / 3, half_width: float = 2.0) -> AreaForm:
    """Density ``(1 - indicator(drop))/pi``: empty drop in a uniform medium.

    Far from the drop the density is the constant of the quadratic preset,
    which already satisfies the plane growth condition.
    """
    c = complex(corner_point)

    def dens(z):
        return np.where(drop_indicator(z, c, angle), 0.0, 1.0 / np.pi)

    return AreaForm("plane", dens, None, "corner", 0j, (-half_width, half_width, -half_width, half_width),
                    params={"corner_point": [c.real, c.imag], "angle": float(angle)})


PRESETS = {
    "quadratic": quadratic,
    "quartic": quartic,
    "fubini-study": fubini_study,
    "gaussian-bump": gaussian_bump,
    "annulus": annulus,
    "slit": slit,
    "corner": corner,
}


def grid_form(grid, values: np.ndarray, kind: str = "plane", name: str = "custom-grid") -> AreaForm:
    """Form backed by node samples of a density; bilinear between nodes."""
    vals = np.array(values, dtype=float)
    if vals.shape != grid.shape:
        raise DomainError("density samples do not match the grid")
    if np.any(vals < 0):
        raise DomainError("density samples must be nonnegative")
    vals.setflags(write=False)

    def dens(z):
        return grid.sample(vals, z)

    x0 = grid.origin.real
    y0 = grid.origin.imag
    w = 2 * grid.half_width
    return AreaForm(kind, dens, None, name, grid.z0, (x0, x0 + w, y0, y0 + w),
                    params={"grid": grid, "samples": vals})


def make_form(spec: dict) -> AreaForm:
    """Build a form from a config mapping ``{"preset": name, ...params}``."""
    spec = dict(spec)
    name = spec.pop("preset", None)
    normalize = spec.pop("normalize", None)
    if name not in PRESETS:
        raise DomainError(f"unknown form preset {name!r}; choose from {sorted(PRESETS)}")
    if normalize is not None and name == "annulus":
        spec["normalize"] = bool(normalize)
    for k, v in list(spec.items()):
        if isinstance(v, list) and len(v) == 2 and k in ("center", "corner_point"):
            spec[k] = complex(v[0], v[1])
    return PRESETS[name](**spec)
