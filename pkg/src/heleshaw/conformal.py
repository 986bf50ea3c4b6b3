"""Riemann maps of simply connected domains and checks of the harmonic-disc picture.

The map is computed from the boundary alone.  The boundary polyline is
resampled by a periodic spline in (nearly) arclength, the Szego kernel is
found from the Kerzman-Stein integral equation by the trapezoid Nystrom
method, and the boundary correspondence of the exterior-to-disc map
``F = f^{-1}`` follows from

    F(z) = -i T(z) S(z, a)^2 / |S(z, a)|^2,   |F'(z)| = 2 pi |S(z, a)|^2 / S(a, a)

on the boundary.  Inverting the correspondence on a uniform angle grid and
taking an FFT gives the Taylor coefficients of ``f`` at 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import splev, splprep
from skimage.measure import points_in_poly
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DomainError, MapError, TopologyError, UnsupportedError
from .flow import FlowDomain, extract_domain
from .forms import AreaForm, grid_form
from .duality import lattice_density
from .obstacle import solve_envelope

RADII = (0.25, 0.5, 0.75)
ANGLES = 64


# ------------------------------------------------------------------ boundary curve

@dataclass
class BoundaryCurve:
    """Periodic parametrization ``u in [0, 2 pi) -> z(u)`` sampled at equal steps."""

    z: np.ndarray
    dz: np.ndarray
    tck: tuple = field(repr=False)

    def at(self, u) -> np.ndarray:
        x, y = splev(np.mod(u, 2 * np.pi) / (2 * np.pi), self.tck)
        return np.asarray(x) + 1j * np.asarray(y)

    @property
    def length(self) -> float:
        return float(np.sum(np.abs(self.dz)) * 2 * np.pi / len(self.z))


def _dedupe(points: np.ndarray) -> np.ndarray:
    p = np.asarray(points, dtype=complex).ravel()
    if len(p) > 1 and abs(p[0] - p[-1]) < 1e-14:
        p = p[:-1]
    keep = np.abs(np.diff(np.concatenate([p, p[:1]]))) > 1e-12
    return p[keep]


def signed_area(points) -> float:
    p = np.asarray(points, dtype=complex)
    q = np.roll(p, -1)
    return 0.5 * float(np.sum(p.real * q.imag - q.real * p.imag))


def resample_curve(points, M: int, smoothing: float = 0.0, resample: bool = True) -> BoundaryCurve:
    """Counterclockwise periodic spline through ``points``, sampled at ``M`` equal steps.

    With ``resample`` the spline is re-fitted once on its own arclength so the
    samples are equally spaced along the curve.
    """
    p = _dedupe(points)
    if len(p) < 8:
        raise MapError("boundary polyline has too few vertices", achieved=np.inf)
    if signed_area(p) < 0:
        p = p[::-1]
    seg = np.abs(np.diff(np.concatenate([p, p[:1]])))
    u = np.concatenate([[0.0], np.cumsum(seg)[:-1]]) / seg.sum()
    closed = np.concatenate([p, p[:1]])
    uc = np.concatenate([u, [1.0]])
    tck, _ = splprep([closed.real, closed.imag], u=uc, s=smoothing, per=1, k=3)
    if resample:
        dense = np.linspace(0, 1, 8 * max(M, len(p)), endpoint=False)
        x, y = splev(dense, tck)
        q = np.asarray(x) + 1j * np.asarray(y)
        seg = np.abs(np.diff(np.concatenate([q, q[:1]])))
        arc = np.concatenate([[0.0], np.cumsum(seg)]) / seg.sum()
        target = np.linspace(0, 1, M, endpoint=False)
        # spline parameter at equal arclength fractions
        uu = np.interp(target, arc, np.concatenate([dense, [1.0]]))
        x, y = splev(uu, tck)
        q = np.asarray(x) + 1j * np.asarray(y)
        closed = np.concatenate([q, q[:1]])
        tck, _ = splprep([closed.real, closed.imag], u=np.concatenate([target, [1.0]]), s=0, per=1, k=3)
    grid_u = np.linspace(0, 1, M, endpoint=False)
    x, y = splev(grid_u, tck)
    dx, dy = splev(grid_u, tck, der=1)
    z = np.asarray(x) + 1j * np.asarray(y)
    dz = (np.asarray(dx) + 1j * np.asarray(dy)) / (2 * np.pi)
    return BoundaryCurve(z, dz, tck)


# ------------------------------------------------------------------ Szego kernel

def szego_boundary(curve: BoundaryCurve, a: complex) -> dict:
    """Szego kernel ``S(z_j, a)`` on the curve nodes by the Kerzman-Stein equation."""
    z, dz = curve.z, curve.dz
    M = len(z)
    speed = np.abs(dz)
    T = dz / speed
    wq = speed * (2 * np.pi / M)
    if np.min(np.abs(z - a)) < 1e-12:
        raise DomainError("center lies on the boundary")
    diff = z[None, :] - z[:, None]  # w_j - z_i
    np.fill_diagonal(diff, 1.0)
    H = T[None, :] / (2j * np.pi * diff)  # H(z_i, w_j)
    A = H - np.conj(H.T)
    np.fill_diagonal(A, 0.0)
    rhs = np.conj(T / (2j * np.pi * (z - a)))
    S = np.linalg.solve(np.eye(M) - A * wq[None, :], rhs)
    Saa = float(np.sum(np.abs(S) ** 2 * wq))
    return {"S": S, "T": T, "Saa": Saa, "weights": wq}


def winding_number(points, about: complex) -> int:
    p = np.asarray(points, dtype=complex) - about
    ang = np.angle(np.concatenate([p[1:], p[:1]]) / p)
    return int(round(float(ang.sum()) / (2 * np.pi)))


def polyline_distance(points, poly) -> np.ndarray:
    """Distance from each point to a closed polyline."""
    p = np.asarray(points, dtype=complex).ravel()
    a = np.asarray(poly, dtype=complex)
    b = np.roll(a, -1)
    d = b - a
    L2 = np.maximum(np.abs(d) ** 2, 1e-300)
    out = np.full(p.shape, np.inf)
    for start in range(0, len(p), 256):
        q = p[start:start + 256, None]
        s = np.clip(((q - a) * np.conj(d)).real / L2, 0.0, 1.0)
        out[start:start + 256] = np.min(np.abs(q - a - s * d), axis=1)
    return out


# ------------------------------------------------------------------ the map

@dataclass
class ConformalMap:
    """Normalized map ``f`` of the unit disc onto a domain, ``f(0) = z0``, ``f'(0) > 0``.

    ``theta`` is a uniform angle grid, ``boundary`` the boundary values
    ``f(e^{i theta})``, ``deriv_abs`` the values ``|f'(e^{i theta})|`` and
    ``coeffs`` the Taylor coefficients ``c_0 .. c_N``.
    """

    z0: complex
    theta: np.ndarray
    boundary: np.ndarray
    coeffs: np.ndarray
    deriv_abs: np.ndarray
    tolerance: float
    achieved: float
    polyline: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)
    function: Optional[Callable] = field(default=None, repr=False)
    derivative_fn: Optional[Callable] = field(default=None, repr=False)

    def __call__(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=complex)
        if self.function is not None:
            return self.function(tau)
        return np.polynomial.polynomial.polyval(tau, self.coeffs)

    def derivative(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=complex)
        if self.derivative_fn is not None:
            return self.derivative_fn(tau)
        k = np.arange(1, len(self.coeffs))
        return np.polynomial.polynomial.polyval(tau, self.coeffs[1:] * k)

    @property
    def scale(self) -> float:
        """``f'(0)``, the conformal radius of the domain about ``z0``."""
        return float(self.coeffs[1].real)

    def image_polygon(self, r: float, samples: int = 512) -> np.ndarray:
        th = 2 * np.pi * np.arange(samples) / samples
        return self(r * np.exp(1j * th))

    def winding(self, about: complex, r: float = 1.0, samples: int = 512) -> int:
        return winding_number(self.image_polygon(r, samples), about)

    def image_mask(self, z, r: float, samples: int = 512) -> np.ndarray:
        """Points of ``z`` inside the image of the disc of radius ``r``."""
        z = np.asarray(z, dtype=complex)
        poly = self.image_polygon(r, samples)
        pts = np.column_stack([z.ravel().real, z.ravel().imag])
        inside = points_in_poly(pts, np.column_stack([poly.real, poly.imag]))
        return inside.reshape(z.shape)


def _invert_correspondence(u: np.ndarray, theta_f: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Solve ``theta_f(u) = target`` with ``theta_f(u) - u`` trigonometric-interpolated."""
    M = len(u)
    q = theta_f - u
    qhat = np.fft.fft(q) / M
    k = np.fft.fftfreq(M, d=1.0 / M)
    if M % 2 == 0:
        qhat[M // 2] = 0.0

    def evaluate(x):
        e = np.exp(1j * np.outer(x, k))
        val = (e @ qhat).real
        der = (e @ (1j * k * qhat)).real
        return val, der

    # theta_f is increasing, so neighbouring samples bracket every target;
    # Newton steps that leave the bracket fall back to bisection
    ext_t = np.concatenate([theta_f, [theta_f[0] + 2 * np.pi]])
    ext_u = np.concatenate([u, [u[0] + 2 * np.pi]])
    j = np.clip(np.searchsorted(ext_t, targets, side="right") - 1, 0, M - 1)
    lo, hi = ext_u[j].copy(), ext_u[j + 1].copy()
    x = np.interp(targets, ext_t, ext_u)
    for _ in range(100):
        val, der = evaluate(x)
        res = x + val - targets
        lo = np.where(res < 0, x, lo)
        hi = np.where(res > 0, x, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            nx = x - res / (1.0 + der)
        bad = ~((nx > lo) & (nx < hi))
        nx[bad] = 0.5 * (lo[bad] + hi[bad])
        step = np.abs(nx - x)
        x = nx
        if np.max(step) < 1e-14:
            break
    return x


def map_from_curve(points, z0: complex, M: int = 512, tol: float = 1e-3, smoothing: float = 0.0,
                   series_terms: Optional[int] = None) -> ConformalMap:
    """Riemann map of the Jordan domain bounded by ``points`` with ``f(0) = z0``."""
    poly = _dedupe(points)
    if winding_number(poly, z0) == 0:
        raise DomainError("center is not enclosed by the boundary curve")
    curve = resample_curve(poly, M, smoothing)
    sz = szego_boundary(curve, z0)
    S, T, Saa = sz["S"], sz["T"], sz["Saa"]
    F = -1j * T * S ** 2 / np.abs(S) ** 2
    dF = 2 * np.pi * np.abs(S) ** 2 / Saa
    u = 2 * np.pi * np.arange(M) / M
    theta_f = np.unwrap(np.angle(F))
    turn = (theta_f[-1] - theta_f[0] + (2 * np.pi / M) * np.mean(dF * np.abs(curve.dz))) / (2 * np.pi)
    if abs(turn - 1.0) > 0.05 or np.any(np.diff(theta_f) <= 0):
        raise MapError("boundary correspondence is not monotone", achieved=np.inf)
    shift = theta_f[0]
    targets = 2 * np.pi * np.arange(M) / M
    uu = _invert_correspondence(u, theta_f - shift, targets)
    # f(e^{i (phi + shift)}) = z(u(phi))
    bvals = curve.at(uu)
    cm = np.fft.fft(bvals) / M
    # sample m sits at angle phi_m + shift; undo the rotation so f'(0) > 0
    phase = np.angle(cm[1])
    nterms = M // 2 if series_terms is None else int(series_terms)
    k = np.arange(nterms)
    coeffs = cm[:nterms] * np.exp(-1j * phase * k)
    neg = cm[M // 2 + 1:]
    z0_gap = abs(coeffs[0] - z0)
    coeffs[0] = complex(z0)
    coeffs[1] = abs(coeffs[1])
    theta = np.mod(targets + phase, 2 * np.pi)
    order = np.argsort(theta)
    theta = theta[order]
    bvals = bvals[order]
    # |f'| on the boundary from the kernel, at the same boundary points
    deriv_abs = 1.0 / np.interp(uu, u, dF, period=2 * np.pi)[order]
    cmap = ConformalMap(complex(z0), theta, bvals, coeffs, deriv_abs, float(tol), np.inf, poly)
    series_bd = cmap(np.exp(1j * theta))
    achieved = float(np.max(polyline_distance(series_bd, poly)))
    cmap.achieved = achieved
    cmap.diagnostics = {
        "center_gap": float(z0_gap),
        "negative_frequency_norm": float(np.sqrt(np.sum(np.abs(neg) ** 2))),
        "series_tail": float(np.sum(np.abs(coeffs[-8:]))),
        "szego_norm": Saa,
        "samples": M,
        "series_terms": nterms,
    }
    if not achieved <= tol:
        raise MapError(f"boundary distance {achieved:.3g} exceeds tolerance {tol:.3g}", achieved=achieved)
    return cmap


def outer_loop(domain: FlowDomain) -> np.ndarray:
    """The boundary loop winding once around the injection point."""
    cands = [lp for lp in domain.loops if len(lp) > 3 and winding_number(lp, domain.z0) != 0]
    if not cands:
        raise TopologyError("no boundary loop encloses the injection point", holes=domain.holes)
    return max(cands, key=lambda lp: abs(signed_area(lp)))


def riemann_map(domain: FlowDomain, M: int = 512, tol: Optional[float] = None) -> ConformalMap:
    """Riemann map of a simply connected weak domain in the z-chart."""
    if domain.holes > 0 or domain.components != 1:
        raise TopologyError(f"domain has {domain.components} component(s) and {domain.holes} hole(s)",
                            holes=domain.holes)
    if domain.field.chart_w is not None and domain.mask_w is not None:
        wg = domain.field.chart_w.grid
        if np.any(domain.mask_w & (np.abs(wg.z) < 0.8)):
            raise UnsupportedError("domain leaves the z-chart")
    loop = outer_loop(domain)
    if tol is None:
        tol = domain.grid.h
    return map_from_curve(loop, domain.z0, M, tol)


def analytic_map(function: Callable, derivative: Callable, z0: complex, M: int = 512,
                 terms: int = 64) -> ConformalMap:
    """A map given in closed form; coefficients from samples on ``|tau| = 0.5``."""
    theta = 2 * np.pi * np.arange(M) / M
    r = 0.5
    vals = function(r * np.exp(1j * theta))
    c = np.fft.fft(vals)[:terms] / M / r ** np.arange(terms)
    with np.errstate(all="ignore"):
        bd = function(np.exp(1j * theta))
        dabs = np.abs(derivative(np.exp(1j * theta)))
    return ConformalMap(complex(z0), theta, bd, c, dabs, 0.0, 0.0, None,
                        {"analytic": True}, function, derivative)


# ------------------------------------------------------------------ checks

def disc_samples(radii=RADII, angles: int = ANGLES) -> np.ndarray:
    th = 2 * np.pi * np.arange(angles) / angles
    return np.concatenate([r * np.exp(1j * th) for r in radii])


def _field_at_time(fan, t: float):
    k = int(np.argmin(np.abs(np.asarray(fan.t) - t)))
    if abs(fan.t[k] - t) > 1e-12:
        raise DomainError(f"t={t} is not a sampled time of the fan")
    return fan.fields[k]


def verify_harmonic_disc(cmap: ConformalMap, t: float, fan, radii=RADII, angles: int = ANGLES) -> dict:
    """Residuals of the disc identity and of ``H = t - 1`` along ``tau -> (f(tau), tau)``."""
    tau = disc_samples(radii, angles)
    z = cmap(tau)
    field_ = _field_at_time(fan, t)
    psi = field_.psi_at(z)
    lhs = psi + (1.0 - t) * np.log(np.abs(tau) ** 2)
    rhs = fan.evaluate_at(z, tau)
    ident = np.abs(lhs - rhs)
    H = fan.hamiltonian_at(z, tau)
    hres = np.abs(H - (t - 1.0))
    per_radius = {}
    for i, r in enumerate(radii):
        sl = slice(i * angles, (i + 1) * angles)
        per_radius[f"{r:g}"] = {"identity": float(ident[sl].max()), "hamiltonian": float(hres[sl].max())}
    return {"t": float(t), "identity_max": float(ident.max()), "hamiltonian_max": float(hres.max()),
            "per_radius": per_radius, "samples": int(tau.size)}


def constant_disc_values(fan, points, radii=RADII, angles: int = 16) -> dict:
    """``H`` along constant discs ``tau -> (p, tau)`` at each probe point."""
    tau = disc_samples(radii, angles)
    out = {}
    for p in points:
        H = fan.hamiltonian_at(np.full(tau.shape, complex(p)), tau)
        out[str(complex(p))] = {"min": float(H.min()), "max": float(H.max())}
    return out


def properness_check(cmap: ConformalMap, domain: FlowDomain, r: float = 0.99, samples: int = 512) -> dict:
    pts = cmap.image_polygon(r, samples)
    inside = domain.contains(pts)
    return {"radius": r, "inside_fraction": float(np.mean(inside)),
            "zero_winding": cmap.winding(domain.z0, 1e-3)}


def area_transport(cmap: ConformalMap, form: AreaForm, radial: int = 200, angular: int = 256) -> float:
    """``int_D rho(f) |f'|^2 dA`` by Gauss-Legendre in ``r`` and trapezoid in angle."""
    x, w = np.polynomial.legendre.leggauss(radial)
    r = 0.5 * (x + 1.0)
    wr = 0.5 * w
    th = 2 * np.pi * np.arange(angular) / angular
    tau = r[:, None] * np.exp(1j * th[None, :])
    val = form.rho(cmap(tau)) * np.abs(cmap.derivative(tau)) ** 2
    return float(np.sum(val * (r * wr)[:, None]) * 2 * np.pi / angular)


def inner_measure(fan, form: AreaForm, r: float) -> np.ndarray:
    """Node density ``rho + Lap_h Phi~(., r) / (4 pi)``, negatives clamped, frame zeroed."""
    if not 0 < r < 1:
        raise DomainError("radius must lie in (0, 1)")
    g = fan.grid
    U = fan.evaluate(-2.0 * np.log(r))
    lap = np.zeros(g.shape)
    lap[1:-1, 1:-1] = (U[2:, 1:-1] + U[:-2, 1:-1] + U[1:-1, 2:] + U[1:-1, :-2] - 4 * U[1:-1, 1:-1]) / g.h ** 2
    dens = lattice_density(fan, form) + lap / (4 * np.pi)
    dens[g.frame()] = 0.0
    return np.maximum(dens, 0.0)


def inner_domain_check(cmap: ConformalMap, t: float, r: float, fan, form: AreaForm,
                       tol: float = 1e-8) -> dict:
    """Compare the image of the disc of radius ``r`` with the flow of the fiber measure."""
    if fan.is_sphere:
        raise UnsupportedError("the fiber measure is only assembled on plane fans")
    g = fan.grid
    dens = inner_measure(fan, form, r)
    negative = float(np.minimum(form.rho(g.z) + 0.0, 0.0).sum())
    sub = grid_form(g, dens, name=f"fiber-r{r:g}")
    fld = solve_envelope(sub, t, g, tol=tol)
    dom = extract_domain(fld)
    image = cmap.image_mask(g.z, r)
    node = form.rho(g.z) * g.h ** 2
    sym = image ^ dom.mask
    diff = float(node[sym].sum())
    return {"t": float(t), "r": float(r), "symmetric_difference": diff, "relative": diff / t,
            "image_area": float(node[image].sum()), "flow_area": float(node[dom.mask].sum()),
            "fiber_mass": float(dens.sum() * g.h ** 2), "holes": dom.holes, "clamped": negative}


# ------------------------------------------------------------------ estimator

class RiemannMap(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` on a FlowDomain, ``transform`` maps disc points."""

    def __init__(self, samples: int = 512, tol: Optional[float] = None):
        self.samples = samples
        self.tol = tol

    def fit(self, domain, y=None):
        if not isinstance(domain, FlowDomain):
            raise DomainError("RiemannMap.fit expects a FlowDomain")
        self.map_ = riemann_map(domain, self.samples, self.tol)
        self.coef_ = self.map_.coeffs
        return self

    def transform(self, X):
        check_is_fitted(self, "map_")
        return self.map_(np.asarray(X, dtype=complex))
