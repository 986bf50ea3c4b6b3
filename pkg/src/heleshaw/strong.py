"""Strong Hele-Shaw flow: marker fronts driven by the conformal pressure."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import griddata
from skimage.measure import points_in_poly
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .conformal import ConformalMap, resample_curve, signed_area, szego_boundary, winding_number
from .exceptions import BreakdownError, DomainError
from .flow import extract_domain
from .forms import AreaForm
from .grid import GridSpec
from .obstacle import solve_envelope

RAY_NODES = 24


@dataclass
class MarkerFront:
    """Closed counterclockwise polyline of boundary markers at time ``t``."""

    t: float
    z: np.ndarray
    z0: complex
    spacing: float = 0.02
    min_count: int = 64
    max_count: int = 512

    @property
    def count(self) -> int:
        return len(self.z)

    @property
    def length(self) -> float:
        return float(np.sum(np.abs(np.diff(np.concatenate([self.z, self.z[:1]])))))

    def target_count(self) -> int:
        n = int(np.ceil(self.length / self.spacing))
        return int(np.clip(n, self.min_count, self.max_count))

    def resampled(self, count: Optional[int] = None) -> "MarkerFront":
        n = self.target_count() if count is None else int(count)
        curve = resample_curve(self.z, n)
        return MarkerFront(self.t, curve.z, self.z0, self.spacing, self.min_count, self.max_count)

    def inside(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        pts = np.column_stack([z.ravel().real, z.ravel().imag])
        return points_in_poly(pts, np.column_stack([self.z.real, self.z.imag])).reshape(z.shape)

    def polygon_area(self) -> float:
        return abs(signed_area(self.z))


def disc_front(z0: complex, radius: float, count: int = 64, t: float = 0.0, spacing: float = 0.02) -> MarkerFront:
    th = 2 * np.pi * np.arange(count) / count
    return MarkerFront(float(t), complex(z0) + radius * np.exp(1j * th), complex(z0), spacing, min(count, 64))


def initial_front(form: AreaForm, t0: float, z0: Optional[complex] = None, count: int = 64,
                  spacing: float = 0.02) -> MarkerFront:
    """Small disc about ``z0`` whose area measured by the local density is ``t0``."""
    z0 = form.z0 if z0 is None else complex(z0)
    rho0 = float(form.rho(np.array([z0]))[0])
    if not rho0 > 0:
        raise DomainError("the density must be positive at the injection point")
    return disc_front(z0, np.sqrt(t0 / (np.pi * rho0)), count, t0, spacing)


# ------------------------------------------------------------------ geometry

def self_intersections(z: np.ndarray) -> list:
    """Pairs of non-adjacent segments of a closed polyline that cross."""
    a = np.asarray(z, dtype=complex)
    b = np.roll(a, -1)
    n = len(a)
    d = b - a

    def cross(u, v):
        return u.real * v.imag - u.imag * v.real

    hits = []
    for i in range(n - 2):
        j = np.arange(i + 2, n if i > 0 else n - 1)
        if j.size == 0:
            continue
        c1 = cross(d[i], a[j] - a[i])
        c2 = cross(d[i], b[j] - a[i])
        c3 = cross(d[j], a[i] - a[j])
        c4 = cross(d[j], b[i] - a[j])
        ok = (c1 * c2 < 0) & (c3 * c4 < 0)
        hits.extend((i, int(k)) for k in j[ok])
    return hits


def _frame(points: np.ndarray, z0: complex, count: int):
    """Equal-arclength markers, outward normals and ``|grad p|`` on them."""
    curve = resample_curve(points, count)
    sz = szego_boundary(curve, z0)
    grad = np.abs(sz["S"]) ** 2 / sz["Saa"]  # |F'| / (2 pi)
    normal = -1j * sz["T"]
    return curve.z, normal, grad, curve


def pressure_gradient(front: MarkerFront, cmap: Optional[ConformalMap] = None) -> np.ndarray:
    """``|grad p|`` at the markers for ``p = -(1/2 pi) ln|f^{-1}|``.

    Without a map the kernel is solved on the front itself; with one, the map's
    boundary samples are matched to the markers by nearest point.
    """
    if cmap is None:
        return _frame(front.z, front.z0, front.count)[2]
    k = np.argmin(np.abs(front.z[:, None] - cmap.boundary[None, :]), axis=1)
    return 1.0 / (2 * np.pi * cmap.deriv_abs[k])


def _kappa(form: AreaForm, z: np.ndarray) -> np.ndarray:
    rho = form.rho(z)
    if np.any(rho <= 0):
        raise DomainError("the front entered a region where the density vanishes")
    return 1.0 / rho


def _chord_params(z: np.ndarray) -> np.ndarray:
    seg = np.abs(np.diff(np.concatenate([z, z[:1]])))
    return np.concatenate([[0.0], np.cumsum(seg)[:-1]]) / seg.sum()


def step_front(front: MarkerFront, form: AreaForm, dt: float, scheme: str = "euler") -> MarkerFront:
    """Advance markers along the outward normal by ``kappa |grad p| dt``."""
    if not dt > 0:
        raise DomainError("time step must be positive")
    n = front.count
    z, normal, grad, _ = _frame(front.z, front.z0, n)
    v1 = _kappa(form, z) * grad * normal
    if scheme == "euler":
        new = z + dt * v1
    elif scheme == "heun":
        pred = z + dt * v1
        q, normal2, grad2, _ = _frame(pred, front.z0, n)
        v2 = _kappa(form, q) * grad2 * normal2
        # carry the second velocity back to the predicted markers along the curve
        u = _chord_params(pred)
        uq = np.arange(n) / n
        v2p = np.interp(u, uq, v2.real, period=1.0) + 1j * np.interp(u, uq, v2.imag, period=1.0)
        new = z + 0.5 * dt * (v1 + v2p)
    else:
        raise DomainError(f"unknown scheme {scheme!r}")
    out = MarkerFront(front.t + dt, new, front.z0, front.spacing, front.min_count, front.max_count)
    hits = self_intersections(new)
    if hits or winding_number(new, front.z0) != 1:
        raise BreakdownError(f"front self-intersects at t={out.t:.6g}", front=out, t=out.t)
    return out.resampled()


def max_speed(front: MarkerFront, form: AreaForm) -> float:
    z, _, grad, _ = _frame(front.z, front.z0, front.count)
    return float(np.max(_kappa(form, z) * grad))


# ------------------------------------------------------------------ region integrals

def region_integral(front: MarkerFront, integrand, samples: int = 1024) -> complex:
    """``int g dA`` over the front's interior by the divergence theorem on rays from ``z0``.

    With ``X(zeta) = (zeta - z0) int_0^1 g(z0 + s (zeta - z0)) s ds`` one has
    ``div X = g``; the boundary flux is summed with the trapezoid rule on a
    periodic spline of the front.
    """
    curve = resample_curve(front.z, samples)
    x, w = np.polynomial.legendre.leggauss(RAY_NODES)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * w
    rel = curve.z - front.z0
    pts = front.z0 + s[:, None] * rel[None, :]
    inner = np.sum(integrand(pts) * (s * ws)[:, None], axis=0)
    flux = np.imag(np.conj(rel) * curve.dz)
    return complex(np.sum(inner * flux) * 2 * np.pi / samples)


def front_moments(front: MarkerFront, form: AreaForm, K: int = 4, samples: int = 1024) -> np.ndarray:
    """``M_k = int z^k rho dA`` for ``k = 0..K``."""
    return np.array([region_integral(front, lambda p, k=k: p ** k * form.rho(p), samples)
                     for k in range(K + 1)])


def quadrature_identity_strong(front: MarkerFront, form: AreaForm, points, samples: int = 1024) -> dict:
    """``int ln|z - zeta|^2 rho dA - t ln|z - z0|^2`` at points outside the front."""
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    outside = ~front.inside(pts)
    dev = []
    for z in pts[outside]:
        val = region_integral(front, lambda p, z=z: np.log(np.abs(z - p) ** 2) * form.rho(p), samples).real
        dev.append(val - front.t * np.log(abs(z - front.z0) ** 2))
    dev = np.array(dev)
    return {"max_deviation": float(np.max(np.abs(dev))) if dev.size else 0.0,
            "used": int(outside.sum()), "skipped": int((~outside).sum())}


def subharmonic_gap(front: MarkerFront, form: AreaForm, a: complex, samples: int = 2048) -> float:
    """``int ln|zeta - a|^2 rho dA - t ln|z0 - a|^2``; positive for ``a`` inside."""
    val = region_integral(front, lambda p: np.log(np.abs(p - a) ** 2) * form.rho(p), samples).real
    return float(val - front.t * np.log(abs(front.z0 - a) ** 2))


# ------------------------------------------------------------------ runs

@dataclass
class StrongFlowResult:
    fronts: list
    times: np.ndarray
    moments: np.ndarray
    breakdown: Optional[dict] = None
    report: dict = field(default_factory=dict)

    def front_at(self, t: float) -> MarkerFront:
        k = int(np.argmin(np.abs(self.times - t)))
        return self.fronts[k]


def run_strong_flow(form: AreaForm, t0: float, t1: float, steps: int = 50, markers: int = 64,
                    scheme: str = "euler", cfl: float = 0.25, z0: Optional[complex] = None,
                    spacing: float = 0.02, max_markers: int = 512, record: Sequence[float] = (),
                    K: int = 4, raise_on_breakdown: bool = False) -> StrongFlowResult:
    """Step from a small disc of mass ``t0`` to ``t1``.

    The step is the smaller of ``(t1 - t0) / steps`` and ``cfl`` marker
    spacings of travel at the fastest marker; times in ``record`` are hit
    exactly.
    """
    if not 0 < t0 < t1:
        raise DomainError("need 0 < t0 < t1")
    if not 0 < cfl <= 2:
        raise DomainError("cfl must lie in (0, 2]")
    front = initial_front(form, t0, z0, markers, spacing)
    front.max_count = max_markers
    stops = sorted(x for x in record if t0 < x < t1) + [t1]
    fronts = [front]
    mom = [front_moments(front, form, K)]
    dt_max = (t1 - t0) / steps
    breakdown = None
    t = t0
    while t < t1 - 1e-12:
        h_sp = front.length / front.count
        dt = min(dt_max, cfl * h_sp / max_speed(front, form))
        nxt = next(x for x in stops if x > t + 1e-12)
        if t + dt > nxt - 1e-12 or t + 1.5 * dt > nxt:
            dt = nxt - t
        try:
            front = step_front(front, form, dt, scheme)
        except BreakdownError as err:
            breakdown = {"t": float(err.t), "t_last": float(t), "front": err.front}
            if raise_on_breakdown:
                err.fronts = fronts
                raise
            break
        if abs(front.t - nxt) < 1e-12:
            front.t = nxt
        t = front.t
        fronts.append(front)
        mom.append(front_moments(front, form, K))
    times = np.array([f.t for f in fronts])
    moments = np.array(mom)
    zc = fronts[0].z0
    base = moments[0]
    drift = np.abs(moments - base[None, :])
    drift[:, 0] = np.abs(moments[:, 0].real - times)
    rate = np.diff(moments[:, 0].real) / np.maximum(np.diff(times), 1e-300)
    report = {
        "steps": len(fronts) - 1,
        "t_reached": float(times[-1]),
        "mass_error": float(np.max(np.abs(moments[:, 0].real - times))),
        "moment_drift": [float(x) for x in drift.max(axis=0)],
        "rate_min": float(rate.min()) if rate.size else 1.0,
        "rate_max": float(rate.max()) if rate.size else 1.0,
        "z0": [zc.real, zc.imag],
        "scheme": scheme,
    }
    return StrongFlowResult(fronts, times, moments, breakdown, report)


# ------------------------------------------------------------------ inverse problem

def _ray_hit(z: np.ndarray, n: np.ndarray, poly: np.ndarray, sign: float) -> np.ndarray:
    """Signed distance along ``sign * n`` from each marker to a closed polyline."""
    a = poly
    d = np.roll(a, -1) - a
    w = a[None, :] - z[:, None]

    def cross(u, v):
        return u.real * v.imag - u.imag * v.real

    dirn = sign * n[:, None]
    den = cross(dirn, d[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        s = cross(w, d[None, :]) / den
        u = cross(w, dirn) / den
    ok = (np.abs(den) > 1e-14) & (u >= 0) & (u <= 1) & (s > 0)
    s = np.where(ok, s, np.inf)
    return s.min(axis=1)


@dataclass
class KappaSamples:
    points: np.ndarray
    kappa: np.ndarray
    t: np.ndarray
    speed: np.ndarray
    grad: np.ndarray

    def field(self, grid: GridSpec, inner: Optional[float] = None) -> np.ndarray:
        """Kappa on grid nodes: linear inside the swept region, nearest outside."""
        pts = np.column_stack([self.points.real, self.points.imag])
        q = np.column_stack([grid.z.real.ravel(), grid.z.imag.ravel()])
        lin = griddata(pts, self.kappa, q, method="linear")
        near = griddata(pts, self.kappa, q, method="nearest")
        out = np.where(np.isfinite(lin), lin, near).reshape(grid.shape)
        if inner is not None:
            first = self.t == self.t.min()
            r0 = np.min(np.abs(self.points[first] - grid.z0))
            out[np.abs(grid.z - grid.z0) < r0] = inner
        return out


def reverse_engineer_kappa(family: Sequence[MarkerFront]) -> KappaSamples:
    """``kappa = V / |grad p|`` on each interior front of a prescribed nested family."""
    fam = list(family)
    if len(fam) < 3:
        raise DomainError("need at least three fronts")
    ts = np.array([f.t for f in fam])
    if np.any(np.diff(ts) <= 0):
        raise DomainError("fronts must have increasing times")
    for a, b in zip(fam[:-1], fam[1:]):
        if not np.all(b.inside(a.z)):
            raise DomainError(f"fronts at t={a.t:g} and t={b.t:g} are not nested")
    P, Kp, T, V, G = [], [], [], [], []
    for k in range(1, len(fam) - 1):
        f = fam[k]
        z, normal, grad, _ = _frame(f.z, f.z0, f.count)
        sp = _ray_hit(z, normal, fam[k + 1].z, 1.0)
        sm = -_ray_hit(z, normal, fam[k - 1].z, -1.0)
        tm, t, tp = ts[k - 1], ts[k], ts[k + 1]
        # derivative at t of the quadratic through (tm, sm), (t, 0), (tp, sp)
        a1 = tp - t
        a0 = t - tm
        speed = (sp * a0 / (a1 * (a0 + a1)) - sm * a1 / (a0 * (a0 + a1)))
        good = np.isfinite(speed)
        P.append(z[good])
        Kp.append(speed[good] / grad[good])
        T.append(np.full(good.sum(), t))
        V.append(speed[good])
        G.append(grad[good])
    return KappaSamples(np.concatenate(P), np.concatenate(Kp), np.concatenate(T),
                        np.concatenate(V), np.concatenate(G))


# ------------------------------------------------------------------ strong vs weak

def strong_weak_compare(fronts: Sequence[MarkerFront], form: AreaForm, grid: GridSpec,
                        times: Optional[Sequence[float]] = None, tol: float = 1e-8,
                        raster: int = 2) -> dict:
    """Symmetric-difference density area between strong fronts and weak domains."""
    fr = list(fronts)
    sel = fr if times is None else [min(fr, key=lambda f: abs(f.t - t)) for t in times]
    fine = GridSpec(grid.center, grid.half_width, grid.cells * raster, grid.z0)
    node = form.rho(fine.z) * fine.h ** 2
    rows = []
    for f in sel:
        if f.t <= fr[0].t:
            rows.append({"t": float(f.t), "symmetric_difference": 0.0, "relative": 0.0})
            continue
        dom = extract_domain(solve_envelope(form, f.t, grid, tol=tol))
        weak = dom.region_mask(fine.z)
        strong = f.inside(fine.z)
        diff = float(node[weak ^ strong].sum())
        rows.append({"t": float(f.t), "symmetric_difference": diff, "relative": diff / f.t,
                     "weak_area": float(node[weak].sum()), "strong_area": float(node[strong].sum())})
    return {"rows": rows, "max_relative": max(r["relative"] for r in rows) if rows else 0.0}


class StrongHeleShaw(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` runs the strong flow, ``transform`` returns fronts at times."""

    def __init__(self, t0: float = 1e-3, t1: float = 0.5, steps: int = 50, markers: int = 64,
                 scheme: str = "euler", cfl: float = 0.25):
        self.t0 = t0
        self.t1 = t1
        self.steps = steps
        self.markers = markers
        self.scheme = scheme
        self.cfl = cfl

    def fit(self, form, y=None):
        self.result_ = run_strong_flow(form, self.t0, self.t1, self.steps, self.markers, self.scheme, self.cfl)
        self.moments_ = self.result_.moments
        return self

    def transform(self, X):
        check_is_fitted(self, "result_")
        return [self.result_.front_at(float(t)) for t in np.atleast_1d(X)]
