"""Weak HMAE solution from Hele-Shaw envelopes by Legendre duality.

For each node the sampled envelopes give support lines
``s -> psi_k(z) - (1 - t_k) s`` on ``s = -ln|tau|^2 >= 0``; their upper
envelope is the weak solution at ``(z, tau)``, its right slope is the
Hamiltonian, and the infimal transform in ``s`` recovers the envelopes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, ndimage

from .exceptions import DomainError, FanError, UnsupportedError
from .flow import ArrivalField
from .forms import AreaForm
from .grid import GridSpec
from .obstacle import EnvelopeField

TIE_TOL = 1e-13


def _upper_hull(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Indices of the concave majorant vertices of finite points ``(t, y)``."""
    idx = [k for k in range(len(t)) if np.isfinite(y[k])]
    hull: list = []
    for k in idx:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b when it lies on or below the chord from a to k
            if (y[b] - y[a]) * (t[k] - t[a]) <= (y[k] - y[a]) * (t[b] - t[a]) + 1e-15:
                hull.pop()
            else:
                break
        hull.append(k)
    return np.array(hull, dtype=int)


@dataclass
class SupportFan:
    """Per-node support lines of the weak solution, stored as ``(t_k, psi_k(z))``.

    ``values`` has shape ``(K, n, n)`` for the z-chart and ``values_w`` the
    same for the w-chart on the sphere.  Values above ``-eps`` are clamped to
    zero.
    """

    t: np.ndarray
    values: np.ndarray
    grid: GridSpec
    eps: np.ndarray
    fields: Sequence[EnvelopeField]
    values_w: Optional[np.ndarray] = None
    w_grid: Optional[GridSpec] = None
    concave: Optional[np.ndarray] = None
    concave_w: Optional[np.ndarray] = None

    @property
    def is_sphere(self) -> bool:
        return self.values_w is not None

    @property
    def mass(self) -> float:
        return float(self.t[-1])

    # evaluation on nodes -------------------------------------------------
    def _lines(self, s: float, values: np.ndarray) -> np.ndarray:
        return values - (1.0 - self.t)[:, None, None] * s

    def evaluate(self, s: float, chart: str = "z") -> np.ndarray:
        """``Phi~(z, e^{-s/2})`` at every node of a chart."""
        s = _check_s(s)
        vals = self.values if chart == "z" else self.values_w
        return np.max(self._lines(s, vals), axis=0)

    def active_index(self, s: float, chart: str = "z") -> np.ndarray:
        """Index of the line realizing the maximum; ties go to the largest slope."""
        s = _check_s(s)
        vals = self.values if chart == "z" else self.values_w
        lines = self._lines(s, vals)
        top = np.max(lines, axis=0)
        tie = lines >= top - TIE_TOL * (1.0 + np.abs(top))
        K = len(self.t)
        return K - 1 - np.argmax(tie[::-1], axis=0)

    def slope(self, s: float, chart: str = "z") -> np.ndarray:
        return self.t[self.active_index(s, chart)] - 1.0

    # evaluation at points ------------------------------------------------
    def point_lines(self, z) -> np.ndarray:
        """``psi_k(z)`` for all k at arbitrary points (shape ``(K,) + z.shape``)."""
        z = np.asarray(z, dtype=complex)
        out = np.stack([f.psi_at(z) for f in self.fields])
        eps = self.eps.reshape((-1,) + (1,) * z.ndim)
        with np.errstate(invalid="ignore"):
            return np.where(out > -eps, 0.0, out)

    def evaluate_at(self, z, tau) -> np.ndarray:
        """``Phi~(z, tau)``; depends on ``tau`` only through ``|tau|``."""
        s = _tau_to_s(tau)
        lines = self.point_lines(z)
        s = np.broadcast_to(s, lines.shape[1:])
        return np.max(lines - (1.0 - self.t).reshape((-1,) + (1,) * s.ndim) * s, axis=0)

    def hamiltonian_at(self, z, tau) -> np.ndarray:
        s = _tau_to_s(tau)
        lines = self.point_lines(z)
        s = np.broadcast_to(s, lines.shape[1:])
        vals = lines - (1.0 - self.t).reshape((-1,) + (1,) * s.ndim) * s
        top = np.max(vals, axis=0)
        tie = vals >= top - TIE_TOL * (1.0 + np.abs(top))
        K = len(self.t)
        k = K - 1 - np.argmax(tie[::-1], axis=0)
        return self.t[k] - 1.0


def _check_s(s) -> float:
    s = float(s)
    if s < 0:
        raise DomainError("s must be nonnegative (|tau| <= 1)")
    return s


def _tau_to_s(tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=complex)
    r2 = np.abs(tau) ** 2
    if np.any(r2 == 0) or np.any(r2 > 1 + 1e-12):
        raise DomainError("tau must satisfy 0 < |tau| <= 1")
    return np.maximum(-np.log(r2), 0.0)


def _concavity(t: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Per-node flag: sampled values concave in t (with -inf allowed only as a tail)."""
    finite = np.isfinite(vals)
    y = np.where(finite, vals, 0.0)
    dt = np.diff(t)
    slopes = np.diff(y, axis=0) / dt[:, None, None]
    both = finite[1:] & finite[:-1]
    ok_pair = both[1:] & both[:-1]
    dec = np.where(ok_pair, slopes[1:] - slopes[:-1], -1.0)
    scale = 1e-12 * (1.0 + np.abs(y).max(axis=0))
    conc = np.all(dec <= scale[None], axis=0)
    # a finite value after -inf breaks the simple structure
    tail_ok = np.all(~(finite[1:] & ~finite[:-1]), axis=0)
    return conc & tail_ok


def legendre_forward(envelopes: Sequence[EnvelopeField]) -> SupportFan:
    """Support fan of a family of envelopes from one form on one grid.

    A ``t = 0`` line (``psi_0 = 0``) is added when missing.
    """
    fields = [f for f in envelopes if f.marker is None]
    if len(fields) < 2:
        raise FanError("a fan needs at least two envelopes")
    t = np.array([f.t for f in fields], dtype=float)
    if np.any(np.diff(t) <= 0):
        raise FanError("envelopes must be sorted by strictly increasing t")
    if np.any(t < 0):
        raise FanError("times must be nonnegative")
    g = fields[0].grid
    if any(f.grid != g for f in fields):
        raise FanError("envelopes live on different grids")
    eps = np.array([f.eps_mask for f in fields])

    def clamp(stack):
        with np.errstate(invalid="ignore"):
            return np.where(stack > -eps[:, None, None], 0.0, stack)

    vals = clamp(np.stack([f.discrete_psi for f in fields]))
    vals_w = None
    wg = None
    if fields[0].chart_w is not None:
        wg = fields[0].chart_w.grid
        vals_w = clamp(np.stack([f.chart_w.psi for f in fields]))
    if t[0] > 0:
        t = np.concatenate([[0.0], t])
        eps = np.concatenate([[eps[0]], eps])
        vals = np.concatenate([np.zeros((1,) + vals.shape[1:]), vals])
        if vals_w is not None:
            vals_w = np.concatenate([np.zeros((1,) + vals_w.shape[1:]), vals_w])
        fields = [_ZeroField(g, fields[0])] + list(fields)
    conc = _concavity(t, vals)
    conc_w = None if vals_w is None else _concavity(t, vals_w)
    return SupportFan(t, vals, g, eps, fields, vals_w, wg, conc, conc_w)


class _ZeroField:
    """Stand-in for the identically zero envelope at ``t = 0``."""

    def __init__(self, grid, like):
        self.grid = grid
        self.t = 0.0
        self.eps_mask = like.eps_mask

    def psi_at(self, z):
        return np.zeros(np.shape(z))


def _inverse_chart(t_all: np.ndarray, vals: np.ndarray, concave: np.ndarray, t: float) -> np.ndarray:
    """``inf_{s >= 0} [max_k (psi_k - (1 - t_k) s) + (1 - t) s]`` per node.

    The infimum of a convex piecewise-linear function sits at ``s = 0`` or at
    a breakpoint.  For nodes with concave samples the breakpoints are the
    crossings of consecutive lines; other nodes are reduced to their hull.
    """
    K = len(t_all)
    out = np.max(vals, axis=0)  # value at s = 0
    finite = np.isfinite(vals)
    with np.errstate(invalid="ignore", divide="ignore"):
        y = np.where(finite, vals, 0.0)
        s_k = (y[:-1] - y[1:]) / (t_all[1:] - t_all[:-1])[:, None, None]
        cand = vals[:-1] + (t_all[:-1] - t)[:, None, None] * s_k
        ok = finite[:-1] & finite[1:] & (s_k > 0)
        cand = np.where(ok, cand, np.inf)
    best = np.minimum(out, cand.min(axis=0))
    # beyond the last line the slope is t_K - t; negative means -inf
    best = np.where(t > t_all[-1] + 1e-15, -np.inf, best)
    bad = np.argwhere(~concave)
    for i, j in bad:
        best[i, j] = _inverse_hull(t_all, vals[:, i, j], t)
    return best


def _inverse_hull(t_all: np.ndarray, y: np.ndarray, t: float) -> float:
    hull = _upper_hull(t_all, y)
    th, yh = t_all[hull], y[hull]
    vals = [yh.max()]
    for a, b in zip(hull[:-1], hull[1:]):
        s = (y[a] - y[b]) / (t_all[b] - t_all[a])
        if s > 0:
            vals.append(y[a] + (t_all[a] - t) * s)
    if t > th[-1] + 1e-15:
        return -np.inf
    return float(min(vals))


def legendre_inverse(fan: SupportFan, t: float) -> np.ndarray:
    """Envelope at time ``t`` recovered from the fan (z-chart nodes)."""
    t = float(t)
    if t < 0 or t > fan.mass + 1e-12:
        raise DomainError(f"t={t} outside the fan's slope range [0, {fan.mass}]")
    return _inverse_chart(fan.t, fan.values, fan.concave, t)


def legendre_inverse_w(fan: SupportFan, t: float) -> np.ndarray:
    if fan.values_w is None:
        raise UnsupportedError("plane fans have no w-chart")
    return _inverse_chart(fan.t, fan.values_w, fan.concave_w, float(t))


def hamiltonian(fan: SupportFan, s: float) -> np.ndarray:
    """Right slope ``H(z, e^{-s/2})`` at every z-chart node."""
    return fan.slope(s)


def arrival_from_H(fan: SupportFan) -> ArrivalField:
    """``H(z, 1) + 1`` per node: the largest sampled time at which ``psi = 0``."""
    arr = fan.slope(0.0) + 1.0
    arr_w = None if fan.values_w is None else fan.slope(0.0, "w") + 1.0
    return ArrivalField(fan.grid, arr, fan.t.copy(), fan.mass, arr_w, fan.w_grid, "hamiltonian")


# ------------------------------------------------------------------ diagnostics

def ma_residual(fan: SupportFan, form: AreaForm, s_values: Optional[np.ndarray] = None,
                exclude_radius: Optional[float] = None) -> dict:
    """Discrete Monge-Ampere density of the weak solution on ``(z, s)`` space.

    With ``u(z, s)`` the fan, the density is proportional to
    ``(Lap u / 4 pi + rho) u_ss - (u_xs^2 + u_ys^2) / (4 pi)``; it should
    vanish.  Second differences use the grid in ``z`` and ``s_values`` (uniform)
    in ``s``.  Cells next to ``z0`` are excluded.
    """
    g = fan.grid
    if s_values is None:
        s_values = np.linspace(0.05, 2.0, 40)
    s_values = np.asarray(s_values, dtype=float)
    ds = float(s_values[1] - s_values[0])
    if np.any(np.abs(np.diff(s_values) - ds) > 1e-12 * max(1.0, ds)) or ds <= 0:
        raise DomainError("s_values must be uniform and increasing")
    U = np.stack([fan.evaluate(s) for s in s_values])
    rho = lattice_density(fan, form)
    h = g.h
    lap = (U[:, 2:, 1:-1] + U[:, :-2, 1:-1] + U[:, 1:-1, 2:] + U[:, 1:-1, :-2] - 4 * U[:, 1:-1, 1:-1]) / h ** 2
    fiber = lap / (4 * np.pi) + rho[None, 1:-1, 1:-1]
    uss = (U[2:] - 2 * U[1:-1] + U[:-2]) / ds ** 2
    ux = (U[:, 1:-1, 2:] - U[:, 1:-1, :-2]) / (2 * h)
    uy = (U[:, 2:, 1:-1] - U[:, :-2, 1:-1]) / (2 * h)
    uxs = (ux[2:] - ux[:-2]) / (2 * ds)
    uys = (uy[2:] - uy[:-2]) / (2 * ds)
    res = fiber[1:-1] * uss[:, 1:-1, 1:-1] - (uxs ** 2 + uys ** 2) / (4 * np.pi)
    r = np.abs(g.z - g.z0)[1:-1, 1:-1]
    excl = 4 * h if exclude_radius is None else exclude_radius
    keep = np.broadcast_to(r > excl, res.shape)
    vals = np.abs(res[keep])
    flat = np.all(np.abs(U) == 0, axis=0)[1:-1, 1:-1]
    return {"max": float(vals.max()) if vals.size else 0.0,
            "mean": float(vals.mean()) if vals.size else 0.0,
            "flat_max": float(np.abs(res[:, flat]).max()) if flat.any() else 0.0,
            "field": res, "s": s_values[1:-1]}


def fiber_measure(fan: SupportFan, form: AreaForm, s: float) -> dict:
    """Discrete ``rho + Lap Phi~(., s)/(4 pi)`` on both charts (node masses)."""
    g = fan.grid
    U = fan.evaluate(s)
    out = {"z": _node_measure(U, lattice_density(fan, form), g)}
    if fan.values_w is not None:
        W = fan.evaluate(s, "w")
        out["w"] = _node_measure(W, lattice_density(fan, form, "w"), fan.w_grid)
    return out


def lattice_density(fan: SupportFan, form: AreaForm, chart: str = "z") -> np.ndarray:
    """Node density the envelope solves used (pointwise density as a fallback)."""
    solved = [f for f in fan.fields if isinstance(f, EnvelopeField)]
    if chart == "w":
        if solved and solved[-1].chart_w is not None:
            return solved[-1].chart_w.rho
        return form.rho_w(fan.w_grid.z)
    if solved:
        return solved[-1].rho
    return form.rho(fan.grid.z)


def _node_measure(U, rho, grid: GridSpec) -> np.ndarray:
    m = np.zeros(grid.shape)
    h = grid.h
    lap = U[2:, 1:-1] + U[:-2, 1:-1] + U[1:-1, 2:] + U[1:-1, :-2] - 4 * U[1:-1, 1:-1]
    m[1:-1, 1:-1] = lap / (4 * np.pi) + rho[1:-1, 1:-1] * h * h
    return m


def h_modulus(field_: ArrivalField, jump: float = 0.1, exclude_radius: Optional[float] = None) -> dict:
    """Moduli of continuity of ``H(., 1)`` at distances h, 2h, 4h and jump flags.

    Node pairs one step apart with ``|dH| > jump`` are flagged; flagged nodes
    are grouped into clusters.
    """
    g = field_.grid
    H = field_.H
    r = np.abs(g.z - g.z0)
    excl = 2 * g.h if exclude_radius is None else exclude_radius
    usable = r > excl
    moduli = {}
    lip = 0.0
    flags = np.zeros(g.shape, dtype=bool)
    for k in (1, 2, 4):
        best = 0.0
        for axis in (0, 1):
            a = np.take(H, np.arange(0, g.n - k), axis=axis)
            b = np.take(H, np.arange(k, g.n), axis=axis)
            ua = np.take(usable, np.arange(0, g.n - k), axis=axis)
            ub = np.take(usable, np.arange(k, g.n), axis=axis)
            d = np.where(ua & ub, np.abs(a - b), 0.0)
            best = max(best, float(d.max()))
            if k == 1:
                hit = d > jump
                if axis == 0:
                    flags[:-1, :] |= hit
                    flags[1:, :] |= hit
                else:
                    flags[:, :-1] |= hit
                    flags[:, 1:] |= hit
        moduli[k] = best
        lip = max(lip, best / (k * g.h))
    labels, nclusters = ndimage.label(flags, structure=np.ones((3, 3)))
    centers = []
    for c in range(1, nclusters + 1):
        sel = labels == c
        centers.append(complex(np.mean(g.z[sel])))
    return {"modulus": {f"{k}h": v for k, v in moduli.items()}, "lipschitz": lip,
            "flag_count": int(flags.sum()), "clusters": int(nclusters), "cluster_centers": centers,
            "flags": flags}


# ------------------------------------------------------------------ twisting

@dataclass(frozen=True)
class TwistedBoundaryData:
    """Boundary data ``phi(z, tau) = ln(1+|tau z|^2) - ln(1+|z|^2) - c(tau)`` for the round sphere."""

    name: str = "fubini-study"

    def normalizer(self, tau) -> float:
        """``c(tau)``: makes the data average to zero against the round form."""
        a = float(np.abs(tau) ** 2)
        if a == 0:
            raise DomainError("tau must be nonzero")
        if a == 1.0:
            return 0.0

        def integrand(x):
            # radial form of the average: x = |z|^2, weight dx / (1 + x)^2
            return (np.log1p(a * x) - np.log1p(x)) / (1.0 + x) ** 2

        val, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
        return float(val)

    def __call__(self, z, tau) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        a = np.abs(tau) ** 2
        return np.log1p(a * np.abs(z) ** 2) - np.log1p(np.abs(z) ** 2) - self.normalizer(tau)


def twist_to_disc(fan: SupportFan, data: TwistedBoundaryData, tau, z=None) -> np.ndarray:
    """Disc-problem solution ``Phi~(tau z, tau) + phi(z, tau) - ln|tau|^2``.

    Evaluated at ``z`` (default: the z-chart nodes).
    """
    if not fan.is_sphere:
        raise UnsupportedError("twisting needs a sphere fan")
    tau = complex(tau)
    if tau == 0:
        raise DomainError("tau must be nonzero")
    if abs(tau) > 1 + 1e-12:
        raise DomainError("|tau| must not exceed 1")
    zz = fan.grid.z if z is None else np.asarray(z, dtype=complex)
    pts = tau * zz
    s = -np.log(abs(tau) ** 2)
    base = _sphere_sample(fan, max(s, 0.0), pts)
    return base + data(zz, tau) - np.log(abs(tau) ** 2)


def _sphere_sample(fan: SupportFan, s: float, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=complex)
    out = np.empty(pts.shape)
    far = np.abs(pts) > 1.0
    if (~far).any():
        out[~far] = fan.grid.sample(fan.evaluate(s), pts[~far])
    if far.any():
        out[far] = fan.w_grid.sample(fan.evaluate(s, "w"), 1.0 / pts[far])
    return out
