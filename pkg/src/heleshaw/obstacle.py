"""Hele-Shaw envelopes as discrete obstacle problems.

The envelope at time ``t`` is the largest ``psi <= 0`` with
``Laplacian(psi)/(4 pi) + rho >= 0`` away from the injection point and a
logarithmic pole of weight ``t`` there.  Writing ``psi = v + t*alpha`` with
``alpha = ln|z - z0|^2 - phi`` moves the pole into a known function and leaves
a bounded unknown ``v`` subject to

    v <= g := -t*alpha,    mu := f + L v >= 0,    mu * (g - v) = 0,

where ``L`` is the unscaled five-point Laplacian and ``f = (1-t) 4 pi rho h^2``.
Two solvers are provided: a primal-dual active set method with sparse direct
solves (default) and red-black projected SOR.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.signal import fftconvolve
from scipy.sparse.linalg import splu
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DomainError, FrameContactError, IterationLimitError
from .forms import OVERLAP, AreaForm
from .grid import GridSpec, five_point

CAP_RADIUS_CELLS = 4
PSOR_OMEGA = 1.8


# ------------------------------------------------------------------ helpers

def log_cell_integral(a: float, b: float) -> float:
    """Integral of ``ln(x^2 + y^2)`` over the rectangle ``[-a, a] x [-b, b]``."""

    def F(x, y):
        r2 = x * x + y * y
        return x * y * (np.log(r2) - 3.0) + x * x * np.arctan(y / x) + y * y * np.arctan(x / y)

    return float(4.0 * F(a, b))


def log_potential(grid: GridSpec, density: np.ndarray) -> np.ndarray:
    """``int ln|z - zeta|^2 rho(zeta) dA`` over the box, by FFT convolution.

    Node quadrature with the singular cell integrated exactly.
    """
    n = grid.n
    h = grid.h
    k = np.arange(-(n - 1), n) * h
    X, Y = np.meshgrid(k, k)
    with np.errstate(divide="ignore"):
        kern = np.log(X ** 2 + Y ** 2)
    kern[n - 1, n - 1] = log_cell_integral(h / 2, h / 2) / h ** 2
    return fftconvolve(density * h * h, kern, mode="valid")


def grid_potential(grid: GridSpec, density: np.ndarray) -> np.ndarray:
    """Node potential whose five-point Laplacian is exactly ``4 pi rho h^2``.

    Frame values are the log potential of the box density, so far from the
    support it behaves like ``m ln|z|^2``.
    """
    far = log_potential(grid, density)
    n = grid.n
    fr = np.where(grid.frame(), far, 0.0)
    rhs = -4.0 * np.pi * density[1:-1, 1:-1] * grid.h ** 2 + frame_contribution(fr)
    out = fr.copy()
    out[1:-1, 1:-1] = splu(interior_operator(n).tocsc()).solve(rhs.ravel()).reshape(n - 2, n - 2)
    return out


def _interior_operator(n: int) -> sp.csr_matrix:
    """``-L`` on the ``(n-2)^2`` interior nodes, Dirichlet frame removed."""
    m = n - 2
    main = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(m, m))
    eye = sp.identity(m)
    return (sp.kron(eye, main) + sp.kron(main, eye)).tocsr()


_OPERATORS: dict = {}


def interior_operator(n: int) -> sp.csr_matrix:
    if n not in _OPERATORS:
        _OPERATORS.clear()
        _OPERATORS[n] = _interior_operator(n)
    return _OPERATORS[n]


def frame_contribution(v: np.ndarray) -> np.ndarray:
    """Sum of frame neighbours for each interior node."""
    b = np.zeros((v.shape[0] - 2, v.shape[1] - 2))
    b[0, :] += v[0, 1:-1]
    b[-1, :] += v[-1, 1:-1]
    b[:, 0] += v[1:-1, 0]
    b[:, -1] += v[1:-1, -1]
    return b


@dataclass
class LCPResult:
    v: np.ndarray
    mu: np.ndarray
    active: np.ndarray
    iterations: int
    method: str
    converged: bool


def pdas(K: sp.spmatrix, b: np.ndarray, g: np.ndarray, active: np.ndarray, max_iter: int = 200):
    """Primal-dual active set iteration for ``x <= g, mu = b - K x >= 0, mu (g - x) = 0``.

    ``K`` should be a nonsingular Z-matrix on every inactive block.  Returns
    ``(x, mu, active, iterations, converged)``.
    """
    K = K.tocsr()
    active = active.copy()
    converged = False
    it = 0
    x = np.where(active, g, 0.0)
    mu = b - K @ x
    while it < max_iter:
        it += 1
        x = np.where(active, g, 0.0)
        inact = np.flatnonzero(~active)
        if inact.size:
            r = b[inact] - K[inact] @ x
            x[inact] = splu(K[inact][:, inact].tocsc(), permc_spec="COLAMD").solve(r)
        mu = b - K @ x
        d = mu + (x - g)
        # degenerate nodes (mu = 0 and x = g) keep their status
        tiny = 1e-13 * (1.0 + np.abs(g))
        new_active = np.where(np.abs(d) <= tiny, active, d > 0)
        if np.array_equal(new_active, active) or (np.all(x <= g + tiny) and np.all(mu >= -tiny)):
            converged = True
            break
        active = new_active
    return x, mu, active, it, converged


def solve_pdas(f: np.ndarray, g: np.ndarray, frame_values: np.ndarray,
               active0: Optional[np.ndarray] = None, max_iter: int = 200) -> LCPResult:
    """Primal-dual active set method for the single-chart upper-obstacle LCP.

    ``f``, ``g``, ``frame_values`` are full node arrays; only frame entries of
    ``frame_values`` are used.
    """
    n = f.shape[0]
    A = interior_operator(n)
    gi = g[1:-1, 1:-1].ravel()
    rhs = f[1:-1, 1:-1].ravel() + frame_contribution(frame_values).ravel()
    if active0 is None:
        # the unconstrained solution overshoots the obstacle off the domain
        active = splu(A.tocsc()).solve(rhs) >= gi
    else:
        active = active0[1:-1, 1:-1].ravel()
    v, mu, active, it, converged = pdas(A, rhs, gi, active, max_iter)
    V = frame_values.copy()
    V[1:-1, 1:-1] = v.reshape(n - 2, n - 2)
    return LCPResult(V, _embed(mu, n), _embed(active, n), it, "pdas", converged)


def _embed(values: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, n), dtype=values.dtype)
    out[1:-1, 1:-1] = values.reshape(n - 2, n - 2)
    return out


def solve_psor(f: np.ndarray, g: np.ndarray, frame_values: np.ndarray, tol_update: float,
               max_sweeps: int, omega: float = PSOR_OMEGA, v0: Optional[np.ndarray] = None) -> LCPResult:
    """Red-black projected SOR; stops when the largest update is below ``tol_update``."""
    n = f.shape[0]
    v = frame_values.copy() if v0 is None else v0.copy()
    v[0, :], v[-1, :], v[:, 0], v[:, -1] = (frame_values[0, :], frame_values[-1, :],
                                            frame_values[:, 0], frame_values[:, -1])
    if v0 is None:
        v[1:-1, 1:-1] = np.minimum(g[1:-1, 1:-1], 0.0)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    interior = np.zeros((n, n), dtype=bool)
    interior[1:-1, 1:-1] = True
    colors = [interior & ((ii + jj) % 2 == c) for c in (0, 1)]
    converged = False
    sweep = 0
    for sweep in range(1, max_sweeps + 1):
        biggest = 0.0
        for mask in colors:
            nb = np.zeros_like(v)
            nb[1:-1, 1:-1] = v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2]
            gs = 0.25 * (nb + f)
            new = np.minimum(g, v + omega * (gs - v))
            upd = np.abs(new - v)[mask]
            if upd.size:
                biggest = max(biggest, float(upd.max()))
            v = np.where(mask, new, v)
        if biggest < tol_update:
            converged = True
            break
    mu = f + five_point(v)
    mu[~interior] = 0.0
    active = interior & (v >= g)
    return LCPResult(v, mu, active, sweep, "psor", converged)


# ------------------------------------------------------------------ fields

@dataclass
class ChartData:
    """Node arrays of one chart: envelope, unknown and residuals."""

    grid: GridSpec
    psi: np.ndarray
    v: np.ndarray
    residual: np.ndarray
    rho: np.ndarray
    alpha: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None
    mu: Optional[np.ndarray] = None


def fill_weights(psi, mu, rho, h, eps) -> np.ndarray:
    """``rho h^2`` on domain nodes and the filled part ``rho h^2 - mu/(4 pi)`` on contact nodes.

    Summed, these weights carry exactly the injected mass of the discrete
    problem, so they resolve the boundary below the grid scale.
    """
    full = rho * h * h
    with np.errstate(invalid="ignore"):
        inside = psi < -eps
    if mu is None:
        return np.where(inside, full, 0.0)
    part = np.clip(full - mu / (4 * np.pi), 0.0, full)
    return np.where(inside, full, part)


@dataclass
class EnvelopeField:
    """Hele-Shaw envelope at time ``t`` sampled on a grid (and its w-chart on the sphere)."""

    t: float
    form: AreaForm
    grid: GridSpec
    psi: np.ndarray
    v: np.ndarray
    residual: np.ndarray
    rho: np.ndarray
    tol: float
    info: dict = field(default_factory=dict)
    alpha: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None
    chart_w: Optional[ChartData] = None
    marker: Optional[str] = None
    mu: Optional[np.ndarray] = None
    psi_lattice: Optional[np.ndarray] = None

    @property
    def discrete_psi(self) -> np.ndarray:
        """The lattice solution (falls back to ``psi`` for trivial fields)."""
        return self.psi if self.psi_lattice is None else self.psi_lattice

    def fill(self) -> np.ndarray:
        if self.t <= 0 or self.marker is not None:
            return np.zeros(self.grid.shape)
        w = fill_weights(self.psi, self.mu, self.rho, self.grid.h, self.eps_mask)
        if self.chart_w is None:
            w[self.grid.frame()] = 0.0
        return w

    @property
    def eps_mask(self) -> float:
        return 10.0 * self.tol * self.grid.h ** 2

    @property
    def is_sphere(self) -> bool:
        return self.chart_w is not None

    def alpha_at(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        with np.errstate(divide="ignore"):
            lg = np.log(np.abs(z - self.grid.z0) ** 2)
        if self.form.potential is not None:
            return lg - self.form.potential(z)
        return lg - self.grid.sample(self.phi, z)

    def psi_at(self, z) -> np.ndarray:
        """Envelope at arbitrary points: bilinear in ``v`` plus the exact singular part.

        On the sphere, points with ``|z| > 1`` are read from the w-chart.
        """
        z = np.asarray(z, dtype=complex)
        if self.marker == "minus-infinity":
            return np.full(z.shape, -np.inf)
        if self.t <= 0:
            return np.zeros(z.shape)
        out = np.empty(z.shape)
        far = np.zeros(z.shape, dtype=bool)
        if self.chart_w is not None:
            far = np.abs(z) > 1.0
            if far.any():
                out[far] = self.chart_w.grid.sample(self.chart_w.psi, 1.0 / z[far])
        near = ~far
        if near.any():
            zn = z[near]
            val = self.grid.sample(self.v, zn) + self.t * self.alpha_at(zn)
            # cells whose corners are all in the contact set are exactly zero
            contact = self.grid.sample((self.psi == 0).astype(float), zn) >= 1.0 - 1e-12
            lat = self.discrete_psi
            lat = self.grid.sample(np.where(np.isfinite(lat), lat, -1.0), zn)
            # the exact pole is only trusted where the lattice solution is clearly inside;
            # near the free boundary the two logs differ by more than the depth
            eps = self.eps_mask
            with np.errstate(invalid="ignore"):
                inside = lat < -eps
                val = np.where(inside, np.where(val < -eps, val, lat), 0.0)
            out[near] = np.where(contact, 0.0, np.minimum(val, 0.0))
        return out


_LATTICE_CACHE: dict = {}


def lattice_log(grid: GridSpec) -> np.ndarray:
    """Discrete counterpart of ``ln|z - z0|^2`` for the five-point stencil.

    Its unscaled five-point Laplacian is exactly ``4 pi`` at ``z0`` and zero at
    every other interior node; it is finite at ``z0`` and agrees with the
    logarithm up to ``O(h^2/r^2)``.  Frame values come from the large-distance
    expansion ``ln r^2 - h^2 cos(4 theta) / (6 r^2)``.
    """
    key = (grid.n, grid.z0_index)
    if key not in _LATTICE_CACHE:
        n = grid.n
        i0, j0 = grid.z0_index
        ii, jj = np.mgrid[0:n, 0:n]
        d = (jj - j0) + 1j * (ii - i0)  # offsets in units of h
        r = np.abs(d)
        with np.errstate(divide="ignore", invalid="ignore"):
            far = np.log(r ** 2) - np.cos(4 * np.angle(d)) / (6 * r ** 2)
        fr = np.where(grid.frame(), far, 0.0)
        rhs = frame_contribution(fr)
        rhs[i0 - 1, j0 - 1] -= 4.0 * np.pi
        out = fr.copy()
        out[1:-1, 1:-1] = splu(interior_operator(n).tocsc()).solve(rhs.ravel()).reshape(n - 2, n - 2)
        if len(_LATTICE_CACHE) > 8:
            _LATTICE_CACHE.clear()
        _LATTICE_CACHE[key] = out
    return _LATTICE_CACHE[key] + np.log(grid.h ** 2)


def _obstacle_arrays(form: AreaForm, grid: GridSpec, t: float):
    """Density, potential, lattice and continuous ``alpha``, obstacle and capped obstacle."""
    z = grid.z
    rho = form.rho(z)
    if form.potential is not None:
        phi = form.potential(z)
        # the density the lattice actually sees, so each envelope is exactly
        # discrete subharmonic for the same form on every node
        rho[1:-1, 1:-1] = (phi[2:, 1:-1] + phi[:-2, 1:-1] + phi[1:-1, 2:] + phi[1:-1, :-2]
                           - 4.0 * phi[1:-1, 1:-1]) / (4.0 * np.pi * grid.h ** 2)
    else:
        phi = grid_potential(grid, rho)
    alpha = lattice_log(grid) - phi
    g = -t * alpha
    dist = np.abs(z - grid.z0)
    ring_r = CAP_RADIUS_CELLS * grid.h
    ring = (dist >= ring_r - 0.5 * grid.h) & (dist <= ring_r + 0.5 * grid.h)
    cap_value = float(np.max(g[ring])) + 1.0
    g_cap = np.where(dist < ring_r, np.minimum(g, cap_value), g)
    return rho, phi, alpha, g, g_cap, cap_value


def continuous_alpha(grid: GridSpec, phi: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.abs(grid.z - grid.z0) ** 2) - phi


def assemble_psi(v, alpha, phi, active, grid: GridSpec, t: float, eps: float) -> tuple:
    """Envelope from the solved unknown, as ``(psi, psi_lattice)``.

    ``psi_lattice = v + t*alpha`` is the discrete solution itself (exactly
    concave in ``t``).  The reported ``psi`` swaps the lattice pole for the
    true logarithm, which keeps nodes next to ``z0`` accurate; both vanish on
    the same node set.
    """
    lat = np.where(active, 0.0, np.minimum(v + t * alpha, 0.0))
    with np.errstate(invalid="ignore"):
        exact = v + t * continuous_alpha(grid, phi)
        inside = lat < -eps
        psi = np.where(inside, np.where(exact < -eps, exact, lat), 0.0)
    psi[grid.z0_index] = -np.inf
    lat[grid.z0_index] = -np.inf
    return psi, lat


def _residual(v, mu, g_true, psi):
    with np.errstate(invalid="ignore"):
        gap = np.where(np.isfinite(g_true), g_true - v, np.inf)
    res = np.minimum(gap, mu)
    res = np.where(np.isinf(res), 0.0, res)
    return res


def _z0_patch(grid: GridSpec) -> np.ndarray:
    m = np.zeros(grid.shape, dtype=bool)
    i0, j0 = grid.z0_index
    m[i0 - 1:i0 + 2, j0 - 1:j0 + 2] = True
    return m


def _trivial_field(form, grid, t, tol, marker=None, w_grid=None):
    n = grid.n
    val = -np.inf if marker == "minus-infinity" else 0.0
    rho = form.rho(grid.z)
    chart_w = None
    if w_grid is not None:
        chart_w = ChartData(w_grid, np.full(w_grid.shape, val), np.full(w_grid.shape, val),
                            np.zeros(w_grid.shape), form.rho_w(w_grid.z))
    return EnvelopeField(float(t), form, grid, np.full((n, n), val), np.full((n, n), val),
                         np.zeros((n, n)), rho, tol,
                         {"method": "trivial", "iterations": 0, "converged": True, "max_residual": 0.0,
                          "active_nodes": 0 if val == 0.0 else None},
                         chart_w=chart_w, marker=marker)


def _chart_solve(f, g_cap, frame_v, method, tol, grid, active0=None, v0=None, max_sweeps=None):
    if method == "pdas":
        return solve_pdas(f, g_cap, frame_v, active0=active0)
    if method == "psor":
        sweeps = max_sweeps if max_sweeps is not None else 50 * grid.n
        return solve_psor(f, g_cap, frame_v, tol * grid.h ** 2, sweeps, v0=v0)
    raise DomainError(f"unknown method {method!r}")


def solve_envelope(form: AreaForm, t: float, grid: GridSpec, tol: float = 1e-8, method: str = "pdas",
                   w_grid: Optional[GridSpec] = None, check_frame: bool = True,
                   max_sweeps: Optional[int] = None, schwarz_tol: Optional[float] = None,
                   warm: Optional[EnvelopeField] = None) -> EnvelopeField:
    """Envelope ``psi_t`` of ``form`` on ``grid``.

    Plane forms impose ``psi = 0`` on the frame.  Sphere forms are solved on
    a two-chart atlas by alternating Schwarz iteration; ``grid`` is then the
    z-chart and ``w_grid`` (default: same size, centred at w = 0) the w-chart.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    t = float(t)
    if grid.z0 != form.z0:
        raise DomainError(f"grid injection point {grid.z0} differs from the form's {form.z0}")
    if form.kind == "sphere":
        if w_grid is None:
            w_grid = GridSpec(0j, grid.half_width, grid.cells, 0j, "chart")
        if t <= 0:
            return _trivial_field(form, grid, t, tol, None, w_grid)
        if t > 1.0 + 1e-12:
            return _trivial_field(form, grid, t, tol, "minus-infinity", w_grid)
        return _solve_sphere(form, t, grid, w_grid, tol, method, max_sweeps, schwarz_tol, warm)
    if t <= 0:
        return _trivial_field(form, grid, t, tol)

    rho, phi, alpha, g, g_cap, cap = _obstacle_arrays(form, grid, t)
    f = (1.0 - t) * 4.0 * np.pi * rho * grid.h ** 2
    frame_v = np.where(grid.frame(), g, 0.0)
    active0 = None
    v0 = None
    if warm is not None and warm.grid == grid and warm.marker is None and warm.t > 0:
        active0 = warm.psi >= -warm.eps_mask
        v0 = np.where(grid.frame(), frame_v, np.minimum(warm.psi - t * alpha, g_cap))
        v0[grid.z0_index] = min(cap, 0.0) if not np.isfinite(v0[grid.z0_index]) else v0[grid.z0_index]
    if active0 is None and method == "pdas":
        active0 = _coarse_active_set(form, t, grid, tol)
    res = _chart_solve(f, g_cap, frame_v, method, tol, grid, active0, v0, max_sweeps)
    v = res.v
    psi, lat = assemble_psi(v, alpha, phi, res.active, grid, t, 10.0 * tol * grid.h ** 2)
    psi[grid.frame()] = 0.0
    lat[grid.frame()] = 0.0
    residual = _residual(v, res.mu, g, psi)
    residual[_z0_patch(grid)] = 0.0
    residual[grid.frame()] = 0.0
    capped = (np.abs(grid.z - grid.z0) < CAP_RADIUS_CELLS * grid.h) & res.active
    info = {"method": res.method, "iterations": int(res.iterations), "converged": bool(res.converged),
            "max_residual": float(np.max(np.abs(residual))), "active_nodes": int(res.active.sum()),
            "cap_value": cap, "cap_active_nodes": int(capped.sum())}
    field_ = EnvelopeField(t, form, grid, psi, v, residual, rho, tol, info, alpha,
                           None if form.potential is not None else phi, mu=res.mu,
                           psi_lattice=lat)
    if not res.converged:
        raise IterationLimitError(f"{res.method} stopped after {res.iterations} iterations",
                                  residual=info["max_residual"], partial=field_)
    if check_frame:
        inside = psi < -field_.eps_mask
        near_frame = np.zeros(grid.shape, dtype=bool)
        near_frame[1, :] = near_frame[-2, :] = near_frame[:, 1] = near_frame[:, -2] = True
        if np.any(inside & near_frame):
            raise FrameContactError(f"domain at t={t} reaches the frame of the box")
    return field_


def _coarse_active_set(form, t, grid, tol, min_cells=96):
    """Contact set guessed from a half-resolution solve, or None when unavailable."""
    half = grid.cells // 2
    if half < min_cells or half % 2:
        return None
    try:
        coarse = GridSpec(grid.center, grid.half_width, half, grid.z0, grid.boundary)
        cf = solve_envelope(form, t, coarse, tol, "pdas", check_frame=False)
    except (DomainError, IterationLimitError):
        return None
    with np.errstate(invalid="ignore"):
        return coarse.sample(cf.psi, grid.z) >= -cf.eps_mask


def five_point_rows(n: int) -> sp.csr_matrix:
    """Five-point Laplacian as a map from all ``n*n`` nodes to the interior nodes."""
    ii, jj = np.meshgrid(np.arange(1, n - 1), np.arange(1, n - 1), indexing="ij")
    row = (ii - 1) * (n - 2) + (jj - 1)
    centre = ii * n + jj
    rows = np.concatenate([row.ravel()] * 5)
    cols = np.concatenate([centre.ravel(), (centre - 1).ravel(), (centre + 1).ravel(),
                           (centre - n).ravel(), (centre + n).ravel()])
    vals = np.concatenate([np.full(row.size, -4.0), np.ones(4 * row.size)])
    return sp.csr_matrix((vals, (rows, cols)), shape=((n - 2) ** 2, n * n))


def _split_columns(M: sp.csr_matrix, grid: GridSpec):
    fr = grid.frame().ravel()
    M = M.tocsc()
    return M[:, np.flatnonzero(~fr)], M[:, np.flatnonzero(fr)]


def _solve_sphere(form, t, zg, wg, tol, method, max_sweeps, schwarz_tol, warm):
    if method != "pdas":
        return _solve_sphere_schwarz(form, t, zg, wg, tol, method, max_sweeps, schwarz_tol, warm)
    rho_z, phi_z, alpha_z, g_z, gcap_z, cap = _obstacle_arrays(form, zg, t)
    rho_w = form.rho_w(wg.z)
    f_z = ((1.0 - t) * 4.0 * np.pi * rho_z * zg.h ** 2)[1:-1, 1:-1].ravel()
    f_w = (4.0 * np.pi * rho_w * wg.h ** 2)[1:-1, 1:-1].ravel()
    zf, wf = zg.frame(), wg.frame()
    z_frame_pts = zg.z[zf]
    w_frame_pts = wg.z[wf]
    if np.min(np.abs(z_frame_pts)) < OVERLAP[1] - 1e-12 or np.min(np.abs(w_frame_pts)) < OVERLAP[1] - 1e-12:
        raise DomainError("chart boxes must contain the overlap annulus")

    def alpha_fn(z):
        with np.errstate(divide="ignore"):
            lg = np.log(np.abs(z - zg.z0) ** 2)
        if form.potential is not None:
            return lg - form.potential(z)
        return lg - zg.sample(phi_z, z)

    alpha_zf = alpha_z[zf]
    alpha_wf = alpha_fn(1.0 / w_frame_pts)
    # frame values of each chart are bilinear reads of the other chart's interior
    P_zw, leak_zw = _split_columns(wg.interpolation_matrix(1.0 / z_frame_pts), wg)
    P_wz, leak_wz = _split_columns(zg.interpolation_matrix(1.0 / w_frame_pts), zg)
    if leak_zw.count_nonzero() or leak_wz.count_nonzero():
        raise DomainError("overlap too thin: frame reads reach the other frame")
    Lz_int, Lz_fr = _split_columns(five_point_rows(zg.n), zg)
    Lw_int, Lw_fr = _split_columns(five_point_rows(wg.n), wg)
    K = sp.bmat([[-Lz_int, -(Lz_fr @ P_zw)], [-(Lw_fr @ P_wz), -Lw_int]]).tocsr()
    b = np.concatenate([f_z - t * (Lz_fr @ alpha_zf), f_w + t * (Lw_fr @ alpha_wf)])
    mz = (zg.n - 2) ** 2
    g = np.concatenate([gcap_z[1:-1, 1:-1].ravel(), np.zeros((wg.n - 2) ** 2)])

    if t >= 1.0 - 1e-12:
        # full mass: no contact set, psi is the Green function shifted to max 0
        pin = mz + ((wg.n - 2) ** 2) // 2
        keep = np.ones(K.shape[0], dtype=bool)
        keep[pin] = False
        idx = np.flatnonzero(keep)
        x = np.zeros(K.shape[0])
        x[idx] = splu(K[idx][:, idx].tocsc(), permc_spec="COLAMD").solve(b[idx])
        shift = max(np.max(x[:mz] + t * alpha_z[1:-1, 1:-1].ravel()), np.max(x[mz:]))
        x[:mz] -= shift
        x[mz:] -= shift
        active = np.zeros(K.shape[0], dtype=bool)
        mu = b - K @ x
        mu[pin] = 0.0
        it, converged = 1, True
    else:
        x, mu, active, it, converged = _pdas_from_guess(form, t, zg, wg, tol, warm, K, b, g, mz)
    v_z = np.zeros(zg.shape)
    v_z[1:-1, 1:-1] = x[:mz].reshape(zg.n - 2, zg.n - 2)
    v_w = np.zeros(wg.shape)
    v_w[1:-1, 1:-1] = x[mz:].reshape(wg.n - 2, wg.n - 2)
    v_z[zf] = P_zw @ x[mz:] - t * alpha_zf
    v_w[wf] = np.minimum(P_wz @ x[:mz] + t * alpha_wf, 0.0)
    act_z = _embed(active[:mz], zg.n)
    act_w = _embed(active[mz:], wg.n)
    mu_z = _embed(mu[:mz], zg.n)
    mu_w = _embed(mu[mz:], wg.n)
    psi_z, lat_z = assemble_psi(v_z, alpha_z, phi_z, act_z, zg, t, 10.0 * tol * zg.h ** 2)
    psi_w = np.where(act_w, 0.0, np.minimum(v_w, 0.0))
    resid_z = _residual(v_z, mu_z, g_z, psi_z)
    resid_z[_z0_patch(zg)] = 0.0
    resid_z[zf] = 0.0
    resid_w = _residual(v_w, mu_w, np.zeros(wg.shape), psi_w)
    resid_w[wf] = 0.0
    info = {"method": "pdas", "iterations": int(it), "converged": bool(converged),
            "max_residual": float(max(np.max(np.abs(resid_z)), np.max(np.abs(resid_w)))),
            "active_nodes": int(act_z.sum() + act_w.sum()), "cap_value": cap}
    chart_w = ChartData(wg, psi_w, v_w, resid_w, rho_w, mu=mu_w)
    field_ = EnvelopeField(t, form, zg, psi_z, v_z, resid_z, rho_z, tol, info, alpha_z,
                           None if form.potential is not None else phi_z, chart_w, mu=mu_z,
                           psi_lattice=lat_z)
    if not converged:
        raise IterationLimitError("active set iteration did not settle", residual=info["max_residual"],
                                  partial=field_)
    return field_


def _pdas_from_guess(form, t, zg, wg, tol, warm, K, b, g, mz):
    guess = warm if (warm is not None and warm.chart_w is not None and warm.marker is None
                     and warm.t > 0) else _coarse_sphere(form, t, zg, wg, tol)
    if guess is not None:
        with np.errstate(invalid="ignore"):
            act_z = guess.psi_at(zg.z) >= -guess.eps_mask
            wz = wg.z[1:-1, 1:-1]
            act_w = guess.chart_w.grid.sample(guess.chart_w.psi, wz) >= -guess.eps_mask
        active = np.concatenate([act_z[1:-1, 1:-1].ravel(), act_w.ravel()])
    else:
        near = np.abs(zg.z - zg.z0)[1:-1, 1:-1].ravel() < 2 * CAP_RADIUS_CELLS * zg.h
        active = np.concatenate([~near, np.ones((wg.n - 2) ** 2, dtype=bool)])
    x, mu, active, it, converged = pdas(K, b, g, active, max_iter=400)
    return x, mu, active, it, converged


def _coarse_sphere(form, t, zg, wg, tol, min_cells=32):
    if zg.cells // 2 < min_cells or (zg.cells // 2) % 2 or (wg.cells // 2) % 2:
        return None
    try:
        cz = GridSpec(zg.center, zg.half_width, zg.cells // 2, zg.z0, "chart")
        cw = GridSpec(wg.center, wg.half_width, wg.cells // 2, wg.z0, "chart")
        return _solve_sphere(form, t, cz, cw, tol, "pdas", None, None, None)
    except (DomainError, IterationLimitError):
        return None


def _solve_sphere_schwarz(form, t, zg, wg, tol, method, max_sweeps, schwarz_tol, warm):
    """Alternating Schwarz over the two charts; used with the PSOR chart solver."""
    rho_z, phi_z, alpha_z, g_z, gcap_z, cap = _obstacle_arrays(form, zg, t)
    f_z = (1.0 - t) * 4.0 * np.pi * rho_z * zg.h ** 2
    rho_w = form.rho_w(wg.z)
    f_w = 4.0 * np.pi * rho_w * wg.h ** 2
    g_w = np.zeros(wg.shape)
    zf = zg.frame()
    wf = wg.frame()
    z_frame_pts = zg.z[zf]
    w_frame_pts = wg.z[wf]
    # frame nodes of one chart are interior to the other thanks to the overlap
    if np.min(np.abs(z_frame_pts)) < OVERLAP[1] - 1e-12 or np.min(np.abs(w_frame_pts)) < OVERLAP[1] - 1e-12:
        raise DomainError("chart boxes must contain the overlap annulus")
    alpha_frame_z = alpha_z[zf]
    zeta_for_w = 1.0 / w_frame_pts

    def alpha_fn(z):
        with np.errstate(divide="ignore"):
            lg = np.log(np.abs(z) ** 2)
        if form.potential is not None:
            return lg - form.potential(z)
        return lg - zg.sample(phi_z, z)

    alpha_w_frame = alpha_fn(zeta_for_w)
    psi_w = np.zeros(wg.shape)
    act_z = act_w = None
    if warm is not None and warm.chart_w is not None and warm.marker is None and warm.t > 0:
        psi_w = warm.chart_w.psi.copy()
        act_z = warm.psi >= -warm.eps_mask
        act_w = warm.chart_w.psi >= -warm.eps_mask
    stol = schwarz_tol if schwarz_tol is not None else max(1e-3 * tol, 1e-12)
    prev = None
    sweeps = 0
    res_z = res_w = None
    for sweeps in range(1, 2000):
        frame_psi = np.minimum(wg.sample(psi_w, 1.0 / z_frame_pts), 0.0)
        frame_v = np.zeros(zg.shape)
        frame_v[zf] = frame_psi - t * alpha_frame_z
        res_z = _chart_solve(f_z, gcap_z, frame_v, method, tol, zg, act_z, None, max_sweeps)
        act_z = res_z.active
        vw_frame = zg.sample(res_z.v, zeta_for_w) + t * alpha_w_frame
        frame_w = np.zeros(wg.shape)
        frame_w[wf] = np.minimum(vw_frame, 0.0)
        res_w = _chart_solve(f_w, g_w, frame_w, method, tol, wg, act_w, None, max_sweeps)
        act_w = res_w.active
        psi_w = np.where(res_w.active, 0.0, np.minimum(res_w.v, 0.0))
        cur = np.concatenate([frame_psi, frame_w[wf]])
        if prev is not None and np.max(np.abs(cur - prev)) < stol:
            break
        prev = cur
    converged = res_z.converged and res_w.converged and sweeps < 1999
    psi_z, lat_z = assemble_psi(res_z.v, alpha_z, phi_z, res_z.active, zg, t, 10.0 * tol * zg.h ** 2)
    resid_z = _residual(res_z.v, res_z.mu, g_z, psi_z)
    resid_z[_z0_patch(zg)] = 0.0
    resid_z[zf] = 0.0
    resid_w = _residual(res_w.v, res_w.mu, g_w, psi_w)
    resid_w[wf] = 0.0
    info = {"method": res_z.method, "iterations": int(res_z.iterations + res_w.iterations),
            "schwarz_sweeps": int(sweeps), "converged": bool(converged),
            "max_residual": float(max(np.max(np.abs(resid_z)), np.max(np.abs(resid_w)))),
            "active_nodes": int(res_z.active.sum() + res_w.active.sum()), "cap_value": cap}
    chart_w = ChartData(wg, psi_w, res_w.v, resid_w, rho_w, mu=res_w.mu)
    field_ = EnvelopeField(t, form, zg, psi_z, res_z.v, resid_z, rho_z, tol, info, alpha_z,
                           None if form.potential is not None else phi_z, chart_w, mu=res_z.mu,
                           psi_lattice=lat_z)
    if not converged:
        raise IterationLimitError("atlas iteration did not converge", residual=info["max_residual"],
                                  partial=field_)
    return field_


def sphere_grids(cells: int, half_width: float = OVERLAP[1]) -> tuple:
    """Matching z- and w-chart grids of the atlas."""
    return (GridSpec(0j, half_width, cells, 0j, "chart"), GridSpec(0j, half_width, cells, 0j, "chart"))


def residual_report(field_: EnvelopeField) -> dict:
    """Complementarity summary of a solved field."""
    res = np.abs(field_.residual)
    out = {
        "t": field_.t,
        "max_residual": float(res.max()),
        "mean_residual": float(res.mean()),
        "active_nodes": int(np.sum(field_.psi >= -field_.eps_mask)) if field_.t > 0 and field_.marker is None else 0,
        "sign_violations": int(np.sum(field_.psi > 0)),
        "converged": bool(field_.info.get("converged", True)),
        "iterations": int(field_.info.get("iterations", 0)),
    }
    if field_.t <= 0:
        out["active_nodes"] = 0
    if field_.chart_w is not None:
        out["max_residual"] = float(max(out["max_residual"], np.abs(field_.chart_w.residual).max()))
        out["sign_violations"] += int(np.sum(field_.chart_w.psi > 0))
    return out


def c11_proxy(field_: EnvelopeField, exclude_radius: float = 0.5) -> float:
    """Largest axis second difference of ``psi`` divided by ``h^2`` outside a disc around z0."""
    if field_.t <= 0 or field_.marker is not None:
        return 0.0
    return second_difference_max(field_.psi, field_.grid, exclude_radius)


def second_difference_max(values: np.ndarray, grid: GridSpec, exclude_radius: float) -> float:
    h2 = grid.h ** 2
    dist = np.abs(grid.z - grid.z0)
    ok = np.zeros(grid.shape, dtype=bool)
    ok[1:-1, 1:-1] = True
    # a node qualifies only if its whole stencil is outside the excluded disc
    far = dist > exclude_radius + 1.5 * grid.h
    ok &= far
    dxx = np.zeros(grid.shape)
    dyy = np.zeros(grid.shape)
    dxx[1:-1, 1:-1] = values[1:-1, 2:] - 2 * values[1:-1, 1:-1] + values[1:-1, :-2]
    dyy[1:-1, 1:-1] = values[2:, 1:-1] - 2 * values[1:-1, 1:-1] + values[:-2, 1:-1]
    m = np.maximum(np.abs(dxx), np.abs(dyy))[ok]
    return float(m.max() / h2) if m.size else 0.0


class HeleShawEnvelope(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit(form)`` solves for the envelope at time ``t``.

    Parameters
    ----------
    t : float
        Injection time.
    cells : int
        Cells per side of the grid (even).
    half_width : float
        Half side of the square box centred at the injection point.
    tol : float
        Complementarity tolerance.
    method : {"pdas", "psor"}
        Discrete LCP solver.

    Attributes
    ----------
    field_ : EnvelopeField
    grid_ : GridSpec
    """

    def __init__(self, t=0.5, cells=256, half_width=2.0, tol=1e-8, method="pdas"):
        self.t = t
        self.cells = cells
        self.half_width = half_width
        self.tol = tol
        self.method = method

    def fit(self, form, y=None):
        if not isinstance(form, AreaForm):
            raise DomainError("fit expects an AreaForm")
        if form.kind == "sphere":
            grid = GridSpec(0j, OVERLAP[1], int(self.cells), form.z0, "chart")
        else:
            grid = GridSpec(form.z0, float(self.half_width), int(self.cells), form.z0)
        self.grid_ = grid
        self.field_ = solve_envelope(form, self.t, grid, self.tol, self.method)
        return self

    def transform(self, X):
        """Envelope values at complex points ``X`` (any shape)."""
        check_is_fitted(self, "field_")
        return self.field_.psi_at(np.asarray(X, dtype=complex))

    def domain_mask(self):
        check_is_fitted(self, "field_")
        return self.field_.psi < -self.field_.eps_mask
