"""Weak Hele-Shaw domains extracted from envelopes, and the identities they satisfy."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage
from skimage import measure

from .exceptions import DomainError, UnsupportedError
from .grid import GridSpec
from .obstacle import EnvelopeField, fill_weights, log_potential, solve_envelope


@dataclass
class FlowDomain:
    """Node mask, boundary loops, area, topology and moments of one domain."""

    t: float
    grid: GridSpec
    mask: np.ndarray
    weights: np.ndarray
    loops: list
    area: float
    components: int
    holes: int
    eps_mask: float
    field: EnvelopeField
    mask_w: Optional[np.ndarray] = None
    weights_w: Optional[np.ndarray] = None
    flags: list = field(default_factory=list)
    fill_loops: list = field(default_factory=list)

    @property
    def z0(self) -> complex:
        return self.grid.z0

    @property
    def simply_connected(self) -> bool:
        return self.components == 1 and self.holes == 0

    def contains(self, z) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return self.field.psi_at(z) < -self.eps_mask

    def region_mask(self, z) -> np.ndarray:
        """Points inside the half-filled contours (even-odd rule over all loops)."""
        z = np.asarray(z, dtype=complex)
        pts = np.column_stack([z.ravel().real, z.ravel().imag])
        parity = np.zeros(len(pts), dtype=bool)
        for lp in self.fill_loops:
            parity ^= measure.points_in_poly(pts, np.column_stack([lp.real, lp.imag]))
        return parity.reshape(z.shape)

    @property
    def filled_mass(self) -> float:
        """Total of the fill weights: the injected mass seen by the discrete problem."""
        total = float(self.weights.sum())
        if self.weights_w is not None:
            total += float(self.weights_w.sum())
        return total

    def quadrature_nodes(self):
        """Nodes (in the z-plane) and ``rho dA`` fill weights covering the domain once."""
        g = self.grid
        sel = self.weights > 0
        pts = [g.z[sel]]
        wts = [self.weights[sel]]
        if self.weights_w is not None:
            wg = self.field.chart_w.grid
            sel_w = self.weights_w > 0
            pts.append(1.0 / wg.z[sel_w])
            wts.append(self.weights_w[sel_w])
        return np.concatenate(pts), np.concatenate(wts)


# ------------------------------------------------------------------ extraction

def _chart_split(z: np.ndarray) -> np.ndarray:
    """Partition-of-unity weight for the z-chart: 1 inside the unit circle, 1/2 on it."""
    r = np.abs(z)
    return np.where(np.isclose(r, 1.0, atol=1e-12), 0.5, (r < 1.0).astype(float))


def sqrt_depth(psi: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """``sqrt(-psi)`` inside the mask, linearly extended one layer outside.

    The envelope vanishes to second order on the boundary, so its square
    root is close to a signed distance and contours of it are second order.
    """
    q = np.where(mask, np.sqrt(np.maximum(-psi, 0.0)), np.nan)
    q = np.where(np.isinf(q), np.nan, q)
    finite_big = np.nanmax(q) if np.any(np.isfinite(q)) else 1.0
    q = np.where(mask & np.isnan(q), finite_big, q)
    out = np.where(mask, q, 0.0)
    acc = np.zeros_like(out)
    cnt = np.zeros_like(out)
    n0, n1 = psi.shape
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        a = np.full_like(out, np.nan)
        b = np.full_like(out, np.nan)
        # a: neighbour one step away, b: two steps away in the same direction
        a[max(0, -di):n0 - max(0, di), max(0, -dj):n1 - max(0, dj)] = \
            q[max(0, di):n0 - max(0, -di), max(0, dj):n1 - max(0, -dj)]
        b[max(0, -2 * di):n0 - max(0, 2 * di), max(0, -2 * dj):n1 - max(0, 2 * dj)] = \
            q[max(0, 2 * di):n0 - max(0, -2 * di), max(0, 2 * dj):n1 - max(0, -2 * dj)]
        ok = ~mask & np.isfinite(a) & np.isfinite(b)
        ext = 2 * a - b
        ok &= ext < a
        acc[ok] += np.minimum(ext[ok], 0.0)
        cnt[ok] += 1
    outside = ~mask & (cnt > 0)
    out[outside] = acc[outside] / cnt[outside]
    # nodes outside and far from the domain: a safe negative value
    far = ~mask & (cnt == 0)
    out[far] = -1.0
    return out


def boundary_loops(field_: EnvelopeField, mask: np.ndarray, eps_mask: float) -> list:
    """Closed boundary polylines (complex arrays) of the z-chart mask."""
    if not mask.any():
        return []
    q = sqrt_depth(field_.psi, mask)
    level = float(np.sqrt(eps_mask))
    g = field_.grid
    loops = []
    for c in measure.find_contours(q, level):
        z = g.origin + g.h * (c[:, 1] + 1j * c[:, 0])
        loops.append(z)
    return loops


def fill_loops(field_: EnvelopeField, weights: np.ndarray) -> list:
    """Contours where the fill fraction ``w / (rho h^2)`` crosses one half.

    Partially filled contact nodes make the node mask lag the true domain by
    about half a cell; this level set does not.
    """
    g = field_.grid
    cap = field_.rho * g.h ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(cap > 0, weights / np.where(cap > 0, cap, 1.0), 0.0)
    frac[g.frame()] = 0.0
    loops = []
    for c in measure.find_contours(frac, 0.5):
        if len(c) > 3 and np.allclose(c[0], c[-1]):
            loops.append(g.origin + g.h * (c[:, 1] + 1j * c[:, 0]))
    return loops


def _label_counts(mask: np.ndarray, pad_inside: bool = False, min_pixels: int = 4) -> tuple:
    """Components of the mask (4-connected) and of its complement (8-connected).

    Pieces smaller than ``min_pixels`` are rasterization specks along the
    interface and are not counted.
    """
    padded = np.pad(mask, 1, constant_values=pad_inside)

    def count(m, conn):
        lab, n = ndimage.label(m, structure=ndimage.generate_binary_structure(2, conn))
        if n == 0:
            return 0
        sizes = np.bincount(lab.ravel())[1:]
        return int(np.sum(sizes >= min_pixels))

    return count(padded, 1), count(~padded, 2)


def sphere_raster(field_: EnvelopeField, cells: int) -> tuple:
    """Mask sampled on the compactified disc ``z = zeta / (1 - |zeta|)``.

    Returns the mask on ``[-1, 1]^2`` and whether the point at infinity is
    inside the domain (which then fills everything outside the unit disc).
    """
    eps = field_.eps_mask
    wg = field_.chart_w.grid
    inf_inside = bool(wg.sample(field_.chart_w.psi, np.array([0j]))[0] < -eps)
    s = np.linspace(-1, 1, cells + 1)
    Z = s[None, :] + 1j * s[:, None]
    r = np.abs(Z)
    inside_disc = r < 1.0
    zz = np.where(inside_disc, Z / np.where(inside_disc, 1.0 - r, 1.0), 0.0)
    m = np.full(Z.shape, inf_inside)
    # interpolate the node values so the raster agrees with the node mask
    pz = np.where(np.isfinite(field_.psi), field_.psi, -1.0)
    pw = np.where(np.isfinite(field_.chart_w.psi), field_.chart_w.psi, -1.0)
    pts = zz[inside_disc]
    far = np.abs(pts) > 1.0
    vals = np.empty(pts.shape)
    vals[~far] = field_.grid.sample(pz, pts[~far])
    vals[far] = wg.sample(pw, 1.0 / pts[far])
    m[inside_disc] = vals < -eps
    return m, inf_inside


def extract_domain(field_: EnvelopeField, eps_mask: Optional[float] = None) -> FlowDomain:
    """Domain ``{psi_t < -eps_mask}`` with its contours, area and topology."""
    eps = field_.eps_mask if eps_mask is None else float(eps_mask)
    g = field_.grid
    h2 = g.h ** 2
    flags = []
    if field_.t <= 0:
        z = np.zeros(g.shape, dtype=bool)
        mw = None if field_.chart_w is None else np.zeros(field_.chart_w.grid.shape, dtype=bool)
        return FlowDomain(field_.t, g, z, np.zeros(g.shape), [], 0.0, 0, 0, eps, field_, mw,
                          None if mw is None else np.zeros(mw.shape))
    if field_.marker is not None:
        raise UnsupportedError("no domain for a degenerate field")
    with np.errstate(invalid="ignore"):
        mask = field_.psi < -eps
    node_mass = field_.rho * h2
    weights = field_.fill()
    mask_w = weights_w = None
    if field_.chart_w is not None:
        split = _chart_split(g.z)
        node_mass = node_mass * split
        weights = weights * split
        cw = field_.chart_w
        wg = cw.grid
        split_w = _chart_split(wg.z)
        mask_w = cw.psi < -eps
        weights_w = fill_weights(cw.psi, cw.mu, cw.rho, wg.h, eps) * split_w
        area = float(np.sum(node_mass[mask]) + np.sum((cw.rho * wg.h ** 2 * split_w)[mask_w]))
        raster, inf_inside = sphere_raster(field_, 2 * g.cells)
        ncomp, nsea = _label_counts(raster, pad_inside=inf_inside)
    else:
        area = float(np.sum(node_mass[mask]))
        ncomp, nsea = _label_counts(mask)
    if not mask.any():
        flags.append("empty mask for positive time")
    holes = max(nsea - 1, 0)
    loops = boundary_loops(field_, mask, eps)
    return FlowDomain(field_.t, g, mask, weights, loops, area, int(ncomp), int(holes), eps, field_,
                      mask_w, weights_w, flags, fill_loops(field_, field_.fill()))


# ------------------------------------------------------------------ identities

def nesting_check(domains: Sequence[FlowDomain]) -> dict:
    """Mask nesting and the largest ``delta`` with ``Omega_t + B(delta (t'-t))`` inside ``Omega_t'``."""
    pairs = []
    ok = True
    for a, b in zip(domains[:-1], domains[1:]):
        if b.t < a.t:
            raise DomainError("domains must be sorted by t")
        bad = a.mask & ~b.mask
        nested = not bad.any()
        ok &= nested
        dist = ndimage.distance_transform_edt(b.mask) * a.grid.h
        margin = float(dist[a.mask].min()) if a.mask.any() else np.inf
        dt = b.t - a.t
        pairs.append({"t": a.t, "t_next": b.t, "nested": nested, "violations": int(bad.sum()),
                      "offending": np.argwhere(bad)[:20].tolist(),
                      "margin": margin, "delta": margin / dt if dt > 0 else np.inf})
    return {"nested": bool(ok), "pairs": pairs}


def moments(domain: FlowDomain, K: int) -> np.ndarray:
    """``M_k = int_Omega z^k rho dA`` for ``k = 0..K`` (complex)."""
    pts, wts = domain.quadrature_nodes()
    return np.array([np.sum(wts * pts ** k) for k in range(int(K) + 1)])


def _antiderivative(x, y):
    """``F`` with ``d^2F/dxdy = ln(x^2 + y^2)``, continuous at the axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r2 = x * x + y * y
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.where(r2 > 0, np.log(np.where(r2 > 0, r2, 1.0)), 0.0)
        ax = np.where(x != 0, x * x * np.arctan(y / np.where(x != 0, x, 1.0)), 0.0)
        ay = np.where(y != 0, y * y * np.arctan(x / np.where(y != 0, y, 1.0)), 0.0)
    return x * y * (lg - 3.0) + ax + ay


def rect_log_integral(x1, x2, y1, y2):
    """Exact ``int_{[x1,x2]x[y1,y2]} ln(x^2+y^2) dx dy``."""
    F = _antiderivative
    return F(x2, y2) - F(x1, y2) - F(x2, y1) + F(x1, y1)


def log_integral(domain: FlowDomain, z) -> np.ndarray:
    """``int_Omega ln|z - zeta|^2 rho(zeta) dA`` by node quadrature.

    Cells in the 3x3 block around each evaluation point are integrated
    exactly in the kernel; all others use the midpoint rule.  Sphere domains
    are integrated in the z-chart only when they fit inside it.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    g = domain.grid
    if domain.weights_w is not None and domain.weights_w.any():
        raise UnsupportedError("domain leaves the z-chart; log integral is computed in one chart")
    sel = domain.weights > 0
    nodes = g.z[sel]
    w = domain.weights[sel]
    h = g.h
    out = np.empty(z.shape)
    flat = z.ravel()
    res = np.empty(flat.size)
    for s in range(0, flat.size, 64):
        zz = flat[s:s + 64]
        d = zz[:, None] - nodes[None, :]
        near = (np.abs(d.real) < 1.5 * h) & (np.abs(d.imag) < 1.5 * h)
        with np.errstate(divide="ignore"):
            k = np.log(np.abs(d) ** 2)
        exact = rect_log_integral(d.real - h / 2, d.real + h / 2, d.imag - h / 2, d.imag + h / 2) / h ** 2
        k = np.where(near, exact, k)
        res[s:s + 64] = (k * w[None, :]).sum(axis=1)
    out[...] = res.reshape(z.shape)
    return out


def gustafsson_potential(domain: FlowDomain, z) -> np.ndarray:
    """``-int_Omega ln|z - zeta|^2 rho dA + t ln|z - z0|^2``, which should equal ``psi_t``."""
    z = np.asarray(z, dtype=complex)
    if domain.t <= 0:
        return np.zeros(z.shape)
    with np.errstate(divide="ignore"):
        sing = domain.t * np.log(np.abs(z - domain.z0) ** 2)
    return (sing - log_integral(domain, z).reshape(np.shape(sing))).reshape(z.shape)


def gustafsson_grid(domain: FlowDomain) -> np.ndarray:
    """Same potential at every node, by FFT convolution."""
    g = domain.grid
    dens = domain.weights / g.h ** 2
    with np.errstate(divide="ignore"):
        sing = domain.t * np.log(np.abs(g.z - g.z0) ** 2)
    return sing - log_potential(g, dens)


def quadrature_identity_check(domain: FlowDomain, sample_pts) -> dict:
    """Largest ``|int ln|z - zeta|^2 rho dA - t ln|z - z0|^2|`` over exterior samples."""
    pts = np.atleast_1d(np.asarray(sample_pts, dtype=complex))
    if domain.t <= 0 or not domain.mask.any():
        return {"max_deviation": 0.0, "used": int(pts.size), "skipped": []}
    inside = domain.contains(pts)
    use = pts[~inside]
    skipped = [complex(p) for p in pts[inside]]
    if use.size == 0:
        return {"max_deviation": float("nan"), "used": 0, "skipped": skipped}
    dev = np.abs(gustafsson_potential(domain, use))
    return {"max_deviation": float(dev.max()), "used": int(use.size), "skipped": skipped,
            "note": "samples inside the domain were skipped" if skipped else ""}


def area_law_tolerance(domain: FlowDomain, t: float, rel: float = 0.01) -> float:
    """``max(rel * t, 4h * perimeter * boundary density)`` for comparing an area with ``t``."""
    g = domain.grid
    perim = sum(float(np.sum(np.abs(np.diff(lp)))) for lp in domain.loops)
    edge = (domain.mask ^ np.roll(domain.mask, 1, 0)) | (domain.mask ^ np.roll(domain.mask, 1, 1))
    rho_b = float(domain.field.rho[edge].max()) if edge.any() else 0.0
    return max(rel * t, 4 * g.h * perim * rho_b)


def discrete_measure(field_: EnvelopeField) -> np.ndarray:
    """``Laplacian_h(psi)/(4 pi) + rho`` at interior nodes (NaN next to the pole)."""
    g = field_.grid
    psi = field_.psi
    out = np.full(g.shape, np.nan)
    with np.errstate(invalid="ignore"):
        lap = psi[2:, 1:-1] + psi[:-2, 1:-1] + psi[1:-1, 2:] + psi[1:-1, :-2] - 4 * psi[1:-1, 1:-1]
    out[1:-1, 1:-1] = lap / (4 * np.pi * g.h ** 2) + field_.rho[1:-1, 1:-1]
    i0, j0 = g.z0_index
    out[i0 - 1:i0 + 2, j0 - 1:j0 + 2] = np.nan
    return out


def boundary_band_area(field_: EnvelopeField, band: float) -> float:
    """Area of nodes with ``|psi + eps_mask| < band``: a thin-boundary diagnostic."""
    with np.errstate(invalid="ignore"):
        sel = np.abs(field_.psi + field_.eps_mask) < band
    return float(sel.sum() * field_.grid.h ** 2)


# ------------------------------------------------------------------ arrival times

@dataclass
class ArrivalField:
    """Arrival time ``T(z) = H(z, 1) + 1`` per node (and per w-chart node on the sphere)."""

    grid: GridSpec
    arrival: np.ndarray
    t_grid: np.ndarray
    cap: float
    arrival_w: Optional[np.ndarray] = None
    w_grid: Optional[GridSpec] = None
    source: str = ""

    @property
    def H(self) -> np.ndarray:
        return self.arrival - 1.0

    def at(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.arrival_w is None:
            return self.grid.sample(self.arrival, z)
        out = np.empty(z.shape)
        far = np.abs(z) > 1.0
        if far.any():
            out[far] = self.w_grid.sample(self.arrival_w, 1.0 / z[far])
        if (~far).any():
            out[~far] = self.grid.sample(self.arrival, z[~far])
        return out


def solve_family(form, t_grid, grid: GridSpec, tol: float = 1e-8, method: str = "pdas",
                 w_grid: Optional[GridSpec] = None, check_frame: bool = True) -> list:
    """Envelopes at increasing times, each warm-started from the previous one."""
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise DomainError("t-grid must be strictly increasing")
    out = []
    prev = None
    for t in t_grid:
        f = solve_envelope(form, float(t), grid, tol, method, w_grid=w_grid, check_frame=check_frame,
                           warm=prev)
        out.append(f)
        if f.t > 0 and f.marker is None:
            prev = f
    return out


def _first_arrival(stack: np.ndarray, eps: np.ndarray, t_grid: np.ndarray, cap: float,
                   depth: int) -> np.ndarray:
    """Arrival per node from sampled envelopes.

    Between the last sample with ``psi = 0`` and the first with ``psi < 0``
    the root of the square-root-linear model of ``psi`` in ``t`` is located by
    bisection.
    """
    with np.errstate(invalid="ignore"):
        reached = stack < -eps[:, None, None]
    any_reached = reached.any(axis=0)
    first = np.argmax(reached, axis=0)
    q = np.sqrt(np.maximum(-np.where(np.isfinite(stack), stack, -1e300), 0.0))
    K = len(t_grid)
    out = np.full(stack.shape[1:], float(cap))
    rows, cols = np.nonzero(any_reached)
    k = first[rows, cols]
    t_hi = t_grid[k]
    t_lo = np.where(k > 0, t_grid[np.maximum(k - 1, 0)], t_hi)
    q_hi = q[k, rows, cols]
    k2 = np.minimum(k + 1, K - 1)
    q_next = q[k2, rows, cols]
    dt_next = t_grid[k2] - t_hi
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where((k2 > k) & (q_next > q_hi), (q_next - q_hi) / np.where(dt_next > 0, dt_next, 1.0),
                         q_hi / np.where(t_hi > t_lo, t_hi - t_lo, 1.0))

    def model(t):
        return q_hi + slope * (t - t_hi)

    lo = t_lo.copy()
    hi = t_hi.copy()
    for _ in range(depth):
        mid = 0.5 * (lo + hi)
        pos = model(mid) > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    arr = np.where(k > 0, 0.5 * (lo + hi), t_hi)
    out[rows, cols] = arr
    return out


def arrival_direct(fields: Sequence[EnvelopeField], cap: Optional[float] = None, depth: int = 20) -> ArrivalField:
    """Per-node first time with ``psi_t < -eps``, refined between neighbouring samples.

    ``fields`` must come from one form on one grid, sorted by ``t``.
    Nodes never reached get ``cap`` (default: 1 on the sphere, the last time
    on the plane).
    """
    if len(fields) < 2:
        raise DomainError("need at least two envelopes")
    t_grid = np.array([f.t for f in fields])
    if np.any(np.diff(t_grid) <= 0):
        raise DomainError("envelopes must be sorted by t")
    g = fields[0].grid
    sphere = fields[0].chart_w is not None
    if cap is None:
        cap = 1.0 if sphere else float(t_grid[-1])
    usable = [f for f in fields if f.marker is None]
    tg = np.array([f.t for f in usable])
    eps = np.array([f.eps_mask for f in usable])
    stack = np.stack([f.psi for f in usable])
    arr = _first_arrival(stack, eps, tg, cap, depth)
    arr[g.z0_index] = 0.0
    arr_w = None
    wg = None
    if sphere:
        wg = usable[0].chart_w.grid
        stack_w = np.stack([f.chart_w.psi for f in usable])
        arr_w = _first_arrival(stack_w, eps, tg, cap, depth)
    return ArrivalField(g, arr, t_grid, float(cap), arr_w, wg, "direct")


def arrival_by_solves(form, grid: GridSpec, points, t_lo: float, t_hi: float, tol: float = 1e-8,
                      depth: int = 20, w_grid: Optional[GridSpec] = None) -> np.ndarray:
    """Arrival at a few nodes by bisection on fresh solves (expensive, for probes)."""
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    cache = {}

    def reached(t, p):
        if t not in cache:
            warm = cache[min(cache, key=lambda s: abs(s - t))] if cache else None
            cache[t] = solve_envelope(form, t, grid, tol, w_grid=w_grid, check_frame=False, warm=warm)
        f = cache[t]
        return bool(f.psi_at(np.array([p]))[0] < -f.eps_mask)

    out = []
    for p in pts:
        lo, hi = float(t_lo), float(t_hi)
        if reached(lo, p):
            out.append(lo)
            continue
        if not reached(hi, p):
            out.append(hi)
            continue
        for _ in range(depth):
            mid = 0.5 * (lo + hi)
            if reached(mid, p):
                hi = mid
            else:
                lo = mid
        out.append(0.5 * (lo + hi))
    return np.array(out)

