"""End-to-end experiments: the regular radial case and four pathologies.

Every scenario returns a :class:`ScenarioReport` holding its inputs, named
diagnostics, the thresholds they were judged against and the verdicts.
Thresholds and parameters live in :data:`DEFAULTS`; a config mapping may
override any of them.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq
from skimage.measure import find_contours, points_in_poly

from .conformal import (analytic_map, constant_disc_values, properness_check, riemann_map,
                        verify_harmonic_disc)
from .duality import arrival_from_H, fiber_measure, h_modulus, legendre_forward
from .exceptions import DomainError, HeleShawError, TopologyError
from .flow import (_chart_split, area_law_tolerance, arrival_by_solves, arrival_direct, extract_domain,
                   solve_family)
from .forms import (annulus, corner, drop_geometry, drop_indicator, grid_form, quadratic,
                    radial_profile, slit)
from .grid import square_grid
from .obstacle import solve_envelope, sphere_grids
from .radial import envelope_value
from .strong import MarkerFront, reverse_engineer_kappa, run_strong_flow, strong_weak_compare

THRESHOLD_VERSION = 1

DEFAULTS = {
    "radial": {
        "cells": 256,
        "times": [0.1, 0.25, 0.5, 0.75, 0.9],
        "fan_steps": 32,
        "disc_t": 0.5,
        "strong_times": [0.2, 0.5, 0.8],
        "strong_t0": 1e-3,
        "thresholds": {"oracle_linf": 5e-3, "area_rel": 0.01, "arrival_extra": 1e-3,
                       "disc_residual": 5e-3, "constant_disc": 1e-12, "strong_weak": 0.02},
    },
    "self_tangency": {
        "ring_radius": 0.6,
        "radial_stiffness": 8.0,
        "front_step": 0.05,
        "stop_before": 0.1,
        "raster": 2049,
        "master_cells": 512,
        "profile_cells": 256,
        "grids": [128, 256, 512],
        "window": 0.05,
        "control_x": 0.25,
        "control_bracket": [0.3, 0.7],
        "probe_depth": 16,
        "strong": False,
        "thresholds": {"profile_rel": 0.10, "kink_jump": [1.6, 2.4], "d2_ratio": [1.5, 2.5],
                       "control_ratio": [0.8, 1.25], "control_bound": 1.25, "breakdown_rel": 0.02},
    },
    "multiply_connected": {
        "cells": 96,
        "t_step": 0.025,
        "eps": 0.05,
        "far_scale": 8.0,
        "center": [0.5, 0.0],
        "r_in": 0.3,
        "r_out": 0.7,
        "thresholds": {"window_width": 0.05, "area_rel": 0.01},
    },
    "slit": {
        "cells": 128,
        "t_step": 0.025,
        "tail_times": [0.9, 0.95, 0.98, 0.99, 0.995],
        "radii": [0.5, 0.75],
        "eps": 0.02,
        "thresholds": {"fiber_total": 0.01, "fiber_outside": 0.01, "tube_shrink": 0.5},
    },
    "acute_corner": {
        "cells": 256,
        "corner_point": [0.6, 0.0],
        "angle": float(np.pi / 3),
        "fine_times": [0.0025, 0.05, 20],
        "coarse_times": [0.06, 0.3, 25],
        "jump": 0.1,
        "bisector_cells": 2.0,
        "arc_cells": 1.0,
        "thresholds": {"corner_gap": 0.1, "arc_arrival": 0.02, "cluster_distance_cells": 3.0},
    },
}


def settings(name: str, config: Optional[dict] = None) -> dict:
    """Defaults of one scenario merged with overrides (unknown keys are rejected)."""
    if name not in DEFAULTS:
        raise DomainError(f"unknown scenario {name!r}")
    out = copy.deepcopy(DEFAULTS[name])
    for key, val in (config or {}).items():
        if key not in out:
            raise DomainError(f"scenario {name!r} has no parameter {key!r}")
        if key == "thresholds":
            for k2, v2 in val.items():
                if k2 not in out["thresholds"]:
                    raise DomainError(f"scenario {name!r} has no threshold {k2!r}")
                out["thresholds"][k2] = v2
        else:
            out[key] = val
    return out


@dataclass
class ScenarioReport:
    """Inputs, diagnostics and verdicts of one scenario run."""

    scenario: str
    inputs: dict
    diagnostics: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    data: dict = field(default_factory=dict, repr=False)
    threshold_version: int = THRESHOLD_VERSION

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(self.checks.values()) and not self.errors

    def record(self, name: str, value, op: str, limit) -> bool:
        """Store a diagnostic with its threshold and verdict."""
        if op == "<=":
            ok = value <= limit
        elif op == ">=":
            ok = value >= limit
        elif op == "==":
            ok = value == limit
        elif op == "in":
            ok = limit[0] <= value <= limit[1]
        else:
            raise DomainError(f"unknown comparison {op!r}")
        self.diagnostics[name] = value
        self.thresholds[name] = {"op": op, "limit": limit}
        self.checks[name] = bool(ok)
        return bool(ok)

    def note(self, name: str, value) -> None:
        """A diagnostic reported without a verdict."""
        self.diagnostics[name] = value

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "passed": self.passed, "threshold_version": self.threshold_version,
                "inputs": self.inputs, "diagnostics": self.diagnostics, "thresholds": self.thresholds,
                "checks": self.checks, "errors": self.errors, "artifacts": self.artifacts}


def _guard(report: ScenarioReport, step: str, fn: Callable):
    try:
        return fn()
    except HeleShawError as err:
        report.errors.append(f"{step}: {type(err).__name__}: {err}")
        return None


# ------------------------------------------------------------------ radial

def scenario_radial(config: Optional[dict] = None) -> ScenarioReport:
    """Full pipeline on the quadratic form, where every quantity has a closed form."""
    cfg = settings("radial", config)
    thr = cfg["thresholds"]
    form = quadratic()
    grid = square_grid(2.0, cfg["cells"], 0j)
    t_fan = np.linspace(0.0, 1.0, cfg["fan_steps"] + 1)[1:]
    times = sorted(set(np.round(np.concatenate([t_fan, cfg["times"]]), 12)))
    rep = ScenarioReport("radial", {"form": "quadratic", "cells": cfg["cells"], "times": cfg["times"],
                                    "fan_times": [float(t) for t in times]})
    fam = _guard(rep, "envelopes", lambda: solve_family(form, times, grid))
    if fam is None:
        return rep
    prof = radial_profile(form)
    by_t = {round(f.t, 12): f for f in fam}
    linf, area_err, holes = [], [], 0
    for t in cfg["times"]:
        f = by_t[round(t, 12)]
        exact = envelope_value(prof, t, grid.z)
        fin = np.isfinite(f.psi) & np.isfinite(exact)
        linf.append(float(np.max(np.abs(f.psi[fin] - exact[fin]))))
        dom = extract_domain(f)
        area_err.append(abs(dom.area - t) / area_law_tolerance(dom, t, thr["area_rel"]))
        holes = max(holes, dom.holes)
    rep.record("oracle_linf", max(linf), "<=", thr["oracle_linf"])
    rep.record("area_law_ratio", max(area_err), "<=", 1.0)
    rep.record("holes_max", holes, "==", 0)

    fan = legendre_forward(fam)
    direct = arrival_direct(fam)
    via_h = arrival_from_H(fan)
    spacing = float(np.max(np.diff(fan.t)))
    inner = np.abs(grid.z) ** 2 < 0.95
    rep.record("arrival_h_vs_direct", float(np.max(np.abs(via_h.arrival - direct.arrival))),
               "<=", spacing + thr["arrival_extra"])
    rep.record("arrival_vs_closed_form", float(np.max(np.abs(via_h.arrival - np.abs(grid.z) ** 2)[inner])),
               "<=", spacing + thr["arrival_extra"])

    t = cfg["disc_t"]
    dom = extract_domain(by_t[round(t, 12)])
    cmap = _guard(rep, "riemann map", lambda: riemann_map(dom))
    if cmap is not None:
        res = verify_harmonic_disc(cmap, t, fan)
        rep.record("disc_identity", res["identity_max"], "<=", thr["disc_residual"])
        rep.record("disc_hamiltonian", res["hamiltonian_max"], "<=", thr["disc_residual"])
        rep.note("disc_per_radius", res["per_radius"])
        rep.note("properness", properness_check(cmap, dom))
        rep.note("map_derivative_at_center", float(abs(cmap.coeffs[1])))
    # constant discs: H is -1 over the injection point and 0 outside the final domain
    zc = complex(grid.z[grid.z0_index])
    const = constant_disc_values(fan, [zc, 1.8 + 0j])
    worst = max(max(abs(v["min"] - want), abs(v["max"] - want))
                for v, want in zip(const.values(), (-1.0, 0.0)))
    rep.record("constant_disc_values", worst, "<=", thr["constant_disc"])

    st = _guard(rep, "strong flow", lambda: run_strong_flow(form, cfg["strong_t0"], max(cfg["strong_times"]),
                                                          steps=200, markers=64,
                                                          record=cfg["strong_times"]))
    if st is not None:
        cmp_ = strong_weak_compare(st.fronts, form, grid, times=cfg["strong_times"])
        rep.record("strong_weak", cmp_["max_relative"], "<=", thr["strong_weak"])
        rep.note("strong_mass_error", st.report["mass_error"])
    rep.data["arrival"] = via_h.arrival
    rep.data["grid"] = grid
    return rep


# ------------------------------------------------------------------ self-tangency

@dataclass(frozen=True)
class PinchField:
    """Prescribed arrival time of a C-shaped family whose arms meet head-on.

    In polar coordinates ``(r, phi)`` about ``center`` the arrival is
    ``A(R phi) + B (r - R)^2`` with ``A(s) = m (sqrt(lam^2 + s^2) - lam)``.
    ``lam = m / (2B)`` makes the start circular and ``A'(pi R) = 1`` makes the
    arms close at unit speed, so along the normal through the meeting point
    the arrival is ``t0 - |y|``.
    """

    ring_radius: float
    stiffness: float
    scale: float
    lam: float

    @classmethod
    def build(cls, ring_radius: float, stiffness: float) -> "PinchField":
        R, B = float(ring_radius), float(stiffness)

        def slope_gap(m):
            lam = m / (2 * B)
            return m * np.pi * R / np.hypot(lam, np.pi * R) - 1.0

        m = brentq(slope_gap, 0.5, 2.0, xtol=1e-15)
        pf = cls(R, B, float(m), float(m / (2 * B)))
        if pf.t0 >= B * R * R:
            raise DomainError("the arms would cover the centre before they meet")
        return pf

    @property
    def center(self) -> complex:
        return complex(-self.ring_radius)

    @property
    def pinch(self) -> complex:
        return complex(-2 * self.ring_radius)

    def profile(self, s):
        return self.scale * (np.hypot(self.lam, s) - self.lam)

    @property
    def t0(self) -> float:
        return float(self.profile(np.pi * self.ring_radius))

    def __call__(self, z) -> np.ndarray:
        w = np.asarray(z, dtype=complex) - self.center
        return self.profile(self.ring_radius * np.abs(np.angle(w))) + self.stiffness * (np.abs(w) - self.ring_radius) ** 2


def pinch_family(pf: PinchField, times, half_width: float = 2.0, raster: int = 2049,
                 spacing: float = 0.01) -> list:
    """Marker fronts ``{T = t}`` traced on a fine raster."""
    xs = np.linspace(-half_width, half_width, raster)
    vals = pf(xs[None, :] + 1j * xs[:, None])
    idx = np.arange(raster)
    out = []
    for t in times:
        loops = [c for c in find_contours(vals, float(t)) if np.allclose(c[0], c[-1])]
        if not loops:
            raise DomainError(f"no closed level line at t={t}")
        c = max(loops, key=len)
        z = np.interp(c[:-1, 1], idx, xs) + 1j * np.interp(c[:-1, 0], idx, xs)
        out.append(MarkerFront(float(t), z, 0j, spacing=spacing, max_count=1024).resampled())
    return out


def _second_difference(vals, h) -> float:
    return float((vals[0] + vals[2] - 2 * vals[1]) / h ** 2)


def scenario_self_tangency(config: Optional[dict] = None) -> ScenarioReport:
    """Prescribed pinching family, reverse-engineered form, weak flow through the pinch."""
    cfg = settings("self_tangency", config)
    thr = cfg["thresholds"]
    pf = PinchField.build(cfg["ring_radius"], cfg["radial_stiffness"])
    t0 = pf.t0
    p = pf.pinch
    rep = ScenarioReport("self_tangency", {"ring_radius": pf.ring_radius, "stiffness": pf.stiffness,
                                           "scale": pf.scale, "lam": pf.lam, "t0": t0,
                                           "pinch": [p.real, p.imag], "grids": cfg["grids"],
                                           "master_cells": cfg["master_cells"]})
    ts = np.arange(cfg["front_step"], t0 - cfg["stop_before"], cfg["front_step"])
    fam = _guard(rep, "front family", lambda: pinch_family(pf, ts, 2.0, cfg["raster"]))
    if fam is None:
        return rep
    ks = _guard(rep, "kappa", lambda: reverse_engineer_kappa(fam))
    if ks is None:
        return rep
    master = square_grid(2.0, cfg["master_cells"], 0j)
    kap = ks.field(master)
    if not np.all(kap > 0):
        rep.errors.append("kappa reconstruction produced nonpositive values")
        return rep
    rho = 1.0 / kap
    form = grid_form(master, rho, name="pinch")
    rep.note("kappa_range", [float(kap.min()), float(kap.max())])
    rep.note("density_range", [float(rho.min()), float(rho.max())])

    # arrival profile along the normal through the pinch
    g = square_grid(2.0, cfg["profile_cells"], 0j)
    t_prof = np.concatenate([np.arange(0.1, t0 - 0.08, 0.1), np.arange(t0 - 0.08, t0 + 0.02 + 1e-9, 0.005)])
    prof_fam = _guard(rep, "profile family", lambda: solve_family(form, t_prof, g, check_frame=False))
    if prof_fam is None:
        return rep
    arr = arrival_direct(prof_fam)
    k = np.arange(-int(cfg["window"] / g.h + 1e-9), int(cfg["window"] / g.h + 1e-9) + 1)
    ys = k * g.h
    T = arr.at(p + 1j * ys)
    model = t0 - np.abs(ys)
    rep.record("profile_rel", float(np.max(np.abs(T - model) / model)), "<=", thr["profile_rel"])
    pos, neg = k > 0, k < 0
    s_pos = float(np.polyfit(ys[pos], T[pos], 1)[0])
    s_neg = float(np.polyfit(ys[neg], T[neg], 1)[0])
    rep.record("kink_jump", s_neg - s_pos, "in", thr["kink_jump"])
    before = [extract_domain(f) for f in prof_fam if f.t < t0 - 0.01]
    after = extract_domain(prof_fam[-1])
    rep.note("holes_before_pinch", max(d.holes for d in before))
    rep.note("holes_after_pinch", {"t": float(after.t), "holes": after.holes})
    rep.data["profile"] = np.column_stack([ys, T, model])

    # second differences at the pinch and at a control point on a smooth arc
    d2, ctrl = [], []
    xc = cfg["control_x"]
    for cells in cfg["grids"]:
        gg = square_grid(2.0, cells, 0j)
        h = gg.h
        tp = arrival_by_solves(form, gg, p + 1j * h * np.array([-1, 0, 1]), t0 - 0.1, t0 + 0.05,
                               depth=cfg["probe_depth"])
        tc = arrival_by_solves(form, gg, xc + h * np.array([-1, 0, 1]), *cfg["control_bracket"],
                               depth=cfg["probe_depth"])
        d2.append(_second_difference(tp, h))
        ctrl.append(_second_difference(tc, h))
    rep.note("pinch_second_difference", d2)
    rep.note("control_second_difference", ctrl)
    ratios = [d2[i + 1] / d2[i] for i in range(len(d2) - 1)]
    cratios = [ctrl[i + 1] / ctrl[i] for i in range(len(ctrl) - 1)]
    rep.note("pinch_ratios", ratios)
    rep.note("control_ratios", cratios)
    rep.record("d2_ratio_min", min(ratios), "in", thr["d2_ratio"])
    rep.record("d2_ratio_max", max(ratios), "in", thr["d2_ratio"])
    # along the positive real axis the arrival is B x^2, so the exact value is 2B
    exact = 2 * pf.stiffness
    rep.record("control_bound", max(abs(v) for v in ctrl) / exact, "<=", thr["control_bound"])
    rep.record("control_ratio_finest", cratios[-1], "in", thr["control_ratio"])

    if cfg["strong"]:
        st = _guard(rep, "strong flow", lambda: run_strong_flow(form, 0.02, t0 + 0.06, steps=400, markers=128,
                                                              spacing=0.01, max_markers=1024))
        if st is not None:
            tb = st.breakdown["t"] if st.breakdown else float("inf")
            rep.record("breakdown_rel", abs(tb - t0) / t0, "<=", thr["breakdown_rel"])
    return rep


# ------------------------------------------------------------------ multiply connected

def _longest_run(flags) -> tuple:
    best, start, cur = (0, -1, -1), None, 0
    for i, f in enumerate(flags):
        if f:
            start = i if start is None else start
            cur = i - start + 1
            if cur > best[0]:
                best = (cur, start, i)
        else:
            start = None
    return best


def scenario_multiply_connected(config: Optional[dict] = None) -> ScenarioReport:
    """Mass on an annulus around the injection point: the domains wrap around and trap a cap."""
    cfg = settings("multiply_connected", config)
    thr = cfg["thresholds"]
    form = annulus(complex(*cfg["center"]), cfg["r_in"], cfg["r_out"], eps=cfg["eps"],
                   far_scale=cfg["far_scale"])
    zg, wg = sphere_grids(cfg["cells"])
    ts = np.round(np.arange(cfg["t_step"], 1.0, cfg["t_step"]), 12)
    rep = ScenarioReport("multiply_connected", {"form": "annulus", "params": form.params,
                                                "cells": cfg["cells"], "t_grid": [float(t) for t in ts]})
    fam = _guard(rep, "envelopes", lambda: solve_family(form, np.append(ts, 1.0), zg, w_grid=wg))
    if fam is None:
        return rep
    doms = [extract_domain(f) for f in fam[:-1]]
    holes = [d.holes for d in doms]
    rep.note("holes", holes)
    n, i0, i1 = _longest_run([hh >= 1 for hh in holes])
    if n == 0:
        rep.errors.append("no time with a hole")
        rep.record("window_width", 0.0, ">=", thr["window_width"])
        return rep
    t1, t2 = float(ts[i0]), float(ts[i1])
    rep.note("window", [t1, t2])
    rep.record("window_width", t2 - t1, ">=", thr["window_width"])
    rep.record("holes_in_window", max(holes[i0:i1 + 1]), "==", 1)
    outside = [hh for i, hh in enumerate(holes) if not i0 <= i <= i1]
    rep.record("holes_outside_window", max(outside) if outside else 0, "==", 0)
    pre = [(d, t) for d, t in zip(doms, ts) if t < t1]
    if pre:
        rep.record("area_law_ratio_pre_window",
                   max(abs(d.area - t) / area_law_tolerance(d, t, thr["area_rel"]) for d, t in pre), "<=", 1.0)

    fan = legendre_forward(fam)
    arr = arrival_from_H(fan)
    sel_z = (arr.arrival > t1) & (arr.arrival < t2) & (_chart_split(zg.z) > 0)
    sel_w = (arr.arrival_w > t1) & (arr.arrival_w < t2) & (np.abs(wg.z) < 1)
    rep.record("window_set_nodes", int(sel_z.sum() + sel_w.sum()), ">=", 1)

    mid = doms[(i0 + i1) // 2]
    try:
        riemann_map(mid)
        refused = False
    except TopologyError:
        refused = True
    rep.record("map_refused_in_window", refused, "==", True)
    rep.data["holes"] = np.column_stack([ts, holes])
    return rep


# ------------------------------------------------------------------ slit

def slit_map(tau):
    """Riemann map of the sphere minus ``1/[-1, 1]`` seen from the z-chart."""
    tau = np.asarray(tau, dtype=complex)
    return 2 * tau / (1 + tau ** 2)


def slit_map_derivative(tau):
    tau = np.asarray(tau, dtype=complex)
    return 2 * (1 - tau ** 2) / (1 + tau ** 2) ** 2


def _slit_distance(w) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    return np.abs(w - np.clip(w.real, -1.0, 1.0))


def scenario_slit(config: Optional[dict] = None) -> ScenarioReport:
    """Final domain is the sphere minus a slit; fibers of the weak solution live on disc images."""
    cfg = settings("slit", config)
    thr = cfg["thresholds"]
    form = slit(eps=cfg["eps"])
    zg, wg = sphere_grids(cfg["cells"])
    ts = np.round(np.arange(cfg["t_step"], 1.0, cfg["t_step"]), 12)
    ts = np.array(sorted(set(ts) | set(np.round(cfg["tail_times"], 12)) | {1.0}))
    rep = ScenarioReport("slit", {"form": "slit", "params": form.params, "cells": cfg["cells"],
                                  "t_grid": [float(t) for t in ts]})
    fam = _guard(rep, "envelopes", lambda: solve_family(form, ts, zg, w_grid=wg))
    if fam is None:
        return rep
    rep.record("holes_max", max(extract_domain(f).holes for f in fam[:-1]), "==", 0)

    widths = []
    for t in cfg["tail_times"]:
        f = fam[int(np.argmin(np.abs(ts - t)))]
        d = extract_domain(f)
        uz = ~d.mask & (np.abs(zg.z) < 1) & (zg.z != 0)
        uw = ~d.mask_w & (np.abs(wg.z) <= 1)
        dist = np.concatenate([_slit_distance(1.0 / zg.z[uz]), _slit_distance(wg.z[uw])])
        widths.append(float(dist.max()) if dist.size else 0.0)
    rep.note("tube_widths", dict(zip([float(t) for t in cfg["tail_times"]], widths)))
    rep.record("tube_monotone", bool(np.all(np.diff(widths) <= 1e-12)), "==", True)
    rep.record("tube_shrink", widths[-1] / widths[0] if widths[0] > 0 else 0.0, "<=", thr["tube_shrink"])

    fan = legendre_forward(fam)
    cmap = analytic_map(slit_map, slit_map_derivative, 0j)
    split_z, split_w = _chart_split(zg.z), _chart_split(wg.z)
    wz = np.where(wg.z == 0, np.inf, 1.0 / np.where(wg.z == 0, 1.0, wg.z))
    totals, outside = [], []
    for r in cfg["radii"]:
        m = fiber_measure(fan, form, -2.0 * np.log(r))
        mz, mw = m["z"] * split_z, m["w"] * split_w
        poly = cmap.image_polygon(r, 2048)
        P = np.column_stack([poly.real, poly.imag])
        in_z = points_in_poly(np.column_stack([zg.z.ravel().real, zg.z.ravel().imag]), P).reshape(zg.shape)
        fin = np.isfinite(wz)
        in_w = np.zeros(wg.shape, dtype=bool)
        in_w[fin] = points_in_poly(np.column_stack([wz[fin].real, wz[fin].imag]), P)
        tot = float(mz.sum() + mw.sum())
        out = float(np.abs(mz[~in_z]).sum() + np.abs(mw[~in_w]).sum())
        totals.append(abs(tot - 1.0))
        outside.append(out)
        rep.note(f"fiber_r{r:g}", {"total": tot, "outside": out,
                                   "negative": float(np.minimum(mz, 0).sum() + np.minimum(mw, 0).sum())})
    rep.record("fiber_total_error", max(totals), "<=", thr["fiber_total"])
    rep.record("fiber_outside", max(outside), "<=", thr["fiber_outside"])
    return rep


# ------------------------------------------------------------------ acute corner

def scenario_acute_corner(config: Optional[dict] = None) -> ScenarioReport:
    """An empty drop with an acute corner: the corner stays put while smooth arcs move at once."""
    cfg = settings("acute_corner", config)
    thr = cfg["thresholds"]
    c = complex(*cfg["corner_point"])
    ang = float(cfg["angle"])
    form = corner(c, ang)
    grid = square_grid(2.0, cfg["cells"], 0j)
    h = grid.h
    ts = np.concatenate([np.linspace(*cfg["fine_times"][:2], int(cfg["fine_times"][2])),
                         np.linspace(*cfg["coarse_times"][:2], int(cfg["coarse_times"][2]))])
    rep = ScenarioReport("acute_corner", {"form": "corner", "params": form.params, "cells": cfg["cells"],
                                          "t_grid": [float(t) for t in ts]})
    fam = _guard(rep, "envelopes", lambda: solve_family(form, ts, grid))
    if fam is None:
        return rep
    fan = legendre_forward(fam)
    arr = arrival_from_H(fan)
    z = grid.z
    inside = drop_indicator(z, c, ang)
    unit = c / abs(c)
    along = (z / unit)
    # nodes outside the drop near the corner along the bisector
    reach = cfg["bisector_cells"] * h + 1e-12
    bis = (~inside) & (np.abs(along.imag) < 0.5 * h) & (along.real > abs(c)) & (along.real <= abs(c) + reach)
    if not bis.any():
        rep.errors.append("no grid node on the bisector near the corner")
        return rep
    rep.record("corner_gap", float(arr.arrival[bis].min()), ">=", thr["corner_gap"])
    _, r_disc, _ = drop_geometry(c, ang)
    # first exterior layer along the far half of the round part of the boundary
    arc = (~inside) & (np.abs(z) < r_disc + cfg["arc_cells"] * h) & (np.abs(np.angle(along)) > np.pi / 2)
    rep.record("arc_arrival", float(arr.arrival[arc].max()), "<=", thr["arc_arrival"])
    hm = h_modulus(arr, jump=cfg["jump"])
    rep.note("modulus", hm["modulus"])
    rep.record("flag_clusters", hm["clusters"], "==", 1)
    dist = min((abs(cc - c) for cc in hm["cluster_centers"]), default=np.inf) / h
    rep.record("cluster_distance_cells", float(dist), "<=", thr["cluster_distance_cells"])
    rep.data["arrival"] = arr.arrival
    rep.data["grid"] = grid
    return rep


SCENARIOS = {
    "radial": scenario_radial,
    "self_tangency": scenario_self_tangency,
    "multiply_connected": scenario_multiply_connected,
    "slit": scenario_slit,
    "acute_corner": scenario_acute_corner,
}


def run_scenario(name: str, config: Optional[dict] = None) -> ScenarioReport:
    if name not in SCENARIOS:
        raise DomainError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    return SCENARIOS[name](config)
