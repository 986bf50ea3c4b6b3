"""The thirteen acceptance criteria, each at its stated tolerance."""
import json
import time

import numpy as np
import pytest

from heleshaw.cli import main
from heleshaw.conformal import inner_domain_check, riemann_map
from heleshaw.duality import arrival_from_H, legendre_forward, legendre_inverse
from heleshaw.flow import area_law_tolerance, arrival_direct, extract_domain, solve_family
from heleshaw.forms import gaussian_bump, quadratic
from heleshaw.grid import square_grid
from heleshaw.obstacle import solve_envelope
from heleshaw.radial import envelope_value
from heleshaw.scenarios import run_scenario
from heleshaw.strong import run_strong_flow, strong_weak_compare

TIMES = [0.1, 0.25, 0.5, 0.75, 0.9]
FAN_TIMES = np.linspace(0.0, 1.0, 33)[1:]


def oracle_linf(form, t, grid, field_):
    ex = envelope_value(form.radial, t, grid.z)
    fin = np.isfinite(ex) & np.isfinite(field_.psi)
    return float(np.abs(field_.psi[fin] - ex[fin]).max())


@pytest.fixture(scope="module")
def radial_family():
    form = quadratic()
    grid = square_grid(2.0, 256, 0j)
    ts = np.array(sorted(set(np.round(np.concatenate([FAN_TIMES, TIMES]), 12))))
    fam = solve_family(form, ts, grid)
    return form, grid, fam, legendre_forward(fam)


@pytest.fixture(scope="module")
def bump_family():
    form = gaussian_bump()
    grid = square_grid(2.0, 256, 0j)
    fam = solve_family(form, FAN_TIMES, grid)
    return form, grid, fam, legendre_forward(fam)


@pytest.fixture(scope="module")
def radial_report():
    return run_scenario("radial")


def test_c01_radial_oracle(criterion):
    form = quadratic()
    errs, secs = {}, []
    for cells in (128, 256, 512):
        grid = square_grid(2.0, cells, 0j)
        worst = 0.0
        for t in TIMES:
            start = time.perf_counter()
            fl = solve_envelope(form, t, grid)
            if cells == 512:
                secs.append(time.perf_counter() - start)
            worst = max(worst, oracle_linf(form, t, grid, fl))
        errs[cells] = worst
    orders = [np.log2(errs[128] / errs[256]), np.log2(errs[256] / errs[512])]
    fitted = np.polyfit(np.log([4 / 128, 4 / 256, 4 / 512]), np.log([errs[c] for c in (128, 256, 512)]), 1)[0]
    ok = errs[512] <= 5e-3 and fitted >= 1.0 and max(secs) <= 60.0
    criterion(1, "radial oracle", ok, f"Linf512={errs[512]:.3e} order={fitted:.2f} pairwise={orders[0]:.2f},"
              f"{orders[1]:.2f} max_s_per_t={max(secs):.1f}")
    assert ok


def test_c02_area_law(criterion, radial_family, bump_family):
    ratios = {}
    for name, (form, grid, fam, _) in (("radial", radial_family), ("bump", bump_family)):
        ratios[name] = max(abs(d.area - d.t) / area_law_tolerance(d, d.t)
                           for d in map(extract_domain, fam) if d.t in np.round(TIMES, 12) or name == "bump")
    mc = run_scenario("multiply_connected")
    ratios["annulus_pre_window"] = mc.diagnostics["area_law_ratio_pre_window"]
    ok = all(v <= 1.0 for v in ratios.values())
    criterion(2, "area law", ok, " ".join(f"{k}={v:.3f}" for k, v in ratios.items()))
    assert ok


def test_c03_duality_round_trip(criterion, radial_family):
    form, grid, fam, fan = radial_family
    sampled = 0.0
    for f in fam:
        back = legendre_inverse(fan, f.t)
        lat = f.discrete_psi
        with np.errstate(invalid="ignore"):
            lat = np.where(lat > -f.eps_mask, 0.0, lat)
        fin = np.isfinite(back) & np.isfinite(lat)
        sampled = max(sampled, float(np.abs(back[fin] - lat[fin]).max()))
    spacing = float(np.max(np.diff(fan.t)))
    worst_ratio = 0.0
    for t in (0.3, 0.6, 0.85):
        back = legendre_inverse(fan, t)
        ex = envelope_value(form.radial, t, grid.z)
        with np.errstate(invalid="ignore"):
            dpsi = np.abs(envelope_value(form.radial, t + 1e-7, grid.z) - ex) / 1e-7
        fin = np.isfinite(ex) & np.isfinite(back) & np.isfinite(dpsi)
        bound = spacing * dpsi[fin].max()
        worst_ratio = max(worst_ratio, float(np.abs(back[fin] - ex[fin]).max()) / bound)
    ok = sampled <= 1e-10 and worst_ratio <= 1.0
    criterion(3, "duality round trip", ok, f"sampled={sampled:.1e} unsampled/bound={worst_ratio:.3f}")
    assert ok


def test_c04_arrival_consistency(criterion, radial_family, bump_family):
    out = {}
    for name, (form, grid, fam, fan) in (("radial", radial_family), ("bump", bump_family)):
        spacing = float(np.max(np.diff(np.concatenate([[0.0], fan.t]))))
        via_h = arrival_from_H(fan).arrival
        out[name] = float(np.abs(via_h - arrival_direct(fam).arrival).max()) / (spacing + 1e-3)
        if name == "radial":
            inner = np.abs(grid.z) ** 2 <= 1 - spacing
            out["radial_vs_|z|^2"] = float(np.abs(via_h - np.abs(grid.z) ** 2)[inner].max()) / (spacing + 1e-3)
    ok = all(v <= 1.0 for v in out.values())
    criterion(4, "arrival consistency", ok, " ".join(f"{k}={v:.3f}" for k, v in out.items()) + " (fraction of tol)")
    assert ok


def test_c05_harmonic_discs(criterion, radial_report):
    d = radial_report.diagnostics
    ok = d["disc_identity"] <= 5e-3 and d["disc_hamiltonian"] <= 5e-3 and d["constant_disc_values"] <= 1e-12
    criterion(5, "harmonic-disc residuals", ok, f"identity={d['disc_identity']:.2e} H-(t-1)={d['disc_hamiltonian']:.2e} "
              f"constant_discs={d['constant_disc_values']:.1e}")
    assert ok


def test_c06_inner_domain(criterion, radial_family):
    form, grid, fam, fan = radial_family
    t = 0.5
    # the fan carries an extra t = 0 line, so pick the envelope from the family itself
    cmap = riemann_map(extract_domain(next(f for f in fam if abs(f.t - t) < 1e-12)))
    rel = [inner_domain_check(cmap, t, r, fan, form)["relative"] for r in (0.5, 0.75)]
    ok = max(rel) <= 0.02
    criterion(6, "inner-domain identity", ok, f"relative={rel[0]:.4f},{rel[1]:.4f}")
    assert ok


def test_c07_richardson_moments(criterion):
    rec = [0.2, 0.4, 0.6, 0.8]
    res = run_strong_flow(quadratic(), 1e-3, 0.8, steps=400, markers=64, record=rec)
    M, ts = res.moments, res.times
    mass = max(abs(M[ts == t, 0].real[0] - t) / t for t in rec)
    higher = float(np.max(np.abs(M[:, 1:]) / (1 + ts[:, None])))
    sh = run_strong_flow(quadratic(), 1e-3, 0.8, steps=400, markers=64, z0=0.3 + 0j, record=rec)
    first = max(abs(sh.moments[sh.times == t, 1][0] - 0.3 * t) / (0.3 * t) for t in rec)
    ok = mass <= 0.01 and higher <= 1e-3 and first <= 0.01 and res.breakdown is None
    criterion(7, "Richardson moments", ok, f"mass_rel={mass:.4f} max|Mk|/(1+t)={higher:.1e} shifted_M1_rel={first:.4f}")
    assert ok


def test_c08_strong_weak(criterion):
    out = {}
    grid = square_grid(2.0, 256, 0j)
    for name, form, lim in (("radial", quadratic(), 0.02), ("bump", gaussian_bump(), 0.04)):
        res = run_strong_flow(form, 1e-3, 0.8, steps=200, markers=64, record=[0.2, 0.5, 0.8])
        cmp_ = strong_weak_compare(res.fronts, form, grid, times=[0.2, 0.5, 0.8])
        out[name] = (cmp_["max_relative"], lim)
    ok = all(v <= lim for v, lim in out.values())
    criterion(8, "strong-weak equivalence", ok, " ".join(f"{k}={v:.4f}(<={lim})" for k, (v, lim) in out.items()))
    assert ok


def _scenario(criterion, number, name, title):
    rep = run_scenario(name)
    failing = [k for k, v in rep.checks.items() if not v]
    detail = " ".join(f"{k}={rep.diagnostics[k]}" for k in rep.checks) + (f" errors={rep.errors}" if rep.errors else "")
    criterion(number, title, rep.passed, detail if not failing else f"failing={failing} " + detail)
    return rep


def test_c09_self_tangency(criterion):
    rep = _scenario(criterion, 9, "self_tangency", "self-tangency")
    assert rep.passed


def test_c10_multiply_connected(criterion):
    rep = _scenario(criterion, 10, "multiply_connected", "multiply connected")
    assert rep.passed


def test_c11_slit(criterion):
    rep = _scenario(criterion, 11, "slit", "slit")
    assert rep.passed


def test_c12_acute_corner(criterion):
    rep = _scenario(criterion, 12, "acute_corner", "acute corner")
    assert rep.passed


def test_c13_determinism(criterion, tmp_path):
    cfg = tmp_path / "radial.json"
    cfg.write_text(json.dumps({"schema_version": 1, "scenario": "radial"}))
    codes = []
    for run in ("a", "b"):
        codes.append(main(["scenario", "--config", str(cfg), "--out", str(tmp_path / run), "--emit", "csv,json,plotdata"]))
    a = {p.name: p.read_bytes() for p in (tmp_path / "a").iterdir()}
    b = {p.name: p.read_bytes() for p in (tmp_path / "b").iterdir()}
    ok = a == b and codes == [0, 0] and len(a) > 1
    criterion(13, "determinism", ok, f"files={len(a)} identical={a == b} exit_codes={codes}")
    assert ok
