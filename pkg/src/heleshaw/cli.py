"""Command line driver: one pipeline per call, deterministic artifacts, hashed manifest."""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .exceptions import DomainError, HeleShawError

SCHEMA_VERSION = 1
SUBCOMMANDS = ("oracle", "envelope", "flow", "hmae", "discs", "strong", "scenario")
EMIT_KINDS = ("csv", "json", "plotdata")
MAX_CELLS = 2048

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

COMMON_KEYS = {"schema_version", "subcommand", "form", "grid", "t_grid", "tol", "thresholds"}
EXTRA_KEYS = {
    "oracle": {"radii"},
    "envelope": set(),
    "flow": {"moments"},
    "hmae": {"tau_radii", "probes", "s_values"},
    "discs": {"t", "samples"},
    "strong": {"t0", "t1", "steps", "markers", "scheme", "spacing", "max_markers"},
    "scenario": {"scenario", "overrides"},
}
DEFAULT_FORM = {"preset": "quadratic"}
DEFAULT_GRID = {"cells": 128, "half_width": 2.0}
DEFAULT_TIMES = {"start": 0.0625, "stop": 1.0, "num": 16}


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ formatting

def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def plain(obj):
    """Recursively convert numpy scalars, arrays and complex numbers to JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if obj is None or isinstance(obj, str):
        return obj
    return repr(obj)


def dumps(obj, indent: int = 1, _level: int = 0) -> str:
    """JSON text with sorted keys and 17-significant-digit floats."""
    obj = plain(obj) if _level == 0 else obj
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {dumps(obj[k], indent, _level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    return json.dumps(obj)


class ArtifactWriter:
    """Single writer for one run directory."""

    def __init__(self, out: Path, emit: set):
        self.out = Path(out)
        self.emit = emit
        self.out.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, obj, kind: str = "json") -> None:
        if kind in self.emit:
            (self.out / name).write_text(dumps(obj) + "\n")

    def csv(self, name: str, header, rows, kind: str = "csv") -> None:
        if kind not in self.emit:
            return
        arr = np.asarray(rows, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, len(header)) if arr.size else np.empty((0, len(header)))
        path = self.out / name
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            if arr.size:
                np.savetxt(fh, arr, fmt="%.10g", delimiter=",")

    def manifest(self, meta: dict) -> Path:
        files = sorted(p for p in self.out.rglob("*") if p.is_file() and p.name != "manifest.json")
        entries = [{"path": p.relative_to(self.out).as_posix(),
                    "sha256": hashlib.sha256(p.read_bytes()).hexdigest(),
                    "bytes": p.stat().st_size} for p in files]
        path = self.out / "manifest.json"
        path.write_text(dumps({**meta, "artifacts": entries}) + "\n")
        return path


# ------------------------------------------------------------------ config

def load_config(path) -> dict:
    """Parse a JSON or YAML run config."""
    if path is None:
        return {"schema_version": SCHEMA_VERSION}
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as err:
        raise UsageError(f"cannot read config {p}: {err}") from err
    try:
        if p.suffix.lower() in (".yaml", ".yml"):
            import yaml
            cfg = yaml.safe_load(text)
        else:
            cfg = json.loads(text)
    except Exception as err:  # parser errors differ between formats
        raise UsageError(f"cannot parse config {p}: {err}") from err
    if not isinstance(cfg, dict):
        raise UsageError("config must be a mapping")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise UsageError(f"config needs schema_version: {SCHEMA_VERSION}")
    return cfg


def t_grid_from(spec) -> np.ndarray:
    if spec is None:
        spec = DEFAULT_TIMES
    if isinstance(spec, dict):
        try:
            ts = np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
        except (KeyError, TypeError, ValueError) as err:
            raise UsageError(f"t_grid needs start, stop and num: {err}") from err
    else:
        ts = np.asarray(spec, dtype=float).ravel()
    if ts.size == 0:
        raise UsageError("t_grid is empty")
    if not np.all(np.isfinite(ts)) or np.any(ts <= 0):
        raise UsageError("t_grid entries must be positive and finite")
    if np.any(np.diff(ts) <= 0):
        raise UsageError("t_grid must be strictly increasing")
    return ts


def validate(sub: str, cfg: dict) -> dict:
    if "subcommand" in cfg and cfg["subcommand"] != sub:
        raise UsageError(f"config is for {cfg['subcommand']!r}, not {sub!r}")
    unknown = set(cfg) - COMMON_KEYS - EXTRA_KEYS[sub]
    if unknown:
        raise UsageError(f"unknown config keys for {sub}: {sorted(unknown)}")
    grid = {**DEFAULT_GRID, **cfg.get("grid", {})}
    if set(grid) - {"cells", "half_width"}:
        raise UsageError("grid accepts cells and half_width")
    if not 8 <= int(grid["cells"]) <= MAX_CELLS or int(grid["cells"]) % 2:
        raise UsageError(f"grid cells must be even and within [8, {MAX_CELLS}]")
    tol = float(cfg.get("tol", 1e-8))
    if not tol > 0:
        raise UsageError("tolerances must be positive")
    for k, v in cfg.get("thresholds", {}).items():
        if not isinstance(v, (int, float)) or not v > 0:
            raise UsageError(f"threshold {k} must be a positive number")
    out = dict(cfg)
    out["grid"] = grid
    out["tol"] = tol
    out["form"] = cfg.get("form", DEFAULT_FORM)
    if sub != "scenario":
        out["t_grid"] = t_grid_from(cfg.get("t_grid"))
    return out


def check_scenario_id(name) -> None:
    from .scenarios import SCENARIOS

    if name not in SCENARIOS:
        raise UsageError(f"scenario must be one of {sorted(SCENARIOS)}")


# ------------------------------------------------------------------ helpers

def _form_and_grids(cfg):
    from .forms import make_form
    from .grid import square_grid
    from .obstacle import sphere_grids

    form = make_form(cfg["form"])
    cells = int(cfg["grid"]["cells"])
    if form.kind == "sphere":
        if cfg["t_grid"][-1] > 1.0 + 1e-12:
            raise UsageError("times on the sphere cannot exceed the total mass 1")
        zg, wg = sphere_grids(cells)
        return form, zg, wg
    return form, square_grid(float(cfg["grid"]["half_width"]), cells, form.z0), None


class Checks:
    def __init__(self):
        self.items = {}

    def add(self, name, value, op, limit):
        ok = value <= limit if op == "<=" else value >= limit if op == ">=" else value == limit
        self.items[name] = {"value": value, "op": op, "limit": limit, "pass": bool(ok)}

    @property
    def passed(self):
        return all(v["pass"] for v in self.items.values())


def _tag(t: float) -> str:
    return format(float(t), ".6f").rstrip("0").rstrip(".")


def _heatmap(grid, values):
    z = grid.z.ravel()
    return np.column_stack([z.real, z.imag, np.asarray(values, dtype=float).ravel()])


# ------------------------------------------------------------------ pipelines

def run_oracle(cfg, w: ArtifactWriter, checks: Checks) -> dict:
    from .forms import make_form
    from .radial import breakpoint, envelope_value

    form = make_form(cfg["form"])
    if form.radial is None:
        raise UsageError(f"form {form.name!r} is not radial")
    ts = cfg["t_grid"]
    radii = np.asarray(cfg.get("radii", np.linspace(0.0, 2.0, 41)), dtype=float)
    s0 = [breakpoint(form.radial, t) for t in ts]
    vals = np.array([envelope_value(form.radial, t, radii.astype(complex)) for t in ts])
    rows = [[t, r, v] for t, row in zip(ts, vals) for r, v in zip(radii, row)]
    w.csv("oracle.csv", ["t", "r", "psi"], rows)
    w.csv("oracle_plot.csv", ["t", "r", "psi"], rows, kind="plotdata")
    fin = np.where(np.isfinite(vals), vals, 0.0)
    checks.add("nonpositive", float(fin.max()), "<=", 0.0)
    if len(ts) >= 3:
        # concave in t at every radius
        d2 = fin[2:] - 2 * fin[1:-1] + fin[:-2]
        uniform = np.allclose(np.diff(ts), ts[1] - ts[0])
        if uniform:
            checks.add("concavity_in_t", float(d2.max()), "<=", 1e-12)
    rep = {"form": form.name, "t": ts, "breakpoints": s0, "radii": [float(np.exp(-s / 2)) for s in s0]}
    w.json("oracle.json", rep)
    return rep


def run_envelope(cfg, w, checks) -> dict:
    from .flow import solve_family
    from .obstacle import residual_report

    form, zg, wg = _form_and_grids(cfg)
    fam = solve_family(form, cfg["t_grid"], zg, cfg["tol"], w_grid=wg)
    reports = []
    for f in fam:
        rr = residual_report(f)
        reports.append(rr)
        w.csv(f"psi_t{_tag(f.t)}.csv", ["x", "y", "psi"], _heatmap(zg, np.where(np.isfinite(f.psi), f.psi, -1e300)))
        if wg is not None:
            w.csv(f"psi_w_t{_tag(f.t)}.csv", ["x", "y", "psi"], _heatmap(wg, np.where(np.isfinite(f.chart_w.psi), f.chart_w.psi, -1e300)))
    checks.add("converged", all(r["converged"] for r in reports), "==", True)
    checks.add("sign_violations", sum(r["sign_violations"] for r in reports), "==", 0)
    rep = {"form": form.name, "grid": zg.describe(), "tol": cfg["tol"], "convergence": reports}
    w.json("convergence.json", rep)
    return rep


def run_flow(cfg, w, checks) -> dict:
    from .flow import area_law_tolerance, extract_domain, moments, nesting_check, solve_family

    form, zg, wg = _form_and_grids(cfg)
    K = int(cfg.get("moments", 4))
    fam = solve_family(form, cfg["t_grid"], zg, cfg["tol"], w_grid=wg)
    doms = [extract_domain(f) for f in fam]
    loops, table, topo = [], [], []
    worst = 0.0
    for d in doms:
        for i, lp in enumerate(d.loops):
            loops.extend([d.t, i, z.real, z.imag] for z in lp)
        M = moments(d, K)
        table.append([d.t, d.area, d.filled_mass] + [c for m in M for c in (m.real, m.imag)])
        topo.append({"t": d.t, "components": d.components, "holes": d.holes, "loops": len(d.loops),
                     "flags": d.flags})
        worst = max(worst, abs(d.area - d.t) / area_law_tolerance(d, d.t))
        if "plotdata" in w.emit:
            w.csv(f"boundary_t{_tag(d.t)}.csv", ["loop", "x", "y"],
                  [[i, z.real, z.imag] for i, lp in enumerate(d.loops) for z in lp], kind="plotdata")
    head = ["t", "area", "filled_mass"] + [f"M{k}_{p}" for k in range(K + 1) for p in ("re", "im")]
    w.csv("boundaries.csv", ["t", "loop", "x", "y"], loops)
    w.csv("areas_moments.csv", head, table)
    nest = nesting_check(doms)
    checks.add("nested", nest["nested"], "==", True)
    checks.add("area_law_ratio", worst, "<=", 1.0)
    rep = {"form": form.name, "topology": topo,
           "nesting": {"nested": nest["nested"], "pairs": [{k: v for k, v in p.items() if k != "offending"}
                                                          for p in nest["pairs"]]}}
    w.json("topology.json", rep)
    return rep


def _fan(cfg):
    from .duality import legendre_forward
    from .flow import solve_family

    form, zg, wg = _form_and_grids(cfg)
    fam = solve_family(form, cfg["t_grid"], zg, cfg["tol"], w_grid=wg)
    return form, zg, fam, legendre_forward(fam)


def run_hmae(cfg, w, checks) -> dict:
    from .duality import arrival_from_H, h_modulus, ma_residual
    from .flow import arrival_direct

    form, zg, fam, fan = _fan(cfg)
    via_h = arrival_from_H(fan)
    direct = arrival_direct(fam)
    spacing = float(np.max(np.diff(np.concatenate([[0.0], fan.t]))))
    err = float(np.max(np.abs(via_h.arrival - direct.arrival)))
    checks.add("arrival_consistency", err, "<=", spacing + 1e-3)
    hm = h_modulus(via_h)
    w.csv("arrival.csv", ["x", "y", "arrival"], _heatmap(zg, via_h.arrival))
    w.csv("arrival_heatmap.csv", ["x", "y", "arrival"], _heatmap(zg, via_h.arrival), kind="plotdata")
    for r in cfg.get("tau_radii", [0.25, 0.5, 0.75]):
        s = -2.0 * math.log(float(r))
        w.csv(f"phi_tau{_tag(r)}.csv", ["x", "y", "phi"], _heatmap(zg, fan.evaluate(s)))
    s_vals = np.asarray(cfg.get("s_values", np.linspace(0.0, 4.0, 81)), dtype=float)
    probes = [complex(*p) for p in cfg.get("probes", [[0.25, 0.0], [0.5, 0.5]])]
    H = np.array([[float(fan.hamiltonian_at(np.array([p]), np.array([math.exp(-s / 2)]))[0]) for s in s_vals]
                  for p in probes])
    rows = [[i, p.real, p.imag, s, h] for i, p in enumerate(probes) for s, h in zip(s_vals, H[i])]
    w.csv("h_vs_s.csv", ["probe", "x", "y", "s", "H"], rows, kind="plotdata")
    rep = {"form": form.name, "t": fan.t, "arrival_consistency": err, "t_spacing": spacing,
           "h_modulus": {k: v for k, v in hm.items() if k != "flags"}}
    if not fan.is_sphere:
        ma = ma_residual(fan, form)
        w.csv("ma_residual.csv", ["s", "max", "mean"],
              [[s, float(np.abs(ma["field"][i]).max()), float(np.abs(ma["field"][i]).mean())]
               for i, s in enumerate(ma["s"])])
        rep["ma_residual"] = {"max": ma["max"], "mean": ma["mean"], "flat_max": ma["flat_max"]}
    w.json("hmae.json", rep)
    return rep


def run_discs(cfg, w, checks) -> dict:
    from .conformal import properness_check, riemann_map, verify_harmonic_disc
    from .flow import extract_domain

    form, zg, fam, fan = _fan(cfg)
    t = float(cfg.get("t", fan.t[len(fan.t) // 2]))
    ts = np.array([f.t for f in fam])
    k = int(np.argmin(np.abs(ts - t)))
    if abs(ts[k] - t) > 1e-12:
        raise UsageError(f"t={t} is not on the t-grid")
    dom = extract_domain(fam[k])
    cmap = riemann_map(dom, M=int(cfg.get("samples", 512)))
    res = verify_harmonic_disc(cmap, t, fan)
    lim = float(cfg.get("thresholds", {}).get("disc_residual", 5e-3))
    checks.add("identity", res["identity_max"], "<=", lim)
    checks.add("hamiltonian", res["hamiltonian_max"], "<=", lim)
    w.csv("correspondence.csv", ["theta", "x", "y", "abs_derivative"],
          np.column_stack([cmap.theta, cmap.boundary.real, cmap.boundary.imag, cmap.deriv_abs]))
    w.json("coefficients.json", {"t": t, "z0": cmap.z0, "coeffs": cmap.coeffs})
    rep = {"form": form.name, "t": t, "residuals": res, "properness": properness_check(cmap, dom),
           "map": cmap.diagnostics}
    w.json("residuals.json", rep)
    return rep


def run_strong(cfg, w, checks) -> dict:
    from .forms import make_form
    from .strong import run_strong_flow

    form = make_form(cfg["form"])
    ts = cfg["t_grid"]
    t0 = float(cfg.get("t0", 1e-3))
    t1 = float(cfg.get("t1", ts[-1]))
    res = run_strong_flow(form, t0, t1, steps=int(cfg.get("steps", 100)), markers=int(cfg.get("markers", 64)),
                          scheme=cfg.get("scheme", "euler"), spacing=float(cfg.get("spacing", 0.02)),
                          max_markers=int(cfg.get("max_markers", 512)), record=list(ts))
    M = res.moments
    w.csv("moments.csv", ["t"] + [f"M{k}_{p}" for k in range(M.shape[1]) for p in ("re", "im")],
          np.column_stack([res.times] + [c for k in range(M.shape[1]) for c in (M[:, k].real, M[:, k].imag)]))
    w.csv("moments_plot.csv", ["t"] + [f"M{k}_{p}" for k in range(M.shape[1]) for p in ("re", "im")],
          np.column_stack([res.times] + [c for k in range(M.shape[1]) for c in (M[:, k].real, M[:, k].imag)]),
          kind="plotdata")
    w.csv("fronts.csv", ["step", "t", "i", "x", "y"],
          [[n, f.t, i, z.real, z.imag] for n, f in enumerate(res.fronts) for i, z in enumerate(f.z)], kind="plotdata")
    lim = float(cfg.get("thresholds", {}).get("mass_error", 0.01))
    checks.add("mass_error", res.report["mass_error"], "<=", lim * max(1.0, t1))
    bd = None
    if res.breakdown:
        bd = {k: v for k, v in res.breakdown.items() if k != "front"}
    checks.add("no_breakdown", bd is None, "==", True)
    rep = {"form": form.name, "report": res.report, "breakdown": bd}
    w.json("breakdown.json", rep)
    return rep


def run_scenario_cmd(cfg, w, checks, scenario_id) -> dict:
    from .scenarios import run_scenario

    name = scenario_id or cfg.get("scenario")
    try:
        rep = run_scenario(name, cfg.get("overrides"))
    except DomainError as err:
        if "has no" in str(err):
            raise UsageError(str(err)) from err
        raise
    for key, val in sorted(rep.data.items()):
        if isinstance(val, np.ndarray) and val.ndim == 2 and key != "grid":
            if key == "arrival":
                w.csv(f"{key}.csv", ["x", "y", key], _heatmap(rep.data["grid"], val), kind="plotdata")
            else:
                w.csv(f"{key}.csv", [f"c{i}" for i in range(val.shape[1])], val)
    out = rep.to_dict()
    w.json("report.json", out)
    for name_, ok in rep.checks.items():
        checks.items[name_] = {"value": rep.diagnostics[name_], **rep.thresholds[name_], "pass": ok}
    if rep.errors:
        checks.items["errors"] = {"value": rep.errors, "op": "==", "limit": [], "pass": False}
    return out


PIPELINES = {"oracle": run_oracle, "envelope": run_envelope, "flow": run_flow, "hmae": run_hmae,
             "discs": run_discs, "strong": run_strong}


# ------------------------------------------------------------------ entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heleshaw", description="Weak and strong Hele-Shaw flow pipelines.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("scenario_id", nargs="?", help="scenario name (scenario subcommand only)")
    p.add_argument("--config", help="JSON or YAML run config")
    p.add_argument("--out", default="run", help="output directory")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--emit", default="csv,json", help="comma list of csv, json, plotdata")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_USAGE if err.code else EXIT_PASS
    try:
        emit = {e.strip() for e in args.emit.split(",") if e.strip()}
        if emit - set(EMIT_KINDS):
            raise UsageError(f"--emit accepts {','.join(EMIT_KINDS)}")
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        if args.scenario_id and args.subcommand != "scenario":
            raise UsageError("a positional id is only accepted by the scenario subcommand")
        cfg = validate(args.subcommand, load_config(args.config))
        if "form" in cfg:
            from .forms import make_form
            make_form(cfg["form"])
        if args.subcommand == "scenario":
            check_scenario_id(args.scenario_id or cfg.get("scenario"))
    except (UsageError, DomainError, ValueError, TypeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE

    from threadpoolctl import threadpool_limits

    w = ArtifactWriter(Path(args.out), emit)
    checks = Checks()
    meta = {"schema_version": SCHEMA_VERSION, "subcommand": args.subcommand, "emit": sorted(emit),
            "config": {k: v for k, v in cfg.items() if k != "schema_version"}}
    if args.scenario_id:
        meta["scenario"] = args.scenario_id
    status, error = EXIT_PASS, None
    try:
        with threadpool_limits(limits=args.threads):
            if args.subcommand == "scenario":
                run_scenario_cmd(cfg, w, checks, args.scenario_id)
            else:
                PIPELINES[args.subcommand](cfg, w, checks)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except HeleShawError as err:
        error = f"{type(err).__name__}: {err}"
        status = EXIT_FAIL
    if status == EXIT_PASS and not checks.passed:
        status = EXIT_FAIL
    meta.update({"checks": checks.items, "passed": status == EXIT_PASS, "error": error, "exit_code": status})
    w.manifest(meta)
    print(f"{args.subcommand}: {'pass' if status == EXIT_PASS else 'FAIL'} ({len(checks.items)} checks) -> "
          f"{os.path.join(args.out, 'manifest.json')}")
    if error:
        print(f"error: {error}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
