import json

import numpy as np
import pytest

from heleshaw.cli import EXIT_FAIL, EXIT_PASS, EXIT_USAGE, dumps, main, t_grid_from, UsageError

SMALL = "schema_version: 1\nform: {preset: quadratic}\ngrid: {cells: 32}\nt_grid: {start: 0.125, stop: 1.0, num: 8}\n"


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return p


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_dumps_float_format():
    s = dumps({"b": 0.1, "a": [1, 2.5, float("inf")], "c": 1 + 2j})
    assert s.index('"a"') < s.index('"b"')
    assert "0.10000000000000001" in s
    assert '"inf"' in s
    assert json.loads(s)["c"] == [1.0, 2.0]


def test_t_grid_validation():
    assert np.allclose(t_grid_from({"start": 0.1, "stop": 0.3, "num": 3}), [0.1, 0.2, 0.3])
    for bad in ([0.5, 0.2], [], [0.0, 0.1], {"start": 0.1}):
        with pytest.raises(UsageError):
            t_grid_from(bad)


@pytest.mark.parametrize("sub", ["oracle", "envelope", "flow", "hmae"])
def test_pipelines_pass_and_manifest_complete(sub, small_cfg, tmp_path):
    out = tmp_path / sub
    assert main([sub, "--config", str(small_cfg), "--out", str(out), "--emit", "csv,json,plotdata"]) == EXIT_PASS
    m = manifest(out)
    listed = {a["path"] for a in m["artifacts"]}
    on_disk = {p.name for p in out.iterdir() if p.name != "manifest.json"}
    assert listed == on_disk and listed
    assert m["passed"] and m["exit_code"] == 0


def test_deterministic(small_cfg, tmp_path):
    for name in ("a", "b"):
        assert main(["flow", "--config", str(small_cfg), "--out", str(tmp_path / name)]) == EXIT_PASS
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()


def test_decreasing_t_grid_is_usage_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"schema_version": 1, "t_grid": [0.5, 0.2]}))
    assert main(["flow", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("text", ["{not json", '{"t_grid": [0.1]}', '{"schema_version": 1, "grid": {"cells": 7}}',
                                  '{"schema_version": 1, "tol": -1}', '{"schema_version": 1, "extra": 1}'])
def test_bad_configs(tmp_path, text):
    p = tmp_path / "c.json"
    p.write_text(text)
    assert main(["envelope", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_bad_flags(tmp_path):
    assert main(["flow", "--emit", "pdf", "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert main(["flow", "--threads", "0", "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert main(["nope"]) == EXIT_USAGE
    assert main(["scenario", "nope", "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_numerical_failure_writes_manifest(tmp_path):
    p = tmp_path / "big.json"
    # the domain of mass 5 overruns the box: frame contact
    p.write_text(json.dumps({"schema_version": 1, "grid": {"cells": 16}, "t_grid": [1.0, 5.0]}))
    out = tmp_path / "o"
    assert main(["envelope", "--config", str(p), "--out", str(out)]) == EXIT_FAIL
    m = manifest(out)
    assert "FrameContactError" in m["error"]
    assert not m["passed"]


def test_strong_pipeline(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"schema_version": 1, "t_grid": [0.1, 0.2], "steps": 20, "markers": 32}))
    out = tmp_path / "s"
    assert main(["strong", "--config", str(p), "--out", str(out), "--emit", "csv,json,plotdata"]) == EXIT_PASS
    head = (out / "moments.csv").read_text().splitlines()[0]
    assert head.startswith("t,M0_re,M0_im")


def test_discs_picks_envelope_at_requested_time(tmp_path):
    p = tmp_path / "discs.json"
    p.write_text(json.dumps({"schema_version": 1, "form": {"preset": "quadratic"}, "grid": {"cells": 64}, "t": 0.5}))
    assert main(["discs", "--config", str(p), "--out", str(tmp_path / "d")]) == EXIT_PASS
    coeffs = json.loads((tmp_path / "d" / "coefficients.json").read_text())["coeffs"]
    # conformal radius of the disc of area t is sqrt(t)
    assert abs(coeffs[1][0] - np.sqrt(0.5)) < 0.02


def test_unknown_preset_is_usage_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"schema_version": 1, "form": {"preset": "nope"}}))
    assert main(["flow", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert not (tmp_path / "o").exists()
