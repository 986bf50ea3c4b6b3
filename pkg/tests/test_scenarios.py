import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from heleshaw.exceptions import DomainError
from heleshaw.scenarios import (DEFAULTS, PinchField, ScenarioReport, _longest_run, pinch_family, run_scenario,
                                settings, slit_map, slit_map_derivative)


def test_settings_merge_and_reject():
    cfg = settings("slit", {"cells": 64, "thresholds": {"fiber_total": 0.05}})
    assert cfg["cells"] == 64
    assert cfg["thresholds"]["fiber_total"] == 0.05
    assert cfg["thresholds"]["fiber_outside"] == DEFAULTS["slit"]["thresholds"]["fiber_outside"]
    with pytest.raises(DomainError):
        settings("slit", {"bogus": 1})
    with pytest.raises(DomainError):
        settings("slit", {"thresholds": {"bogus": 1}})
    with pytest.raises(DomainError):
        run_scenario("nonexistent")


def test_defaults_not_mutated():
    settings("radial", {"times": [0.3]})
    assert DEFAULTS["radial"]["times"] == [0.1, 0.25, 0.5, 0.75, 0.9]


def test_report_record_ops():
    rep = ScenarioReport("x", {})
    assert not rep.passed
    assert rep.record("a", 1.0, "<=", 2.0)
    assert rep.record("b", 1.7, "in", [1.5, 2.5])
    assert rep.record("c", 3, "==", 3)
    assert rep.passed
    assert not rep.record("d", 0.1, ">=", 0.2)
    assert not rep.passed
    with pytest.raises(DomainError):
        rep.record("e", 1, "<>", 2)
    d = rep.to_dict()
    assert d["checks"] == {"a": True, "b": True, "c": True, "d": False}
    assert "data" not in d


def test_report_errors_fail():
    rep = ScenarioReport("x", {})
    rep.record("a", 0, "==", 0)
    rep.errors.append("boom")
    assert not rep.passed


@pytest.mark.parametrize("flags,expected", [
    ([0, 1, 1, 0, 1], (2, 1, 2)),
    ([1, 1, 1], (3, 0, 2)),
    ([0, 0], (0, -1, -1)),
    ([1, 0, 1, 1, 1, 0], (3, 2, 4)),
])
def test_longest_run(flags, expected):
    assert _longest_run([bool(f) for f in flags]) == expected


def test_pinch_field_construction():
    pf = PinchField.build(0.6, 8.0)
    # arms close at unit speed: A'(pi R) = 1
    s = np.pi * pf.ring_radius
    d = 1e-6
    assert (pf.profile(s + d) - pf.profile(s - d)) / (2 * d) == pytest.approx(1.0, abs=1e-8)
    assert pf.lam == pytest.approx(pf.scale / (2 * pf.stiffness))
    assert pf.t0 == pytest.approx(1.8244614145280222, rel=1e-12)
    assert pf(np.array([0j]))[0] == pytest.approx(0.0, abs=1e-15)


@hsettings(max_examples=30, deadline=None)
@given(st.floats(-0.05, 0.05))
def test_pinch_normal_profile(y):
    pf = PinchField.build(0.6, 8.0)
    val = pf(np.array([pf.pinch + 1j * y]))[0]
    # |phi| = pi - |y|/R + O(y^3) and r - R = O(y^2)
    assert val == pytest.approx(pf.t0 - abs(y), abs=0.02 * abs(y) + 1e-12)


def test_pinch_family_nested():
    pf = PinchField.build(0.6, 8.0)
    fam = pinch_family(pf, [0.3, 0.6, 0.9], raster=513)
    for a, b in zip(fam[:-1], fam[1:]):
        assert np.all(b.inside(a.z))


def test_slit_map_boundary_is_slit():
    th = np.linspace(0.01, np.pi - 0.01, 50)
    w = 1 / slit_map(np.exp(1j * th))
    assert np.allclose(w.imag, 0, atol=1e-12)
    assert np.all(np.abs(w.real) <= 1 + 1e-12)


def test_slit_map_derivative():
    tau = np.array([0.3 + 0.2j, -0.5j])
    d = 1e-7
    fd = (slit_map(tau + d) - slit_map(tau - d)) / (2 * d)
    assert np.allclose(slit_map_derivative(tau), fd, atol=1e-7)
