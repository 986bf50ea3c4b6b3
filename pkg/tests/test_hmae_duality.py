import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heleshaw.duality import (arrival_from_H, h_modulus, hamiltonian, legendre_forward, legendre_inverse,
                              ma_residual)
from heleshaw.exceptions import DomainError, FanError
from heleshaw.flow import arrival_direct
from heleshaw.radial import envelope_value


def clamped(field_):
    """Lattice envelope with values above -eps set to zero, as the fan stores it."""
    psi = field_.discrete_psi
    with np.errstate(invalid="ignore"):
        return np.where(psi > -field_.eps_mask, 0.0, psi)


def test_round_trip_at_sampled_times(quad_family, quad_fan):
    for f in quad_family[1]:
        back = legendre_inverse(quad_fan, f.t)
        fin = np.isfinite(back) & np.isfinite(f.discrete_psi)
        assert fin.sum() >= back.size - 1
        assert np.abs(back[fin] - clamped(f)[fin]).max() <= 1e-10


def test_unsampled_time_within_interpolation_bound(quad, quad_family, quad_fan):
    grid = quad_family[0]
    t = 0.53
    back = legendre_inverse(quad_fan, t)
    ex = envelope_value(quad.radial, t, grid.z)
    fin = np.isfinite(ex) & np.isfinite(back) & (np.abs(grid.z) > 2 * grid.h)
    # psi is concave in t, so the chord error is at most the spacing times the t-derivative
    with np.errstate(invalid="ignore"):
        dpsi = np.abs(envelope_value(quad.radial, t + 1e-6, grid.z) - ex) / 1e-6
    bound = (1 / 16) * dpsi[fin].max()
    assert np.abs(back[fin] - ex[fin]).max() <= bound


def test_inverse_rejects_out_of_range(quad_fan):
    with pytest.raises(DomainError):
        legendre_inverse(quad_fan, 1.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 6.0), st.floats(0.0, 6.0))
def test_fan_convex_nonincreasing_in_s(quad_fan, s1, s2):
    lo, hi = sorted((s1, s2))
    a, b = quad_fan.evaluate(lo), quad_fan.evaluate(hi)
    assert np.all(b <= a + 1e-12)
    mid = quad_fan.evaluate(0.5 * (lo + hi))
    assert np.all(mid <= 0.5 * (a + b) + 1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 5.0))
def test_active_line_realizes_value(quad_fan, s):
    k = quad_fan.active_index(s)
    vals = np.take_along_axis(quad_fan.values, k[None], axis=0)[0]
    assert np.allclose(quad_fan.evaluate(s), vals - (1 - quad_fan.t[k]) * s, atol=0, rtol=0)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 4.0))
def test_hamiltonian_is_right_slope(quad_fan, s):
    H = hamiltonian(quad_fan, s)
    assert np.all((H >= -1) & (H <= 0))
    d = 1e-7
    fd = (quad_fan.evaluate(s + d) - quad_fan.evaluate(s)) / d
    assert np.abs(fd - H).max() < 1e-5


def test_hamiltonian_at_injection_point(quad_family, quad_fan):
    g = quad_family[0]
    assert hamiltonian(quad_fan, 1.0)[g.z0_index] == -1.0


def test_arrival_consistency(quad_family, quad_fan):
    via_h = arrival_from_H(quad_fan)
    direct = arrival_direct(quad_family[1])
    assert np.abs(via_h.arrival - direct.arrival).max() <= 1 / 16 + 1e-3


def test_regular_flow_has_no_jump_flags(quad_fan):
    # |grad |z|^2| reaches 2 at the unit circle, so one 64-cell step moves H by 0.125
    hm = h_modulus(arrival_from_H(quad_fan), jump=0.2)
    assert hm["clusters"] == 0
    assert hm["lipschitz"] <= 2.0 + (1 / 16) / (4 / 64)


def test_monge_ampere_residual_small_on_average(quad, quad_fan):
    res = ma_residual(quad_fan, quad, np.linspace(0.05, 2.0, 40))
    assert res["mean"] < 0.05


def test_ma_residual_rejects_nonuniform_s(quad, quad_fan):
    with pytest.raises(DomainError):
        ma_residual(quad_fan, quad, np.array([0.1, 0.2, 0.5]))


def test_forward_needs_sorted_envelopes(quad_family):
    with pytest.raises(FanError):
        legendre_forward(quad_family[1][::-1])
