"""Exact envelopes for radial forms via the largest convex minorant."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .exceptions import NoBreakpointError
from .forms import RadialProfile


@dataclass(frozen=True)
class RadialEnvelope:
    """``v_t(s)``: equal to ``u`` up to ``s0`` and affine of slope ``-t`` after."""

    profile: RadialProfile
    t: float
    s0: float

    def v(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        u = self.profile.u
        tail = u(self.s0) - self.t * (s - self.s0)
        return np.where(s <= self.s0, u(s), tail)

    def psi(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        u = self.profile.u
        out = np.where(s <= self.s0, 0.0, self.v(s) - u(s))
        return np.where(np.isposinf(s), -np.inf, out)

    @property
    def radius(self) -> float:
        return float(np.exp(-self.s0 / 2))


def breakpoint(u: RadialProfile, t: float, xtol: float = 1e-13) -> float:
    """The unique ``s0`` with ``u'(s0) = -t``."""
    t = float(t)
    lo, hi = u.s_range
    if not t > 0:
        raise NoBreakpointError(f"t must be positive, got {t}")
    f = lambda s: float(u.du(s)) + t  # noqa: E731  increasing in s
    flo, fhi = f(lo), f(hi)
    if flo > 0 or fhi < 0:
        raise NoBreakpointError(f"t = {t} is outside the range of -u' on {u.s_range}")
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    return float(brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500))


def radial_envelope(u: RadialProfile, t: float) -> RadialEnvelope:
    return RadialEnvelope(u, float(t), breakpoint(u, t))


def envelope_value(u: RadialProfile, t: float, z) -> np.ndarray:
    """``psi_t(z) = v_t(s) - u(s)`` at ``s = -ln|z|^2``; ``-inf`` at 0.

    For ``t <= 0`` the envelope vanishes identically.
    """
    z = np.asarray(z, dtype=complex)
    if t <= 0:
        return np.zeros(z.shape)
    env = radial_envelope(u, t)
    r2 = np.abs(z) ** 2
    with np.errstate(divide="ignore"):
        s = -np.log(r2)
    return env.psi(s)


def domain_radius(u: RadialProfile, t: float) -> float:
    """Euclidean radius ``exp(-s0/2)`` of the radial domain at time ``t``."""
    return radial_envelope(u, t).radius
