"""Hele-Shaw flow on the plane and the sphere.

Weak flow from obstacle-problem envelopes, the Monge-Ampere solution they
dualize to, harmonic discs from Riemann maps, and a marker-front strong flow.
"""
from .conformal import RiemannMap, analytic_map, map_from_curve, riemann_map, verify_harmonic_disc
from .duality import SupportFan, arrival_from_H, fiber_measure, h_modulus, legendre_forward, legendre_inverse
from .exceptions import (BreakdownError, DomainError, FanError, FrameContactError, HeleShawError,
                         IterationLimitError, MapError, NoBreakpointError, TopologyError, UnsupportedError)
from .flow import FlowDomain, arrival_direct, extract_domain, moments, solve_family
from .forms import AreaForm, make_form
from .grid import GridSpec, square_grid
from .obstacle import EnvelopeField, HeleShawEnvelope, solve_envelope, sphere_grids
from .radial import breakpoint, envelope_value
from .scenarios import ScenarioReport, run_scenario
from .strong import MarkerFront, StrongHeleShaw, run_strong_flow

__version__ = "0.1.0"

__all__ = [
    "AreaForm", "BreakdownError", "DomainError", "EnvelopeField", "FanError", "FlowDomain",
    "FrameContactError", "GridSpec", "HeleShawEnvelope", "HeleShawError", "IterationLimitError",
    "MapError", "MarkerFront", "NoBreakpointError", "RiemannMap", "ScenarioReport", "StrongHeleShaw",
    "SupportFan", "TopologyError", "UnsupportedError", "analytic_map", "arrival_direct", "arrival_from_H",
    "breakpoint", "envelope_value", "extract_domain", "fiber_measure", "h_modulus", "legendre_forward",
    "legendre_inverse", "make_form", "map_from_curve", "moments", "riemann_map", "run_scenario",
    "run_strong_flow", "solve_envelope", "solve_family", "sphere_grids", "square_grid",
    "verify_harmonic_disc",
]
