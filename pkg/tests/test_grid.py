import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heleshaw.exceptions import DomainError
from heleshaw.grid import GridSpec, five_point, square_grid


def test_layout():
    g = square_grid(2.0, 8, 0j)
    assert g.shape == (9, 9)
    assert g.h == 0.5
    assert g.z[g.z0_index] == 0
    assert g.z[0, -1] == 2 - 2j
    assert g.frame().sum() == 32


@settings(max_examples=50, deadline=None)
@given(st.floats(-1.99, 1.99), st.floats(-1.99, 1.99))
def test_bilinear_sampling_exact_for_bilinear(x, y):
    g = square_grid(2.0, 16, 0j)
    f = lambda z: 1 + 2 * z.real - 3 * z.imag + 0.5 * z.real * z.imag  # noqa: E731
    z = np.array([complex(x, y)])
    assert g.sample(f(g.z), z)[0] == pytest.approx(f(z)[0], abs=1e-12)
    assert (g.interpolation_matrix(z) @ f(g.z).ravel())[0] == pytest.approx(f(z)[0], abs=1e-12)


def test_refine_halves_spacing():
    g = square_grid(1.0, 16, 0j)
    assert g.refine().h == pytest.approx(g.h / 2)


def test_five_point_on_quadratic():
    g = square_grid(1.0, 16, 0j)
    lap = five_point(np.abs(g.z) ** 2) / g.h ** 2
    assert np.allclose(lap[1:-1, 1:-1], 4.0)


def test_odd_cells_rejected():
    with pytest.raises(DomainError):
        GridSpec(0j, 1.0, 7, 0j)
