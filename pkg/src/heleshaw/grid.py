"""Uniform square grids with the injection point on a node."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import DomainError


@dataclass(frozen=True)
class GridSpec:
    """Uniform node grid on the box ``center + [-half_width, half_width]^2``.

    Node ``(i, j)`` sits at ``x = x0 + j*h``, ``y = y0 + i*h``; rows index y.
    ``boundary`` is ``"zero"`` for plane runs (psi = 0 on the frame) or
    ``"chart"`` when frame values come from another chart of an atlas.
    """

    center: complex
    half_width: float
    cells: int
    z0: complex = 0j
    boundary: str = "zero"
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.cells < 4 or self.cells % 2:
            raise DomainError(f"cells must be an even integer >= 4, got {self.cells}")
        if not self.half_width > 0:
            raise DomainError("half_width must be positive")
        if self.boundary not in ("zero", "chart"):
            raise DomainError(f"unknown boundary rule {self.boundary!r}")
        off = (complex(self.z0) - self.origin) / self.h
        if abs(off.real - round(off.real)) > 1e-9 or abs(off.imag - round(off.imag)) > 1e-9:
            raise DomainError(f"injection point {self.z0} is not a grid node")
        i, j = int(round(off.imag)), int(round(off.real))
        if not (0 < i < self.n - 1 and 0 < j < self.n - 1):
            raise DomainError("injection point must be an interior node")

    @property
    def n(self) -> int:
        return self.cells + 1

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.cells

    @property
    def origin(self) -> complex:
        return complex(self.center) - self.half_width * (1 + 1j)

    @property
    def shape(self) -> tuple:
        return (self.n, self.n)

    @property
    def z0_index(self) -> tuple:
        off = (complex(self.z0) - self.origin) / self.h
        return int(round(off.imag)), int(round(off.real))

    @property
    def x(self) -> np.ndarray:
        return self.origin.real + self.h * np.arange(self.n)

    @property
    def y(self) -> np.ndarray:
        return self.origin.imag + self.h * np.arange(self.n)

    @property
    def z(self) -> np.ndarray:
        """Complex node coordinates, shape ``(n, n)``."""
        if "z" not in self._cache:
            X, Y = np.meshgrid(self.x, self.y)
            z = X + 1j * Y
            z.setflags(write=False)
            self._cache["z"] = z
        return self._cache["z"]

    def contains(self, z, margin: float = 0.0) -> np.ndarray:
        z = np.asarray(z)
        o = self.origin
        w = 2 * self.half_width
        return ((z.real >= o.real + margin) & (z.real <= o.real + w - margin)
                & (z.imag >= o.imag + margin) & (z.imag <= o.imag + w - margin))

    def frame(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return m

    def refine(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.center, self.half_width, self.cells * factor, self.z0, self.boundary)

    def with_z0(self, z0: complex) -> "GridSpec":
        return GridSpec(self.center, self.half_width, self.cells, z0, self.boundary)

    def fractional_index(self, z):
        """Continuous (row, col) coordinates of points ``z``."""
        off = (np.asarray(z, dtype=complex) - self.origin) / self.h
        return off.imag, off.real

    def sample(self, values: np.ndarray, z) -> np.ndarray:
        """Bilinear interpolation of a node field at points ``z``.

        Points outside the box raise; infinite node values propagate.
        """
        z = np.asarray(z, dtype=complex)
        if not np.all(self.contains(z, margin=-1e-12)):
            raise DomainError("sample point outside grid box")
        r, c = self.fractional_index(z)
        i = np.clip(np.floor(r).astype(int), 0, self.n - 2)
        j = np.clip(np.floor(c).astype(int), 0, self.n - 2)
        a = np.clip(r - i, 0.0, 1.0)
        b = np.clip(c - j, 0.0, 1.0)
        weights = ((1 - a) * (1 - b), (1 - a) * b, a * (1 - b), a * b)
        corners = (values[i, j], values[i, j + 1], values[i + 1, j], values[i + 1, j + 1])
        out = np.zeros(np.shape(z))
        with np.errstate(invalid="ignore"):
            for w, v in zip(weights, corners):
                # a zero weight must not turn an infinite corner into NaN
                out = out + np.where(w > 0, w * v, 0.0)
        return out

    def interpolation_matrix(self, z):
        """Sparse ``(len(z), n*n)`` matrix of bilinear weights on flattened nodes."""
        z = np.asarray(z, dtype=complex).ravel()
        if not np.all(self.contains(z, margin=-1e-12)):
            raise DomainError("interpolation point outside grid box")
        r, c = self.fractional_index(z)
        i = np.clip(np.floor(r).astype(int), 0, self.n - 2)
        j = np.clip(np.floor(c).astype(int), 0, self.n - 2)
        a = np.clip(r - i, 0.0, 1.0)
        b = np.clip(c - j, 0.0, 1.0)
        rows = np.repeat(np.arange(z.size), 4)
        cols = np.stack([i * self.n + j, i * self.n + j + 1, (i + 1) * self.n + j, (i + 1) * self.n + j + 1], 1)
        w = np.stack([(1 - a) * (1 - b), (1 - a) * b, a * (1 - b), a * b], 1)
        return sp.csr_matrix((w.ravel(), (rows, cols.ravel())), shape=(z.size, self.n * self.n))

    def describe(self) -> dict:
        return {
            "center": [float(np.real(self.center)), float(np.imag(self.center))],
            "half_width": float(self.half_width),
            "cells": int(self.cells),
            "h": float(self.h),
            "z0": [float(np.real(self.z0)), float(np.imag(self.z0))],
            "boundary": self.boundary,
        }


def square_grid(half_width: float = 2.0, cells: int = 256, z0: complex = 0j,
                center: complex | None = None) -> GridSpec:
    """Grid centred on ``center`` (default: the injection point)."""
    c = complex(z0) if center is None else complex(center)
    return GridSpec(c, float(half_width), int(cells), complex(z0))


def five_point(u: np.ndarray) -> np.ndarray:
    """Unscaled 5-point Laplacian sum on interior nodes (zero on the frame)."""
    out = np.zeros_like(u)
    out[1:-1, 1:-1] = (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2]
                       - 4.0 * u[1:-1, 1:-1])
    return out
