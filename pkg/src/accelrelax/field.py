"""Mean-zero scalar fields on the periodic unit square.

Samples live on the lattice ``x_i = i/n``, ``y_j = j/n`` and are stored as
``values[i, j]`` (axis 0 is x, axis 1 is y).  Spectral coefficients are
normalised so that ``f(x) = sum_k c_k exp(2 pi i k.x)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class GridSpec:
    n: int
    d: int = 2

    def __post_init__(self):
        if self.d != 2:
            raise ValueError(f"only d = 2 is supported, got d = {self.d}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, Y)`` sample coordinates with ``indexing='ij'``."""
        s = np.arange(self.n) / self.n
        return np.meshgrid(s, s, indexing="ij")

    def axis_coords(self) -> np.ndarray:
        return np.arange(self.n) / self.n


@lru_cache(maxsize=16)
def wavenumbers(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer wavenumbers ``(full, half)`` for fft and rfft layouts."""
    full = sfft.fftfreq(n, 1.0 / n)
    half = sfft.rfftfreq(n, 1.0 / n)
    full.setflags(write=False)
    half.setflags(write=False)
    return full, half


@lru_cache(maxsize=16)
def _k_squared(n: int) -> np.ndarray:
    full, _ = wavenumbers(n)
    k2 = full[:, None] ** 2 + full[None, :] ** 2
    k2.setflags(write=False)
    return k2


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real scalar snapshot on a :class:`GridSpec`.

    The sample array is copied and frozen, so a field is a value: operations
    always return new fields.
    """

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: GridSpec, func: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "ScalarField":
        X, Y = grid.coords()
        return cls(grid, np.broadcast_to(func(X, Y), grid.shape))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_spectral(cls, grid: GridSpec, coeffs: np.ndarray) -> "ScalarField":
        """Inverse of :meth:`spectral`; the imaginary residue is discarded."""
        coeffs = np.asarray(coeffs)
        if coeffs.shape != grid.shape:
            raise ValueError("coefficient array does not match grid")
        return cls(grid, sfft.ifft2(coeffs * grid.n**2).real)

    def spectral(self) -> np.ndarray:
        """Full complex coefficient array indexed ``[kx, ky]`` in fft order."""
        return sfft.fft2(self.values) / self.grid.n**2

    def mean(self) -> float:
        return float(self.values.mean())

    def __add__(self, other: "ScalarField") -> "ScalarField":
        _check_same_grid(self, other)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        _check_same_grid(self, other)
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def to_csv(self, path: str | Path) -> None:
        np.savetxt(path, self.values, fmt="%.17g", delimiter=",")

    @classmethod
    def from_csv(cls, path: str | Path) -> "ScalarField":
        values = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls(GridSpec(values.shape[0]), values)


def _check_same_grid(f: ScalarField, g: ScalarField) -> None:
    if f.grid != g.grid:
        raise ValueError(f"grid mismatch: {f.grid} vs {g.grid}")


def project_mean_zero(f: ScalarField) -> ScalarField:
    v = f.values - f.values.mean()
    return ScalarField(f.grid, v)


def inner_product(f: ScalarField, g: ScalarField) -> float:
    """Discrete L2 inner product (grid average of ``f g``)."""
    _check_same_grid(f, g)
    return float(np.mean(f.values * g.values))


def l2_norm(f: ScalarField) -> float:
    return float(np.sqrt(np.mean(f.values * f.values)))


def sobolev_norm(f: ScalarField, s: float) -> float:
    """Homogeneous Sobolev norm with symbol ``(4 pi^2 |k|^2)^s``.

    The zero mode carries weight 1 for ``s = 0`` (so the result is the plain
    L2 norm) and 0 for ``s > 0``.  Negative ``s`` requires mean-zero input.
    """
    if s == 0:
        return l2_norm(f)
    c = f.spectral()
    scale = max(l2_norm(f), np.finfo(float).tiny)
    if s < 0 and abs(c[0, 0].real) > 1e-12 * scale:
        raise ValueError("negative-order norm is undefined on fields with nonzero mean")
    k2 = _k_squared(f.grid.n)
    weight = np.zeros_like(k2)
    nz = k2 > 0
    weight[nz] = (4.0 * np.pi**2 * k2[nz]) ** s
    return float(np.sqrt(np.sum(weight * np.abs(c) ** 2)))


def h1_norm(f: ScalarField) -> float:
    """Inhomogeneous H1 norm, ``(||f||^2 + ||grad f||^2)^(1/2)``."""
    return float(np.hypot(l2_norm(f), sobolev_norm(f, 1)))


def random_field(grid: GridSpec, rng: np.random.Generator | int | None = None, decay: float = 0.0) -> ScalarField:
    """Seeded mean-zero random field, unit L2 norm.

    ``decay > 0`` damps mode ``k`` by ``(1 + |k|^2)^(-decay/2)`` to give a
    smooth field; ``decay = 0`` is white noise.
    """
    rng = np.random.default_rng(rng)
    v = rng.standard_normal(grid.shape)
    if decay:
        c = sfft.fft2(v)
        c *= (1.0 + _k_squared(grid.n)) ** (-decay / 2.0)
        v = sfft.ifft2(c).real
    f = project_mean_zero(ScalarField(grid, v))
    return f * (1.0 / l2_norm(f))


def high_band_fraction(f: ScalarField, frac: float = 1.0 / 3.0) -> float:
    """Share of L2 energy in modes with ``max(|kx|, |ky|) > frac * n``."""
    c = f.spectral()
    full, _ = wavenumbers(f.grid.n)
    kmax = np.maximum(np.abs(full)[:, None], np.abs(full)[None, :])
    e = np.abs(c) ** 2
    total = e.sum()
    if total == 0:
        return 0.0
    return float(e[kmax > frac * f.grid.n].sum() / total)
