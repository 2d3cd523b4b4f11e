"""Split-step solution operator for ``theta_t - nu Lap theta + u . grad theta = 0``.

Diffusion and shear transport are both applied exactly on the grid, so for
shear flows the only discretisation error is the splitting commutator.  For
an x-shear the x-part of the Laplacian commutes with transport, so a Strang
step ``D(h/2) A(h) D(h/2)`` is evaluated as ``Dy(h/2) [Dx(h) A(h)] Dy(h/2)``
in the mixed ``(kx, y)`` representation: two 1-D FFTs per step.

Shear phase factors on the Nyquist row are set to 1; any other choice breaks
either realness or unitarity of the discrete transport.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .field import TWO_PI, ScalarField, wavenumbers
from .flows import SampledVelocity, ShearProfile

FOUR_PI2 = 4.0 * np.pi**2


class InstabilityError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveParams:
    nu: float
    step: float = 0.05
    splitting: str = "strang"

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.splitting not in ("strang", "lie"):
            raise ValueError(f"unknown splitting {self.splitting!r}")

    def with_nu(self, nu: float) -> "SolveParams":
        return SolveParams(nu, self.step, self.splitting)


def step_count(duration: float, step: float) -> int:
    # the slack keeps rescaled durations (accelerated vs source time) on the same count
    return max(1, math.ceil(duration / step - 1e-9))


def diffuse(f: ScalarField, nu: float, dt: float) -> ScalarField:
    """Exact heat semigroup: mode ``k`` is multiplied by ``exp(-4 pi^2 nu |k|^2 dt)``."""
    if dt < 0 or nu < 0:
        raise ValueError("need dt >= 0 and nu >= 0")
    if nu == 0 or dt == 0:
        return f
    return ScalarField(f.grid, _diffuse_values(f.values, nu * dt))


def _diffuse_values(v: np.ndarray, nu_dt: float) -> np.ndarray:
    n = v.shape[0]
    full, half = wavenumbers(n)
    c = sfft.rfft2(v)
    c *= np.exp(-FOUR_PI2 * nu_dt * (full[:, None] ** 2 + half[None, :] ** 2))
    return sfft.irfft2(c, s=v.shape)


def _phase_factor(n: int, profile: ShearProfile, disp: float, conj: bool) -> np.ndarray:
    """Transport multiplier on the ``(k_along, cross)`` half layout."""
    _, half = wavenumbers(n)
    sign = 1.0 if conj else -1.0
    m = np.exp(sign * 1j * TWO_PI * disp * half[:, None] * profile.samples(n)[None, :])
    m[n // 2, :] = 1.0
    return m


def advect_shear(f: ScalarField, profile: ShearProfile, dt: float) -> ScalarField:
    """Exact transport by a stationary shear over time ``dt``."""
    if not isinstance(profile, ShearProfile):
        raise TypeError("advect_shear needs a ShearProfile; use advect_generic for sampled flows")
    if dt == 0 or profile.is_zero:
        return f
    v = f.values if profile.direction == "x" else f.values.T
    out = _transport_values(v, profile, dt, conj=False)
    return ScalarField(f.grid, out if profile.direction == "x" else out.T)


def _transport_values(v: np.ndarray, profile: ShearProfile, disp: float, conj: bool) -> np.ndarray:
    n = v.shape[0]
    g = sfft.rfft(v, axis=0)
    g *= _phase_factor(n, profile, disp, conj)
    return sfft.irfft(g, n=n, axis=0)


def _shear_segment(v: np.ndarray, profile: ShearProfile, nu: float, h: float,
                   disps: np.ndarray, splitting: str, adjoint: bool) -> np.ndarray:
    """Apply ``len(disps)`` split steps of an x-shear (transpose for y-shears).

    ``disps[i]`` is the displacement factor of step ``i`` in forward order.
    """
    n = v.shape[0]
    if adjoint:
        disps = disps[::-1]
    if nu == 0:
        return _transport_values(v, profile, float(np.sum(disps)), conj=adjoint)

    full, half = wavenumbers(n)
    ex = np.exp(-FOUR_PI2 * nu * h * half**2)[:, None]
    ey_full = np.exp(-FOUR_PI2 * nu * h * full**2)[None, :]
    ey_half = np.exp(-FOUR_PI2 * nu * 0.5 * h * full**2)[None, :]

    uniform = bool(np.all(disps == disps[0]))
    mult = _phase_factor(n, profile, float(disps[0]), adjoint) * ex if uniform else None

    def m(i):
        if uniform:
            return mult
        return _phase_factor(n, profile, float(disps[i]), adjoint) * ex

    g = sfft.rfft(v, axis=0)
    steps = len(disps)
    if splitting == "strang":
        hy = sfft.fft(g, axis=1)
        hy *= ey_half
        for i in range(steps):
            if i:
                hy *= ey_full
            g = sfft.ifft(hy, axis=1, overwrite_x=True)
            g *= m(i)
            hy = sfft.fft(g, axis=1, overwrite_x=True)
        hy *= ey_half
        g = sfft.ifft(hy, axis=1, overwrite_x=True)
    elif not adjoint:
        # Lie step: diffuse, then transport
        for i in range(steps):
            hy = sfft.fft(g, axis=1, overwrite_x=True)
            hy *= ey_full
            g = sfft.ifft(hy, axis=1, overwrite_x=True)
            g *= m(i)
    else:
        for i in range(steps):
            g *= m(i)
            hy = sfft.fft(g, axis=1, overwrite_x=True)
            hy *= ey_full
            g = sfft.ifft(hy, axis=1, overwrite_x=True)
    return sfft.irfft(g, n=n, axis=0)


# --- generic pseudo-spectral transport -------------------------------------

def _dealias_masks(n: int) -> tuple[np.ndarray, np.ndarray]:
    """``(band, active)``: the 2/3 band, and the band without the mean mode."""
    full, half = wavenumbers(n)
    cut = n / 3.0
    band = (np.abs(full)[:, None] < cut) & (half[None, :] < cut)
    active = band.copy()
    active[0, 0] = False
    return band, active


def _transport_rhs(c: np.ndarray, ux: np.ndarray, uy: np.ndarray, mask: np.ndarray, adjoint: bool) -> np.ndarray:
    """``-P(u . grad P theta)``, or its discrete adjoint ``P div(u P theta)``."""
    n = ux.shape[0]
    full, half = wavenumbers(n)
    kx = TWO_PI * full[:, None]
    ky = TWO_PI * half[None, :]
    c = c * mask
    if adjoint:
        th = sfft.irfft2(c, s=(n, n))
        out = 1j * kx * sfft.rfft2(ux * th) + 1j * ky * sfft.rfft2(uy * th)
    else:
        dx = sfft.irfft2(1j * kx * c, s=(n, n))
        dy = sfft.irfft2(1j * ky * c, s=(n, n))
        out = -sfft.rfft2(ux * dx + uy * dy)
    return out * mask


def generic_stability_bound(vel: SampledVelocity) -> float:
    """RK4 sub-step keeping the transport spectrum well inside the stability region.

    The imaginary-axis limit of RK4 is ``2 sqrt 2``; the discrete transport is
    not exactly skew, so a factor of about three is kept in reserve.
    """
    n = vel.ux.shape[0]
    kmax = TWO_PI * n / 3.0
    speed = float(np.abs(vel.ux).max() + np.abs(vel.uy).max())
    if speed == 0:
        return math.inf
    return 1.0 / (kmax * speed)


def _advect_generic_values(v: np.ndarray, vel: SampledVelocity, dt: float, adjoint: bool) -> np.ndarray:
    if dt == 0 or vel.is_zero:
        return v
    n = v.shape[0]
    bound = generic_stability_bound(vel)
    sub = max(1, math.ceil(dt / bound - 1e-9))
    h = dt / sub
    band, active = _dealias_masks(n)
    c = sfft.rfft2(v) * band
    for _ in range(sub):
        k1 = _transport_rhs(c, vel.ux, vel.uy, active, adjoint)
        k2 = _transport_rhs(c + 0.5 * h * k1, vel.ux, vel.uy, active, adjoint)
        k3 = _transport_rhs(c + 0.5 * h * k2, vel.ux, vel.uy, active, adjoint)
        k4 = _transport_rhs(c + h * k3, vel.ux, vel.uy, active, adjoint)
        new = c + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        a = np.linalg.norm(c)
        b = np.linalg.norm(new)
        if a > 0 and b > 1.01 * a:
            raise InstabilityError(
                f"transport sub-step grew the norm by {b / a - 1:.3g} (sub-step {h:.3g}, bound {bound:.3g})")
        c = new
    return sfft.irfft2(c, s=(n, n))


def advect_generic(f: ScalarField, flow, t: float, dt: float) -> ScalarField:
    """Pseudo-spectral transport (2/3 dealiasing, classical RK4 sub-steps).

    Modes outside the 2/3 band are dropped, the mean is kept.  Sub-steps are
    chosen below :func:`generic_stability_bound`.
    """
    from .flows import sample_velocity, velocity_at

    prof = velocity_at(flow, t)
    if isinstance(prof, ShearProfile):
        if prof.is_zero:
            return f
        prof = SampledVelocity(*sample_velocity(prof, f.grid))
    return ScalarField(f.grid, _advect_generic_values(f.values, prof, dt, adjoint=False))


def _generic_segment(v: np.ndarray, vel: SampledVelocity, nu: float, h: float, steps: int,
                     splitting: str, adjoint: bool) -> np.ndarray:
    def d(x, dur):
        return _diffuse_values(x, nu * dur) if nu > 0 else x

    if splitting == "strang":
        for _ in range(steps):
            v = d(v, 0.5 * h)
            v = _advect_generic_values(v, vel, h, adjoint)
            v = d(v, 0.5 * h)
    elif not adjoint:
        for _ in range(steps):
            v = _advect_generic_values(d(v, h), vel, h, adjoint)
    else:
        for _ in range(steps):
            v = d(_advect_generic_values(v, vel, h, adjoint), h)
    return v


# --- solution operator -------------------------------------------------------

def _segment_apply(v: np.ndarray, seg, flow, params: SolveParams, adjoint: bool) -> np.ndarray:
    dur = seg.end - seg.start
    prof = seg.profile
    if isinstance(prof, SampledVelocity):
        steps = step_count(dur, params.step)
        return _generic_segment(v, prof, params.nu, dur / steps, steps, params.splitting, adjoint)
    if prof.is_zero:
        return _diffuse_values(v, params.nu * dur) if params.nu > 0 else v
    steps = step_count(dur, params.step)
    disps = flow.transport_increments(seg, steps)
    if prof.direction == "x":
        return _shear_segment(v, prof, params.nu, dur / steps, disps, params.splitting, adjoint)
    return _shear_segment(v.T, prof, params.nu, dur / steps, disps, params.splitting, adjoint).T


def apply_phi_values(v: np.ndarray, flow, params: SolveParams, s: float, t: float,
                     adjoint: bool = False) -> np.ndarray:
    """Array-level solution operator (or its discrete adjoint)."""
    if t < s:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    segs = list(flow.segments(s, t))
    if adjoint:
        segs.reverse()
    for seg in segs:
        v = _segment_apply(v, seg, flow, params, adjoint)
    return v


def apply_phi(f: ScalarField, flow, params: SolveParams, s: float, t: float) -> ScalarField:
    """Evolve ``f`` from time ``s`` to ``t``."""
    return ScalarField(f.grid, apply_phi_values(f.values, flow, params, s, t))


def apply_phi_adjoint(f: ScalarField, flow, params: SolveParams, s: float, t: float) -> ScalarField:
    """Exact adjoint of :func:`apply_phi` in the grid L2 inner product."""
    return ScalarField(f.grid, apply_phi_values(f.values, flow, params, s, t, adjoint=True))
