"""Incompressible flows on the torus and synthetic dissipation-time models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
import scipy.fft as sfft

from .field import TWO_PI, GridSpec, wavenumbers

FLOW_KINDS = ("zero", "static_shear", "alternating_shear", "generic_sampled")

# boundary snapping for floating time arithmetic
_TIME_EPS = 1e-12


@dataclass(frozen=True)
class ShearProfile:
    """Stationary shear ``mean + amplitude * sin(2 pi s + phase)``.

    ``direction='x'`` moves fluid along x with speed depending on y, i.e.
    ``u = (v(y), 0)``; ``'y'`` gives ``u = (0, w(x))``.  ``direction=None``
    is the zero flow.
    """

    direction: Optional[str]
    amplitude: float = 0.0
    phase: float = 0.0
    mean: float = 0.0

    def __post_init__(self):
        if self.direction not in (None, "x", "y"):
            raise ValueError(f"bad shear direction {self.direction!r}")

    @property
    def is_zero(self) -> bool:
        return self.direction is None or (self.amplitude == 0.0 and self.mean == 0.0)

    def samples(self, n: int) -> np.ndarray:
        """Speed sampled along the cross-stream coordinate."""
        s = np.arange(n) / n
        return self.mean + self.amplitude * np.sin(TWO_PI * s + self.phase)

    def sup(self) -> float:
        if self.is_zero:
            return 0.0
        return abs(self.mean) + abs(self.amplitude)


ZERO_PROFILE = ShearProfile(None)


@dataclass(frozen=True, eq=False)
class SampledVelocity:
    """Stationary velocity field given by grid samples ``(ux, uy)``."""

    ux: np.ndarray
    uy: np.ndarray

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.ux) or np.any(self.uy))

    def sup(self) -> float:
        return float(np.sqrt(self.ux**2 + self.uy**2).max())


@dataclass(frozen=True)
class Segment:
    start: float
    end: float
    profile: object  # ShearProfile or SampledVelocity


@dataclass(frozen=True, eq=False)
class FlowSpec:
    """Time-dependent divergence-free velocity field.

    ``alternating_shear`` runs x-shears on even phases and y-shears on odd
    phases, each lasting ``phase_duration``.  Phase offsets are drawn from
    ``seed`` (all zero when ``seed is None``) and repeat every ``cycle``
    phases, so the flow has period ``cycle * phase_duration``.
    """

    kind: str
    amplitude: float = 1.0
    phase_duration: float = 1.0
    seed: Optional[int] = None
    cycle: int = 2
    velocity: Optional[SampledVelocity] = None
    offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in FLOW_KINDS:
            raise ValueError(f"unknown flow kind {self.kind!r}; expected one of {FLOW_KINDS}")
        if self.kind != "zero" and self.kind != "generic_sampled" and not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        if self.kind == "alternating_shear":
            if not self.phase_duration > 0:
                raise ValueError("phase_duration must be positive")
            if self.cycle < 2 or self.cycle % 2:
                raise ValueError("cycle must be a positive even number of phases")
        if self.kind == "generic_sampled" and self.velocity is None:
            raise ValueError("generic_sampled flow needs a sampled velocity")
        if self.kind == "alternating_shear" and self.seed is not None:
            offs = np.random.default_rng(self.seed).uniform(0.0, TWO_PI, self.cycle)
        else:
            offs = np.zeros(max(self.cycle, 1))
        offs.setflags(write=False)
        object.__setattr__(self, "offsets", offs)

    @classmethod
    def zero(cls) -> "FlowSpec":
        return cls("zero")

    @classmethod
    def static_shear(cls, amplitude: float = 1.0) -> "FlowSpec":
        return cls("static_shear", amplitude=amplitude)

    @classmethod
    def alternating_shear(cls, amplitude: float = 1.0, phase_duration: float = 1.0,
                          seed: Optional[int] = None, cycle: int = 2) -> "FlowSpec":
        return cls("alternating_shear", amplitude=amplitude, phase_duration=phase_duration,
                   seed=seed, cycle=cycle)

    @classmethod
    def from_streamfunction(cls, grid: GridSpec, psi: np.ndarray) -> "FlowSpec":
        """Sampled flow ``u = (d_y psi, -d_x psi)`` with spectral derivatives."""
        full, _ = wavenumbers(grid.n)
        c = sfft.fft2(psi)
        c[grid.n // 2, :] = 0.0
        c[:, grid.n // 2] = 0.0
        ux = sfft.ifft2(1j * TWO_PI * full[None, :] * c).real
        uy = sfft.ifft2(-1j * TWO_PI * full[:, None] * c).real
        return cls("generic_sampled", velocity=SampledVelocity(ux, uy))

    @property
    def period(self) -> Optional[float]:
        """Temporal period, or ``None`` for autonomous flows."""
        if self.kind == "alternating_shear":
            return self.cycle * self.phase_duration
        return None

    def phase_index(self, t: float) -> int:
        k = math.floor(t / self.phase_duration)
        if (k + 1) * self.phase_duration - t <= _TIME_EPS * max(1.0, abs(t)):
            k += 1
        return k

    def profile(self, phase: int) -> ShearProfile:
        direction = "x" if phase % 2 == 0 else "y"
        return ShearProfile(direction, self.amplitude, float(self.offsets[phase % self.cycle]))

    def segments(self, s: float, t: float) -> Iterator[Segment]:
        """Split ``[s, t]`` into pieces with a single stationary profile."""
        if t < s:
            raise ValueError(f"need s <= t, got s={s}, t={t}")
        if t == s:
            return
        if self.kind == "zero":
            yield Segment(s, t, ZERO_PROFILE)
        elif self.kind == "static_shear":
            yield Segment(s, t, ShearProfile("x", self.amplitude))
        elif self.kind == "generic_sampled":
            yield Segment(s, t, self.velocity)
        else:
            a = s
            k = self.phase_index(s)
            while a < t:
                b = min(t, (k + 1) * self.phase_duration)
                if b - a > _TIME_EPS * max(1.0, abs(b)) or b == t:
                    yield Segment(a, b, self.profile(k))
                a = b
                k += 1

    def transport_increments(self, seg: Segment, steps: int) -> np.ndarray:
        """Time-integrated speed factor for each of ``steps`` equal sub-steps."""
        return np.full(steps, (seg.end - seg.start) / steps)


def velocity_at(flow: FlowSpec, t: float):
    """Active profile at time ``t`` (a :class:`ShearProfile` for shears)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if flow.kind == "zero":
        return ZERO_PROFILE
    if flow.kind == "static_shear":
        return ShearProfile("x", flow.amplitude)
    if flow.kind == "generic_sampled":
        return flow.velocity
    return flow.profile(flow.phase_index(t))


def sup_norm(flow: FlowSpec) -> float:
    """Supremum of ``|u|`` over space and time."""
    if flow.kind == "zero":
        return 0.0
    if flow.kind == "generic_sampled":
        return flow.velocity.sup()
    return float(flow.amplitude)


def sample_velocity(profile, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Grid samples ``(ux, uy)`` of a profile."""
    if isinstance(profile, SampledVelocity):
        return profile.ux, profile.uy
    zeros = np.zeros(grid.shape)
    if profile.is_zero:
        return zeros, zeros
    v = profile.samples(grid.n)
    if profile.direction == "x":
        return np.broadcast_to(v[None, :], grid.shape).copy(), zeros
    return zeros, np.broadcast_to(v[:, None], grid.shape).copy()


def spectral_divergence(ux: np.ndarray, uy: np.ndarray) -> float:
    """Max modulus of the spectral divergence coefficients."""
    n = ux.shape[0]
    full, _ = wavenumbers(n)
    div = 1j * TWO_PI * (full[:, None] * sfft.fft2(ux) + full[None, :] * sfft.fft2(uy)) / n**2
    return float(np.abs(div).max())


TAU_FORMS = ("constant", "logpower", "powerlaw")


@dataclass(frozen=True)
class SyntheticTauModel:
    """Closed-form dissipation-time curve.

    * ``constant``: ``tau = C``
    * ``logpower``: ``tau = C |log nu|^q``
    * ``powerlaw``: ``tau = C nu^(-alpha)`` with ``0 <= alpha < 1``
    """

    form: str
    C: float = 1.0
    q: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if self.form not in TAU_FORMS:
            raise ValueError(f"unknown tau model form {self.form!r}")
        if not self.C > 0:
            raise ValueError("C must be positive")
        if self.form == "logpower" and self.q < 0:
            raise ValueError("q must be nonnegative")
        if self.form == "powerlaw" and not 0 <= self.alpha < 1:
            raise ValueError("powerlaw needs 0 <= alpha < 1")

    @property
    def nu_max(self) -> float:
        """Upper end of the domain on which the model is positive and nonincreasing."""
        return 1.0 if self.form == "logpower" else math.inf

    def tau(self, nu):
        if isinstance(nu, float):
            if not nu > 0:
                raise ValueError("nu must be positive")
            if self.form == "constant":
                return self.C
            if self.form == "logpower":
                return self.C * abs(math.log(nu)) ** self.q
            return self.C * nu ** (-self.alpha)
        nu = np.asarray(nu, dtype=float)
        if np.any(nu <= 0):
            raise ValueError("nu must be positive")
        if self.form == "constant":
            out = np.full_like(nu, self.C)
        elif self.form == "logpower":
            out = self.C * np.abs(np.log(nu)) ** self.q
        else:
            out = self.C * nu ** (-self.alpha)
        return out if out.ndim else float(out)

    def critical_points(self) -> list[float]:
        """Points where ``nu * tau(nu)`` changes monotonicity."""
        if self.form == "logpower" and self.q > 0:
            return [math.exp(-self.q)]
        return []

    def describe(self) -> str:
        if self.form == "constant":
            return f"constant:{self.C!r}"
        if self.form == "logpower":
            return f"logpower:{self.C!r},{self.q!r}"
        return f"powerlaw:{self.C!r},{self.alpha!r}"

    @classmethod
    def parse(cls, text: str) -> "SyntheticTauModel":
        """Parse ``constant:C``, ``logpower:C,q`` or ``powerlaw:C,alpha``."""
        form, _, rest = text.strip().partition(":")
        form = form.strip()
        args = [float(a) for a in rest.split(",") if a.strip()]
        if form == "constant" and len(args) == 1:
            return cls("constant", C=args[0])
        if form == "logpower" and len(args) == 2:
            return cls("logpower", C=args[0], q=args[1])
        if form == "powerlaw" and len(args) == 2:
            return cls("powerlaw", C=args[0], alpha=args[1])
        raise ValueError(f"cannot parse tau model {text!r}")
