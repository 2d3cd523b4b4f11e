"""Operator norms, dissipation times and mixing-rate fits."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .field import GridSpec, ScalarField, high_band_fraction, h1_norm, random_field, sobolev_norm
from .flows import FlowSpec, SyntheticTauModel
from .solver import FOUR_PI2, SolveParams, apply_phi, apply_phi_values

log = logging.getLogger(__name__)

HEAT_NU_TAU = math.log(2.0) / FOUR_PI2
POWER_ITERATION_CAP = 200
DEFAULT_SEED = 20240101


class HorizonExceeded(RuntimeError):
    def __init__(self, cap: float, s: float):
        super().__init__(f"norm still above 1/2 at horizon cap {cap:.6g} (start time {s:.6g})")
        self.cap = cap
        self.s = s


@dataclass
class NormEstimate:
    value: float
    iterations: int
    converged: bool
    vector: np.ndarray = field(repr=False)

    @property
    def lower_bound_only(self) -> bool:
        return not self.converged


def estimate_operator_norm(flow, params: SolveParams, s: float, t: float, grid: GridSpec,
                           tol: float = 1e-3, seed: int = DEFAULT_SEED,
                           start: Optional[np.ndarray] = None,
                           max_iter: int = POWER_ITERATION_CAP) -> NormEstimate:
    """Power iteration on ``Phi* Phi`` over mean-zero fields.

    Stops when the norm estimate moves by less than ``tol`` (relative) between
    iterations.  ``start`` warm-starts the iteration; otherwise a seeded
    white-noise field is used.
    """
    if not (0 < tol < 1):
        raise ValueError("tol must lie in (0, 1)")
    if t < s:
        raise ValueError("need s <= t")
    if start is None:
        v = random_field(grid, seed).values
    else:
        v = np.array(start, dtype=float)
        v -= v.mean()
        v /= np.sqrt(np.mean(v * v))
    if t == s:
        return NormEstimate(1.0, 0, True, v)

    prev = None
    sigma = 0.0
    for it in range(1, max_iter + 1):
        w = apply_phi_values(v, flow, params, s, t)
        sigma = float(np.sqrt(np.mean(w * w)))
        z = apply_phi_values(w, flow, params, s, t, adjoint=True)
        z -= z.mean()
        zn = float(np.sqrt(np.mean(z * z)))
        if zn == 0:
            return NormEstimate(0.0, it, True, v)
        v = z / zn
        if prev is not None and abs(sigma - prev) <= tol * sigma:
            # the sharper Rayleigh value sqrt(<v, Phi*Phi v>) for the new iterate is zn / sigma
            return NormEstimate(max(sigma, zn / sigma if sigma > 0 else 0.0), it, True, v)
        prev = sigma
    log.warning("power iteration hit the %d-iteration cap; %.6g is a lower bound", max_iter, sigma)
    return NormEstimate(sigma, max_iter, False, v)


def operator_norm(flow, params: SolveParams, s: float, t: float, tol: float = 1e-3, *,
                  grid: GridSpec, seed: int = DEFAULT_SEED) -> float:
    return estimate_operator_norm(flow, params, s, t, grid, tol=tol, seed=seed).value


def default_s_samples(flow: FlowSpec, count: int = 8) -> list[float]:
    """One period on a ``count``-point grid; ``[0]`` for autonomous flows."""
    period = flow.period
    if period is None:
        return [0.0]
    return [period * i / count for i in range(count)]


def heat_bound(nu: float) -> float:
    """``ln 2 / (4 pi^2 nu)``: every flow halves by then (Poincare)."""
    return HEAT_NU_TAU / nu


@dataclass
class TauMeasurement:
    tau: float
    per_start: list[tuple[float, float]]
    evaluations: int


def measure_dissipation_time(flow, nu: float, s_samples: Sequence[float], tol: float = 1e-3, *,
                             grid: GridSpec, step: float = 0.05, splitting: str = "strang",
                             seed: int = DEFAULT_SEED, horizon_cap: Optional[float] = None,
                             initial_guess: Optional[float] = None) -> TauMeasurement:
    """Worst case over ``s_samples`` of the first time the norm drops to 1/2.

    For each start ``s`` the crossing is bracketed by doubling from
    ``initial_guess`` and refined by bisection to relative width ``tol``;
    the upper end of the bracket is reported.
    """
    if not nu > 0:
        raise ValueError("nu must be positive")
    if not s_samples:
        raise ValueError("s_samples must be non-empty")
    params = SolveParams(nu, step, splitting)
    cap = horizon_cap if horizon_cap is not None else 1.05 * heat_bound(nu)
    guess = initial_guess
    if guess is None:
        period = getattr(flow, "period", None)
        guess = min(cap, 0.25 * (period if period else 1.0), 0.5 * heat_bound(nu))
    start = None
    per_start = []
    evals = 0

    def halved(s, dt):
        nonlocal start, evals
        est = estimate_operator_norm(flow, params, s, s + dt, grid, tol=tol, seed=seed, start=start)
        start = est.vector
        evals += 1
        return est.value <= 0.5

    for s in s_samples:
        lo, hi = 0.0, min(guess, cap)
        while not halved(s, hi):
            if hi >= cap:
                raise HorizonExceeded(cap, s)
            lo, hi = hi, min(2.0 * hi, cap)
        while hi - lo > tol * hi:
            mid = 0.5 * (lo + hi)
            if halved(s, mid):
                hi = mid
            else:
                lo = mid
        per_start.append((float(s), float(hi)))
        # the next start's crossing is usually close: bracket around this one
        guess = hi
    tau = max(d for _, d in per_start)
    return TauMeasurement(tau, per_start, evals)


def dissipation_time(flow, nu: float, s_samples: Sequence[float], tol: float = 1e-3, **kw) -> float:
    return measure_dissipation_time(flow, nu, s_samples, tol, **kw).tau


# --- tau tables -------------------------------------------------------------

TAU_HEADER = "nu,tau,tol,s_samples,resolution,flags"


def resolution_ok(n: int, nu: float) -> bool:
    """Rule of thumb for shear flows: ``n >= 4 nu^(-1/2)``."""
    return n >= 4.0 / math.sqrt(nu)


@dataclass(frozen=True)
class TauRow:
    nu: float
    tau: float
    tol: float
    s_samples: int
    resolution: int
    flags: str = ""


@dataclass
class ExtrapolationFit:
    model: SyntheticTauModel
    residual: float
    alternative: str
    alternative_residual: float
    points: int


def _fit_extrapolation(nus: np.ndarray, taus: np.ndarray) -> Optional[ExtrapolationFit]:
    """Least-squares logpower and powerlaw fits; logpower preferred.

    Only the shape exponent is kept from the fit: the model is later anchored
    to the last table row.
    """
    if len(nus) < 2:
        return None
    lt = np.log(taus)
    fits = {}
    for form, x in (("logpower", np.log(np.abs(np.log(nus)))), ("powerlaw", -np.log(nus))):
        A = np.vstack([np.ones_like(x), x]).T
        coef, *_ = np.linalg.lstsq(A, lt, rcond=None)
        slope = max(float(coef[1]), 0.0)
        if form == "powerlaw":
            slope = min(slope, 0.999)
        intercept = float(np.mean(lt - slope * x))
        res = float(np.sqrt(np.mean((lt - intercept - slope * x) ** 2)))
        fits[form] = (slope, math.exp(intercept), res)
    q, C, r_log = fits["logpower"]
    a, Cp, r_pow = fits["powerlaw"]
    if r_pow * 10.0 < r_log:
        return ExtrapolationFit(SyntheticTauModel("powerlaw", C=Cp, alpha=a), r_pow, "logpower", r_log, len(nus))
    return ExtrapolationFit(SyntheticTauModel("logpower", C=C, q=q), r_log, "powerlaw", r_pow, len(nus))


class TauTable:
    """Sampled dissipation-time curve with log-log interpolation.

    Below the smallest tabulated ``nu`` the fitted extrapolation model is used,
    rescaled to agree with the last row.  Above the largest ``nu`` the heat
    bound ``ln 2 / (4 pi^2 nu)`` is returned.
    """

    def __init__(self, rows: Sequence[TauRow]):
        rows = sorted(rows, key=lambda r: -r.nu)
        if not rows:
            raise ValueError("empty tau table")
        nus = [r.nu for r in rows]
        if any(b >= a for a, b in zip(nus, nus[1:])):
            raise ValueError("tau table needs distinct nu values")
        if any(not r.tau > 0 for r in rows):
            raise ValueError("tau values must be positive")
        self.rows = list(rows)
        self._nu = np.array(nus)
        self._tau = np.array([r.tau for r in rows])
        self._lnu = np.log(self._nu[::-1])
        self._ltau = np.log(self._tau[::-1])
        cut = self.nu_min * 10.0 * (1 + 1e-12)
        sel = self._nu <= cut
        self.fit = _fit_extrapolation(self._nu[sel], self._tau[sel])

    @property
    def nu_min(self) -> float:
        return float(self._nu[-1])

    @property
    def nu_max(self) -> float:
        return float(self._nu[0])

    @property
    def extrapolation_available(self) -> bool:
        return self.fit is not None

    def _extrapolate(self, nu):
        m = self.fit.model
        return self._tau[-1] * m.tau(nu) / m.tau(self.nu_min)

    def tau(self, nu):
        if isinstance(nu, (float, int)) and 0 < nu < self.nu_min and self.fit is not None:
            m = self.fit.model
            return float(self._tau[-1] * m.tau(float(nu)) / m.tau(self.nu_min))
        if isinstance(nu, (float, int)) and self.nu_min <= nu <= self.nu_max:
            # scalar fast path inside the table
            k = int(np.searchsorted(self._lnu, math.log(nu)))
            if self._nu[len(self._nu) - 1 - k] == nu:
                return float(self._tau[len(self._nu) - 1 - k])
            return float(math.exp(np.interp(math.log(nu), self._lnu, self._ltau)))
        nu_arr = np.asarray(nu, dtype=float)
        scalar = nu_arr.ndim == 0
        nu_arr = np.atleast_1d(nu_arr)
        if np.any(nu_arr <= 0):
            raise ValueError("nu must be positive")
        out = np.exp(np.interp(np.log(nu_arr), self._lnu, self._ltau))
        # exact hits return the stored row
        idx = np.searchsorted(-self._nu, -nu_arr)
        for i, (k, x) in enumerate(zip(idx, nu_arr)):
            if k < len(self._nu) and self._nu[k] == x:
                out[i] = self._tau[k]
        below = nu_arr < self.nu_min
        if np.any(below):
            if self.fit is None:
                raise ValueError(f"nu below table minimum {self.nu_min:.6g} and no extrapolation available")
            out[below] = self._extrapolate(nu_arr[below])
        above = nu_arr > self.nu_max
        out[above] = HEAT_NU_TAU / nu_arr[above]
        return float(out[0]) if scalar else out

    def critical_points(self) -> list[float]:
        pts = list(self._nu)
        if self.fit is not None:
            pts += [p for p in self.fit.model.critical_points() if p < self.nu_min]
        return pts

    def is_measured(self, nu: float) -> bool:
        return self.nu_min <= nu <= self.nu_max

    # persistence

    def to_csv(self, path: str | Path, comments: Sequence[str] = ()) -> None:
        Path(path).write_text(self.to_csv_text(comments))

    def to_csv_text(self, comments: Sequence[str] = ()) -> str:
        lines = [f"# {c}" for c in comments]
        lines.append(TAU_HEADER)
        for r in self.rows:
            lines.append(f"{r.nu:.17g},{r.tau:.17g},{r.tol:.17g},{r.s_samples},{r.resolution},{r.flags}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, path: str | Path) -> "TauTable":
        rows = []
        header_seen = False
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            if not header_seen:
                if line.strip() != TAU_HEADER:
                    raise ValueError(f"{path}:{lineno}: expected header {TAU_HEADER!r}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            try:
                rows.append(TauRow(float(parts[0]), float(parts[1]), float(parts[2]),
                                   int(parts[3]), int(parts[4]), parts[5]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
        return cls(rows)

    @classmethod
    def from_model(cls, model: SyntheticTauModel, nus: Sequence[float]) -> "TauTable":
        """Analytic table straight from a synthetic model (no PDE solve)."""
        return cls([TauRow(float(nu), float(model.tau(nu)), 0.0, 0, 0, "synthetic") for nu in nus])


def _tau_row(args) -> TauRow:
    flow, nu, grid, tol, s_samples, step, splitting, seed, cap = args
    flags = []
    if flow.kind != "zero" and not resolution_ok(grid.n, nu):
        flags.append("under_resolved")
    try:
        tau = dissipation_time(flow, nu, s_samples, tol, grid=grid, step=step, splitting=splitting,
                               seed=seed, horizon_cap=cap)
    except HorizonExceeded as exc:
        flags.append("horizon_cap")
        tau = exc.cap
    return TauRow(float(nu), float(tau), float(tol), len(s_samples), grid.n, "|".join(flags))


def build_tau_table(flow: FlowSpec, nus: Sequence[float], *, grid: GridSpec, tol: float = 1e-3,
                    s_samples: Optional[Sequence[float]] = None, step: float = 0.05,
                    splitting: str = "strang", seed: int = DEFAULT_SEED,
                    horizon_cap: Optional[float] = None, workers: int = 1) -> TauTable:
    """Measure ``tau(nu)`` for each ``nu`` (given in decreasing order)."""
    nus = [float(x) for x in nus]
    if not nus or any(x <= 0 for x in nus):
        raise ValueError("nus must be positive")
    if any(b >= a for a, b in zip(nus, nus[1:])):
        raise ValueError("nus must be strictly decreasing")
    if s_samples is None:
        s_samples = default_s_samples(flow)
    jobs = [(flow, nu, grid, tol, list(s_samples), step, splitting, seed, horizon_cap) for nu in nus]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_tau_row, jobs))
    else:
        rows = []
        for job in jobs:
            rows.append(_tau_row(job))
            log.info("tau(%g) = %.6g", rows[-1].nu, rows[-1].tau)
    return TauTable(rows)


# --- mixing -------------------------------------------------------------------

@dataclass
class MixingFit:
    """Fit of ``||theta(t)||_{H^-1} / ||theta_0||_{H^1} ~ exp(c - b t^p)``.

    ``K = max(exp(c), 1/b)`` makes ``K exp(-t^p / K)`` dominate the fitted
    curve, matching the single-constant form of the mixing estimate.
    """

    K: float
    p: float
    residual: float
    accepted: bool
    flags: list[str]
    times: np.ndarray = field(repr=False)
    ratios: np.ndarray = field(repr=False)
    rate: float = float("nan")
    intercept: float = float("nan")


def mixing_rate(flow: FlowSpec, theta0: ScalarField, horizon: float, *, samples: int = 41,
                step: float = 0.05, floor_fraction: float = 0.01,
                residual_tol: float = 0.1) -> MixingFit:
    """Track the H^-1 norm under pure transport and fit a stretched exponential.

    Sampling stops once more than ``floor_fraction`` of the energy sits in the
    outer third of the spectrum (resolution exhausted).
    """
    h1 = h1_norm(theta0)
    if not h1 > 0:
        raise ValueError("theta0 must be nonzero")
    params = SolveParams(0.0, step)
    times = np.linspace(0.0, horizon, samples)
    ratios = [sobolev_norm(theta0, -1) / h1]
    flags = []
    th = theta0
    kept = [0.0]
    for a, b in zip(times[:-1], times[1:]):
        th = apply_phi(th, flow, params, a, b)
        if high_band_fraction(th) > floor_fraction:
            flags.append("floor_reached")
            break
        kept.append(b)
        ratios.append(sobolev_norm(th, -1) / h1)
    t = np.array(kept)
    r = np.array(ratios)
    y = np.log(r)
    if len(t) < 4 or y[0] - y.min() < 0.05:
        flags.append("no_decay")
        return MixingFit(float(r[0]), float("nan"), float("nan"), False, flags, t, r)

    def resid(theta):
        c, lb, p = theta
        return c - np.exp(lb) * t**p - y

    slope = max((y[0] - y[-1]) / max(t[-1], 1e-12), 1e-3)
    sol = least_squares(resid, x0=[y[0], math.log(slope), 1.0],
                        bounds=([-np.inf, -30.0, 0.05], [np.inf, 30.0, 5.0]))
    c, lb, p = sol.x
    b = math.exp(lb)
    residual = float(np.sqrt(np.mean(sol.fun**2)))
    if residual > residual_tol:
        flags.append("poor_fit")
    K = max(math.exp(c), 1.0 / b)
    return MixingFit(K, float(p), residual, "poor_fit" not in flags, flags, t, r, rate=b, intercept=float(c))
