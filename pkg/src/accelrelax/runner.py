"""Accelerated dynamics through the change of variables ``s = sigma(t)``.

On dyadic stage ``j`` the piecewise-linear time change has slope
``m_j = 2^j dT_j``, so the accelerated equation with diffusivity ``nu`` is the
original one on ``[T_{j-1}, T_j]`` with diffusivity ``nu / m_j``.  Runs are
carried out in source time; :class:`AcceleratedFlow` integrates the
accelerated equation directly and is only used to check the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dissipation import DEFAULT_SEED, estimate_operator_norm, resolution_ok
from .field import GridSpec, ScalarField, h1_norm, l2_norm
from .flows import FlowSpec, SampledVelocity, Segment
from .schedule import Envelope, Schedule, dyadic, sigma_eval
from .solver import SolveParams, apply_phi_values

HALF_TOLERANCE = 0.02
DEFAULT_TARGET = 2.0**-4
VERDICTS = ("PASS", "FAIL", "INCONCLUSIVE", "TRIVIAL")
REPORT_HEADER = "stage,effective_nu,half_ratio,full_ratio,expected,observed,cumulative,half_opnorm,resolved,flags"


@dataclass(frozen=True)
class StagePlan:
    j: int
    source_interval: tuple[float, float]
    midpoint: float
    effective_nu: float
    halving_expected: bool
    resolved: bool = True
    extrapolated: bool = False
    partial: bool = False


def effective_nu(sched: Schedule, nu: float, j: int) -> float:
    return 2.0 ** (-j) * nu / sched.delta_T(j)


def _needs_resolution(flow) -> bool:
    return getattr(flow, "kind", None) != "zero"


def plan_stages(sched: Schedule, env: Envelope, nu: float, J_run: int,
                n: Optional[int] = None, flow=None) -> list[StagePlan]:
    """Per-stage diffusivities and the envelope's prediction of halving.

    ``n`` enables the resolution check (skipped for the zero flow).
    """
    if not nu > 0:
        raise ValueError("nu must be positive")
    if not 0 <= J_run <= sched.J_max:
        raise ValueError(f"J_run = {J_run} outside [0, {sched.J_max}]")
    plans = []
    for j in range(1, J_run + 1):
        eff = effective_nu(sched, nu, j)
        dT = sched.delta_T(j)
        expected = bool(float(env.tau(eff)) <= 0.5 * dT)
        resolved = True
        if n is not None and (flow is None or _needs_resolution(flow)):
            resolved = resolution_ok(n, eff)
        T0, T1 = float(sched.T[j - 1]), float(sched.T[j])
        plans.append(StagePlan(j, (T0, T1), 0.5 * (T0 + T1), eff, expected, resolved,
                               env.is_extrapolated(eff)))
    return plans


def run_stage(f: ScalarField, plan: StagePlan, flow, params: SolveParams) -> tuple[ScalarField, ScalarField]:
    """Evolve with the original flow at ``plan.effective_nu``.

    Returns the field at the stage midpoint and at the stage end.  For a
    partial stage starting past the midpoint the first checkpoint is the
    input itself.
    """
    p = params.with_nu(plan.effective_nu)
    s0, s1 = plan.source_interval
    mid = max(plan.midpoint, s0)
    v = f.values
    half = apply_phi_values(v, flow, p, s0, mid) if mid > s0 else v
    full = apply_phi_values(half, flow, p, mid, s1)
    return ScalarField(f.grid, half), ScalarField(f.grid, full)


class AcceleratedFlow:
    """The flow ``sigma'(t) u(sigma(t), x)`` in accelerated time.

    Segments are cut at dyadic points and at the preimages of the base flow's
    phase boundaries, so each one carries a single stationary profile.  The
    per-step transport factor is the increment of ``sigma`` over the step.
    """

    kind = "accelerated"

    def __init__(self, base: FlowSpec, schedule: Schedule):
        self.base = base
        self.schedule = schedule

    @property
    def period(self):
        return None

    def segments(self, a: float, b: float):
        if b < a:
            raise ValueError("need a <= b")
        sched = self.schedule
        t = a
        while t < b:
            j = sched.stage_of(t)
            if t >= dyadic(j):
                break
            end = min(b, dyadic(j))
            for seg in self.base.segments(sched.sigma(t)[0], sched.sigma(end)[0]):
                lo = t if seg.start <= sched.sigma(t)[0] else sched.sigma_inverse(seg.start)
                hi = end if seg.end >= sched.sigma(end)[0] else sched.sigma_inverse(seg.end)
                if hi <= lo:
                    continue
                prof = seg.profile
                if isinstance(prof, SampledVelocity):
                    if sched.mode != "piecewise_linear":
                        raise TypeError("sampled flows are only accelerated with a piecewise-linear schedule")
                    m = sched.slope(j)
                    prof = SampledVelocity(prof.ux * m, prof.uy * m)
                yield Segment(lo, hi, prof)
            t = end

    def transport_increments(self, seg: Segment, steps: int) -> np.ndarray:
        sched = self.schedule
        s0, s1 = sched.sigma(seg.start)[0], sched.sigma(seg.end)[0]
        if sched.mode == "piecewise_linear":
            return np.full(steps, (s1 - s0) / steps)
        pts = np.linspace(seg.start, seg.end, steps + 1)
        sig = np.array([s0] + [sched.sigma(x)[0] for x in pts[1:-1]] + [s1])
        return np.diff(sig)


def accelerated_stage(f: ScalarField, sched: Schedule, flow: FlowSpec, nu: float, j: int,
                      params: SolveParams) -> tuple[ScalarField, ScalarField]:
    """Integrate the accelerated equation over dyadic stage ``j`` directly.

    Time steps are ``params.step / m_j`` so that, in piecewise-linear mode,
    each step maps onto a source-time step of the same length as in
    :func:`run_stage`.
    """
    m = sched.slope(j)
    acc = AcceleratedFlow(flow, sched)
    p = SolveParams(nu, params.step / m, params.splitting)
    t0, t1 = dyadic(j - 1), dyadic(j)
    tm = t0 + 2.0 ** (-(j + 1))
    half = apply_phi_values(f.values, acc, p, t0, tm)
    full = apply_phi_values(half, acc, p, tm, t1)
    return ScalarField(f.grid, half), ScalarField(f.grid, full)


# --- verification ------------------------------------------------------------

@dataclass
class StageResult:
    j: int
    effective_nu: float
    half_ratio: float
    full_ratio: float
    expected: bool
    observed: Optional[bool]
    cumulative: float
    half_opnorm: Optional[float]
    resolved: bool
    flags: str = ""


@dataclass
class RunReport:
    nu: float
    l2_initial: float
    h1_initial: float
    s_start: float = 0.0
    stages: list[StageResult] = field(default_factory=list)
    verdict: str = "PASS"
    reason: str = ""
    target_ratio: float = DEFAULT_TARGET
    tolerance: float = HALF_TOLERANCE

    @property
    def cumulative(self) -> float:
        c = 1.0
        for r in self.stages:
            c *= r.full_ratio
        return c

    @property
    def halvings(self) -> int:
        """Stages with halving expected and confirmed by the operator norm."""
        return sum(1 for r in self.stages if r.expected and r.observed)

    def to_csv_text(self, comments: Sequence[str] = ()) -> str:
        lines = [f"# {c}" for c in comments]
        lines.append(f"# nu={self.nu:.17g} s_start={self.s_start:.17g} l2_initial={self.l2_initial:.17g} "
                     f"h1_initial={self.h1_initial:.17g} half_threshold={0.5 + self.tolerance:.17g} "
                     f"target_ratio={self.target_ratio:.17g}")
        lines.append(REPORT_HEADER)
        for r in self.stages:
            obs = "" if r.observed is None else str(int(r.observed))
            op = "" if r.half_opnorm is None else f"{r.half_opnorm:.17g}"
            lines.append(f"{r.j},{r.effective_nu:.17g},{r.half_ratio:.17g},{r.full_ratio:.17g},"
                         f"{int(r.expected)},{obs},{r.cumulative:.17g},{op},{int(r.resolved)},{r.flags}")
        lines.append(f"# verdict={self.verdict} cumulative={self.cumulative:.17g} halvings={self.halvings}"
                     + (f" reason={self.reason}" if self.reason else ""))
        return "\n".join(lines) + "\n"


def _run(theta0: ScalarField, plans: list[StagePlan], flow, nu: float, params: SolveParams,
         target_ratio: float, enforce_resolution: bool, opnorm_tol: float, seed: int,
         s_start: float) -> RunReport:
    l2 = l2_norm(theta0)
    report = RunReport(nu, l2, h1_norm(theta0), s_start, target_ratio=target_ratio)
    if l2 == 0:
        report.verdict = "TRIVIAL"
        report.reason = "zero initial field"
        return report
    f = theta0
    cum = 1.0
    failures = []
    start = None
    for plan in plans:
        if enforce_resolution and not plan.resolved:
            report.verdict = "INCONCLUSIVE"
            report.reason = (f"stage {plan.j} under-resolved: effective_nu={plan.effective_nu:.6g} "
                             f"needs n >= {4.0 / math.sqrt(plan.effective_nu):.0f}")
            return report
        n0 = l2_norm(f)
        half, full = run_stage(f, plan, flow, params)
        hr = l2_norm(half) / n0 if n0 > 0 else 0.0
        fr = l2_norm(full) / n0 if n0 > 0 else 0.0
        cum *= fr
        flags = []
        if plan.partial:
            flags.append("partial")
        if plan.extrapolated:
            flags.append("extrapolated")
        if not plan.resolved:
            flags.append("under_resolved")
        op = None
        observed = None
        if plan.halving_expected and not plan.partial:
            est = estimate_operator_norm(flow, params.with_nu(plan.effective_nu), plan.source_interval[0],
                                         plan.midpoint, f.grid, tol=opnorm_tol, seed=seed, start=start)
            start = est.vector
            op = est.value
            observed = op <= 0.5 + HALF_TOLERANCE
            if not est.converged:
                flags.append("opnorm_lower_bound")
            if not observed:
                failures.append(plan.j)
        report.stages.append(StageResult(plan.j, plan.effective_nu, hr, fr, plan.halving_expected and not plan.partial,
                                         observed, cum, op, plan.resolved, "|".join(flags)))
        f = full
    reasons = []
    if failures:
        reasons.append("half-stage operator norm above threshold at stages " + " ".join(map(str, failures)))
    if cum > target_ratio:
        reasons.append(f"cumulative ratio {cum:.6g} above target {target_ratio:.6g}")
    if reasons:
        report.verdict = "FAIL"
        report.reason = "; ".join(reasons)
    return report


def verify_total_dissipation(theta0: ScalarField, sched: Schedule, env: Envelope, flow, nu: float,
                             J_run: int, target_ratio: float = DEFAULT_TARGET, *,
                             params: Optional[SolveParams] = None, enforce_resolution: bool = True,
                             opnorm_tol: float = 1e-3, seed: int = DEFAULT_SEED) -> RunReport:
    """Run stages ``1..J_run`` from accelerated time 0 and judge the decay.

    PASS needs every stage with halving expected to have a half-stage
    operator norm at most ``1/2 + 0.02`` and the cumulative ratio at most
    ``target_ratio``.  An under-resolved stage stops the run as INCONCLUSIVE.
    """
    return arbitrary_start_check(theta0, sched, env, flow, nu, 0.0, J_run, target_ratio, params=params,
                                 enforce_resolution=enforce_resolution, opnorm_tol=opnorm_tol, seed=seed)


def arbitrary_start_check(theta0: ScalarField, sched: Schedule, env: Envelope, flow, nu: float,
                          s_start: float, J_run: Optional[int] = None, target_ratio: float = DEFAULT_TARGET, *,
                          params: Optional[SolveParams] = None, enforce_resolution: bool = True,
                          opnorm_tol: float = 1e-3, seed: int = DEFAULT_SEED) -> RunReport:
    """As :func:`verify_total_dissipation`, entering at accelerated time ``s_start``.

    The stage containing ``s_start`` is run from source time
    ``sigma(s_start)``; it counts toward the cumulative ratio but not as a
    halving stage unless ``s_start`` is its left end.
    """
    if not 0 <= s_start < 1:
        raise ValueError("s_start must lie in [0, 1)")
    J_run = sched.J_max if J_run is None else J_run
    if s_start >= sched.horizon:
        raise ValueError(f"s_start = {s_start!r} is beyond the built horizon {sched.horizon!r}")
    params = params or SolveParams(nu)
    n = theta0.grid.n
    plans = plan_stages(sched, env, nu, J_run, n=n, flow=flow)
    j0 = sched.stage_of(s_start)
    src, _, _ = sigma_eval(sched, s_start)
    out = []
    for p in plans:
        if p.j < j0:
            continue
        if p.j == j0 and s_start > dyadic(j0 - 1):
            p = StagePlan(p.j, (src, p.source_interval[1]), p.midpoint, p.effective_nu, p.halving_expected,
                          p.resolved, p.extrapolated, partial=True)
        out.append(p)
    return _run(theta0, out, flow, nu, params, target_ratio, enforce_resolution, opnorm_tol, seed, s_start)


def choose_j_run(sched: Schedule, env: Envelope, nu: float, n: int, flow=None,
                 needed: int = 4, s_start: float = 0.0) -> int:
    """Smallest ``J`` giving ``needed`` halving-expected resolved stages after ``s_start``.

    Falls back to the full schedule when that many do not exist.
    """
    plans = plan_stages(sched, env, nu, sched.J_max, n=n, flow=flow)
    j0 = sched.stage_of(s_start) if s_start > 0 else 1
    count = 0
    for p in plans:
        first_partial = p.j == j0 and s_start > dyadic(j0 - 1)
        if p.j >= j0 and p.halving_expected and p.resolved and not first_partial:
            count += 1
            if count >= needed:
                return p.j
    return sched.J_max
