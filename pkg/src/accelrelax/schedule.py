"""Envelope ``f``, stage times ``T_j`` and the time change ``sigma``.

``f(a) = sup_{b <= a} b tau(b)`` is cached as a running maximum on a log
grid that contains every point where ``b tau(b)`` can change monotonicity,
so between grid points the sup is attained at an endpoint and the cache is
exact.

Stage ``j`` covers ``[1 - 2^-(j-1), 1 - 2^-j]`` in accelerated time and
``[T_{j-1}, T_j]`` in source time, with
``T_j - T_{j-1} = 2^-j j / f^-1(2^-(j+1) / j)``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .dissipation import TauTable
from .flows import SyntheticTauModel

MODES = ("piecewise_linear", "smoothed")


class EnvelopeFloorError(ValueError):
    def __init__(self, floor: float, what: str):
        super().__init__(f"{what} lies below the envelope floor a = {floor:.6g}")
        self.floor = floor


class EnvelopeRangeError(ValueError):
    pass


class HorizonError(ValueError):
    pass


def source_hash(source: Union[TauTable, SyntheticTauModel]) -> str:
    text = source.to_csv_text() if isinstance(source, TauTable) else source.describe()
    return hashlib.sha256(text.encode()).hexdigest()[:16]


class Envelope:
    """Monotone majorant ``f`` of ``a -> a tau(a)`` on ``[floor, top]``."""

    def __init__(self, source: Union[TauTable, SyntheticTauModel], floor: Optional[float] = None,
                 top: Optional[float] = None, per_decade: int = 64):
        self.source = source
        if isinstance(source, TauTable):
            floor = 1e-12 if floor is None else floor
            top = source.nu_max if top is None else top
            self.measured_min = source.nu_min
        else:
            floor = 1e-150 if floor is None else floor
            top = min(source.nu_max, 1.0) if top is None else top
            self.measured_min = 0.0
        if not 0 < floor < top:
            raise ValueError("need 0 < floor < top")
        self.floor = float(floor)
        self.top = float(top)
        count = max(2, int(math.ceil(math.log10(top / floor) * per_decade)) + 1)
        pts = np.geomspace(floor, top, count)
        extra = [p for p in source.critical_points() if floor < p < top]
        self.grid = np.unique(np.concatenate([pts, extra]))
        self.grid[0], self.grid[-1] = self.floor, self.top
        vals = self.grid * np.asarray(self.tau(self.grid))
        self.cache = np.maximum.accumulate(vals)
        self._saturation = None

    def tau(self, a):
        return self.source.tau(a)

    @property
    def f_max(self) -> float:
        return float(self.cache[-1])

    def is_extrapolated(self, a: float) -> bool:
        # rounding slack: a = nu_min computed through a stage formula is not extrapolation
        return a < self.measured_min * (1.0 - 1e-9)

    def __call__(self, a: float) -> float:
        return envelope_eval(self, a)

    def saturation_point(self) -> float:
        """Least ``a`` with ``f(a) = f_max`` (to rounding: flat stretches of
        ``a tau(a)`` carry interpolation noise)."""
        if self._saturation is None:
            self._saturation = envelope_invert(self, self.f_max * (1.0 - 1e-12))
        return self._saturation


def envelope_eval(env: Envelope, a: float) -> float:
    if a < env.floor:
        raise EnvelopeFloorError(env.floor, f"a = {a:.6g}")
    if a > env.top:
        raise EnvelopeRangeError(f"a = {a:.6g} exceeds the envelope domain top {env.top:.6g}")
    i = int(np.searchsorted(env.grid, a, side="right")) - 1
    if env.grid[i] == a:
        return float(env.cache[i])
    return float(max(env.cache[i], a * float(env.tau(a))))


def envelope_invert(env: Envelope, y: float, clamp: bool = False, rtol: float = 1e-12) -> float:
    """Least ``a`` with ``f(a) >= y``.

    Above the range of ``f`` this raises, unless ``clamp`` is set, in which
    case the saturation point of ``f`` is returned.
    """
    if y > env.f_max:
        if clamp:
            return env.saturation_point()
        raise EnvelopeRangeError(f"y = {y:.6g} exceeds the envelope maximum {env.f_max:.6g}")
    if y < env.cache[0]:
        raise EnvelopeFloorError(env.floor, f"f^-1({y:.6g})")
    i = int(np.searchsorted(env.cache, y, side="left"))
    if i == 0:
        return env.floor
    lo, hi = float(env.grid[i - 1]), float(env.grid[i])

    def g(a):
        return a * float(env.tau(a)) - y

    # f < y at lo; on (lo, hi] f(a) >= y iff a tau(a) >= y.  Bisect in log a to
    # a modest bracket, then let brentq finish (exact for linear pieces).
    while hi > 2.0 * lo:
        mid = math.sqrt(lo * hi)
        if g(mid) >= 0:
            hi = mid
        else:
            lo = mid
    if g(hi) > 0 and g(lo) < 0:
        a = brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200)
    else:
        a = hi
    # step onto the least float satisfying the inequality
    for _ in range(8):
        if g(a) >= 0:
            break
        a = np.nextafter(a, np.inf)
    for _ in range(8):
        b = np.nextafter(a, 0.0)
        if b <= lo or g(b) < 0:
            break
        a = b
    return float(a)


# --- smoothing profile -------------------------------------------------------

def _psi(x: float) -> float:
    return math.exp(-1.0 / x) if x > 0 else 0.0


def _smooth_step(x: float) -> float:
    if x <= 0:
        return 0.0
    if x >= 1:
        return 1.0
    a, b = _psi(x), _psi(1.0 - x)
    return a / (a + b)


def _bump(x: float) -> float:
    if x <= 0 or x >= 1:
        return 0.0
    z = 2.0 * x - 1.0
    return math.exp(1.0 - 1.0 / (1.0 - z * z))


@lru_cache(maxsize=None)
def _bump_integral() -> float:
    return quad(_bump, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


def _step_antiderivative(z: float) -> float:
    if z <= 0:
        return 0.0
    if z >= 1:
        return 0.5 + (z - 1.0)
    return quad(_smooth_step, 0.0, z, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


def _bump_antiderivative(z: float) -> float:
    if z <= 0:
        return 0.0
    if z >= 1:
        return _bump_integral()
    return quad(_bump, 0.0, z, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


# --- schedule ----------------------------------------------------------------

@dataclass(frozen=True)
class Stage:
    j: int
    T: float
    delta_T: float
    slope: float
    a: float
    target: float
    flag: str = ""


def dyadic(j: int) -> float:
    """Left end of accelerated-time stage ``j + 1``: ``1 - 2^-j``."""
    return 1.0 - 2.0 ** (-j)


@dataclass
class Schedule:
    stages: list[Stage]
    mode: str = "piecewise_linear"
    requested: int = 0
    source_hash: str = ""
    notice: str = ""
    _blend: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        T = [0.0] + [s.T for s in self.stages]
        if any(b <= a for a, b in zip(T, T[1:])):
            raise ValueError("stage times must be strictly increasing")
        self.T = np.array(T)

    @property
    def J_max(self) -> int:
        return len(self.stages)

    @property
    def horizon(self) -> float:
        return dyadic(self.J_max)

    def slope(self, j: int) -> float:
        return self.stages[j - 1].slope

    def delta_T(self, j: int) -> float:
        return self.stages[j - 1].delta_T

    def with_mode(self, mode: str) -> "Schedule":
        return Schedule(list(self.stages), mode, self.requested, self.source_hash, self.notice)

    def stage_of(self, t: float) -> int:
        """Stage ``j`` with ``1 - 2^-(j-1) <= t < 1 - 2^-j`` (clamped to ``J_max``)."""
        if t < 0:
            raise HorizonError("t must be nonnegative")
        if self.J_max == 0:
            if t == 0:
                return 0
            raise HorizonError("empty schedule: sigma is only defined at t = 0")
        if t > self.horizon:
            raise HorizonError(f"t = {t!r} is beyond the built horizon 1 - 2^-{self.J_max} = {self.horizon!r}")
        j = 1 if t <= 0 else int(math.floor(-math.log2(1.0 - t))) + 1
        while j > 1 and t < dyadic(j - 1):
            j -= 1
        while t >= dyadic(j):
            j += 1
        return min(j, self.J_max)

    def blend(self, j: int) -> tuple[float, float]:
        """``(w, D)`` of the second-half blend on stage ``j``."""
        if j not in self._blend:
            mj, mk = self.slope(j), self.slope(j + 1)
            ib = _bump_integral()
            r = mk / mj
            w = min(0.5, ib / (abs(r - 1.0) + ib))
            D = (mk - mj) * (0.5 * w) / ((1.0 - w) * ib)
            self._blend[j] = (w, D)
        return self._blend[j]

    def sigma(self, t: float) -> tuple[float, float, int]:
        return sigma_eval(self, t)

    def sigma_inverse(self, s: float) -> float:
        """Accelerated time at which ``sigma`` reaches source time ``s``."""
        if s < 0 or s > self.T[-1]:
            raise HorizonError(f"source time {s!r} outside [0, {self.T[-1]!r}]")
        if s == self.T[-1]:
            return self.horizon
        j = int(np.searchsorted(self.T, s, side="right"))
        j = max(1, min(j, self.J_max))
        t0 = dyadic(j - 1)
        m = self.slope(j)
        half = 2.0 ** (-(j + 1))
        if s == self.T[j - 1]:
            return t0
        if self.mode == "piecewise_linear" or j == self.J_max or s <= self.T[j - 1] + m * half:
            return min(t0 + (s - self.T[j - 1]) / m, dyadic(j))
        return brentq(lambda x: sigma_eval(self, x)[0] - s, t0 + half, dyadic(j), xtol=1e-15, rtol=1e-15)


def build_stages(env: Envelope, J_max: int, mode: str = "piecewise_linear") -> Schedule:
    """Stage times from the envelope.

    Stages whose target ``2^-(j+1)/j`` exceeds ``max f`` have no solution of
    the stage equation; they are built from the saturation point of ``f``
    (``f(a_j) <= target`` still holds, which is all the halving argument
    needs) and flagged ``saturated``.  Reaching the envelope floor truncates
    the schedule.
    """
    if J_max < 0:
        raise ValueError("J_max must be nonnegative")
    stages = []
    T = 0.0
    notice = ""
    for j in range(1, J_max + 1):
        y = 2.0 ** (-(j + 1)) / j
        flag = ""
        try:
            if y > env.f_max:
                a = env.saturation_point()
                flag = "saturated"
            else:
                a = envelope_invert(env, y)
        except EnvelopeFloorError as exc:
            notice = f"envelope floor {exc.floor:.6g} reached at stage {j}; schedule truncated at J = {j - 1}"
            break
        if not flag and env.is_extrapolated(a):
            flag = "extrapolated"
        dT = 2.0 ** (-j) * j / a
        T = T + dT
        stages.append(Stage(j, T, dT, 2.0**j * dT, a, y, flag))
    return Schedule(stages, mode, J_max, source_hash(env.source), notice)


def sigma_eval(sched: Schedule, t: float) -> tuple[float, float, int]:
    """``(sigma(t), sigma'(t), stage)``."""
    j = sched.stage_of(t)
    if j == 0:
        return 0.0, 0.0, 0
    t0 = dyadic(j - 1)
    if t == dyadic(j):
        return float(sched.T[j]), sched.slope(j), j
    m = sched.slope(j)
    T0 = float(sched.T[j - 1])
    half = 2.0 ** (-(j + 1))
    if sched.mode == "piecewise_linear" or j == sched.J_max or t <= t0 + half:
        return T0 + m * (t - t0), m, j
    mk = sched.slope(j + 1)
    w, D = sched.blend(j)
    c = t0 + half
    u = (t - c) / half
    zs = (u - (1.0 - w)) / w
    zb = u / (1.0 - w)
    sp = m + (mk - m) * _smooth_step(zs) - D * _bump(zb)
    s = (T0 + m * half) + m * half * u + (mk - m) * half * w * _step_antiderivative(zs) \
        - D * half * (1.0 - w) * _bump_antiderivative(zb)
    return s, sp, j


# --- certificates ------------------------------------------------------------

@dataclass
class Certificate:
    t: np.ndarray
    weight: np.ndarray
    sigma_prime: np.ndarray
    product: np.ndarray
    passed_rows: np.ndarray
    flags: list[str]
    mode: str
    flow_sup: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.passed_rows))

    @property
    def max_product(self) -> float:
        return float(np.nanmax(self.product))

    @property
    def weighted_norm(self) -> float:
        """Bound on the weighted sup of the accelerated flow implied by the rows."""
        return self.max_product * self.flow_sup

    def to_csv_text(self, comments: Sequence[str] = ()) -> str:
        lines = [f"# {c}" for c in comments]
        lines.append(f"# mode={self.mode} flow_sup={self.flow_sup:.17g}")
        lines.append("t,weight,sigma_prime,product,pass")
        for row in zip(self.t, self.weight, self.sigma_prime, self.product, self.passed_rows):
            lines.append(f"{row[0]:.17g},{row[1]:.17g},{row[2]:.17g},{row[3]:.17g},{int(row[4])}")
        return "\n".join(lines) + "\n"


def bound_weight(env: Envelope, t: float) -> tuple[float, str]:
    """``f^-1((1-t) / (4 L)) / (2 L)`` with ``L = |log2(1-t)| + 1``."""
    L = abs(math.log2(1.0 - t)) + 1.0
    arg = (1.0 - t) / (4.0 * L)
    flag = ""
    if arg > env.f_max:
        flag = "saturated"
    a = envelope_invert(env, arg, clamp=True)
    if not flag and env.is_extrapolated(a):
        flag = "extrapolated"
    return a / (2.0 * L), flag


def check_general_bound(sched: Schedule, env: Envelope, flow_sup: float, t_grid: Sequence[float]) -> Certificate:
    """Rows ``w(t) sigma'(t)``; the bound holds when every product is at most 1."""
    ts = np.asarray(t_grid, dtype=float)
    w = np.empty_like(ts)
    sp = np.empty_like(ts)
    flags = []
    for i, t in enumerate(ts):
        sp[i] = sigma_eval(sched, t)[1]
        try:
            w[i], flag = bound_weight(env, t)
        except EnvelopeFloorError:
            w[i], flag = np.nan, "floor"
        flags.append(flag)
    prod = w * sp
    ok = np.where(np.isnan(prod), False, prod <= 1.0)
    return Certificate(ts, w, sp, prod, ok, flags, sched.mode, float(flow_sup))


@dataclass
class ExpMixerReport:
    p: float
    slope: float
    constant: float
    exponent: float
    js: np.ndarray
    passed: bool

    def to_csv_text(self, comments: Sequence[str] = ()) -> str:
        lines = [f"# {c}" for c in comments]
        lines.append("p,fitted_slope,bound_exponent,implied_constant,j_min,j_max,pass")
        lines.append(f"{self.p:.17g},{self.slope:.17g},{self.exponent:.17g},{self.constant:.17g},"
                     f"{int(self.js[0])},{int(self.js[-1])},{int(self.passed)}")
        return "\n".join(lines) + "\n"


def check_exp_mixer_bound(sched: Schedule, p: float, margin: float = 0.15) -> ExpMixerReport:
    """Fit ``log dT_j`` against ``log j`` over the upper half of the stages."""
    if sched.J_max < 12:
        raise ValueError(f"need at least 12 stages for the growth fit, schedule has {sched.J_max}")
    if not p > 0:
        raise ValueError("p must be positive")
    js = np.arange(int(math.ceil(sched.J_max / 2)), sched.J_max + 1)
    dT = np.array([sched.delta_T(j) for j in js])
    slope = float(np.polyfit(np.log(js), np.log(dT), 1)[0])
    expo = 2.0 + 2.0 / p
    C = float(np.max(dT / js.astype(float) ** expo))
    return ExpMixerReport(p, slope, C, expo, js, slope <= expo + margin)


# --- persistence -------------------------------------------------------------

SCHEDULE_META = "mode,J_max,source_hash"
SCHEDULE_HEADER = "j,T_j,delta_T_j,slope_m_j,extrapolated_flag"


def schedule_to_text(sched: Schedule, comments: Sequence[str] = ()) -> str:
    lines = [f"# {c}" for c in comments]
    if sched.notice:
        lines.append(f"# notice: {sched.notice}")
    lines.append(SCHEDULE_META)
    lines.append(f"{sched.mode},{sched.J_max},{sched.source_hash}")
    lines.append(SCHEDULE_HEADER)
    lines.append("0,0,0,0,")
    for s in sched.stages:
        lines.append(f"{s.j},{s.T:.17g},{s.delta_T:.17g},{s.slope:.17g},{s.flag}")
    return "\n".join(lines) + "\n"


def write_schedule(sched: Schedule, path: str | Path, comments: Sequence[str] = ()) -> None:
    Path(path).write_text(schedule_to_text(sched, comments))


def read_schedule(path: str | Path) -> Schedule:
    body = []
    notice = ""
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if line.startswith("# notice: "):
            notice = line[len("# notice: "):]
        if line.startswith("#") or not line.strip():
            continue
        body.append((lineno, line))
    if len(body) < 4 or body[0][1] != SCHEDULE_META or body[2][1] != SCHEDULE_HEADER:
        raise ValueError(f"{path}: not a schedule file (missing {SCHEDULE_META!r} / {SCHEDULE_HEADER!r} headers)")
    lineno, meta = body[1]
    try:
        mode, jmax, shash = meta.split(",")
        jmax = int(jmax)
    except ValueError:
        raise ValueError(f"{path}:{lineno}: malformed schedule metadata row") from None
    stages = []
    for lineno, line in body[4:]:
        parts = line.split(",")
        try:
            if len(parts) != 5:
                raise ValueError(f"expected 5 fields, got {len(parts)}")
            j = int(parts[0])
            if j != len(stages) + 1:
                raise ValueError(f"stage index {j} out of sequence")
            dT = float(parts[2])
            if not dT > 0:
                raise ValueError("delta_T_j must be positive")
            stages.append(Stage(j, float(parts[1]), dT, float(parts[3]),
                                2.0 ** (-j) * j / dT, 2.0 ** (-(j + 1)) / j, parts[4]))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: bad schedule row: {exc}") from None
    if len(stages) != jmax:
        raise ValueError(f"{path}: header says J_max = {jmax} but {len(stages)} stage rows found")
    try:
        return Schedule(stages, mode, jmax, shash, notice)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
