"""Experiment configuration: a flat INI file of ``key = value`` sections.

Example::

    [flow]
    kind = alternating_shear
    amplitude = 1.0
    phase_duration = 1.0
    seed = 7

    [grid]
    n = 128

    [solver]
    step = 0.05
    splitting = strang

    [tau]
    nus = 1e-2, 3e-3, 1e-3
    tol = 1e-2

    [schedule]
    J_max = 12
    mode = piecewise_linear

    [run]
    nus = 1e-2
    J_run = auto
    s_starts = 0, 0.5
"""

from __future__ import annotations

import configparser
import hashlib
import math
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from .dissipation import DEFAULT_SEED
from .flows import FLOW_KINDS, FlowSpec, SyntheticTauModel
from .schedule import MODES


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FlowConfig:
    kind: str = "alternating_shear"
    amplitude: float = 1.0
    phase_duration: float = 1.0
    seed: Optional[int] = None
    cycle: int = 2

    def build(self) -> FlowSpec:
        if self.kind == "zero":
            return FlowSpec.zero()
        if self.kind == "static_shear":
            return FlowSpec.static_shear(self.amplitude)
        return FlowSpec.alternating_shear(self.amplitude, self.phase_duration, self.seed, self.cycle)


@dataclass(frozen=True)
class TauConfig:
    nus: tuple[float, ...] = ()
    tol: float = 1e-2
    s_samples: int = 8
    workers: int = 1


@dataclass(frozen=True)
class ScheduleConfig:
    J_max: int = 12
    mode: str = "piecewise_linear"
    synthetic: Optional[str] = None
    floor: Optional[float] = None
    t_grid: int = 10_000


@dataclass(frozen=True)
class RunSection:
    nus: tuple[float, ...] = ()
    J_run: Optional[int] = None  # None: choose automatically
    target_ratio: float = 2.0**-4
    s_starts: tuple[float, ...] = (0.0,)
    enforce_resolution: bool = True
    theta_decay: float = 2.0
    opnorm_tol: float = 1e-3


@dataclass(frozen=True)
class RunConfig:
    flow: FlowConfig = field(default_factory=FlowConfig)
    n: int = 128
    step: float = 0.05
    splitting: str = "strang"
    seed: int = DEFAULT_SEED
    tau: Optional[TauConfig] = None
    schedule: Optional[ScheduleConfig] = None
    run: Optional[RunSection] = None
    output_dir: Optional[str] = None
    source_text: str = field(default="", repr=False, compare=False)

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        return self if seed is None else replace(self, seed=int(seed))

    def require(self, *sections: str) -> None:
        for name in sections:
            if getattr(self, name) is None:
                raise ConfigError(f"config is missing the [{name}] section")

    @property
    def config_hash(self) -> str:
        d = asdict(self)
        d.pop("source_text", None)
        d.pop("output_dir", None)
        return hashlib.sha256(repr(sorted(d.items())).encode()).hexdigest()[:16]


_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_index(text: str) -> dict[tuple[str, str], int]:
    where = {}
    section = None
    for no, line in enumerate(text.splitlines(), 1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            where[(section, "")] = no
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            where[(section, m.group(1).strip().lower())] = no
    return where


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, lines: dict, origin: str):
        self.p = parser
        self.lines = lines
        self.origin = origin

    def _loc(self, section: str, key: str = "") -> str:
        no = self.lines.get((section, key)) or self.lines.get((section, ""))
        return f"{self.origin}:{no}" if no else self.origin

    def fail(self, section: str, key: str, msg: str):
        what = f"[{section}] {key}" if key else f"[{section}]"
        raise ConfigError(f"{self._loc(section, key)}: {what}: {msg}")

    def has(self, section: str) -> bool:
        return self.p.has_section(section)

    def raw(self, section: str, key: str) -> Optional[str]:
        if not self.p.has_option(section, key):
            return None
        v = self.p.get(section, key).strip()
        return v if v else None

    def get(self, section, key, conv, default, check=None, what=""):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            out = conv(v)
        except (TypeError, ValueError):
            self.fail(section, key, f"cannot parse {v!r}")
        if check is not None and not check(out):
            self.fail(section, key, f"{v!r} out of range ({what})")
        return out

    def floats(self, section, key, default=(), check=None, what=""):
        v = self.raw(section, key)
        if v is None:
            return default
        try:
            out = tuple(float(x) for x in v.split(",") if x.strip())
        except ValueError:
            self.fail(section, key, f"cannot parse list {v!r}")
        if check is not None and not all(check(x) for x in out):
            self.fail(section, key, f"{v!r} out of range ({what})")
        return out

    def check_keys(self, section: str, allowed: set[str]) -> None:
        for key in self.p.options(section):
            if key not in allowed:
                self.fail(section, key, f"unknown key (expected one of {sorted(allowed)})")


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(v)


def _is_pow2(n: int) -> bool:
    return n >= 8 and not n & (n - 1)


def parse_config(text: str, origin: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str.lower
    try:
        parser.read_string(text, source=origin)
    except configparser.ParsingError as exc:
        errs = "; ".join(f"line {no}: {line.strip()}" for no, line in exc.errors)
        raise ConfigError(f"{origin}: malformed config ({errs})") from None
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    r = _Reader(parser, _line_index(text), origin)
    known = {"flow", "grid", "solver", "tau", "schedule", "run", "output"}
    for sec in parser.sections():
        if sec not in known:
            r.fail(sec, "", f"unknown section (expected one of {sorted(known)})")
    for sec in ("flow", "grid"):
        if not r.has(sec):
            raise ConfigError(f"{origin}: config is missing the [{sec}] section")

    r.check_keys("flow", {"kind", "amplitude", "phase_duration", "seed", "cycle"})
    kind = r.get("flow", "kind", str, "alternating_shear", lambda k: k in FLOW_KINDS and k != "generic_sampled",
                 "zero, static_shear or alternating_shear")
    flow = FlowConfig(
        kind=kind,
        amplitude=r.get("flow", "amplitude", float, 1.0, lambda a: a > 0 and math.isfinite(a), "positive"),
        phase_duration=r.get("flow", "phase_duration", float, 1.0, lambda a: a > 0 and math.isfinite(a), "positive"),
        seed=r.get("flow", "seed", int, None, lambda s: s >= 0, "nonnegative"),
        cycle=r.get("flow", "cycle", int, 2, lambda c: c >= 2 and c % 2 == 0, "even, >= 2"),
    )
    r.check_keys("grid", {"n"})
    n = r.get("grid", "n", int, 128, _is_pow2, "power of two >= 8")

    step, splitting, seed = 0.05, "strang", DEFAULT_SEED
    if r.has("solver"):
        r.check_keys("solver", {"step", "splitting", "seed"})
        step = r.get("solver", "step", float, step, lambda h: 0 < h <= 1, "0 < step <= 1")
        splitting = r.get("solver", "splitting", str, splitting, lambda s: s in ("strang", "lie"), "strang or lie")
        seed = r.get("solver", "seed", int, seed, lambda s: s >= 0, "nonnegative")

    tau = None
    if r.has("tau"):
        r.check_keys("tau", {"nus", "tol", "s_samples", "workers"})
        nus = r.floats("tau", "nus", (), lambda x: 0 < x <= 10, "0 < nu <= 10")
        if not nus:
            r.fail("tau", "nus", "at least one diffusivity is required")
        tau = TauConfig(
            nus=tuple(sorted(set(nus), reverse=True)),
            tol=r.get("tau", "tol", float, 1e-2, lambda t: 0 < t < 1, "0 < tol < 1"),
            s_samples=r.get("tau", "s_samples", int, 8, lambda c: c >= 1, ">= 1"),
            workers=r.get("tau", "workers", int, 1, lambda w: w >= 1, ">= 1"),
        )

    schedule = None
    if r.has("schedule"):
        r.check_keys("schedule", {"j_max", "mode", "synthetic", "floor", "t_grid"})
        synth = r.raw("schedule", "synthetic")
        if synth is not None:
            try:
                SyntheticTauModel.parse(synth)
            except ValueError as exc:
                r.fail("schedule", "synthetic", str(exc))
        schedule = ScheduleConfig(
            J_max=r.get("schedule", "j_max", int, 12, lambda j: 0 <= j <= 60, "0..60"),
            mode=r.get("schedule", "mode", str, "piecewise_linear", lambda m: m in MODES, " or ".join(MODES)),
            synthetic=synth,
            floor=r.get("schedule", "floor", float, None, lambda f: 0 < f < 1, "0 < floor < 1"),
            t_grid=r.get("schedule", "t_grid", int, 10_000, lambda k: k >= 2, ">= 2"),
        )

    run = None
    if r.has("run"):
        r.check_keys("run", {"nus", "j_run", "target_ratio", "s_starts", "enforce_resolution", "theta_decay",
                             "opnorm_tol"})
        nus = r.floats("run", "nus", (), lambda x: x > 0, "positive")
        if not nus:
            r.fail("run", "nus", "at least one diffusivity is required")
        jr = r.raw("run", "j_run")
        J_run = None if jr is None or jr.lower() == "auto" else r.get("run", "j_run", int, None, lambda j: j >= 0,
                                                                        ">= 0 or auto")
        run = RunSection(
            nus=nus,
            J_run=J_run,
            target_ratio=r.get("run", "target_ratio", float, 2.0**-4, lambda t: 0 < t <= 1, "0 < ratio <= 1"),
            s_starts=r.floats("run", "s_starts", (0.0,), lambda s: 0 <= s < 1, "0 <= s < 1"),
            enforce_resolution=r.get("run", "enforce_resolution", _bool, True),
            theta_decay=r.get("run", "theta_decay", float, 2.0, lambda d: d >= 0, ">= 0"),
            opnorm_tol=r.get("run", "opnorm_tol", float, 1e-3, lambda t: 0 < t < 1, "0 < tol < 1"),
        )

    out = None
    if r.has("output"):
        r.check_keys("output", {"dir"})
        out = r.raw("output", "dir")
    return RunConfig(flow, n, step, splitting, seed, tau, schedule, run, out, text)


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, str(p))
