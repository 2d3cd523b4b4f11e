"""Command-line driver: ``tabulate-tau``, ``build-schedule``, ``run-accelerated``.

Exit codes: 0 pass, 1 fail, 2 inconclusive, 3 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .dissipation import TauTable, build_tau_table, default_s_samples, resolution_ok
from .field import GridSpec, random_field
from .flows import FlowSpec, SyntheticTauModel, sup_norm
from .runner import arbitrary_start_check, choose_j_run
from .schedule import (Envelope, EnvelopeFloorError, build_stages, check_exp_mixer_bound, check_general_bound,
                       read_schedule, source_hash, write_schedule)
from .solver import SolveParams

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 3
TAU_FILE = "tau_table.csv"
SCHEDULE_FILE = "schedule.txt"

log = logging.getLogger("accelrelax")


class UsageError(Exception):
    pass


def _provenance(cfg: RunConfig, command: str) -> list[str]:
    return [f"config_hash={cfg.config_hash}", f"command={command}", f"seed={cfg.seed}"]


def _out_dir(cfg: RunConfig, arg: Optional[str]) -> Path:
    d = arg or cfg.output_dir
    if not d:
        raise UsageError("no output directory: pass --out or set [output] dir")
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _s_samples(flow: FlowSpec, count: int) -> list[float]:
    return default_s_samples(flow, count)


def cmd_tabulate_tau(cfg: RunConfig, out: Path) -> int:
    cfg.require("tau")
    flow = cfg.flow.build()
    grid = GridSpec(cfg.n)
    tc = cfg.tau
    table = build_tau_table(flow, tc.nus, grid=grid, tol=tc.tol, s_samples=_s_samples(flow, tc.s_samples),
                            step=cfg.step, splitting=cfg.splitting, seed=cfg.seed, workers=tc.workers)
    table.to_csv(out / TAU_FILE, _provenance(cfg, "tabulate-tau"))
    lines = [f"# {c}" for c in _provenance(cfg, "tabulate-tau")]
    lines.append("nu,tau,nu_tau,resolved,flags")
    prods = []
    for row in table.rows:
        prods.append(row.nu * row.tau)
        ok = flow.kind == "zero" or resolution_ok(grid.n, row.nu)
        lines.append(f"{row.nu:.17g},{row.tau:.17g},{row.nu * row.tau:.17g},{int(ok)},{row.flags}")
    decreasing = all(b < a for a, b in zip(prods, prods[1:]))
    lines.append(f"# nu_tau_strictly_decreasing={int(decreasing)}")
    (out / "tau_diagnostics.csv").write_text("\n".join(lines) + "\n")
    return EXIT_PASS


def _load_source(cfg: RunConfig, tau_path: Optional[Path]):
    sc = cfg.schedule
    if sc is not None and sc.synthetic:
        return SyntheticTauModel.parse(sc.synthetic)
    if tau_path is None:
        raise UsageError("a tau table is required unless [schedule] synthetic is set")
    try:
        return TauTable.from_csv(tau_path)
    except OSError as exc:
        raise UsageError(f"cannot read tau table {tau_path}: {exc.strerror}") from None


def _envelope(cfg: RunConfig, source) -> Envelope:
    floor = cfg.schedule.floor if cfg.schedule is not None else None
    return Envelope(source, floor=floor)


def cmd_build_schedule(cfg: RunConfig, tau_path: Optional[Path], out: Path) -> int:
    cfg.require("schedule")
    sc = cfg.schedule
    source = _load_source(cfg, tau_path)
    env = _envelope(cfg, source)
    sched = build_stages(env, sc.J_max, sc.mode)
    prov = _provenance(cfg, "build-schedule")
    if isinstance(source, TauTable):
        target = out / TAU_FILE
        # keep the table next to the schedule so runs can rebuild the envelope
        if tau_path is None or tau_path.resolve() != target.resolve():
            target.write_text(Path(tau_path).read_text())
        prov.append(f"tau_source={TAU_FILE}")
    else:
        prov.append(f"synthetic={source.describe()}")
    if sched.notice:
        prov.append(f"notice={sched.notice}")
        log.warning(sched.notice)
    write_schedule(sched, out / SCHEDULE_FILE, prov)

    status = EXIT_PASS
    if sched.J_max > 0:
        k = sc.t_grid
        t_grid = np.arange(k) * (sched.horizon / k)
        flow_sup = sup_norm(cfg.flow.build())
        cert = check_general_bound(sched, env, flow_sup, t_grid)
        (out / "general_bound.csv").write_text(cert.to_csv_text(prov))
        if not cert.passed:
            status = EXIT_FAIL
    if isinstance(source, SyntheticTauModel) and source.form == "logpower" and source.q > 0 \
            and sched.J_max >= 12:
        rep = check_exp_mixer_bound(sched, 2.0 / source.q)
        (out / "exp_mixer.csv").write_text(rep.to_csv_text(prov))
        if not rep.passed:
            status = EXIT_FAIL
    return status


def _fmt(x: float) -> str:
    return f"{x:.6g}".replace("+", "")


def cmd_run_accelerated(cfg: RunConfig, schedule_path: Path, out: Path) -> int:
    cfg.require("run")
    rc = cfg.run
    sched = read_schedule(schedule_path)
    if cfg.schedule is not None and cfg.schedule.synthetic:
        source = SyntheticTauModel.parse(cfg.schedule.synthetic)
    else:
        source = _load_source(cfg, schedule_path.parent / TAU_FILE)
    if source_hash(source) != sched.source_hash:
        raise UsageError(f"{schedule_path}: source_hash {sched.source_hash} does not match the tau source "
                         f"({source_hash(source)})")
    env = _envelope(cfg, source)
    flow = cfg.flow.build()
    grid = GridSpec(cfg.n)
    theta0 = random_field(grid, cfg.seed, decay=rc.theta_decay)
    params = SolveParams(1.0, cfg.step, cfg.splitting)
    prov = _provenance(cfg, "run-accelerated")
    summary = [f"# {c}" for c in prov]
    summary.append("nu,s_start,J_run,verdict,cumulative,halvings,reason")
    codes = []
    for nu in rc.nus:
        for s in rc.s_starts:
            if s >= sched.horizon:
                raise UsageError(f"s_start = {s} lies beyond the schedule horizon {sched.horizon!r}")
            J = rc.J_run if rc.J_run is not None else choose_j_run(sched, env, nu, grid.n, flow, s_start=s)
            J = min(J, sched.J_max)
            rep = arbitrary_start_check(theta0, sched, env, flow, nu, s, J, rc.target_ratio,
                                        params=params.with_nu(nu), enforce_resolution=rc.enforce_resolution,
                                        opnorm_tol=rc.opnorm_tol, seed=cfg.seed)
            name = f"report_nu{_fmt(nu)}_s{_fmt(s)}.csv"
            (out / name).write_text(rep.to_csv_text(prov + [f"J_run={J}"]))
            summary.append(f"{nu:.17g},{s:.17g},{J},{rep.verdict},{rep.cumulative:.17g},{rep.halvings},"
                           f"{rep.reason.replace(',', ';')}")
            codes.append(rep.verdict)
            log.info("nu=%g s=%g: %s %s", nu, s, rep.verdict, rep.reason)
    (out / "run_summary.csv").write_text("\n".join(summary) + "\n")
    if "FAIL" in codes:
        return EXIT_FAIL
    if "INCONCLUSIVE" in codes:
        return EXIT_INCONCLUSIVE
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="accelrelax", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--seed", type=int, default=None,
                       help="override [solver] seed (power-iteration start and initial field)")

    common(sub.add_parser("tabulate-tau", help="measure the dissipation-time table"))
    p = sub.add_parser("build-schedule", help="stage times and bound certificates")
    common(p)
    p.add_argument("--tau", type=Path, default=None)
    p = sub.add_parser("run-accelerated", help="verify decay along the accelerated dynamics")
    common(p)
    p.add_argument("--schedule", type=Path, required=True)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        cfg = load_config(args.config).with_seed(args.seed)
        out = _out_dir(cfg, args.out and str(args.out))
        if args.command == "tabulate-tau":
            return cmd_tabulate_tau(cfg, out)
        if args.command == "build-schedule":
            return cmd_build_schedule(cfg, args.tau, out)
        if not args.schedule.exists():
            raise UsageError(f"schedule file {args.schedule} does not exist")
        return cmd_run_accelerated(cfg, args.schedule, out)
    except (ConfigError, UsageError, EnvelopeFloorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # malformed input files (tau table, schedule) report file:line themselves
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
