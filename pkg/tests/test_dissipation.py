import math

import numpy as np
import pytest

from accelrelax.dissipation import (HEAT_NU_TAU, HorizonExceeded, TauRow, TauTable, build_tau_table,
                                    default_s_samples, dissipation_time, estimate_operator_norm,
                                    measure_dissipation_time, mixing_rate, operator_norm, resolution_ok)
from accelrelax.field import GridSpec, random_field
from accelrelax.flows import FlowSpec, SyntheticTauModel
from accelrelax.solver import SolveParams


def test_zero_flow_operator_norm_is_first_mode(grid32):
    nu, t = 0.01, 2.0
    est = estimate_operator_norm(FlowSpec.zero(), SolveParams(nu), 0.0, t, grid32, tol=1e-8)
    assert est.converged
    assert est.value == pytest.approx(math.exp(-4 * math.pi**2 * nu * t), rel=1e-6)


def test_inviscid_operator_norm_is_one(grid32, shear_flow):
    assert operator_norm(shear_flow, SolveParams(0.0), 0.0, 1.5, grid=grid32) == pytest.approx(1.0, abs=1e-12)


def test_operator_norm_trivial_interval(grid32, shear_flow):
    assert operator_norm(shear_flow, SolveParams(0.1), 1.0, 1.0, grid=grid32) == 1.0


def test_operator_norm_dominates_fixed_data(grid32, shear_flow):
    from accelrelax.solver import apply_phi
    from accelrelax.field import l2_norm
    p = SolveParams(0.01)
    op = operator_norm(shear_flow, p, 0.0, 1.0, tol=1e-6, grid=grid32)
    for seed in range(5):
        f = random_field(grid32, seed, decay=1.0)
        assert l2_norm(apply_phi(f, shear_flow, p, 0.0, 1.0)) <= op * (1 + 1e-6)


@pytest.mark.parametrize("nu", [1e-1, 1e-2])
def test_zero_flow_tau(grid32, nu):
    tau = dissipation_time(FlowSpec.zero(), nu, [0.0], 1e-4, grid=grid32)
    assert tau == pytest.approx(HEAT_NU_TAU / nu, rel=2e-4)


def test_horizon_cap(grid32):
    with pytest.raises(HorizonExceeded):
        measure_dissipation_time(FlowSpec.zero(), 0.01, [0.0], 1e-2, grid=grid32, horizon_cap=1.0)


def test_shear_beats_heat(grid32, shear_flow):
    nu = 3e-3
    tau = dissipation_time(shear_flow, nu, default_s_samples(shear_flow, 4), 1e-2, grid=grid32)
    assert tau < HEAT_NU_TAU / nu


def test_default_samples(shear_flow):
    assert default_s_samples(shear_flow) == [0.25 * i for i in range(8)]
    assert default_s_samples(FlowSpec.zero()) == [0.0]


def test_resolution_rule():
    assert resolution_ok(512, 1e-4)
    assert not resolution_ok(512, 1e-5)


def _table():
    m = SyntheticTauModel("logpower", 1.0, q=1.0)
    return TauTable.from_model(m, [1e-1, 3e-2, 1e-2, 3e-3, 1e-3])


def test_table_interpolation_and_hits():
    t = _table()
    assert t.tau(1e-2) == pytest.approx(abs(math.log(1e-2)), rel=1e-15)
    mid = t.tau(math.sqrt(1e-2 * 3e-3))
    assert t.tau(3e-3) < mid < t.tau(1e-2) or t.tau(1e-2) < mid < t.tau(3e-3)
    assert t.tau(0.5) == pytest.approx(HEAT_NU_TAU / 0.5)


def test_table_extrapolation_continuous():
    t = _table()
    assert t.extrapolation_available
    below = t.tau(1e-3 * (1 - 1e-9))
    assert below == pytest.approx(t.tau(1e-3), rel=1e-6)
    assert t.fit.model.form == "logpower"


def test_table_csv_roundtrip(tmp_path):
    t = _table()
    t.to_csv(tmp_path / "t.csv", ["hello"])
    back = TauTable.from_csv(tmp_path / "t.csv")
    assert back.to_csv_text() == t.to_csv_text()
    assert [r.tau for r in back.rows] == [r.tau for r in t.rows]


def test_table_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("nu,tau,tol,s_samples,resolution,flags\n0.1,abc,0,0,0,\n")
    with pytest.raises(ValueError, match=":2"):
        TauTable.from_csv(p)
    p.write_text("nu,tau\n0.1,1\n")
    with pytest.raises(ValueError):
        TauTable.from_csv(p)


def test_table_validation():
    with pytest.raises(ValueError):
        TauTable([])
    with pytest.raises(ValueError):
        TauTable([TauRow(0.1, 1.0, 0, 0, 0, ""), TauRow(0.1, 2.0, 0, 0, 0, "")])


def test_build_table_flags(grid32):
    t = build_tau_table(FlowSpec.alternating_shear(1.0, 1.0, seed=1), [1e-1, 1e-2], grid=grid32, tol=5e-2,
                        s_samples=[0.0, 1.0])
    flags = {r.nu: r.flags for r in t.rows}
    assert flags[1e-1] == ""
    assert "under_resolved" in flags[1e-2]
    with pytest.raises(ValueError):
        build_tau_table(FlowSpec.zero(), [1e-2, 1e-1], grid=grid32)


def test_mixing_zero_flow_no_decay(grid32):
    fit = mixing_rate(FlowSpec.zero(), random_field(grid32, 0, decay=2.0), 5.0, samples=11)
    assert "no_decay" in fit.flags
    assert not fit.accepted


def test_mixing_alternating_shear():
    g = GridSpec(128)
    th = random_field(g, 0, decay=6.0)
    fit = mixing_rate(FlowSpec.alternating_shear(1.0, 0.5, seed=2), th, 6.0, samples=25)
    assert 0.5 <= fit.p <= 1.5
    assert fit.K > 0


def test_mixing_static_shear_is_subexponential():
    g = GridSpec(128)
    th = random_field(g, 0, decay=6.0)
    fit = mixing_rate(FlowSpec.static_shear(1.0), th, 6.0, samples=25)
    # shear alone mixes algebraically: the fitted stretch exponent stays small
    assert fit.p < 0.5
