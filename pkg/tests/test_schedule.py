import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from accelrelax.dissipation import TauTable
from accelrelax.flows import SyntheticTauModel
from accelrelax.schedule import (Envelope, EnvelopeFloorError, EnvelopeRangeError, HorizonError, Schedule, Stage,
                                 build_stages, check_exp_mixer_bound, check_general_bound, dyadic, envelope_eval,
                                 envelope_invert, read_schedule, schedule_to_text, sigma_eval, write_schedule)

CONST = SyntheticTauModel("constant", 1.0)
LOG1 = SyntheticTauModel("logpower", 1.0, q=1.0)
LOG2 = SyntheticTauModel("logpower", 1.0, q=2.0)


def test_constant_envelope_is_identity():
    env = Envelope(CONST)
    for a in (1e-8, 1e-3, 0.3):
        assert envelope_eval(env, a) == a
        assert envelope_invert(env, a) == a
        assert envelope_invert(env, envelope_eval(env, a)) == a


def test_log_envelope_value_and_inverse():
    env = Envelope(LOG1)
    a = 2.0**-4
    assert envelope_eval(env, a) == pytest.approx(a * math.log(16), rel=1e-14)
    assert abs(envelope_invert(env, 0.17328679513998632) - a) < 1e-6
    # brute-force running max over a fine grid
    b = np.linspace(1e-9, a, 10**6)
    assert envelope_eval(env, a) == pytest.approx(np.max(b * np.abs(np.log(b))), rel=1e-9)


def test_envelope_flat_past_critical_point():
    env = Envelope(LOG1)
    peak = math.exp(-1.0)
    assert envelope_eval(env, 0.9) == pytest.approx(peak, rel=1e-12)
    assert envelope_invert(env, peak) == pytest.approx(peak, rel=1e-9)


@given(st.floats(1e-12, 0.99), st.floats(1e-12, 0.99))
def test_envelope_monotone(a, b):
    env = _ENV2
    lo, hi = sorted((a, b))
    assert envelope_eval(env, lo) <= envelope_eval(env, hi)


@given(st.floats(1e-10, 0.13))
def test_inverse_of_eval(a):
    # below the critical point e^-2, where f is strictly increasing
    env = _ENV2
    back = envelope_invert(env, envelope_eval(env, a))
    assert a * (1 - 1e-9) <= back <= a * (1 + 1e-12)


_ENV2 = Envelope(LOG2)


def test_envelope_errors():
    env = Envelope(CONST, floor=1e-6)
    with pytest.raises(EnvelopeFloorError, match="1e-06"):
        envelope_eval(env, 1e-7)
    with pytest.raises(EnvelopeRangeError):
        envelope_invert(env, 2.0)
    assert envelope_invert(env, 2.0, clamp=True) == pytest.approx(1.0)


def test_constant_schedule_closed_form():
    s = build_stages(Envelope(CONST), 6)
    assert s.T[1] == 2.0 and s.T[2] == 10.0 and s.T[3] == 28.0
    assert [s.delta_T(j) for j in range(1, 7)] == pytest.approx([2 * j * j for j in range(1, 7)], rel=1e-14)
    assert s.slope(2) == pytest.approx(32.0)
    assert (s.T[2] - s.T[1]) / (dyadic(2) - dyadic(1)) == pytest.approx(32.0)


def test_sigma_values():
    s = build_stages(Envelope(CONST), 6)
    assert sigma_eval(s, 0.0) == (0.0, 4.0, 1)
    assert sigma_eval(s, 0.5)[0] == 2.0
    sig, sp, j = sigma_eval(s, 0.6)
    assert sig == pytest.approx(5.2) and sp == pytest.approx(32.0) and j == 2
    with pytest.raises(HorizonError, match="horizon"):
        sigma_eval(s, 0.99)


def test_empty_schedule():
    s = build_stages(Envelope(CONST), 0)
    assert s.J_max == 0
    assert sigma_eval(s, 0.0)[0] == 0.0
    with pytest.raises(HorizonError):
        sigma_eval(s, 0.1)


@pytest.mark.parametrize("model", [CONST, LOG1, LOG2, SyntheticTauModel("powerlaw", 0.5, alpha=0.3)])
def test_stage_equation(model):
    env = Envelope(model)
    s = build_stages(env, 20)
    for st_ in s.stages:
        if st_.flag == "saturated":
            assert envelope_eval(env, 2.0**-st_.j * st_.j / st_.delta_T) <= st_.target
            continue
        lhs = 2.0 ** (-(st_.j + 1)) / st_.j
        assert envelope_eval(env, 2.0**-st_.j * st_.j / st_.delta_T) == pytest.approx(lhs, rel=1e-6)


def test_saturated_stages_flagged():
    env = Envelope(LOG1)
    s = build_stages(env, 4)
    # 1/4 exceeds max a|log a| = 1/e
    assert s.stages[0].flag == "" or s.stages[0].flag == "saturated"
    table = TauTable.from_model(SyntheticTauModel("constant", 1.0), [1e-2, 1e-3, 1e-4])
    st_ = build_stages(Envelope(table), 3)
    assert [x.flag for x in st_.stages] == ["saturated"] * 3


def test_floor_truncates():
    s = build_stages(Envelope(CONST, floor=1e-3), 10)
    assert s.J_max < 10
    assert "truncated" in s.notice


def test_smoothed_mode_properties():
    pl = build_stages(Envelope(LOG2), 12)
    sm = pl.with_mode("smoothed")
    for j in range(1, 12):
        t0 = dyadic(j - 1)
        half = 2.0 ** (-(j + 1))
        for u in np.linspace(0.0, 1.0, 7):
            t = t0 + u * half
            assert sigma_eval(sm, t) == sigma_eval(pl, t)
        assert sigma_eval(sm, dyadic(j))[0] == pl.T[j]
        ts = np.linspace(t0, dyadic(j), 400, endpoint=False)
        sp = np.array([sigma_eval(sm, t)[1] for t in ts])
        assert sp.min() >= 0.25 * pl.slope(j)
        # continuity of sigma' across the stage end
        eps = 1e-9 * half
        assert sigma_eval(sm, dyadic(j) - eps)[1] == pytest.approx(pl.slope(j + 1), rel=1e-6)
        # sigma reaches T_j at the end of the window
        left = sigma_eval(sm, dyadic(j) - eps)[0]
        assert (pl.T[j] - left) == pytest.approx(eps * pl.slope(j + 1), rel=1e-3, abs=1e-12 * pl.T[j])


def test_sigma_inverse():
    for mode in ("piecewise_linear", "smoothed"):
        s = build_stages(Envelope(LOG2), 10, mode)
        for t in np.linspace(0, s.horizon, 37)[:-1]:
            assert s.sigma_inverse(sigma_eval(s, t)[0]) == pytest.approx(t, abs=1e-12)


def test_general_bound_certificate():
    env = Envelope(CONST)
    s = build_stages(env, 4)
    ts = np.linspace(0, 0.9375, 2000, endpoint=False)
    cert = check_general_bound(s, env, 1.0, ts)
    assert cert.passed
    assert cert.max_product == pytest.approx(0.5)
    # the maximum is exactly 1/2, so scaled slopes must exceed a factor of 2 to fail
    scaled = Schedule([Stage(x.j, 3 * x.T, 3 * x.delta_T, 3 * x.slope, x.a, x.target) for x in s.stages])
    assert not check_general_bound(scaled, env, 1.0, ts).passed
    text = cert.to_csv_text()
    assert "t,weight,sigma_prime,product,pass" in text


def test_first_half_slope_exact_in_certificate():
    env = Envelope(LOG2)
    s = build_stages(env, 8, "smoothed")
    t = dyadic(3) + 0.25 * 2.0**-4
    cert = check_general_bound(s, env, 1.0, [t])
    assert cert.sigma_prime[0] == s.slope(4)


@pytest.mark.parametrize("model,p", [(LOG2, 1.0), (LOG1, 2.0), (CONST, 1.0)])
def test_exp_mixer_growth(model, p):
    rep = check_exp_mixer_bound(build_stages(Envelope(model), 20), p)
    assert rep.passed
    assert rep.slope <= 2 + 2 / p + 0.15


def test_exp_mixer_requires_stages():
    with pytest.raises(ValueError):
        check_exp_mixer_bound(build_stages(Envelope(CONST), 6), 1.0)


def test_schedule_file_roundtrip(tmp_path):
    s = build_stages(Envelope(LOG1), 9)
    write_schedule(s, tmp_path / "s.txt", ["config_hash=abc"])
    back = read_schedule(tmp_path / "s.txt")
    assert back.J_max == 9 and back.mode == s.mode and back.source_hash == s.source_hash
    assert np.array_equal(back.T, s.T)
    assert schedule_to_text(back, ["config_hash=abc"]) == (tmp_path / "s.txt").read_text()


def test_schedule_file_errors(tmp_path):
    s = build_stages(Envelope(CONST), 3)
    text = schedule_to_text(s).splitlines()
    text[-2] = "2,10,oops,32,"
    p = tmp_path / "bad.txt"
    p.write_text("\n".join(text) + "\n")
    with pytest.raises(ValueError, match=r"bad\.txt:\d+"):
        read_schedule(p)
