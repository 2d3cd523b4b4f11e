import numpy as np
import pytest
from hypothesis import given, strategies as st

from accelrelax.field import GridSpec
from accelrelax.flows import (FlowSpec, ShearProfile, SyntheticTauModel, sample_velocity, spectral_divergence,
                              sup_norm, velocity_at)


def test_alternating_phases():
    flow = FlowSpec.alternating_shear(2.0, 0.5, seed=3)
    assert velocity_at(flow, 0.1).direction == "x"
    assert velocity_at(flow, 0.6).direction == "y"
    assert velocity_at(flow, 1.1).direction == "x"
    assert flow.period == 1.0
    # offsets repeat with the cycle
    assert velocity_at(flow, 0.1).phase == velocity_at(flow, 1.1).phase
    assert sup_norm(flow) == 2.0


def test_boundary_snaps_to_next_phase():
    flow = FlowSpec.alternating_shear(1.0, 1.0)
    assert flow.phase_index(1.0 - 1e-15) == 1
    assert flow.phase_index(0.999) == 0


def test_segments_cover_interval(shear_flow):
    segs = list(shear_flow.segments(0.3, 3.2))
    assert segs[0].start == 0.3 and segs[-1].end == 3.2
    assert all(a.end == b.start for a, b in zip(segs, segs[1:]))
    assert [s.profile.direction for s in segs] == ["x", "y", "x", "y"]


def test_zero_and_static():
    assert velocity_at(FlowSpec.zero(), 3.0).is_zero
    assert sup_norm(FlowSpec.zero()) == 0.0
    assert FlowSpec.static_shear(1.5).period is None
    assert velocity_at(FlowSpec.static_shear(1.5), 7.0).amplitude == 1.5


def test_invalid_flows():
    with pytest.raises(ValueError):
        FlowSpec("vortex")
    with pytest.raises(ValueError):
        FlowSpec.alternating_shear(-1.0)
    with pytest.raises(ValueError):
        FlowSpec.alternating_shear(1.0, cycle=3)
    with pytest.raises(ValueError):
        velocity_at(FlowSpec.zero(), -1.0)


@given(st.integers(0, 1000), st.floats(0.0, 5.0))
def test_shears_are_divergence_free(seed, t):
    flow = FlowSpec.alternating_shear(1.0, 1.0, seed=seed)
    ux, uy = sample_velocity(velocity_at(flow, t), GridSpec(16))
    assert spectral_divergence(ux, uy) < 1e-12


def test_streamfunction_flow_divergence_free(rng):
    g = GridSpec(32)
    X, Y = g.coords()
    psi = np.sin(2 * np.pi * X) * np.cos(4 * np.pi * Y) + 0.3 * np.cos(2 * np.pi * (X + Y))
    flow = FlowSpec.from_streamfunction(g, psi)
    assert spectral_divergence(flow.velocity.ux, flow.velocity.uy) < 1e-12
    assert sup_norm(flow) > 0


def test_profile_samples():
    p = ShearProfile("x", 2.0, 0.0)
    s = p.samples(4)
    assert np.allclose(s, [0, 2, 0, -2], atol=1e-15)
    assert p.sup() == 2.0
    with pytest.raises(ValueError):
        ShearProfile("z")


def test_tau_models():
    assert SyntheticTauModel("constant", 2.0).tau(1e-3) == 2.0
    m = SyntheticTauModel("logpower", 1.0, q=2.0)
    assert m.tau(np.exp(-3.0)) == pytest.approx(9.0)
    assert m.critical_points() == [pytest.approx(np.exp(-2.0))]
    assert SyntheticTauModel("powerlaw", 1.0, alpha=0.5).tau(0.01) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        SyntheticTauModel("powerlaw", 1.0, alpha=1.0)
    with pytest.raises(ValueError):
        m.tau(0.0)


@pytest.mark.parametrize("text", ["constant:1.5", "logpower:1,2", "powerlaw:0.5,0.25"])
def test_tau_model_parse_roundtrip(text):
    m = SyntheticTauModel.parse(text)
    assert SyntheticTauModel.parse(m.describe()) == m


def test_tau_model_parse_error():
    with pytest.raises(ValueError):
        SyntheticTauModel.parse("logpower:1")
