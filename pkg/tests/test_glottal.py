import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from webster_tract.errors import DomainError
from webster_tract.glottal import (PitchTrajectory, RosenbergParams, accumulate_phase, pitch_shift, rosenberg_pulse,
                                   synthesize_glottal_flow, upsample)

P = RosenbergParams(oq=0.6, cq=0.4, amplitude=1.0, aspiration=0.0)


def test_pulse_landmarks():
    rise = 0.6 * 0.6
    assert rosenberg_pulse(0.0, P) == 0.0
    assert rosenberg_pulse(rise / 2, P) == pytest.approx(0.5)
    assert rosenberg_pulse(rise, P) == pytest.approx(1.0)
    assert rosenberg_pulse(0.6, P) == 0.0
    assert rosenberg_pulse(0.9, P) == 0.0


def test_pulse_closes_continuously():
    assert rosenberg_pulse(0.6 - 1e-9, P) == pytest.approx(0.0, abs=1e-7)


@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.0, 0.999))
def test_pulse_bounded(oq, cq, phase):
    v = rosenberg_pulse(phase, RosenbergParams(oq=oq, cq=cq, amplitude=2.0))
    assert 0.0 <= v <= 2.0


def test_pulse_array_and_bad_phase():
    out = rosenberg_pulse(np.array([0.0, 0.18, 0.36]), P)
    np.testing.assert_allclose(out, [0.0, 0.5, 1.0])
    with pytest.raises(DomainError):
        rosenberg_pulse(1.0, P)


@pytest.mark.parametrize("kw", [{"oq": 0.0}, {"oq": 1.0}, {"cq": 1.2}, {"amplitude": 0.0}, {"aspiration": -0.1}])
def test_params_validated(kw):
    with pytest.raises(DomainError):
        RosenbergParams(**kw)


def test_phase_accumulation_wraps():
    np.testing.assert_allclose(accumulate_phase(np.full(6, 4000.0), 16000.0), [0, 0.25, 0.5, 0.75, 0, 0.25])


def test_clean_flow_is_periodic():
    flow = synthesize_glottal_flow(PitchTrajectory.constant(200, 0.2), P, 16000.0, 0.2)
    assert flow.size == 3200
    np.testing.assert_allclose(flow[80:], flow[:-80], atol=1e-9)


def test_aspiration_level_and_seed():
    noisy_p = RosenbergParams(aspiration=0.05)
    pitch = PitchTrajectory.constant(200, 0.5)
    clean = synthesize_glottal_flow(pitch, RosenbergParams(aspiration=0.0), 16000.0, 0.5)
    a = synthesize_glottal_flow(pitch, noisy_p, 16000.0, 0.5, seed=3)
    b = synthesize_glottal_flow(pitch, noisy_p, 16000.0, 0.5, seed=3)
    c = synthesize_glottal_flow(pitch, noisy_p, 16000.0, 0.5, seed=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    ratio = np.sqrt(np.mean((a - clean) ** 2)) / np.sqrt(np.mean(clean**2))
    assert ratio == pytest.approx(0.05, rel=1e-9)


def test_zero_duration_rejected():
    with pytest.raises(DomainError):
        synthesize_glottal_flow(PitchTrajectory.constant(200, 0.1), P, 16000.0, 0.0)


def test_pitch_trajectory_helpers():
    p = PitchTrajectory.constant(240, 0.8)
    assert p.f0.size == 81 and p.f0_range == (240.0, 240.0)
    assert pitch_shift(p, 1.1).f0_range == pytest.approx((264.0, 264.0))
    with pytest.raises(DomainError):
        pitch_shift(p, 0.0)


def test_upsample_is_band_limited():
    t = np.arange(1600) / 16000
    up = upsample(np.sin(2 * np.pi * 1000 * t), 4)
    t4 = np.arange(up.size) / 64000
    mid = slice(800, -800)
    np.testing.assert_allclose(up[mid], np.sin(2 * np.pi * 1000 * t4)[mid], atol=2e-3)
    # original samples are kept on the coarse grid
    np.testing.assert_allclose(up[::4][200:-200], np.sin(2 * np.pi * 1000 * t)[200:-200], atol=2e-3)


def test_upsample_identity():
    x = np.arange(5.0)
    y = upsample(x, 1)
    np.testing.assert_array_equal(x, y)
    assert y is not x
