import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from mnbuffer import HBAR
from mnbuffer.errors import DomainError, ParameterError
from mnbuffer.pulses import (
    FWHM_PER_SIGMA,
    GaussPulse,
    PulseSequence,
    RectPulse,
    bridge_amplitude,
    design_rect_pulse,
    resonant_duration,
    stark_shift,
)


def test_rect_plateau_and_tails():
    p = RectPulse(f0=5.0, t_on=2.0, t_acs=8.0, alpha=10.0)
    assert p.envelope(6.0) == pytest.approx(5.0, rel=2 * np.exp(-40))
    assert p.envelope(-100.0) == 0.0
    assert p.envelope(p.t_on) == pytest.approx(2.5, rel=1e-12)


@given(st.floats(0.1, 30), st.floats(0.5, 40), st.floats(0.5, 20), st.floats(0, 10))
def test_rect_symmetric_and_monotone(f0, t_acs, alpha, s):
    p = RectPulse(f0=f0, t_on=1.0, t_acs=t_acs, alpha=alpha)
    mid = p.t_on + t_acs / 2
    assert p.envelope(mid + s) == pytest.approx(p.envelope(mid - s), rel=1e-12, abs=1e-300)
    t = np.linspace(mid - 60 / alpha, mid, 400)
    assert np.all(np.diff(p.envelope(t)) >= -1e-12 * f0)


@given(st.floats(0.1, 200), st.floats(0.2, 10), st.floats(-5, 5))
def test_gauss_area_and_fwhm(theta, sigma, t0):
    g = GaussPulse(theta=theta, sigma=sigma, t0=t0)
    area, _ = quad(g.envelope, t0 - 20 * sigma, t0 + 20 * sigma, epsabs=0, epsrel=1e-12, points=[t0])
    assert area == pytest.approx(theta, rel=1e-9)
    half = 0.5 * g.envelope(t0)
    assert g.envelope(t0 + g.fwhm / 2) == pytest.approx(half, rel=1e-10)
    assert g.envelope(t0 - g.fwhm / 2) == pytest.approx(half, rel=1e-10)
    assert g.fwhm == pytest.approx(FWHM_PER_SIGMA * sigma)


def test_invalid_pulses():
    with pytest.raises(ParameterError):
        RectPulse(f0=-1, t_on=0, t_acs=1)
    with pytest.raises(ParameterError):
        RectPulse(f0=1, t_on=0, t_acs=0)
    with pytest.raises(ParameterError):
        GaussPulse(theta=1, sigma=0, t0=0)


def test_sequence_adds():
    a = RectPulse(3.0, 0.0, 5.0)
    b = a.shifted(20.0)
    seq = PulseSequence((a, b))
    t = np.linspace(-5, 40, 200)
    assert np.allclose(seq.envelope(t), a.envelope(t) + b.envelope(t))


def test_design_values():
    f0 = bridge_amplitude(1.85, 15.0)
    assert HBAR * f0 == pytest.approx(np.sqrt(18.7**2 - 15**2), rel=1e-12)
    assert HBAR * f0 == pytest.approx(11.166, abs=1e-3)
    assert stark_shift(0.0, 15.0 / HBAR) == 0.0
    assert bridge_amplitude(0.0, 15.0) == 0.0
    assert resonant_duration(0.25, 1.85, 1.85) == pytest.approx(np.pi * HBAR / 0.25)
    assert resonant_duration(0.25, 1.85, 1.85) == pytest.approx(8.271, abs=1e-3)
    assert resonant_duration(0.05, 1.85, 1.85) == pytest.approx(41.35, abs=1e-2)
    ratio = resonant_duration(0.25, 1.85, 1.60) / resonant_duration(0.25, 1.85, 1.85)
    assert ratio == pytest.approx(1 / np.sqrt(2))


def test_bridge_asymptote():
    delta, det = 1.0, 1500.0
    f0 = bridge_amplitude(delta, det)
    assert f0 == pytest.approx(np.sqrt(4 * delta * det) / HBAR, rel=1e-2)


@given(st.floats(0.1, 5.0), st.floats(5.0, 30.0))
def test_stark_inverts_bridge(delta, det):
    f0 = bridge_amplitude(delta, det)
    assert stark_shift(f0, det / HBAR) == pytest.approx(delta, rel=1e-9)


def test_domain_errors():
    with pytest.raises(DomainError):
        stark_shift(1.0, 0.0)
    with pytest.raises(DomainError):
        bridge_amplitude(1.0, -1.0)
    with pytest.raises(DomainError):
        resonant_duration(0.0, 1.0, 1.0)


def test_designed_pulse_is_resonant():
    p = design_rect_pulse(0.25, 1.85, 15.0, t_on=10.0)
    assert stark_shift(p.f0, 15.0 / HBAR) == pytest.approx(1.85, rel=1e-12)
    assert p.t_acs == pytest.approx(np.pi * HBAR / 0.25, rel=1e-12)
