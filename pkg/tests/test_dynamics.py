import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mnbuffer import HBAR, ModelParams, build_space, hilbert, model
from mnbuffer.dynamics import (
    SplitLiouvillian,
    TimeGrid,
    evolve,
    lindblad_dissipator,
    liouvillian,
    master_rhs,
)
from mnbuffer.errors import ParameterError
from mnbuffer.pulses import RectPulse
from conftest import random_density_matrix

SPACE = build_space(2)


def _system(params, pulse=None, losses=True, space=SPACE):
    c = model.derive_couplings(params)
    H = model.driven_hamiltonian(params, c, pulse, space)
    return H, model.lindblad_channels(params, space, losses)


def test_dissipator_examples():
    s = SPACE
    a = hilbert.annihilation(s)
    rho = hilbert.pure_state(s, "G", 1)
    expected = 8.5e-3 * (hilbert.pure_state(s, "G", 0) - rho)
    assert np.allclose(lindblad_dissipator(rho, a, 8.5), expected, atol=1e-15)
    sig = hilbert.projector(s, "G", "X")
    rho = hilbert.pure_state(s, "X", 0)
    expected = 2.4e-3 * (hilbert.pure_state(s, "G", 0) - rho)
    assert np.allclose(lindblad_dissipator(rho, sig, 2.4), expected, atol=1e-15)
    assert not lindblad_dissipator(rho, sig, 0.0).any()
    with pytest.raises(ParameterError):
        lindblad_dissipator(rho, sig, -1.0)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 50.0))
def test_dissipator_traceless(seed, rate):
    rng = np.random.default_rng(seed)
    rho = random_density_matrix(rng, SPACE.dim)
    O = rng.normal(size=(SPACE.dim,) * 2) + 1j * rng.normal(size=(SPACE.dim,) * 2)
    assert abs(np.trace(lindblad_dissipator(rho, O, rate))) < 1e-12 * max(1.0, rate * np.abs(O).max() ** 2)


@given(st.integers(0, 2**32 - 1))
def test_liouvillian_matches_rhs(seed):
    rng = np.random.default_rng(seed)
    params = ModelParams()
    H, ch = _system(params, RectPulse(11.0, 0.0, 5.0))
    Ht = H(rng.uniform(-1, 6))
    rho = random_density_matrix(rng, SPACE.dim)
    L = liouvillian(Ht, ch)
    assert np.allclose(L @ rho.reshape(-1), master_rhs(rho, Ht, ch).reshape(-1), atol=1e-14)


def test_vacuum_rabi_closed_form():
    params = ModelParams(J=0.0)
    H, ch = _system(params, losses=False)
    rho0 = hilbert.pure_state(SPACE, "G", 1)
    s = evolve(rho0, H, ch, TimeGrid(0.0, 30.0, 0.05, 0.1), SPACE, rtol=1e-11, atol=1e-13)
    g = 0.1 / HBAR
    assert np.max(np.abs(s.levels[:, 1] - np.sin(g * s.times) ** 2)) < 1e-6
    t_full = np.pi / (2 * g)
    assert t_full == pytest.approx(10.34, abs=0.01)
    s2 = evolve(rho0, H, ch, TimeGrid(0.0, t_full, 0.05, t_full), SPACE)
    assert s2.levels[-1, 1] >= 0.9999


def test_cavity_decay():
    space = build_space(1)
    rho0 = hilbert.pure_state(space, "G", 1)
    ch = [(hilbert.annihilation(space), 8.5)]
    H = lambda t: np.zeros((space.dim, space.dim))
    t_kappa = 1e3 / 8.5  # 117.6 ps
    s = evolve(rho0, H, ch, TimeGrid(0.0, 118.0, 1.0, 1.0), space)
    assert np.max(np.abs(s.photons[:, 1] - np.exp(-8.5e-3 * s.times))) < 1e-4
    assert s.photons[-1, 1] == pytest.approx(np.exp(-8.5e-3 * 118.0), abs=1e-10)
    s = evolve(rho0, H, ch, TimeGrid(0.0, t_kappa, 1.0, t_kappa), space)
    assert s.photons[-1, 1] == pytest.approx(np.exp(-1), abs=1e-4)


def test_trivial_evolution_is_identity():
    rho0 = random_density_matrix(np.random.default_rng(3), SPACE.dim)
    H = lambda t: np.zeros((SPACE.dim, SPACE.dim))
    s = evolve(rho0, H, [], TimeGrid(0.0, 5.0, 0.5, 1.0), SPACE, keep_states=True)
    assert np.all(s.states == rho0)


def test_unitary_evolution_keeps_spectrum():
    params = ModelParams()
    H, ch = _system(params, RectPulse(11.1, 2.0, 8.3), losses=False)
    rho0 = random_density_matrix(np.random.default_rng(5), SPACE.dim)
    s = evolve(rho0, H, ch, TimeGrid(0.0, 15.0, 0.05, 0.5), SPACE, keep_states=True)
    spec0 = np.linalg.eigvalsh(rho0)
    for st_ in s.states:
        assert np.allclose(np.linalg.eigvalsh(st_), spec0, atol=1e-8)


def test_invariants_on_lossy_driven_run():
    params = ModelParams()
    H, ch = _system(params, RectPulse(11.1, 10.3, 8.3))
    s = evolve(hilbert.pure_state(SPACE, "G", 1), H, ch, TimeGrid(0.0, 40.0, 0.05, 0.05), SPACE, keep_states=True)
    assert np.max(np.abs(s.trace - 1)) < 1e-8
    assert np.allclose(s.levels.sum(axis=1), s.trace, atol=1e-12)
    assert np.allclose(s.photons.sum(axis=1), s.trace, atol=1e-12)
    for st_ in s.states:
        assert hilbert.check_density_matrix(st_) is None


def test_halving_max_step():
    """Occupations on the protocol-like scenario are converged in dt_max."""
    params = ModelParams()
    H, ch = _system(params, RectPulse(11.1, 10.3, 8.3))
    rho0 = hilbert.pure_state(SPACE, "G", 1)
    a = evolve(rho0, H, ch, TimeGrid(0.0, 30.0, 0.1, 0.1), SPACE, rtol=1e-11, atol=1e-13)
    b = evolve(rho0, H, ch, TimeGrid(0.0, 30.0, 0.05, 0.1), SPACE, rtol=1e-11, atol=1e-13)
    assert np.max(np.abs(a.levels - b.levels)) < 1e-7
    assert np.max(np.abs(a.photons - b.photons)) < 1e-7


def test_split_liouvillian_matches_evolve():
    params = ModelParams()
    pulse = RectPulse(11.1, 3.0, 8.3)
    H, ch = _system(params, pulse)
    rho0 = hilbert.pure_state(SPACE, "G", 1)
    times = np.linspace(0.0, 25.0, 51)
    ref = evolve(rho0, H, ch, TimeGrid(0.0, 25.0, 0.02, 0.5), SPACE, rtol=1e-11, atol=1e-13, keep_states=True)
    _, samples = SplitLiouvillian(H, ch).propagate(rho0.reshape(-1), 0.0, 25.0, times)
    assert np.max(np.abs(samples.reshape(ref.states.shape) - ref.states)) < 1e-7


def test_time_grid_validation():
    with pytest.raises(ParameterError):
        TimeGrid(1.0, 1.0)
    with pytest.raises(ParameterError):
        TimeGrid(0.0, 1.0, dt_max=0.0)
    t = TimeGrid(0.0, 1.05, sample_dt=0.1).times()
    assert t[-1] == pytest.approx(1.05)
