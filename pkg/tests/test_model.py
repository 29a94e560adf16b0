import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from mnbuffer import HBAR, MU_B, ModelParams, build_space, hilbert, model
from mnbuffer.errors import DomainError, ParameterError
from mnbuffer.pulses import RectPulse

fractions = st.floats(min_value=0.01, max_value=0.99)


def test_table_defaults():
    p = ModelParams()
    expected = dict(
        J_e=-15, J_h=60, delta_XD=0.95, g_Mn=2.0075, g_e=-1.5, hbar_g=0.1, kappa=8.5, gamma_X=2.4,
        gamma_D=0.01, D_e=-5, D_h=1, rho_D=5510, c_s=4000, a_ratio=1.38, a_e=3.0,
    )
    for k, v in expected.items():
        assert getattr(p, k) == v, k
    assert p.box_dims == (6, 6, 2)
    assert p.mn_position == (0.3, 0.3, 0.13)


def test_default_couplings():
    density = model.wavefunction_density((0.3, 0.3, 0.13), (6, 6, 2))
    # independent evaluation of the product formula
    ref = (2 / 6 * np.sin(0.3 * np.pi) ** 2) ** 2 * (2 / 2 * np.sin(0.13 * np.pi) ** 2)
    assert density == pytest.approx(ref, rel=1e-14)
    assert density == pytest.approx(7.507e-3, rel=1e-3)
    c = model.derive_couplings(ModelParams())
    assert c.j_e == pytest.approx(-0.1126, abs=1e-4)
    assert c.J == pytest.approx(-np.sqrt(5) * c.j_e, rel=1e-15)
    assert 0.245 <= c.J <= 0.255
    assert 1.83 <= c.delta_eff <= 1.87
    assert c.delta_eff == pytest.approx(0.95 - 2 * c.j_e + 1.5 * c.j_h, rel=1e-15)


def test_centre_density():
    assert model.wavefunction_density((0.5, 0.5, 0.5), (6, 6, 2)) == pytest.approx(1 / 9, rel=1e-14)


@pytest.mark.parametrize("pos", [(0.0, 0.3, 0.3), (0.3, 1.0, 0.3), (0.3, 0.3, -0.1)])
def test_position_on_boundary_rejected(pos):
    with pytest.raises(DomainError):
        model.derive_couplings(ModelParams(mn_position=pos))


def test_zeeman_shift():
    bare = ModelParams(J_e=0.0, J_h=0.0)
    assert model.derive_couplings(bare).delta_eff == pytest.approx(0.95)
    field = model.derive_couplings(bare.with_(B_z=1.0)).delta_eff
    assert field == pytest.approx(0.95 + 3.5075 * MU_B, rel=1e-14)
    assert field == pytest.approx(1.1530, abs=1e-4)
    d0 = model.derive_couplings(ModelParams()).delta_eff
    d1 = model.derive_couplings(ModelParams(B_z=1.0)).delta_eff
    assert d1 - d0 == pytest.approx(0.2030, abs=1e-4)


@given(fractions, fractions, fractions)
def test_in_plane_symmetry(x, y, z):
    a = model.exchange_couplings(ModelParams(mn_position=(x, y, z)))
    b = model.exchange_couplings(ModelParams(mn_position=(y, x, z)))
    assert np.allclose(a, b, rtol=1e-13, atol=0)


def test_overrides_take_precedence():
    c = model.derive_couplings(ModelParams(J=0.05, delta_eff=0.95))
    assert (c.J, c.delta_eff) == (0.05, 0.95)


def _H(params=None, pulse=None, n_max=3):
    params = params or ModelParams()
    space = build_space(n_max)
    return space, model.driven_hamiltonian(params, model.derive_couplings(params), pulse, space)


def test_rotating_frame_diagonal():
    space, H = _H()
    H0 = H(0.0)
    c = model.derive_couplings(ModelParams())
    assert H0[space.index("G", 1), space.index("G", 1)] == pytest.approx(0.0, abs=1e-14)
    assert H0[space.index("X", 0), space.index("X", 0)] == pytest.approx(0.0, abs=1e-14)
    assert H0[space.index("D", 0), space.index("D", 0)] == pytest.approx(-c.delta_eff)


def test_uncoupled_hamiltonian_is_diagonal():
    space, H = _H(ModelParams(J=0.0, hbar_g=0.0))
    H0 = H(0.0)
    assert np.allclose(H0, np.diag(np.diag(H0)))


def test_hermitian_at_many_times():
    pulse = RectPulse(11.8, 10.0, 8.3)
    space, H = _H(pulse=pulse)
    rng = np.random.default_rng(7)
    worst = max(hilbert.hermiticity_error(H(t)) for t in rng.uniform(-50, 200, 10_000))
    assert worst < 1e-12


def test_channels():
    space = build_space(2)
    ch = model.lindblad_channels(ModelParams(), space)
    assert [r for _, r in ch] == [8.5, 2.4, 0.01]
    for O, _ in ch[1:]:
        assert np.allclose(O @ O, 0.0)
    assert all(r == 0 for _, r in model.lindblad_channels(ModelParams(), space, losses=False))
    with pytest.raises(ParameterError):
        ModelParams(kappa=-1.0)


def _schroedinger(Hfun, psi0, times):
    def rhs(t, y):
        return (-1j / HBAR) * (Hfun(t) @ y)

    sol = solve_ivp(rhs, (times[0], times[-1]), psi0, t_eval=times, method="DOP853", rtol=1e-11, atol=1e-13)
    assert sol.success
    return sol.y.T


def test_frame_consistency():
    """Lab-frame evolution transformed back agrees with the rotating frame."""
    params = ModelParams()
    c = model.derive_couplings(params)
    space = build_space(2)
    pulse = RectPulse(f0=11.0, t_on=1.5, t_acs=4.0, alpha=10.0)
    omega_x = 200.0
    psi0 = hilbert.basis_state(space, "G", 1).astype(complex)
    times = np.linspace(0.0, 8.0, 81)
    rot = _schroedinger(model.driven_hamiltonian(params, c, pulse, space), psi0, times)
    lab = _schroedinger(lambda t: model.lab_frame_hamiltonian(t, params, c, pulse, space, omega_x), psi0, times)
    e = model.frame_generator(params, space, omega_x)
    # psi_rot = exp(+i H0 t / hbar) psi_lab
    back = lab * np.exp(1j * np.outer(times, e) / HBAR)
    occ = lambda psi: np.abs(psi) ** 2
    assert np.max(np.abs(occ(rot) - occ(lab))) < 1e-6
    # the full amplitudes agree too, up to a global phase fixed at t = 0
    assert np.max(np.abs(back - rot)) < 1e-6
