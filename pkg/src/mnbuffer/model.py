"""Physical parameters, Mn-position dependent couplings and the model Hamiltonian."""

from dataclasses import dataclass, fields, replace

import numpy as np

from . import hilbert
from .constants import HBAR, MU_B
from .errors import DomainError, ParameterError


@dataclass(frozen=True)
class ModelParams:
    """All physical inputs of a run. Defaults are the CdTe:Mn parameter set.

    ``J`` and ``delta_eff`` override the values derived from the Mn
    position and field when set (meV); parameter studies use them to vary
    the flip-flop strength and the splitting independently.
    """

    J_e: float = -15.0  # meV nm^3
    J_h: float = 60.0  # meV nm^3
    delta_XD: float = 0.95  # meV
    g_Mn: float = 2.0075
    g_e: float = -1.5
    hbar_g: float = 0.1  # meV
    kappa: float = 8.5  # ns^-1
    gamma_X: float = 2.4  # ns^-1
    gamma_D: float = 0.01  # ns^-1
    D_e: float = -5.0  # eV
    D_h: float = 1.0  # eV
    rho_D: float = 5510.0  # kg m^-3
    c_s: float = 4000.0  # m s^-1
    a_e: float = 3.0  # nm
    a_ratio: float = 1.38  # a_e / a_h
    mn_position: tuple = (0.3, 0.3, 0.13)
    box_dims: tuple = (6.0, 6.0, 2.0)  # nm
    B_z: float = 0.0  # T
    delta_omega_AX: float = 15.0  # meV
    temperature: float = 4.0  # K
    J: float | None = None
    delta_eff: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "mn_position", tuple(float(x) for x in self.mn_position))
        object.__setattr__(self, "box_dims", tuple(float(x) for x in self.box_dims))
        if len(self.mn_position) != 3 or len(self.box_dims) != 3:
            raise ParameterError("mn_position and box_dims need three components")
        if min(self.box_dims) <= 0:
            raise ParameterError(f"box dimensions must be positive, got {self.box_dims}")
        for name in ("kappa", "gamma_X", "gamma_D"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")
        for name in ("rho_D", "c_s", "a_e", "a_ratio"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if self.temperature < 0:
            raise ParameterError("temperature must be non-negative")
        if self.delta_omega_AX <= 0:
            raise ParameterError("laser-exciton detuning must be positive")
        if self.J is not None and self.J < 0:
            raise ParameterError("J override must be non-negative")

    @property
    def a_h(self):
        return self.a_e / self.a_ratio

    def with_(self, **changes):
        return replace(self, **changes)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class DerivedCouplings:
    j_e: float  # meV
    j_h: float  # meV
    J: float  # meV
    delta_eff: float  # meV


def wavefunction_density(position, box_dims):
    """|Psi_0|^2 (nm^-3) of the hard-wall box ground state at a fractional position."""
    x = np.asarray(position, dtype=float)
    L = np.asarray(box_dims, dtype=float)
    if np.any(x <= 0.0) or np.any(x >= 1.0):
        raise DomainError(
            f"Mn position {tuple(x)} must lie strictly inside the box (fractions in (0, 1))"
        )
    return float(np.prod(2.0 / L * np.sin(np.pi * x) ** 2))


def exchange_couplings(params):
    """Site-resolved electron and hole exchange couplings (j_e, j_h) in meV."""
    density = wavefunction_density(params.mn_position, params.box_dims)
    return params.J_e * density, params.J_h * density


def effective_splitting(params, j_e, j_h):
    return (
        params.delta_XD
        - 2.0 * j_e
        + 1.5 * j_h
        + (params.g_Mn - params.g_e) * MU_B * params.B_z
    )


def derive_couplings(params):
    j_e, j_h = exchange_couplings(params)
    J = -np.sqrt(5.0) * j_e if params.J is None else params.J
    delta = effective_splitting(params, j_e, j_h) if params.delta_eff is None else params.delta_eff
    return DerivedCouplings(float(j_e), float(j_h), float(J), float(delta))


@dataclass(frozen=True)
class DrivenHamiltonian:
    """H(t) = static + envelope(t) * drive, all in meV.

    Callable like any other time-dependent Hamiltonian; the integrators
    recognise the split form and use it to avoid rebuilding matrices.
    """

    static: np.ndarray
    drive: np.ndarray
    pulse: object = None

    def envelope(self, t):
        return 0.0 if self.pulse is None else float(self.pulse.envelope(t))

    def __call__(self, t):
        return self.static + self.envelope(t) * self.drive


def static_hamiltonian(params, couplings, space, exciton_shift=0.0):
    """Pulse-free part of the rotating-frame Hamiltonian.

    ``exciton_shift`` (meV) is added to the X and D levels; the phonon
    propagator uses it to keep the cavity resonant with the
    polaron-shifted exciton.
    """
    P = lambda a, b: hilbert.projector(space, a, b)
    a = hilbert.annihilation(space)
    ad = a.conj().T
    w = params.delta_omega_AX
    H = (
        w * P("G", "G")
        - couplings.delta_eff * P("D", "D")
        - w * (ad @ a)
        - 0.5 * couplings.J * (P("X", "D") + P("D", "X"))
        + params.hbar_g * (a @ P("X", "G") + ad @ P("G", "X"))
    )
    if exciton_shift:
        H = H + exciton_shift * (P("X", "X") + P("D", "D"))
    return H


def drive_operator(space):
    return -0.5 * HBAR * (hilbert.projector(space, "G", "X") + hilbert.projector(space, "X", "G"))


def driven_hamiltonian(params, couplings, pulse, space, exciton_shift=0.0):
    return DrivenHamiltonian(
        static_hamiltonian(params, couplings, space, exciton_shift), drive_operator(space), pulse
    )


def rotating_frame_hamiltonian(t, params, couplings, pulse, space):
    return driven_hamiltonian(params, couplings, pulse, space)(t)


def frame_generator(params, space, omega_x):
    """Diagonal of H_0 (meV) that defines the rotating frame.

    ``omega_x`` is the bright-exciton energy hbar*omega_X in meV; the laser
    sits at omega_X + delta_omega_AX and the cavity is resonant with X.
    """
    lev = space.levels
    n = space.photons
    w_acs = omega_x + params.delta_omega_AX
    e = np.where(lev == 0, -params.delta_omega_AX, omega_x).astype(float)
    return e + w_acs * n


def lab_frame_hamiltonian(t, params, couplings, pulse, space, omega_x):
    """Full Hamiltonian without the rotating-frame transformation (meV).

    Used to cross-check the frame algebra; the fast phase exp(-i w_ACS t)
    of the laser field is kept explicitly.
    """
    P = lambda a, b: hilbert.projector(space, a, b)
    a = hilbert.annihilation(space)
    ad = a.conj().T
    w_acs = (omega_x + params.delta_omega_AX) / HBAR
    f = (0.0 if pulse is None else float(pulse.envelope(t))) * np.exp(-1j * w_acs * t)
    return (
        omega_x * P("X", "X")
        + (omega_x - couplings.delta_eff) * P("D", "D")
        - 0.5 * couplings.J * (P("X", "D") + P("D", "X"))
        - 0.5 * HBAR * (np.conj(f) * P("G", "X") + f * P("X", "G"))
        + omega_x * (ad @ a)
        + params.hbar_g * (a @ P("X", "G") + ad @ P("G", "X"))
    )


def lindblad_channels(params, space, losses=True):
    """Loss channels as (jump operator, rate in ns^-1)."""
    rates = (params.kappa, params.gamma_X, params.gamma_D)
    if any(r < 0 for r in rates):
        raise ParameterError(f"loss rates must be non-negative, got {rates}")
    if not losses:
        rates = (0.0, 0.0, 0.0)
    return [
        (hilbert.annihilation(space), float(rates[0])),
        (hilbert.projector(space, "G", "X"), float(rates[1])),
        (hilbert.projector(space, "G", "D"), float(rates[2])),
    ]
