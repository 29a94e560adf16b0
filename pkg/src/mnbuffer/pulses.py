"""AC-Stark pulse envelopes and the analytic pulse-design formulas.

Envelopes are real and in ps^-1; they multiply the drive operator
-(hbar/2)(|G><X| + |X><G|) of the rotating-frame Hamiltonian.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .constants import HBAR
from .errors import DomainError, ParameterError

FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))

# Beyond this many rise times (Rect) or standard deviations (Gauss) the
# envelope is below 1e-17 of its peak and is treated as switched off.
_RECT_PAD_RISE_TIMES = 40.0
_GAUSS_PAD_SIGMAS = 9.0


@dataclass(frozen=True)
class RectPulse:
    """Rectangular pulse with logistic edges.

    f(t) = f0 / [(1 + exp(-alpha (t - t_on))) (1 + exp(-alpha (t_acs - (t - t_on))))]
    """

    f0: float
    t_on: float
    t_acs: float
    alpha: float = 10.0

    def __post_init__(self):
        if self.f0 < 0 or self.alpha <= 0 or self.t_acs <= 0:
            raise ParameterError(f"invalid rectangular pulse {self}")

    def envelope(self, t):
        s = np.asarray(t, dtype=float) - self.t_on
        return self.f0 * expit(self.alpha * s) * expit(self.alpha * (self.t_acs - s))

    @property
    def plateau_start(self):
        return self.t_on

    @property
    def plateau_end(self):
        return self.t_on + self.t_acs

    @property
    def end(self):
        """Time after which the pulse counts as over for the metrics."""
        return self.plateau_end + 5.0 / self.alpha

    def support(self):
        pad = _RECT_PAD_RISE_TIMES / self.alpha
        return (self.t_on - pad, self.t_on + self.t_acs + pad)

    def shifted(self, dt):
        return replace(self, t_on=self.t_on + dt)

    def shape_key(self):
        return ("rect", self.f0, self.t_acs, self.alpha), self.t_on


@dataclass(frozen=True)
class GaussPulse:
    """Gaussian pulse of area ``theta`` (rad), width ``sigma`` and centre ``t0``."""

    theta: float
    sigma: float
    t0: float

    def __post_init__(self):
        if self.sigma <= 0 or self.theta < 0:
            raise ParameterError(f"invalid Gaussian pulse {self}")

    @classmethod
    def from_fwhm(cls, theta, fwhm, t0):
        return cls(theta, fwhm / FWHM_PER_SIGMA, t0)

    @property
    def fwhm(self):
        return FWHM_PER_SIGMA * self.sigma

    @property
    def peak(self):
        return self.theta / (np.sqrt(2.0 * np.pi) * self.sigma)

    def envelope(self, t):
        x = (np.asarray(t, dtype=float) - self.t0) / self.sigma
        return self.peak * np.exp(-0.5 * x * x)

    @property
    def plateau_start(self):
        return self.t0

    @property
    def plateau_end(self):
        return self.t0

    @property
    def end(self):
        return self.t0 + 3.0 * self.sigma

    def support(self):
        pad = _GAUSS_PAD_SIGMAS * self.sigma
        return (self.t0 - pad, self.t0 + pad)

    def shifted(self, dt):
        return replace(self, t0=self.t0 + dt)

    def shape_key(self):
        return ("gauss", self.theta, self.sigma), self.t0


@dataclass(frozen=True)
class PulseSequence:
    """Several pulses whose envelopes add."""

    pulses: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))

    def envelope(self, t):
        total = np.zeros_like(np.asarray(t, dtype=float))
        for p in self.pulses:
            total = total + p.envelope(t)
        return total

    @property
    def end(self):
        return max((p.end for p in self.pulses), default=-np.inf)

    def support(self):
        return merged_support(self.pulses)

    def shifted(self, dt):
        return PulseSequence(tuple(p.shifted(dt) for p in self.pulses))


def envelope(spec, t):
    return spec.envelope(t)


def flatten(spec):
    if spec is None:
        return []
    if isinstance(spec, PulseSequence):
        out = []
        for p in spec.pulses:
            out.extend(flatten(p))
        return out
    return [spec]


def merged_support(pulses):
    """Sorted, merged list of (start, end) intervals where any pulse is on."""
    spans = sorted(p.support() for p in flatten(PulseSequence(tuple(pulses))))
    merged = []
    for a, b in spans:
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


def stark_shift(f0, delta_omega_ax):
    """Optical Stark shift (meV) of a pulse with plateau amplitude ``f0``.

    Both arguments are angular frequencies in ps^-1; only the positive
    detuning branch is supported.
    """
    if np.any(np.asarray(delta_omega_ax) <= 0):
        raise DomainError("Stark shift formula requires a positive laser-exciton detuning")
    return 0.5 * HBAR * (np.sqrt(delta_omega_ax**2 + f0**2) - delta_omega_ax)


def bridge_amplitude(delta_eff, detuning):
    """Plateau amplitude f0 (ps^-1) whose Stark shift equals ``delta_eff``.

    ``delta_eff`` and the detuning hbar*delta_omega_AX are energies in meV.
    """
    if np.any(np.asarray(delta_eff) < 0) or np.any(np.asarray(detuning) <= 0):
        raise DomainError("bridge amplitude needs delta_eff >= 0 and a positive detuning")
    w = detuning / HBAR
    return np.sqrt((2.0 * delta_eff / HBAR + w) ** 2 - w**2)


def resonant_duration(J, delta_eff, stark):
    """Duration (ps) of half a Rabi cycle between bright and dark exciton."""
    if J <= 0:
        raise DomainError(f"flip-flop coupling must be positive, got J = {J}")
    return 2.0 * np.pi * HBAR / (2.0 * np.sqrt(J**2 + (delta_eff - stark) ** 2))


def design_rect_pulse(J, delta_eff, detuning, t_on, alpha=10.0):
    """Write pulse built from the bridge-amplitude and half-Rabi formulas."""
    f0 = bridge_amplitude(delta_eff, detuning)
    t_acs = resonant_duration(J, delta_eff, stark_shift(f0, detuning / HBAR))
    return RectPulse(float(f0), float(t_on), float(t_acs), float(alpha))
