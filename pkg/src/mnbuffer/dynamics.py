"""Lindblad master-equation propagation.

Density matrices are dim x dim complex arrays; superoperators act on the
row-major flattening ``rho.reshape(-1)``, so that vec(A rho B) = (A kron B^T) vec(rho).
Loss rates are passed in ns^-1 and converted to ps^-1 here.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from . import hilbert
from .constants import HBAR, PER_NS
from .errors import IntegrationError, ParameterError
from .model import DrivenHamiltonian
from .pulses import flatten, merged_support

DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-11
# Nearly pure states sit on the positivity boundary; protocol runs through
# the strong Stark pulses need one more digit to keep eigenvalues >= -1e-8.
PULSE_RTOL = 1e-10
PULSE_ATOL = 1e-12
# sub-step (ps) of the dissipator splitting inside driven propagators
SUBSTEP = 0.0025


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    dt_max: float = 0.1
    sample_dt: float = 0.05

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ParameterError(f"empty time grid [{self.t_start}, {self.t_end}]")
        if self.dt_max <= 0 or self.sample_dt <= 0:
            raise ParameterError("dt_max and sample_dt must be positive")

    def times(self):
        n = int(np.floor((self.t_end - self.t_start) / self.sample_dt + 1e-9))
        t = self.t_start + self.sample_dt * np.arange(n + 1)
        if self.t_end - t[-1] > 1e-9:
            t = np.append(t, self.t_end)
        return t


@dataclass
class TimeSeries:
    space: hilbert.Space
    times: np.ndarray
    levels: np.ndarray  # (T, 3) occupations of G, X, D
    photons: np.ndarray  # (T, n_max + 1)
    trace: np.ndarray
    envelope: np.ndarray | None = None
    states: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_states(cls, space, times, states, envelope=None, keep_states=False):
        states = np.asarray(states)
        return cls(
            space=space,
            times=np.asarray(times, dtype=float),
            levels=hilbert.level_occupations(space, states),
            photons=hilbert.photon_occupations(space, states),
            trace=np.real(np.trace(states, axis1=-2, axis2=-1)),
            envelope=None if envelope is None else np.asarray(envelope, dtype=float),
            states=states if keep_states else None,
        )

    def columns(self):
        names = ["t_ps", "P_G", "P_X", "P_D"]
        names += [f"P_photon_{k}" for k in range(self.space.n_max + 1)]
        names.append("envelope_per_ps")
        return names

    def rows(self):
        env = self.envelope if self.envelope is not None else np.zeros_like(self.times)
        return np.column_stack([self.times, self.levels, self.photons, env])


def lindblad_dissipator(rho, O, rate):
    """rate * (O rho O^+ - {rho, O^+ O}/2), rate in ns^-1, result per ps."""
    if rate < 0:
        raise ParameterError(f"negative loss rate {rate}")
    if rate == 0:
        return np.zeros_like(rho, dtype=complex)
    Od = O.conj().T
    OdO = Od @ O
    return rate * PER_NS * (O @ rho @ Od - 0.5 * (OdO @ rho + rho @ OdO))


def master_rhs(rho, H, channels):
    out = (-1j / HBAR) * (H @ rho - rho @ H)
    for O, rate in channels:
        if rate:
            out = out + lindblad_dissipator(rho, O, rate)
    return out


def liouvillian(H, channels=()):
    """Superoperator (ps^-1) of the master equation for a fixed Hamiltonian."""
    d = H.shape[0]
    eye = np.eye(d)
    L = (-1j / HBAR) * (np.kron(H, eye) - np.kron(eye, H.T))
    for O, rate in channels:
        if rate < 0:
            raise ParameterError(f"negative loss rate {rate}")
        if rate == 0:
            continue
        OdO = O.conj().T @ O
        L = L + rate * PER_NS * (
            np.kron(O, O.conj()) - 0.5 * np.kron(OdO, eye) - 0.5 * np.kron(eye, OdO.T)
        )
    return L


LINDBLAD_TOLERANCES = dict(herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-8)


def validate_states(times, states, herm_tol, trace_tol, eig_tol):
    """Raise IntegrationError at the first sample that is not a density matrix."""
    states = np.asarray(states)
    herm = np.max(np.abs(states - np.conj(np.swapaxes(states, -1, -2))), axis=(-2, -1))
    trace = np.real(np.trace(states, axis1=-2, axis2=-1))
    lam = np.linalg.eigvalsh(0.5 * (states + np.conj(np.swapaxes(states, -1, -2))))[..., 0]
    bad = (herm > herm_tol) | (np.abs(trace - 1.0) > trace_tol) | (lam < -eig_tol)
    if np.any(bad):
        k = int(np.argmax(bad))
        msg = hilbert.check_density_matrix(states[k], herm_tol, trace_tol, eig_tol)
        raise IntegrationError(msg, time=float(times[k]))


def evolve(
    rho0,
    hamiltonian,
    channels,
    grid,
    space,
    rtol=DEFAULT_RTOL,
    atol=DEFAULT_ATOL,
    keep_states=False,
    monitor=True,
):
    """Integrate the master equation with an adaptive 8th-order Runge-Kutta scheme.

    ``hamiltonian`` maps t (ps) to a dim x dim matrix in meV. Samples are
    taken on ``grid.times()``; the step size never exceeds ``grid.dt_max``.
    """
    d = space.dim
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (d, d):
        raise ParameterError(f"initial state has shape {rho0.shape}, expected {(d, d)}")
    channels = [(np.asarray(O, dtype=complex), float(r)) for O, r in channels]
    for _, r in channels:
        if r < 0:
            raise ParameterError(f"negative loss rate {r}")

    if isinstance(hamiltonian, DrivenHamiltonian):
        L0 = liouvillian(hamiltonian.static, channels)
        L1 = liouvillian(hamiltonian.drive)
        env = hamiltonian.envelope

        def fun(t, y):
            f = env(t)
            out = L0 @ y
            if f:
                out += f * (L1 @ y)
            return out

    else:

        def fun(t, y):
            rho = y.reshape(d, d)
            return master_rhs(rho, hamiltonian(t), channels).reshape(-1)

    times = grid.times()
    sol = solve_ivp(
        fun,
        (grid.t_start, grid.t_end),
        rho0.reshape(-1),
        method="DOP853",
        t_eval=times,
        rtol=rtol,
        atol=atol,
        max_step=grid.dt_max,
    )
    if sol.status != 0:
        t_fail = sol.t[-1] if len(sol.t) else grid.t_start
        raise IntegrationError(f"integration failed: {sol.message}", time=float(t_fail))
    states = sol.y.T.reshape(-1, d, d)
    if monitor:
        validate_states(sol.t, states, **LINDBLAD_TOLERANCES)
    env = None
    if isinstance(hamiltonian, DrivenHamiltonian) and hamiltonian.pulse is not None:
        env = hamiltonian.pulse.envelope(sol.t)
    return TimeSeries.from_states(space, sol.t, states, env, keep_states)


class SplitLiouvillian:
    """Master equation with L(t) = L_static + f(t) L_drive.

    Outside the pulse supports the generator is constant and the state is
    advanced with exact matrix exponentials; inside them with DOP853.
    Propagators of repeated pulse windows are cached, keyed by the pulse
    shape and the window position relative to the pulse.
    """

    def __init__(self, hamiltonian, channels, rtol=PULSE_RTOL, atol=PULSE_ATOL):
        if not isinstance(hamiltonian, DrivenHamiltonian):
            raise TypeError("SplitLiouvillian needs a DrivenHamiltonian")
        self.hamiltonian = hamiltonian
        self.channels = [(np.asarray(O, dtype=complex), float(r)) for O, r in channels]
        self.L0 = liouvillian(hamiltonian.static, self.channels)
        self.L1 = liouvillian(hamiltonian.drive)
        self.dim = hamiltonian.static.shape[0]
        self.LD = liouvillian(np.zeros_like(hamiltonian.static), self.channels)
        self.pulses = flatten(hamiltonian.pulse)
        self.support = merged_support(self.pulses)
        self.rtol = rtol
        self.atol = atol
        self._expm_cache = {}
        self._window_cache = {}

    def with_pulse(self, pulse):
        """Same generators, different pulse; caches are shared."""
        other = object.__new__(SplitLiouvillian)
        other.__dict__.update(self.__dict__)
        other.hamiltonian = DrivenHamiltonian(
            self.hamiltonian.static, self.hamiltonian.drive, pulse
        )
        other.pulses = flatten(pulse)
        other.support = merged_support(other.pulses)
        return other

    def envelope(self, t):
        return self.hamiltonian.envelope(t)

    def _rhs(self, t, y):
        f = self.envelope(t)
        out = self.L0 @ y
        if f:
            out += f * (self.L1 @ y)
        return out

    def static_propagator(self, h):
        key = round(float(h), 12)
        U = self._expm_cache.get(key)
        if U is None:
            U = expm(self.L0 * h)
            self._expm_cache[key] = U
        return U

    def segments(self, t0, t1):
        """Split [t0, t1] into (a, b, driven) pieces."""
        out = []
        t = t0
        for a, b in self.support:
            if b <= t or a >= t1:
                continue
            a, b = max(a, t), min(b, t1)
            if a > t:
                out.append((t, a, False))
            out.append((a, b, True))
            t = b
        if t < t1:
            out.append((t, t1, False))
        return out

    def _integrate(self, y, a, b, t_eval=None):
        sol = solve_ivp(
            self._rhs,
            (a, b),
            y,
            method="DOP853",
            t_eval=t_eval,
            rtol=self.rtol,
            atol=self.atol,
        )
        if sol.status != 0:
            t_fail = sol.t[-1] if len(sol.t) else a
            raise IntegrationError(f"integration failed: {sol.message}", time=float(t_fail))
        return sol

    def propagate(self, vec, t0, t1, sample_times=()):
        """Advance ``vec`` from t0 to t1, returning (final, samples).

        ``samples`` has one row per entry of ``sample_times`` (which must lie
        in [t0, t1] and be sorted).
        """
        sample_times = np.asarray(sample_times, dtype=float)
        samples = np.empty((len(sample_times), vec.size), dtype=complex)
        y = np.asarray(vec, dtype=complex)
        k = 0
        while k < len(sample_times) and sample_times[k] <= t0 + 1e-12:
            samples[k] = y
            k += 1
        for a, b, driven in self.segments(t0, t1):
            stop = np.searchsorted(sample_times, b, side="right")
            ts = sample_times[k:stop]
            if driven:
                t_eval = np.append(ts, b) if (len(ts) == 0 or ts[-1] < b) else ts
                sol = self._integrate(y, a, b, t_eval)
                samples[k:stop] = sol.y[:, : len(ts)].T
                y = sol.y[:, -1]
            else:
                t = a
                for j, ts_j in enumerate(ts):
                    y = self.static_propagator(ts_j - t) @ y if ts_j > t else y
                    samples[k + j] = y
                    t = ts_j
                if b > t:
                    y = self.static_propagator(b - t) @ y
            k = stop
        return y, samples

    def _window_key(self, a, b):
        touching = [p for p in self.pulses if p.support()[0] < b and p.support()[1] > a]
        if len(touching) != 1:
            return None
        shape, ref = touching[0].shape_key()
        return (shape, round(a - ref, 9), round(b - ref, 9))

    def propagator(self, a, b):
        """Superoperator mapping vec(rho(a)) to vec(rho(b))."""
        if all(not driven for _, _, driven in self.segments(a, b)):
            return self.static_propagator(b - a)
        key = self._window_key(a, b)
        if key is not None and key in self._window_cache:
            return self._window_cache[key]
        n = self.L0.shape[0]
        U = np.eye(n, dtype=complex)
        for s, e, driven in self.segments(a, b):
            if driven:
                U = self._driven_propagator(s, e) @ U
            else:
                U = self.static_propagator(e - s) @ U
        if key is not None:
            self._window_cache[key] = U
        return U

    def _hilbert_propagators(self, times):
        """Unitaries U(times[k], times[0]) of the coherent part."""
        d = self.dim
        H0 = self.hamiltonian.static
        H1 = self.hamiltonian.drive

        def rhs(t, y):
            H = H0 + self.envelope(t) * H1
            return ((-1j / HBAR) * (H @ y.reshape(d, d))).reshape(-1)

        sol = solve_ivp(
            rhs,
            (times[0], times[-1]),
            np.eye(d, dtype=complex).reshape(-1),
            method="DOP853",
            t_eval=times,
            rtol=1e-12,
            atol=1e-14,
        )
        if sol.status != 0:
            raise IntegrationError(f"propagator integration failed: {sol.message}", times[0])
        return sol.y.T.reshape(-1, d, d)

    def _driven_propagator(self, s, e):
        """Superoperator across a driven interval.

        The coherent part is exact (U kron U*, from the Hilbert-space
        equation); the Lindblad dissipator is interleaved by Strang splitting
        on sub-steps of at most SUBSTEP ps.
        """
        m = max(1, int(np.ceil((e - s) / SUBSTEP - 1e-9)))
        times = np.linspace(s, e, m + 1)
        Us = self._hilbert_propagators(times)
        if not np.any(self.LD):
            return np.kron(Us[-1], Us[-1].conj())
        h = (e - s) / m
        half = self._dissipator_step(0.5 * h)
        full = self._dissipator_step(h)
        P = half
        for k in range(m):
            step = Us[k + 1] @ np.linalg.inv(Us[k])
            P = np.kron(step, step.conj()) @ P
            P = (half if k == m - 1 else full) @ P
        return P

    def _dissipator_step(self, h):
        key = ("D", round(float(h), 12))
        E = self._expm_cache.get(key)
        if E is None:
            E = expm(self.LD * h)
            self._expm_cache[key] = E
        return E

    def _rhs_matrix(self, t, y, n):
        U = y.reshape(n, n)
        out = self.L0 @ U
        f = self.envelope(t)
        if f:
            out += f * (self.L1 @ U)
        return out.reshape(-1)
