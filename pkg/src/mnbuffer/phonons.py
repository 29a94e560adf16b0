"""LA-phonon environment and the iterated quasi-adiabatic path integral.

Both excitons couple to the phonons through A = (|X><X| + |D><D|) x 1_cavity,
whose eigenvalues are 0 and 1. The augmented density matrix therefore only
needs to remember, for every past time step, which of the four eigenvalue
pairs (s+, s-) in {0, 1}^2 the forward and backward paths took. Its size is
4**(n_mem - 1) * dim**2 instead of dim**(2 n_mem) * dim**2.

Units: omega and J(omega) in ps^-1, times in ps.

Spectral density unit chain: the formula is evaluated in SI (D in J, rho_D
in kg m^-3, c_s in m s^-1, hbar in J s, omega in s^-1) where it yields s^-1;
the result is mapped to ps via J_ps(w) = 1e-12 * J_SI(1e12 * w).
"""

from dataclasses import dataclass

import numpy as np
from scipy import constants as sc
from scipy.integrate import quad, solve_ivp

from . import hilbert
from .constants import HBAR, KB
from .dynamics import SplitLiouvillian, TimeSeries, liouvillian, validate_states
from .errors import BufferSimError, DomainError, IntegrationError, ParameterError, ResourceError
from .model import DrivenHamiltonian

DEFAULT_MAX_ADM_ENTRIES = 12_000_000
# the path-integral discretisation is held to looser invariants than the Lindblad solver
QUAPI_TOLERANCES = dict(herm_tol=1e-8, trace_tol=1e-6, eig_tol=1e-6)


@dataclass(frozen=True)
class PhononParams:
    D_e: float = -5.0  # eV
    D_h: float = 1.0  # eV
    rho_D: float = 5510.0  # kg m^-3
    c_s: float = 4000.0  # m s^-1
    a_e: float = 3.0  # nm
    a_h: float = 3.0 / 1.38  # nm
    temperature: float = 4.0  # K

    def __post_init__(self):
        if self.rho_D <= 0 or self.c_s <= 0 or self.a_e <= 0 or self.a_h <= 0:
            raise ParameterError(f"phonon parameters must be positive: {self}")
        if self.temperature < 0:
            raise ParameterError("temperature must be non-negative")

    @classmethod
    def from_model(cls, params, temperature=None):
        return cls(
            D_e=params.D_e,
            D_h=params.D_h,
            rho_D=params.rho_D,
            c_s=params.c_s,
            a_e=params.a_e,
            a_h=params.a_h,
            temperature=params.temperature if temperature is None else temperature,
        )

    @property
    def coupled(self):
        return self.D_e != 0.0 or self.D_h != 0.0

    @property
    def omega_cut(self):
        """Frequency (ps^-1) above which J(omega) is below exp(-60) of its scale."""
        a = min(self.a_e, self.a_h) * 1e-9
        return float(np.sqrt(120.0) * 2.0 * self.c_s / a * 1e-12)


@dataclass(frozen=True)
class QuapiConfig:
    dt: float = 0.5  # ps
    n_mem: int = 6
    compensate_polaron_shift: bool = True
    fold_tail: bool = True
    max_adm_entries: int = DEFAULT_MAX_ADM_ENTRIES

    def __post_init__(self):
        if self.dt <= 0 or int(self.n_mem) != self.n_mem or self.n_mem < 1:
            raise ParameterError(f"invalid path-integral settings dt={self.dt}, n_mem={self.n_mem}")


@dataclass(frozen=True)
class InfluenceCoefficients:
    eta: np.ndarray  # complex, index = step distance 0..n_mem
    dt: float
    temperature: float

    @property
    def n_mem(self):
        return len(self.eta) - 1


def spectral_density(omega, p):
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise DomainError("spectral density is defined for omega >= 0")
    w_si = w * 1e12
    c = p.c_s
    form = p.D_e * sc.e * np.exp(-(w_si**2) * (p.a_e * 1e-9) ** 2 / (4 * c**2)) - p.D_h * sc.e * np.exp(
        -(w_si**2) * (p.a_h * 1e-9) ** 2 / (4 * c**2)
    )
    j_si = w_si**3 / (4 * np.pi**2 * p.rho_D * sc.hbar * c**5) * form**2
    out = j_si * 1e-12
    return float(out) if np.ndim(out) == 0 else out


def _coth_factor(w, temperature):
    """coth(hbar w / 2 kB T); 1 at T = 0."""
    if temperature == 0:
        return np.ones_like(w)
    with np.errstate(divide="ignore", over="ignore"):
        x = HBAR * w / (2.0 * KB * temperature)
        return np.where(x > 0, 1.0 / np.tanh(np.maximum(x, 1e-300)), np.inf)


def _thermal_density(w, p):
    """J(w) coth(hbar w / 2 kB T) with the w -> 0 limit taken."""
    j = spectral_density(w, p)
    if w == 0:
        return 0.0
    return j * float(_coth_factor(np.asarray(w), p.temperature))


def _quad(f, a, b, weight=None, wvar=None, what="integral"):
    kw = dict(limit=2000, epsabs=1e-14, epsrel=1e-10)
    if weight is not None:
        kw.update(weight=weight, wvar=wvar)
    val, err = quad(f, a, b, **kw)
    if not np.isfinite(val) or err > max(1e-8 * abs(val), 1e-12):
        raise BufferSimError(f"quadrature of {what} did not converge (value {val}, error {err})")
    return val


def bath_correlation(t, p):
    """C(t) = int J(w) [coth(hbar w / 2kT) cos(wt) - i sin(wt)] dw, in ps^-2."""
    wc = p.omega_cut
    if t == 0:
        re = _quad(lambda w: _thermal_density(w, p), 0, wc, what="Re C(0)")
        return complex(re, 0.0)
    re = _quad(lambda w: _thermal_density(w, p), 0, wc, "cos", t, what="Re C(t)")
    im = -_quad(lambda w: spectral_density(w, p), 0, wc, "sin", t, what="Im C(t)")
    return complex(re, im)


def polaron_shift(p):
    """Phonon-induced lowering (meV) of both exciton energies, hbar int J/w dw."""
    if not p.coupled:
        return 0.0
    return HBAR * _quad(lambda w: spectral_density(w, p) / w if w > 0 else 0.0, 0, p.omega_cut, what="polaron shift")


def huang_rhys(p):
    return _quad(
        lambda w: _thermal_density(w, p) / w**2 if w > 0 else 0.0, 0, p.omega_cut, what="Huang-Rhys factor"
    )


TAIL_MAX_PS = 60.0
TAIL_TOL = 1e-10


def influence_coefficients(p, cfg):
    """Discretised influence coefficients for step distances 0..n_mem.

    eta_0 is C(t'-t'') integrated over t'' < t' inside one step window and
    eta_k (k >= 1) over a pair of windows k steps apart. The time integrals
    are done in closed form inside the frequency integral.

    With ``cfg.fold_tail`` the coefficients beyond the memory are summed
    into eta_n_mem. A hard cut would drop part of the polaron phase
    sum_k Im eta_k and show up as a spurious dephasing rate.
    """
    dt = cfg.dt
    n = int(cfg.n_mem)
    eta = np.zeros(n + 1, dtype=complex)
    if not p.coupled:
        return InfluenceCoefficients(eta, dt, p.temperature)
    wc = p.omega_cut

    def jw2(w):
        return spectral_density(w, p) / w**2 if w > 0 else 0.0

    def tjw2(w):
        return _thermal_density(w, p) / w**2 if w > 0 else 0.0

    def window(w):
        return 4.0 * np.sin(0.5 * w * dt) ** 2

    def coefficient(k):
        re = _quad(lambda w: tjw2(w) * window(w), 0, wc, "cos", k * dt, what=f"Re eta_{k}")
        im = -_quad(lambda w: jw2(w) * window(w), 0, wc, "sin", k * dt, what=f"Im eta_{k}")
        return complex(re, im)

    re0 = _quad(lambda w: tjw2(w) * (1.0 - np.cos(w * dt)), 0, wc, what="Re eta_0")
    im0 = -_quad(lambda w: jw2(w) * (w * dt - np.sin(w * dt)), 0, wc, what="Im eta_0")
    eta[0] = complex(re0, im0)
    for k in range(1, n + 1):
        eta[k] = coefficient(k)
    if cfg.fold_tail:
        k = n + 1
        small = 0
        while k * dt <= TAIL_MAX_PS and small < 5:
            c = coefficient(k)
            eta[n] += c
            small = small + 1 if abs(c) < TAIL_TOL * abs(eta[0]) else 0
            k += 1
    return InfluenceCoefficients(eta, dt, p.temperature)


def coupling_eigenvalues(space):
    """Eigenvalue (0 or 1) of (|X><X| + |D><D|) x 1 for every basis state."""
    return (space.levels > 0).astype(int)


class AugmentedDensityMatrix:
    """Path-grouped augmented density matrix with finite memory.

    Columns are the density-matrix entries sorted by their class
    c = 2 s+ + s-. Right after the influence weights of a step, an entry of
    class c can only sit on paths whose newest digit is c, so the state is
    kept as four blocks ``Z[c]`` of shape (4**h, n_c) indexed by the h older
    digits (newest least significant).

    One call to :meth:`step` advances by dt with the symmetric splitting:
    system half step, influence weights, system half step. The second half
    step is deferred and fused with the next step's first half, so outputs
    are formed by applying it to the path sum. Once the memory is full, the
    sum over the digit that drops out of memory is taken before the
    propagator is applied, which shrinks the matrix products by a factor 4.
    """

    def __init__(self, rho0, coupling, influence, max_entries=DEFAULT_MAX_ADM_ENTRIES):
        rho0 = np.asarray(rho0, dtype=complex)
        d = rho0.shape[0]
        self.d = d
        self.n_mem = influence.n_mem
        self.dt = influence.dt
        entries = 4 ** (self.n_mem - 1) * d * d
        if entries > max_entries:
            raise ResourceError(
                f"augmented density matrix would need {entries:,} entries "
                f"(dt = {self.dt} ps, n_mem = {self.n_mem}); reduce n_mem or increase dt"
            )
        s = np.asarray(coupling, dtype=int)
        cls = (2 * s[:, None] + s[None, :]).reshape(-1)
        self.perm = np.argsort(cls, kind="stable")
        self.inv_perm = np.argsort(self.perm)
        sorted_cls = cls[self.perm]
        self.slices = []
        for c in range(4):
            idx = np.nonzero(sorted_cls == c)[0]
            self.slices.append(slice(idx[0], idx[-1] + 1) if len(idx) else slice(0, 0))
        eta = np.asarray(influence.eta, dtype=complex)
        self._weights, self._oldest = self._weight_tables(eta)
        self.raw = rho0.reshape(-1)[self.perm][None, :].copy()
        self.Z = None
        self.m = 0  # stored digits, including the class digit
        self.pending = None
        self._fuse_cache = []

    def _weight_tables(self, eta):
        """exp of the influence exponent for every stored path and current class.

        ``tables[m][p, c']`` covers the self term and the m most recent
        digits of path p; ``oldest[q, c']`` is the factor of the digit q at
        distance n_mem alone.
        """
        sp = np.array([0, 0, 1, 1])
        sm = np.array([0, 1, 0, 1])
        diff = (sp - sm)[:, None]

        def pair(k):  # (current c', past q)
            return -diff * (eta[k] * sp[None, :] - np.conj(eta[k]) * sm[None, :])

        self_term = -(sp - sm) * (eta[0] * sp - np.conj(eta[0]) * sm)
        acc = self_term[None, :]
        tables = [np.exp(acc)]
        for k in range(1, self.n_mem + 1):
            # the new most-significant digit is the one k steps back
            acc = (pair(k).T[:, None, :] + acc[None, :, :]).reshape(-1, 4)
            tables.append(np.exp(acc))
        return tables, np.exp(pair(self.n_mem).T)

    def copy(self):
        other = object.__new__(AugmentedDensityMatrix)
        other.__dict__.update(self.__dict__)
        other.Z = None if self.Z is None else [z.copy() for z in self.Z]
        return other

    @property
    def entries(self):
        if self.Z is None:
            return self.raw.size
        return sum(z.size for z in self.Z)

    def _fused(self, first_half):
        # static stretches hand in the same two matrices many times
        for a, b, Mp in self._fuse_cache:
            if a is first_half and b is self.pending:
                return Mp
        M = first_half if self.pending is None else first_half @ self.pending
        Mp = M[np.ix_(self.perm, self.perm)]
        self._fuse_cache = [(first_half, self.pending, Mp)] + self._fuse_cache[:3]
        return Mp

    def step(self, first_half, second_half):
        """Advance by dt."""
        Mp = self._fused(first_half)
        sl = self.slices
        if self.Z is None:
            X = self.raw @ Mp.T
            W = self._weights[0]
            self.Z = [X[:, sl[c]] * W[:, c, None] for c in range(4)]
            self.m = 1
        elif self.m < self.n_mem:
            P = self.Z[0].shape[0]
            W = self._weights[self.m].reshape(P, 4, 4)  # (history, c, c')
            new = []
            for c2 in range(4):
                parts = [
                    (self.Z[c] @ Mp[sl[c2], sl[c]].T) * W[:, c, c2, None] for c in range(4)
                ]
                new.append(np.stack(parts, axis=1).reshape(4 * P, -1))
            self.Z = new
            self.m += 1
        else:
            self.Z = self._full_step(Mp)
        self.pending = second_half

    def _full_step(self, Mp):
        sl = self.slices
        E = self._oldest  # (q, c')
        if self.n_mem == 1:
            W = self._weights[0]
            return [
                W[0, c2]
                * sum(E[c, c2] * (self.Z[c] @ Mp[sl[c2], sl[c]].T) for c in range(4))
                for c2 in range(4)
            ]
        P = self.Z[0].shape[0]
        R = P // 4
        W = self._weights[self.n_mem - 1].reshape(R, 4, 4)  # (recent history, c, c')
        folded = [(E.T @ z.reshape(4, -1)).reshape(4, R, -1) for z in self.Z]  # [c][c']
        new = []
        for c2 in range(4):
            parts = [(folded[c][c2] @ Mp[sl[c2], sl[c]].T) * W[:, c, c2, None] for c in range(4)]
            new.append(np.stack(parts, axis=1).reshape(P, -1))
        return new

    def reduced(self):
        """Reduced density matrix at the end of the last step."""
        if self.Z is None:
            v = self.raw[0]
        else:
            v = np.concatenate([z.sum(axis=0) for z in self.Z])
        v = v[self.inv_perm]
        if self.pending is not None:
            v = self.pending @ v
        return v.reshape(self.d, self.d)


def _generic_propagator(hamiltonian, channels, shift_op, a, b, rtol=1e-10, atol=1e-12):
    d = shift_op.shape[0]
    n = d * d

    def rhs(t, y):
        L = liouvillian(hamiltonian(t) + shift_op, channels)
        return (L @ y.reshape(n, n)).reshape(-1)

    sol = solve_ivp(rhs, (a, b), np.eye(n, dtype=complex).reshape(-1), method="DOP853", rtol=rtol, atol=atol, t_eval=[b])
    if sol.status != 0:
        raise IntegrationError(f"propagator integration failed: {sol.message}", time=a)
    return sol.y[:, -1].reshape(n, n)


def exciton_shift_for(p, cfg):
    return polaron_shift(p) if (cfg.compensate_polaron_shift and p.coupled) else 0.0


def quapi_evolve(rho0, hamiltonian, channels, p, cfg, grid, space, monitor=True):
    """Propagate with the phonon bath treated by the iterated path integral.

    Samples are produced at multiples of ``cfg.dt`` from ``grid.t_start``;
    ``grid.t_end`` is rounded to the nearest step. Lindblad losses act
    inside the system propagator of every step.
    """
    influence = influence_coefficients(p, cfg)
    shift = exciton_shift_for(p, cfg)
    shift_op = shift * (hilbert.projector(space, "X", "X") + hilbert.projector(space, "D", "D"))
    dt = cfg.dt
    n_steps = int(round((grid.t_end - grid.t_start) / dt))
    if n_steps < 1:
        raise ParameterError("time grid shorter than one path-integral step")

    if isinstance(hamiltonian, DrivenHamiltonian):
        shifted = DrivenHamiltonian(hamiltonian.static + shift_op, hamiltonian.drive, hamiltonian.pulse)
        sl = SplitLiouvillian(shifted, channels)
        prop = sl.propagator
    else:
        prop = lambda a, b: _generic_propagator(hamiltonian, channels, shift_op, a, b)

    adm = AugmentedDensityMatrix(rho0, coupling_eigenvalues(space), influence, cfg.max_adm_entries)
    times = grid.t_start + dt * np.arange(n_steps + 1)
    states = np.empty((n_steps + 1, space.dim, space.dim), dtype=complex)
    states[0] = rho0
    for k in range(n_steps):
        t = times[k]
        adm.step(prop(t, t + 0.5 * dt), prop(t + 0.5 * dt, t + dt))
        states[k + 1] = adm.reduced()
    if monitor:
        validate_states(times, states, **QUAPI_TOLERANCES)
    env = None
    if isinstance(hamiltonian, DrivenHamiltonian) and hamiltonian.pulse is not None:
        env = hamiltonian.pulse.envelope(times)
    series = TimeSeries.from_states(space, times, states, env)
    series.meta.update(dt_ps=dt, n_mem=cfg.n_mem, polaron_shift_meV=shift)
    return series


class ProtocolPropagator:
    """Path-integral runs of a write/store/read protocol.

    Time steps are k * dt from t = 0. Sweeps share the augmented density
    matrix up to the start of each read pulse and fork a copy there; with
    buffer times that are multiples of dt the read-pulse step propagators
    are computed once and reused for every fork.
    """

    def __init__(self, spec, params, cfg):
        from . import model, protocol

        self.spec = spec
        self.params = params
        self.cfg = cfg
        self.space, couplings, channels, self.rho0 = protocol._system(spec, params)
        self.bath = PhononParams.from_model(params)
        self.influence = influence_coefficients(self.bath, cfg)
        self.shift = exciton_shift_for(self.bath, cfg)
        H = model.driven_hamiltonian(params, couplings, spec.write, self.space, self.shift)
        self.base = SplitLiouvillian(H, channels)
        self.dt = cfg.dt

    def _new_adm(self):
        return AugmentedDensityMatrix(
            self.rho0, coupling_eigenvalues(self.space), self.influence, self.cfg.max_adm_entries
        )

    def _advance(self, adm, sl, k0, k1, record=None, out=None):
        """Steps k0 .. k1 - 1; stores reduced states at the step ends listed in ``record``."""
        dt = self.dt
        for k in range(k0, k1):
            t = k * dt
            adm.step(sl.propagator(t, t + 0.5 * dt), sl.propagator(t + 0.5 * dt, t + dt))
            if record is not None and (k + 1) in record:
                out[k + 1] = adm.reduced()
        return adm

    def _series(self, samples, pulse, keep_states=False, monitor=True):
        from .dynamics import TimeSeries

        steps = np.array(sorted(samples))
        times = steps * self.dt
        states = np.array([samples[k] for k in steps])
        if monitor:
            validate_states(times, states, **QUAPI_TOLERANCES)
        series = TimeSeries.from_states(self.space, times, states, pulse.envelope(times), keep_states)
        series.meta.update(dt_ps=self.dt, n_mem=self.cfg.n_mem, polaron_shift_meV=self.shift)
        return series

    def _steps(self, t):
        return int(np.ceil(t / self.dt - 1e-9))

    def run(self, horizon, keep_states=False, monitor=True):
        from .protocol import _sample_times

        spec = self.spec
        sl = self.base.with_pulse(spec.pulse)
        n = self._steps(horizon)
        record = set(np.rint(_sample_times(spec, n * self.dt) / self.dt).astype(int).tolist())
        record.discard(0)
        samples = {0: self.rho0.astype(complex)}
        self._advance(self._new_adm(), sl, 0, n, record, samples)
        return self._series(samples, spec.pulse, keep_states, monitor)

    def sweep(self, taus):
        """ProtocolResults for every buffer time (ps), in grid order."""
        from .protocol import (
            DARK_WINDOW_PS,
            ProtocolResult,
            _dark_metric,
            _read_metrics,
            _timing,
            run,
        )

        template = self.spec
        write = template.write
        k_write = self._steps(max(write.support()[1], write.end + DARK_WINDOW_PS))
        head = {0: self.rho0.astype(complex)}
        adm = self._advance(self._new_adm(), self.base, 0, k_write, set(range(1, k_write + 1)), head)
        dark = _dark_metric(template, self._series(head, write))
        k = k_write
        out = []
        for tau in taus:
            spec = template.with_tau(tau)
            horizon = spec.resolved_horizon(self.params)
            k_read = int(np.floor(spec.read.support()[0] / self.dt + 1e-9))
            if k_read < k_write or spec.horizon is not None:
                out.append(run(spec, self.params, self.cfg))
                continue
            adm = self._advance(adm, self.base, k, k_read)
            k = k_read
            branch = adm.copy()
            samples = {k_read: branch.reduced()}
            n = self._steps(horizon)
            self._advance(branch, self.base.with_pulse(spec.read), k_read, n, set(range(k_read + 1, n + 1)), samples)
            series = self._series(samples, spec.pulse)
            c1po, c2po = _read_metrics(spec, series, n * self.dt)
            timing = _timing(spec, horizon)
            out.append(ProtocolResult(series, c1po, c2po, dark, timing))
        return out
