"""Write / store / read buffering protocol and its figures of merit.

Timing conventions (recorded in every result's ``timing``):

* Rect pulses: tau is the gap between the end of the write plateau and the
  start of the read plateau, t_on(read) = t_on(write) + t_ACS + tau.
* Gauss pulses: the centres are tau + 2 FWHM apart.
* The write pulse starts when the vacuum Rabi flop |G,n> -> |X,n-1> peaks,
  t_on = pi / (2 sqrt(n) g), unless given explicitly.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import hilbert, model
from .constants import HBAR
from .dynamics import (
    LINDBLAD_TOLERANCES,
    SplitLiouvillian,
    TimeSeries,
    validate_states,
)
from .errors import ParameterError
from .pulses import GaussPulse, PulseSequence, RectPulse, design_rect_pulse

DARK_WINDOW_PS = 2.0
HORIZON_RABI_PERIODS = 5
STORAGE_SAMPLES = 200


def vacuum_rabi_period(params):
    """Period (ps) of the |G,1> <-> |X,0> occupation oscillation, pi / g."""
    return np.pi * HBAR / params.hbar_g


def default_t_on(params, photons=1):
    return np.pi * HBAR / (2.0 * np.sqrt(photons) * params.hbar_g)


@dataclass(frozen=True)
class ProtocolSpec:
    """One protocol run. ``read=None`` stops after the write pulse."""

    write: object
    read: object = None
    tau: float = 0.0  # ps, informational; the pulses carry the timing
    initial_photons: int = 1
    horizon: float | None = None  # ps; None -> read end + 5 vacuum Rabi periods
    losses: bool = True
    phonons: bool = False
    n_max: int | None = None
    sample_dt: float = 0.02  # ps

    def __post_init__(self):
        if int(self.initial_photons) != self.initial_photons or self.initial_photons < 1:
            raise ParameterError(f"initial photon number must be >= 1, got {self.initial_photons}")
        if self.sample_dt <= 0:
            raise ParameterError("sample_dt must be positive")
        if self.n_max is not None and self.n_max < self.initial_photons:
            raise ParameterError("photon cutoff below the initial photon number")

    @property
    def cutoff(self):
        if self.n_max is not None:
            return int(self.n_max)
        return max(int(self.initial_photons), 2) + 1

    @property
    def pulse(self):
        return self.write if self.read is None else PulseSequence((self.write, self.read))

    def last_pulse_end(self):
        return (self.read or self.write).end

    def resolved_horizon(self, params):
        if self.read is None and self.horizon is None:
            return self.write.end + DARK_WINDOW_PS
        minimum = self.last_pulse_end() + HORIZON_RABI_PERIODS * vacuum_rabi_period(params)
        if self.horizon is None:
            return minimum
        if self.horizon < minimum - 1e-9:
            raise ParameterError(
                f"horizon {self.horizon:.3f} ps ends less than {HORIZON_RABI_PERIODS} vacuum Rabi "
                f"periods after the last pulse (needs >= {minimum:.3f} ps)"
            )
        return float(self.horizon)

    def with_tau(self, tau):
        """Same spec with the read pulse moved to buffer time ``tau``."""
        if self.read is None:
            raise ParameterError("spec has no read pulse")
        return replace(self, read=read_pulse_for(self.write, tau), tau=float(tau))


@dataclass
class ProtocolResult:
    series: TimeSeries
    c1po: float | None
    c2po: float | None
    max_dark_after_write: float
    timing: dict = field(default_factory=dict)


def read_pulse_for(write, tau):
    if tau < 0:
        raise ParameterError(f"buffer time must be non-negative, got {tau}")
    if isinstance(write, RectPulse):
        return write.shifted(write.t_acs + tau)
    if isinstance(write, GaussPulse):
        return write.shifted(tau + 2.0 * write.fwhm)
    raise ParameterError(f"unsupported write pulse {write!r}")


def tau_convention(write):
    if isinstance(write, RectPulse):
        return "rect: t_on(read) = t_on(write) + t_ACS + tau"
    return "gauss: t0(read) = t0(write) + tau + 2 FWHM"


def design_protocol(
    params,
    tau=0.0,
    initial_photons=1,
    shape="rect",
    t_on=None,
    alpha=10.0,
    gauss=None,
    readout=True,
    losses=True,
    phonons=False,
    **kw,
):
    """Protocol with pulses from the design formulas.

    ``gauss`` is (theta, fwhm, t0) for ``shape="gauss"``.
    """
    couplings = model.derive_couplings(params)
    if shape == "rect":
        start = default_t_on(params, initial_photons) if t_on is None else t_on
        write = design_rect_pulse(couplings.J, couplings.delta_eff, params.delta_omega_AX, start, alpha)
    elif shape == "gauss":
        if gauss is None:
            raise ParameterError("gauss=(theta, fwhm, t0) is required for Gaussian pulses")
        write = GaussPulse.from_fwhm(*gauss)
    else:
        raise ParameterError(f"unknown pulse shape {shape!r}")
    read = read_pulse_for(write, tau) if readout else None
    return ProtocolSpec(
        write=write,
        read=read,
        tau=float(tau),
        initial_photons=initial_photons,
        losses=losses,
        phonons=phonons,
        **kw,
    )


def refined_max(t, y, lo, hi):
    """Maximum of samples y(t) on (lo, hi], refined by a parabola through
    the largest sample and its neighbours. Returns (t_max, y_max)."""
    t = np.asarray(t)
    y = np.asarray(y)
    idx = np.nonzero((t > lo) & (t <= hi))[0]
    if len(idx) == 0:
        raise ParameterError(f"no samples in the metric window ({lo:.3f}, {hi:.3f}] ps")
    k = idx[np.argmax(y[idx])]
    tk, yk = float(t[k]), float(y[k])
    if idx[0] < k < idx[-1]:
        a, b, c = np.polyfit(t[k - 1 : k + 2] - tk, y[k - 1 : k + 2], 2)
        if a < 0:
            s = -b / (2 * a)
            if t[k - 1] - tk <= s <= t[k + 1] - tk and c - b * b / (4 * a) > yk:
                tk, yk = tk + s, c - b * b / (4 * a)
    return tk, min(max(yk, 0.0), 1.0)


def _grid(a, b, dt):
    """a, a + dt, ... up to and including b."""
    return np.append(np.arange(a, b - 1e-9, dt), b)


def _sample_times(spec, horizon, t_start=0.0):
    """Fine sampling around the pulses, coarse sampling during storage."""
    dt = spec.sample_dt
    write_done = spec.write.support()[1] + DARK_WINDOW_PS
    if spec.read is None or spec.read.support()[0] - write_done <= 2 * STORAGE_SAMPLES * dt:
        return _grid(t_start, horizon, dt)
    read_start = spec.read.support()[0]
    head = np.arange(t_start, write_done, dt)
    middle = np.linspace(write_done, read_start, STORAGE_SAMPLES, endpoint=False)
    return np.concatenate([head, middle, _grid(read_start, horizon, dt)])


def _read_metrics(spec, series, horizon):
    lo = spec.read.end
    _, c1po = refined_max(series.times, series.photons[:, 1], lo, horizon)
    c2po = None
    if series.space.n_max >= 2:
        _, c2po = refined_max(series.times, series.photons[:, 2], lo, horizon)
    return c1po, c2po


def _dark_metric(spec, series):
    end = spec.write.end
    return refined_max(series.times, series.levels[:, 2], end, end + DARK_WINDOW_PS)[1]


def _metrics(spec, series, horizon):
    c1po, c2po = (None, None) if spec.read is None else _read_metrics(spec, series, horizon)
    return c1po, c2po, _dark_metric(spec, series)


def _timing(spec, horizon):
    out = {
        "write_start_ps": spec.write.plateau_start,
        "write_end_ps": spec.write.end,
        "horizon_ps": horizon,
        "tau_ps": spec.tau,
        "tau_convention": tau_convention(spec.write),
        "t_zero": "initial state |G,n> prepared at t = 0",
    }
    if spec.read is not None:
        out["read_start_ps"] = spec.read.plateau_start
        out["read_end_ps"] = spec.read.end
    return out


def _system(spec, params):
    space = hilbert.build_space(spec.cutoff)
    couplings = model.derive_couplings(params)
    channels = model.lindblad_channels(params, space, spec.losses)
    rho0 = hilbert.pure_state(space, "G", spec.initial_photons)
    return space, couplings, channels, rho0


def run(spec, params, quapi=None, keep_states=False, monitor=True):
    """Evolve one protocol and extract C1PO, C2PO and the dark occupation.

    ``quapi`` is a :class:`phonons.QuapiConfig`, used when ``spec.phonons``.
    """
    horizon = spec.resolved_horizon(params)
    clock = time.perf_counter()
    if spec.phonons:
        series = _run_quapi(spec, params, quapi, horizon, keep_states, monitor)
    else:
        space, couplings, channels, rho0 = _system(spec, params)
        H = model.driven_hamiltonian(params, couplings, spec.pulse, space)
        sl = SplitLiouvillian(H, channels)
        times = _sample_times(spec, horizon)
        _, samples = sl.propagate(rho0.reshape(-1), 0.0, horizon, times)
        states = samples.reshape(-1, space.dim, space.dim)
        if monitor:
            validate_states(times, states, **LINDBLAD_TOLERANCES)
        series = TimeSeries.from_states(space, times, states, spec.pulse.envelope(times), keep_states)
    c1po, c2po, dark = _metrics(spec, series, horizon)
    timing = _timing(spec, horizon)
    timing["wall_s"] = time.perf_counter() - clock
    return ProtocolResult(series, c1po, c2po, dark, timing)


def _run_quapi(spec, params, quapi, horizon, keep_states, monitor):
    from . import phonons

    cfg = quapi or phonons.QuapiConfig()
    runner = phonons.ProtocolPropagator(spec, params, cfg)
    return runner.run(horizon, keep_states=keep_states, monitor=monitor)


@dataclass
class SweepTable:
    tau_ps: np.ndarray
    c1po: np.ndarray
    c2po: np.ndarray | None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.tau_ps)

    def rows(self):
        cols = [self.tau_ps * 1e-3, self.c1po]
        if self.c2po is not None:
            cols.append(self.c2po)
        return np.column_stack(cols) if len(self) else np.empty((0, len(cols)))

    def columns(self):
        return ["tau_ns", "c1po"] + (["c2po"] if self.c2po is not None else [])


def _check_grid(taus):
    taus = np.asarray(taus, dtype=float).reshape(-1)
    if np.any(taus < 0):
        raise ParameterError("buffer times must be non-negative")
    if len(taus) > 1 and np.any(np.diff(taus) <= 0):
        raise ParameterError("buffer-time grid must be strictly increasing")
    return taus


def sweep_tau(template, params, taus, quapi=None, workers=None):
    """C1PO (and C2PO) as a function of the buffer time (ps).

    The state after the write pulse is computed once and reused for every
    tau. Points are independent; ``workers`` > 1 evaluates them on a thread
    pool, rows stay in grid order.
    """
    taus = _check_grid(taus)
    two = template.cutoff >= 2
    meta = {"tau_convention": tau_convention(template.write), "phonons": template.phonons}
    if len(taus) == 0:
        return SweepTable(taus, np.empty(0), np.empty(0) if two else None, meta)
    if template.phonons:
        from . import phonons

        cfg = quapi or phonons.QuapiConfig()
        results = phonons.ProtocolPropagator(template.with_tau(taus[0]), params, cfg).sweep(taus)
    else:
        results = _sweep_lindblad(template, params, taus, workers)
    c1 = np.array([r.c1po for r in results])
    c2 = np.array([r.c2po for r in results]) if two else None
    meta["horizons_ps"] = [r.timing["horizon_ps"] for r in results]
    return SweepTable(taus, c1, c2, meta)


def _sweep_lindblad(template, params, taus, workers):
    space, couplings, channels, rho0 = _system(template, params)
    write_only = model.driven_hamiltonian(params, couplings, template.write, space)
    base = SplitLiouvillian(write_only, channels)
    t_fork = max(template.write.support()[1], template.write.end + DARK_WINDOW_PS)
    head = np.arange(0.0, template.write.end + DARK_WINDOW_PS + template.sample_dt, template.sample_dt)
    head = np.union1d(head[head < t_fork], [t_fork])
    fork, samples = base.propagate(rho0.reshape(-1), 0.0, t_fork, head)
    dark = _dark_metric(template, TimeSeries.from_states(space, head, samples.reshape(-1, space.dim, space.dim)))

    def point(tau):
        spec = template.with_tau(tau)
        if spec.read.support()[0] < t_fork or spec.horizon is not None:
            return run(spec, params)
        horizon = spec.resolved_horizon(params)
        times = _sample_times(spec, horizon)
        times = times[times >= t_fork]
        _, samples = base.with_pulse(spec.read).propagate(fork, t_fork, horizon, times)
        states = samples.reshape(-1, space.dim, space.dim)
        validate_states(times, states, **LINDBLAD_TOLERANCES)
        series = TimeSeries.from_states(space, times, states, spec.pulse.envelope(times))
        c1po, c2po = _read_metrics(spec, series, horizon)
        return ProtocolResult(series, c1po, c2po, dark, _timing(spec, horizon))

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(point, taus))
    return [point(t) for t in taus]
