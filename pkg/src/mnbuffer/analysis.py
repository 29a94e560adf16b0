"""Storage-time fits, the analytic dark-state decay rate and Gaussian write-pulse search."""

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, least_squares

from .constants import HBAR
from .errors import DomainError, FitError, ParameterError

MIN_FIT_POINTS = 5
HEAD_PERIODS = 3.0


@dataclass(frozen=True)
class FitResult:
    c: float
    tau_star: float  # ns
    rms: float
    covariance: np.ndarray
    n_points: int
    meta: dict = field(default_factory=dict)

    @property
    def rate(self):
        """Decay rate in ns^-1."""
        return 1.0 / self.tau_star


def head_cutoff_ns(delta_eff):
    """Start of the fitted tail: three dark-bright beat periods 2 pi hbar / delta_eff."""
    if delta_eff <= 0:
        raise DomainError("delta_eff must be positive")
    return HEAD_PERIODS * 2.0 * np.pi * HBAR / delta_eff * 1e-3


def fit_exponential(tau_ns, values, delta_eff=None, tau_min_ns=None):
    """Least-squares fit of values = c exp(-tau / tau_star).

    Points before the oscillatory head are dropped: ``tau_min_ns`` if given,
    else three beat periods when ``delta_eff`` (meV) is given.
    """
    tau = np.asarray(tau_ns, dtype=float).reshape(-1)
    y = np.asarray(values, dtype=float).reshape(-1)
    if tau.shape != y.shape:
        raise ParameterError(f"tau and value arrays differ in length ({len(tau)} vs {len(y)})")
    if tau_min_ns is None and delta_eff is not None:
        tau_min_ns = head_cutoff_ns(delta_eff)
    keep = np.isfinite(tau) & np.isfinite(y)
    if tau_min_ns is not None:
        keep &= tau >= tau_min_ns
    tau, y = tau[keep], y[keep]
    if len(tau) < MIN_FIT_POINTS:
        raise ParameterError(f"need at least {MIN_FIT_POINTS} points to fit, got {len(tau)}")

    pos = y > 0
    if pos.sum() < 2:
        raise FitError("fewer than two positive values; cannot form an initial guess")
    slope, intercept = np.polyfit(tau[pos], np.log(y[pos]), 1)
    if slope >= 0:
        raise FitError(f"data do not decay (log-linear slope {slope:.3g} per ns)")
    c0, k0 = np.exp(intercept), -slope

    # parameters relative to the initial guess keep the problem invariant
    # under a rescaling of the data
    def resid(x):
        return (x[0] * np.exp(-x[1] * k0 * tau) - y / c0)

    sol = least_squares(resid, [1.0, 1.0], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if not sol.success:
        raise FitError(f"least squares did not converge: {sol.message}")
    c, k = _polish(tau * k0, y / c0, sol.x[1])
    c, k = c * c0, k * k0
    tau_star = 1.0 / k if k > 0 else np.inf
    if not (np.isfinite(tau_star) and tau_star > 0) or not 0 < c <= 1.2:
        raise FitError(f"fit left the valid domain: c = {c:.4g}, tau* = {tau_star:.4g} ns")

    r = sol.fun * c0
    dof = max(len(tau) - 2, 1)
    J = sol.jac * np.array([1.0, c0 / k0])  # d residual / d(c, k)
    # covariance of (c, k), mapped to (c, tau*) by the Jacobian of k -> 1/k
    try:
        cov_ck = np.linalg.inv(J.T @ J) * (r @ r) / dof
    except np.linalg.LinAlgError:
        cov_ck = np.full((2, 2), np.nan)
    T = np.diag([1.0, -(tau_star**2)])
    cov = T @ cov_ck @ T.T

    span = tau.max() - tau.min()
    decades = np.log10(np.exp(k * span))
    if span < 0.5 * tau_star and decades < 1.0:
        raise FitError(
            f"tau range {span:.3g} ns covers less than 0.5 tau* ({tau_star:.3g} ns) "
            "and less than one decade of decay"
        )
    meta = {"tau_min_ns": tau_min_ns, "tau_span_ns": span, "decades": decades}
    return FitResult(float(c), float(tau_star), float(np.sqrt(np.mean(r * r))), cov, len(tau), meta)


def _profile_slope(k, t, y):
    """d/dk of the residual norm with c eliminated (c optimal for each k)."""
    e = np.exp(-k * t)
    c = (y @ e) / (e @ e)
    return (c * e - y) @ (-c * t * e)


def _polish(t, y, k):
    """Root of the profile slope near the least-squares estimate ``k``.

    Brings the rate to machine precision so the fit does not depend on
    where the optimizer happened to stop.
    """
    lo, hi = k * (1 - 1e-4), k * (1 + 1e-4)
    if _profile_slope(lo, t, y) * _profile_slope(hi, t, y) < 0:
        k = brentq(_profile_slope, lo, hi, args=(t, y), xtol=1e-300, rtol=4 * np.finfo(float).eps)
    e = np.exp(-k * t)
    return (y @ e) / (e @ e), k


def analytic_tau(J, delta_eff, gamma_X=2.4, gamma_D=0.01):
    """Dark-state lifetime (ns) from perturbative bright admixture (J/2 delta)^2."""
    if delta_eff <= 0:
        raise DomainError(f"analytic decay time needs delta_eff > 0 (got {delta_eff}); J << delta_eff is assumed")
    if J < 0:
        raise DomainError("J must be non-negative")
    if gamma_X < 0 or gamma_D < 0:
        raise ParameterError("decay rates must be non-negative")
    rate = (J / (2.0 * delta_eff)) ** 2 * (gamma_X - gamma_D) + gamma_D
    if rate <= 0:
        raise DomainError("effective decay rate is zero")
    return 1.0 / rate


@dataclass(frozen=True)
class DarkEigenstate:
    c_X: float
    c_D: float
    E_d: float  # meV
    gamma_eff: float  # ns^-1

    @property
    def tau(self):
        return 1.0 / self.gamma_eff


def dark_eigenstate(J, delta_eff, hbar_g=0.1, gamma_X=2.4, gamma_D=0.01):
    """Lower eigenstate of the X-D block, neglecting the |G,1> admixture."""
    if delta_eff <= 0:
        raise DomainError("delta_eff must be positive")
    root = np.sqrt(delta_eff**2 + J**2)
    c_X = J / np.sqrt(J**2 + (delta_eff + root) ** 2)
    c_D = np.sqrt(1.0 - c_X**2)
    E_d = -0.5 * (delta_eff + root)
    return DarkEigenstate(float(c_X), float(c_D), float(E_d), float(c_X**2 * gamma_X + c_D**2 * gamma_D))


def single_excitation_hamiltonian(J, delta_eff, hbar_g):
    """Rotating-frame Hamiltonian (meV) on |D,0>, |X,0>, |G,1>."""
    return np.array(
        [
            [-delta_eff, -0.5 * J, 0.0],
            [-0.5 * J, 0.0, hbar_g],
            [0.0, hbar_g, 0.0],
        ]
    )


def lowest_eigenvector(J, delta_eff, hbar_g):
    """(energy, amplitudes on |D,0>, |X,0>, |G,1>) with a positive |D,0> amplitude."""
    w, v = np.linalg.eigh(single_excitation_hamiltonian(J, delta_eff, hbar_g))
    vec = v[:, 0] * np.sign(v[0, 0])
    return float(w[0]), vec


@dataclass(frozen=True)
class GaussianOptimum:
    theta: float
    fwhm: float
    t0: float
    dark: float
    evaluations: np.ndarray  # rows (theta, fwhm, t0, dark)

    @property
    def sigma(self):
        from .pulses import FWHM_PER_SIGMA

        return self.fwhm / FWHM_PER_SIGMA


def _dark_for(args):
    from . import protocol

    params, theta, fwhm, t0, phonons, losses, quapi = args
    spec = protocol.design_protocol(
        params, shape="gauss", gauss=(theta, fwhm, t0), readout=False, losses=losses, phonons=phonons
    )
    return protocol.run(spec, params, quapi).max_dark_after_write


def _evaluate(points, params, phonons, losses, quapi, workers):
    jobs = [(params, th, fw, t0, phonons, losses, quapi) for th, fw, t0 in points]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_dark_for, jobs))
    return [_dark_for(j) for j in jobs]


def _best(rows):
    # lexicographic order first, so argmax picks the lowest theta, fwhm, t0 on ties
    rows = rows[np.lexsort((rows[:, 2], rows[:, 1], rows[:, 0]))]
    return rows, rows[int(np.argmax(rows[:, 3]))]


def _axis(grid, name):
    g = np.unique(np.asarray(grid, dtype=float))
    if len(g) == 0:
        raise ParameterError(f"empty {name} grid")
    return g


def _refined_axis(g, x):
    if len(g) < 2:
        return np.array([x])
    step = 0.5 * min(np.diff(g))
    pts = np.array([x - step, x, x + step])
    return pts[(pts >= g[0]) & (pts <= g[-1])]


def optimize_gaussian(
    params,
    thetas,
    fwhms,
    t0s,
    phonons=False,
    losses=True,
    quapi=None,
    refine=True,
    workers=None,
):
    """Grid search for the Gaussian write pulse with the largest dark occupation.

    ``thetas`` in rad, ``fwhms`` and ``t0s`` in ps. After the exhaustive
    pass, one refinement pass evaluates the half-spacing neighbours of the
    best point. Ties go to the lowest theta, then fwhm, then t0.
    """
    th, fw, tt = _axis(thetas, "theta"), _axis(fwhms, "fwhm"), _axis(t0s, "t0")
    points = list(itertools.product(th, fw, tt))
    darks = _evaluate(points, params, phonons, losses, quapi, workers)
    rows = np.column_stack([np.array(points), darks])
    rows, best = _best(rows)
    if refine:
        done = {tuple(r[:3]) for r in rows}
        extra = [
            p
            for p in itertools.product(
                _refined_axis(th, best[0]), _refined_axis(fw, best[1]), _refined_axis(tt, best[2])
            )
            if tuple(p) not in done
        ]
        if extra:
            more = _evaluate(extra, params, phonons, losses, quapi, workers)
            rows = np.vstack([rows, np.column_stack([np.array(extra), more])])
            rows, best = _best(rows)
    return GaussianOptimum(float(best[0]), float(best[1]), float(best[2]), float(best[3]), rows)
