"""Truncated product space of the three dot levels and one cavity mode.

Basis states are |level, n> with level in (G, X, D) and photon number
n = 0..n_max, ordered photon-major: |G,0>, |X,0>, |D,0>, |G,1>, ...
Operators and density matrices are plain complex numpy arrays on this
basis.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidCutoffError

LEVELS = ("G", "X", "D")
_LEVEL_INDEX = {name: k for k, name in enumerate(LEVELS)}


def level_index(level):
    if isinstance(level, (int, np.integer)):
        if not 0 <= level < 3:
            raise ValueError(f"level index {level} out of range")
        return int(level)
    try:
        return _LEVEL_INDEX[level]
    except KeyError:
        raise ValueError(f"unknown dot level {level!r}; expected one of {LEVELS}") from None


@dataclass(frozen=True)
class Space:
    n_max: int

    @property
    def dim(self):
        return 3 * (self.n_max + 1)

    def index(self, level, n):
        if not 0 <= n <= self.n_max:
            raise ValueError(f"photon number {n} outside 0..{self.n_max}")
        return 3 * n + level_index(level)

    def label(self, flat):
        if not 0 <= flat < self.dim:
            raise ValueError(f"flat index {flat} outside 0..{self.dim - 1}")
        n, lev = divmod(int(flat), 3)
        return LEVELS[lev], n

    @property
    def levels(self):
        """Level index (0, 1, 2) of every basis state."""
        return np.tile(np.arange(3), self.n_max + 1)

    @property
    def photons(self):
        """Photon number of every basis state."""
        return np.repeat(np.arange(self.n_max + 1), 3)


def build_space(n_max):
    if int(n_max) != n_max or n_max < 1:
        raise InvalidCutoffError(f"photon cutoff must be an integer >= 1, got {n_max!r}")
    return Space(int(n_max))


def annihilation(space):
    a = np.zeros((space.dim, space.dim), dtype=complex)
    for n in range(1, space.n_max + 1):
        for lev in range(3):
            a[space.index(lev, n - 1), space.index(lev, n)] = np.sqrt(n)
    return a


def creation(space):
    return annihilation(space).conj().T


def number(space):
    return np.diag(space.photons.astype(complex))


def projector(space, chi, chi_prime):
    """|chi><chi'| on the dot, identity on the cavity."""
    i, j = level_index(chi), level_index(chi_prime)
    p = np.zeros((space.dim, space.dim), dtype=complex)
    for n in range(space.n_max + 1):
        p[space.index(i, n), space.index(j, n)] = 1.0
    return p


def basis_state(space, level, n):
    psi = np.zeros(space.dim, dtype=complex)
    psi[space.index(level, n)] = 1.0
    return psi


def pure_state(space, level, n):
    psi = basis_state(space, level, n)
    return np.outer(psi, psi.conj())


def level_occupations(space, rho):
    """Occupations of G, X, D summed over photon numbers.

    ``rho`` may carry leading batch axes.
    """
    diag = np.real(np.diagonal(rho, axis1=-2, axis2=-1))
    return diag.reshape(diag.shape[:-1] + (space.n_max + 1, 3)).sum(axis=-2)


def photon_occupations(space, rho):
    diag = np.real(np.diagonal(rho, axis1=-2, axis2=-1))
    return diag.reshape(diag.shape[:-1] + (space.n_max + 1, 3)).sum(axis=-1)


def hermiticity_error(m):
    return float(np.max(np.abs(m - m.conj().T)))


def check_density_matrix(rho, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-8):
    """Return a message describing the first violated invariant, or None."""
    err = hermiticity_error(rho)
    if err > herm_tol:
        return f"density matrix not Hermitian (max deviation {err:.3e})"
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        return f"trace drifted to {tr:.12f}"
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lam < -eig_tol:
        return f"negative eigenvalue {lam:.3e}"
    return None
