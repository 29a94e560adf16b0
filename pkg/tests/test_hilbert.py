import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mnbuffer import hilbert
from mnbuffer.errors import InvalidCutoffError

cutoffs = st.integers(min_value=1, max_value=6)


@pytest.mark.parametrize("n_max, dim", [(1, 6), (2, 9), (3, 12)])
def test_dimension(n_max, dim):
    assert hilbert.build_space(n_max).dim == dim


@pytest.mark.parametrize("bad", [0, -1])
def test_invalid_cutoff(bad):
    with pytest.raises(InvalidCutoffError):
        hilbert.build_space(bad)


@given(cutoffs)
def test_index_round_trip(n_max):
    s = hilbert.build_space(n_max)
    flat = [s.index(lv, n) for n in range(n_max + 1) for lv in hilbert.LEVELS]
    assert sorted(flat) == list(range(s.dim))
    for k in range(s.dim):
        assert s.index(*s.label(k)) == k


def test_photon_major_order():
    s = hilbert.build_space(2)
    assert [s.label(k) for k in range(4)] == [("G", 0), ("X", 0), ("D", 0), ("G", 1)]


def test_annihilation_examples(space3):
    a = hilbert.annihilation(space3)
    out = a @ hilbert.basis_state(space3, "G", 1)
    assert np.allclose(out, hilbert.basis_state(space3, "G", 0))
    assert np.allclose(a @ hilbert.basis_state(space3, "X", 0), 0.0)
    n = hilbert.number(space3)
    v = hilbert.basis_state(space3, "X", 2)
    assert np.allclose(n @ v, 2 * v)


@given(cutoffs)
def test_number_operator_diagonal(n_max):
    s = hilbert.build_space(n_max)
    n = hilbert.number(s)
    assert np.allclose(n, np.diag(np.diag(n)))
    assert np.allclose(np.diag(n).real, s.photons)


@given(cutoffs)
def test_commutator_below_cutoff(n_max):
    s = hilbert.build_space(n_max)
    a = hilbert.annihilation(s)
    comm = a @ a.conj().T - a.conj().T @ a
    keep = s.photons < n_max
    assert np.allclose(comm[np.ix_(keep, keep)], np.eye(keep.sum()), atol=1e-14)


@given(cutoffs, st.sampled_from(hilbert.LEVELS), st.sampled_from(hilbert.LEVELS))
def test_projector_maps_levels(n_max, chi, chi_p):
    s = hilbert.build_space(n_max)
    P = hilbert.projector(s, chi, chi_p)
    for n in range(n_max + 1):
        assert np.allclose(P @ hilbert.basis_state(s, chi_p, n), hilbert.basis_state(s, chi, n))


def test_occupations_of_pure_state(space3):
    rho = hilbert.pure_state(space3, "D", 2)
    assert np.allclose(hilbert.level_occupations(space3, rho), [0, 0, 1])
    assert np.allclose(hilbert.photon_occupations(space3, rho), [0, 0, 1, 0])


def test_check_density_matrix_flags_problems(space3):
    rho = hilbert.pure_state(space3, "G", 1)
    assert hilbert.check_density_matrix(rho) is None
    assert "trace" in hilbert.check_density_matrix(2 * rho)
    bad = rho.copy()
    bad[0, 1] = 1e-3
    assert "hermit" in hilbert.check_density_matrix(bad).lower()
