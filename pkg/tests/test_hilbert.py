import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from bswaplab.hilbert import FockSpace, commutator, eigh, expm, is_hermitian, ket, propagator

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def random_hermitian(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (m + m.conj().T) / 2


def test_single_mode_factor_d2():
    a = FockSpace(2).annihilation(1)
    # a (x) I on d=2: the single-mode factor is [[0,1],[0,0]]
    np.testing.assert_array_equal(a, np.kron([[0, 1], [0, 0]], np.eye(2)))


def test_ladder_matrix_element_d3():
    sp = FockSpace(3)
    a = sp.annihilation(1)
    assert a[sp.index(1, 0), sp.index(2, 0)] == pytest.approx(math.sqrt(2))


@pytest.mark.parametrize("d", [2, 3, 4, 5, 6])
def test_annihilation_matches_oracle(d):
    sp = FockSpace(d)
    np.testing.assert_allclose(sp.annihilation(1), np.kron(oracles.annihilation(d), np.eye(d)))
    np.testing.assert_allclose(sp.annihilation(2), np.kron(np.eye(d), oracles.annihilation(d)))


@given(st.integers(2, 7))
def test_distinct_modes_commute(d):
    sp = FockSpace(d)
    a, b = sp.annihilation(1), sp.annihilation(2)
    for x in (a, a.conj().T):
        for y in (b, b.conj().T):
            assert np.abs(commutator(x, y)).max() < 1e-12


def test_basis_order_mode_two_fastest():
    sp = FockSpace(3)
    assert sp.labels[:4] == ((0, 0), (0, 1), (0, 2), (1, 0))
    assert sp.index(1, 2) == 5


def test_invalid_truncation_and_mode():
    with pytest.raises(ValueError):
        FockSpace(1)
    with pytest.raises(ValueError):
        FockSpace(3).annihilation(3)


def test_ket_normalizes():
    assert np.linalg.norm(ket([1, 1j, 0, 1])) == pytest.approx(1.0)


def test_eigh_identity():
    vals, _ = eigh(np.eye(5, dtype=complex))
    np.testing.assert_allclose(vals, 1.0)


def test_eigh_permutation():
    vals, vecs = eigh(np.diag([3.0, 1.0, 2.0]).astype(complex))
    np.testing.assert_allclose(vals, [1, 2, 3])
    np.testing.assert_allclose(np.abs(vecs), [[0, 0, 1], [1, 0, 0], [0, 1, 0]], atol=1e-12)


def test_eigh_rejects_non_hermitian():
    with pytest.raises(ValueError):
        eigh(np.array([[0, 1], [0, 0]], dtype=complex))


@given(st.integers(1, 25), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_eigh_reconstruction(n, seed):
    h = random_hermitian(n, seed)
    vals, vecs = eigh(h)
    assert np.all(np.diff(vals) >= 0)
    scale = max(1.0, np.abs(h).max())
    assert np.abs(vecs @ np.diag(vals) @ vecs.conj().T - h).max() < 1e-9 * scale
    assert np.abs(vecs.conj().T @ vecs - np.eye(n)).max() < 1e-9


def test_expm_zero():
    np.testing.assert_allclose(expm(np.zeros((4, 4), dtype=complex)), np.eye(4))


def test_expm_embedded_rotation_det():
    sx = np.kron(np.array([[0, 1], [1, 0]], dtype=complex), np.eye(3))
    u = expm(sx, -1j * math.pi / 2)
    assert abs(np.linalg.det(u)) == pytest.approx(1.0, abs=1e-12)


@given(st.integers(1, 12), st.integers(0, 2**32 - 1), finite)
@settings(max_examples=40, deadline=None)
def test_hermitian_route_matches_pade(n, seed, t):
    h = random_hermitian(n, seed)
    u = expm(h, -1j * t)
    np.testing.assert_allclose(u, oracles.expm_pade(-1j * t * h), atol=1e-10 * max(1, abs(t) * np.abs(h).max()))
    assert np.abs(u.conj().T @ u - np.eye(n)).max() < 1e-9


@given(arrays(complex, (3, 3), elements=st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False)))
@settings(max_examples=30, deadline=None)
def test_general_expm_matches_scipy(m):
    np.testing.assert_allclose(expm(m), oracles.expm_pade(m), atol=1e-9, rtol=1e-9)


def test_propagator_is_free_evolution():
    h = np.diag([0.0, 1.0, 3.0]).astype(complex)
    np.testing.assert_allclose(propagator(h, 2.0), np.diag(np.exp(-1j * 2.0 * np.diag(h))), atol=1e-14)


def test_is_hermitian():
    assert is_hermitian(random_hermitian(4, 1))
    assert not is_hermitian(np.array([[0, 1j], [1j, 0]]))
