"""Numerical Schrieffer-Wolff transformations up to second order.

With ``H = H0 + V`` and ``H0`` diagonal, the frame change is ``A = exp(-iS)``
and the effective Hamiltonian is ``A^dag H A``. ``S`` is returned Hermitian,
so ``-iS`` is the anti-Hermitian generator. The order-``m`` generator solves
``i[S_m, H0] + X_m = H_m`` where the cross terms are

    X_1 = V
    X_2 = -[S_1, [S_1, H0]] / 2 + i [S_1, V]

Either every off-diagonal element of ``H_m`` is removed (diagonalization) or
only the elements linking a low-energy block to the rest (block elimination,
with ``S`` vanishing inside each block).
"""

from __future__ import annotations

import numpy as np

from .errors import DegeneracyError
from .hilbert import commutator

# Energy gaps below this fraction of the H0 spread count as degenerate.
DEGENERACY_RTOL = 1e-9
# Couplings below this fraction of the largest V entry are ignored.
COUPLING_RTOL = 1e-14
# |<p|V|q>| / |E_p - E_q| above this means the expansion is meaningless.
MAX_COUPLING_RATIO = 0.5


def _as_diagonal(h0) -> np.ndarray:
    h0 = np.asarray(h0)
    if h0.ndim == 1:
        return h0.astype(float)
    off = h0 - np.diag(np.diag(h0))
    if np.max(np.abs(off), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(h0))):
        raise ValueError("H0 must be diagonal")
    return np.real(np.diag(h0)).astype(float)


def _generator(energies, x, mask, what, check_ratio=True):
    """``<p|S|q> = -i <p|X|q> / (E_p - E_q)`` on the pairs selected by ``mask``."""
    gaps = energies[:, None] - energies[None, :]
    spread = max(np.ptp(energies), 1.0)
    scale = max(np.max(np.abs(x), initial=0.0), 1e-300)
    coupled = mask & (np.abs(x) > COUPLING_RTOL * scale)
    bad = coupled & (np.abs(gaps) <= DEGENERACY_RTOL * spread)
    if np.any(bad):
        p, q = map(int, np.argwhere(bad)[0])
        raise DegeneracyError(
            f"{what}: states {p} and {q} are coupled but degenerate "
            f"(E_p - E_q = {gaps[p, q]:.3e})"
        )
    s = np.zeros_like(x, dtype=complex)
    s[coupled] = -1j * x[coupled] / gaps[coupled]
    if check_ratio and np.any(np.abs(s) > MAX_COUPLING_RATIO):
        p, q = map(int, np.unravel_index(np.argmax(np.abs(s)), s.shape))
        raise DegeneracyError(
            f"{what}: coupling between states {p} and {q} is {abs(s[p, q]):.3g} "
            "times their energy gap; levels are not separated"
        )
    return s


def _second_order_cross(h0, s1, v):
    return -commutator(s1, commutator(s1, h0)) / 2 + 1j * commutator(s1, v)


def sw_diagonalize(h0, v, order: int = 2):
    """Perturbative eigenvalues of ``H0 + V``.

    Returns:
        ``(energies, S)`` where ``energies[p]`` is ``E_p`` corrected through
        ``order`` and ``S`` is the (Hermitian) generator through the same order.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    e0 = _as_diagonal(h0)
    v = np.asarray(v, dtype=complex)
    off = ~np.eye(len(e0), dtype=bool)

    s1 = _generator(e0, v, off, "first order")
    energies = e0 + np.real(np.diag(v))
    s = s1
    if order == 2:
        x2 = _second_order_cross(np.diag(e0), s1, v)
        energies = energies + np.real(np.diag(x2))
        s = s1 + _generator(e0, x2, off, "second order", check_ratio=False)
    return energies, s


def sw_block_eliminate(h0, v, low_indices, order: int = 2) -> np.ndarray:
    """Effective Hamiltonian on the ``low_indices`` block of ``H0 + V``.

    The returned matrix is indexed in the order given by ``low_indices``.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    e0 = _as_diagonal(h0)
    v = np.asarray(v, dtype=complex)
    n = len(e0)
    low = np.asarray(list(low_indices), dtype=int)
    if len(set(low.tolist())) != len(low) or np.any((low < 0) | (low >= n)):
        raise ValueError("low_indices must be distinct indices into H0")
    in_low = np.zeros(n, dtype=bool)
    in_low[low] = True
    between = in_low[:, None] ^ in_low[None, :]

    h_eff = np.diag(e0).astype(complex) + v
    if order == 2:
        s1 = _generator(e0, v, between, "block elimination")
        h_eff = h_eff + _second_order_cross(np.diag(e0), s1, v)
    return h_eff[np.ix_(low, low)]
