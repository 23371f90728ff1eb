"""Linear algebra on the truncated Fock space of two transmons.

Basis states are ordered ``|n1 n2>`` with the second mode's index varying
fastest, so ``index = n1 * d + n2``. Operators are plain complex
:class:`numpy.ndarray` objects; this module only supplies constructors and
the two decompositions the rest of the package relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-9


@dataclass(frozen=True)
class FockSpace:
    """Two ``d``-level modes."""

    d: int = 3

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"levels per transmon must be an integer >= 2, got {self.d!r}")

    @property
    def dim(self) -> int:
        return self.d * self.d

    def index(self, n1: int, n2: int) -> int:
        if not (0 <= n1 < self.d and 0 <= n2 < self.d):
            raise ValueError(f"|{n1}{n2}> is outside a {self.d}-level truncation")
        return n1 * self.d + n2

    @cached_property
    def labels(self) -> tuple[tuple[int, int], ...]:
        return tuple((n1, n2) for n1 in range(self.d) for n2 in range(self.d))

    @cached_property
    def computational_indices(self) -> tuple[int, int, int, int]:
        return tuple(self.index(n1, n2) for n1, n2 in ((0, 0), (0, 1), (1, 0), (1, 1)))

    def annihilation(self, mode: int) -> np.ndarray:
        """``a (x) I`` for ``mode=1`` or ``I (x) b`` for ``mode=2``."""
        if mode not in (1, 2):
            raise ValueError(f"mode must be 1 or 2, got {mode!r}")
        return _annihilation(self.d, mode).copy()

    def number(self, mode: int) -> np.ndarray:
        a = self.annihilation(mode)
        return a.conj().T @ a

    def total_number(self) -> np.ndarray:
        return self.number(1) + self.number(2)

    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)

    def basis_ket(self, n1: int, n2: int) -> np.ndarray:
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.index(n1, n2)] = 1.0
        return psi

    def excitation_numbers(self) -> np.ndarray:
        return np.array([n1 + n2 for n1, n2 in self.labels])


@lru_cache(maxsize=None)
def _annihilation(d: int, mode: int) -> np.ndarray:
    single = np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1).astype(complex)
    eye = np.eye(d, dtype=complex)
    return np.kron(single, eye) if mode == 1 else np.kron(eye, single)


def ket(amplitudes) -> np.ndarray:
    """Return a normalized copy of ``amplitudes``; zero vectors are rejected."""
    psi = np.asarray(amplitudes, dtype=complex).ravel()
    norm = np.linalg.norm(psi)
    if not np.isfinite(norm) or norm == 0:
        raise ValueError("cannot normalize a zero or non-finite vector")
    return psi / norm


def is_hermitian(op: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    op = np.asarray(op)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(op), initial=0.0)))
    return float(np.max(np.abs(op - op.conj().T), initial=0.0)) <= tol * scale


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def eigh(op: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and unitary eigenvectors of a Hermitian matrix.

    Raises:
        ValueError: if ``op`` is not Hermitian. The tolerance is relative to the
            largest entry so that Hamiltonians in rad/s (entries ~1e10) pass.
    """
    op = np.asarray(op)
    if not is_hermitian(op):
        raise ValueError("eigh requires a Hermitian matrix")
    return np.linalg.eigh(0.5 * (op + op.conj().T))


def expm(op: np.ndarray, scale: complex = 1.0) -> np.ndarray:
    """``exp(scale * op)``.

    Hermitian ``op`` goes through its eigendecomposition, which keeps
    ``exp(-1j * t * H)`` unitary to machine precision. Anything else falls back
    to scaling-and-squaring with a Pade approximant.
    """
    op = np.asarray(op, dtype=complex)
    if not np.all(np.isfinite(op)):
        raise ValueError("expm requires finite entries")
    if is_hermitian(op):
        w, v = eigh(op)
        return (v * np.exp(scale * w)) @ v.conj().T
    return scipy.linalg.expm(scale * op)


def propagator(hamiltonian: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i H t)`` for Hermitian ``H``."""
    return expm(hamiltonian, -1j * t)
