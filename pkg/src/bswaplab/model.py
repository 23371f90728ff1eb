"""Two coupled transmons driven by a single microwave tone.

All frequencies are angular (rad/s) and all times are seconds. Use
:func:`ghz` / :func:`to_ghz` at the boundary when working with linear
frequencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.optimize

from .errors import CalibrationError
from .hilbert import FockSpace, eigh

TWO_PI = 2.0 * math.pi

COMPUTATIONAL_LABELS = ((0, 0), (0, 1), (1, 0), (1, 1))


def ghz(f: float) -> float:
    """Linear frequency in GHz -> angular frequency in rad/s."""
    return TWO_PI * 1e9 * f


def mhz(f: float) -> float:
    return TWO_PI * 1e6 * f


def khz(f: float) -> float:
    return TWO_PI * 1e3 * f


def to_ghz(w: float) -> float:
    return w / (TWO_PI * 1e9)


@dataclass(frozen=True)
class TransmonParams:
    omega01: float
    delta: float

    def __post_init__(self):
        if not self.omega01 > 0:
            raise ValueError(f"omega01 must be positive, got {self.omega01!r}")


@dataclass(frozen=True)
class DeviceParams:
    q1: TransmonParams
    q2: TransmonParams
    J: float = 0.0
    lam: float = 1.0
    space: FockSpace = field(default_factory=FockSpace)

    @property
    def Delta(self) -> float:
        """Qubit-qubit detuning ``omega1 - omega2``."""
        return self.q1.omega01 - self.q2.omega01

    @property
    def d(self) -> int:
        return self.space.d

    def with_J(self, J: float) -> DeviceParams:
        return replace(self, J=float(J))

    def with_levels(self, d: int) -> DeviceParams:
        return replace(self, space=FockSpace(d))


@dataclass(frozen=True)
class DriveParams:
    """Monochromatic drive. ``omega2`` defaults to ``lam * amplitude``."""

    amplitude: float
    frequency: float
    phase: float = 0.0
    omega2: float | None = None

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError(f"drive amplitude must be non-negative, got {self.amplitude!r}")
        object.__setattr__(self, "phase", float(self.phase) % TWO_PI)

    def amplitudes(self, dev: DeviceParams) -> tuple[float, float]:
        o2 = dev.lam * self.amplitude if self.omega2 is None else self.omega2
        return self.amplitude, o2


# Transmons measured inside the enclosure; anharmonicity is E12 - E01.
REFERENCE_FREQUENCIES_GHZ = {
    "q1_freq": 4.3796,
    "q1_anharm": -0.2393,  # 4.1403 - 4.3796
    "q2_freq": 4.61368,
    "q2_anharm": -0.24278,  # 4.3709 - 4.61368
}
REFERENCE_ZZ = khz(90.0)
# fit_J(reference_device(J=0), REFERENCE_ZZ) at d=3, frozen.
REFERENCE_J = 3915490.9512597076


def reference_device(J: float | None = REFERENCE_J, d: int = 3, lam: float = 1.0) -> DeviceParams:
    f = REFERENCE_FREQUENCIES_GHZ
    return DeviceParams(
        q1=TransmonParams(ghz(f["q1_freq"]), ghz(f["q1_anharm"])),
        q2=TransmonParams(ghz(f["q2_freq"]), ghz(f["q2_anharm"])),
        J=0.0 if J is None else J,
        lam=lam,
        space=FockSpace(d),
    )


def _ladders(space: FockSpace):
    a = space.annihilation(1)
    b = space.annihilation(2)
    return a, b


def system_hamiltonian(dev: DeviceParams) -> np.ndarray:
    """Static Hamiltonian: two Kerr oscillators with exchange coupling."""
    a, b = _ladders(dev.space)
    na = a.conj().T @ a
    nb = b.conj().T @ b
    d1, d2 = dev.q1.delta, dev.q2.delta
    h = (dev.q1.omega01 - d1 / 2) * na + (d1 / 2) * (na @ na)
    h += (dev.q2.omega01 - d2 / 2) * nb + (d2 / 2) * (nb @ nb)
    h += dev.J * (a.conj().T @ b + a @ b.conj().T)
    return h


def drive_operator(dev: DeviceParams, drv: DriveParams) -> np.ndarray:
    """``Omega1 (a + a^dag) + Omega2 (b + b^dag)``."""
    a, b = _ladders(dev.space)
    o1, o2 = drv.amplitudes(dev)
    return o1 * (a + a.conj().T) + o2 * (b + b.conj().T)


def drive_hamiltonian(dev: DeviceParams, drv: DriveParams, t: float) -> np.ndarray:
    return math.cos(drv.frequency * t + drv.phase) * drive_operator(dev, drv)


def rwa_drive_operator(dev: DeviceParams, drv: DriveParams) -> np.ndarray:
    """Drive term in the frame rotating at the drive frequency, counter-rotating terms dropped."""
    a, b = _ladders(dev.space)
    o1, o2 = drv.amplitudes(dev)
    e = np.exp(1j * drv.phase)
    h = 0.5 * o1 * (e * a) + 0.5 * o2 * (e * b)
    return h + h.conj().T


def rwa_hamiltonian(dev: DeviceParams, drv: DriveParams) -> np.ndarray:
    """Time-independent Hamiltonian in the frame rotating at ``drv.frequency``."""
    return (
        system_hamiltonian(dev)
        - drv.frequency * dev.space.total_number()
        + rwa_drive_operator(dev, drv)
    )


@dataclass(frozen=True)
class DressedStates:
    """Eigenstates of the static Hamiltonian labelled by their dominant bare state.

    ``vectors[:, k]`` is the dressed state with label ``labels[k]``; columns are
    in bare-basis order, so ``vectors`` is close to the identity for weak
    coupling. Each column is phased so its overlap with its own bare state is
    real and positive.
    """

    energies: np.ndarray
    vectors: np.ndarray
    labels: tuple[tuple[int, int], ...]
    ambiguous: tuple[bool, ...]

    def index(self, n1: int, n2: int) -> int:
        return self.labels.index((n1, n2))

    def energy(self, n1: int, n2: int) -> float:
        return float(self.energies[self.index(n1, n2)])

    def state(self, n1: int, n2: int) -> np.ndarray:
        return self.vectors[:, self.index(n1, n2)]

    @property
    def computational(self) -> np.ndarray:
        """``dim x 4`` isometry onto dressed |00>, |01>, |10>, |11>."""
        return np.stack([self.state(*lab) for lab in COMPUTATIONAL_LABELS], axis=1)

    @property
    def any_ambiguous(self) -> bool:
        return any(self.ambiguous)


# Overlap ratio below which two bare labels compete for one eigenvector.
_AMBIGUITY_RATIO = 0.9


def dressed_states(dev: DeviceParams) -> DressedStates:
    h = system_hamiltonian(dev)
    w, v = eigh(h)
    overlap = np.abs(v) ** 2  # overlap[bare, eig]
    rows, cols = scipy.optimize.linear_sum_assignment(-overlap)
    order = np.empty(len(w), dtype=int)
    order[rows] = cols  # bare index -> eigen index
    vecs = v[:, order].copy()
    for k in range(len(w)):
        c = vecs[k, k]
        vecs[:, k] *= np.conj(c) / abs(c) if abs(c) > 0 else 1.0
    ambiguous = []
    for k in range(len(w)):
        col = np.sort(overlap[:, order[k]])[::-1]
        second = col[1] if len(col) > 1 else 0.0
        ambiguous.append(bool(second >= _AMBIGUITY_RATIO * col[0]))
    return DressedStates(
        energies=w[order].copy(),
        vectors=vecs,
        labels=dev.space.labels,
        ambiguous=tuple(ambiguous),
    )


@dataclass(frozen=True)
class Transition:
    initial: tuple[int, int]
    final: tuple[int, int]
    frequency: float
    photons: int
    ambiguous: bool = False

    @property
    def label(self) -> str:
        i, f = self.initial, self.final
        return f"|{i[0]}{i[1]}>->|{f[0]}{f[1]}>"


@dataclass(frozen=True)
class TransitionTable:
    rows: tuple[Transition, ...]

    def find(self, initial, final, photons: int | None = None) -> Transition:
        for row in self.rows:
            if row.initial == tuple(initial) and row.final == tuple(final):
                if photons is None or row.photons == photons:
                    return row
        raise KeyError(f"no transition {initial}->{final}")

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)


def spectrum(dev: DeviceParams) -> TransitionTable:
    """One- and two-photon lines out of the ground and singly excited states.

    A two-photon line is reported at half the energy difference, i.e. at the
    drive frequency that excites it.
    """
    ds = dressed_states(dev)
    rows = []
    for initial in ((0, 0), (0, 1), (1, 0)):
        n_i = sum(initial)
        e_i = ds.energy(*initial)
        for final in ds.labels:
            photons = sum(final) - n_i
            if photons not in (1, 2):
                continue
            freq = (ds.energy(*final) - e_i) / photons
            if freq <= 0:
                continue
            amb = ds.ambiguous[ds.index(*initial)] or ds.ambiguous[ds.index(*final)]
            rows.append(Transition(initial, final, freq, photons, amb))
    rows.sort(key=lambda r: (r.photons, r.frequency))
    return TransitionTable(tuple(rows))


def static_zz(dev: DeviceParams) -> float:
    """``E11 - E10 - E01 + E00`` from the exact dressed spectrum."""
    if dev.J == 0:
        return 0.0  # bare levels are exact; avoid eigensolver rounding of 1e10-sized energies
    ds = dressed_states(dev)
    return ds.energy(1, 1) - ds.energy(1, 0) - ds.energy(0, 1) + ds.energy(0, 0)


FIT_J_TOL = TWO_PI * 1.0  # absolute tolerance on J; gives |ZZ error| << 2pi*10 Hz


def fit_J(dev: DeviceParams, target_zz: float, grid: int = 400) -> float:
    """Smallest positive exchange coupling that reproduces ``target_zz``.

    The bracket ``(0, |Delta|/2)`` is scanned on a quadratic grid (ZZ grows
    like J**2) for the first sign change, which is then refined with Brent's
    method.
    """
    if dev.d < 3:
        raise CalibrationError("static ZZ vanishes for two-level truncation; need d >= 3")
    if target_zz == 0:
        return 0.0
    upper = abs(dev.Delta) / 2

    def residual(J):
        return static_zz(dev.with_J(J)) - target_zz

    js = upper * np.linspace(0.0, 1.0, grid + 1)[1:] ** 2
    prev_j, prev_r = 0.0, -target_zz
    for j in js:
        r = residual(j)
        if np.sign(r) != np.sign(prev_r):
            J = scipy.optimize.brentq(residual, prev_j, j, xtol=FIT_J_TOL, rtol=1e-15)
            return float(J)
        prev_j, prev_r = j, r
    raise CalibrationError(
        f"static ZZ never reaches {target_zz:.6g} rad/s for J in (0, {upper:.6g}] rad/s"
    )
