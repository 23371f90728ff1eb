"""Effective two-qubit dynamics of the two-photon |00> <-> |11> drive.

Closed-form second-order coefficients for the drive-induced Bell-rotation
rate, Stark shifts and ZZ, the detuning calibration that makes the Stark
shifted |00> and |11> degenerate, the ideal gate unitaries, and a numerical
Schrieffer-Wolff pipeline used to validate the closed forms.

The drive frequency is parametrized by its offset ``delta`` from the qubit
midpoint, ``omega_d = (omega1 + omega2) / 2 - delta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .errors import CalibrationError, SingularityError
from .hilbert import propagator
from .model import TWO_PI, DeviceParams, DriveParams, dressed_states, rwa_hamiltonian, system_hamiltonian
from .schrieffer_wolff import sw_block_eliminate, sw_diagonalize

POLE_RTOL = 1e-6
DELTA_TOL = TWO_PI * 1e-3

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)


def two_qubit(p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    return np.kron(p1, p2)


IZ = two_qubit(I2, Z)
ZI = two_qubit(Z, I2)
ZZ = two_qubit(Z, Z)


@dataclass(frozen=True)
class EffectiveCoefficients:
    omega_B: float
    omega_S: float
    alpha_zz: float
    alpha_sum: float
    alpha_diff: float
    delta_cal: float

    def hamiltonian(self, phi: float = 0.0) -> np.ndarray:
        """4x4 effective Hamiltonian in the frame of the drive."""
        xx, yy = two_qubit(X, X), two_qubit(Y, Y)
        xy, yx = two_qubit(X, Y), two_qubit(Y, X)
        return (
            self.alpha_sum * (IZ + ZI) / 2
            + self.alpha_diff * (IZ - ZI) / 2
            + self.alpha_zz * ZZ / 4
            + self.omega_B * math.cos(2 * phi) * (xx - yy) / 4
            + self.omega_B * math.sin(2 * phi) * (xy + yx) / 4
            + self.omega_S * (xx + yy) / 2
        )


def _natural_scale(dev: DeviceParams) -> float:
    vals = [abs(dev.Delta), abs(dev.q1.delta), abs(dev.q2.delta)]
    return float(np.prod(vals) ** (1 / 3))


def _check_poles(dev: DeviceParams, **factors: float) -> None:
    threshold = POLE_RTOL * _natural_scale(dev)
    for name, value in factors.items():
        if abs(value) <= threshold:
            raise SingularityError(
                f"denominator factor {name} = {value:.4g} rad/s is within "
                f"{threshold:.3g} rad/s of a pole"
            )


def omega_B_main(dev: DeviceParams, omega: float) -> float:
    """Bell-rotation rate for drive amplitude ``omega`` at zero detuning offset.

    The J**2 cross term carries ``4 J lam (delta1 + delta2)``. That factor of 4
    reproduces the J**2 coefficient of both the numerical Schrieffer-Wolff
    pipeline and exact diagonalization (see ``tests/test_effective.py``).
    """
    J, lam = dev.J, dev.lam
    d1, d2, D = dev.q1.delta, dev.q2.delta, dev.Delta
    _check_poles(dev, **{"delta2-Delta": d2 - D, "delta1+Delta": d1 + D, "Delta": D})
    num = -4 * J * lam * (d1 + d2) + lam**2 * d2 * (d1 + D) + d1 * (d2 - D)
    return -2 * J * omega**2 * num / ((d2 - D) * (d1 + D) * D**2)


def omega_B_full(dev: DeviceParams, omega1: float, omega2: float, delta: float) -> float:
    """Bell-rotation rate with independent amplitudes and detuning offset ``delta``."""
    J = dev.J
    d1, d2, D = dev.q1.delta, dev.q2.delta, dev.Delta
    _check_poles(
        dev,
        **{"delta2-Delta": d2 - D, "delta1+Delta": d1 + D, "Delta-2delta": D - 2 * delta, "Delta+2delta": D + 2 * delta},
    )
    num = (
        -4 * J * omega1 * omega2 * (d1 + d2)
        + omega2**2 * d2 * (d1 + D)
        + omega1**2 * d1 * (d2 - D)
    )
    return -2 * J * num / ((d2 - D) * (d1 + D) * (-4 * delta**2 + D**2))


def omega_S(dev: DeviceParams, omega1: float, omega2: float, delta: float) -> float:
    """Drive-induced flip-flop rate between |01> and |10>."""
    J = dev.J
    d1, d2, D = dev.q1.delta, dev.q2.delta, dev.Delta
    _check_poles(
        dev,
        **{"Delta": D, "delta2-Delta": d2 - D, "delta1+Delta": d1 + D, "Delta-2delta": D - 2 * delta, "Delta+2delta": D + 2 * delta},
    )
    num = J * omega1 * omega2 * (d1 - d2) + omega2**2 * d2 * (d1 + D) + omega1**2 * d1 * (-d2 + D)
    return -2 * J * delta * num / (D * (d2 - D) * (d1 + D) * (-4 * delta**2 + D**2))


def alpha_coeffs(dev: DeviceParams, omega1: float, omega2: float, delta: float) -> tuple[float, float, float]:
    """``(alpha_zz, (alpha_IZ + alpha_ZI)/2, (alpha_IZ - alpha_ZI)/2)`` to first order in J."""
    J = dev.J
    d1, d2, D, dl = dev.q1.delta, dev.q2.delta, dev.Delta, delta
    o1, o2 = omega1, omega2
    p_a = 2 * (dl + d2) - D
    p_b = 2 * (dl + d1) + D
    _check_poles(
        dev,
        **{
            "delta2-Delta": d2 - D,
            "2(delta+delta2)-Delta": p_a,
            "2(delta+delta1)+Delta": p_b,
            "2delta-Delta": 2 * dl - D,
            "2delta+Delta": 2 * dl + D,
        },
    )
    alpha_zz = -(o2**2) / p_a - 2 * (
        (
            -8 * dl**2 * (dl + d1)
            + 16 * d1 * d2**2
            - 4 * (dl**2 + 4 * d1 * d2) * D
            + 2 * (dl + d1) * D**2
            + D**3
        )
        * o1
        * o2
    ) * J / ((d2 - D) * p_a * p_b * (-4 * dl**2 + D**2))

    alpha_sum = (
        -dl
        - d1 * o1**2 / ((2 * dl + D) * p_b)
        - d2 * o2**2 / (4 * dl * (dl + d2) - 2 * (2 * dl + d2) * D + D**2)
    ) + 4 * (2 * dl * (d1 + d2) + (-d1 + d2) * D) * o1 * o2 * J / (p_a * p_b * (4 * dl**2 - D**2))

    alpha_diff = 0.5 * (D + 2 * d1 * o1**2 / ((2 * dl + D) * p_b) - o2**2 / (2 * dl - D)) + (
        (4 * dl**2 + 4 * dl * (d1 - d2 + D) + D * (-2 * (d1 + d2) + D)) * o1 * o2 * J
    ) / ((d2 - D) * p_b * (-4 * dl**2 + D**2))
    return float(alpha_zz), float(alpha_sum), float(alpha_diff)


def _alpha_sum(dev, omega1, omega2, delta):
    return alpha_coeffs(dev, omega1, omega2, delta)[1]


def calibrate_delta(dev: DeviceParams, omega1: float, omega2: float | None = None, grid: int = 2001) -> float:
    """Detuning offset that cancels the common Stark shift (``alpha_sum = 0``).

    Among the roots in ``|delta| < |Delta|/4`` the one closest to zero is
    returned; it is the root that connects continuously to ``delta = 0`` at
    zero drive.
    """
    if omega2 is None:
        omega2 = dev.lam * omega1
    if omega1 == 0 and omega2 == 0:
        return 0.0
    limit = abs(dev.Delta) / 4
    xs = np.linspace(-limit, limit, grid)
    fs = []
    for x in xs:
        try:
            fs.append(_alpha_sum(dev, omega1, omega2, x))
        except SingularityError:
            fs.append(np.nan)
    fs = np.asarray(fs)
    candidates = []
    for k in range(len(xs) - 1):
        fa, fb = fs[k], fs[k + 1]
        if not (np.isfinite(fa) and np.isfinite(fb)) or np.sign(fa) == np.sign(fb):
            continue
        mid = 0.5 * (xs[k] + xs[k + 1])
        try:
            fm = _alpha_sum(dev, omega1, omega2, mid)
        except SingularityError:
            continue
        if abs(fm) > max(abs(fa), abs(fb)):
            continue  # sign change across a pole
        candidates.append((xs[k], xs[k + 1]))
    if not candidates:
        raise CalibrationError(
            f"alpha_IZ + alpha_ZI has no root for |delta| < {limit:.4g} rad/s "
            f"(Omega1={omega1:.4g}, Omega2={omega2:.4g}; endpoint values {fs[0]:.4g}, {fs[-1]:.4g})"
        )
    lo, hi = min(candidates, key=lambda ab: abs(ab[0] + ab[1]))
    root = scipy.optimize.brentq(
        lambda x: _alpha_sum(dev, omega1, omega2, x), lo, hi, xtol=DELTA_TOL, rtol=4 * np.finfo(float).eps
    )
    return float(root)


def effective_coefficients(dev: DeviceParams, omega1: float, omega2: float | None = None, delta: float | None = None) -> EffectiveCoefficients:
    if omega2 is None:
        omega2 = dev.lam * omega1
    if delta is None:
        delta = calibrate_delta(dev, omega1, omega2)
    azz, asum, adiff = alpha_coeffs(dev, omega1, omega2, delta)
    return EffectiveCoefficients(
        omega_B=omega_B_full(dev, omega1, omega2, delta),
        omega_S=omega_S(dev, omega1, omega2, delta),
        alpha_zz=azz,
        alpha_sum=asum,
        alpha_diff=adiff,
        delta_cal=delta,
    )


def drive_frequency(dev: DeviceParams, delta: float) -> float:
    return 0.5 * (dev.q1.omega01 + dev.q2.omega01) - delta


def solve_amplitude(dev: DeviceParams, target_rate: float) -> float:
    """Drive amplitude whose calibrated ``|omega_B_full|`` equals ``target_rate``.

    ``omega2`` follows ``lam * omega1`` and ``delta`` is recalibrated at every
    trial amplitude.
    """
    if target_rate <= 0:
        raise ValueError("target rate must be positive")

    def rate(omega):
        delta = calibrate_delta(dev, omega)
        return abs(omega_B_full(dev, omega, dev.lam * omega, delta))

    guess = math.sqrt(target_rate / abs(omega_B_main(dev, 1.0)))
    lo, hi = 0.5 * guess, 2.0 * guess
    for _ in range(40):
        if rate(hi) > target_rate:
            break
        lo, hi = hi, 2 * hi
    else:
        raise CalibrationError(f"no amplitude reaches |Omega_B| = {target_rate:.4g} rad/s")
    while rate(lo) > target_rate:
        lo /= 2
    return float(
        scipy.optimize.brentq(lambda o: rate(o) - target_rate, lo, hi, xtol=1e-9 * guess, rtol=1e-13)
    )


def enhancement_factor(dev: DeviceParams) -> float:
    """Gain of the Bell-rotation rate over the two-level limit when ``Delta -> delta2``."""
    d2, D = dev.q2.delta, dev.Delta
    if d2 - D == 0:
        raise SingularityError("enhancement factor has a pole at delta2 = Delta")
    return d2 / (2 * (d2 - D))


def u_bell(omega_B: float, t: float, phi: float = 0.0) -> np.ndarray:
    """Rotation in the {|00>, |11>} subspace by angle ``omega_B * t``."""
    c = math.cos(omega_B * t / 2)
    s = math.sin(omega_B * t / 2)
    u = np.eye(4, dtype=complex)
    u[0, 0] = c
    u[3, 3] = c
    u[0, 3] = -1j * np.exp(-2j * phi) * s
    u[3, 0] = -1j * np.exp(2j * phi) * s
    return u


def u_frame_corrections(alpha_zz: float, alpha_diff: float, t: float) -> np.ndarray:
    """``exp(-i alpha_zz ZZ t/4) exp(-i alpha_diff (IZ - ZI) t/2)`` (both diagonal)."""
    phases = -1j * (alpha_zz * np.diag(ZZ).real * t / 4 + alpha_diff * np.diag(IZ - ZI).real * t / 2)
    return np.diag(np.exp(phases))


def effective_unitary(coeffs: EffectiveCoefficients, t: float, phi: float = 0.0) -> np.ndarray:
    return u_bell(coeffs.omega_B, t, phi) @ u_frame_corrections(coeffs.alpha_zz, coeffs.alpha_diff, t)


# Bell ("magic") basis used for the local invariants.
MAGIC = np.array(
    [[1, 0, 0, 1j], [0, 1j, 1, 0], [0, 1j, -1, 0], [1, 0, 0, -1j]], dtype=complex
) / math.sqrt(2)

ISWAP = np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]], dtype=complex)
SQRT_ISWAP = np.array(
    [[1, 0, 0, 0], [0, 1 / math.sqrt(2), 1j / math.sqrt(2), 0], [0, 1j / math.sqrt(2), 1 / math.sqrt(2), 0], [0, 0, 0, 1]],
    dtype=complex,
)


def local_invariants(u: np.ndarray) -> np.ndarray:
    """Makhlin invariants ``[Re G1, Im G1, G2]`` of a two-qubit unitary."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (4, 4):
        raise ValueError("local invariants need a 4x4 unitary")
    um = MAGIC.conj().T @ u @ MAGIC
    det = np.linalg.det(um)
    m = um.T @ um
    tr2 = np.trace(m) ** 2
    g1 = tr2 / (16 * det)
    g2 = (tr2 - np.trace(m @ m)) / (4 * det)
    return np.array([g1.real, g1.imag, g2.real])


def low_manifold_partner(dev: DeviceParams) -> tuple[int, int]:
    """Second-excited state that joins |00>, |11> in the low-energy manifold."""
    if abs(dev.Delta - dev.q2.delta) <= abs(dev.Delta + dev.q1.delta):
        return (0, 2)
    return (2, 0)


def _dressing_frame(dev: DeviceParams, method: str) -> np.ndarray:
    """Unitary whose columns are the dressed states of the static Hamiltonian."""
    if method == "exact":
        return dressed_states(dev).vectors
    if method == "sw":
        h = system_hamiltonian(dev)
        h0 = np.real(np.diag(h))
        _, s = sw_diagonalize(h0, h - np.diag(h0), order=2)
        return propagator(s, 1.0)
    raise ValueError(f"unknown dressing method {method!r}")


def numeric_effective_hamiltonian(
    dev: DeviceParams,
    omega1: float,
    omega2: float,
    delta: float,
    phi: float = 0.0,
    dressing: str = "sw",
) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Second-order low-manifold Hamiltonian of the driven device.

    The static Hamiltonian is first diagonalized (perturbatively with
    ``dressing="sw"``, exactly with ``"exact"``), the drive is carried into
    that frame, and the states outside ``{|00>, |11>, partner}`` are
    eliminated by block Schrieffer-Wolff in the frame of the drive.
    """
    drv = DriveParams(omega1, drive_frequency(dev, delta), phi, omega2=omega2)
    a = _dressing_frame(dev, dressing)
    h = a.conj().T @ rwa_hamiltonian(dev, drv) @ a
    h0 = np.real(np.diag(h))
    labels = [(0, 0), (1, 1), low_manifold_partner(dev)]
    low = [dev.space.index(*lab) for lab in labels]
    return sw_block_eliminate(h0, h - np.diag(h0), low, order=2), labels


def numeric_bell_coupling(dev: DeviceParams, omega1: float, omega2: float, delta: float, dressing: str = "sw") -> complex:
    """``<00|H_eff|11>``; equals ``omega_B / 2`` at ``phi = 0``."""
    h_eff, _ = numeric_effective_hamiltonian(dev, omega1, omega2, delta, dressing=dressing)
    return complex(h_eff[0, 1])


def numeric_alpha_sum(dev: DeviceParams, omega1: float, omega2: float, delta: float) -> float:
    """Common Stark shift ``(E00 - E11)/2`` from second-order diagonalization."""
    drv = DriveParams(omega1, drive_frequency(dev, delta), 0.0, omega2=omega2)
    a = dressed_states(dev).vectors
    h = a.conj().T @ rwa_hamiltonian(dev, drv) @ a
    h0 = np.real(np.diag(h))
    energies, _ = sw_diagonalize(h0, h - np.diag(h0), order=2)
    sp = dev.space
    return float(energies[sp.index(0, 0)] - energies[sp.index(1, 1)]) / 2
