"""Time-domain simulation of pulse schedules.

Every segment is integrated in the frame rotating at its own drive
frequency (where a flat pulse is time independent) and then moved to a
common *qubit frame*, the interaction picture of the static Hamiltonian.
All drive phases refer to absolute schedule time, so a phase-continuous
oscillator is obtained by reusing the same ``DriveParams``.

Open-system evolution uses the Lindblad equation with column-stacked
superoperators, ``vec(A X B) = (B^T (x) A) vec(X)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.optimize

from .effective import calibrate_delta, drive_frequency, omega_B_full, solve_amplitude
from .errors import CalibrationError, NoOscillationError
from .hilbert import eigh, propagator
from .model import (
    COMPUTATIONAL_LABELS,
    TWO_PI,
    DeviceParams,
    DriveParams,
    dressed_states,
    drive_hamiltonian,
    rwa_hamiltonian,
    static_zz,
    system_hamiltonian,
)

DEFAULT_DT = 0.1e-9
DEFAULT_RAMP = 10e-9
DEFAULT_GATE_TIME = 800e-9
SHAPES = ("flat", "gaussian", "idle")
FRAMES = ("rwa", "lab")


# ---------------------------------------------------------------- schedules


@dataclass(frozen=True)
class PulseSegment:
    """One pulse.

    ``flat`` pulses may carry cosine ramps of length ``ramp`` at both ends.
    ``gaussian`` pulses span ``[-2 sigma, 2 sigma]`` and are shifted and
    rescaled to start and end at zero with unit peak.
    """

    shape: str
    duration: float
    drive: DriveParams | None = None
    sigma: float | None = None
    ramp: float = 0.0
    frame: str = "rwa"

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown pulse shape {self.shape!r}; expected one of {SHAPES}")
        if self.frame not in FRAMES:
            raise ValueError(f"unknown frame {self.frame!r}; expected one of {FRAMES}")
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ValueError(f"segment duration must be positive and finite, got {self.duration!r}")
        if self.shape != "idle" and self.drive is None:
            raise ValueError(f"{self.shape} segment needs a drive")
        if self.shape == "gaussian":
            sigma = self.duration / 4 if self.sigma is None else self.sigma
            if not sigma > 0:
                raise ValueError("gaussian sigma must be positive")
            if not math.isclose(self.duration, 4 * sigma, rel_tol=1e-9):
                raise ValueError("gaussian pulses are truncated at +-2 sigma: duration must equal 4 sigma")
            object.__setattr__(self, "sigma", float(sigma))
        if self.ramp < 0 or 2 * self.ramp > self.duration:
            raise ValueError("ramp must satisfy 0 <= 2 * ramp <= duration")

    @property
    def constant(self) -> bool:
        return self.shape == "idle" or (self.shape == "flat" and self.ramp == 0)

    def envelope(self, t: np.ndarray | float) -> np.ndarray:
        """Dimensionless envelope at local time ``t`` in ``[0, duration]``."""
        t = np.asarray(t, dtype=float)
        if self.shape == "idle":
            return np.zeros_like(t)
        if self.shape == "gaussian":
            x = (t - self.duration / 2) / self.sigma
            floor = math.exp(-2.0)
            return (np.exp(-0.5 * x**2) - floor) / (1 - floor)
        env = np.ones_like(t)
        if self.ramp > 0:
            r = self.ramp
            rise = 0.5 * (1 - np.cos(np.pi * np.clip(t, 0, r) / r))
            fall = 0.5 * (1 - np.cos(np.pi * np.clip(self.duration - t, 0, r) / r))
            env = np.minimum(rise, fall)
        return env

    def drive_at(self, scale: float) -> DriveParams:
        drv = self.drive
        o2 = None if drv.omega2 is None else drv.omega2 * scale
        return DriveParams(drv.amplitude * scale, drv.frequency, drv.phase, omega2=o2)


@dataclass(frozen=True)
class Schedule:
    """Ordered segments; time zero is the start of the first segment."""

    segments: tuple[PulseSegment, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("a schedule needs at least one segment")
        object.__setattr__(self, "segments", segs)

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def __add__(self, other: Schedule) -> Schedule:
        return Schedule(self.segments + other.segments)

    def starts(self) -> list[float]:
        out, t = [], 0.0
        for seg in self.segments:
            out.append(t)
            t += seg.duration
        return out


def flat_pulse(drive: DriveParams, duration: float, ramp: float = 0.0) -> PulseSegment:
    return PulseSegment("flat", duration, drive, ramp=ramp)


def idle(duration: float) -> PulseSegment:
    return PulseSegment("idle", duration)


def flat_top_duration(area_time: float, ramp: float) -> float:
    """Duration whose squared-envelope integral equals ``area_time``.

    A cosine ramp of length ``r`` contributes ``3 r / 8`` to the integral of
    the squared envelope, which is what sets a two-photon rotation angle.
    """
    return area_time + 2 * ramp * (1 - 3 / 8)


# ---------------------------------------------------------------- noise


@dataclass(frozen=True)
class NoiseParams:
    T1_q1: float = math.inf
    T1_q2: float = math.inf
    Tphi_q1: float = math.inf
    Tphi_q2: float = math.inf

    def __post_init__(self):
        for name in ("T1_q1", "T1_q2", "Tphi_q1", "Tphi_q2"):
            v = getattr(self, name)
            if not v > 0:
                raise ValueError(f"{name} must be positive or infinite, got {v!r}")

    @classmethod
    def from_T2(cls, T2_q1: float, T2_q2: float, T1_q1: float = math.inf, T1_q2: float = math.inf) -> NoiseParams:
        """Pure dephasing chosen so ``1/T2 = 1/(2 T1) + 1/Tphi`` on each transmon."""
        tphi = []
        for T2, T1 in ((T2_q1, T1_q1), (T2_q2, T1_q2)):
            rate = 1 / T2 - 1 / (2 * T1)
            if rate < 0:
                raise ValueError(f"T2 = {T2:.4g} s exceeds 2 T1 = {2 * T1:.4g} s")
            tphi.append(math.inf if rate == 0 else 1 / rate)
        return cls(T1_q1, T1_q2, tphi[0], tphi[1])

    @property
    def noiseless(self) -> bool:
        return all(math.isinf(v) for v in (self.T1_q1, self.T1_q2, self.Tphi_q1, self.Tphi_q2))

    def T2(self, qubit: int) -> float:
        T1, Tphi = (self.T1_q1, self.Tphi_q1) if qubit == 1 else (self.T1_q2, self.Tphi_q2)
        rate = 1 / (2 * T1) + 1 / Tphi
        return math.inf if rate == 0 else 1 / rate

    def collapse_operators(self, dev: DeviceParams) -> list[np.ndarray]:
        """Amplitude damping ``sqrt(1/T1) a`` and dephasing ``sqrt(2/Tphi) n`` per mode.

        With these rates a 0-1 coherence decays as ``exp(-t (1/(2 T1) + 1/Tphi))``.
        """
        sp = dev.space
        ops = []
        for mode, T1, Tphi in ((1, self.T1_q1, self.Tphi_q1), (2, self.T1_q2, self.Tphi_q2)):
            if math.isfinite(T1):
                ops.append(math.sqrt(1 / T1) * sp.annihilation(mode))
            if math.isfinite(Tphi):
                ops.append(math.sqrt(2 / Tphi) * sp.number(mode))
        return ops


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    n = int(round(math.sqrt(v.size)))
    return np.asarray(v).reshape((n, n), order="F")


def unitary_superop(u: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> U rho U^dag``."""
    return np.kron(u.conj(), u)


def hamiltonian_generator(h: np.ndarray) -> np.ndarray:
    eye = np.eye(h.shape[0])
    return -1j * (np.kron(eye, h) - np.kron(h.T, eye))


def dissipator(ops: list[np.ndarray], dim: int) -> np.ndarray:
    eye = np.eye(dim)
    out = np.zeros((dim * dim, dim * dim), dtype=complex)
    for L in ops:
        ldl = L.conj().T @ L
        out += np.kron(L.conj(), L) - 0.5 * np.kron(eye, ldl) - 0.5 * np.kron(ldl.T, eye)
    return out


# ---------------------------------------------------------------- propagation


def _check_dt(sched: Schedule, dt: float) -> None:
    if not dt > 0:
        raise ValueError("dt must be positive")
    shortest = min(s.duration for s in sched.segments)
    if dt > shortest / 10 * (1 + 1e-12):
        raise ValueError(
            f"dt = {dt:.3g} s is larger than a tenth of the shortest segment ({shortest:.3g} s)"
        )


def _segment_frequency(dev: DeviceParams, seg: PulseSegment) -> float:
    if seg.frame == "lab":
        return 0.0
    if seg.drive is not None:
        return seg.drive.frequency
    # Idle: any frame works; the qubit midpoint keeps the frame phases small.
    return 0.5 * (dev.q1.omega01 + dev.q2.omega01)


def _frame_unitary(dev: DeviceParams, omega_frame: float, t: float) -> np.ndarray:
    """``exp(i (H_sys - omega N) t)``: segment frame -> qubit frame at time ``t``."""
    h = system_hamiltonian(dev) - omega_frame * dev.space.total_number()
    return propagator(h, -t)


def _step_hamiltonian(dev: DeviceParams, seg: PulseSegment, t_local: float, t_abs: float) -> np.ndarray:
    scale = float(seg.envelope(t_local)) if seg.shape != "idle" else 0.0
    if seg.frame == "lab":
        h = system_hamiltonian(dev)
        if scale != 0.0:
            h = h + drive_hamiltonian(dev, seg.drive_at(scale), t_abs)
        return h
    if scale == 0.0:
        return system_hamiltonian(dev) - _segment_frequency(dev, seg) * dev.space.total_number()
    return rwa_hamiltonian(dev, seg.drive_at(scale))


# Fourth-order commutator-free step: two exponentials of Hamiltonians sampled
# at the Gauss-Legendre nodes of the step.
CF4_NODES = (0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6)
CF4_WEIGHTS = (0.25 - math.sqrt(3) / 6, 0.25 + math.sqrt(3) / 6)


def _pieces(seg: PulseSegment, dt: float) -> list[tuple[float, float, int]]:
    """``(start, length, steps)`` pieces covering a segment.

    ``steps == 0`` marks a piece with constant envelope, exponentiated in one
    go; shaped pieces are split into equal steps no longer than ``dt``.
    """

    def stepped(t0, length):
        return (t0, length, max(1, int(math.ceil(length / dt - 1e-9))))

    if seg.constant:
        return [(0.0, seg.duration, 0)]
    if seg.shape == "flat":
        r, plateau = seg.ramp, seg.duration - 2 * seg.ramp
        out = [stepped(0.0, r)]
        if plateau > 0:
            out.append((r, plateau, 0))
        out.append(stepped(seg.duration - r, r))
        return out
    return [stepped(0.0, seg.duration)]


@lru_cache(maxsize=256)
def _segment_unitary(dev: DeviceParams, seg: PulseSegment, t0: float, dt: float) -> np.ndarray:
    """Propagator of ``seg`` in its own frame, started at absolute time ``t0``.

    Only lab-frame segments depend on ``t0``; rotating-frame segments are
    cached independently of it by the caller passing ``t0 = 0``.
    """
    if seg.frame == "lab":
        pieces = [(0.0, seg.duration, max(1, int(math.ceil(seg.duration / dt - 1e-9))))]
    else:
        pieces = _pieces(seg, dt)
    u = np.eye(dev.space.dim, dtype=complex)
    for start, length, steps in pieces:
        if steps == 0:
            tm = start + length / 2
            u = propagator(_step_hamiltonian(dev, seg, tm, t0 + tm), length) @ u
            continue
        h = length / steps
        for k in range(steps):
            ta, tb = (start + (k + c) * h for c in CF4_NODES)
            h1 = _step_hamiltonian(dev, seg, ta, t0 + ta)
            h2 = _step_hamiltonian(dev, seg, tb, t0 + tb)
            w1, w2 = CF4_WEIGHTS
            u = propagator(w1 * h1 + w2 * h2, h) @ propagator(w2 * h1 + w1 * h2, h) @ u
    return u


def _split_phase(dev: DeviceParams, seg: PulseSegment) -> tuple[PulseSegment, np.ndarray | None]:
    """Zero-phase copy of a rotating-frame segment and the diagonal of ``exp(-i phase N)``.

    ``H(phase) = P H(0) P^dag`` with that diagonal ``P``, so segments that only
    differ in drive phase share one cached propagator.
    """
    if seg.frame != "rwa" or seg.drive is None or seg.drive.phase == 0.0:
        return seg, None
    base = replace(seg, drive=replace(seg.drive, phase=0.0))
    n = np.real(np.diag(dev.space.total_number()))
    return base, np.exp(-1j * seg.drive.phase * n)


def propagate_unitary(dev: DeviceParams, sched: Schedule, dt: float = DEFAULT_DT) -> np.ndarray:
    """Qubit-frame propagator of the whole schedule.

    Shaped pieces use the fourth-order commutator-free step; constant
    rotating-frame pieces (idle segments, flat-top plateaus) are
    exponentiated in one step, which is exact.
    """
    _check_dt(sched, dt)
    u = np.eye(dev.space.dim, dtype=complex)
    for seg, t0 in zip(sched.segments, sched.starts()):
        w = _segment_frequency(dev, seg)
        t_key = t0 if seg.frame == "lab" else 0.0
        base, p = _split_phase(dev, seg)
        u_seg = _segment_unitary(dev, base, t_key, dt)
        if p is not None:
            u_seg = p[:, None] * u_seg * p.conj()[None, :]
        t1 = t0 + seg.duration
        u = _frame_unitary(dev, w, t1) @ u_seg @ _frame_unitary(dev, w, t0).conj().T @ u
    return u


@lru_cache(maxsize=256)
def _segment_superop(dev: DeviceParams, seg: PulseSegment, noise: NoiseParams, dt: float) -> np.ndarray:
    if seg.frame != "rwa":
        raise ValueError("open-system propagation is only available in the rotating frame")
    dim = dev.space.dim
    diss = dissipator(noise.collapse_operators(dev), dim)
    m = np.eye(dim * dim, dtype=complex)
    for start, length, steps in _pieces(seg, dt):
        if steps == 0:
            gen = hamiltonian_generator(_step_hamiltonian(dev, seg, start + length / 2, 0.0)) + diss
            m = scipy.linalg.expm(gen * length) @ m
            continue
        h = length / steps
        w1, w2 = CF4_WEIGHTS
        for k in range(steps):
            g1, g2 = (
                hamiltonian_generator(_step_hamiltonian(dev, seg, start + (k + c) * h, 0.0)) + diss for c in CF4_NODES
            )
            m = scipy.linalg.expm((w1 * g1 + w2 * g2) * h) @ scipy.linalg.expm((w2 * g1 + w1 * g2) * h) @ m
    return m


def channel_superoperator(dev: DeviceParams, sched: Schedule, noise: NoiseParams, dt: float = DEFAULT_DT) -> np.ndarray:
    """Qubit-frame superoperator of the schedule under Lindblad noise.

    Steps exponentiate the full Lindbladian (same fourth-order splitting as
    the closed-system propagator); collapse operators are invariant under
    the number-conserving frame changes, so one dissipator serves every
    segment frame.
    """
    _check_dt(sched, dt)
    m = np.eye(dev.space.dim**2, dtype=complex)
    for seg, t0 in zip(sched.segments, sched.starts()):
        w = _segment_frequency(dev, seg)
        f0 = unitary_superop(_frame_unitary(dev, w, t0).conj().T)
        f1 = unitary_superop(_frame_unitary(dev, w, t0 + seg.duration))
        base, p = _split_phase(dev, seg)
        s_seg = _segment_superop(dev, base, noise, dt)
        if p is not None:
            ps = np.kron(p.conj(), p)
            s_seg = ps[:, None] * s_seg * ps.conj()[None, :]
        m = f1 @ s_seg @ f0 @ m
    return m


def propagate_density(
    dev: DeviceParams, sched: Schedule, noise: NoiseParams, rho0: np.ndarray, dt: float = DEFAULT_DT
) -> np.ndarray:
    """Final qubit-frame density matrix of the schedule applied to ``rho0``."""
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.ndim == 1:
        rho0 = np.outer(rho0, rho0.conj())
    rho = unvec(channel_superoperator(dev, sched, noise, dt) @ vec(rho0))
    return 0.5 * (rho + rho.conj().T)


# ---------------------------------------------------------------- traces


@dataclass(frozen=True)
class Trace:
    """Dressed-state populations on a time (or delay) grid."""

    times: np.ndarray
    populations: np.ndarray  # (n_times, dim), columns follow ``labels``
    labels: tuple[tuple[int, int], ...]
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.populations)
        if p.shape != (len(self.times), len(self.labels)):
            raise ValueError("populations must be (n_times, n_labels)")
        if np.any(p < -1e-6) or np.any(p > 1 + 1e-6) or np.any(np.abs(p.sum(axis=1) - 1) > 1e-6):
            raise ValueError("populations must lie in [0, 1] and sum to 1")

    def population(self, n1: int, n2: int) -> np.ndarray:
        return self.populations[:, self.labels.index((n1, n2))]

    @property
    def leakage(self) -> np.ndarray:
        comp = sum(self.population(*lab) for lab in COMPUTATIONAL_LABELS)
        return 1 - comp

    def observable(self, name: str) -> np.ndarray:
        """``"P11"``-style population, ``"leakage"``, or any key of ``extras``."""
        if name in self.extras:
            return np.asarray(self.extras[name])
        if name == "leakage":
            return self.leakage
        if len(name) == 3 and name[0] == "P" and name[1:].isdigit():
            return self.population(int(name[1]), int(name[2]))
        raise KeyError(f"unknown observable {name!r}")

    def records(self) -> dict[str, np.ndarray]:
        """Column-oriented output: time_ns, P00, P01, P10, P11, leakage, extras."""
        cols = {"time_ns": np.asarray(self.times) * 1e9}
        for lab in COMPUTATIONAL_LABELS:
            cols[f"P{lab[0]}{lab[1]}"] = self.population(*lab)
        cols["leakage"] = self.leakage
        for k, v in self.extras.items():
            cols[k] = np.asarray(v)
        return cols


def _populations(dev: DeviceParams, states: list[np.ndarray]) -> np.ndarray:
    vecs = dressed_states(dev).vectors
    out = []
    for s in states:
        if s.ndim == 1:
            p = np.abs(vecs.conj().T @ s) ** 2
        else:
            p = np.real(np.einsum("ik,ij,jk->k", vecs.conj(), s, vecs))
        p = np.clip(p, 0.0, 1.0)
        out.append(p / p.sum())
    return np.array(out)


def ground_state(dev: DeviceParams) -> np.ndarray:
    return dressed_states(dev).state(0, 0).copy()


def rabi_experiment(
    dev: DeviceParams,
    omega: float,
    omega_d: float,
    durations,
    noise: NoiseParams | None = None,
    ramp: float = 0.0,
    phase: float = 0.0,
    dt: float = DEFAULT_DT,
) -> Trace:
    """Populations after a flat two-photon pulse of each duration, starting in |00>."""
    durations = np.asarray(durations, dtype=float)
    psi0 = ground_state(dev)
    drv = DriveParams(omega, omega_d, phase)
    states = []
    for T in durations:
        if T <= 0:
            states.append(psi0 if noise is None else np.outer(psi0, psi0.conj()))
            continue
        sched = Schedule((flat_pulse(drv, T, ramp),))
        step = min(dt, T / 10)
        if noise is None or noise.noiseless:
            states.append(propagate_unitary(dev, sched, step) @ psi0)
        else:
            states.append(propagate_density(dev, sched, noise, psi0, step))
    return Trace(durations, _populations(dev, states), dev.space.labels)


# ---------------------------------------------------------------- frequency fits


@dataclass(frozen=True)
class FrequencyEstimate:
    value: float  # rad/s
    stderr: float
    snr: float


def extract_frequency(trace: Trace, observable: str = "P11", min_snr: float = 3.0) -> FrequencyEstimate:
    """Dominant angular frequency of ``observable``.

    A zero-padded FFT peak seeds a least-squares sinusoid fit. The SNR is the
    peak height over the median spectral magnitude.
    """
    t = np.asarray(trace.times, dtype=float)
    y = np.asarray(trace.observable(observable), dtype=float)
    if len(t) < 8:
        raise NoOscillationError("need at least 8 samples")
    steps = np.diff(t)
    if np.any(np.abs(steps - steps[0]) > 1e-6 * abs(steps[0])):
        raise ValueError("extract_frequency needs a uniform time grid")
    y0 = y - y.mean()
    if np.max(np.abs(y0)) < 1e-12:
        raise NoOscillationError(f"{observable} is constant")
    npad = 16 * len(y0)
    spec = np.abs(np.fft.rfft(y0 * np.hanning(len(y0)), npad))
    freqs = np.fft.rfftfreq(npad, steps[0]) * TWO_PI
    k = int(np.argmax(spec[1:])) + 1
    noise_floor = np.median(spec[1:])
    snr = float(spec[k] / noise_floor) if noise_floor > 0 else math.inf
    if snr < min_snr:
        raise NoOscillationError(f"spectral peak SNR {snr:.2f} below {min_snr}")
    w0 = freqs[k]

    def model(tt, w, a, b, c):
        return a * np.cos(w * tt) + b * np.sin(w * tt) + c

    amp0 = np.ptp(y0) / 2
    try:
        popt, pcov = scipy.optimize.curve_fit(model, t - t[0], y, p0=[w0, amp0, 0.0, y.mean()], maxfev=20000)
    except RuntimeError as exc:
        raise NoOscillationError(f"sinusoid fit failed: {exc}") from exc
    w = abs(float(popt[0]))
    err = float(np.sqrt(pcov[0, 0])) if np.all(np.isfinite(pcov)) else math.inf
    if w * (t[-1] - t[0]) < 2 * TWO_PI * 0.95:
        raise NoOscillationError(
            f"trace spans {w * (t[-1] - t[0]) / TWO_PI:.2f} periods; at least 2 are needed"
        )
    return FrequencyEstimate(w, err, snr)


# ---------------------------------------------------------------- calibration


@dataclass(frozen=True)
class Resonance:
    omega_d: float
    delta: float
    splitting: float  # minimum |00>-|11> anticrossing gap in the drive frame, rad/s


def _bell_splitting(dev: DeviceParams, omega1: float, omega2: float, delta: float, ref: np.ndarray) -> float:
    drv = DriveParams(omega1, drive_frequency(dev, delta), 0.0, omega2=omega2)
    w, v = eigh(rwa_hamiltonian(dev, drv))
    weight = np.sum(np.abs(ref.conj().T @ v) ** 2, axis=0)
    k = np.argsort(-weight)[:2]
    return float(abs(w[k[0]] - w[k[1]]))


def calibrate_resonance(
    dev: DeviceParams, omega1: float, omega2: float | None = None, delta_guess: float | None = None
) -> Resonance:
    """Drive frequency at which the driven |00> and |11> anticross.

    The closed-form detuning ignores the static ZZ and higher-order Stark
    shifts; here the gap between the two drive-frame eigenstates with the
    largest |00>, |11> weight is minimized directly, which maximizes the
    Rabi contrast. The minimum gap is the exact Bell-rotation rate.
    """
    if omega2 is None:
        omega2 = dev.lam * omega1
    if delta_guess is None:
        delta_guess = calibrate_delta(dev, omega1, omega2)
    ds = dressed_states(dev)
    ref = np.stack([ds.state(0, 0), ds.state(1, 1)], axis=1)

    def f(x):
        return _bell_splitting(dev, omega1, omega2, x, ref)

    width = 2 * abs(static_zz(dev)) + 4 * abs(omega_B_full(dev, omega1, omega2, delta_guess)) + TWO_PI * 1e3
    for _ in range(6):
        xs = delta_guess + np.linspace(-width, width, 401)
        vals = np.array([f(x) for x in xs])
        i = int(np.argmin(vals))
        if 0 < i < len(xs) - 1:
            break
        width *= 3
    else:
        raise CalibrationError("no |00>-|11> anticrossing found near the closed-form detuning")
    res = scipy.optimize.minimize_scalar(
        f, bracket=(xs[i - 1], xs[i], xs[i + 1]), method="brent", options={"xtol": 1e-12}
    )
    delta = float(res.x)
    return Resonance(drive_frequency(dev, delta), delta, float(res.fun))


@dataclass(frozen=True)
class OperatingPoint:
    """Calibrated two-photon pulse for a sqrt(bSWAP)."""

    omega: float
    omega_d: float
    delta: float  # closed-form detuning at ``omega``
    duration: float
    ramp: float
    gate_time: float  # squared-envelope-equivalent flat duration
    omega_B_formula: float
    recalibrated: bool = False

    def drive(self, phase: float = 0.0) -> DriveParams:
        return DriveParams(self.omega, self.omega_d, phase)

    def segment(self, phase: float = 0.0, turns: int = 1) -> PulseSegment:
        """``turns=1``: sqrt(bSWAP); ``turns=2``: bSWAP with the same amplitude."""
        return flat_pulse(self.drive(phase), flat_top_duration(turns * self.gate_time, self.ramp), self.ramp)

    def with_amplitude(self, dev: DeviceParams, omega: float) -> OperatingPoint:
        res = calibrate_resonance(dev, omega)
        delta = calibrate_delta(dev, omega)
        return OperatingPoint(
            omega, res.omega_d, delta, self.duration, self.ramp, self.gate_time,
            abs(omega_B_full(dev, omega, dev.lam * omega, delta)), True,
        )


def operating_point(
    dev: DeviceParams, gate_time: float = DEFAULT_GATE_TIME, ramp: float = DEFAULT_RAMP
) -> OperatingPoint:
    """Amplitude from the closed form, drive frequency from the exact anticrossing."""
    target = math.pi / (2 * gate_time)
    omega = solve_amplitude(dev, target)
    delta = calibrate_delta(dev, omega)
    res = calibrate_resonance(dev, omega, delta_guess=delta)
    return OperatingPoint(
        omega, res.omega_d, delta, flat_top_duration(gate_time, ramp), ramp, gate_time,
        abs(omega_B_full(dev, omega, dev.lam * omega, delta)),
    )


def computational_block(dev: DeviceParams, u: np.ndarray) -> np.ndarray:
    """4x4 block of a full-space operator on the dressed computational states."""
    c = dressed_states(dev).computational
    return c.conj().T @ u @ c


def bell_population(dev: DeviceParams, op: OperatingPoint, dt: float = DEFAULT_DT) -> float:
    u = propagate_unitary(dev, Schedule((op.segment(),)), dt)
    psi = u @ ground_state(dev)
    return float(abs(dressed_states(dev).state(1, 1).conj() @ psi) ** 2)


def recalibrate_amplitude(dev: DeviceParams, op: OperatingPoint, dt: float = DEFAULT_DT) -> OperatingPoint:
    """Rescale the drive so the simulated pulse leaves exactly half the population in |11>."""

    def residual(omega):
        return bell_population(dev, op.with_amplitude(dev, omega), dt) - 0.5

    lo = op.omega
    r_lo = residual(lo)
    factor = 1.15 if r_lo < 0 else 1 / 1.15
    hi, r_hi = lo, r_lo
    for _ in range(20):
        hi = hi * factor
        r_hi = residual(hi)
        if np.sign(r_hi) != np.sign(r_lo):
            break
        lo, r_lo = hi, r_hi
    else:
        raise CalibrationError("simulated |11> population never crosses 1/2")
    omega = scipy.optimize.brentq(residual, min(lo, hi), max(lo, hi), xtol=1e-7 * op.omega)
    return op.with_amplitude(dev, omega)


def bell_fidelity(psi4: np.ndarray) -> tuple[float, float]:
    """Best fidelity to ``(|00> + e^{i phi}|11>)/sqrt(2)`` over ``phi``; returns ``(F, phi)``."""
    psi4 = np.asarray(psi4, dtype=complex)
    psi4 = psi4 / np.linalg.norm(psi4)
    phi = float(np.angle(psi4[3]) - np.angle(psi4[0])) % TWO_PI
    f = 0.5 * (abs(psi4[0]) + abs(psi4[3])) ** 2
    return float(f), phi


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepRow:
    omega: float
    omega_B_sim: float
    omega_B_formula: float
    delta: float = math.nan
    omega_d: float = math.nan
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


def amplitude_sweep(
    dev: DeviceParams, amplitudes, periods: float = 4.0, samples: int = 160
) -> list[SweepRow]:
    """Simulated Bell-rotation rate against the closed form, per drive amplitude.

    Each row recalibrates the detuning, simulates a flat-pulse Rabi trace at
    the exact resonance and fits its frequency. Failing rows carry the error
    message and NaN rates; the sweep continues.
    """
    amps = np.asarray(amplitudes, dtype=float)
    if np.any(amps <= 0) or np.any(np.diff(amps) <= 0):
        raise ValueError("amplitudes must be positive and ascending")
    rows = []
    for omega in amps:
        formula = math.nan
        try:
            delta = calibrate_delta(dev, omega)
            formula = abs(omega_B_full(dev, omega, dev.lam * omega, delta))
            res = calibrate_resonance(dev, omega, delta_guess=delta)
            span = periods * TWO_PI / min(formula, res.splitting)
            times = np.linspace(0.0, span, samples)
            trace = rabi_experiment(dev, omega, res.omega_d, times)
            est = extract_frequency(trace, "P11")
            rows.append(SweepRow(float(omega), est.value, formula, delta, res.omega_d))
        except (CalibrationError, NoOscillationError, ArithmeticError) as exc:
            rows.append(SweepRow(float(omega), math.nan, formula, error=f"{type(exc).__name__}: {exc}"))
    return rows


# ---------------------------------------------------------------- echo


def echo_schedule(op: OperatingPoint, delay: float, final_phase: float) -> Schedule:
    """sqrt(bSWAP), delay/2, bSWAP, delay/2, sqrt(bSWAP) with phase ``final_phase``."""
    segs = [op.segment()]
    if delay > 0:
        segs.append(idle(delay / 2))
    segs.append(op.segment(turns=2))
    if delay > 0:
        segs.append(idle(delay / 2))
    segs.append(op.segment(final_phase))
    return Schedule(tuple(segs))


def bell_echo(
    dev: DeviceParams,
    noise: NoiseParams,
    total_delays,
    phase_ramp_rate: float,
    op: OperatingPoint | None = None,
    dt: float = DEFAULT_DT,
) -> Trace:
    """Bell-state echo: P(|00>) against total delay, last pulse phase ramped with delay."""
    if op is None:
        op = operating_point(dev)
    delays = np.asarray(total_delays, dtype=float)
    psi0 = ground_state(dev)
    rho0 = np.outer(psi0, psi0.conj())
    states = []
    for tau in delays:
        sched = echo_schedule(op, tau, phase_ramp_rate * tau)
        step = min(dt, min(s.duration for s in sched.segments) / 10)
        if noise.noiseless:
            states.append(propagate_unitary(dev, sched, step) @ psi0)
        else:
            states.append(propagate_density(dev, sched, noise, rho0, step))
    return Trace(delays, _populations(dev, states), dev.space.labels)


@dataclass(frozen=True)
class DecayFit:
    decay_time: float
    frequency: float
    amplitude: float
    offset: float


def fit_damped_oscillation(t, y, omega_guess: float | None = None) -> DecayFit:
    """Fit ``c + a exp(-t/T) cos(w t + p)``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if omega_guess is None:
        trace_like = Trace(t, np.stack([y, 1 - y], axis=1), ((0, 0), (9, 9)))
        omega_guess = extract_frequency(trace_like, "P00", min_snr=1.0).value

    def model(tt, a, T_inv, w, p, c):
        return c + a * np.exp(-tt * T_inv) * np.cos(w * tt + p)

    span = t[-1] - t[0]
    p0 = [np.ptp(y) / 2, 0.1 / span, omega_guess, 0.0, y.mean()]
    popt, _ = scipy.optimize.curve_fit(model, t - t[0], y, p0=p0, maxfev=50000)
    a, T_inv, w, _, c = popt
    if a < 0:
        a = -a
    T = math.inf if T_inv <= 0 else 1 / T_inv
    return DecayFit(T, abs(w), a, c)


def bell_coherence_decay(dev: DeviceParams, noise: NoiseParams, times) -> np.ndarray:
    """``2 |<00|rho|11>|`` of an idling ``(|00> + |11>)/sqrt(2)`` (dressed), by direct Lindblad propagation."""
    ds = dressed_states(dev)
    psi = (ds.state(0, 0) + ds.state(1, 1)) / math.sqrt(2)
    rho0 = np.outer(psi, psi.conj())
    out = []
    for t in np.asarray(times, dtype=float):
        rho = rho0 if t == 0 else propagate_density(dev, Schedule((idle(t),)), noise, rho0)
        out.append(2 * abs(ds.state(0, 0).conj() @ rho @ ds.state(1, 1)))
    return np.array(out)


def two_qubit_coherence_time(noise: NoiseParams) -> float:
    """``1 / (1/T2_q1 + 1/T2_q2)``: decay time of the |00>-|11> coherence."""
    rate = 1 / noise.T2(1) + 1 / noise.T2(2)
    return math.inf if rate == 0 else 1 / rate


# ---------------------------------------------------------------- single-qubit gates

SQ_SIGMA = 50e-9


def qubit_frequency(dev: DeviceParams, qubit: int) -> float:
    ds = dressed_states(dev)
    excited = (1, 0) if qubit == 1 else (0, 1)
    return ds.energy(*excited) - ds.energy(0, 0)


def _sq_drive(dev: DeviceParams, qubit: int, amplitude: float, phase: float, detuning: float = 0.0) -> DriveParams:
    w = qubit_frequency(dev, qubit) + detuning
    if qubit == 1:
        return DriveParams(amplitude, w, phase, omega2=0.0)
    return DriveParams(0.0, w, phase, omega2=amplitude)


def _sq_block(dev: DeviceParams, qubit: int, amplitude: float, detuning: float, sigma: float, dt: float) -> np.ndarray:
    """First column of the computational block of a Gaussian pulse, in the order (ground, excited)."""
    seg = PulseSegment("gaussian", 4 * sigma, _sq_drive(dev, qubit, amplitude, 0.0, detuning), sigma=sigma)
    col = computational_block(dev, propagate_unitary(dev, Schedule((seg,)), dt))[:, 0]
    return np.array([col[0], col[2 if qubit == 1 else 1]]), 1 - float(np.sum(np.abs(col) ** 2))


def _rotation_angle(
    dev: DeviceParams, qubit: int, amplitude: float, sigma: float, dt: float, detuning: float = 0.0
) -> tuple[float, float]:
    (c0, c1), leak = _sq_block(dev, qubit, amplitude, detuning, sigma, dt)
    return 2 * math.atan2(abs(c1), abs(c0)), leak


@lru_cache(maxsize=64)
def calibrate_single_qubit(
    dev: DeviceParams, qubit: int, angle: float, sigma: float = SQ_SIGMA, dt: float = DEFAULT_DT
) -> tuple[float, float]:
    """``(peak amplitude, drive detuning)`` of a Gaussian rotating ``qubit`` by ``angle`` in ``(0, pi]``.

    The pi pulse is found by driving ``<0|U|0>`` to zero in amplitude and
    detuning together; the detuning absorbs the drive-induced Stark shift of
    the qubit line. Other angles reuse that detuning scaled with the squared
    amplitude and solve for the amplitude alone.
    """
    if not 0 < angle <= math.pi:
        raise ValueError("calibration angle must lie in (0, pi]")
    t = np.linspace(0, 4 * sigma, 4001)
    env = PulseSegment("gaussian", 4 * sigma, DriveParams(0.0, 1.0), sigma=sigma).envelope(t)
    guess = math.pi / scipy.integrate.trapezoid(env, t)
    det_scale = TWO_PI * 1e5

    def residual(x):
        c0 = _sq_block(dev, qubit, x[0] * guess, x[1] * det_scale, sigma, dt)[0][0]
        return [c0.real, c0.imag]

    sol = scipy.optimize.root(residual, [1.0, 0.0], method="hybr", options={"xtol": 1e-12})
    if not sol.success:
        raise CalibrationError(f"single-qubit pi pulse on qubit {qubit} did not converge: {sol.message}")
    amp_pi, det_pi = sol.x[0] * guess, sol.x[1] * det_scale
    if angle > math.pi - 1e-12:
        amp, det = amp_pi, det_pi
    else:
        def angle_error(a):
            return _rotation_angle(dev, qubit, a, sigma, dt, det_pi * (a / amp_pi) ** 2)[0] - angle

        nominal = amp_pi * angle / math.pi
        amp = scipy.optimize.brentq(angle_error, 0.5 * nominal, min(1.5 * nominal, amp_pi), xtol=1e-12 * amp_pi)
        det = det_pi * (amp / amp_pi) ** 2
    leak = _sq_block(dev, qubit, amp, det, sigma, dt)[1]
    if leak > 0.01:
        raise CalibrationError(f"single-qubit pulse on qubit {qubit} leaks {leak:.3%} out of the computational space")
    return float(amp), float(det)


def single_qubit_gate(
    dev: DeviceParams, qubit: int, axis: str, angle: float, sigma: float = SQ_SIGMA, dt: float = DEFAULT_DT
) -> Schedule:
    """Calibrated Gaussian rotation of one transmon about X or Y."""
    if qubit not in (1, 2):
        raise ValueError("qubit must be 1 or 2")
    if axis not in ("X", "Y"):
        raise ValueError("axis must be 'X' or 'Y'")
    if angle == 0:
        return Schedule((idle(4 * sigma),))
    amp, det = calibrate_single_qubit(dev, qubit, abs(angle), sigma, dt)
    # The rotating-frame drive is (Omega/2)(cos(phi) X - sin(phi) Y).
    phase = 0.0 if axis == "X" else -math.pi / 2
    if angle < 0:
        phase += math.pi
    return Schedule((PulseSegment("gaussian", 4 * sigma, _sq_drive(dev, qubit, amp, phase, det), sigma=sigma),))


# ---------------------------------------------------------------- gate channels


def computational_superop(dev: DeviceParams, full_superop: np.ndarray) -> np.ndarray:
    """Restrict a full-space superoperator to 4x4 inputs and outputs on the dressed computational states.

    Population leaking out of the computational space is dropped, so the
    result is trace non-increasing.
    """
    c = dressed_states(dev).computational
    embed = np.kron(c.conj(), c)
    project = np.kron(c.T, c.conj().T)
    return project @ full_superop @ embed


def gate_superop(
    dev: DeviceParams, sched: Schedule, noise: NoiseParams | None = None, dt: float = DEFAULT_DT
) -> np.ndarray:
    """16x16 column-stacked superoperator of a schedule on the computational subspace."""
    if noise is None or noise.noiseless:
        full = unitary_superop(propagate_unitary(dev, sched, dt))
    else:
        full = channel_superoperator(dev, sched, noise, dt)
    return computational_superop(dev, full)
