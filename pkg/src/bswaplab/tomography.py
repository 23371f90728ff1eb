"""Synthetic two-qubit state and process tomography.

The readout is a single joint observable ``M = sum_P beta_P P`` over
``P in {II, IZ, ZI, ZZ}``. Tomographic information comes from 36 settings
of single-qubit pre-rotations drawn from ``{I, Xpi, X+-pi/2, Y+-pi/2}``.
Rotations are ideal and instantaneous.

Pauli vectors use ``c_j = tr(P_j rho)`` so ``rho = sum_j c_j P_j / 4``.
Choi matrices use ``Lambda = sum_ij |i><j| (x) E(|i><j|)``.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from .effective import u_bell
from .errors import EstimationError

_P1 = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
PAULI_LABELS = tuple(a + b for a in "IXYZ" for b in "IXYZ")
PAULIS = np.array([np.kron(_P1[lab[0]], _P1[lab[1]]) for lab in PAULI_LABELS])


def pauli(label: str) -> np.ndarray:
    return PAULIS[PAULI_LABELS.index(label)].copy()


def _rx(theta):
    return scipy.linalg.expm(-0.5j * theta * _P1["X"])


def _ry(theta):
    return scipy.linalg.expm(-0.5j * theta * _P1["Y"])


ROTATION_LABELS = ("I", "Xpi", "X+pi/2", "X-pi/2", "Y+pi/2", "Y-pi/2")
ROTATIONS = {
    "I": np.eye(2, dtype=complex),
    "Xpi": _rx(math.pi),
    "X+pi/2": _rx(math.pi / 2),
    "X-pi/2": _rx(-math.pi / 2),
    "Y+pi/2": _ry(math.pi / 2),
    "Y-pi/2": _ry(-math.pi / 2),
}

PHYSICAL_TOL = 1e-8


def measurement_set() -> list[tuple[str, str]]:
    """The 36 rotation pairs, first qubit's label varying slowest."""
    return list(itertools.product(ROTATION_LABELS, repeat=2))


def rotation_unitary(setting: tuple[str, str]) -> np.ndarray:
    return np.kron(ROTATIONS[setting[0]], ROTATIONS[setting[1]])


def pauli_vector(rho: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("kij,ji->k", PAULIS, rho))


def from_pauli_vector(c: np.ndarray) -> np.ndarray:
    return np.einsum("k,kij->ij", np.asarray(c, dtype=float), PAULIS) / 4


def check_physical(rho: np.ndarray, tol: float = PHYSICAL_TOL) -> None:
    rho = np.asarray(rho)
    if rho.shape != (4, 4):
        raise ValueError("expected a 4x4 density matrix")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-9:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > 1e-9:
        raise ValueError(f"density matrix has trace {np.trace(rho).real:.12g}")
    lo = float(np.linalg.eigvalsh(rho).min())
    if lo < -tol:
        raise ValueError(f"density matrix has a negative eigenvalue {lo:.3g}")


# ---------------------------------------------------------------- readout


@dataclass(frozen=True)
class ReadoutModel:
    """Joint observable ``beta_II II + beta_IZ IZ + beta_ZI ZI + beta_ZZ ZZ``.

    ``noise`` is the single-shot standard deviation of the measured value;
    a record averaged over ``n`` shots has spread ``noise / sqrt(n)``.
    """

    beta_II: float = 0.0
    beta_IZ: float = 1 / 3
    beta_ZI: float = 1 / 3
    beta_ZZ: float = 1 / 3
    noise: float = 1.0

    def __post_init__(self):
        if self.beta_IZ == 0 and self.beta_ZI == 0 and self.beta_ZZ == 0:
            raise ValueError("readout observable needs a nonzero IZ, ZI or ZZ weight")
        if self.noise < 0:
            raise ValueError("noise scale must be non-negative")

    @property
    def observable(self) -> np.ndarray:
        return (
            self.beta_II * pauli("II")
            + self.beta_IZ * pauli("IZ")
            + self.beta_ZI * pauli("ZI")
            + self.beta_ZZ * pauli("ZZ")
        )

    def rotated(self, setting) -> np.ndarray:
        """``R^dag M R``: the effective observable of one setting."""
        r = rotation_unitary(setting)
        return r.conj().T @ self.observable @ r


@dataclass(frozen=True)
class MeasurementRecord:
    setting: tuple[str, str]
    mean: float
    shots: int = 0


def simulate_readout(
    rho: np.ndarray,
    model: ReadoutModel = ReadoutModel(),
    shots: int = 0,
    seed: int | None = None,
    settings: Sequence[tuple[str, str]] | None = None,
    check: bool = True,
) -> list[MeasurementRecord]:
    """Mean joint-readout value after each pre-rotation, optionally with Gaussian shot noise."""
    rho = np.asarray(rho, dtype=complex)
    if check:
        check_physical(rho)
    if shots < 0:
        raise ValueError("shots must be non-negative")
    if shots > 0 and seed is None:
        raise ValueError("a seed is required when shots > 0")
    settings = measurement_set() if settings is None else list(settings)
    means = np.array([np.real(np.trace(model.rotated(s) @ rho)) for s in settings])
    if shots > 0:
        rng = np.random.default_rng(seed)
        means = means + rng.normal(0.0, model.noise / math.sqrt(shots), size=len(means))
    return [MeasurementRecord(tuple(s), float(m), int(shots)) for s, m in zip(settings, means)]


def design_matrix(model: ReadoutModel, settings=None, trace_row: bool = False) -> np.ndarray:
    """``A[k, j] = tr(R_k^dag M R_k P_j) / 4`` so that ``means = A @ c``.

    With ``trace_row`` the row ``e_0`` fixing ``tr(rho)`` is appended; the
    joint readout alone never sees the identity component when ``beta_II = 0``.
    """
    settings = measurement_set() if settings is None else list(settings)
    a = np.array([pauli_vector(model.rotated(s)) / 4 for s in settings])
    if trace_row:
        a = np.vstack([a, np.eye(16)[0]])
    return a


def _solve_traceless(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares Pauli components with ``c_0 = 1``; rank must be 15."""
    sub = a[:, 1:]
    u, s, vh = np.linalg.svd(sub, full_matrices=True)
    tol = max(sub.shape) * np.finfo(float).eps * (s[0] if len(s) else 1.0)
    rank = int(np.sum(s > tol))
    if rank < 15:
        null = vh[rank:]
        names = sorted({PAULI_LABELS[1 + int(np.argmax(np.abs(v)))] for v in null})
        raise EstimationError(f"design matrix has rank {rank} < 15; unconstrained directions: {', '.join(names)}")
    rhs = y - a[:, 0]
    c = np.linalg.pinv(sub) @ rhs
    return np.concatenate([[1.0], c])


def state_linear_inversion(records: Sequence[MeasurementRecord], model: ReadoutModel = ReadoutModel()) -> np.ndarray:
    """Pseudo-inverse estimate; Hermitian with unit trace, not necessarily positive."""
    settings = [r.setting for r in records]
    y = np.array([r.mean for r in records])
    c = _solve_traceless(design_matrix(model, settings), y)
    rho = from_pauli_vector(c)
    return 0.5 * (rho + rho.conj().T)


def min_eigenvalue(rho: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a real vector onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, len(v) + 1)
    rho = np.nonzero(u * k > css - 1)[0][-1]
    theta = (css[rho] - 1) / (rho + 1)
    return np.maximum(v - theta, 0.0)


def nearest_physical(rho: np.ndarray) -> np.ndarray:
    """Closest (Frobenius) unit-trace positive matrix."""
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    return (v * project_to_simplex(w)) @ v.conj().T


def state_fidelity(rho: np.ndarray, target: np.ndarray) -> float:
    psi = np.asarray(target, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return float(np.real(psi.conj() @ rho @ psi))


# ---------------------------------------------------------------- MLE


def _lower_factor(rho: np.ndarray) -> np.ndarray:
    """Lower-triangular ``T`` with ``T^dag T = rho`` for positive-definite ``rho``."""
    n = rho.shape[0]
    flip = np.eye(n)[::-1]
    L = np.linalg.cholesky(flip @ rho @ flip)
    return flip @ L.conj().T @ flip


def _minimize_cholesky(
    t0: np.ndarray,
    cost_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, float, float]:
    """Minimize over a lower-triangular complex factor with L-BFGS.

    ``cost_and_grad`` returns the cost and ``df/dRe + i df/dIm``. The free
    parameters are the real and imaginary parts of the strict lower triangle
    plus the real diagonal.
    """
    n = t0.shape[0]
    rows, cols = np.tril_indices(n)
    off = rows != cols
    n_low = len(rows)

    def unpack(x):
        t = np.zeros((n, n), dtype=complex)
        t[rows, cols] = x[:n_low]
        t[rows[off], cols[off]] += 1j * x[n_low:]
        return t

    def fun(x):
        f, g = cost_and_grad(unpack(x))
        low = g[rows, cols]
        return f, np.concatenate([low.real, low[off].imag])

    t0 = np.asarray(t0, dtype=complex)
    low0 = t0[rows, cols]
    x0 = np.concatenate([low0.real, low0[off].imag])
    res = scipy.optimize.minimize(
        fun, x0, jac=True, method="L-BFGS-B",
        options={"maxiter": max_iter, "maxfun": max_iter, "gtol": tol, "ftol": 1e-16, "maxcor": 30},
    )
    f, g = fun(res.x)
    return unpack(res.x), float(f), float(np.linalg.norm(g))


MLE_TOL = 1e-8
MLE_MAX_ITER = 200_000
SEED_MIXING = 1e-6
PROCESS_MLE_OUTER = 50
PROCESS_TP_TOL = 1e-6


def state_mle(
    records: Sequence[MeasurementRecord],
    model: ReadoutModel = ReadoutModel(),
    tol: float = MLE_TOL,
    max_iter: int = MLE_MAX_ITER,
) -> np.ndarray:
    """Gaussian maximum-likelihood state, ``rho = T^dag T / tr(T^dag T)``.

    The seed is the linear-inversion estimate projected onto physical states
    and mixed with a little of ``I/4`` so the factor starts at full rank.
    """
    settings = [r.setting for r in records]
    y = np.array([r.mean for r in records])
    ops = np.array([model.rotated(s) for s in settings])
    seed = nearest_physical(state_linear_inversion(records, model))
    seed = (1 - SEED_MIXING) * seed + SEED_MIXING * np.eye(4) / 4

    def cost_and_grad(t):
        tau = float(np.real(np.trace(t.conj().T @ t)))
        rho = t.conj().T @ t / tau
        r = y - np.real(np.einsum("kij,ji->k", ops, rho))
        G = -2 * np.einsum("k,kij->ij", r, ops)
        g = float(np.real(np.trace(G @ rho)))
        return float(r @ r), (2 / tau) * t @ (G - g * np.eye(4))

    t, _, _ = _minimize_cholesky(_lower_factor(seed), cost_and_grad, tol, max_iter)
    rho = t.conj().T @ t
    return rho / np.trace(rho).real


# ---------------------------------------------------------------- PTMs


def ptm_of_superop(superop: np.ndarray) -> np.ndarray:
    """PTM of a column-stacked 16x16 superoperator on 4x4 matrices."""
    out = np.empty((16, 16))
    for j, pj in enumerate(PAULIS):
        image = (superop @ pj.reshape(-1, order="F")).reshape((4, 4), order="F")
        out[:, j] = pauli_vector(image) / 4
    return out


def ptm_of_channel(channel: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    return np.array([pauli_vector(channel(pj)) / 4 for pj in PAULIS]).T


def ptm_of_unitary(u: np.ndarray) -> np.ndarray:
    """``R_ij = tr(P_i U P_j U^dag) / 4``."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (4, 4) or np.max(np.abs(u.conj().T @ u - np.eye(4))) > 1e-9:
        raise ValueError("ptm_of_unitary needs a 4x4 unitary")
    return np.real(np.einsum("iab,bc,jcd,da->ij", PAULIS, u, PAULIS, u.conj().T)) / 4


def ptm_to_choi(ptm: np.ndarray) -> np.ndarray:
    # E(E_ab) = sum_j P_j[b, a] / 4 * E(P_j),  E(P_j) = sum_i R_ij P_i
    images = np.einsum("ij,ixy->jxy", ptm, PAULIS)  # E(P_j)
    choi = np.zeros((16, 16), dtype=complex)
    for a_, b_ in itertools.product(range(4), repeat=2):
        img = np.einsum("j,jxy->xy", PAULIS[:, b_, a_] / 4, images)
        choi[a_ * 4:(a_ + 1) * 4, b_ * 4:(b_ + 1) * 4] = img
    return choi


def choi_to_ptm(choi: np.ndarray) -> np.ndarray:
    def channel(rho):
        return np.einsum("ab,axby->xy", rho, choi.reshape(4, 4, 4, 4))

    return ptm_of_channel(channel)


def gate_fidelity(r_measured: np.ndarray, r_ideal: np.ndarray) -> float:
    """``(tr(R_ideal^T R_measured) + 4) / 20``."""
    return float((np.trace(np.asarray(r_ideal).T @ np.asarray(r_measured)) + 4) / 20)


def unitary_channel(u: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    u = np.asarray(u, dtype=complex)
    return lambda rho: u @ rho @ u.conj().T


def superop_channel(superop: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    s = np.asarray(superop, dtype=complex)
    return lambda rho: (s @ rho.reshape(-1, order="F")).reshape((4, 4), order="F")


# ---------------------------------------------------------------- process tomography

GROUND = np.diag([1.0, 0.0, 0.0, 0.0]).astype(complex)


def input_states() -> list[np.ndarray]:
    """The 36 preparations ``R |00><00| R^dag``."""
    out = []
    for s in measurement_set():
        r = rotation_unitary(s)
        out.append(r @ GROUND @ r.conj().T)
    return out


@dataclass(frozen=True)
class ProcessTomographyResult:
    ptm: np.ndarray  # linear inversion
    ptm_mle: np.ndarray | None
    records: tuple[tuple[MeasurementRecord, ...], ...]  # one 36-tuple per input


def _ptm_linear(records, model) -> np.ndarray:
    c_in = np.array([pauli_vector(r) for r in input_states()]).T
    c_out = np.array([pauli_vector(state_linear_inversion(rec, model)) for rec in records]).T
    if np.linalg.matrix_rank(c_in) < 16:
        raise EstimationError("input states do not span the Pauli space")
    return c_out @ np.linalg.pinv(c_in)


def process_mle(
    records, model: ReadoutModel = ReadoutModel(), tol: float = 1e-6, max_iter: int = MLE_MAX_ITER
) -> np.ndarray:
    """CPTP maximum-likelihood PTM from the full 36 x 36 record set.

    The Choi matrix is ``T^dag T`` with ``T`` lower triangular. Trace
    preservation ``tr_out(Lambda) = I`` is handled by an augmented Lagrangian
    with a fixed penalty weight; the last step enforces it exactly by ``Lambda -> (K^-1/2 (x) I) Lambda (K^-1/2 (x) I)``, which keeps
    complete positivity.
    """
    inputs = input_states()
    rows, y = [], []
    for rho_in, rec in zip(inputs, records):
        for r in rec:
            rows.append(np.kron(rho_in.T, model.rotated(r.setting)))
            y.append(r.mean)
    ops = np.array(rows)  # predicted = tr(op @ Lambda)
    y = np.array(y)
    scale = 1.0 / len(y)
    seed = ptm_to_choi(_ptm_linear(records, model))
    seed = nearest_physical(seed / 4) * 4
    seed = (1 - SEED_MIXING) * seed + SEED_MIXING * np.eye(16) / 4

    def partial_out(lam):
        return np.einsum("axbx->ab", lam.reshape(4, 4, 4, 4))

    t = _lower_factor(seed)
    mult = np.zeros((4, 4), dtype=complex)
    mu = 1.0
    for _ in range(PROCESS_MLE_OUTER):

        def cost_and_grad(tt, mult=mult):
            lam = tt.conj().T @ tt
            r = y - np.real(np.einsum("kij,ji->k", ops, lam))
            K = partial_out(lam) - np.eye(4)
            G = -2 * scale * np.einsum("k,kij->ij", r, ops) + np.kron(2 * mu * K + mult, np.eye(4))
            cost = scale * float(r @ r) + mu * float(np.sum(np.abs(K) ** 2)) + float(np.real(np.trace(mult @ K)))
            return cost, 2 * tt @ G

        t, _, _ = _minimize_cholesky(t, cost_and_grad, tol, max_iter)
        K = partial_out(t.conj().T @ t) - np.eye(4)
        if np.linalg.norm(K) < PROCESS_TP_TOL:
            break
        mult = mult + 2 * mu * K
    lam = t.conj().T @ t
    k = partial_out(lam)
    w, v = np.linalg.eigh(0.5 * (k + k.conj().T))
    if w.min() <= 0:
        raise EstimationError("MLE Choi matrix lost full input rank")
    k_inv_sqrt = (v / np.sqrt(w)) @ v.conj().T
    norm = np.kron(k_inv_sqrt, np.eye(4))
    lam = norm @ lam @ norm
    return choi_to_ptm(lam)


def process_tomography(
    channel: Callable[[np.ndarray], np.ndarray],
    model: ReadoutModel = ReadoutModel(),
    shots: int = 0,
    seed: int | None = None,
    mle: bool = False,
) -> ProcessTomographyResult:
    """State tomography on the channel's output for each of the 36 inputs."""
    if shots > 0 and seed is None:
        raise ValueError("a seed is required when shots > 0")
    seeds = np.random.SeedSequence(seed).spawn(36) if shots > 0 else [None] * 36
    records = []
    for rho_in, ss in zip(input_states(), seeds):
        out = np.asarray(channel(rho_in), dtype=complex)
        out = 0.5 * (out + out.conj().T)
        rec_seed = None if ss is None else int(ss.generate_state(1)[0])
        records.append(tuple(simulate_readout(out, model, shots, rec_seed, check=False)))
    ptm = _ptm_linear(records, model)
    ptm_mle = process_mle(records, model) if mle else None
    return ProcessTomographyResult(ptm, ptm_mle, tuple(records))


# ---------------------------------------------------------------- reference gates


@dataclass(frozen=True)
class ReferenceFit:
    """``exp(-i (a IZ + b ZI + c ZZ) / 2) U_B(theta, phi)`` maximizing the gate fidelity."""

    theta: float
    phi: float
    a: float
    b: float
    c: float
    fidelity: float

    @property
    def unitary(self) -> np.ndarray:
        return reference_unitary(self.theta, self.phi, self.a, self.b, self.c)


def reference_unitary(theta, phi, a=0.0, b=0.0, c=0.0) -> np.ndarray:
    h = a * np.diag(pauli("IZ")) + b * np.diag(pauli("ZI")) + c * np.diag(pauli("ZZ"))
    return np.diag(np.exp(-0.5j * h.real)) @ u_bell(1.0, theta, phi)


def fit_reference_unitary(r_measured: np.ndarray, theta: float) -> ReferenceFit:
    """Closest gate among Bell rotations by ``theta`` followed by Z-type phases.

    The rotation angle is held fixed. The free parameters are the rotation
    azimuth and the phases, which stand for virtual-Z frame updates and the
    conditional phase absorbed in post-processing.
    """

    def neg(p):
        return -gate_fidelity(r_measured, ptm_of_unitary(reference_unitary(theta, *p)))

    best = None
    grid = (0.0, math.pi / 2, math.pi, -math.pi / 2)
    for phi0 in np.linspace(0, math.pi, 8, endpoint=False):
        for a0, b0 in itertools.product(grid, repeat=2):
            p0 = [phi0, a0, b0, 0.0]
            v = neg(p0)
            if best is None or v < best[0]:
                best = (v, p0)
    res = scipy.optimize.minimize(
        neg, best[1], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20000}
    )
    res = scipy.optimize.minimize(neg, res.x, method="BFGS", options={"gtol": 1e-12})
    phi, a, b, c = res.x
    return ReferenceFit(float(theta), float(phi) % math.pi, float(a), float(b), float(c), float(-res.fun))


# ---------------------------------------------------------------- phase sweep


def pauli_phase_sweep(phis, omega_B: float = 1.0) -> dict[str, np.ndarray]:
    """Ideal ``<P>`` of ``u_bell(t = pi/(2 omega_B), phi)|00>`` for the 15 non-identity Paulis."""
    phis = np.asarray(phis, dtype=float)
    out = {lab: np.empty(len(phis)) for lab in PAULI_LABELS[1:]}
    psi0 = np.array([1, 0, 0, 0], dtype=complex)
    for k, phi in enumerate(phis):
        psi = u_bell(omega_B, math.pi / (2 * omega_B), phi) @ psi0
        for lab in PAULI_LABELS[1:]:
            out[lab][k] = float(np.real(psi.conj() @ pauli(lab) @ psi))
    return out


# ---------------------------------------------------------------- serialization


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def records_to_json(records: Sequence[MeasurementRecord]) -> str:
    return json.dumps(
        [{"setting": list(r.setting), "mean": float(_fmt(r.mean)), "shots": r.shots} for r in records],
        indent=1,
    )


def records_from_json(text: str) -> list[MeasurementRecord]:
    return [MeasurementRecord(tuple(d["setting"]), float(d["mean"]), int(d["shots"])) for d in json.loads(text)]


def ptm_to_json(ptm: np.ndarray, **meta) -> str:
    ptm = np.asarray(ptm, dtype=float)
    if ptm.shape != (16, 16):
        raise ValueError("expected a 16x16 PTM")
    doc = {"basis": list(PAULI_LABELS), "rows": [[float(_fmt(v)) for v in row] for row in ptm]}
    doc.update(meta)
    return json.dumps(doc, indent=1)


def ptm_from_json(text: str) -> np.ndarray:
    doc = json.loads(text)
    if tuple(doc["basis"]) != PAULI_LABELS:
        raise ValueError("PTM basis order does not match")
    return np.array(doc["rows"], dtype=float)


def ptm_to_csv(ptm: np.ndarray) -> str:
    """Long format ``out,in,value`` ready for a heatmap."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["out", "in", "value"])
    for i, j in itertools.product(range(16), repeat=2):
        w.writerow([PAULI_LABELS[i], PAULI_LABELS[j], _fmt(ptm[i, j])])
    return buf.getvalue()


def sweep_to_csv(phis, sweep: dict[str, np.ndarray]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    labels = list(sweep)
    w.writerow(["phi"] + labels)
    for k, phi in enumerate(phis):
        w.writerow([_fmt(phi)] + [_fmt(sweep[lab][k]) for lab in labels])
    return buf.getvalue()
