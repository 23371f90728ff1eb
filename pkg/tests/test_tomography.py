import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from bswaplab import tomography as tomo
from bswaplab.effective import u_bell
from bswaplab.errors import EstimationError

seeds = st.integers(0, 2**32 - 1)
BELL = np.array([1, 0, 0, 1]) / math.sqrt(2)


def pure(psi):
    return np.outer(psi, np.conj(psi))


def test_measurement_set():
    ms = tomo.measurement_set()
    assert len(ms) == 36 == len(set(ms))
    assert ms[0] == ("I", "I")


def test_design_matrix_rank():
    model = tomo.ReadoutModel()
    assert np.linalg.matrix_rank(tomo.design_matrix(model)) == 15  # identity invisible when beta_II = 0
    assert np.linalg.matrix_rank(tomo.design_matrix(model, trace_row=True)) == 16
    offset = tomo.ReadoutModel(beta_II=0.2)
    assert np.linalg.matrix_rank(tomo.design_matrix(offset)) == 16


def test_ground_state_and_mixed_records():
    m = tomo.ReadoutModel(beta_II=0.1, beta_IZ=0.2, beta_ZI=0.3, beta_ZZ=0.4)
    rec = tomo.simulate_readout(pure([1, 0, 0, 0]), m)
    assert rec[0].mean == pytest.approx(1.0)
    mixed = tomo.simulate_readout(np.eye(4) / 4, m)
    np.testing.assert_allclose([r.mean for r in mixed], 0.1, atol=1e-15)


def test_noiseless_records_ignore_seed():
    rho = oracles.random_density(4, np.random.default_rng(0))
    a = tomo.simulate_readout(rho, seed=1)
    b = tomo.simulate_readout(rho, seed=2)
    assert a == b


def test_shot_noise_is_seeded():
    rho = pure(BELL)
    a = tomo.simulate_readout(rho, shots=100, seed=5)
    b = tomo.simulate_readout(rho, shots=100, seed=5)
    assert a == b
    with pytest.raises(ValueError, match="seed"):
        tomo.simulate_readout(rho, shots=100)


def test_unphysical_state_rejected():
    with pytest.raises(ValueError):
        tomo.simulate_readout(np.diag([1.2, -0.2, 0, 0]))


@given(seeds, st.integers(1, 4))
@settings(max_examples=30, deadline=None)
def test_linear_inversion_round_trip(seed, rank):
    rho = oracles.random_density(4, np.random.default_rng(seed), rank)
    est = tomo.state_linear_inversion(tomo.simulate_readout(rho))
    assert np.abs(est - rho).max() < 1e-9


def test_bell_round_trip_fidelity():
    est = tomo.state_linear_inversion(tomo.simulate_readout(pure(BELL)))
    assert tomo.state_fidelity(est, BELL) == pytest.approx(1.0, abs=1e-9)


def test_heavy_noise_negative_eigenvalue_is_reported():
    rec = tomo.simulate_readout(pure(BELL), shots=1, seed=3, model=tomo.ReadoutModel(noise=2.0))
    est = tomo.state_linear_inversion(rec)
    assert tomo.min_eigenvalue(est) < 0
    assert np.trace(est).real == pytest.approx(1.0)


def test_rank_deficient_settings_named():
    subset = [("I", "I"), ("Xpi", "I"), ("I", "Xpi")]
    rec = tomo.simulate_readout(np.eye(4) / 4, settings=subset)
    with pytest.raises(EstimationError, match="rank"):
        tomo.state_linear_inversion(rec)


def test_mle_noiseless_agrees_with_inversion():
    rho = pure(BELL)
    rec = tomo.simulate_readout(rho)
    est = tomo.state_mle(rec)
    assert tomo.state_fidelity(est, BELL) >= 1 - 1e-6


@given(seeds)
@settings(max_examples=10, deadline=None)
def test_mle_is_physical_on_noisy_data(seed):
    rec = tomo.simulate_readout(pure(BELL), shots=200, seed=seed)
    est = tomo.state_mle(rec)
    assert np.linalg.eigvalsh(est).min() >= -1e-12
    assert np.trace(est).real == pytest.approx(1.0, abs=1e-14)
    assert tomo.state_fidelity(est, BELL) > 0.8


def test_mle_maximally_mixed():
    est = tomo.state_mle(tomo.simulate_readout(np.eye(4) / 4))
    assert np.abs(est - np.eye(4) / 4).max() < 1e-3


def test_state_fidelity_examples():
    assert tomo.state_fidelity(pure(BELL), BELL) == pytest.approx(1.0)
    assert tomo.state_fidelity(np.eye(4) / 4, BELL) == pytest.approx(0.25)


# ---------------------------------------------------------------- PTMs


def test_identity_ptm():
    np.testing.assert_allclose(tomo.ptm_of_unitary(np.eye(4)), np.eye(16), atol=1e-15)


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_ptm_orthogonal_and_homomorphic(seed):
    rng = np.random.default_rng(seed)
    u, v = oracles.random_unitary(4, rng), oracles.random_unitary(4, rng)
    ru, rv = tomo.ptm_of_unitary(u), tomo.ptm_of_unitary(v)
    np.testing.assert_allclose(ru.T @ ru, np.eye(16), atol=1e-9)
    np.testing.assert_allclose(tomo.ptm_of_unitary(u @ v), ru @ rv, atol=1e-9)
    np.testing.assert_allclose(ru, oracles.ptm(u), atol=1e-12)


def test_ptm_rejects_non_unitary():
    with pytest.raises(ValueError):
        tomo.ptm_of_unitary(2 * np.eye(4))


def test_bswap_ptm_pattern():
    r = tomo.ptm_of_unitary(u_bell(1.0, math.pi))
    idx = tomo.PAULI_LABELS.index
    # swapping |00> and |11> maps ZI onto -IZ and back; ZZ is preserved
    assert r[idx("IZ"), idx("ZI")] == pytest.approx(-1)
    assert r[idx("ZI"), idx("IZ")] == pytest.approx(-1)
    assert r[idx("ZZ"), idx("ZZ")] == pytest.approx(1)
    # single-qubit X is mapped onto a two-qubit correlator
    col = r[:, idx("IX")]
    assert np.count_nonzero(np.abs(col) > 1e-12) == 1
    assert "I" not in tomo.PAULI_LABELS[int(np.argmax(np.abs(col)))]


@given(seeds)
@settings(max_examples=15, deadline=None)
def test_choi_round_trip(seed):
    u = oracles.random_unitary(4, np.random.default_rng(seed))
    r = tomo.ptm_of_unitary(u)
    choi = tomo.ptm_to_choi(r)
    assert np.linalg.eigvalsh(choi).min() > -1e-12
    np.testing.assert_allclose(tomo.choi_to_ptm(choi), r, atol=1e-12)


def test_gate_fidelity_examples():
    r = tomo.ptm_of_unitary(u_bell(1.0, math.pi))
    assert tomo.gate_fidelity(r, r) == pytest.approx(1.0)
    dep = np.zeros((16, 16))
    dep[0, 0] = 1
    assert tomo.gate_fidelity(dep, r) == pytest.approx(0.25)


@given(seeds)
@settings(max_examples=15, deadline=None)
def test_fidelity_invariant_under_local_conjugation(seed):
    rng = np.random.default_rng(seed)
    ideal = tomo.ptm_of_unitary(oracles.random_unitary(4, rng))
    noisy = 0.9 * tomo.ptm_of_unitary(oracles.random_unitary(4, rng))
    noisy[0, 0] = 1.0
    k = tomo.ptm_of_unitary(np.kron(oracles.random_unitary(2, rng), oracles.random_unitary(2, rng)))
    assert tomo.gate_fidelity(k @ noisy @ k.T, k @ ideal @ k.T) == pytest.approx(tomo.gate_fidelity(noisy, ideal), abs=1e-12)


def test_fidelity_affine_in_depolarizing_weight():
    ideal = tomo.ptm_of_unitary(u_bell(1.0, math.pi / 2))
    dep = np.zeros((16, 16))
    dep[0, 0] = 1
    ps = np.linspace(0, 1, 6)
    f = [tomo.gate_fidelity((1 - p) * ideal + p * dep, ideal) for p in ps]
    assert np.all(np.diff(f) < 0)
    np.testing.assert_allclose(np.diff(f, 2), 0, atol=1e-12)


# ---------------------------------------------------------------- process tomography


def test_identity_channel_tomography():
    res = tomo.process_tomography(lambda rho: rho)
    np.testing.assert_allclose(res.ptm, np.eye(16), atol=1e-9)
    assert len(res.records) == 36 and all(len(r) == 36 for r in res.records)


def test_ideal_bswap_channel_tomography():
    u = u_bell(1.0, math.pi)
    res = tomo.process_tomography(tomo.unitary_channel(u), mle=True)
    np.testing.assert_allclose(res.ptm, tomo.ptm_of_unitary(u), atol=1e-8)
    assert tomo.gate_fidelity(res.ptm_mle, tomo.ptm_of_unitary(u)) == pytest.approx(1.0, abs=1e-6)


def test_process_mle_is_cptp_on_noisy_data():
    u = u_bell(1.0, math.pi / 2, 0.3)
    res = tomo.process_tomography(tomo.unitary_channel(u), shots=2000, seed=11, mle=True)
    choi = tomo.ptm_to_choi(res.ptm_mle)
    assert np.linalg.eigvalsh(choi).min() > -1e-9
    np.testing.assert_allclose(res.ptm_mle[0], np.eye(16)[0], atol=1e-9)  # trace preserving
    assert tomo.gate_fidelity(res.ptm_mle, tomo.ptm_of_unitary(u)) > 0.9


def test_reference_fit_recovers_phases():
    u = tomo.reference_unitary(math.pi / 2, 0.4, 0.3, -0.2, 0.1)
    fit = tomo.fit_reference_unitary(tomo.ptm_of_unitary(u), math.pi / 2)
    assert fit.fidelity == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------- phase sweep and files


def test_pauli_phase_sweep():
    phis = np.linspace(0, 2 * math.pi, 73)
    sweep = tomo.pauli_phase_sweep(phis)
    np.testing.assert_allclose(sweep["ZZ"], 1.0, atol=1e-12)  # (|00> + e^{i phi'}|11>) has ZZ = +1
    for label in ("IX", "IY", "IZ", "XI", "YI", "ZI"):
        np.testing.assert_allclose(sweep[label], 0.0, atol=1e-12)
    np.testing.assert_allclose(sweep["XX"], -sweep["YY"], atol=1e-12)
    shift = 18  # pi / 2 on this grid: half a period flips the sign
    np.testing.assert_allclose(sweep["XX"][shift:], -sweep["XX"][:-shift], atol=1e-12)
    np.testing.assert_allclose(sweep["XX"][2 * shift:], sweep["XX"][:-2 * shift], atol=1e-12)
    varying = {k for k, v in sweep.items() if np.ptp(v) > 1e-9}
    assert varying == {"XX", "XY", "YX", "YY"}


def test_serialization_round_trips():
    rec = tomo.simulate_readout(pure(BELL), shots=10, seed=1)
    assert tomo.records_from_json(tomo.records_to_json(rec))[3].setting == rec[3].setting
    r = tomo.ptm_of_unitary(u_bell(1.0, math.pi))
    back = tomo.ptm_from_json(tomo.ptm_to_json(r, gate="bswap"))
    np.testing.assert_allclose(back, r, atol=1e-11)
    assert json.loads(tomo.ptm_to_json(r, gate="bswap"))["gate"] == "bswap"
    assert tomo.ptm_to_csv(r).count("\n") >= 16
