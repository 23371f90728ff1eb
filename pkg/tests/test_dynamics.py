import math
from unittest import mock

import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.optimize import curve_fit

import oracles
from bswaplab import dynamics as dyn
from bswaplab.effective import calibrate_delta, omega_B_full
from bswaplab.errors import NoOscillationError
from bswaplab.hilbert import FockSpace, propagator
from bswaplab.model import (
    DeviceParams,
    DriveParams,
    TransmonParams,
    dressed_states,
    ghz,
    mhz,
    system_hamiltonian,
)

TWO_PI = 2 * math.pi


def bare(J_mhz=0.0, d=3):
    return DeviceParams(TransmonParams(ghz(4.4), ghz(-0.24)), TransmonParams(ghz(4.6), ghz(-0.24)), mhz(J_mhz), 1.0, FockSpace(d))


# ---------------------------------------------------------------- propagation


def test_idle_is_free_evolution(ref_dev):
    t = 137e-9
    u_q = dyn.propagate_unitary(ref_dev, dyn.Schedule((dyn.idle(t),)))
    np.testing.assert_allclose(u_q, np.eye(9), atol=1e-9)
    # back in the Schroedinger picture: diag(exp(-i E_k t)) on dressed states
    ds = dressed_states(ref_dev)
    u_s = propagator(system_hamiltonian(ref_dev), t) @ u_q
    d = ds.vectors.conj().T @ u_s @ ds.vectors
    np.testing.assert_allclose(d, np.diag(np.exp(-1j * ds.energies * t)), atol=1e-9)


def test_resonant_pi_pulse_two_level():
    dev = bare(d=2)
    om = mhz(10)
    seg = dyn.flat_pulse(DriveParams(om, dev.q1.omega01, omega2=0.0), math.pi / om)
    u = dyn.propagate_unitary(dev, dyn.Schedule((seg,)), dt=1e-9)
    assert abs(u[dev.space.index(1, 0), 0]) ** 2 == pytest.approx(1.0, abs=1e-9)


def test_sqrt_bswap_leaves_half_population(ref_dev, fine_op):
    assert dyn.bell_population(ref_dev, fine_op) == pytest.approx(0.5, abs=0.02)


def test_unitarity_and_dt_stability(ref_dev, fine_op):
    sched = dyn.Schedule((fine_op.segment(),))
    u1 = dyn.propagate_unitary(ref_dev, sched)
    u2 = dyn.propagate_unitary(ref_dev, sched, dt=dyn.DEFAULT_DT / 2)
    assert np.abs(u1.conj().T @ u1 - np.eye(9)).max() < 1e-8
    psi0 = dyn.ground_state(ref_dev)
    assert np.abs(u1 @ psi0 - u2 @ psi0).max() < 1e-6


def test_quartering_dt_reduces_error(ref_dev):
    seg = dyn.PulseSegment("gaussian", 200e-9, DriveParams(mhz(5), dyn.qubit_frequency(ref_dev, 1) - mhz(3)))
    sched = dyn.Schedule((seg,))
    ref = dyn.propagate_unitary(ref_dev, sched, 2e-9 / 64)
    e1 = np.abs(dyn.propagate_unitary(ref_dev, sched, 2e-9) - ref).max()
    e4 = np.abs(dyn.propagate_unitary(ref_dev, sched, 0.5e-9) - ref).max()
    assert e1 / e4 >= 10


def test_truncation_leaves_peak_unchanged(ref_dev, fine_op):
    peaks = []
    for d in (3, 4):
        dev = ref_dev.with_levels(d)
        res = dyn.calibrate_resonance(dev, fine_op.omega)
        times = np.linspace(0, TWO_PI / res.splitting, 401)
        peaks.append(dyn.rabi_experiment(dev, fine_op.omega, res.omega_d, times).population(1, 1).max())
    assert abs(peaks[1] - peaks[0]) / peaks[0] < 0.01


def test_step_size_rejected(ref_dev):
    with pytest.raises(ValueError, match="tenth"):
        dyn.propagate_unitary(ref_dev, dyn.Schedule((dyn.idle(5e-9),)), dt=1e-9)


def test_lab_frame_segment_matches_oracle():
    dev = DeviceParams(TransmonParams(ghz(1.0), mhz(-90)), TransmonParams(ghz(1.08), mhz(-90)), mhz(3))
    wd = ghz(1.04)
    om = mhz(20)
    period = TWO_PI / wd
    seg = dyn.PulseSegment("flat", 10 * period, DriveParams(om, wd), frame="lab")
    u_q = dyn.propagate_unitary(dev, dyn.Schedule((seg,)), dt=period / 100)
    u_lab = propagator(system_hamiltonian(dev), seg.duration) @ u_q
    h0 = oracles.hamiltonian(dev.q1.omega01, dev.q2.omega01, dev.q1.delta, dev.q2.delta, dev.J)
    up = oracles.lab_period_propagator(h0, oracles.drive_coupling(om, om), wd)
    np.testing.assert_allclose(u_lab, np.linalg.matrix_power(up, 10), atol=1e-6)


def test_gaussian_needs_four_sigma():
    with pytest.raises(ValueError, match="4 sigma"):
        dyn.PulseSegment("gaussian", 100e-9, DriveParams(1.0, 1.0), sigma=50e-9)
    seg = dyn.PulseSegment("gaussian", 200e-9, DriveParams(1.0, 1.0))
    assert seg.envelope(0.0) == pytest.approx(0.0, abs=1e-15)
    assert seg.envelope(100e-9) == pytest.approx(1.0)


def test_flat_top_area_rule():
    seg = dyn.flat_pulse(DriveParams(1.0, 1.0), dyn.flat_top_duration(800e-9, 10e-9), ramp=10e-9)
    t = np.linspace(0, seg.duration, 200001)
    # the two-photon rotation follows the squared envelope
    assert trapezoid(seg.envelope(t) ** 2, t) == pytest.approx(800e-9, rel=1e-6)


# ---------------------------------------------------------------- open system


def test_noiseless_density_matches_unitary(ref_dev, formula_op):
    sched = dyn.Schedule((formula_op.segment(),))
    psi = dyn.propagate_unitary(ref_dev, sched) @ dyn.ground_state(ref_dev)
    rho = dyn.propagate_density(ref_dev, sched, dyn.NoiseParams(), dyn.ground_state(ref_dev))
    assert np.real(psi.conj() @ rho @ psi) > 1 - 1e-6


def test_density_stays_physical(ref_dev, formula_op):
    noise = dyn.NoiseParams.from_T2(4e-6, 4e-6, 38e-6, 32e-6)
    for t in (50e-9, 400e-9, 1.2e-6):
        seg = dyn.flat_pulse(formula_op.drive(), t)
        rho = dyn.propagate_density(ref_dev, dyn.Schedule((seg,)), noise, dyn.ground_state(ref_dev))
        assert abs(np.trace(rho) - 1) < 1e-6
        assert np.abs(rho - rho.conj().T).max() < 1e-9
        assert np.linalg.eigvalsh(rho).min() > -1e-8


def test_idle_coherence_decay_law():
    dev = bare()
    noise = dyn.NoiseParams(T1_q1=20e-6, Tphi_q1=7e-6)
    psi = (dev.space.basis_ket(0, 0) + dev.space.basis_ket(1, 0)) / math.sqrt(2)
    i, j = dev.space.index(0, 0), dev.space.index(1, 0)
    for t in (1e-6, 5e-6):
        rho = dyn.propagate_density(dev, dyn.Schedule((dyn.idle(t),)), noise, psi)
        expected = 0.5 * math.exp(-t * (1 / (2 * 20e-6) + 1 / 7e-6))
        assert abs(rho[i, j]) == pytest.approx(expected, rel=1e-9)


def test_ramsey_rate_matches_configured_T2(ref_dev):
    noise = dyn.NoiseParams.from_T2(4e-6, 6e-6, 38e-6, 32e-6)
    ds = dressed_states(ref_dev)
    psi = (ds.state(0, 0) + ds.state(0, 1)) / math.sqrt(2)
    times = np.linspace(0.2e-6, 8e-6, 12)
    coh = [
        2 * abs(ds.state(0, 0).conj() @ dyn.propagate_density(ref_dev, dyn.Schedule((dyn.idle(t),)), noise, psi) @ ds.state(0, 1))
        for t in times
    ]
    (a, rate), _ = curve_fit(lambda t, a, g: a * np.exp(-g * t), times, coh, p0=[1.0, 1e5])
    assert rate == pytest.approx(1 / noise.T2(2), rel=0.02)


def test_noise_parameter_validation():
    with pytest.raises(ValueError):
        dyn.NoiseParams.from_T2(10e-6, 10e-6, 4e-6, 4e-6)
    n = dyn.NoiseParams.from_T2(4e-6, 4e-6, 38e-6, 32e-6)
    assert n.T2(1) == pytest.approx(4e-6)
    assert dyn.two_qubit_coherence_time(dyn.NoiseParams(Tphi_q1=4e-6, Tphi_q2=4e-6)) == pytest.approx(2e-6)


# ---------------------------------------------------------------- Rabi and frequencies


def test_zero_drive_stays_in_ground_state(ref_dev):
    tr = dyn.rabi_experiment(ref_dev, 0.0, ghz(4.5), np.linspace(0, 1e-6, 11))
    np.testing.assert_allclose(tr.population(0, 0), 1.0, atol=1e-12)


def test_two_photon_rabi_visibility(ref_dev):
    om = mhz(5)
    res = dyn.calibrate_resonance(ref_dev, om)
    tr = dyn.rabi_experiment(ref_dev, om, res.omega_d, np.linspace(0, 2 * TWO_PI / res.splitting, 201))
    p11 = tr.population(1, 1)
    assert p11.max() - p11.min() > 0.95


def test_far_detuned_drive_is_suppressed(ref_dev):
    om = mhz(5)
    res = dyn.calibrate_resonance(ref_dev, om)
    tr = dyn.rabi_experiment(ref_dev, om, res.omega_d + 50 * res.splitting, np.linspace(0, 2 * TWO_PI / res.splitting, 201))
    assert tr.population(1, 1).max() < 0.05


def test_synthetic_frequency():
    t = np.arange(0, 20e-6, 10e-9)
    y = 0.5 * (1 - np.cos(TWO_PI * 0.3e6 * t))
    tr = dyn.Trace(t, np.stack([1 - y, 0 * y, 0 * y, y], axis=1), ((0, 0), (0, 1), (1, 0), (1, 1)))
    assert dyn.extract_frequency(tr).value == pytest.approx(TWO_PI * 0.3e6, rel=0.005)


def test_constant_trace_has_no_oscillation():
    t = np.linspace(0, 1e-6, 100)
    tr = dyn.Trace(t, np.tile([1.0, 0, 0, 0], (100, 1)), ((0, 0), (0, 1), (1, 0), (1, 1)))
    with pytest.raises(NoOscillationError):
        dyn.extract_frequency(tr)


def test_rabi_frequency_matches_formula_at_small_drive(ref_dev):
    om = mhz(1.5)
    delta = calibrate_delta(ref_dev, om)
    res = dyn.calibrate_resonance(ref_dev, om, delta_guess=delta)
    formula = abs(omega_B_full(ref_dev, om, om, delta))
    tr = dyn.rabi_experiment(ref_dev, om, res.omega_d, np.linspace(0, 4 * TWO_PI / formula, 160))
    assert dyn.extract_frequency(tr).value == pytest.approx(formula, rel=0.05)


def test_sweep_validates_and_flags_rows(ref_dev):
    with pytest.raises(ValueError):
        dyn.amplitude_sweep(ref_dev, [mhz(2), mhz(1)])
    real = dyn.calibrate_resonance

    def flaky(dev, omega1, *args, **kwargs):
        if omega1 > mhz(2.5):
            raise dyn.CalibrationError("synthetic failure")
        return real(dev, omega1, *args, **kwargs)

    with mock.patch.object(dyn, "calibrate_resonance", flaky):
        rows = dyn.amplitude_sweep(ref_dev, [mhz(2), mhz(3)])
    assert rows[0].ok and not rows[1].ok
    assert "synthetic failure" in rows[1].error
    assert math.isnan(rows[1].omega_B_sim)


# ---------------------------------------------------------------- echo


ECHO_DELAYS = np.linspace(0, 4e-6, 81)
ECHO_RATE = TWO_PI * 0.25e6  # P00 oscillates at twice the phase ramp


def test_noiseless_echo(ref_dev, fine_op):
    tr = dyn.bell_echo(ref_dev, dyn.NoiseParams(), ECHO_DELAYS, ECHO_RATE, fine_op)
    y = tr.population(0, 0)
    assert (y.max() - y.min()) / (y.max() + y.min()) >= 0.98
    fit = dyn.fit_damped_oscillation(ECHO_DELAYS, y, 2 * ECHO_RATE)
    assert 1 / fit.decay_time < 1 / (10 * ECHO_DELAYS[-1])
    fast = dyn.bell_echo(ref_dev, dyn.NoiseParams(), ECHO_DELAYS, 2 * ECHO_RATE, fine_op)
    fit2 = dyn.fit_damped_oscillation(ECHO_DELAYS, fast.population(0, 0), 4 * ECHO_RATE)
    assert fit2.frequency / fit.frequency == pytest.approx(2.0, rel=0.01)


def test_echo_time_matches_density_oracle(ref_dev, fine_op):
    noise = dyn.NoiseParams(Tphi_q1=4e-6, Tphi_q2=4e-6)
    tr = dyn.bell_echo(ref_dev, noise, ECHO_DELAYS, ECHO_RATE, fine_op)
    fit = dyn.fit_damped_oscillation(ECHO_DELAYS, tr.population(0, 0), 2 * ECHO_RATE)
    times = np.linspace(0, 4e-6, 9)
    coh = dyn.bell_coherence_decay(ref_dev, noise, times)
    (_, rate), _ = curve_fit(lambda t, a, g: a * np.exp(-g * t), times, coh, p0=[1.0, 1e5])
    assert fit.decay_time == pytest.approx(1 / rate, rel=0.15)


# ---------------------------------------------------------------- single-qubit gates


def test_zero_angle_is_idle(ref_dev):
    sched = dyn.single_qubit_gate(ref_dev, 1, "X", 0.0)
    assert sched.segments[0].shape == "idle"
    assert sched.duration == pytest.approx(200e-9)


@pytest.mark.parametrize("qubit", [1, 2])
def test_calibrated_rotation_angles(ref_dev, qubit):
    for angle in (math.pi, math.pi / 2):
        amp, det = dyn.calibrate_single_qubit(ref_dev, qubit, angle)
        realized, leak = dyn._rotation_angle(ref_dev, qubit, amp, dyn.SQ_SIGMA, dyn.DEFAULT_DT, det)
        assert abs(realized - angle) < 1e-3
        assert leak < 0.01


def test_x_pi_inverts_qubit_one(ref_dev):
    u = dyn.propagate_unitary(ref_dev, dyn.single_qubit_gate(ref_dev, 1, "X", math.pi))
    p10 = abs(dressed_states(ref_dev).state(1, 0).conj() @ u @ dyn.ground_state(ref_dev)) ** 2
    assert p10 > 0.999


def test_two_half_rotations_make_a_pi_rotation(ref_dev):
    full = dyn.computational_block(ref_dev, dyn.propagate_unitary(ref_dev, dyn.single_qubit_gate(ref_dev, 1, "X", math.pi)))
    half = dyn.single_qubit_gate(ref_dev, 1, "X", math.pi / 2)
    twice = dyn.computational_block(ref_dev, dyn.propagate_unitary(ref_dev, half + half))
    assert 1 - abs(np.trace(full.conj().T @ twice)) / 4 < 1e-2


def test_axes_and_signs(ref_dev):
    """Y rotations and negative angles act as expected on the qubit-1 Bloch vector."""
    sp = dressed_states(ref_dev)
    psi0 = dyn.ground_state(ref_dev)
    for axis, angle, expected in (("X", math.pi / 2, (0, -1, 0)), ("Y", math.pi / 2, (1, 0, 0)), ("X", -math.pi / 2, (0, 1, 0))):
        u = dyn.propagate_unitary(ref_dev, dyn.single_qubit_gate(ref_dev, 1, axis, angle))
        psi = u @ psi0
        c0, c1 = sp.state(0, 0).conj() @ psi, sp.state(1, 0).conj() @ psi
        bloch = (2 * (c0.conj() * c1).real, 2 * (c0.conj() * c1).imag, abs(c0) ** 2 - abs(c1) ** 2)
        np.testing.assert_allclose(bloch, expected, atol=0.02)
