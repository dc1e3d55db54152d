import math

import numpy as np
import pytest
import scipy.linalg

from broadband_mps import fock, models, oracles
from broadband_mps.mps import (
    TruncationPolicy,
    coherent_product_state,
    fidelity,
    fock_product_state,
    number_density,
    product_state,
    reduced_density_matrix,
)

from conftest import random_state

POLICY = TruncationPolicy(max_bond_dim=256)


def test_parameter_validation():
    with pytest.raises(ValueError):
        models.KerrWaveguideModel(1)
    with pytest.raises(ValueError):
        models.KerrWaveguideModel(4, dx=0.0)
    with pytest.raises(ValueError):
        models.KerrWaveguideModel(4, kappa=-1.0)
    with pytest.raises(ValueError):
        models.KerrWaveguideModel(4, g_kerr=float("nan"))
    with pytest.raises(ValueError):
        models.Chi2WaveguideModel(4, d_s=2)


def test_hopping_from_dispersion():
    m = models.KerrWaveguideModel(4, dx=0.5, beta2=2.0)
    assert m.hopping == pytest.approx(4.0)


def test_hopping_gate_identity_at_zero_dt():
    g = models.kerr_hopping_gate(models.KerrWaveguideModel(3, local_dim=3), 0.0)
    np.testing.assert_allclose(g.matrix, np.eye(9), atol=1e-15)


def test_hopping_gate_full_rabi_transfer():
    # J dt = pi/4: single photon transfer probability sin^2(pi/4)
    m = models.KerrWaveguideModel(2, local_dim=2)
    u = models.kerr_hopping_gate(m, math.pi / 4 / m.hopping).matrix
    psi = np.zeros(4, complex)
    psi[2] = 1  # |1,0>
    out = u @ psi
    assert abs(out[1]) ** 2 == pytest.approx(math.sin(math.pi / 4) ** 2, abs=1e-14)


def test_hopping_gate_matches_dense_expm():
    m = models.KerrWaveguideModel(2, beta2=1.3, local_dim=4)
    dt = 0.173
    ref = scipy.linalg.expm(-1j * m.bond_hamiltonian() * dt)
    np.testing.assert_allclose(models.kerr_hopping_gate(m, dt).matrix, ref, atol=1e-10)
    u = models.kerr_hopping_gate(m, dt).matrix
    np.testing.assert_allclose(u.conj().T @ u, np.eye(16), atol=1e-12)


def test_onsite_gate_phases():
    m = models.KerrWaveguideModel(3, beta2=0.0, g_kerr=0.0, local_dim=4)
    np.testing.assert_allclose(models.kerr_onsite_gate(m, 0.7).matrix, np.eye(4), atol=1e-15)
    m = models.KerrWaveguideModel(3, dx=1.0, beta2=0.8, g_kerr=-0.3, local_dim=5)
    dt = 0.41
    n = np.arange(5)
    expect = -(0.5 * m.g_kerr * n * (n - 1) + 2 * m.hopping * n) * dt
    got = np.angle(np.diag(models.kerr_onsite_gate(m, dt).matrix))
    np.testing.assert_allclose(np.exp(1j * got), np.exp(1j * expect), atol=1e-14)


def test_chi2_epsilon_zero_is_phase_only():
    m = models.Chi2WaveguideModel(2, epsilon=0.0)
    u = models.chi2_local_gate(m, 0.9).matrix
    np.testing.assert_allclose(np.abs(u), np.eye(m.site_dim), atol=1e-14)


def test_chi2_single_pump_photon_rabi():
    # |0_s,1_p> <-> |2_s,0_p> resonant when 2 J_p + xi = 4 J_s
    m = models.Chi2WaveguideModel(2, dx=1.0, signal_beta2=1.0, pump_beta2=0.5, epsilon=0.4, xi_mismatch=1.5)
    d_p = m.d_p
    psi = np.zeros(m.site_dim, complex)
    psi[0 * d_p + 1] = 1
    n_p = m.local_annihilators()[1].conj().T @ m.local_annihilators()[1]
    for t in (0.3, 1.1, 2.5):
        out = models.chi2_local_gate(m, t).matrix @ psi
        expect = math.cos(math.sqrt(2) * (m.epsilon / 2) * t) ** 2
        assert np.real(np.vdot(out, n_p @ out)) == pytest.approx(expect, abs=1e-12)


def test_chi2_gate_conserves_manley_rowe(rng):
    m = models.Chi2WaveguideModel(2, epsilon=0.7, xi_mismatch=0.2)
    q = m.manley_rowe_operator()
    u = models.chi2_local_gate(m, 0.37).matrix
    np.testing.assert_allclose(u @ q, q @ u, atol=1e-12)
    v = rng.normal(size=m.site_dim) + 1j * rng.normal(size=m.site_dim)
    v /= np.linalg.norm(v)
    w = u @ v
    assert np.real(np.vdot(w, q @ w)) == pytest.approx(np.real(np.vdot(v, q @ v)), abs=1e-12)


def test_unsupported_order():
    with pytest.raises(ValueError):
        models.trotter_layers(models.KerrWaveguideModel(3), 0.1, order=3)


def test_order2_schedule_is_reversible(rng):
    m = models.KerrWaveguideModel(4, g_kerr=-0.6, local_dim=3)
    s = random_state(rng, 4, 3, 9).canonicalize(0).normalize()
    work = s.copy()
    models.apply_layers(work, models.trotter_layers(m, 0.05, 2), POLICY)
    models.apply_layers(work, models.trotter_layers(m, -0.05, 2), POLICY)
    assert fidelity(work, s) >= 1 - 1e-10


def test_free_evolution_conserves_number():
    m = models.KerrWaveguideModel(5, g_kerr=0.0, local_dim=7)
    s = coherent_product_state([0.3, 0.5, 0.1, 0.0, 0.2j], 7)
    n0 = models.total_number(s, m)
    for _ in range(20):
        models.apply_layers(s, models.trotter_layers(m, 0.05, 2), POLICY)
    assert models.total_number(s, m) == pytest.approx(n0, abs=1e-12)


def test_energy_matches_dense(rng):
    m = models.KerrWaveguideModel(4, beta2=0.7, g_kerr=-0.4, local_dim=3)
    s = random_state(rng, 4, 3, 5).normalize()
    psi = oracles.densify(s).vector
    h = oracles.lattice_hamiltonian(m)
    assert models.energy(s, m) == pytest.approx(np.real(np.vdot(psi, h @ psi)), abs=1e-10)


def test_chi2_lattice_energy_and_charge_dense():
    m = models.Chi2WaveguideModel(3, epsilon=0.3, xi_mismatch=0.4)
    vecs = [np.kron(fock.coherent_vector(0.2, 3), fock.coherent_vector(0.3j, 2)) for _ in range(3)]
    s = product_state(vecs)
    psi = oracles.densify(s).vector
    h = oracles.lattice_hamiltonian(m)
    assert models.energy(s, m) == pytest.approx(np.real(np.vdot(psi, h @ psi)), abs=1e-10)
    q = sum(oracles.site_operator(m, m.manley_rowe_operator(), i) for i in range(3))
    assert models.total_number(s, m) == pytest.approx(np.real(np.vdot(psi, q @ psi)), abs=1e-12)


def test_soliton_helpers():
    amps = models.sech_amplitudes(64, 1.0, 4.0, 4.0)
    assert np.sum(np.abs(amps) ** 2) == pytest.approx(4.0, rel=1e-3)
    assert models.classical_soliton_coupling(4.0, 4.0, 1.0, 1.0) == pytest.approx(-0.125)
    assert models.soliton_time_unit(4.0, 2.0) == pytest.approx(8.0)
    x = models.bin_positions(4, 0.5)
    np.testing.assert_allclose(x, [-0.75, -0.25, 0.25, 0.75])


def test_isolated_bin_kerr_matches_diagonal_propagator():
    m = models.KerrWaveguideModel(2, beta2=0.0, g_kerr=-0.9, local_dim=12)
    s = coherent_product_state([1.1, 0.0], 12)
    for _ in range(10):
        models.apply_layers(s, models.trotter_layers(m, 0.1, 2), POLICY)
    n = np.arange(12)
    ref = fock.coherent_vector(1.1, 12) * np.exp(-1j * 0.5 * m.g_kerr * n * (n - 1) * 1.0)
    np.testing.assert_allclose(reduced_density_matrix(s, 0), np.outer(ref, ref.conj()), atol=1e-12)
    np.testing.assert_allclose(reduced_density_matrix(s, 1), np.diag(fock.fock_vector(0, 12)), atol=1e-12)


def test_single_photon_free_propagation():
    m = models.KerrWaveguideModel(6, g_kerr=0.0, local_dim=2)
    s = fock_product_state([0, 0, 1, 0, 0, 0], 2)
    t = 0.8
    for _ in range(80):
        models.apply_layers(s, models.trotter_layers(m, t / 80, 2), POLICY)
    u = scipy.linalg.expm(-1j * m.single_particle_matrices()[0] * t)
    np.testing.assert_allclose(number_density(s), np.abs(u[:, 2]) ** 2, atol=1e-4)
