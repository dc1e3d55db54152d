import math

import numpy as np
import pytest
import scipy.linalg

from broadband_mps import fock


def test_ladder_operators():
    a = fock.annihilation(5)
    assert a[2, 3] == pytest.approx(math.sqrt(3))
    # zero-padded at the cutoff: no reflecting boundary
    assert np.all(a[:, 0] == 0)
    np.testing.assert_allclose(fock.number(5), np.diag(np.arange(5)))
    np.testing.assert_allclose(fock.creation(5), a.conj().T)
    np.testing.assert_allclose(np.diag(fock.parity(4)), [1, -1, 1, -1])


def test_fock_vector_range():
    assert fock.fock_vector(2, 4)[2] == 1
    with pytest.raises(ValueError):
        fock.fock_vector(4, 4)


def test_coherent_mean_number():
    # <n> of the truncated, renormalized |1.0> at d = 12
    v = fock.coherent_vector(1.0, 12)
    n_mean = float(np.sum(np.arange(12) * np.abs(v) ** 2))
    assert n_mean == pytest.approx(1.0, abs=1e-6)
    assert fock.coherent_tail_weight(1.0, 12) < 1e-8


def test_beamsplitter_mode_action():
    theta, phi = 0.37, 1.1
    d = 3
    u = fock.beamsplitter(theta, phi, d)
    # |1,0> -> cos|1,0> - e^{-i phi} sin |0,1>
    psi = np.zeros(d * d, complex)
    psi[1 * d + 0] = 1
    out = u @ psi
    assert out[1 * d + 0] == pytest.approx(math.cos(theta))
    assert out[0 * d + 1] == pytest.approx(-np.exp(-1j * phi) * math.sin(theta))


def test_beamsplitter_exact_elements_are_projection_of_larger_space():
    theta, phi, d = 0.8, 0.3, 3
    big = 2 * d - 1
    gen = fock.beamsplitter_generator(theta, phi, big)
    full = scipy.linalg.expm(gen)
    keep = [i * big + j for i in range(d) for j in range(d)]
    np.testing.assert_allclose(fock.beamsplitter(theta, phi, d), full[np.ix_(keep, keep)], atol=1e-13)


def test_phase_shifter_flips_odd_components():
    ps = fock.phase_shifter(math.pi, 4)
    np.testing.assert_allclose(np.diag(ps), [1, -1, 1, -1], atol=1e-15)


def test_embed_matches_kron():
    op = fock.number(3)
    big = fock.embed(op, 1, [2, 3, 2])
    assert big.shape == (12, 12)
    np.testing.assert_allclose(big, np.kron(np.kron(np.eye(2), op), np.eye(2)))
