"""Truncated single-mode Fock-space operators and states.

Basis states are |0>, ..., |d-1>; the annihilation operator is zero-padded at
the cutoff, so ``a |0> = 0`` and ``a^dagger |d-1> = 0``.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg
from numpy.typing import NDArray


def annihilation(d: int) -> NDArray[np.complex128]:
    """Return the d x d annihilation matrix with a|n> = sqrt(n)|n-1>."""
    if d < 1:
        raise ValueError(f"local dimension must be >= 1, got {d}")
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1).astype(np.complex128)


def creation(d: int) -> NDArray[np.complex128]:
    return annihilation(d).conj().T


def number(d: int) -> NDArray[np.complex128]:
    return np.diag(np.arange(d, dtype=float)).astype(np.complex128)


def parity(d: int) -> NDArray[np.complex128]:
    return np.diag((-1.0) ** np.arange(d)).astype(np.complex128)


def fock_vector(n: int, d: int) -> NDArray[np.complex128]:
    if not 0 <= n < d:
        raise ValueError(f"Fock index {n} outside cutoff d={d}")
    v = np.zeros(d, dtype=np.complex128)
    v[n] = 1.0
    return v


def coherent_amplitudes(alpha: complex, d: int) -> NDArray[np.complex128]:
    """Untruncated coherent-state amplitudes e^{-|a|^2/2} a^n / sqrt(n!) for n < d."""
    n = np.arange(d)
    log_fact = np.array([math.lgamma(k + 1) for k in n])
    mag = abs(alpha)
    if mag == 0.0:
        out = np.zeros(d, dtype=np.complex128)
        out[0] = 1.0
        return out
    log_amp = -0.5 * mag**2 + n * math.log(mag) - 0.5 * log_fact
    phase = np.exp(1j * n * np.angle(alpha))
    return np.exp(log_amp) * phase


def coherent_tail_weight(alpha: complex, d: int) -> float:
    """Probability mass of the coherent state |alpha> at photon numbers >= d."""
    kept = np.sum(np.abs(coherent_amplitudes(alpha, d)) ** 2)
    return float(max(0.0, 1.0 - kept))


def coherent_vector(alpha: complex, d: int) -> NDArray[np.complex128]:
    """Truncated coherent state renormalized to unit norm."""
    v = coherent_amplitudes(alpha, d)
    return v / np.linalg.norm(v)


def beamsplitter_generator(theta: float, phi: float, d: int) -> NDArray[np.complex128]:
    """theta (e^{i phi} a^dag b - e^{-i phi} a b^dag) on the d^2 space, a = left mode."""
    a = annihilation(d)
    ad = a.conj().T
    g = np.exp(1j * phi) * np.kron(ad, a) - np.exp(-1j * phi) * np.kron(a, ad)
    return theta * g


def beamsplitter(theta: float, phi: float, d: int) -> NDArray[np.complex128]:
    """Exact two-mode beamsplitter restricted to the truncated d x d product space.

    The matrix elements are those of the untruncated unitary
    U = exp[theta (e^{i phi} a^dag b - e^{-i phi} a b^dag)]. Photon number is
    conserved, so evaluating the exponential with per-mode cutoff 2d - 1 is exact
    for every input with n_a, n_b < d. Components rotated above the cutoff are
    dropped, which makes the returned block a contraction rather than a unitary.
    """
    big = 2 * d - 1
    u_big = scipy.linalg.expm(beamsplitter_generator(theta, phi, big))
    keep = (np.arange(d)[:, None] * big + np.arange(d)[None, :]).ravel()
    return u_big[np.ix_(keep, keep)]


def phase_shifter(phi: float, d: int) -> NDArray[np.complex128]:
    """exp(i phi n)."""
    return np.diag(np.exp(1j * phi * np.arange(d)))


def embed(op: NDArray, site: int, dims: list[int]) -> NDArray[np.complex128]:
    """Kronecker-embed a local operator into the full product space (dense)."""
    out = np.ones((1, 1), dtype=np.complex128)
    for k, dk in enumerate(dims):
        out = np.kron(out, op if k == site else np.eye(dk))
    return out
