"""Classical (mean-field) reference for the Kerr lattice.

Replacing operators by amplitudes in the lattice Hamiltonian gives the discrete
nonlinear Schroedinger equation

    i d alpha_i / dt = sum_j h_ij alpha_j + g |alpha_i|^2 alpha_i,

with h the single-particle hopping matrix. It is invariant under
alpha -> sqrt(s) alpha, g -> g / s, so it is the large photon-number limit of the
quantum model at fixed g N. Integrated with symmetric split-step: half a linear
step exp(-i h dt/2), the exact nonlinear phase exp(-i g |alpha|^2 dt), then the
second half linear step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .models import KerrWaveguideModel, _hermitian_expm


@dataclass
class MeanFieldRecord:
    times: NDArray[np.float64]
    amplitudes: NDArray[np.complex128]  # (n_times, n_bins)

    @property
    def densities(self) -> NDArray[np.float64]:
        return np.abs(self.amplitudes) ** 2


def split_step(
    model: KerrWaveguideModel,
    alpha0: NDArray[np.complex128],
    total_time: float,
    dt: float,
    observe_every: int = 1,
) -> MeanFieldRecord:
    """Integrate the lattice NLSE from ``alpha0`` up to ``total_time``."""
    alpha = np.asarray(alpha0, dtype=np.complex128).copy()
    if alpha.shape != (model.n_bins,):
        raise ValueError(f"need {model.n_bins} amplitudes, got shape {alpha.shape}")
    n_steps = int(round(total_time / dt))
    if n_steps < 1 or abs(n_steps * dt - total_time) > 1e-9 * max(1.0, total_time):
        raise ValueError("total_time must be a positive integer multiple of dt")
    half = _hermitian_expm(model.single_particle_matrices()[0], 0.5 * dt)
    times, amps = [0.0], [alpha.copy()]
    for k in range(1, n_steps + 1):
        alpha = half @ alpha
        alpha *= np.exp(-1j * model.g_kerr * np.abs(alpha) ** 2 * dt)
        alpha = half @ alpha
        if k % observe_every == 0 or k == n_steps:
            times.append(k * dt)
            amps.append(alpha.copy())
    return MeanFieldRecord(np.array(times), np.array(amps))


def rms_width(density: NDArray[np.float64], positions: NDArray[np.float64]) -> float:
    """Root-mean-square width of a non-negative profile about its centroid."""
    w = np.asarray(density, dtype=float)
    total = w.sum()
    if total <= 0:
        raise ValueError("profile has no weight")
    mean = float(np.dot(w, positions) / total)
    return float(np.sqrt(np.dot(w, (positions - mean) ** 2) / total))


def stationary_soliton(
    model: KerrWaveguideModel,
    alpha0: NDArray[np.complex128],
    dtau: float = 0.05,
    tol: float = 1e-12,
    max_steps: int = 200_000,
) -> NDArray[np.complex128]:
    """Lowest-energy stationary profile at fixed photon number, by normalized imaginary-time flow.

    Starts from ``alpha0`` (typically a sech guess) and keeps sum |alpha|^2 fixed,
    so the result is the lattice counterpart of the classical soliton with the
    same photon number. The flow preserves reflection symmetry of the guess.
    """
    alpha = np.asarray(alpha0, dtype=np.complex128).copy()
    n_photons = float(np.sum(np.abs(alpha) ** 2))
    if n_photons <= 0:
        raise ValueError("initial guess has no photons")
    h = model.single_particle_matrices()[0]
    w, v = np.linalg.eigh(h)
    half = (v * np.exp(-0.5 * dtau * w)) @ v.conj().T
    alpha = np.abs(alpha) + 0j
    for _ in range(max_steps):
        new = half @ alpha
        new *= np.exp(-model.g_kerr * np.abs(new) ** 2 * dtau)
        new = half @ new
        new *= np.sqrt(n_photons / np.sum(np.abs(new) ** 2))
        if np.max(np.abs(new - alpha)) < tol:
            return new
        alpha = new
    raise RuntimeError(f"imaginary-time flow did not converge in {max_steps} steps")
