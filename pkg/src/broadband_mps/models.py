"""Discretized waveguide Hamiltonians and their Trotter gate schedules.

Units are hbar = 1. The kinetic term -(beta2/2) d^2/dx^2 is discretized with a
central second difference on an open chain with zero field outside the chain,
giving a hopping amplitude J = beta2 / (2 dx^2) and an on-site energy 2J per
photon. The 2J n diagonal is kept in the on-site gate so that the two-site
gate is a pure number-conserving hopping (beamsplitter-like) unitary.

Kerr lattice Hamiltonian::

    H = sum_i [-J (a_i^+ a_{i+1} + h.c.)] + sum_i [(g/2) n_i (n_i - 1) + 2J n_i]

chi(2) lattice Hamiltonian, signal a and pump b in every bin::

    H = sum_i [-J_s (a_i^+ a_{i+1} + h.c.) - J_p (b_i^+ b_{i+1} + h.c.)]
      + sum_i [2J_s n_{s,i} + (2J_p + xi) n_{p,i} + (eps/2)(b_i a_i^+2 + b_i^+ a_i^2)]

The per-bin basis of the chi(2) model is signal-major: index = n_s * d_p + n_p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import NDArray

from . import fock
from .mps import LocalOperator, MpsState, TwoSiteOperator


def _check_finite(**values: float) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v}")


def _hermitian_expm(h: NDArray[np.complex128], dt: float) -> NDArray[np.complex128]:
    """exp(-i h dt) through the eigendecomposition, unitary to machine precision."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


@dataclass(frozen=True)
class KerrWaveguideModel:
    """Single-field chi(3) waveguide on ``n_bins`` spatial bins.

    ``g_kerr < 0`` is the attractive (solitonic) case for ``beta2 > 0``.
    """

    n_bins: int
    dx: float = 1.0
    beta2: float = 1.0
    g_kerr: float = -0.1
    kappa: float = 0.0
    local_dim: int = 6

    def __post_init__(self) -> None:
        _check_finite(dx=self.dx, beta2=self.beta2, g_kerr=self.g_kerr, kappa=self.kappa)
        if self.n_bins < 2:
            raise ValueError(f"n_bins must be >= 2, got {self.n_bins}")
        if self.dx <= 0:
            raise ValueError(f"dx must be > 0, got {self.dx}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if self.local_dim < 2:
            raise ValueError(f"local_dim must be >= 2, got {self.local_dim}")

    @property
    def hopping(self) -> float:
        return self.beta2 / (2.0 * self.dx**2)

    @property
    def site_dim(self) -> int:
        return self.local_dim

    def local_annihilators(self) -> list[NDArray[np.complex128]]:
        return [fock.annihilation(self.local_dim)]

    def onsite_hamiltonian(self) -> NDArray[np.complex128]:
        n = np.arange(self.local_dim, dtype=float)
        return np.diag(0.5 * self.g_kerr * n * (n - 1) + 2.0 * self.hopping * n).astype(np.complex128)

    def bond_hamiltonian(self) -> NDArray[np.complex128]:
        a = fock.annihilation(self.local_dim)
        ad = a.conj().T
        return -self.hopping * (np.kron(ad, a) + np.kron(a, ad))

    def single_particle_matrices(self) -> list[NDArray[np.complex128]]:
        """Quadratic part of H as one n_bins x n_bins matrix per species."""
        return [_chain_matrix(self.n_bins, self.hopping, 0.0)]

    def is_linear(self) -> bool:
        return self.g_kerr == 0.0

    def number_weights(self) -> list[float]:
        return [1.0]


@dataclass(frozen=True)
class Chi2WaveguideModel:
    """Two-field chi(2) waveguide: signal (dim ``d_s``) and pump (dim ``d_p``) per bin."""

    n_bins: int
    dx: float = 1.0
    signal_beta2: float = 1.0
    pump_beta2: float = 0.5
    epsilon: float = 0.5
    xi_mismatch: float = 0.0
    kappa: float = 0.0
    d_s: int = 3
    d_p: int = 2

    def __post_init__(self) -> None:
        _check_finite(
            dx=self.dx,
            signal_beta2=self.signal_beta2,
            pump_beta2=self.pump_beta2,
            epsilon=self.epsilon,
            xi_mismatch=self.xi_mismatch,
            kappa=self.kappa,
        )
        if self.n_bins < 2:
            raise ValueError(f"n_bins must be >= 2, got {self.n_bins}")
        if self.dx <= 0:
            raise ValueError(f"dx must be > 0, got {self.dx}")
        if self.d_s < 3 or self.d_p < 2:
            raise ValueError(f"need d_s >= 3 and d_p >= 2, got d_s={self.d_s}, d_p={self.d_p}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")

    @property
    def signal_hopping(self) -> float:
        return self.signal_beta2 / (2.0 * self.dx**2)

    @property
    def pump_hopping(self) -> float:
        return self.pump_beta2 / (2.0 * self.dx**2)

    @property
    def site_dim(self) -> int:
        return self.d_s * self.d_p

    def local_annihilators(self) -> list[NDArray[np.complex128]]:
        """[signal a, pump b] on the d_s * d_p bin space."""
        a = np.kron(fock.annihilation(self.d_s), np.eye(self.d_p))
        b = np.kron(np.eye(self.d_s), fock.annihilation(self.d_p))
        return [a, b]

    def onsite_hamiltonian(self) -> NDArray[np.complex128]:
        a, b = self.local_annihilators()
        ad, bd = a.conj().T, b.conj().T
        h = 2.0 * self.signal_hopping * (ad @ a) + (2.0 * self.pump_hopping + self.xi_mismatch) * (bd @ b)
        h = h + 0.5 * self.epsilon * (b @ ad @ ad + bd @ a @ a)
        return 0.5 * (h + h.conj().T)

    def bond_hamiltonian(self) -> NDArray[np.complex128]:
        a, b = self.local_annihilators()
        h = -self.signal_hopping * (np.kron(a.conj().T, a) + np.kron(a, a.conj().T))
        h = h - self.pump_hopping * (np.kron(b.conj().T, b) + np.kron(b, b.conj().T))
        return h

    def single_particle_matrices(self) -> list[NDArray[np.complex128]]:
        return [
            _chain_matrix(self.n_bins, self.signal_hopping, 0.0),
            _chain_matrix(self.n_bins, self.pump_hopping, self.xi_mismatch),
        ]

    def is_linear(self) -> bool:
        return self.epsilon == 0.0

    def number_weights(self) -> list[float]:
        """Manley-Rowe weights: the charge n_s + 2 n_p is conserved."""
        return [1.0, 2.0]

    def manley_rowe_operator(self) -> NDArray[np.complex128]:
        a, b = self.local_annihilators()
        return a.conj().T @ a + 2.0 * (b.conj().T @ b)


LatticeModel = Union[KerrWaveguideModel, Chi2WaveguideModel]


def _chain_matrix(n: int, hop: float, detuning: float) -> NDArray[np.complex128]:
    h = np.diag(np.full(n, 2.0 * hop + detuning)).astype(np.complex128)
    idx = np.arange(n - 1)
    h[idx, idx + 1] = -hop
    h[idx + 1, idx] = -hop
    return h


# -- gates -------------------------------------------------------------------


def kerr_hopping_gate(model: KerrWaveguideModel, dt: float) -> TwoSiteOperator:
    """exp(-i H_hop dt) with H_hop = -J (a^+ b + a b^+) on the truncated d^2 space."""
    _check_finite(dt=dt)
    return TwoSiteOperator(_hermitian_expm(model.bond_hamiltonian(), dt), unitary=True)


def kerr_onsite_gate(model: KerrWaveguideModel, dt: float) -> LocalOperator:
    """exp(-i [(g/2) n(n-1) + 2J n] dt), diagonal in the Fock basis."""
    _check_finite(dt=dt)
    energies = np.real(np.diag(model.onsite_hamiltonian()))
    return LocalOperator(np.diag(np.exp(-1j * energies * dt)), unitary=True)


def chi2_local_gate(model: Chi2WaveguideModel, dt: float) -> LocalOperator:
    _check_finite(dt=dt)
    return LocalOperator(_hermitian_expm(model.onsite_hamiltonian(), dt), unitary=True)


def chi2_hopping_gate(model: Chi2WaveguideModel, dt: float) -> TwoSiteOperator:
    _check_finite(dt=dt)
    return TwoSiteOperator(_hermitian_expm(model.bond_hamiltonian(), dt), unitary=True)


def onsite_gate(model: LatticeModel, dt: float) -> LocalOperator:
    if isinstance(model, KerrWaveguideModel):
        return kerr_onsite_gate(model, dt)
    return chi2_local_gate(model, dt)


def hopping_gate(model: LatticeModel, dt: float) -> TwoSiteOperator:
    if isinstance(model, KerrWaveguideModel):
        return kerr_hopping_gate(model, dt)
    return chi2_hopping_gate(model, dt)


@dataclass(frozen=True)
class GateLayer:
    """One layer of mutually commuting gates.

    ``kind`` is ``"onsite"`` (``sites`` lists the sites) or ``"bond"`` (``sites``
    lists left sites of the bonds).
    """

    kind: str
    sites: tuple[int, ...]
    gate: LocalOperator | TwoSiteOperator


def trotter_layers(model: LatticeModel, dt: float, order: int = 2) -> list[GateLayer]:
    """Gate schedule approximating exp(-i H dt).

    Order 1 applies even bonds, odd bonds, then on-site gates (Lie-Trotter).
    Order 2 is the symmetric Strang arrangement
    onsite(dt/2) even(dt/2) odd(dt) even(dt/2) onsite(dt/2), so the schedule
    for -dt is the exact inverse of the schedule for dt.
    """
    if order not in (1, 2):
        raise ValueError(f"unsupported Trotter order {order}; use 1 or 2")
    _check_finite(dt=dt)
    n = model.n_bins
    even = tuple(range(0, n - 1, 2))
    odd = tuple(range(1, n - 1, 2))
    sites = tuple(range(n))

    def bonds(bs: tuple[int, ...], tau: float) -> list[GateLayer]:
        return [GateLayer("bond", bs, hopping_gate(model, tau))] if bs else []

    if order == 1:
        return bonds(even, dt) + bonds(odd, dt) + [GateLayer("onsite", sites, onsite_gate(model, dt))]
    half_site = GateLayer("onsite", sites, onsite_gate(model, dt / 2))
    return [half_site] + bonds(even, dt / 2) + bonds(odd, dt) + bonds(even, dt / 2) + [half_site]


def apply_layers(state: MpsState, layers: list[GateLayer], policy) -> float:
    """Apply a gate schedule in place; returns the total discarded weight."""
    discarded = 0.0
    for layer in layers:
        if layer.kind == "onsite":
            for s in layer.sites:
                state.apply_one_site(layer.gate, s)
            continue
        bs = layer.sites
        # sweep away from the current center to keep QR shifts short
        center = state.ortho_center if state.ortho_center is not None else 0
        if abs(center - bs[-1]) < abs(center - bs[0]):
            for s in reversed(bs):
                discarded += state.apply_two_site(layer.gate, s, policy, direction="left")
        else:
            for s in bs:
                discarded += state.apply_two_site(layer.gate, s, policy, direction="right")
    return discarded


# -- observables tied to the model -------------------------------------------------


def total_number(state: MpsState, model: LatticeModel) -> float:
    """Photon number (Kerr) or Manley-Rowe charge n_s + 2 n_p (chi2), unnormalized."""
    ops = model.local_annihilators()
    weights = model.number_weights()
    charge = sum(w * (a.conj().T @ a) for w, a in zip(weights, ops))
    return float(sum(np.real(np.trace(rho @ charge)) for rho in state.site_density_matrices()))


def species_density(state: MpsState, model: LatticeModel) -> list[np.ndarray]:
    """Per-species <n_i> profiles, unnormalized."""
    rhos = state.site_density_matrices()
    out = []
    for a in model.local_annihilators():
        n_op = a.conj().T @ a
        out.append(np.array([float(np.real(np.trace(r @ n_op))) for r in rhos]))
    return out


def energy(state: MpsState, model: LatticeModel) -> float:
    """<H> (unnormalized) from on-site and nearest-neighbour bond terms."""
    h_site = model.onsite_hamiltonian()
    e = sum(float(np.real(np.trace(r @ h_site))) for r in state.site_density_matrices())
    e += sum(state.bond_expectations(model.bond_hamiltonian()).real)
    return float(e)


# -- soliton helpers -----------------------------------------------------------------


def soliton_time_unit(x0: float, beta2: float) -> float:
    """Characteristic soliton time x0^2 / |beta2|."""
    return x0**2 / abs(beta2)


def classical_soliton_coupling(n_photons: float, x0: float, beta2: float, dx: float) -> float:
    """Lattice Kerr coefficient g whose mean-field sech soliton of width x0 holds n_photons.

    From the continuum balance g_c = -2 beta2 / (x0 N) and g = g_c / dx.
    """
    return -2.0 * beta2 / (x0 * n_photons * dx)


def sech_amplitudes(n_bins: int, dx: float, n_photons: float, x0: float, center: float | None = None) -> np.ndarray:
    """Coherent amplitudes alpha_i = sqrt(dx N / (2 x0)) sech((x_i - c) / x0), sum |alpha|^2 ~ N."""
    x = bin_positions(n_bins, dx)
    c = 0.0 if center is None else center
    return np.sqrt(dx * n_photons / (2.0 * x0)) / np.cosh((x - c) / x0) + 0j


def bin_positions(n_bins: int, dx: float) -> np.ndarray:
    """Bin centers, symmetric about zero."""
    return (np.arange(n_bins) - 0.5 * (n_bins - 1)) * dx
