"""Brute-force references for validating the tensor-network engine.

Dense state vectors use site-major ordering: the basis index of
|s_0 s_1 ... s_{n-1}> is sum_k s_k * D^(n-1-k) with D the per-site dimension.
Every oracle here is exact up to its stated tolerance; anything that would
exceed :data:`MAX_DENSE_DIM` is refused rather than approximated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from numpy.typing import NDArray

from .exceptions import SimulationError
from .models import LatticeModel
from .mps import MpsState, _transfer

MAX_DENSE_DIM = 2**24


@dataclass
class DenseState:
    vector: NDArray[np.complex128]
    site_dim: int
    n_sites: int

    def __post_init__(self) -> None:
        self.vector = np.asarray(self.vector, dtype=np.complex128)
        _check_cap(self.site_dim, self.n_sites)
        if self.vector.shape != (self.site_dim**self.n_sites,):
            raise ValueError(f"vector shape {self.vector.shape} != ({self.site_dim}^{self.n_sites},)")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))


def _check_cap(site_dim: int, n_sites: int) -> None:
    if n_sites * math.log2(site_dim) > math.log2(MAX_DENSE_DIM) + 1e-12:
        raise SimulationError(f"dense dimension {site_dim}^{n_sites} exceeds the 2^24 oracle cap")


def densify(state: MpsState) -> DenseState:
    """Contract an MPS into its full state vector."""
    _check_cap(state.local_dim, state.n_sites)
    v = state.tensors[0].reshape(state.local_dim, -1)
    for t in state.tensors[1:]:
        v = np.tensordot(v, t, axes=(1, 0)).reshape(-1, t.shape[2])
    return DenseState(v.reshape(-1), state.local_dim, state.n_sites)


def embed_sparse(op: NDArray, site: int, n_sites: int, site_dim: int, span: int = 1) -> sp.csr_matrix:
    """I x ... x op x ... x I with ``op`` covering ``span`` consecutive sites from ``site``."""
    left = sp.identity(site_dim**site, format="csr", dtype=np.complex128)
    right = sp.identity(site_dim ** (n_sites - site - span), format="csr", dtype=np.complex128)
    return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")


def lattice_hamiltonian(model: LatticeModel) -> sp.csr_matrix:
    """Full sparse lattice Hamiltonian assembled from the model's local terms."""
    n, dim = model.n_bins, model.site_dim
    _check_cap(dim, n)
    h = sp.csr_matrix((dim**n, dim**n), dtype=np.complex128)
    h_site = model.onsite_hamiltonian()
    h_bond = model.bond_hamiltonian()
    for i in range(n):
        h = h + embed_sparse(h_site, i, n, dim)
    for i in range(n - 1):
        h = h + embed_sparse(h_bond, i, n, dim, span=2)
    return h.tocsr()


def site_operator(model: LatticeModel, op: NDArray, site: int) -> sp.csr_matrix:
    return embed_sparse(op, site, model.n_bins, model.site_dim)


def krylov_expm_apply(
    h: sp.spmatrix | NDArray,
    v: NDArray[np.complex128],
    t: float,
    tol: float = 1e-12,
    max_krylov: int = 40,
    max_step: float | None = None,
) -> NDArray[np.complex128]:
    """exp(-i h t) v for Hermitian ``h`` by adaptive Lanczos time stepping.

    Each substep builds an orthonormal Krylov basis with full
    reorthogonalization, exponentiates the projected tridiagonal matrix and
    accepts the step when the standard a-posteriori error estimate
    beta_{m+1} |[exp(-i T tau)]_{m,0}| falls below tol * tau / |t|.
    """
    w = np.asarray(v, dtype=np.complex128).copy()
    if t == 0.0:
        return w
    sign = 1.0 if t > 0 else -1.0
    remaining = abs(t)
    hnorm = float(sp.linalg.norm(h, 1)) if sp.issparse(h) else float(np.linalg.norm(h, 1))
    step = min(remaining, 10.0 / hnorm if hnorm > 0 else remaining)
    if max_step is not None:
        step = min(step, max_step)
    dim = w.size
    m_max = min(max_krylov, dim)
    while remaining > 0.0:
        beta = np.linalg.norm(w)
        if beta == 0.0:
            return w
        basis = np.zeros((m_max + 1, dim), dtype=np.complex128)
        alpha = np.zeros(m_max)
        betas = np.zeros(m_max)
        basis[0] = w / beta
        m = m_max
        for j in range(m_max):
            u = h @ basis[j]
            alpha[j] = np.vdot(basis[j], u).real
            u = u - basis[: j + 1].T @ (basis[: j + 1].conj() @ u)
            u = u - basis[: j + 1].T @ (basis[: j + 1].conj() @ u)
            betas[j] = np.linalg.norm(u)
            if betas[j] < 1e-14 * max(1.0, abs(alpha[j])):
                m = j + 1
                break
            basis[j + 1] = u / betas[j]
        tri = np.diag(alpha[:m]) + np.diag(betas[: m - 1], 1) + np.diag(betas[: m - 1], -1)
        evals, evecs = np.linalg.eigh(tri)
        tau = min(step, remaining)
        while True:
            coef = evecs @ (np.exp(-1j * sign * evals * tau) * evecs[0].conj())
            err = 0.0 if m < m_max or m == dim else betas[m - 1] * abs(coef[m - 1]) * beta
            if err <= tol * tau / abs(t) or m == dim:
                break
            tau *= 0.5
            if tau < 1e-12 * abs(t):
                raise SimulationError("Krylov exponential failed to converge")
        w = beta * (basis[:m].T @ coef)
        remaining -= tau
        step = 2.0 * tau if tau == step else tau
        if max_step is not None:
            step = min(step, max_step)
    return w


def exact_evolve(model: LatticeModel, dense: DenseState, T: float, dt_ref: float | None = None) -> DenseState:
    """Evolve under the full lattice Hamiltonian; ``dt_ref`` caps the Krylov substep."""
    h = lattice_hamiltonian(model)
    out = krylov_expm_apply(h, dense.vector, T, tol=1e-12, max_step=dt_ref)
    return DenseState(out, dense.site_dim, dense.n_sites)


def dense_expectation(dense: DenseState, op: sp.spmatrix) -> complex:
    return complex(np.vdot(dense.vector, op @ dense.vector))


# -- Gaussian moments ----------------------------------------------------------------


@dataclass
class MomentState:
    """First and second moments per species.

    ``means[s][i] = <a_i>``, ``normal[s][i, j] = <a_i^+ a_j>``,
    ``anomalous[s][i, j] = <a_i a_j>``. Cross-species moments are not tracked;
    they are not needed for the linear, uncoupled models this oracle accepts.
    """

    means: list[NDArray[np.complex128]]
    normal: list[NDArray[np.complex128]]
    anomalous: list[NDArray[np.complex128]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.anomalous:
            self.anomalous = [np.zeros_like(nm) for nm in self.normal]
        for nm, an in zip(self.normal, self.anomalous):
            if not np.allclose(nm, nm.conj().T, atol=1e-10):
                raise ValueError("normal-ordered covariance must be Hermitian")
            if not np.allclose(an, an.T, atol=1e-10):
                raise ValueError("anomalous covariance must be symmetric")


def moments_from_mps(state: MpsState, model: LatticeModel) -> MomentState:
    n = state.n_sites
    means, normal, anomalous = [], [], []
    for a in model.local_annihilators():
        ad = a.conj().T
        mu = np.array([_transfer(state.tensors, state.tensors, {i: a}) for i in range(n)])
        nm = np.zeros((n, n), dtype=np.complex128)
        an = np.zeros((n, n), dtype=np.complex128)
        for i in range(n):
            for j in range(n):
                if i == j:
                    nm[i, i] = _transfer(state.tensors, state.tensors, {i: ad @ a})
                    an[i, i] = _transfer(state.tensors, state.tensors, {i: a @ a})
                else:
                    nm[i, j] = _transfer(state.tensors, state.tensors, {i: ad, j: a})
                    an[i, j] = _transfer(state.tensors, state.tensors, {i: a, j: a})
        means.append(mu)
        normal.append(0.5 * (nm + nm.conj().T))
        anomalous.append(0.5 * (an + an.T))
    return MomentState(means, normal, anomalous)


def gaussian_moments_evolve(model: LatticeModel, moments: MomentState, T: float) -> MomentState:
    """Propagate moments with the single-particle propagator U = exp(-i h T).

    Heisenberg evolution a(T) = U a(0) gives <a> -> U<a>,
    <a^+ a> -> U* N U^T and <a a> -> U M U^T.
    """
    if not model.is_linear():
        raise ValueError("Gaussian moment propagation requires a linear model (g = 0 or epsilon = 0)")
    means, normal, anomalous = [], [], []
    for h, mu, nm, an in zip(model.single_particle_matrices(), moments.means, moments.normal, moments.anomalous):
        u = scipy.linalg.expm(-1j * h * T)
        means.append(u @ mu)
        normal.append(u.conj() @ nm @ u.T)
        anomalous.append(u @ an @ u.T)
    return MomentState(means, normal, anomalous)


def single_particle_propagator(model: LatticeModel, T: float, species: int = 0) -> NDArray[np.complex128]:
    return scipy.linalg.expm(-1j * model.single_particle_matrices()[species] * T)


# -- open-system reference -------------------------------------------------------------


def dense_lindblad_evolve(
    model: LatticeModel, rho0: NDArray[np.complex128], times: NDArray[np.float64]
) -> list[NDArray[np.complex128]]:
    """Density matrices at ``times`` under drho/dt = -i[H, rho] + kappa sum_i D[a_i] rho.

    Every species in every bin decays at the model's ``kappa``. Intended for
    tiny systems only (the Liouvillian is built densely).
    """
    n, dim = model.n_bins, model.site_dim
    big = dim**n
    if big > 64:
        raise SimulationError(f"dense Lindblad reference limited to dimension 64, got {big}")
    h = lattice_hamiltonian(model).toarray()
    eye = np.eye(big)
    # row-major vec: vec(A rho B) = (A kron B^T) vec(rho)
    liou = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for a_loc in model.local_annihilators():
        for i in range(n):
            c = np.sqrt(model.kappa) * site_operator(model, a_loc, i).toarray()
            cdc = c.conj().T @ c
            liou += np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)
    out = []
    vec0 = np.asarray(rho0, dtype=np.complex128).reshape(-1)
    for t in times:
        out.append((scipy.linalg.expm(liou * t) @ vec0).reshape(big, big))
    return out
