"""Matrix product states for chains of truncated bosonic modes.

Site tensors use the index order (left bond, physical, right bond). The
orthogonality center, when known, is tracked so that norms and local
observables can be read off a single tensor and two-site truncations are
performed in a canonical environment.

Expectation values are returned unnormalized, i.e. as <psi|O|psi>; divide by
:meth:`MpsState.norm_squared` for states that are not unit-norm.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from . import fock
from .exceptions import CutoffError, SimulationError

# Singular values below this fraction of the largest one are treated as exact zeros.
_ZERO_SV = 1e-14

TAIL_WARN = 1e-6
TAIL_ERROR = 1e-2


class CutoffWarning(UserWarning):
    """Truncated coherent-state tail weight is above the warning threshold."""


@dataclass(frozen=True)
class TruncationPolicy:
    """Bond truncation knobs applied after every two-site gate.

    Attributes:
        max_bond_dim: Hard bond-dimension cap.
        svd_cutoff: Largest discarded weight (sum of dropped squared singular
            values, relative to the two-site norm) allowed per gate.
        renormalize_after_truncation: Rescale kept singular values so that the
            truncation does not change the norm.
    """

    max_bond_dim: int = 64
    svd_cutoff: float = 0.0
    renormalize_after_truncation: bool = True

    def __post_init__(self) -> None:
        if self.max_bond_dim < 1:
            raise ValueError(f"max_bond_dim must be >= 1, got {self.max_bond_dim}")
        if not 0.0 <= self.svd_cutoff < 1.0:
            raise ValueError(f"svd_cutoff must lie in [0, 1), got {self.svd_cutoff}")


@dataclass(frozen=True)
class LocalOperator:
    """Dense d x d single-site operator."""

    matrix: NDArray[np.complex128]
    unitary: bool = False

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"local operator must be square, got shape {m.shape}")
        if self.unitary and not np.allclose(m.conj().T @ m, np.eye(m.shape[0]), atol=1e-10, rtol=0):
            raise ValueError("operator flagged unitary but U^dagger U != I to 1e-10")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class TwoSiteOperator:
    """Dense d^2 x d^2 operator on sites (i, i+1); row index is s_i * d + s_{i+1}."""

    matrix: NDArray[np.complex128]
    unitary: bool = False

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"two-site operator must be square, got shape {m.shape}")
        d = math.isqrt(m.shape[0])
        if d * d != m.shape[0]:
            raise ValueError(f"two-site operator dimension {m.shape[0]} is not a perfect square")
        if self.unitary and not np.allclose(m.conj().T @ m, np.eye(m.shape[0]), atol=1e-10, rtol=0):
            raise ValueError("operator flagged unitary but U^dagger U != I to 1e-10")
        object.__setattr__(self, "matrix", m)

    @property
    def local_dim(self) -> int:
        return math.isqrt(self.matrix.shape[0])


def truncation_rank(s: NDArray[np.float64], policy: TruncationPolicy) -> int:
    """Number of leading singular values to keep under ``policy``.

    ``s`` must be sorted in descending order.
    """
    if s.size == 0:
        return 0
    w = s**2
    total = float(np.sum(w))
    if total == 0.0:
        return 1
    nonzero = int(np.count_nonzero(s > _ZERO_SV * s[0]))
    # tail[k] = weight discarded when keeping the first k values
    tail = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
    budget = policy.svd_cutoff * total
    k = int(np.argmax(tail <= budget))
    k = max(1, min(k, nonzero, policy.max_bond_dim))
    return k


def _svd(m: NDArray[np.complex128]) -> tuple[NDArray, NDArray, NDArray]:
    if not np.all(np.isfinite(m)):
        raise SimulationError("non-finite entries in two-site tensor before SVD")
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        u, s, vh = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
    if not np.all(np.isfinite(s)):
        raise SimulationError("non-finite singular values encountered")
    return u, s, vh


class MpsState:
    """Open-boundary MPS over ``n_sites`` bosonic modes with uniform Fock cutoff.

    Mutating methods work in place and return ``self`` (or a discarded weight).
    Use the module-level functions for copy-on-write semantics.
    """

    def __init__(
        self,
        tensors: Sequence[NDArray[np.complex128]],
        local_dim: int,
        ortho_center: int | None = None,
        cumulative_discarded_weight: float = 0.0,
    ) -> None:
        if len(tensors) == 0:
            raise ValueError("an MPS needs at least one site")
        if local_dim < 2:
            raise ValueError(f"local_dim must be >= 2, got {local_dim}")
        self.tensors = [np.asarray(t, dtype=np.complex128) for t in tensors]
        self.local_dim = int(local_dim)
        self.ortho_center = ortho_center
        self.cumulative_discarded_weight = float(cumulative_discarded_weight)
        self.validate()

    # -- structure -----------------------------------------------------------

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        """Dimensions of the n_sites + 1 bonds, including the two trivial boundary bonds."""
        return [self.tensors[0].shape[0]] + [t.shape[2] for t in self.tensors]

    @property
    def max_bond_dim(self) -> int:
        return max(self.bond_dims)

    def validate(self) -> None:
        for i, t in enumerate(self.tensors):
            if t.ndim != 3:
                raise ValueError(f"site {i}: tensor must be rank 3, got {t.ndim}")
            if t.shape[1] != self.local_dim:
                raise ValueError(f"site {i}: physical dim {t.shape[1]} != local_dim {self.local_dim}")
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise ValueError("boundary bonds must have dimension 1")
        for i in range(self.n_sites - 1):
            if self.tensors[i].shape[2] != self.tensors[i + 1].shape[0]:
                raise ValueError(f"bond mismatch between sites {i} and {i + 1}")
        if self.ortho_center is not None and not 0 <= self.ortho_center < self.n_sites:
            raise ValueError(f"ortho_center {self.ortho_center} out of range")

    def copy(self) -> MpsState:
        return MpsState(
            [t.copy() for t in self.tensors],
            self.local_dim,
            self.ortho_center,
            self.cumulative_discarded_weight,
        )

    def _check_site(self, site: int) -> None:
        if not 0 <= site < self.n_sites:
            raise IndexError(f"site {site} out of range for {self.n_sites} sites")

    # -- canonical forms -----------------------------------------------------

    def _shift_right(self, k: int) -> None:
        a = self.tensors[k]
        l, d, r = a.shape
        q, rr = np.linalg.qr(a.reshape(l * d, r))
        self.tensors[k] = q.reshape(l, d, q.shape[1])
        self.tensors[k + 1] = np.tensordot(rr, self.tensors[k + 1], axes=(1, 0))

    def _shift_left(self, k: int) -> None:
        a = self.tensors[k]
        l, d, r = a.shape
        q, rr = np.linalg.qr(a.reshape(l, d * r).T)
        self.tensors[k] = q.T.reshape(q.shape[1], d, r)
        self.tensors[k - 1] = np.tensordot(self.tensors[k - 1], rr.T, axes=(2, 0))

    def move_center(self, target: int) -> MpsState:
        """Gauge-transform so that ``target`` is the orthogonality center."""
        self._check_site(target)
        if self.ortho_center is None:
            for k in range(target):
                self._shift_right(k)
            for k in range(self.n_sites - 1, target, -1):
                self._shift_left(k)
        else:
            for k in range(self.ortho_center, target):
                self._shift_right(k)
            for k in range(self.ortho_center, target, -1):
                self._shift_left(k)
        self.ortho_center = target
        return self

    def canonicalize(self, center: int = 0) -> MpsState:
        """Bring the state into mixed-canonical form from scratch around ``center``."""
        self.ortho_center = None
        return self.move_center(center)

    def isometry_errors(self) -> list[float]:
        """Per-site deviation from the isometry condition implied by ``ortho_center``.

        The center itself reports 0.
        """
        c = self.ortho_center
        if c is None:
            raise ValueError("state has no orthogonality center")
        errs = []
        for k, t in enumerate(self.tensors):
            l, d, r = t.shape
            if k < c:
                m = t.reshape(l * d, r)
                errs.append(float(np.max(np.abs(m.conj().T @ m - np.eye(r)))))
            elif k > c:
                m = t.reshape(l, d * r)
                errs.append(float(np.max(np.abs(m @ m.conj().T - np.eye(l)))))
            else:
                errs.append(0.0)
        return errs

    # -- norms ---------------------------------------------------------------

    def norm_squared(self) -> float:
        if self.ortho_center is not None:
            t = self.tensors[self.ortho_center]
            return float(np.vdot(t, t).real)
        return float(_transfer(self.tensors, self.tensors, {}).real)

    def normalize(self) -> MpsState:
        if self.ortho_center is None:
            self.canonicalize(0)
        nrm = math.sqrt(self.norm_squared())
        if nrm == 0.0:
            raise SimulationError("cannot normalize a zero state")
        self.tensors[self.ortho_center] = self.tensors[self.ortho_center] / nrm
        return self

    # -- gates ---------------------------------------------------------------

    def apply_one_site(self, op: LocalOperator | NDArray, site: int) -> MpsState:
        """Contract a d x d operator into ``site`` in place.

        Non-unitary operators are applied at the orthogonality center (moved there
        first) so the canonical form survives.
        """
        self._check_site(site)
        if not isinstance(op, LocalOperator):
            op = LocalOperator(np.asarray(op))
        if op.dim != self.local_dim:
            raise ValueError(f"operator dim {op.dim} != local_dim {self.local_dim}")
        if not op.unitary and self.ortho_center is not None:
            self.move_center(site)
        self.tensors[site] = np.einsum("xy,lyr->lxr", op.matrix, self.tensors[site])
        return self

    def apply_two_site(
        self,
        op: TwoSiteOperator | NDArray,
        left_site: int,
        policy: TruncationPolicy,
        direction: str = "right",
    ) -> float:
        """Apply a two-site gate on (left_site, left_site + 1) and re-split by SVD.

        Args:
            op: Gate with row index s_left * d + s_right.
            left_site: Left site of the pair.
            policy: Truncation rules for the new bond.
            direction: ``"right"`` leaves the orthogonality center on the right
                site, ``"left"`` on the left site.

        Returns:
            Weight discarded by the truncation (sum of dropped squared singular values).
        """
        if direction not in ("right", "left"):
            raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")
        self._check_site(left_site)
        self._check_site(left_site + 1)
        if not isinstance(op, TwoSiteOperator):
            op = TwoSiteOperator(np.asarray(op))
        d = self.local_dim
        if op.local_dim != d:
            raise ValueError(f"gate local dim {op.local_dim} != local_dim {d}")
        if self.ortho_center not in (left_site, left_site + 1):
            self.move_center(left_site)

        a, b = self.tensors[left_site], self.tensors[left_site + 1]
        l, r = a.shape[0], b.shape[2]
        theta = np.tensordot(a, b, axes=(2, 0)).reshape(l, d * d, r)
        theta = np.tensordot(op.matrix, theta, axes=(1, 1)).transpose(1, 0, 2)
        u, s, vh = _svd(theta.reshape(l * d, d * r))

        k = truncation_rank(s, policy)
        total = float(np.sum(s**2))
        kept = s[:k]
        kept_w = float(np.sum(kept**2))
        discarded = max(0.0, total - kept_w)
        if policy.renormalize_after_truncation and kept_w > 0.0 and discarded > 0.0:
            kept = kept * math.sqrt(total / kept_w)

        u, vh = u[:, :k], vh[:k, :]
        if direction == "right":
            self.tensors[left_site] = u.reshape(l, d, k)
            self.tensors[left_site + 1] = (kept[:, None] * vh).reshape(k, d, r)
            self.ortho_center = left_site + 1
        else:
            self.tensors[left_site] = (u * kept[None, :]).reshape(l, d, k)
            self.tensors[left_site + 1] = vh.reshape(k, d, r)
            self.ortho_center = left_site
        self.cumulative_discarded_weight += discarded
        return discarded

    # -- observables -----------------------------------------------------------

    def _center_sweep(self) -> Iterator[tuple[int, MpsState]]:
        """Yield (site, working copy centered at site), sweeping 0 -> n-1.

        The working copy shares no mutated arrays with ``self``.
        """
        work = MpsState(list(self.tensors), self.local_dim, self.ortho_center)
        work.move_center(0)
        for k in range(self.n_sites):
            if k > 0:
                work._shift_right(k - 1)
                work.ortho_center = k
            yield k, work

    def iter_center_tensors(self) -> Iterator[tuple[int, NDArray[np.complex128]]]:
        for k, work in self._center_sweep():
            yield k, work.tensors[k]

    def site_density_matrices(self) -> list[NDArray[np.complex128]]:
        return [_rdm_from_center(t) for _, t in self.iter_center_tensors()]

    def bond_expectations(self, op2: NDArray[np.complex128]) -> NDArray[np.complex128]:
        """<op2> on every nearest-neighbour pair (k, k+1), unnormalized."""
        d = self.local_dim
        op = np.asarray(op2, dtype=np.complex128).reshape(d, d, d, d)
        out = []
        for k, work in self._center_sweep():
            if k == self.n_sites - 1:
                break
            theta = np.tensordot(work.tensors[k], work.tensors[k + 1], axes=(2, 0))
            out.append(np.einsum("lstr,stuv,luvr->", theta.conj(), op, theta))
        return np.array(out)

    def schmidt_values(self, cut: int) -> NDArray[np.float64]:
        """Singular values across the bond between ``cut`` and ``cut + 1``."""
        if not 0 <= cut < self.n_sites - 1:
            raise IndexError(f"cut {cut} out of range for {self.n_sites} sites")
        work = MpsState(list(self.tensors), self.local_dim, self.ortho_center)
        work.move_center(cut)
        t = work.tensors[cut]
        l, d, r = t.shape
        return np.linalg.svd(t.reshape(l * d, r), compute_uv=False)

    def entropy_profile(self) -> list[float]:
        out = []
        for k, t in self.iter_center_tensors():
            if k == self.n_sites - 1:
                break
            l, d, r = t.shape
            out.append(_entropy_bits(np.linalg.svd(t.reshape(l * d, r), compute_uv=False)))
        return out


def _rdm_from_center(t: NDArray[np.complex128]) -> NDArray[np.complex128]:
    rho = np.einsum("lsr,ltr->st", t, t.conj())
    return 0.5 * (rho + rho.conj().T)


def _entropy_bits(s: NDArray[np.float64]) -> float:
    p = s**2
    total = p.sum()
    if total == 0.0:
        return 0.0
    p = p / total
    p = p[p > 1e-300]
    return float(max(0.0, -np.sum(p * np.log2(p))))


def _transfer(
    bra: Sequence[NDArray[np.complex128]],
    ket: Sequence[NDArray[np.complex128]],
    ops: dict[int, NDArray[np.complex128]],
) -> complex:
    """<bra| prod_k ops[k] |ket> by left-to-right transfer-matrix contraction."""
    env = np.ones((1, 1), dtype=np.complex128)
    for k, (b, a) in enumerate(zip(bra, ket)):
        if k in ops:
            a = np.einsum("xy,lyr->lxr", ops[k], a)
        env = np.tensordot(env, a, axes=(1, 0))  # (bra_l, s, ket_r)
        env = np.tensordot(b.conj(), env, axes=([0, 1], [0, 1]))  # (bra_r, ket_r)
    return complex(env[0, 0])


# -- builders --------------------------------------------------------------------


def product_state(vectors: Sequence[NDArray]) -> MpsState:
    """Product MPS from per-site local state vectors (not renormalized)."""
    if len(vectors) == 0:
        raise ValueError("need at least one site")
    vs = [np.asarray(v, dtype=np.complex128) for v in vectors]
    d = vs[0].size
    if any(v.ndim != 1 or v.size != d for v in vs):
        raise ValueError("all local vectors must be 1-D with equal length")
    unit = all(abs(np.linalg.norm(v) - 1.0) < 1e-12 for v in vs)
    return MpsState([v.reshape(1, d, 1) for v in vs], d, ortho_center=0 if unit else None)


def vacuum_state(n_sites: int, local_dim: int) -> MpsState:
    if n_sites < 1:
        raise ValueError(f"n_sites must be >= 1, got {n_sites}")
    if local_dim < 2:
        raise ValueError(f"local_dim must be >= 2, got {local_dim}")
    return product_state([fock.fock_vector(0, local_dim)] * n_sites)


def fock_product_state(occupations: Sequence[int], local_dim: int) -> MpsState:
    return product_state([fock.fock_vector(n, local_dim) for n in occupations])


def coherent_product_state(amplitudes: Sequence[complex], local_dim: int) -> MpsState:
    """Product of truncated, renormalized coherent states, one per site.

    Raises :class:`CutoffError` when any site loses more than 1e-2 of its weight
    to the cutoff and emits :class:`CutoffWarning` above 1e-6.
    """
    if len(amplitudes) < 1:
        raise ValueError("need at least one amplitude")
    if local_dim < 2:
        raise ValueError(f"local_dim must be >= 2, got {local_dim}")
    vecs = []
    for i, alpha in enumerate(amplitudes):
        tail = fock.coherent_tail_weight(alpha, local_dim)
        if tail > TAIL_ERROR:
            raise CutoffError(
                f"site {i}: |alpha|^2={abs(alpha) ** 2:.4g} loses weight {tail:.3g} at cutoff d={local_dim}"
            )
        if tail > TAIL_WARN:
            warnings.warn(
                f"site {i}: coherent tail weight {tail:.3g} above {TAIL_WARN:g} at d={local_dim}",
                CutoffWarning,
                stacklevel=2,
            )
        vecs.append(fock.coherent_vector(alpha, local_dim))
    return product_state(vecs)


def single_photon_state(coeffs: Sequence[complex], local_dim: int) -> MpsState:
    """sum_i c_i |0 ... 1_i ... 0>: one photon in the mode with profile ``coeffs``.

    Exact bond dimension 2, the bond index recording whether the photon has
    already been placed to the left. ``coeffs`` is used as given.
    """
    c = np.asarray(coeffs, dtype=np.complex128).ravel()
    n = c.size
    if n < 1:
        raise ValueError("need at least one bin")
    if local_dim < 2:
        raise ValueError(f"local_dim must be >= 2, got {local_dim}")
    if n == 1:
        t = np.zeros((1, local_dim, 1), dtype=np.complex128)
        t[0, 1, 0] = c[0]
        return MpsState([t], local_dim)
    tensors = []
    for k in range(n):
        t = np.zeros((2, local_dim, 2), dtype=np.complex128)
        t[0, 0, 0] = 1.0
        t[0, 1, 1] = c[k]
        t[1, 0, 1] = 1.0
        if k == 0:
            t = t[:1]
        if k == n - 1:
            t = t[:, :, 1:]
        tensors.append(t)
    return MpsState(tensors, local_dim)


def from_dense(psi: NDArray, n_sites: int, local_dim: int) -> MpsState:
    """Exact MPS of a dense vector (site-major ordering) by successive SVDs."""
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.size != local_dim**n_sites:
        raise ValueError(f"vector size {psi.size} != {local_dim}^{n_sites}")
    tensors = []
    rest = psi.reshape(1, -1)
    for _ in range(n_sites - 1):
        l = rest.shape[0]
        u, s, vh = np.linalg.svd(rest.reshape(l * local_dim, -1), full_matrices=False)
        k = max(1, int(np.count_nonzero(s > _ZERO_SV * s[0]))) if s[0] > 0 else 1
        tensors.append(u[:, :k].reshape(l, local_dim, k))
        rest = s[:k, None] * vh[:k]
    tensors.append(rest.reshape(rest.shape[0], local_dim, 1))
    return MpsState(tensors, local_dim, ortho_center=n_sites - 1)


# -- functional API ------------------------------------------------------------------


def apply_one_site(state: MpsState, op: LocalOperator | NDArray, site: int) -> MpsState:
    return state.copy().apply_one_site(op, site)


def apply_two_site(
    state: MpsState, op: TwoSiteOperator | NDArray, left_site: int, policy: TruncationPolicy
) -> tuple[MpsState, float]:
    out = state.copy()
    w = out.apply_two_site(op, left_site, policy)
    return out, w


def expectation_local(state: MpsState, op: LocalOperator | NDArray, site: int) -> complex:
    state._check_site(site)
    m = op.matrix if isinstance(op, LocalOperator) else np.asarray(op, dtype=np.complex128)
    if m.shape != (state.local_dim, state.local_dim):
        raise ValueError(f"operator shape {m.shape} incompatible with local_dim {state.local_dim}")
    if state.ortho_center is not None:
        work = MpsState(list(state.tensors), state.local_dim, state.ortho_center).move_center(site)
        return complex(np.trace(_rdm_from_center(work.tensors[site]) @ m))
    return _transfer(state.tensors, state.tensors, {site: m})


def correlation(state: MpsState, site_i: int, site_j: int) -> complex:
    """<a_i^dagger a_j>."""
    state._check_site(site_i)
    state._check_site(site_j)
    a = fock.annihilation(state.local_dim)
    if site_i == site_j:
        return expectation_local(state, a.conj().T @ a, site_i)
    return _transfer(state.tensors, state.tensors, {site_i: a.conj().T, site_j: a})


def number_density(state: MpsState) -> NDArray[np.float64]:
    n = np.arange(state.local_dim, dtype=float)
    return np.array([float(np.real(np.diag(rho)) @ n) for rho in state.site_density_matrices()])


def entanglement_entropy(state: MpsState, cut: int) -> float:
    """Von Neumann entropy (bits) of the normalized Schmidt spectrum across bond ``cut``."""
    return _entropy_bits(state.schmidt_values(cut))


def reduced_density_matrix(state: MpsState, site: int) -> NDArray[np.complex128]:
    state._check_site(site)
    work = MpsState(list(state.tensors), state.local_dim, state.ortho_center).move_center(site)
    return _rdm_from_center(work.tensors[site])


def inner_product(a: MpsState, b: MpsState) -> complex:
    """<a|b>."""
    if a.n_sites != b.n_sites or a.local_dim != b.local_dim:
        raise ValueError("states differ in n_sites or local_dim")
    return _transfer(a.tensors, b.tensors, {})


def fidelity(a: MpsState, b: MpsState) -> float:
    """|<a|b>|^2 / (<a|a><b|b>)."""
    ov = inner_product(a, b)
    return float(abs(ov) ** 2 / (a.norm_squared() * b.norm_squared()))
