"""Supermode demultiplexing with nearest-neighbour beamsplitter cascades.

Beamsplitter convention on the pair (left mode a, right mode b)::

    U(theta, phi) = exp[theta (e^{i phi} a^+ b - e^{-i phi} a b^+)]

which acts on single-photon (or coherent) amplitudes (c_a, c_b) as the mode matrix

    [[cos theta,              e^{i phi} sin theta],
     [-e^{-i phi} sin theta,  cos theta          ]].

A phase shifter PS(phi) = exp(i phi n) multiplies the amplitude by e^{i phi}.
A cascade is synthesized by zeroing amplitudes from the bin farthest from the
target inward, then a final phase shifter makes the target amplitude real and
positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from . import fock
from .exceptions import LeakageError
from .mps import LocalOperator, MpsState, TruncationPolicy, TwoSiteOperator, expectation_local

LEAKAGE_LIMIT = 1e-3
_ZERO = 1e-15


@dataclass(frozen=True)
class Supermode:
    coeffs: NDArray[np.complex128]

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=np.complex128).ravel()
        nrm = np.linalg.norm(c)
        if nrm == 0:
            raise ValueError("supermode must be nonzero")
        if abs(nrm - 1.0) > 1e-12:
            raise ValueError(f"supermode must have unit L2 norm, got {nrm!r}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def normalized(cls, coeffs) -> Supermode:
        c = np.asarray(coeffs, dtype=np.complex128).ravel()
        nrm = np.linalg.norm(c)
        if nrm == 0:
            raise ValueError("supermode must be nonzero")
        return cls(c / nrm)

    @property
    def n_bins(self) -> int:
        return self.coeffs.size


@dataclass(frozen=True)
class CascadeElement:
    """``kind`` is ``"BS"`` (acting on ``site``, ``site + 1``) or ``"PS"`` (on ``site``)."""

    kind: str
    site: int
    theta: float
    phi: float


@dataclass
class GivensCascade:
    elements: list[CascadeElement]
    target_site: int
    n_bins: int

    def mode_matrix(self) -> NDArray[np.complex128]:
        """Single-particle n x n unitary of the whole cascade."""
        u = np.eye(self.n_bins, dtype=np.complex128)
        for el in self.elements:
            u = element_mode_matrix(el, self.n_bins) @ u
        return u

    def inverse(self) -> GivensCascade:
        """Reversed, angle-negated cascade."""
        inv = [
            CascadeElement(e.kind, e.site, -e.theta, e.phi) if e.kind == "BS" else CascadeElement("PS", e.site, 0.0, -e.phi)
            for e in reversed(self.elements)
        ]
        return GivensCascade(inv, self.target_site, self.n_bins)

    def to_text(self) -> str:
        lines = ["kind\tsite\ttheta\tphi"]
        lines += [f"{e.kind}\t{e.site}\t{e.theta!r}\t{e.phi!r}" for e in self.elements]
        return f"# target_site={self.target_site} n_bins={self.n_bins}\n" + "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> GivensCascade:
        lines = text.splitlines()
        meta = dict(kv.split("=") for kv in lines[0].lstrip("# ").split())
        els = []
        for ln in lines[2:]:
            if not ln.strip():
                continue
            kind, site, theta, phi = ln.split("\t")
            els.append(CascadeElement(kind, int(site), float(theta), float(phi)))
        return cls(els, int(meta["target_site"]), int(meta["n_bins"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())


def element_mode_matrix(el: CascadeElement, n: int) -> NDArray[np.complex128]:
    m = np.eye(n, dtype=np.complex128)
    if el.kind == "PS":
        m[el.site, el.site] = np.exp(1j * el.phi)
        return m
    c, s = np.cos(el.theta), np.sin(el.theta)
    i, j = el.site, el.site + 1
    m[i, i], m[i, j] = c, np.exp(1j * el.phi) * s
    m[j, i], m[j, j] = -np.exp(-1j * el.phi) * s, c
    return m


def _zero_left(ca: complex, cb: complex) -> tuple[float, float]:
    """(theta, phi) whose BS sends the left amplitude ``ca`` to zero."""
    if abs(cb) < _ZERO:
        return np.pi / 2, 0.0
    theta = float(np.arctan2(abs(ca), abs(cb)))
    phi = float(np.angle(ca) - np.angle(cb) + np.pi)
    return theta, phi


def _zero_right(ca: complex, cb: complex) -> tuple[float, float]:
    """(theta, phi) whose BS sends the right amplitude ``cb`` to zero."""
    if abs(ca) < _ZERO:
        return np.pi / 2, 0.0
    theta = float(np.arctan2(abs(cb), abs(ca)))
    phi = float(np.angle(ca) - np.angle(cb))
    return theta, phi


def mean_field_supermode(state: MpsState) -> Supermode:
    """Normalized coherent amplitude profile <a_i> / ||<a>||."""
    a = fock.annihilation(state.local_dim)
    nrm = state.norm_squared()
    amps = np.array([expectation_local(state, a, i) for i in range(state.n_sites)]) / nrm
    if np.linalg.norm(amps) < 1e-12:
        raise ValueError("state has no coherent amplitude to define a supermode")
    return Supermode.normalized(amps)


def givens_cascade(supermode: Supermode | NDArray, target_site: int, active: NDArray | None = None) -> GivensCascade:
    """Cascade mapping the supermode profile onto the target bin.

    Args:
        supermode: Unit-norm profile over bins.
        target_site: Bin that receives the mode.
        active: Optional boolean mask of bins the cascade may touch. The active
            bins must form a contiguous block containing the target; used for
            deflation in :func:`demultiplex_many`.
    """
    if not isinstance(supermode, Supermode):
        c = np.asarray(supermode, dtype=np.complex128)
        if np.linalg.norm(c) == 0:
            raise ValueError("cannot demultiplex the zero vector")
        supermode = Supermode(c)
    c = supermode.coeffs.copy()
    n = c.size
    if not 0 <= target_site < n:
        raise IndexError(f"target_site {target_site} out of range for {n} bins")
    lo, hi = 0, n - 1
    if active is not None:
        idx = np.flatnonzero(active)
        lo, hi = int(idx.min()), int(idx.max())
        if idx.size != hi - lo + 1 or not lo <= target_site <= hi:
            raise ValueError("active bins must be contiguous and contain the target")
        if np.linalg.norm(c[~np.asarray(active)]) > 1e-10:
            raise ValueError("supermode has weight outside the active bins")

    elements: list[CascadeElement] = []

    def push(el: CascadeElement) -> None:
        nonlocal c
        elements.append(el)
        c = element_mode_matrix(el, n) @ c

    for j in range(lo, target_site):
        if abs(c[j]) < _ZERO:
            continue
        theta, phi = _zero_left(c[j], c[j + 1])
        push(CascadeElement("BS", j, theta, phi))
    for j in range(hi, target_site, -1):
        if abs(c[j]) < _ZERO:
            continue
        theta, phi = _zero_right(c[j - 1], c[j])
        push(CascadeElement("BS", j - 1, theta, phi))
    phase = float(np.angle(c[target_site]))
    if abs(phase) > _ZERO:
        push(CascadeElement("PS", target_site, 0.0, -phase))
    return GivensCascade(elements, target_site, n)


@dataclass
class DemuxResult:
    state: MpsState
    leakage: float
    per_element_leakage: list[float] = field(default_factory=list)


def element_gate(el: CascadeElement, d: int) -> LocalOperator | TwoSiteOperator:
    if el.kind == "PS":
        return LocalOperator(fock.phase_shifter(el.phi, d), unitary=True)
    return TwoSiteOperator(fock.beamsplitter(el.theta, el.phi, d))


def apply_cascade(
    state: MpsState,
    cascade: GivensCascade,
    policy: TruncationPolicy | None = None,
    leakage_limit: float = LEAKAGE_LIMIT,
) -> DemuxResult:
    """Apply a cascade to a copy of ``state`` in the truncated Fock space.

    Each beamsplitter uses the exact untruncated matrix elements projected onto
    the cutoff, so amplitude pushed above d - 1 is lost; that loss (relative to
    the norm before the element) is the leakage, accumulated over the cascade.
    The output is renormalized.

    Raises:
        LeakageError: total leakage exceeds ``leakage_limit``.
    """
    if cascade.n_bins != state.n_sites:
        raise ValueError(f"cascade is for {cascade.n_bins} bins, state has {state.n_sites}")
    policy = policy or TruncationPolicy(max_bond_dim=10**9, svd_cutoff=0.0, renormalize_after_truncation=False)
    psi = state.copy()
    d = psi.local_dim
    per_el = []
    gates: dict[tuple, LocalOperator | TwoSiteOperator] = {}
    for el in cascade.elements:
        key = (el.kind, el.theta, el.phi)
        if key not in gates:
            gates[key] = element_gate(el, d)
        gate = gates[key]
        if el.kind == "PS":
            psi.apply_one_site(gate, el.site)
            continue
        before = psi.norm_squared() if psi.ortho_center is not None else None
        if before is None:
            psi.canonicalize(el.site)
            before = psi.norm_squared()
        psi.apply_two_site(gate, el.site, policy)
        after = psi.norm_squared()
        per_el.append(max(0.0, 1.0 - after / before))
    leakage = float(sum(per_el))
    if leakage > leakage_limit:
        raise LeakageError(f"Fock-truncation leakage {leakage:.3e} exceeds {leakage_limit:.1e}; raise the cutoff d={d}")
    psi.normalize()
    return DemuxResult(psi, leakage, per_el)


def demultiplex_many(
    state: MpsState,
    supermodes: list[Supermode | NDArray],
    targets: list[int],
    policy: TruncationPolicy | None = None,
) -> tuple[DemuxResult, list[GivensCascade]]:
    """Localize several orthonormal supermodes simultaneously.

    Targets are processed in the order given. After mode k is localized its
    target bin is removed from the active block, so later cascades never touch
    it; this requires every target to sit at an end of the block still active
    when it is processed (e.g. targets 0, 1, 2, ... or n-1, n-2, ...).
    """
    if len(supermodes) != len(targets):
        raise ValueError("need one target per supermode")
    if len(set(targets)) != len(targets):
        raise ValueError("targets must be distinct")
    vecs = np.array([s.coeffs if isinstance(s, Supermode) else np.asarray(s, dtype=np.complex128) for s in supermodes])
    gram = vecs.conj() @ vecs.T
    if np.max(np.abs(gram - np.eye(len(vecs)))) > 1e-10:
        raise ValueError("supermodes are not orthonormal (Gram deviation > 1e-10)")
    n = state.n_sites
    active = np.ones(n, dtype=bool)
    u_total = np.eye(n, dtype=np.complex128)
    cascades = []
    for k, t in enumerate(targets):
        idx = np.flatnonzero(active)
        if t not in (idx.min(), idx.max()):
            raise ValueError(f"target {t} is not at an end of the active block {idx.min()}..{idx.max()}")
        cur = u_total @ vecs[k]
        cas = givens_cascade(Supermode.normalized(cur), t, active)
        cascades.append(cas)
        u_total = cas.mode_matrix() @ u_total
        active[t] = False
    merged = GivensCascade([e for c in cascades for e in c.elements], targets[0], n)
    return apply_cascade(state, merged, policy), cascades
