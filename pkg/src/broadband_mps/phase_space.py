"""Wigner functions of single-mode density matrices.

Convention: x = (a + a^+)/sqrt(2), p = (a - a^+)/(i sqrt(2)), alpha = (x + i p)/sqrt(2)
and the normalization is  integral W dx dp = Tr rho.  Then

    W(x, p) = (1/pi) Tr[rho D(alpha) Pi D(alpha)^+],

so the vacuum peaks at 1/pi, Fock |1> has W(0, 0) = -1/pi and a coherent state
|beta> is a Gaussian centered at (sqrt(2) Re beta, sqrt(2) Im beta).

The displaced parity is evaluated with D(alpha) Pi D(alpha)^+ = D(2 alpha) Pi and
D(r e^{i theta}) = e^{i theta n} D(r) e^{-i theta n}; D(r) is the matrix
exponential of r (a^+ - a) in a padded truncated space, diagonalized once per grid.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import RectBivariateSpline

from . import fock

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

DEFAULT_EXTENT = 5.0
DEFAULT_POINTS = 101
MIN_PAD = 8
BOUNDARY_TOL = 1e-6
REFINE = 8


class SupportWarning(UserWarning):
    """The Wigner function is not negligible on the grid boundary."""


@dataclass
class WignerGrid:
    """W sampled on a uniform grid; ``values[i, j]`` is W(x_axis[j], p_axis[i])."""

    x_axis: NDArray[np.float64]
    p_axis: NDArray[np.float64]
    values: NDArray[np.float64]
    trace_rho: float = 1.0

    def integral(self) -> float:
        return float(_trapezoid(_trapezoid(self.values, self.x_axis, axis=1), self.p_axis))

    @property
    def trace_error(self) -> float:
        return abs(self.integral() - self.trace_rho)

    def boundary_max(self) -> float:
        v = np.abs(self.values)
        return float(max(v[0].max(), v[-1].max(), v[:, 0].max(), v[:, -1].max()))

    def to_text(self, header: str = "") -> str:
        lines = [f"# {header}" if header else "# wigner", "x\tp\tW"]
        for i, p in enumerate(self.p_axis):
            for j, x in enumerate(self.x_axis):
                lines.append(f"{float(x)!r}\t{float(p)!r}\t{float(self.values[i, j])!r}")
        return "\n".join(lines) + "\n"

    def to_raster(self) -> bytes:
        """Binary raster: magic, uint32 version, uint32 nx, uint32 np, float64 x0 x1 p0 p1,
        then float64 values row-major over (p, x), all little-endian."""
        head = struct.pack(
            "<8sIIIdddd",
            b"BBWIGNR\x00",
            1,
            self.x_axis.size,
            self.p_axis.size,
            self.x_axis[0],
            self.x_axis[-1],
            self.p_axis[0],
            self.p_axis[-1],
        )
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    @classmethod
    def from_raster(cls, buf: bytes) -> WignerGrid:
        fmt = "<8sIIIdddd"
        magic, version, nx, npp, x0, x1, p0, p1 = struct.unpack_from(fmt, buf)
        if magic != b"BBWIGNR\x00" or version != 1:
            raise ValueError("not a version-1 Wigner raster")
        vals = np.frombuffer(buf, dtype="<f8", offset=struct.calcsize(fmt)).reshape(npp, nx)
        return cls(np.linspace(x0, x1, nx), np.linspace(p0, p1, npp), vals.copy())

    def save(self, stem: str | Path, header: str = "") -> None:
        stem = Path(stem)
        stem.with_suffix(".tsv").write_text(self.to_text(header))
        stem.with_suffix(".wig").write_bytes(self.to_raster())


@dataclass(frozen=True)
class NegativityReport:
    negativity_volume: float
    min_value: float
    purity: float


def default_axes(extent: float = DEFAULT_EXTENT, points: int = DEFAULT_POINTS) -> tuple[NDArray, NDArray]:
    ax = np.linspace(-extent, extent, points)
    return ax, ax.copy()


def _displacement_generator_eig(dim: int) -> tuple[NDArray, NDArray]:
    """Eigenpairs of the Hermitian matrix H = i (a - a^+), so r (a^+ - a) = i r H."""
    a = fock.annihilation(dim)
    h = 1j * (a - a.conj().T)
    return np.linalg.eigh(h)


def padded_dim(d: int, r_max: float, pad: int = MIN_PAD) -> int:
    """Working cutoff for displacements up to |alpha| = r_max (doubled internally)."""
    two_r = 2.0 * r_max
    return max(d + pad, d + pad + int(math.ceil(two_r**2 + 10.0 * two_r)))


def wigner(
    rho: NDArray[np.complex128],
    x_axis: NDArray | None = None,
    p_axis: NDArray | None = None,
    pad: int = MIN_PAD,
    chunk: int = 2048,
) -> WignerGrid:
    """Wigner function of ``rho`` on the (x, p) grid (default 101 x 101 over [-5, 5]^2).

    Raises:
        ValueError: ``rho`` is not square or deviates from Hermitian by more than 1e-8.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-8:
        raise ValueError("density matrix is not Hermitian to 1e-8")
    if x_axis is None or p_axis is None:
        dx, dp = default_axes()
        x_axis = dx if x_axis is None else x_axis
        p_axis = dp if p_axis is None else p_axis
    x_axis = np.asarray(x_axis, dtype=float)
    p_axis = np.asarray(p_axis, dtype=float)
    d = rho.shape[0]

    X, P = np.meshgrid(x_axis, p_axis)
    alpha = (X + 1j * P).ravel() / math.sqrt(2.0)
    r = np.abs(alpha)
    theta = np.angle(alpha)
    dim = padded_dim(d, float(r.max()), pad)
    w_eig, v_eig = _displacement_generator_eig(dim)
    top = v_eig[:d]  # rows n < d
    n = np.arange(d)
    sign = (-1.0) ** n
    out = np.empty(alpha.size)
    for start in range(0, alpha.size, chunk):
        sl = slice(start, start + chunk)
        # D(2r)[:d, :d] = V[:d] diag(exp(i 2r w)) V[:d]^+
        ph = np.exp(2j * r[sl, None] * w_eig[None, :])
        dblk = np.einsum("nk,bk,mk->bnm", top, ph, top.conj(), optimize=True)
        rot = np.exp(1j * theta[sl, None, None] * (n[None, :, None] - n[None, None, :]))
        # W = (1/pi) sum_{n,m} rho_{mn} e^{i theta (n - m)} D(2r)_{nm} (-1)^m
        kern = rot * dblk * sign[None, None, :]
        out[sl] = np.real(np.einsum("mn,bnm->b", rho, kern)) / math.pi
    return WignerGrid(x_axis, p_axis, out.reshape(X.shape), float(np.real(np.trace(rho))))


def negativity_volume(grid: WignerGrid, refine: int = REFINE) -> float:
    """Integral of |W| minus integral of W, clipped at 0.

    |W| has a kink wherever W changes sign, which limits the plain trapezoidal
    rule to roughly second order. The samples are therefore interpolated with a
    bicubic spline onto a grid ``refine`` times finer before integrating.
    """
    if grid.boundary_max() >= BOUNDARY_TOL:
        warnings.warn(
            f"|W| reaches {grid.boundary_max():.2e} on the grid boundary; negativity may be truncated",
            SupportWarning,
            stacklevel=2,
        )
    x, p, w = grid.x_axis, grid.p_axis, grid.values
    if refine > 1 and x.size > 3 and p.size > 3:
        spline = RectBivariateSpline(p, x, w, kx=3, ky=3)
        x = np.linspace(x[0], x[-1], (x.size - 1) * refine + 1)
        p = np.linspace(p[0], p[-1], (p.size - 1) * refine + 1)
        w = spline(p, x)
    absint = _trapezoid(_trapezoid(np.abs(w), x, axis=1), p)
    total = _trapezoid(_trapezoid(w, x, axis=1), p)
    return float(max(0.0, absint - total))


def purity(rho: NDArray[np.complex128]) -> float:
    rho = np.asarray(rho, dtype=np.complex128)
    return float(np.real(np.trace(rho @ rho)))


def negativity_report(rho: NDArray[np.complex128], grid: WignerGrid | None = None) -> NegativityReport:
    grid = grid if grid is not None else wigner(rho)
    return NegativityReport(negativity_volume(grid), float(grid.values.min()), purity(rho))


def analytic_fock_wigner(n: int, x: NDArray, p: NDArray) -> NDArray:
    """(-1)^n / pi L_n(2 r^2) e^{-r^2} with r^2 = x^2 + p^2, for cross-checks."""
    from scipy.special import eval_laguerre

    r2 = np.asarray(x) ** 2 + np.asarray(p) ** 2
    return (-1.0) ** n / math.pi * eval_laguerre(n, 2 * r2) * np.exp(-r2)
