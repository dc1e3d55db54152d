"""Few-photon broadband PDC through the Fano discrete-continuum mapping.

A single pump photon (energy ``xi`` above the bottom of the signal-pair band)
couples to a continuum of signal pairs with energy lambda >= 0 and coupling
density |v(lambda)|^2 = 1 / (2 sqrt(lambda)). The surviving pump population is

    N_b(tau) = | Z + e^{-i lambda_M tau} I(tau) |^2,
    Z        = (1 + pi / (4 lambda_M^{3/2}))^{-1},
    I(tau)   = int_0^inf dlambda 2 sqrt(lambda) e^{-i lambda tau} / D(lambda),

with -lambda_M the energy of the two-photon bound state. Matching the integrand
to the Fano lineshape |v|^2 / |lambda - xi - Sigma(lambda + i0)|^2 gives
D(lambda) = 4 lambda (lambda - xi)^2 + pi^2 (the ``"squared"`` variant, the
default). The ``"printed"`` variant D(lambda) = 4 lambda (lambda - xi) + pi^2 is
kept for comparison; it has a real pole on the integration path for xi > pi.

I(tau) is evaluated with lambda = u^2 on composite Gauss-Legendre panels along
the real axis up to a cutoff Lambda beyond all poles of 1/D, followed by the
exact tail  -i e^{-i Lambda tau} int_0^inf f(Lambda - i s) e^{-s tau} ds  along a
vertical contour, where the integrand decays exponentially for tau > 0 and
algebraically (as s^{-5/2}) at tau = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.linalg
from numpy.typing import NDArray
from scipy.optimize import minimize_scalar, root

from .exceptions import SimulationError

Variant = Literal["squared", "printed"]
DEFAULT_VARIANT: Variant = "squared"

QUAD_TOL = 1e-6
_GL_HI = np.polynomial.legendre.leggauss(16)
_GL_LO = np.polynomial.legendre.leggauss(11)
_PHASE_PER_PANEL = 6.0


class QuadratureError(SimulationError):
    """The oscillatory quadrature failed to reach its error target."""


# -- lineshape -----------------------------------------------------------------------


def _denominator_coeffs(xi: float, variant: Variant) -> list[float]:
    if variant == "squared":
        return [4.0, -8.0 * xi, 4.0 * xi**2, math.pi**2]
    if variant == "printed":
        return [4.0, -4.0 * xi, math.pi**2]
    raise ValueError(f"unknown lineshape variant {variant!r}")


def lineshape(lam: NDArray | complex, xi: float, variant: Variant = DEFAULT_VARIANT) -> NDArray:
    """f(lambda) = 2 sqrt(lambda) / D(lambda), analytic off the negative real axis."""
    lam = np.asarray(lam)
    return 2.0 * np.sqrt(lam + 0j) / np.polyval(_denominator_coeffs(xi, variant), lam)


def lineshape_poles(xi: float, variant: Variant = DEFAULT_VARIANT) -> NDArray[np.complex128]:
    return np.roots(_denominator_coeffs(xi, variant)).astype(np.complex128)


def _check_path(xi: float, variant: Variant) -> NDArray[np.complex128]:
    poles = lineshape_poles(xi, variant)
    on_path = [p for p in poles if p.real > 0 and abs(p.imag) < 1e-12 * max(1.0, abs(p))]
    if on_path:
        raise ValueError(
            f"{variant} lineshape has a real pole at lambda={on_path[0].real:.6g} for xi={xi}; "
            "the continuum integral diverges"
        )
    return poles


def _contour_start(poles: NDArray[np.complex128]) -> float:
    """Real-axis cutoff Lambda lying well to the right of every pole."""
    re_max = max([p.real for p in poles] + [0.0])
    return max(1.0, 2.0 * re_max + 1.0)


def _u_panels(poles: NDArray[np.complex128], u_max: float, tau: float) -> NDArray[np.float64]:
    """Panel edges in u = sqrt(lambda) on [0, u_max]."""
    feats = []
    small = 1.0
    for p in poles:
        if abs(p) > 0:
            small = min(small, math.sqrt(abs(p)))
        if p.real > 0:
            ur = math.sqrt(p.real)
            feats.append((ur, max(abs(p.imag) / (2.0 * ur), 1e-12)))
    edges = [0.0]
    u = 0.0
    while u < u_max:
        h = 0.25 * max(u, small)
        for ur, width in feats:
            h = min(h, 0.25 * max(abs(u - ur), width))
        if tau > 0:
            h = min(h, _PHASE_PER_PANEL / (2.0 * max(u, 1e-300) * tau))
        u = min(u + h, u_max)
        if u_max - u < 1e-3 * h:
            u = u_max
        edges.append(u)
    return np.array(edges)


def _panel_rule(edges: NDArray, rule) -> tuple[NDArray, NDArray]:
    x, w = rule
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (b + a)
    weights = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), weights.ravel()


def _real_axis(xi, variant, poles, lam_cut, tau, rule) -> complex:
    edges = _u_panels(poles, math.sqrt(lam_cut), tau)
    u, w = _panel_rule(edges, rule)
    lam = u * u
    g = 2.0 * u * lineshape(lam, xi, variant)  # dlambda = 2u du
    return complex(np.sum(w * g * np.exp(-1j * lam * tau)))


def _contour_tail(xi, variant, lam_cut, tau, rule) -> complex:
    h0 = 0.05 * lam_cut if tau == 0 else 0.05 * min(lam_cut, 1.0 / tau)
    s_end = 1e14 * lam_cut if tau == 0 else min(60.0 / tau, 1e14 * lam_cut)
    edges = [0.0, h0]
    while edges[-1] < s_end:
        edges.append(min(2.0 * edges[-1], s_end) if edges[-1] * 2 < s_end else s_end)
    s, w = _panel_rule(np.array(edges), rule)
    vals = lineshape(lam_cut - 1j * s, xi, variant) * np.exp(-s * tau)
    return complex(-1j * np.exp(-1j * lam_cut * tau) * np.sum(w * vals))


def continuum_integral(xi: float, tau: float, variant: Variant = DEFAULT_VARIANT) -> tuple[complex, float]:
    """I(tau) and an error estimate from two Gauss-Legendre orders on the same panels."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    poles = _check_path(xi, variant)
    lam_cut = _contour_start(poles)
    hi = _real_axis(xi, variant, poles, lam_cut, tau, _GL_HI) + _contour_tail(xi, variant, lam_cut, tau, _GL_HI)
    lo = _real_axis(xi, variant, poles, lam_cut, tau, _GL_LO) + _contour_tail(xi, variant, lam_cut, tau, _GL_LO)
    return hi, abs(hi - lo)


# -- bound state -----------------------------------------------------------------------


def bound_state_weight(lambda_m: float) -> float:
    """Z = (1 + pi / (4 lambda_M^{3/2}))^{-1}."""
    return 1.0 / (1.0 + math.pi / (4.0 * lambda_m**1.5))


def bound_state_energy(
    xi: float,
    variant: Variant = DEFAULT_VARIANT,
    scan: tuple[float, float, int] = (1e-6, 1e3, 181),
    xtol: float = 1e-14,
) -> float:
    """lambda_M > 0 fixed by the normalization N_b(0) = 1.

    At tau = 0 the continuum integral I0 is real, so the condition reads
    Z(lambda_M) = 1 - I0. The root is bracketed on a logarithmic scan and
    refined by bisection with a final secant polish.
    """
    if not math.isfinite(xi):
        raise ValueError(f"xi must be finite, got {xi}")
    i0, _ = continuum_integral(xi, 0.0, variant)
    target = 1.0 - i0.real

    def g(lm: float) -> float:
        return bound_state_weight(lm) - target

    grid = np.geomspace(scan[0], scan[1], scan[2])
    vals = np.array([g(x) for x in grid])
    idx = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
    if idx.size == 0:
        raise SimulationError(
            f"no sign change of the normalization condition for lambda_M in [{scan[0]:g}, {scan[1]:g}] "
            f"(xi={xi}, variant={variant}, I0={i0.real:.6g}); g ranged over [{vals.min():.3g}, {vals.max():.3g}]"
        )
    a, b = grid[idx[0]], grid[idx[0] + 1]
    ga = g(a)
    while b - a > xtol * max(1.0, a):
        m = 0.5 * (a + b)
        gm = g(m)
        if gm == 0.0:
            return m
        if np.sign(gm) == np.sign(ga):
            a, ga = m, gm
        else:
            b = m
    gb = g(b)
    if gb != ga:
        x = b - gb * (b - a) / (gb - ga)
        if a <= x <= b:
            return float(x)
    return float(0.5 * (a + b))


def bound_state_energy_pole(xi: float) -> float:
    """Independent closure from the bound-state pole: lambda_M + xi = pi / (2 sqrt(lambda_M))."""
    lo, hi = 1e-300, max(1.0, abs(xi)) * 4 + 10.0
    f = lambda lm: lm + xi - math.pi / (2.0 * math.sqrt(lm))  # noqa: E731
    for _ in range(400):
        mid = 0.5 * (lo + hi) if lo > 1e-200 else math.sqrt(lo * hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class FanoParams:
    xi: float
    lambda_M: float
    variant: Variant = DEFAULT_VARIANT

    def __post_init__(self) -> None:
        if not self.lambda_M > 0:
            raise ValueError(f"lambda_M must be > 0, got {self.lambda_M}")

    @classmethod
    def from_xi(cls, xi: float, variant: Variant = DEFAULT_VARIANT) -> FanoParams:
        return cls(xi, bound_state_energy(xi, variant), variant)

    @property
    def bound_weight(self) -> float:
        return bound_state_weight(self.lambda_M)

    def normalization_residual(self) -> float:
        return abs(pump_population(self, 0.0)[0] - 1.0)


def pump_amplitude(params: FanoParams, tau: float) -> tuple[complex, float]:
    integral, err = continuum_integral(params.xi, tau, params.variant)
    amp = params.bound_weight + np.exp(-1j * params.lambda_M * tau) * integral
    return complex(amp), err


def pump_population(params: FanoParams, tau: float) -> tuple[float, float]:
    """(N_b(tau), error estimate)."""
    amp, err_i = pump_amplitude(params, tau)
    err = 2.0 * abs(amp) * err_i + err_i**2
    if err > QUAD_TOL:
        raise QuadratureError(f"N_b({tau}) error estimate {err:.2e} > {QUAD_TOL:g} at xi={params.xi}")
    return float(abs(amp) ** 2), float(err)


@dataclass
class PumpTrajectory:
    tau: NDArray[np.float64]
    n_b: NDArray[np.float64]
    error: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))


def pump_trajectory(params: FanoParams, tau_grid) -> PumpTrajectory:
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or np.any(np.diff(tau) <= 0):
        raise ValueError("tau grid must be one-dimensional and strictly increasing")
    vals = np.empty_like(tau)
    errs = np.empty_like(tau)
    for k, t in enumerate(tau):
        vals[k], errs[k] = pump_population(params, float(t))
    return PumpTrajectory(tau, vals, errs)


def decay_rate(xi: float) -> float:
    """Golden-rule rate 2 pi |v(xi)|^2 = pi / sqrt(xi) for a pump inside the band."""
    if xi <= 0:
        raise ValueError("decay rate defined for xi > 0")
    return 2.0 * math.pi / (2.0 * math.sqrt(xi))


# -- depletion point ------------------------------------------------------------------


@dataclass(frozen=True)
class DepletionPoint:
    xi: float
    tau: float
    n_b: float


def _min_over_tau(xi: float, variant: Variant, tau_max: float = 6.0) -> tuple[float, float]:
    params = FanoParams.from_xi(xi, variant)
    grid = np.arange(0.05, tau_max, 0.05)
    vals = np.array([pump_population(params, t)[0] for t in grid])
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(lambda t: pump_population(params, t)[0], bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    return float(res.x), float(res.fun)


def find_depletion_point(
    variant: Variant = DEFAULT_VARIANT,
    xi_range: tuple[float, float] = (0.5, 4.0),
    threshold: float = 1e-6,
) -> DepletionPoint:
    """(xi, tau) where the pump population reaches zero at finite time.

    Nested minimization of min_tau N_b over xi, then a Newton polish of the
    complex pump amplitude (two real equations in xi and tau). If the minimum
    stays above ``threshold`` the best point found is returned as is.
    """
    xis = np.arange(xi_range[0], xi_range[1] + 1e-12, 0.1)
    coarse = [_min_over_tau(x, variant)[1] for x in xis]
    k = int(np.argmin(coarse))
    lo, hi = xis[max(k - 1, 0)], xis[min(k + 1, xis.size - 1)]
    outer = minimize_scalar(lambda x: _min_over_tau(x, variant)[1], bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
    xi0 = float(outer.x)
    tau0, nb0 = _min_over_tau(xi0, variant)
    best = DepletionPoint(xi0, tau0, nb0)

    def residual(z):
        amp, _ = pump_amplitude(FanoParams.from_xi(z[0], variant), z[1])
        return [amp.real, amp.imag]

    sol = root(residual, [xi0, tau0], method="hybr", options={"xtol": 1e-13})
    if sol.success and xi_range[0] <= sol.x[0] <= xi_range[1] and sol.x[1] > 0:
        nb = pump_population(FanoParams.from_xi(sol.x[0], variant), sol.x[1])[0]
        if nb < best.n_b:
            best = DepletionPoint(float(sol.x[0]), float(sol.x[1]), nb)
    return best


# -- discretized Schroedinger oracle -------------------------------------------------------


@dataclass(frozen=True)
class ContinuumDiscretization:
    """Continuum grid in u = sqrt(lambda).

    ``"uniform"`` uses n_points equal cells on [0, sqrt(lambda_max)].
    ``"graded"`` puts ``fine_fraction`` of the points in equal cells on
    [0, u_fine] and the rest in geometrically growing cells up to
    sqrt(lambda_max); this keeps low-energy and resonant states finely resolved
    while a large cutoff makes the missing high-energy self-energy negligible.
    """

    lambda_max: float = 1e4
    n_points: int = 4000
    scheme: Literal["uniform", "graded"] = "uniform"
    u_fine: float | None = None
    fine_fraction: float = 0.75

    def __post_init__(self) -> None:
        if self.n_points < 2:
            raise ValueError("need at least two continuum points")
        if self.lambda_max <= 0:
            raise ValueError("lambda_max must be > 0")

    def validate_for(self, xi: float) -> None:
        if self.lambda_max <= max(4.0 * abs(xi), 100.0):
            raise ValueError(f"lambda_max={self.lambda_max:g} must exceed max(4|xi|, 100)={max(4 * abs(xi), 100.0):g}")

    def nodes(self, xi: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """(u_j, du_j) cell midpoints and widths."""
        u_max = math.sqrt(self.lambda_max)
        if self.scheme == "uniform":
            du = u_max / self.n_points
            u = (np.arange(self.n_points) + 0.5) * du
            return u, np.full(self.n_points, du)
        u_f = self.u_fine if self.u_fine is not None else max(4.0, 2.0 * math.sqrt(max(xi, 0.0)) + 4.0)
        u_f = min(u_f, u_max)
        n_f = int(self.n_points * self.fine_fraction)
        n_g = self.n_points - n_f
        du = u_f / n_f
        u_lin = (np.arange(n_f) + 0.5) * du
        w_lin = np.full(n_f, du)
        if n_g == 0 or u_f >= u_max:
            return u_lin, w_lin
        # geometric cells starting at width du
        ratio = _geometric_ratio(du, u_max - u_f, n_g)
        widths = du * ratio ** np.arange(1, n_g + 1)
        edges = u_f + np.concatenate([[0.0], np.cumsum(widths)])
        return np.concatenate([u_lin, 0.5 * (edges[:-1] + edges[1:])]), np.concatenate([w_lin, widths])


def _geometric_ratio(h0: float, length: float, n: int) -> float:
    """r > 1 with sum_{k=1..n} h0 r^k = length."""
    lo, hi = 1.0 + 1e-15, 2.0
    while h0 * hi * (hi**n - 1) / (hi - 1) < length:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h0 * mid * (mid**n - 1) / (mid - 1) < length:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def oracle_hamiltonian(xi: float, disc: ContinuumDiscretization, coupling: bool = True) -> NDArray[np.float64]:
    """Arrowhead matrix: E_b = xi, E_j = lambda_j, couplings v(lambda_j) sqrt(dlambda_j).

    With lambda = u^2, dlambda = 2u du and |v|^2 = 1/(2 sqrt(lambda)), the coupling
    squared reduces to the cell width du.
    """
    u, du = disc.nodes(xi)
    lam = u * u
    v = np.sqrt((2.0 * u * du) / (2.0 * np.sqrt(lam))) if coupling else np.zeros_like(u)
    n = lam.size
    h = np.zeros((n + 1, n + 1))
    h[0, 0] = xi
    h[np.arange(1, n + 1), np.arange(1, n + 1)] = lam
    h[0, 1:] = v
    h[1:, 0] = v
    return h


def schrodinger_oracle(
    xi: float,
    disc: ContinuumDiscretization,
    T: float,
    dt: float,
    coupling: bool = True,
    check_resolution: bool = True,
) -> PumpTrajectory:
    """|b(tau)|^2 on tau = 0, dt, ..., T by exact diagonalization of the discretized model.

    The ``error`` field holds the deviation of the total norm from 1 at each time.
    """
    disc.validate_for(xi)
    u, du = disc.nodes(xi)
    if check_resolution:
        # low-energy edge scale u0 = pi / (2|xi|) and the resonance width must be resolved
        u0 = math.pi / (2.0 * max(abs(xi), 1e-12))
        fine = du[0]
        if fine > 0.5 * u0:
            raise ValueError(f"continuum cell du={fine:.3g} too coarse for the low-energy scale {u0:.3g}")
        if xi > 0:
            width_u = math.pi / (4.0 * xi)
            j = int(np.argmin(np.abs(u - math.sqrt(xi))))
            if du[j] > width_u:
                raise ValueError(f"continuum cell du={du[j]:.3g} too coarse for resonance width {width_u:.3g}")
    h = oracle_hamiltonian(xi, disc, coupling)
    evals, evecs = scipy.linalg.eigh(h)
    weights = np.abs(evecs[0]) ** 2
    steps = int(round(T / dt))
    tau = np.arange(steps + 1) * dt
    amp = np.exp(-1j * np.outer(tau, evals)) @ weights
    # total norm from the full state psi(tau) = V e^{-iE tau} V^T e_0
    norm = np.array([np.linalg.norm(evecs @ (np.exp(-1j * evals * t) * evecs[0])) for t in tau[:: max(1, steps // 20)]])
    norm_err = np.full(tau.size, float(np.max(np.abs(norm - 1.0))))
    return PumpTrajectory(tau, np.abs(amp) ** 2, norm_err)
