import math

import numpy as np
import pytest
from scipy.integrate import quad

from broadband_mps import fano
from broadband_mps.exceptions import SimulationError

# lambda_M from the normalization root, frozen after cross-checking against the
# independent pole closure lambda_M + xi = pi / (2 sqrt(lambda_M))
LAMBDA_M = {
    -100.0: 100.15695650425468,
    -5.0: 5.660240893308533,
    0.0: 1.3512838450317455,
    1.9: 0.44767571732051364,
    5.0: 0.09504804463654078,
}

# depletion point found by find_depletion_point(), frozen for local checks
XI_F, TAU_F = 1.8995872, 1.3242773


@pytest.mark.parametrize("xi", sorted(LAMBDA_M))
def test_bound_state_energy_regression(xi):
    lm = fano.bound_state_energy(xi)
    assert lm == pytest.approx(LAMBDA_M[xi], rel=1e-10)
    assert lm == pytest.approx(fano.bound_state_energy_pole(xi), rel=1e-10)


def test_zero_detuning_closed_form():
    lm = fano.bound_state_energy(0.0)
    assert lm == pytest.approx((math.pi / 2) ** (2 / 3), rel=1e-12)
    assert fano.bound_state_weight(lm) == pytest.approx(2 / 3, rel=1e-12)


def test_bound_state_stable_under_bracket_refinement():
    a = fano.bound_state_energy(1.9)
    b = fano.bound_state_energy(1.9, scan=(1e-7, 1e4, 997))
    assert abs(a - b) <= 1e-10 * a


def test_deeper_binding_below_band():
    assert fano.bound_state_energy(-5.0) > fano.bound_state_energy(5.0)


@pytest.mark.parametrize("xi", [-5.0, 0.0, 1.9, 5.0, 400.0])
def test_normalization_at_zero_time(xi):
    assert fano.FanoParams.from_xi(xi).normalization_residual() <= 1e-8


def test_continuum_integral_matches_adaptive_quadrature():
    xi, tau, cut = 1.9, 0.7, 60.0

    def g(lam):
        return 2 * math.sqrt(lam) / (4 * lam * (lam - xi) ** 2 + math.pi**2)

    head_re = quad(lambda lam: g(lam) * math.cos(lam * tau), 0, cut, points=[xi], limit=400, epsabs=1e-13)[0]
    head_im = quad(lambda lam: -g(lam) * math.sin(lam * tau), 0, cut, points=[xi], limit=400, epsabs=1e-13)[0]
    # Fourier-weighted rule for the oscillatory tail
    tail_re = quad(lambda s: g(s + cut), 0, np.inf, weight="cos", wvar=tau)[0]
    tail_sin = quad(lambda s: g(s + cut), 0, np.inf, weight="sin", wvar=tau)[0]
    tail = np.exp(-1j * cut * tau) * (tail_re - 1j * tail_sin)
    ref = head_re + 1j * head_im + tail
    got, err = fano.continuum_integral(xi, tau)
    assert abs(got - ref) <= 1e-9
    assert err <= 1e-9


def test_initial_population_and_bounds():
    p = fano.FanoParams(1.9, LAMBDA_M[1.9])
    traj = fano.pump_trajectory(p, np.linspace(0, 10, 101))
    assert traj.n_b[0] == pytest.approx(1.0, abs=1e-6)
    assert np.all(traj.n_b >= -1e-9) and np.all(traj.n_b <= 1 + 1e-6)
    assert np.all(traj.error <= fano.QUAD_TOL)


def test_trajectory_is_continuous():
    p = fano.FanoParams.from_xi(0.0)
    tau = np.linspace(0.0, 5.0, 501)
    n = fano.pump_trajectory(p, tau).n_b
    slope = np.max(np.abs(np.gradient(n, tau)))
    assert np.max(np.abs(np.diff(n))) <= 1.5 * slope * (tau[1] - tau[0])


def test_trajectory_grid_validation():
    with pytest.raises(ValueError):
        fano.pump_trajectory(fano.FanoParams.from_xi(0.0), [0.0, 1.0, 0.5])
    with pytest.raises(ValueError):
        fano.FanoParams(0.0, -1.0)


def test_depletion_point_local_checks():
    p = fano.FanoParams.from_xi(XI_F)
    n_f, _ = fano.pump_population(p, TAU_F)
    assert n_f <= 1e-6
    for dtau in (-0.1, 0.1):
        assert fano.pump_population(p, TAU_F + dtau)[0] > n_f


def test_golden_rule_rate():
    assert fano.decay_rate(400.0) == pytest.approx(math.pi / 20)
    with pytest.raises(ValueError):
        fano.decay_rate(-1.0)
    p = fano.FanoParams.from_xi(400.0)
    tau = np.linspace(2.0, 20.0, 10)
    n = fano.pump_trajectory(p, tau).n_b
    slope = np.polyfit(tau, np.log(n), 1)[0]
    assert -slope == pytest.approx(fano.decay_rate(400.0), rel=1e-3)


def _local_maxima(n):
    return np.flatnonzero((n[1:-1] > n[:-2]) & (n[1:-1] > n[2:])) + 1


def test_regime_dichotomy():
    far_above = fano.pump_trajectory(fano.FanoParams.from_xi(400.0), np.linspace(0.0, 20.0, 201)).n_b
    assert np.all(np.diff(far_above) < 0)
    # the oscillation period near xi = -100 is about 2 pi / 100, so [0, 5] already holds many maxima
    far_below = fano.pump_trajectory(fano.FanoParams.from_xi(-100.0), np.arange(0.0, 5.0, 0.005)).n_b
    assert len(_local_maxima(far_below)) >= 5


def test_printed_variant_has_pole_on_path():
    with pytest.raises(ValueError):
        fano.continuum_integral(4.0, 1.0, "printed")
    with pytest.raises(ValueError):
        fano.FanoParams.from_xi(4.0, "printed")
    # below pi it is integrable, but for xi above about 0.8 its continuum weight
    # alone exceeds 1, so no lambda_M normalizes it and the depletion point is unreachable
    assert fano.continuum_integral(1.9, 0.0, "printed")[0].real > 1.0
    with pytest.raises(SimulationError):
        fano.FanoParams.from_xi(1.9, "printed")
    assert fano.FanoParams.from_xi(-5.0, "printed").normalization_residual() <= 1e-8


def test_lineshape_variants():
    lam = np.array([0.5, 2.0])
    sq = fano.lineshape(lam, 1.0, "squared")
    pr = fano.lineshape(lam, 1.0, "printed")
    np.testing.assert_allclose(sq, 2 * np.sqrt(lam) / (4 * lam * (lam - 1) ** 2 + math.pi**2))
    np.testing.assert_allclose(pr, 2 * np.sqrt(lam) / (4 * lam * (lam - 1) + math.pi**2))


# -- discretized oracle --------------------------------------------------------------------


def test_discretization_validation():
    with pytest.raises(ValueError):
        fano.ContinuumDiscretization(lambda_max=50.0).validate_for(0.0)
    with pytest.raises(ValueError):
        fano.ContinuumDiscretization(lambda_max=1e4).validate_for(5000.0)
    with pytest.raises(ValueError):
        fano.schrodinger_oracle(5.0, fano.ContinuumDiscretization(n_points=100), 1.0, 0.1)
    u, du = fano.ContinuumDiscretization(lambda_max=1e6, n_points=1000, scheme="graded").nodes(1.0)
    assert u.size == 1000
    assert np.sum(du) == pytest.approx(1000.0, rel=1e-9)
    assert np.all(np.diff(u) > 0)


def test_oracle_decoupled_is_static():
    traj = fano.schrodinger_oracle(1.9, fano.ContinuumDiscretization(n_points=1000), 5.0, 0.5, coupling=False)
    np.testing.assert_allclose(traj.n_b, 1.0, atol=1e-14)


def test_oracle_short_time_quadratic():
    traj = fano.schrodinger_oracle(1.9, fano.ContinuumDiscretization(n_points=1500), 1e-5, 1e-6)
    tau, loss = traj.tau[1:], 1.0 - traj.n_b[1:]
    assert np.polyfit(np.log(tau), np.log(loss), 1)[0] == pytest.approx(2.0, abs=0.05)
    assert np.max(traj.error) <= 1e-10


def test_oracle_agrees_with_closed_form():
    disc = fano.ContinuumDiscretization(n_points=2000)
    oracle = fano.schrodinger_oracle(1.9, disc, 10.0, 0.05)
    exact = fano.pump_trajectory(fano.FanoParams.from_xi(1.9), oracle.tau)
    assert np.max(np.abs(oracle.n_b - exact.n_b)) <= 1e-2
    assert np.max(oracle.error) <= 1e-10
