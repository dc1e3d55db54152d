"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the verdicts are repeated in
an "acceptance criteria" section at the end of the terminal report.
"""

import json
import math
import time
import warnings

import numpy as np
import pytest
import yaml
from scipy.signal import find_peaks

from broadband_mps import cli, demux, fano, fock, meanfield, models, oracles, phase_space, tebd
from broadband_mps.mps import (
    CutoffWarning,
    TruncationPolicy,
    coherent_product_state,
    entanglement_entropy,
    product_state,
    reduced_density_matrix,
    single_photon_state,
)

# the small-lattice criteria use cutoffs that clip coherent tails on purpose;
# their references start from the same truncated states
pytestmark = pytest.mark.filterwarnings("ignore::broadband_mps.mps.CutoffWarning")

# mean pump population over tau in [50, 100] at xi = 0 (2001 uniform samples),
# derived once and pinned; the long-time limit is Z^2 = 4/9
XI0_FLOOR_MEAN = 0.4444352071301163


def _fidelity(a, b):
    return abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real)


# -- pump depletion (closed form) -----------------------------------------------------------


def test_c01_depletion_point(verdict):
    t0 = time.perf_counter()
    pt = fano.find_depletion_point()
    elapsed = time.perf_counter() - t0
    ok = abs(pt.xi - 1.90) <= 0.02 and abs(pt.tau - 1.32) <= 0.02 and pt.n_b <= 1e-3 and elapsed <= 60
    verdict("C1 depletion point", ok, f"xi_f={pt.xi:.5f} tau_f={pt.tau:.5f} N_b={pt.n_b:.2e} t={elapsed:.1f}s")


def test_c02_large_xi_exponential(verdict):
    xi = 400.0
    tau = np.linspace(0.0, 2.0 * math.sqrt(xi) / math.pi, 201)
    n_b = fano.pump_trajectory(fano.FanoParams.from_xi(xi), tau).n_b
    dev = float(np.max(np.abs(n_b / np.exp(-math.pi * tau / math.sqrt(xi)) - 1.0)))
    verdict("C2 large-xi decay", dev <= 0.05, f"max relative deviation {dev:.2e}")


def test_c03_negative_xi_envelope(verdict):
    t0 = time.perf_counter()
    tau = np.linspace(5.0, 200.0, 20000)
    n_b = fano.pump_trajectory(fano.FanoParams.from_xi(-100.0), tau).n_b
    # half peak-to-trough height of the oscillation, sampled at the maxima
    peaks, _ = find_peaks(n_b)
    troughs, _ = find_peaks(-n_b)
    amp = 0.5 * (n_b[peaks] - np.interp(tau[peaks], tau[troughs], n_b[troughs]))
    p = float(np.polyfit(np.log(tau[peaks]), np.log(amp), 1)[0])
    elapsed = time.perf_counter() - t0
    ok = abs(p + 0.5) <= 0.1 and len(peaks) > 100 and elapsed <= 60
    verdict("C3 negative-xi envelope", ok, f"exponent {p:.4f} from {len(peaks)} maxima, t={elapsed:.1f}s")


def test_c04_efficiency_floor(verdict):
    tau = np.linspace(50.0, 100.0, 2001)
    mean = float(np.mean(fano.pump_trajectory(fano.FanoParams.from_xi(0.0), tau).n_b))
    ok = mean > 0 and mean == pytest.approx(XI0_FLOOR_MEAN, rel=1e-6)
    verdict("C4 finite-xi floor", ok, f"mean N_b={mean:.10f}, pinned {XI0_FLOOR_MEAN:.10f}")


def test_c05_closed_form_vs_oracle(verdict):
    t0 = time.perf_counter()
    disc = fano.ContinuumDiscretization(n_points=4000)
    devs = {}
    for xi in (-5.0, 0.0, 1.90, 5.0):
        oracle = fano.schrodinger_oracle(xi, disc, 10.0, 0.05)
        exact = fano.pump_trajectory(fano.FanoParams.from_xi(xi), oracle.tau)
        devs[xi] = float(np.max(np.abs(oracle.n_b - exact.n_b)))
    elapsed = time.perf_counter() - t0
    ok = max(devs.values()) <= 1e-2 and elapsed <= 300
    detail = " ".join(f"xi={k:g}:{v:.1e}" for k, v in devs.items())
    verdict("C5 closed form vs oracle", ok, f"{detail} t={elapsed:.0f}s")


# -- lattice evolution ------------------------------------------------------------------------


def _small_kerr():
    return models.KerrWaveguideModel(4, g_kerr=-0.7, local_dim=4), coherent_product_state([0.4, 0.3j, 0.0, 0.2], 4)


def test_c06_tebd_vs_krylov(verdict):
    t0 = time.perf_counter()
    model, state = _small_kerr()
    plan = tebd.EvolutionPlan(1.0, 1e-3, policy=TruncationPolicy(64), observe_every=1000)
    out, _ = tebd.evolve(state, model, plan)
    ref = oracles.exact_evolve(model, oracles.densify(state), 1.0).vector
    infid = 1.0 - _fidelity(oracles.densify(out).vector, ref)
    elapsed = time.perf_counter() - t0
    verdict("C6 TEBD vs Krylov", infid <= 1e-8 and elapsed <= 120, f"1-F={infid:.2e} t={elapsed:.1f}s")


def test_c07_trotter_order(verdict):
    model, state = _small_kerr()
    ref = oracles.exact_evolve(model, oracles.densify(state), 1.0).vector
    dts = np.array([0.1, 0.05, 0.025])
    errs = []
    for dt in dts:
        out, _ = tebd.evolve(state, model, tebd.EvolutionPlan(1.0, float(dt), observe_every=1000))
        errs.append(np.linalg.norm(oracles.densify(out).vector - ref))
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    verdict("C7 Trotter order", abs(slope - 2.0) <= 0.2, f"slope {slope:.3f}")


def test_c08_conservation(verdict):
    kerr = models.KerrWaveguideModel(5, g_kerr=-0.5, local_dim=5)
    s = coherent_product_state([0.2, 0.5, 0.6, 0.5, 0.2], 5)
    _, rec = tebd.evolve(s, kerr, tebd.EvolutionPlan(1.0, 0.05, observe_every=2))
    n = rec.series("total_number")
    kerr_rate = float(np.max(np.abs(n - n[0])) / rec.times[-1])

    chi2 = models.Chi2WaveguideModel(4, epsilon=0.5, xi_mismatch=0.3, d_s=3, d_p=3)
    vecs = [np.kron(fock.fock_vector(0, 3), fock.coherent_vector(a, 3)) for a in (0.0, 0.3, 0.3, 0.0)]
    _, rec = tebd.evolve(product_state(vecs), chi2, tebd.EvolutionPlan(1.0, 0.05, observe_every=2))
    q = rec.series("total_number")
    chi2_rate = float(np.max(np.abs(q - q[0])) / rec.times[-1])

    # without renormalization the norm loss must equal the discarded weight
    policy = TruncationPolicy(max_bond_dim=2, renormalize_after_truncation=False)
    s = coherent_product_state([0.0, 0.6, 0.8, 0.8, 0.6, 0.0], 4)
    out, _ = tebd.evolve(s, models.KerrWaveguideModel(6, local_dim=4, g_kerr=-1.5), tebd.EvolutionPlan(1.0, 0.05, policy=policy, max_discarded_weight=1.0))
    accounting = abs(out.norm_squared() + out.cumulative_discarded_weight - s.norm_squared())

    ok = kerr_rate <= 1e-8 and chi2_rate <= 1e-8 and accounting <= 1e-9 and out.cumulative_discarded_weight > 1e-6
    detail = (
        f"N drift {kerr_rate:.1e}/t, n_s+2n_p drift {chi2_rate:.1e}/t, "
        f"norm accounting {accounting:.1e} at discarded {out.cumulative_discarded_weight:.1e}"
    )
    verdict("C8 conservation", ok, detail)


def test_c09_quantum_induced_dispersion(verdict):
    n_bins, n_photons, x0 = 32, 4.0, 4.0
    g = models.classical_soliton_coupling(n_photons, x0, 1.0, 1.0)
    model = models.KerrWaveguideModel(n_bins, 1.0, 1.0, g, 0.0, 6)
    alpha = meanfield.stationary_soliton(model, models.sech_amplitudes(n_bins, 1.0, n_photons, x0))
    with warnings.catch_warnings():
        # the cutoff at d = 6 drops a small coherent tail in the densest bins, by design
        warnings.simplefilter("ignore", CutoffWarning)
        state = coherent_product_state(alpha, 6)
    plan = tebd.EvolutionPlan(10.0, 0.05, policy=TruncationPolicy(24), observe_every=20)
    _, rec = tebd.evolve(state, model, plan)
    x = models.bin_positions(n_bins, 1.0)
    widths = np.array([meanfield.rms_width(d, x) for d in rec.series("number_density")])
    classical = meanfield.split_step(model, alpha, plan.total_time, plan.dt, plan.observe_every)
    cl = np.array([meanfield.rms_width(d, x) for d in classical.densities])
    cl_dev = float(np.max(np.abs(cl / cl[0] - 1.0)))
    ok = g < 0 and bool(np.all(np.diff(widths) > 0)) and cl_dev <= 0.05
    detail = f"quantum width {widths[0]:.4f}->{widths[-1]:.4f}, classical max drift {cl_dev:.1e}"
    verdict("C9 quantum-induced dispersion", ok, detail)


# -- demultiplexing and phase space -------------------------------------------------------------


def test_c10_demux(verdict):
    rng = np.random.default_rng(2024)
    c = rng.normal(size=8) + 1j * rng.normal(size=8)
    c /= np.linalg.norm(c)
    cas = demux.givens_cascade(c, 0)
    res = demux.apply_cascade(single_photon_state(c, 3), cas)
    photon_dev = float(np.max(np.abs(reduced_density_matrix(res.state, 0) - np.diag([0, 1, 0]))))

    alpha, d = 1.1, 12
    res = demux.apply_cascade(coherent_product_state(alpha * c, d), cas)
    target = fock.coherent_vector(alpha, d)
    fid = float(np.real(target.conj() @ reduced_density_matrix(res.state, 0) @ target))
    entropy = max(entanglement_entropy(res.state, k) for k in range(7))
    ok = photon_dev <= 1e-8 and fid >= 1 - 1e-6 and entropy <= 1e-6
    verdict("C10 demux", ok, f"photon rdm dev {photon_dev:.1e}, coherent 1-F {1 - fid:.1e}, max entropy {entropy:.1e} bits")


def _pure(v):
    return np.outer(v, v.conj())


def test_c11_wigner_pinning(verdict):
    x = np.linspace(-5, 5, 81)
    X, P = np.meshgrid(x, x)
    vac = phase_space.wigner(_pure(fock.fock_vector(0, 4)), x, x).values
    vac_dev = np.max(np.abs(vac - np.exp(-(X**2) - P**2) / math.pi))
    beta = 0.8 - 0.5j
    coh = phase_space.wigner(_pure(fock.coherent_vector(beta, 24)), x, x).values
    x0, p0 = math.sqrt(2) * beta.real, math.sqrt(2) * beta.imag
    coh_dev = np.max(np.abs(coh - np.exp(-((X - x0) ** 2) - (P - p0) ** 2) / math.pi))
    one = phase_space.wigner(_pure(fock.fock_vector(1, 4)), x, x).values
    one_dev = np.max(np.abs(one - (2 * (X**2 + P**2) - 1) * np.exp(-(X**2) - P**2) / math.pi))

    neg_one = phase_space.negativity_volume(phase_space.wigner(_pure(fock.fock_vector(1, 3))))
    neg_exact = 2 * (2 * math.exp(-0.5) - 1)
    neg_gauss = max(
        phase_space.negativity_volume(phase_space.wigner(_pure(fock.fock_vector(0, 3)))),
        phase_space.negativity_volume(phase_space.wigner(_pure(fock.coherent_vector(0.7 + 0.4j, 14)))),
    )
    ok = max(vac_dev, coh_dev, one_dev) <= 1e-6 and abs(neg_one - 0.4261) <= 1e-3 and neg_gauss <= 1e-4
    detail = (
        f"pointwise dev vac {vac_dev:.1e} coh {coh_dev:.1e} fock1 {one_dev:.1e}; "
        f"fock1 negativity {neg_one:.5f} (analytic {neg_exact:.5f}); gaussian {neg_gauss:.1e}"
    )
    verdict("C11 Wigner pinning", ok, detail)


def test_c12_kerr_non_gaussianity_and_pipeline_identity(verdict):
    # Fock truncation alone makes a coherent state non-Gaussian: at d = 20 the
    # alpha = 2 input already shows negativity 1e-4, at d = 30 it is 1e-8
    g, alpha, d = -1.0, 2.0, 30
    n = np.arange(d)
    psi0 = fock.coherent_vector(alpha, d)

    def isolated(t):
        return np.exp(-0.5j * g * t * n * (n - 1)) * psi0

    # |alpha| = 2 sits near x = 2.8, so the grid must extend past the default
    x, p = phase_space.default_axes(7.0, 141)

    def negativity(rho):
        return phase_space.negativity_volume(phase_space.wigner(rho, x, p))

    t_quarter = 2 * math.pi / abs(g) / 4
    sweep = {gt: negativity(_pure(isolated(gt / abs(g)))) for gt in (0.0, 0.25, 0.5, t_quarter)}
    rho_iso = _pure(isolated(t_quarter))
    neg_iso = sweep[t_quarter]

    # same bin embedded in a lattice with zero hopping, then routed to bin 0
    model = models.KerrWaveguideModel(3, beta2=0.0, g_kerr=g, local_dim=d)
    state = coherent_product_state([0.0, alpha, 0.0], d)
    final, _ = tebd.evolve(state, model, tebd.EvolutionPlan(t_quarter, t_quarter / 50, observe_every=50))
    res = demux.apply_cascade(final, demux.givens_cascade(np.array([0.0, 1.0, 0.0]), 0))
    rho = reduced_density_matrix(res.state, 0)
    neg_pipe = negativity(rho)
    rho_dev = float(np.max(np.abs(rho - rho_iso)))

    ok = sweep[0.0] <= 1e-4 and neg_iso > 0.01 and rho_dev <= 1e-6 and abs(neg_pipe - neg_iso) <= 1e-6
    detail = (
        "negativity vs g t: " + " ".join(f"{k:.3f}:{v:.2e}" for k, v in sweep.items())
        + f"; pipeline rho dev {rho_dev:.1e}, negativity dev {abs(neg_pipe - neg_iso):.1e}"
    )
    verdict("C12 Kerr non-Gaussianity", ok, detail)


# -- open system and reproducibility ------------------------------------------------------------------


def test_c13_trajectories_vs_lindblad(verdict):
    t0 = time.perf_counter()
    model = models.KerrWaveguideModel(3, g_kerr=-0.5, kappa=0.5, local_dim=3)
    with warnings.catch_warnings():
        # the dense reference starts from the same truncated state, so the cutoff is shared
        warnings.simplefilter("ignore", CutoffWarning)
        state = coherent_product_state([0.6, 0.3j, 0.1], 3)
    plan = tebd.EvolutionPlan(1.0, 0.01, observe_every=100)
    rec = tebd.evolve_trajectories(state, model, plan, tebd.TrajectoryConfig(1000, rng_seed=7))
    psi = oracles.densify(state).vector
    rho_t = oracles.dense_lindblad_evolve(model, np.outer(psi, psi.conj()), np.array([1.0]))[-1]
    n_op = fock.number(3)
    ref = np.array([np.trace(oracles.site_operator(model, n_op, i).toarray() @ rho_t).real for i in range(3)])
    mean = rec.series("number_density")[-1]
    z = np.abs(mean - ref) / rec.standard_error("number_density")[-1]
    elapsed = time.perf_counter() - t0
    ok = bool(np.all(z <= 3.0)) and elapsed <= 300
    verdict("C13 trajectories vs Lindblad", ok, f"z-scores {np.round(z, 2).tolist()}, {len(rec.jumps)} jumps, t={elapsed:.0f}s")


def test_c14_replay_byte_identical(tmp_path, verdict):
    cfg = {
        "experiment": "kerr-soliton",
        "model": {"n_bins": 8, "local_dim": 4, "n_photons": 2.0, "x0": 1.5},
        "plan": {"total_time": 0.5, "dt": 0.05, "observe_every": 2, "max_bond_dim": 16},
    }
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg))
    first, second = tmp_path / "first", tmp_path / "second"
    codes = [cli.main(["run", str(path), "--output-dir", str(first)])]
    codes.append(cli.main(["replay", str(first / "manifest.json"), "--output-dir", str(second)]))
    outputs = json.loads((first / "manifest.json").read_text())["outputs"]
    identical = all((first / k).read_bytes() == (second / k).read_bytes() for k in outputs)
    ok = codes == [0, 0] and identical and len(outputs) >= 3
    verdict("C14 replay", ok, f"exit codes {codes}, {len(outputs)} artifacts byte-identical={identical}")
