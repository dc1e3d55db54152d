"""Config-driven command line front end.

    broadband-mps run config.yaml
    broadband-mps replay runs/x/manifest.json
    broadband-mps example-config kerr-soliton

A run writes into ``output_dir``:

* ``manifest.json``: resolved config, engine version, seed, the manifest hash
  and the sha256 of every data file,
* columnar ``.tsv`` data files whose first line is
  ``# manifest_sha256=<hash> kind=<kind> ...``,
* ``summary.json``: invariant checks (value, tolerance, ok),
* ``BREACHED``: present only when an invariant was breached.

The manifest hash covers the engine name, version and the resolved config
except ``output_dir``, so a replay into another directory produces
byte-identical files.

Exit codes: 0 success, 2 config/schema error, 3 invariant breach,
4 I/O failure, 5 replay mismatch or engine-version mismatch.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import tempfile
import warnings
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import __version__, checkpoint, demux, fano, fock, meanfield, models, oracles, phase_space, tebd
from .exceptions import CutoffError, SimulationError
from .mps import (
    CutoffWarning,
    TruncationPolicy,
    coherent_product_state,
    fidelity,
    from_dense,
    product_state,
    reduced_density_matrix,
)

log = logging.getLogger("broadband_mps")

ENGINE = "broadband-mps"
EXIT_OK, EXIT_SCHEMA, EXIT_BREACH, EXIT_IO, EXIT_REPLAY = 0, 2, 3, 4, 5


# -- schema --------------------------------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PlanConfig(_Strict):
    total_time: float = Field(10.0, gt=0)
    dt: float = Field(0.05, gt=0)
    trotter_order: Literal[1, 2] = 2
    max_bond_dim: int = Field(24, ge=1)
    svd_cutoff: float = Field(0.0, ge=0)
    renormalize_after_truncation: bool = True
    observe_every: int = Field(20, ge=1)
    max_discarded_weight: float = Field(1e-3, gt=0)
    record_entropy: bool = False

    def build(self, rdm_sites: tuple[int, ...] = ()) -> tebd.EvolutionPlan:
        policy = TruncationPolicy(self.max_bond_dim, self.svd_cutoff, self.renormalize_after_truncation)
        return tebd.EvolutionPlan(
            total_time=self.total_time,
            dt=self.dt,
            trotter_order=self.trotter_order,
            policy=policy,
            observe_every=self.observe_every,
            record_entropy=self.record_entropy,
            rdm_sites=rdm_sites,
            max_discarded_weight=self.max_discarded_weight,
        )


class TrajectoryOptions(_Strict):
    n_trajectories: int = Field(100, ge=1)
    workers: int = Field(1, ge=1)


class Tolerances(_Strict):
    number_drift_rate: float = Field(1e-6, gt=0)
    norm_drift: float = Field(1e-6, gt=0)


class KerrSolitonModel(_Strict):
    n_bins: int = Field(32, ge=2)
    dx: float = Field(1.0, gt=0)
    beta2: float = 1.0
    n_photons: float = Field(4.0, gt=0)
    x0: float = Field(4.0, gt=0)
    local_dim: int = Field(6, ge=2)
    kappa: float = Field(0.0, ge=0)
    g_kerr: float | None = None
    profile: Literal["lattice", "sech"] = "lattice"


class KerrSolitonConfig(_Strict):
    experiment: Literal["kerr-soliton"]
    seed: int = Field(0, ge=0, lt=2**64)
    output_dir: str = "runs/kerr-soliton"
    model: KerrSolitonModel = KerrSolitonModel()
    plan: PlanConfig = PlanConfig()
    trajectories: TrajectoryOptions = TrajectoryOptions()
    tolerances: Tolerances = Tolerances()
    write_checkpoint: bool = True


class Chi2Model(_Strict):
    n_bins: int = Field(8, ge=2)
    dx: float = Field(1.0, gt=0)
    signal_beta2: float = 1.0
    pump_beta2: float = 0.5
    epsilon: float = 0.5
    xi_mismatch: float = 0.0
    kappa: float = Field(0.0, ge=0)
    d_s: int = Field(3, ge=2)
    d_p: int = Field(3, ge=2)
    pump_alpha: float = 0.3
    pump_x0: float = Field(1.5, gt=0)


class Chi2Config(_Strict):
    experiment: Literal["chi2-lattice"]
    seed: int = Field(0, ge=0, lt=2**64)
    output_dir: str = "runs/chi2-lattice"
    model: Chi2Model = Chi2Model()
    plan: PlanConfig = PlanConfig(total_time=2.0, dt=0.02, observe_every=5, max_bond_dim=32)
    trajectories: TrajectoryOptions = TrajectoryOptions()
    tolerances: Tolerances = Tolerances()
    write_checkpoint: bool = True


class TauGrid(_Strict):
    start: float = Field(0.0, ge=0)
    stop: float = Field(10.0, gt=0)
    points: int = Field(201, ge=2)


class FanoSweepConfig(_Strict):
    experiment: Literal["fano-sweep"]
    seed: int = Field(0, ge=0, lt=2**64)
    output_dir: str = "runs/fano-sweep"
    xi: list[float] = Field(default_factory=lambda: [-10.0, 0.0, 1.9, 10.0], min_length=1)
    tau: TauGrid = TauGrid()
    variant: Literal["squared", "printed"] = "squared"
    find_depletion: bool = False


class WignerOptions(_Strict):
    extent: float = Field(5.0, gt=0)
    points: int = Field(101, ge=3)


class DemuxModel(_Strict):
    n_bins: int = Field(4, ge=2)
    dx: float = Field(1.0, gt=0)
    beta2: float = 1.0
    g_kerr: float = -1.0
    local_dim: int = Field(14, ge=2)
    amplitudes: list[float] = Field(default_factory=lambda: [0.6, 1.2, 1.2, 0.6])


class DemuxWignerConfig(_Strict):
    experiment: Literal["demux-wigner"]
    seed: int = Field(0, ge=0, lt=2**64)
    output_dir: str = "runs/demux-wigner"
    model: DemuxModel = DemuxModel()
    plan: PlanConfig = PlanConfig(total_time=0.5, dt=0.01, observe_every=10, max_bond_dim=64)
    supermode: Union[Literal["mean-field"], list[float]] = "mean-field"
    target_site: int = Field(0, ge=0)
    wigner: WignerOptions = WignerOptions()
    leakage_limit: float = Field(1e-3, gt=0)


OracleCheckName = Literal["tebd-krylov", "gaussian-moments", "fano-schrodinger", "lindblad-trajectories", "wigner-fock"]


class OracleCheckConfig(_Strict):
    experiment: Literal["oracle-check"]
    seed: int = Field(7, ge=0, lt=2**64)
    output_dir: str = "runs/oracle-check"
    checks: list[OracleCheckName] = Field(
        default_factory=lambda: ["tebd-krylov", "gaussian-moments", "fano-schrodinger", "lindblad-trajectories", "wigner-fock"]
    )
    n_trajectories: int = Field(200, ge=2)
    fano_points: int = Field(1500, ge=100)


RunConfig = Annotated[
    Union[KerrSolitonConfig, Chi2Config, FanoSweepConfig, DemuxWignerConfig, OracleCheckConfig],
    Field(discriminator="experiment"),
]


class _Envelope(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: RunConfig


def parse_config(data: dict) -> BaseModel:
    """Validate a config mapping (raises pydantic.ValidationError)."""
    return _Envelope(config=data).config


KINDS = {
    "kerr-soliton": KerrSolitonConfig,
    "chi2-lattice": Chi2Config,
    "fano-sweep": FanoSweepConfig,
    "demux-wigner": DemuxWignerConfig,
    "oracle-check": OracleCheckConfig,
}


def example_config(kind: str) -> str:
    cfg = KINDS[kind](experiment=kind)
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)


# -- hashing and output helpers --------------------------------------------------------------------


def manifest_hash(config: BaseModel) -> str:
    body = config.model_dump(mode="json")
    body.pop("output_dir", None)
    blob = json.dumps({"engine": ENGINE, "version": __version__, "config": body}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def file_sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Breach(Exception):
    """Raised inside an experiment when an invariant check fails."""


class RunContext:
    def __init__(self, config: BaseModel, out: Path) -> None:
        self.config = config
        self.out = out
        self.hash = manifest_hash(config)
        self.outputs: list[str] = []
        self.invariants: dict[str, dict] = {}
        self.extra: dict[str, object] = {}

    def header(self, kind: str, **fields) -> str:
        extra = "".join(f" {k}={v}" for k, v in fields.items())
        return f"manifest_sha256={self.hash} kind={kind}{extra}"

    def register(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def check(self, name: str, value: float, tolerance: float, ok: bool | None = None) -> bool:
        ok = bool(value <= tolerance) if ok is None else bool(ok)
        self.invariants[name] = {"value": float(value), "tolerance": float(tolerance), "ok": ok}
        return ok


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- experiments ------------------------------------------------------------------------------------


def _drift_checks(ctx: RunContext, rec: tebd.EvolutionRecord, tol: Tolerances, conserved: bool, label: str) -> None:
    times = np.array(rec.times)
    norm = rec.series("norm")
    ctx.check("norm_drift", float(np.max(np.abs(norm - norm[0]))), tol.norm_drift)
    if conserved:
        total = rec.series("total_number")
        span = max(times[-1] - times[0], 1e-300)
        ctx.check(f"{label}_drift_rate", float(abs(total[-1] - total[0]) / span), tol.number_drift_rate)


def _evolution_outputs(ctx: RunContext, rec, final_state, extra_cols=(), write_checkpoint=True) -> None:
    names, cols = tebd.record_columns(rec)
    for n, c in extra_cols:
        names.append(n)
        cols.append(list(c))
    tebd.write_columns(ctx.register("evolution.tsv"), names, cols, ctx.header("evolution", n_trajectories=rec.n_trajectories))
    if rec.jumps:
        tebd.write_jump_log(rec, ctx.register("jumps.tsv"), ctx.hash)
    if write_checkpoint and final_state is not None:
        checkpoint.save(final_state, ctx.register("final_state.mps"))
    ctx.extra["cumulative_discarded_weight"] = float(np.sum(rec.discarded))
    ctx.extra["max_bond"] = int(max(rec.max_bond))


def _run_evolution(ctx, state, model, plan, traj: TrajectoryOptions, seed: int):
    """Deterministic run for kappa = 0, trajectory ensemble otherwise. Returns (record, final state or None)."""
    try:
        if model.kappa == 0:
            final, rec = tebd.evolve(state, model, plan)
            return rec, final
        tconf = tebd.TrajectoryConfig(traj.n_trajectories, seed, traj.workers)
        return tebd.evolve_trajectories(state, model, plan, tconf), None
    except SimulationError as exc:
        partial = getattr(exc, "partial_record", None)
        if partial is not None and partial.times:
            names, cols = tebd.record_columns(partial)
            tebd.write_columns(ctx.register("evolution.partial.tsv"), names, cols, ctx.header("evolution-partial"))
        raise


def run_kerr_soliton(ctx: RunContext) -> None:
    cfg: KerrSolitonConfig = ctx.config
    m = cfg.model
    g = m.g_kerr if m.g_kerr is not None else models.classical_soliton_coupling(m.n_photons, m.x0, m.beta2, m.dx)
    model = models.KerrWaveguideModel(m.n_bins, m.dx, m.beta2, g, m.kappa, m.local_dim)
    alpha = models.sech_amplitudes(m.n_bins, m.dx, m.n_photons, m.x0)
    if m.profile == "lattice":
        alpha = meanfield.stationary_soliton(model, alpha)
    state = coherent_product_state(alpha, m.local_dim)
    plan = cfg.plan.build()
    rec, final = _run_evolution(ctx, state, model, plan, cfg.trajectories, cfg.seed)
    x = models.bin_positions(m.n_bins, m.dx)
    widths = [meanfield.rms_width(d, x) for d in rec.series("number_density")]
    classical = meanfield.split_step(model, alpha, plan.total_time, plan.dt, plan.observe_every)
    cl_widths = [meanfield.rms_width(d, x) for d in classical.densities]
    _evolution_outputs(ctx, rec, final, [("rms_width", widths), ("classical_rms_width", cl_widths)], cfg.write_checkpoint)
    ctx.extra["g_kerr"] = g
    ctx.extra["width_ratio"] = widths[-1] / widths[0]
    ctx.extra["classical_width_ratio"] = cl_widths[-1] / cl_widths[0]
    _drift_checks(ctx, rec, cfg.tolerances, conserved=m.kappa == 0, label="number")
    ctx.check("discarded_weight", ctx.extra["cumulative_discarded_weight"], plan.max_discarded_weight)


def run_chi2(ctx: RunContext) -> None:
    cfg: Chi2Config = ctx.config
    m = cfg.model
    model = models.Chi2WaveguideModel(
        m.n_bins, m.dx, m.signal_beta2, m.pump_beta2, m.epsilon, m.xi_mismatch, m.kappa, m.d_s, m.d_p
    )
    x = models.bin_positions(m.n_bins, m.dx)
    pump = m.pump_alpha / np.cosh(x / m.pump_x0)
    vecs = []
    for i, b in enumerate(pump):
        tail = fock.coherent_tail_weight(b, m.d_p)
        if tail > 1e-2:
            raise CutoffError(f"bin {i}: pump amplitude {b:.4g} loses weight {tail:.3g} at d_p={m.d_p}")
        vecs.append(np.kron(fock.fock_vector(0, m.d_s), fock.coherent_vector(b, m.d_p)))
    state = product_state(vecs)
    plan = cfg.plan.build()
    rec, final = _run_evolution(ctx, state, model, plan, cfg.trajectories, cfg.seed)
    _evolution_outputs(ctx, rec, final, write_checkpoint=cfg.write_checkpoint)
    _drift_checks(ctx, rec, cfg.tolerances, conserved=m.kappa == 0, label="manley_rowe")
    ctx.check("discarded_weight", ctx.extra["cumulative_discarded_weight"], plan.max_discarded_weight)


def run_fano_sweep(ctx: RunContext) -> None:
    cfg: FanoSweepConfig = ctx.config
    tau = np.linspace(cfg.tau.start, cfg.tau.stop, cfg.tau.points)
    xi_col, tau_col, nb_col, err_col = [], [], [], []
    bound = [[], [], []]
    worst_norm, worst_err, worst_bound = 0.0, 0.0, 0.0
    for xi in cfg.xi:
        params = fano.FanoParams.from_xi(xi, cfg.variant)
        traj = fano.pump_trajectory(params, tau)
        xi_col += [xi] * tau.size
        tau_col += list(tau)
        nb_col += list(traj.n_b)
        err_col += list(traj.error)
        bound[0].append(xi)
        bound[1].append(params.lambda_M)
        bound[2].append(params.bound_weight)
        worst_norm = max(worst_norm, params.normalization_residual())
        worst_err = max(worst_err, float(traj.error.max()))
        worst_bound = max(worst_bound, float(max(traj.n_b.max() - 1.0, -traj.n_b.min(), 0.0)))
    tebd.write_columns(
        ctx.register("fano_sweep.tsv"), ["xi", "tau", "n_b", "err"], [xi_col, tau_col, nb_col, err_col],
        ctx.header("fano-sweep", variant=cfg.variant),
    )
    tebd.write_columns(ctx.register("bound_states.tsv"), ["xi", "lambda_M", "Z"], bound, ctx.header("bound-states"))
    if cfg.find_depletion:
        dp = fano.find_depletion_point(cfg.variant)
        tebd.write_columns(
            ctx.register("depletion.tsv"), ["xi_f", "tau_f", "n_b"], [[dp.xi], [dp.tau], [dp.n_b]], ctx.header("depletion")
        )
    ctx.check("normalization_residual", worst_norm, 1e-8)
    ctx.check("quadrature_error", worst_err, fano.QUAD_TOL)
    ctx.check("population_bounds_excess", worst_bound, 1e-6)


def run_demux_wigner(ctx: RunContext) -> None:
    cfg: DemuxWignerConfig = ctx.config
    m = cfg.model
    if len(m.amplitudes) != m.n_bins:
        raise ValueError(f"model.amplitudes has {len(m.amplitudes)} entries for {m.n_bins} bins")
    if cfg.target_site >= m.n_bins:
        raise ValueError(f"target_site {cfg.target_site} outside {m.n_bins} bins")
    model = models.KerrWaveguideModel(m.n_bins, m.dx, m.beta2, m.g_kerr, 0.0, m.local_dim)
    state = coherent_product_state(np.array(m.amplitudes, dtype=complex), m.local_dim)
    plan = cfg.plan.build()
    rec, final = _run_evolution(ctx, state, model, plan, TrajectoryOptions(), cfg.seed)
    _evolution_outputs(ctx, rec, None, write_checkpoint=False)
    if cfg.supermode == "mean-field":
        mode = demux.mean_field_supermode(final)
    else:
        if len(cfg.supermode) != m.n_bins:
            raise ValueError("supermode length must equal n_bins")
        mode = demux.Supermode.normalized(cfg.supermode)
    cascade = demux.givens_cascade(mode, cfg.target_site)
    ctx.register("cascade.tsv").write_text(f"# {ctx.header('cascade')}\n" + cascade.to_text())
    result = demux.apply_cascade(final, cascade, leakage_limit=cfg.leakage_limit)
    rho = reduced_density_matrix(result.state, cfg.target_site)
    rho = 0.5 * (rho + rho.conj().T)
    axes = phase_space.default_axes(cfg.wigner.extent, cfg.wigner.points)
    grid = phase_space.wigner(rho, *axes)
    grid.save(ctx.out / "wigner", header=ctx.header("wigner", site=cfg.target_site))
    ctx.outputs += ["wigner.tsv", "wigner.wig"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", phase_space.SupportWarning)
        report = phase_space.negativity_report(rho, grid)
    ctx.extra.update(
        negativity_volume=report.negativity_volume,
        wigner_min=report.min_value,
        purity=report.purity,
        leakage=result.leakage,
        mode_occupation=float(np.real(np.trace(rho @ fock.number(rho.shape[0])))),
    )
    ctx.check("leakage", result.leakage, cfg.leakage_limit)
    ctx.check("wigner_trace_error", grid.trace_error, 1e-3)
    ctx.check("wigner_boundary", grid.boundary_max(), 1e-4)


def _check_tebd_krylov() -> tuple[float, float, bool]:
    model = models.KerrWaveguideModel(4, 1.0, 1.0, -0.7, 0.0, 4)
    state = coherent_product_state([0.5, 0.8j, 0.3, 0.1], 4)
    plan = tebd.EvolutionPlan(1.0, 1e-3, 2, TruncationPolicy(64), observe_every=1000)
    final, _ = tebd.evolve(state, model, plan)
    ref = oracles.exact_evolve(model, oracles.densify(state), 1.0)
    f = fidelity(final, from_dense(ref.vector, 4, 4))
    return 1.0 - f, 1e-8, 1.0 - f <= 1e-8


def _check_gaussian() -> tuple[float, float, bool]:
    # weak amplitudes keep the Fock-cutoff error of the lattice below the tolerance
    model = models.KerrWaveguideModel(4, 1.0, 1.0, 0.0, 0.0, 8)
    state = coherent_product_state([0.1, 0.3, 0.2j, 0.1], 8)
    plan = tebd.EvolutionPlan(1.0, 1e-3, 2, TruncationPolicy(64), observe_every=1000)
    final, _ = tebd.evolve(state, model, plan)
    ref = oracles.gaussian_moments_evolve(model, oracles.moments_from_mps(state, model), 1.0)
    got = oracles.moments_from_mps(final, model)
    dev = max(
        float(np.max(np.abs(got.means[0] - ref.means[0]))),
        float(np.max(np.abs(got.normal[0] - ref.normal[0]))),
    )
    return dev, 1e-8, dev <= 1e-8


def _check_fano(points: int) -> tuple[float, float, bool]:
    disc = fano.ContinuumDiscretization(n_points=points)
    orc = fano.schrodinger_oracle(1.9, disc, 10.0, 0.1)
    ana = fano.pump_trajectory(fano.FanoParams.from_xi(1.9), orc.tau)
    dev = float(np.max(np.abs(orc.n_b - ana.n_b)))
    return dev, 1e-2, dev <= 1e-2


def _check_lindblad(n_traj: int, seed: int) -> tuple[float, float, bool]:
    model = models.KerrWaveguideModel(3, 1.0, 1.0, -0.5, 0.5, 3)
    amps = [0.6, 0.3j, 0.1]
    state = coherent_product_state(amps, 3)
    plan = tebd.EvolutionPlan(1.0, 0.01, 2, TruncationPolicy(64), observe_every=100)
    rec = tebd.evolve_trajectories(state, model, plan, tebd.TrajectoryConfig(n_traj, seed))
    psi = oracles.densify(state).vector
    rho = oracles.dense_lindblad_evolve(model, np.outer(psi, psi.conj()), [1.0])[0]
    ref = np.array(
        [np.real(np.trace(rho @ oracles.site_operator(model, fock.number(3), i).toarray())) for i in range(3)]
    )
    mean = rec.series("number_density")[-1]
    se = rec.standard_error("number_density")[-1]
    z = float(np.max(np.abs(mean - ref) / np.maximum(se, 1e-15)))
    return z, 3.0, z <= 3.0


def _check_wigner() -> tuple[float, float, bool]:
    rho = np.zeros((4, 4), dtype=complex)
    rho[1, 1] = 1.0
    axes = phase_space.default_axes(6.0, 121)
    neg = phase_space.negativity_volume(phase_space.wigner(rho, *axes))
    dev = abs(neg - 2.0 * (2.0 * math.exp(-0.5) - 1.0))
    return dev, 1e-3, dev <= 1e-3


def run_oracle_check(ctx: RunContext) -> None:
    cfg: OracleCheckConfig = ctx.config
    table = {
        "tebd-krylov": ("one_minus_fidelity", _check_tebd_krylov),
        "gaussian-moments": ("max_moment_deviation", _check_gaussian),
        "fano-schrodinger": ("max_population_deviation", lambda: _check_fano(cfg.fano_points)),
        "lindblad-trajectories": ("max_abs_z_score", lambda: _check_lindblad(cfg.n_trajectories, cfg.seed)),
        "wigner-fock": ("negativity_deviation", _check_wigner),
    }
    rows = []
    for name in cfg.checks:
        metric, fn = table[name]
        value, tol, ok = fn()
        rows.append((name, metric, value, tol, ok))
        ctx.check(name, value, tol, ok)
        log.info("%-22s %-26s %.3e <= %.1e  %s", name, metric, value, tol, "PASS" if ok else "FAIL")
    lines = [f"# {ctx.header('oracle-check')}", "check\tmetric\tvalue\ttolerance\tstatus"]
    lines += [f"{n}\t{mt}\t{tebd.format_float(v)}\t{tebd.format_float(t)}\t{'PASS' if ok else 'FAIL'}" for n, mt, v, t, ok in rows]
    ctx.register("oracle_check.tsv").write_text("\n".join(lines) + "\n")
    for n, _, _, _, ok in rows:
        print(f"{n}: {'PASS' if ok else 'FAIL'}")


RUNNERS = {
    "kerr-soliton": run_kerr_soliton,
    "chi2-lattice": run_chi2,
    "fano-sweep": run_fano_sweep,
    "demux-wigner": run_demux_wigner,
    "oracle-check": run_oracle_check,
}


# -- run / replay ----------------------------------------------------------------------------------


def execute(config: BaseModel, out: Path) -> int:
    """Run a validated config into ``out``; returns the exit code."""
    try:
        out.mkdir(parents=True, exist_ok=True)
        for stale in ("BREACHED",):
            (out / stale).unlink(missing_ok=True)
    except OSError as exc:
        log.error("cannot prepare output directory %s: %s", out, exc)
        return EXIT_IO
    ctx = RunContext(config, out)
    breach_msg = None
    code = EXIT_OK
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CutoffWarning)
            RUNNERS[config.experiment](ctx)
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO
    except ValueError as exc:  # includes CutoffError: the config asks for something unrepresentable
        log.error("invalid configuration: %s", exc)
        return EXIT_SCHEMA
    except SimulationError as exc:
        breach_msg = f"{type(exc).__name__}: {exc}"
    failed = [k for k, v in ctx.invariants.items() if not v["ok"]]
    if breach_msg is None and failed:
        breach_msg = "invariant checks failed: " + ", ".join(failed)
    try:
        summary = {
            "manifest_sha256": ctx.hash,
            "experiment": config.experiment,
            "invariants": ctx.invariants,
            "metrics": ctx.extra,
            "breached": breach_msg is not None,
            "breach": breach_msg,
        }
        _write_json(ctx.register("summary.json"), summary)
        if breach_msg is not None:
            (out / "BREACHED").write_text(breach_msg + "\n")
            log.error("BREACHED: %s", breach_msg)
            code = EXIT_BREACH
        manifest = {
            "engine": ENGINE,
            "version": __version__,
            "experiment": config.experiment,
            "seed": config.seed,
            "config": config.model_dump(mode="json"),
            "manifest_sha256": ctx.hash,
            "outputs": {name: file_sha256(out / name) for name in ctx.outputs},
        }
        _write_json(out / "manifest.json", manifest)
    except OSError as exc:
        log.error("I/O failure writing artifacts: %s", exc)
        return EXIT_IO
    return code


def load_config(path: Path) -> BaseModel:
    data = yaml.safe_load(path.read_text())
    if not isinstance(data, dict):
        raise ValueError("config must be a mapping")
    return parse_config(data)


def cmd_run(args) -> int:
    path = Path(args.config)
    try:
        config = load_config(path)
    except OSError as exc:
        log.error("cannot read config %s: %s", path, exc)
        return EXIT_IO
    except (yaml.YAMLError, ValidationError, ValueError) as exc:
        log.error("config %s rejected:\n%s", path, exc)
        return EXIT_SCHEMA
    out = Path(args.output_dir) if args.output_dir else Path(config.output_dir)
    if not out.is_absolute() and not args.output_dir:
        out = path.parent / out
    return execute(config, out)


def _first_divergence(a: Path, b: Path) -> str:
    if not a.exists():
        return f"original {a} not available; content hash differs"
    la, lb = a.read_bytes().splitlines(), b.read_bytes().splitlines()
    for i, (x, y) in enumerate(zip(la, lb)):
        if x != y:
            return f"line {i + 1}: {x[:120]!r} != {y[:120]!r}"
    return f"length differs: {len(la)} vs {len(lb)} lines"


def cmd_replay(args) -> int:
    path = Path(args.manifest)
    try:
        manifest = json.loads(path.read_text())
    except OSError as exc:
        log.error("cannot read manifest %s: %s", path, exc)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        log.error("manifest %s is not valid JSON: %s", path, exc)
        return EXIT_SCHEMA
    if manifest.get("engine") != ENGINE or manifest.get("version") != __version__:
        log.error(
            "manifest was produced by %s %s; this is %s %s. Replay refuses to compare across engine versions.",
            manifest.get("engine"), manifest.get("version"), ENGINE, __version__,
        )
        return EXIT_REPLAY
    try:
        config = parse_config(manifest["config"])
    except (KeyError, ValidationError) as exc:
        log.error("manifest config rejected:\n%s", exc)
        return EXIT_SCHEMA
    if manifest_hash(config) != manifest.get("manifest_sha256"):
        log.error(
            "divergence: manifest config hashes to %s but records %s (config, seed or version edited)",
            manifest_hash(config), manifest.get("manifest_sha256"),
        )
        return EXIT_REPLAY
    with tempfile.TemporaryDirectory(prefix="bbmps-replay-") as tmp:
        out = Path(args.output_dir) if args.output_dir else Path(tmp)
        code = execute(config, out)
        if code not in (EXIT_OK, EXIT_BREACH):
            return code
        expected: dict = manifest.get("outputs", {})
        produced = json.loads((out / "manifest.json").read_text())["outputs"]
        for name in sorted(set(expected) | set(produced)):
            if expected.get(name) != produced.get(name):
                if name not in produced or name not in expected:
                    log.error("divergence: output %s present in only one run", name)
                else:
                    log.error("divergence in %s: %s", name, _first_divergence(path.parent / name, out / name))
                return EXIT_REPLAY
    print(f"replay OK: {len(expected)} outputs byte-identical")
    return EXIT_OK


def cmd_example(args) -> int:
    sys.stdout.write(example_config(args.kind))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="broadband-mps", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment from a YAML config")
    r.add_argument("config")
    r.add_argument("--output-dir", help="override the config's output_dir")
    r.set_defaults(func=cmd_run)
    rp = sub.add_parser("replay", help="re-run a manifest and verify byte-identical outputs")
    rp.add_argument("manifest")
    rp.add_argument("--output-dir", help="keep the replay outputs here instead of a temporary directory")
    rp.set_defaults(func=cmd_replay)
    ex = sub.add_parser("example-config", help="print the default config for an experiment kind")
    ex.add_argument("kind", choices=sorted(KINDS))
    ex.set_defaults(func=cmd_example)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_SCHEMA if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
