"""Time-evolving block decimation driver with quantum-trajectory loss.

Observables are recorded only after complete Trotter steps. Lossy dynamics are
unraveled with a first-order jump scheme: after each Hamiltonian step the
no-jump propagator exp(-kappa n dt / 2) is applied on every site, the lost norm
is the jump probability, and at most one jump (chosen with weights <n_i>) is
applied per step. The scheme is refused for kappa * dt > 0.1.

Trajectory ``i`` draws from ``numpy.random.SeedSequence(seed, spawn_key=(i,))``,
the same stream ``SeedSequence(seed).spawn(n)[i]`` would give, so adding
trajectories never perturbs existing ones and results do not depend on the
number of worker processes.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from . import models as _models
from .exceptions import SimulationError, TruncationBudgetExceeded
from .models import LatticeModel
from .mps import LocalOperator, MpsState, TruncationPolicy, correlation, reduced_density_matrix

log = logging.getLogger(__name__)

MAX_KAPPA_DT = 0.1


@dataclass(frozen=True)
class EvolutionPlan:
    total_time: float
    dt: float
    trotter_order: int = 2
    policy: TruncationPolicy = field(default_factory=TruncationPolicy)
    observe_every: int = 1
    record_entropy: bool = False
    correlators: tuple[tuple[int, int], ...] = ()
    rdm_sites: tuple[int, ...] = ()
    max_discarded_weight: float = 1e-3

    def __post_init__(self) -> None:
        if not (self.total_time > 0 and self.dt > 0):
            raise ValueError(f"need total_time > 0 and dt > 0, got T={self.total_time}, dt={self.dt}")
        ratio = self.total_time / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"T/dt = {ratio!r} is not an integer within 1e-9")
        if self.trotter_order not in (1, 2):
            raise ValueError(f"trotter_order must be 1 or 2, got {self.trotter_order}")
        if self.observe_every < 1:
            raise ValueError("observe_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.total_time / self.dt)))


@dataclass(frozen=True)
class TrajectoryConfig:
    n_trajectories: int = 100
    rng_seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class EvolutionRecord:
    """Time series produced by :func:`evolve` or :func:`evolve_trajectories`.

    For ensembles, ``observables`` holds trajectory means, ``variances`` the
    per-point sample variances and ``jumps`` the (trajectory, site, time) log.
    """

    times: list[float] = field(default_factory=list)
    observables: dict[str, list[NDArray]] = field(default_factory=dict)
    discarded: list[float] = field(default_factory=list)
    max_bond: list[int] = field(default_factory=list)
    jumps: list[tuple[int, int, float]] = field(default_factory=list)
    variances: dict[str, list[NDArray]] = field(default_factory=dict)
    n_trajectories: int = 1

    def append(self, t: float, snap: dict[str, NDArray]) -> None:
        if self.times and t < self.times[-1]:
            raise ValueError("record times must be monotone")
        self.times.append(t)
        for k, v in snap.items():
            self.observables.setdefault(k, []).append(v)

    def series(self, name: str) -> NDArray:
        return np.array(self.observables[name])

    def standard_error(self, name: str) -> NDArray:
        return np.sqrt(np.array(self.variances[name]) / self.n_trajectories)


def observe(state: MpsState, plan: EvolutionPlan, model: LatticeModel | None = None) -> dict[str, NDArray]:
    """Read out the observables requested by ``plan``; ``state`` is not modified.

    Densities are normalized by the state norm.
    """
    norm2 = state.norm_squared()
    snap: dict[str, NDArray] = {"norm": np.array(norm2)}
    rhos = state.site_density_matrices()
    ops = model.local_annihilators() if model is not None else [_default_annihilator(state.local_dim)]
    names = ["number_density", "pump_density"]
    total = 0.0
    weights = model.number_weights() if model is not None else [1.0]
    for name, a, w in zip(names, ops, weights):
        n_op = a.conj().T @ a
        dens = np.array([float(np.real(np.trace(r @ n_op))) for r in rhos]) / norm2
        snap[name] = dens
        total += w * float(dens.sum())
    snap["total_number"] = np.array(total)
    snap["max_bond"] = np.array(state.max_bond_dim)
    if plan.record_entropy:
        snap["entropy"] = np.array(state.entropy_profile())
    for i, j in plan.correlators:
        snap[f"corr_{i}_{j}"] = np.array(correlation(state, i, j) / norm2)
    for s in plan.rdm_sites:
        snap[f"rdm_{s}"] = reduced_density_matrix(state, s) / norm2
    return snap


def _default_annihilator(d: int) -> NDArray:
    from .fock import annihilation

    return annihilation(d)


def _check_compatible(state: MpsState, model: LatticeModel) -> None:
    if state.local_dim != model.site_dim:
        raise ValueError(f"state local_dim {state.local_dim} != model site dimension {model.site_dim}")
    if state.n_sites != model.n_bins:
        raise ValueError(f"state has {state.n_sites} sites, model has {model.n_bins} bins")


def _damping_operator(model: LatticeModel, dt: float) -> LocalOperator:
    n_tot = sum(a.conj().T @ a for a in model.local_annihilators())
    return LocalOperator(np.diag(np.exp(-0.5 * model.kappa * dt * np.real(np.diag(n_tot)))))


def _run(
    state: MpsState,
    model: LatticeModel,
    plan: EvolutionPlan,
    rng: np.random.Generator | None,
    traj_index: int = 0,
) -> tuple[MpsState, EvolutionRecord]:
    _check_compatible(state, model)
    psi = state.copy()
    if psi.ortho_center is None:
        psi.canonicalize(0)
    layers = _models.trotter_layers(model, plan.dt, plan.trotter_order)
    lossy = rng is not None and model.kappa > 0
    rec = EvolutionRecord()
    rec.append(0.0, observe(psi, plan, model))
    rec.discarded.append(0.0)
    rec.max_bond.append(psi.max_bond_dim)
    budget_start = psi.cumulative_discarded_weight
    try:
        _steps(psi, model, plan, layers, rng if lossy else None, rec, traj_index, budget_start)
    except SimulationError as exc:
        exc.partial_record = rec  # lets callers keep the artifacts produced so far
        raise
    return psi, rec


def _steps(psi, model, plan, layers, rng, rec, traj_index, budget_start) -> None:
    if rng is not None:
        damp = _damping_operator(model, plan.dt)
        jump_ops = [LocalOperator(a) for a in model.local_annihilators()]
    for step in range(1, plan.n_steps + 1):
        t = step * plan.dt
        w = _models.apply_layers(psi, layers, plan.policy)
        if rng is not None:
            _loss_step(psi, damp, jump_ops, rng, rec, traj_index, t)
        norm2 = psi.norm_squared()
        if not math.isfinite(norm2):
            raise SimulationError(f"non-finite norm at t={t}")
        spent = psi.cumulative_discarded_weight - budget_start
        if spent > plan.max_discarded_weight:
            raise TruncationBudgetExceeded(
                f"cumulative discarded weight {spent:.3e} exceeds limit {plan.max_discarded_weight:.3e} "
                f"at t={t:.6g} (step {step}, max bond {psi.max_bond_dim}, chi_max {plan.policy.max_bond_dim})"
            )
        rec.discarded.append(w)
        rec.max_bond.append(psi.max_bond_dim)
        if step % plan.observe_every == 0 or step == plan.n_steps:
            rec.append(t, observe(psi, plan, model))


def _loss_step(psi, damp, jump_ops, rng, rec, traj_index, t) -> None:
    for s in range(psi.n_sites):
        psi.apply_one_site(damp, s)
    p_jump = max(0.0, 1.0 - psi.norm_squared())
    if rng.random() < p_jump:
        weights = []
        rhos = psi.site_density_matrices()
        for a in jump_ops:
            n_op = a.matrix.conj().T @ a.matrix
            weights.extend(float(np.real(np.trace(r @ n_op))) for r in rhos)
        weights = np.clip(np.array(weights), 0.0, None)
        if weights.sum() > 0:
            k = int(rng.choice(weights.size, p=weights / weights.sum()))
            species, site = divmod(k, psi.n_sites)
            psi.apply_one_site(jump_ops[species], site)
            rec.jumps.append((traj_index, site, t))
    psi.normalize()


def evolve(state: MpsState, model: LatticeModel, plan: EvolutionPlan) -> tuple[MpsState, EvolutionRecord]:
    """Deterministic TEBD evolution (loss ignored); the input state is not modified."""
    return _run(state, model, plan, rng=None)


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _one_trajectory(args) -> tuple[EvolutionRecord, MpsState]:
    state, model, plan, seed, index = args
    psi, rec = _run(state, model, plan, trajectory_rng(seed, index), index)
    return rec, psi


def evolve_trajectories(
    state: MpsState,
    model: LatticeModel,
    plan: EvolutionPlan,
    tconf: TrajectoryConfig,
) -> EvolutionRecord:
    """Ensemble of quantum trajectories; returns means and sample variances.

    With ``kappa = 0`` every trajectory is the deterministic evolution, which
    is returned unchanged (bit-identical to :func:`evolve`) with zero variance.
    """
    _check_compatible(state, model)
    if model.kappa * plan.dt > MAX_KAPPA_DT:
        raise ValueError(
            f"kappa*dt = {model.kappa * plan.dt:.3g} > {MAX_KAPPA_DT}: first-order unraveling invalid"
        )
    if model.kappa == 0:
        _, rec = evolve(state, model, plan)
        rec.variances = {k: [np.zeros_like(v) for v in vs] for k, vs in rec.observables.items()}
        rec.n_trajectories = tconf.n_trajectories
        return rec

    jobs = [(state, model, plan, tconf.rng_seed, i) for i in range(tconf.n_trajectories)]
    if tconf.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=tconf.workers) as pool:
            results = list(pool.map(_one_trajectory, jobs, chunksize=max(1, len(jobs) // (4 * tconf.workers))))
    else:
        results = [_one_trajectory(j) for j in jobs]

    records = [r for r, _ in results]
    out = EvolutionRecord(times=list(records[0].times), n_trajectories=len(records))
    for name in records[0].observables:
        stack = np.array([r.observables[name] for r in records])
        out.observables[name] = list(stack.mean(axis=0))
        ddof = 1 if len(records) > 1 else 0
        out.variances[name] = list(stack.var(axis=0, ddof=ddof))
    out.discarded = list(np.mean([r.discarded for r in records], axis=0))
    out.max_bond = list(np.max([r.max_bond for r in records], axis=0))
    for r in records:
        out.jumps.extend(r.jumps)
    return out


# -- serialization ---------------------------------------------------------------


def record_columns(rec: EvolutionRecord) -> tuple[list[str], list[list[float]]]:
    """Flatten scalar and vector real observables into named columns."""
    names = ["time"]
    cols: list[list[float]] = [list(rec.times)]
    for key in sorted(rec.observables):
        arr = np.array(rec.observables[key])
        if np.iscomplexobj(arr) and key.startswith("corr_"):
            names += [f"{key}_re", f"{key}_im"]
            cols += [list(arr.real.astype(float)), list(arr.imag.astype(float))]
            continue
        if np.iscomplexobj(arr):
            continue  # density matrices are exported separately
        if arr.ndim == 1:
            names.append(key)
            cols.append(list(arr.astype(float)))
        elif arr.ndim == 2:
            for j in range(arr.shape[1]):
                names.append(f"{key}_{j}")
                cols.append(list(arr[:, j].astype(float)))
        if key in rec.variances:
            var = np.array(rec.variances[key])
            if var.ndim == 1:
                names.append(f"{key}_var")
                cols.append(list(var.astype(float)))
            elif var.ndim == 2:
                for j in range(var.shape[1]):
                    names.append(f"{key}_{j}_var")
                    cols.append(list(var[:, j].astype(float)))
    return names, cols


def format_float(x: float) -> str:
    """Shortest round-trip representation."""
    return repr(float(x))


def write_columns(path: str | Path, names: list[str], cols: list[list[float]], header: str) -> None:
    lines = [f"# {header}", "\t".join(names)]
    for row in zip(*cols):
        lines.append("\t".join(format_float(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_columns(path: str | Path) -> tuple[str, dict[str, NDArray]]:
    lines = Path(path).read_text().splitlines()
    header = lines[0][2:] if lines[0].startswith("# ") else ""
    names = lines[1].split("\t")
    data = np.array([[float(x) for x in ln.split("\t")] for ln in lines[2:]]) if len(lines) > 2 else np.zeros((0, len(names)))
    return header, {n: data[:, i] for i, n in enumerate(names)}


def write_record(rec: EvolutionRecord, path: str | Path, manifest_hash: str) -> None:
    names, cols = record_columns(rec)
    write_columns(path, names, cols, f"manifest_sha256={manifest_hash} kind=evolution n_trajectories={rec.n_trajectories}")


def write_jump_log(rec: EvolutionRecord, path: str | Path, manifest_hash: str) -> None:
    cols = [[j[0] for j in rec.jumps], [j[1] for j in rec.jumps], [j[2] for j in rec.jumps]]
    lines = [f"# manifest_sha256={manifest_hash} kind=jumps", "trajectory\tsite\ttime"]
    lines += [f"{a}\t{b}\t{format_float(c)}" for a, b, c in zip(*cols)]
    Path(path).write_text("\n".join(lines) + "\n")


def record_digest(rec: EvolutionRecord) -> str:
    names, cols = record_columns(rec)
    h = hashlib.sha256("\t".join(names).encode())
    for c in cols:
        h.update(np.asarray(c, dtype=float).tobytes())
    return h.hexdigest()
