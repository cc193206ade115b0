"""Experiment orchestration: ensembles, acceptance-grade statistics, CSV.

Determinism contract: every statistic is a fixed-order reduction (compensated
summation) over per-trajectory results whose streams depend only on
(master_seed, trajectory_id, role).  Worker processes only evaluate
trajectories; reductions happen in the parent in trajectory order, so any
worker count produces bit-identical outputs.

Censoring: trajectories that trip the explosion guard are excluded from the
statistics and counted; every row reports n + censored_count.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .averaging import (AveragedDriftParams, FbarEstimator, averaged_mean_rates,
                        make_drift_fn, simulate_averaged)
from .config import ExperimentConfig, config_hash
from .coupled import (KhasminskiiPlan, SlowFastTrajectory, build_auxiliary,
                      compute_rho0, khasminskii_delta, simulate_slowfast)
from .errors import InvalidParameterError, StateExplosionError
from .fast_dynamics import FrozenFastConfig, _run_replica
from .model import ModelSpec
from .noise import derive_stream, make_plan
from .reactions import nemytskii_drift
from .spectral import analyze, lp_norm, synthesize

__all__ = [
    "ResultRow",
    "ResultTable",
    "run_parallel",
    "run_convergence_study",
    "run_moment_audit",
    "run_holder_stats",
    "run_theta_stability",
    "run_khasminskii_study",
    "pooled_invariant_rows",
    "pooled_fbar_estimate",
    "simulate_ensemble",
    "emit_results",
    "write_csv",
]


# ---------------------------------------------------------------------------
# result table


@dataclass(frozen=True)
class ResultRow:
    experiment_id: str
    epsilon: float | None
    statistic_id: str
    value: float
    std_error: float
    n: int
    censored_count: int


@dataclass
class ResultTable:
    rows: list

    def by_stat(self, experiment_id: str, statistic_id: str) -> list:
        return [r for r in self.rows
                if r.experiment_id == experiment_id
                and r.statistic_id == statistic_id]

    def value(self, experiment_id: str, epsilon, statistic_id: str) -> ResultRow:
        for r in self.rows:
            if (r.experiment_id == experiment_id and r.statistic_id == statistic_id
                    and (epsilon is None or r.epsilon == epsilon)):
                return r
        raise KeyError((experiment_id, epsilon, statistic_id))

    @property
    def max_censored_fraction(self) -> float:
        worst = 0.0
        for r in self.rows:
            total = r.n + r.censored_count
            if total > 0:
                worst = max(worst, r.censored_count / total)
        return worst


def _mean_se(values) -> tuple[float, float]:
    """Fixed-order compensated mean and standard error."""
    vals = [float(v) for v in values]
    n = len(vals)
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(vals) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in vals) / (n - 1)
    return mean, math.sqrt(var / n)


def kahan_mean_vectors(arrays) -> np.ndarray:
    total = np.zeros_like(arrays[0])
    comp = np.zeros_like(arrays[0])
    for arr in arrays:
        y = arr - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total / len(arrays)


# ---------------------------------------------------------------------------
# parallel ensemble execution


def run_parallel(fn, tasks, worker_count: int):
    """Map a module-level function over picklable tasks, preserving order."""
    if worker_count <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * worker_count))
    with ProcessPoolExecutor(max_workers=worker_count) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


# ---------------------------------------------------------------------------
# per-trajectory workers (module level: must be picklable)


@dataclass(frozen=True)
class _TrajTask:
    model: ModelSpec
    master_seed: int
    trajectory_id: int
    test_functions: tuple = ()
    fbar_mode: str = "none"
    averaging: AveragedDriftParams | None = None
    dump_modes: int = 0
    record_noise: bool = False
    delta: float | None = None
    thetas: tuple = ()


def _fbar_callable(task: _TrajTask):
    if task.fbar_mode == "none":
        return None
    fn = make_drift_fn(task.model, task.averaging, task.master_seed,
                       mode=task.fbar_mode)
    return lambda t, u: fn(t, u)[0]


def _discrepancy_sups(traj: SlowFastTrajectory, model: ModelSpec,
                      test_functions, fbar_fn) -> list[float]:
    """sup_t |int_0^t <F1(s,u,v) - Fbar(s,u), xi(s)> ds| per test function.

    Uses the recorded per-step slow-drift integrand (averaged along the fast
    substep path) so the quadrature resolves the fast relaxation layer; the
    averaged drift is evaluated at the macro nodes where u moves O(h)."""
    h = float(traj.times[1] - traj.times[0])
    n = model.n_modes
    sums = [0.0] * len(test_functions)
    comps = [0.0] * len(test_functions)
    sups = [0.0] * len(test_functions)
    xi_cache = [tf.values(0.0, n) for tf in test_functions]
    for i in range(traj.times.size - 1):
        t = float(traj.times[i])
        delta_f = traj.slow_drift[i] - fbar_fn(t, traj.u[i])
        for j, tf in enumerate(test_functions):
            xi = tf.values(t, n) if tf.time_power else xi_cache[j]
            y = h * float(np.dot(delta_f, xi)) - comps[j]
            tot = sums[j] + y
            comps[j] = (tot - sums[j]) - y
            sums[j] = tot
            sups[j] = max(sups[j], abs(sums[j]))
    return sups


def _converge_traj(task: _TrajTask) -> dict:
    try:
        traj = simulate_slowfast(task.model, task.master_seed,
                                 task.trajectory_id,
                                 record_drift=task.fbar_mode != "none")
    except StateExplosionError:
        return {"censored": True}
    fbar_fn = _fbar_callable(task)
    sups = (_discrepancy_sups(traj, task.model, task.test_functions, fbar_fn)
            if fbar_fn is not None else [])
    return {"censored": False, "terminal_u": traj.u[-1], "sups": sups}


def _audit_traj(task: _TrajTask) -> dict:
    model = task.model
    try:
        traj = simulate_slowfast(model, task.master_seed, task.trajectory_id)
    except StateExplosionError:
        return {"censored": True}
    grid = model.grid
    lyap = model.lyapunov
    h = float(traj.times[1] - traj.times[0])
    sup_u = 0.0
    sup_v = 0.0
    vbar_proxy = 0.0
    comp = 0.0
    q_bar = lyap.q_bar
    for i in range(traj.times.size):
        u_phys = synthesize(traj.u[i], grid)
        v_phys = synthesize(traj.v[i], grid)
        u_term = lp_norm(u_phys, grid, 4.0 * lyap.m1) ** (4.0 * lyap.m1)
        sup_u = max(sup_u, u_term)
        sup_v = max(sup_v, lp_norm(v_phys, grid, q_bar) ** q_bar)
        if i < traj.times.size - 1:
            y = h * lyap.c_V * (1.0 + u_term) - comp
            t = vbar_proxy + y
            comp = (t - vbar_proxy) - y
            vbar_proxy = t
    return {
        "censored": False,
        "v_integral": traj.v_integral,
        "sup_u": sup_u,
        "sup_v": sup_v,
        "vbar_proxy": vbar_proxy,
    }


_HOLDER_LAG_DEPTHS = (1, 2, 3, 4, 5)


def _holder_pairs(T: float, h: float):
    """Dyadic (s, t) pairs on the macro grid; s > 0 keeps the log term finite."""
    n_steps = int(round(T / h))
    pairs = []
    for depth in _HOLDER_LAG_DEPTHS:
        lag = n_steps >> depth
        if lag < 1:
            break
        for start in range(lag, n_steps - lag + 1, lag):
            pairs.append((start, start + lag))
    return sorted(set(pairs))


def _holder_traj(task: _TrajTask) -> dict:
    model = task.model
    try:
        traj = simulate_slowfast(model, task.master_seed, task.trajectory_id)
    except StateExplosionError:
        return {"censored": True}
    h = float(traj.times[1] - traj.times[0])
    pairs = _holder_pairs(model.horizon, h)
    msq = np.array([float(np.sum((traj.u[b] - traj.u[a]) ** 2))
                    for a, b in pairs])
    return {"censored": False, "msq": msq}


def _theta_traj(task: _TrajTask) -> dict:
    """Common-noise runs across the theta ladder for one trajectory id."""
    thetas = task.thetas
    paths = []
    v_ints = []
    for theta in thetas:
        model = task.model.with_theta(theta)
        try:
            traj = simulate_slowfast(model, task.master_seed, task.trajectory_id)
        except StateExplosionError:
            return {"censored": True}
        paths.append(traj.u)
        v_ints.append(traj.v_integral)
    dists = []
    for a, b in zip(paths, paths[1:]):
        dists.append(float(np.max(np.sqrt(np.sum((a - b) ** 2, axis=1)))))
    return {"censored": False, "dists": dists, "v_integrals": v_ints}


def _khasminskii_traj(task: _TrajTask) -> dict:
    model = task.model
    try:
        traj = simulate_slowfast(model, task.master_seed, task.trajectory_id,
                                 record_noise=True)
    except StateExplosionError:
        return {"censored": True}
    plan = KhasminskiiPlan(delta=task.delta, blocks=max(
        1, math.ceil(model.horizon / task.delta)))
    aux = build_auxiliary(traj, plan, model)
    h = float(traj.times[1] - traj.times[0])
    slow_sq = np.sum((traj.u - aux.u_aux) ** 2, axis=1)
    fast_dev = h * float(np.sum((traj.v - aux.v_aux) ** 2))
    return {"censored": False, "slow_sq": slow_sq, "fast_dev": fast_dev,
            "delta_snapped": aux.delta_snapped}


def _simulate_traj(task: _TrajTask) -> dict:
    model = task.model
    try:
        traj = simulate_slowfast(model, task.master_seed, task.trajectory_id)
    except StateExplosionError as exc:
        return {"censored": True, "t_explosion": exc.t}
    k = min(task.dump_modes, model.n_modes)
    return {
        "censored": False,
        "times": traj.times,
        "u_dump": traj.u[:, :k].copy(),
        "v_dump": traj.v[:, :k].copy(),
        "terminal_u": traj.u[-1],
        "v_integral": traj.v_integral,
        "sup_norm_u": float(np.max(np.sqrt(np.sum(traj.u ** 2, axis=1)))),
        "sup_norm_v": float(np.max(np.sqrt(np.sum(traj.v ** 2, axis=1)))),
    }


@dataclass(frozen=True)
class _InvariantReplicaTask:
    cfg: FrozenFastConfig
    master_seed: int
    replica: int
    observables: tuple = ()       # ObservableSpec applied to the modal field
    drift_model: ModelSpec | None = None
    drift_theta: float = 0.0


def _invariant_replica(task: _InvariantReplicaTask):
    cfg = task.cfg
    plan = make_plan(cfg.op2, cfg.h, 1.0)
    x_phys = synthesize(cfg.x, cfg.grid)
    if task.drift_model is not None:
        model = task.drift_model
        theta = task.drift_theta if task.drift_theta > 0 else None

        def observable(v_phys):
            return analyze(nemytskii_drift(model.reaction_slow, theta, 0.0,
                                           x_phys, v_phys, model.grid),
                           model.grid)
    else:
        specs = task.observables

        def observable(v_phys):
            v_modal = analyze(v_phys, cfg.grid)
            return np.array([spec(v_modal) for spec in specs])
    stream = derive_stream(task.master_seed, task.replica, "frozen_fast_noise")
    return _run_replica(cfg, observable, stream, plan, x_phys)


def _averaged_ref_traj(task: _TrajTask) -> np.ndarray:
    stream = derive_stream(task.master_seed, task.trajectory_id, "auxiliary")
    out = simulate_averaged(task.model, task.averaging, task.model.u0,
                            task.model.horizon, task.model.h_macro, stream,
                            drift_mode=task.fbar_mode,
                            master_seed=task.master_seed)
    return out.path[-1]


# ---------------------------------------------------------------------------
# experiments


def _resolve_fbar_mode(model: ModelSpec) -> str:
    if model.is_linear_benchmark:
        return "oracle"
    if not model.reaction_slow.depends_on_fast:
        return "slow_only"
    return "estimator"


def run_convergence_study(cfg: ExperimentConfig) -> ResultTable:
    """Weak errors against the averaged equation and the drift-discrepancy
    functional D(eps), per epsilon on the configured grid."""
    model0 = cfg.model
    fbar_mode = _resolve_fbar_mode(model0)
    rows: list[ResultRow] = []

    # Reference expectations for the terminal observables.
    ref: dict[str, tuple[float, float]] = {}
    if model0.is_linear_benchmark:
        rates = averaged_mean_rates(model0)
        needs_mc = any(ob.kind != "mode" for ob in cfg.observables)
        ref_terminals = None
        if needs_mc:
            tasks = [_TrajTask(model=model0, master_seed=cfg.master_seed,
                               trajectory_id=i, fbar_mode="oracle",
                               averaging=cfg.averaging)
                     for i in range(cfg.ensemble_size)]
            ref_terminals = run_parallel(_averaged_ref_traj, tasks,
                                         cfg.worker_count)
        for ob in cfg.observables:
            if ob.kind == "mode":
                value = float(np.exp(rates[ob.k - 1] * model0.horizon)
                              * model0.u0[ob.k - 1])
                ref[ob.label] = (value, 0.0)
            else:
                vals = [ob(u) for u in ref_terminals]
                ref[ob.label] = _mean_se(vals)
    else:
        eps_ref = cfg.epsilon_grid[-1] / cfg.reference_epsilon_divisor
        model_ref = model0.with_epsilon(eps_ref)
        tasks = [_TrajTask(model=model_ref, master_seed=cfg.master_seed,
                           trajectory_id=i)
                 for i in range(cfg.ensemble_size)]
        results = run_parallel(_converge_traj, tasks, cfg.worker_count)
        kept = [r for r in results if not r["censored"]]
        for ob in cfg.observables:
            ref[ob.label] = _mean_se([ob(r["terminal_u"]) for r in kept])

    for eps in cfg.epsilon_grid:
        model = model0.with_epsilon(eps)
        tasks = [_TrajTask(model=model, master_seed=cfg.master_seed,
                           trajectory_id=i, test_functions=cfg.test_functions,
                           fbar_mode=fbar_mode, averaging=cfg.averaging)
                 for i in range(cfg.ensemble_size)]
        results = run_parallel(_converge_traj, tasks, cfg.worker_count)
        kept = [r for r in results if not r["censored"]]
        censored = len(results) - len(kept)
        for ob in cfg.observables:
            mean, se = _mean_se([ob(r["terminal_u"]) for r in kept])
            ref_mean, ref_se = ref[ob.label]
            rows.append(ResultRow("converge", eps, f"mean[{ob.label}]",
                                  mean, se, len(kept), censored))
            rows.append(ResultRow(
                "converge", eps, f"weak_error[{ob.label}]",
                abs(mean - ref_mean), math.sqrt(se * se + ref_se * ref_se),
                len(kept), censored))
        for j, tf in enumerate(cfg.test_functions):
            mean, se = _mean_se([r["sups"][j] for r in kept])
            rows.append(ResultRow("converge", eps, f"D[{tf.label}]",
                                  mean, se, len(kept), censored))
    return ResultTable(rows)


_AUDIT_STATS = ("v_integral_ratio", "sup_u_L4m1", "sup_v_Lqbar",
                "vbar_proxy_integral")


def run_moment_audit(cfg: ExperimentConfig) -> ResultTable:
    """Uniform-in-epsilon moment statistics; the audit passes when each
    statistic's max/min ratio across the epsilon grid stays <= 3."""
    model0 = cfg.model
    grid = model0.grid
    v0_ref = eval_v0_reference(model0)
    rows: list[ResultRow] = []
    per_stat: dict[str, list[float]] = {s: [] for s in _AUDIT_STATS}
    for eps in cfg.epsilon_grid:
        model = model0.with_epsilon(eps)
        tasks = [_TrajTask(model=model, master_seed=cfg.master_seed,
                           trajectory_id=i)
                 for i in range(cfg.ensemble_size)]
        results = run_parallel(_audit_traj, tasks, cfg.worker_count)
        kept = [r for r in results if not r["censored"]]
        censored = len(results) - len(kept)
        stats = {
            "v_integral_ratio": [r["v_integral"] / v0_ref for r in kept],
            "sup_u_L4m1": [r["sup_u"] for r in kept],
            "sup_v_Lqbar": [r["sup_v"] for r in kept],
            "vbar_proxy_integral": [r["vbar_proxy"] for r in kept],
        }
        for stat_id, vals in stats.items():
            mean, se = _mean_se(vals)
            per_stat[stat_id].append(mean)
            rows.append(ResultRow("audit_moment", eps, stat_id, mean, se,
                                  len(kept), censored))
    for stat_id, means in per_stat.items():
        ratio = max(means) / min(means) if min(means) > 0 else math.inf
        rows.append(ResultRow("audit_moment", None, f"maxmin[{stat_id}]",
                              ratio, 0.0, len(means), 0))
    return ResultTable(rows)


def eval_v0_reference(model: ModelSpec) -> float:
    from .reactions import eval_V
    return eval_V(synthesize(model.u0, model.grid),
                  synthesize(model.v0, model.grid),
                  model.lyapunov, model.grid)


def run_holder_stats(cfg: ExperimentConfig) -> ResultTable:
    """Slow-increment moduli against the reference shape rho0(s,t); the
    calibration constant is fitted on the largest epsilon and must bound the
    smaller-epsilon increments with bounded headroom."""
    model0 = cfg.model
    h = model0.h_macro
    pairs = _holder_pairs(model0.horizon, h)
    rho = np.array([compute_rho0(a * h, b * h, model0.holder_beta,
                                 model0.gamma1_star) for a, b in pairs])
    rows: list[ResultRow] = []
    calibration = None
    for eps in cfg.epsilon_grid:
        model = model0.with_epsilon(eps)
        tasks = [_TrajTask(model=model, master_seed=cfg.master_seed,
                           trajectory_id=i)
                 for i in range(cfg.ensemble_size)]
        results = run_parallel(_holder_traj, tasks, cfg.worker_count)
        kept = [r for r in results if not r["censored"]]
        censored = len(results) - len(kept)
        msq = kahan_mean_vectors([r["msq"] for r in kept])
        for (a, b), value in zip(pairs, msq):
            rows.append(ResultRow(
                "audit_holder", eps, f"msq_increment[s={a * h:g},t={b * h:g}]",
                float(value), 0.0, len(kept), censored))
        ratios = msq / rho
        if calibration is None:
            calibration = float(np.max(ratios))
            rows.append(ResultRow("audit_holder", eps, "calibration",
                                  calibration, 0.0, len(kept), censored))
        else:
            headroom = float(np.max(ratios)) / calibration
            rows.append(ResultRow("audit_holder", eps, "headroom",
                                  headroom, 0.0, len(kept), censored))
    return ResultTable(rows)


def run_theta_stability(cfg: ExperimentConfig,
                        theta_sequence=None) -> ResultTable:
    """Common-noise distances across the truncation ladder plus the
    uniformity of the audit-functional integral."""
    thetas = tuple(theta_sequence if theta_sequence is not None
                   else cfg.theta_sequence)
    if len(thetas) < 2:
        raise InvalidParameterError("theta_sequence needs at least two levels")
    model = cfg.model
    tasks = [_TrajTask(model=model, master_seed=cfg.master_seed,
                       trajectory_id=i, thetas=thetas)
             for i in range(cfg.ensemble_size)]
    results = run_parallel(_theta_traj, tasks, cfg.worker_count)
    kept = [r for r in results if not r["censored"]]
    censored = len(results) - len(kept)
    rows: list[ResultRow] = []
    for j in range(len(thetas) - 1):
        mean, se = _mean_se([r["dists"][j] for r in kept])
        rows.append(ResultRow(
            "audit_theta", model.epsilon,
            f"distance[theta={thetas[j]:g}->{thetas[j + 1]:g}]",
            mean, se, len(kept), censored))
    v_means = []
    for j, theta in enumerate(thetas):
        mean, se = _mean_se([r["v_integrals"][j] for r in kept])
        v_means.append(mean)
        rows.append(ResultRow("audit_theta", model.epsilon,
                              f"v_integral[theta={theta:g}]", mean, se,
                              len(kept), censored))
    ratio = max(v_means) / min(v_means) if min(v_means) > 0 else math.inf
    rows.append(ResultRow("audit_theta", None, "maxmin[v_integral]",
                          ratio, 0.0, len(v_means), 0))
    return ResultTable(rows)


def run_khasminskii_study(cfg: ExperimentConfig) -> ResultTable:
    """Block-freezing errors under the schedule delta(eps), per epsilon."""
    model0 = cfg.model
    rows: list[ResultRow] = []
    for eps in cfg.epsilon_grid:
        model = model0.with_epsilon(eps)
        delta = khasminskii_delta(eps, model0.lambda_exp, cfg.c_const)
        tasks = [_TrajTask(model=model, master_seed=cfg.master_seed,
                           trajectory_id=i, delta=delta, record_noise=True)
                 for i in range(cfg.ensemble_size)]
        results = run_parallel(_khasminskii_traj, tasks, cfg.worker_count)
        kept = [r for r in results if not r["censored"]]
        censored = len(results) - len(kept)
        node_means = kahan_mean_vectors([r["slow_sq"] for r in kept])
        sup_mean = float(np.max(node_means))
        worst = int(np.argmax(node_means))
        slow_vals = [float(r["slow_sq"][worst]) for r in kept]
        _, slow_se = _mean_se(slow_vals)
        fast_mean, fast_se = _mean_se([r["fast_dev"] for r in kept])
        rows.append(ResultRow("khasminskii", eps, "delta", delta, 0.0,
                              len(kept), censored))
        rows.append(ResultRow("khasminskii", eps, "delta_snapped",
                              kept[0]["delta_snapped"], 0.0, len(kept), censored))
        rows.append(ResultRow("khasminskii", eps, "sup_slow_increment_msq",
                              sup_mean, slow_se, len(kept), censored))
        rows.append(ResultRow("khasminskii", eps, "fast_deviation_msq",
                              fast_mean, fast_se, len(kept), censored))
    return ResultTable(rows)


# ---------------------------------------------------------------------------
# invariant / averaged-drift entry points (replica-parallel)


def pooled_invariant_rows(cfg: ExperimentConfig) -> list[tuple]:
    """Stationary averages of the configured observables of the fast field
    frozen at u0; returns (observable_id, mean, std_error) triples."""
    model = cfg.model
    inv = cfg.invariant
    run = FrozenFastConfig(
        x=model.u0, op2=model.op2, reaction_fast=model.reaction_fast,
        grid=model.grid, h=inv.h, t_burn=inv.t_burn, t_avg=inv.t_avg,
        n_replicas=inv.n_replicas,
    )
    tasks = [_InvariantReplicaTask(cfg=run, master_seed=cfg.master_seed,
                                   replica=r, observables=cfg.observables)
             for r in range(inv.n_replicas)]
    per_replica = run_parallel(_invariant_replica, tasks, cfg.worker_count)
    stacked = np.stack([batch for batches in per_replica for batch in batches])
    mean = stacked.mean(axis=0)
    se = stacked.std(axis=0, ddof=1) / math.sqrt(stacked.shape[0])
    return [(ob.label, float(mean[i]), float(se[i]))
            for i, ob in enumerate(cfg.observables)]


def pooled_fbar_estimate(cfg: ExperimentConfig):
    """Averaged-drift estimate at x = u0 with per-mode standard errors and
    the analytic oracle where available."""
    model = cfg.model
    params = cfg.averaging
    estimator = FbarEstimator(model, params, cfg.master_seed)
    key = estimator._key(model.u0)
    seed = cfg.master_seed + estimator._nested_seed_id(key)
    x_quantized = np.array(key, dtype=float) * params.cache_quantum
    run = FrozenFastConfig(
        x=x_quantized, op2=model.op2, reaction_fast=model.reaction_fast,
        grid=model.grid, h=params.h_fast, t_burn=params.t_burn,
        t_avg=params.t_avg, n_replicas=params.n_replicas,
    )
    tasks = [_InvariantReplicaTask(cfg=run, master_seed=seed, replica=r,
                                   drift_model=model, drift_theta=params.theta)
             for r in range(params.n_replicas)]
    per_replica = run_parallel(_invariant_replica, tasks, cfg.worker_count)
    stacked = np.stack([batch for batches in per_replica for batch in batches])
    mean = stacked.mean(axis=0)
    se = stacked.std(axis=0, ddof=1) / math.sqrt(stacked.shape[0])
    analytic = None
    if model.is_linear_benchmark:
        from .averaging import analytic_Fbar_linear
        analytic = analytic_Fbar_linear(model, 0.0, model.u0)
    return mean, se, analytic


def simulate_ensemble(cfg: ExperimentConfig, epsilon: float | None = None):
    """Ensemble of coupled trajectories at one epsilon, with dump payloads."""
    model = cfg.model if epsilon is None else cfg.model.with_epsilon(epsilon)
    tasks = [_TrajTask(model=model, master_seed=cfg.master_seed,
                       trajectory_id=i, dump_modes=cfg.dump_modes)
             for i in range(cfg.ensemble_size)]
    return run_parallel(_simulate_traj, tasks, cfg.worker_count)


# ---------------------------------------------------------------------------
# CSV / metadata emission


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path, header, rows) -> None:
    """RFC-4180 CSV (CRLF, header row); floats use shortest-roundtrip repr."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def emit_results(table: ResultTable, out_dir, name: str,
                 cfg: ExperimentConfig) -> str:
    """Write a result table and its metadata sidecar; returns the CSV path."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{name}.csv")
    write_csv(csv_path,
              ["experiment_id", "epsilon", "statistic_id", "value",
               "std_error", "n", "censored_count"],
              [(r.experiment_id, r.epsilon, r.statistic_id, r.value,
                r.std_error, r.n, r.censored_count) for r in table.rows])
    meta = {
        "seed": cfg.master_seed,
        "version": __version__,
        "config_sha256": config_hash(cfg),
        "max_censored_fraction": table.max_censored_fraction,
    }
    with open(os.path.join(out_dir, f"{name}.meta.json"), "w",
              encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path
