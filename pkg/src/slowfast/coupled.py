"""Coupled slow-fast simulation and the block-frozen auxiliary processes.

The slow field advances by one exponential-Euler macro step per h_macro;
the fast field takes n_sub = ceil(h_macro / (ratio * eps)) exact-OU substeps
per macro step, with the OU plan absorbing the 1/eps drift and 1/sqrt(eps)
noise scalings, so no step restriction comes from the scale separation.

The auxiliary pair (u_aux, v_aux) freezes the slow argument of the fast
drift on blocks of length delta and replays the identical fast noise
increments, which makes the comparison with the original path pathwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, StateExplosionError
from .model import ModelSpec
from .noise import derive_stream, make_plan
from .reactions import eval_V, eval_g, nemytskii_drift
from .spectral import analyze, synthesize

__all__ = [
    "SlowFastState",
    "SlowFastTrajectory",
    "KhasminskiiPlan",
    "khasminskii_delta",
    "compute_rho0",
    "step_coupled",
    "simulate_slowfast",
    "AuxiliaryResult",
    "build_auxiliary",
    "AuxiliaryErrorStats",
    "auxiliary_error_stats",
]


@dataclass(frozen=True)
class SlowFastState:
    u: np.ndarray
    v: np.ndarray
    t: float


@dataclass
class SlowFastTrajectory:
    """Path at the macro nodes plus recorded functionals and replay data."""

    times: np.ndarray             # (n_nodes,)
    u: np.ndarray                 # (n_nodes, N)
    v: np.ndarray                 # (n_nodes, N)
    v_integral: float             # left-endpoint integral of V(u, v) dt
    n_sub: int
    master_seed: int
    trajectory_id: int
    fast_noise: np.ndarray | None = None   # (n_steps, n_sub, N) recorded draws
    slow_drift: np.ndarray | None = None   # (n_steps, N) per-step averaged drift


@dataclass(frozen=True)
class KhasminskiiPlan:
    """Blocking of [0, T] into slices of length delta."""

    delta: float
    blocks: int
    c_const: float = 2.0

    def __post_init__(self):
        if self.delta <= 0:
            raise InvalidParameterError("delta must be positive")
        if self.blocks < 1:
            raise InvalidParameterError("blocks must be >= 1")


def khasminskii_delta(epsilon: float, lambda_exp: float, c_const: float) -> float:
    """Block-length schedule (2/c) * eps * |ln eps|^(lambda/2).

    Along any eps -> 0 sequence the block length shrinks while the number of
    fast relaxation times per block delta/eps grows.
    """
    if not 0 < epsilon < 1:
        raise InvalidParameterError(
            f"epsilon must be in (0,1) for the block schedule, got {epsilon}")
    if c_const <= 0:
        raise InvalidParameterError("c_const must be positive")
    return (2.0 / c_const) * epsilon * abs(math.log(epsilon)) ** (lambda_exp / 2.0)


def compute_rho0(s: float, t: float, beta: float, gamma1_star: float) -> float:
    """Increment modulus (ln(t/s))^2 + (t-s)^beta + (t-s)^(2*gamma1_star)."""
    if s <= 0:
        raise InvalidParameterError("s must be positive (log term diverges at 0)")
    if t < s:
        raise InvalidParameterError("need s <= t")
    dt = t - s
    return math.log(t / s) ** 2 + dt ** beta + dt ** (2.0 * gamma1_star)


def _plans(model: ModelSpec, h_macro: float):
    n_sub = max(1, math.ceil(h_macro / (model.substep_ratio * model.epsilon)))
    h_sub = h_macro / n_sub
    plan_slow = make_plan(model.op1, h_macro, 1.0)
    plan_fast = make_plan(model.op2, h_sub, model.epsilon)
    return n_sub, plan_slow, plan_fast


def step_coupled(state: SlowFastState, model: ModelSpec, h_macro: float,
                 slow_stream, fast_stream,
                 plans=None, frozen_drift_u=None,
                 noise_record: np.ndarray | None = None
                 ) -> tuple[SlowFastState, np.ndarray]:
    """Advance the pair (u, v) by one macro step.

    The fast field takes n_sub exact-OU substeps with its drift g(u, v)/eps
    frozen per substep and u held at the macro-step start (or at
    frozen_drift_u for the block-frozen auxiliary process).  The slow drift
    b_theta(t, u, .) is averaged along the fast substep path (trapezoid over
    the substep nodes): the fast field crosses its relaxation layer inside a
    single macro step, and sampling it at the left endpoint alone would turn
    that O(eps) layer into an O(h_macro) bias of the slow motion.

    Returns the new state and the averaged modal slow drift used for the
    step (the integrand of the drift functionals).  noise_record exposes
    the fast draws for pathwise replay.
    """
    if h_macro <= 0:
        raise InvalidParameterError("h_macro must be positive")
    if plans is None:
        plans = _plans(model, h_macro)
    n_sub, plan_slow, plan_fast = plans
    grid = model.grid
    n = grid.n_modes

    u_phys = synthesize(state.u, grid)
    theta = model.theta if model.theta > 0 else None
    drift_u_phys = u_phys if frozen_drift_u is None else frozen_drift_u

    v = state.v
    # Trapezoid weights over substep nodes j = 0..n_sub.
    w_end = 0.5 / n_sub
    w_mid = 1.0 / n_sub
    f1_phys = w_end * nemytskii_drift(model.reaction_slow, theta, state.t,
                                      u_phys, synthesize(v, grid), grid)
    for j in range(n_sub):
        v_phys = synthesize(v, grid)
        forcing = analyze(eval_g(model.reaction_fast, 0.0, grid.nodes,
                                 drift_u_phys, v_phys), grid)
        xi = fast_stream.normals(n)
        if noise_record is not None:
            noise_record[j] = xi
        v = plan_fast.decay * v + plan_fast.drift_weight * forcing \
            + plan_fast.noise_std * xi
        weight = w_end if j == n_sub - 1 else w_mid
        f1_phys = f1_phys + weight * nemytskii_drift(
            model.reaction_slow, theta, state.t, u_phys,
            synthesize(v, grid), grid)

    f1 = analyze(f1_phys, grid)
    u_next = (plan_slow.decay * state.u + plan_slow.drift_weight * f1
              + plan_slow.noise_std * slow_stream.normals(n))

    norm_u = float(np.linalg.norm(u_next))
    norm_v = float(np.linalg.norm(v))
    if norm_u + norm_v > model.explosion_bound:
        raise StateExplosionError(state.t + h_macro, norm_u, norm_v,
                                  model.explosion_bound)
    return SlowFastState(u=u_next, v=v, t=state.t + h_macro), f1


def simulate_slowfast(model: ModelSpec, master_seed: int, trajectory_id: int,
                      record_noise: bool = False,
                      record_drift: bool = False,
                      h_macro: float | None = None) -> SlowFastTrajectory:
    """Run one trajectory over [0, horizon], recording the path at macro nodes
    and the running integral of the audit functional V."""
    h = h_macro if h_macro is not None else model.h_macro
    # A horizon shorter than one macro step yields the initial state only.
    n_steps = int(round(model.horizon / h))
    plans = _plans(model, h)
    n_sub = plans[0]
    slow_stream = derive_stream(master_seed, trajectory_id, "slow_noise")
    fast_stream = derive_stream(master_seed, trajectory_id, "fast_noise")

    n = model.n_modes
    times = np.arange(n_steps + 1) * h
    u_path = np.empty((n_steps + 1, n))
    v_path = np.empty((n_steps + 1, n))
    u_path[0] = model.u0
    v_path[0] = model.v0
    noise = np.empty((n_steps, n_sub, n)) if record_noise else None
    drifts = np.empty((n_steps, n)) if record_drift else None

    state = SlowFastState(u=model.u0.copy(), v=model.v0.copy(), t=0.0)
    v_int = 0.0
    comp = 0.0
    for i in range(n_steps):
        value = h * eval_V(synthesize(state.u, model.grid),
                           synthesize(state.v, model.grid),
                           model.lyapunov, model.grid)
        y = value - comp
        tot = v_int + y
        comp = (tot - v_int) - y
        v_int = tot
        state, f1 = step_coupled(
            state, model, h, slow_stream, fast_stream, plans=plans,
            noise_record=noise[i] if noise is not None else None)
        if drifts is not None:
            drifts[i] = f1
        u_path[i + 1] = state.u
        v_path[i + 1] = state.v
    return SlowFastTrajectory(
        times=times, u=u_path, v=v_path, v_integral=v_int, n_sub=n_sub,
        master_seed=master_seed, trajectory_id=trajectory_id, fast_noise=noise,
        slow_drift=drifts,
    )


@dataclass
class AuxiliaryResult:
    times: np.ndarray
    u_aux: np.ndarray             # piecewise-constant slow path at macro nodes
    v_aux: np.ndarray
    delta_snapped: float
    steps_per_block: int


def build_auxiliary(traj: SlowFastTrajectory, plan: KhasminskiiPlan,
                    model: ModelSpec) -> AuxiliaryResult:
    """Re-simulate the fast path with the slow drift argument frozen at the
    last block boundary, driven by the identical fast noise increments.

    The block length is snapped to a whole number of macro steps; each block
    restarts from the true fast state at its left endpoint.
    """
    if traj.fast_noise is None:
        raise InvalidParameterError(
            "trajectory was recorded without fast noise; rerun with record_noise=True")
    n_steps = traj.times.size - 1
    h = float(traj.times[1] - traj.times[0])
    steps_per_block = max(1, int(round(plan.delta / h)))
    delta_snapped = steps_per_block * h
    n_sub, _, plan_fast = _plans(model, h)
    if n_sub != traj.n_sub:
        raise InvalidParameterError(
            "substep layout mismatch: trajectory is not replayable under this model")

    grid = model.grid
    u_aux = np.empty_like(traj.u)
    v_aux = np.empty_like(traj.v)
    u_aux[0] = traj.u[0]
    v_aux[0] = traj.v[0]
    for i in range(n_steps):
        block_start = (i // steps_per_block) * steps_per_block
        u_frozen_phys = synthesize(traj.u[block_start], grid)
        if i == block_start:
            v = traj.v[block_start].copy()
        for j in range(n_sub):
            v_phys = synthesize(v, grid)
            forcing = analyze(eval_g(model.reaction_fast, 0.0, grid.nodes,
                                     u_frozen_phys, v_phys), grid)
            v = plan_fast.decay * v + plan_fast.drift_weight * forcing \
                + plan_fast.noise_std * traj.fast_noise[i, j]
        u_aux[i + 1] = traj.u[block_start]
        v_aux[i + 1] = v
    # Node 0 of each block holds the snapshot value itself.
    for i in range(n_steps + 1):
        block_start = min((i // steps_per_block) * steps_per_block, n_steps)
        u_aux[i] = traj.u[block_start]
    return AuxiliaryResult(times=traj.times.copy(), u_aux=u_aux, v_aux=v_aux,
                           delta_snapped=delta_snapped,
                           steps_per_block=steps_per_block)


@dataclass(frozen=True)
class AuxiliaryErrorStats:
    sup_slow_increment_msq: float
    sup_slow_increment_se: float
    fast_deviation_msq: float     # ensemble mean of the L2(0,T) squared deviation
    fast_deviation_se: float
    n: int


def auxiliary_error_stats(trajs: list[SlowFastTrajectory],
                          auxes: list[AuxiliaryResult]) -> AuxiliaryErrorStats:
    """Ensemble statistics of the block-freezing errors."""
    if len(trajs) != len(auxes) or not trajs:
        raise InvalidParameterError("need matched, nonempty trajectory lists")
    n_nodes = trajs[0].times.size
    h = float(trajs[0].times[1] - trajs[0].times[0])
    slow_sq = np.empty((len(trajs), n_nodes))
    fast_dev = np.empty(len(trajs))
    for m, (traj, aux) in enumerate(zip(trajs, auxes)):
        if traj.times.shape != aux.times.shape:
            raise InvalidParameterError("trajectory/auxiliary grids mismatch")
        slow_sq[m] = np.sum((traj.u - aux.u_aux) ** 2, axis=1)
        fast_dev[m] = h * float(np.sum((traj.v - aux.v_aux) ** 2))
    node_means = slow_sq.mean(axis=0)
    worst = int(np.argmax(node_means))
    n = len(trajs)
    slow_se = slow_sq[:, worst].std(ddof=1) / math.sqrt(n) if n > 1 else 0.0
    fast_se = fast_dev.std(ddof=1) / math.sqrt(n) if n > 1 else 0.0
    return AuxiliaryErrorStats(
        sup_slow_increment_msq=float(node_means[worst]),
        sup_slow_increment_se=float(slow_se),
        fast_deviation_msq=float(fast_dev.mean()),
        fast_deviation_se=float(fast_se),
        n=n,
    )
