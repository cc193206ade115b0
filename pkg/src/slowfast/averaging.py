"""Averaged slow drift, the averaged slow equation, and its oracles.

The averaged drift at slow state x is the stationary expectation of the
slow Nemytskii drift against the law of the frozen fast field:
Fbar(t, x) = E_mu^x [ analyze(b(t, x(.), y(.))) ].  It is estimated by
nested frozen-fast simulation; for the linear benchmark (b = lam,
g = a_c*rho - b_c*sigma) the stationary law is Gaussian with mean
a_c x_k / (alpha_{2,k} + b_c), which gives a closed-form oracle.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, StateExplosionError
from .fast_dynamics import FrozenFastConfig, estimate_invariant_average
from .model import ModelSpec
from .noise import RngStream, make_plan, ou_step
from .reactions import eval_V, nemytskii_drift
from .spectral import analyze, as_modal_field, synthesize

__all__ = [
    "AveragedDriftParams",
    "AveragedState",
    "FbarEstimator",
    "estimate_Fbar",
    "analytic_Fbar_linear",
    "averaged_mean_rates",
    "step_averaged",
    "simulate_averaged",
    "AveragedTrajectory",
    "estimate_Vbar",
]


@dataclass(frozen=True)
class AveragedDriftParams:
    """Nested-estimation controls for the averaged drift."""

    h_fast: float
    t_burn: float
    t_avg: float
    n_replicas: int = 4
    cache_quantum: float = 1e-3   # slow-state rounding for drift caching
    theta: float = 0.0            # truncation applied to b inside the estimator
    x_norm_bound: float = 1e3

    def __post_init__(self):
        if self.h_fast <= 0 or self.t_avg <= 0:
            raise InvalidParameterError("h_fast and t_avg must be positive")
        if self.cache_quantum <= 0:
            raise InvalidParameterError("cache_quantum must be positive")


@dataclass(frozen=True)
class AveragedState:
    u: np.ndarray
    t: float


class FbarEstimator:
    """Nested Monte Carlo estimator of the averaged drift with caching.

    Estimates are deterministic in the quantized slow state: the nested
    stream is derived from (master_seed, hash of the quantized state), so a
    cache hit and a recomputation return bit-identical values.
    """

    def __init__(self, model: ModelSpec, params: AveragedDriftParams,
                 master_seed: int = 0):
        self.model = model
        self.params = params
        self.master_seed = master_seed
        self.cache: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}

    def _key(self, x: np.ndarray) -> tuple:
        q = self.params.cache_quantum
        return tuple(int(round(c / q)) for c in x)

    def _nested_seed_id(self, key: tuple) -> int:
        digest = hashlib.blake2b(repr(key).encode(), digest_size=4).digest()
        return int.from_bytes(digest, "big")

    def estimate(self, t: float, x) -> tuple[np.ndarray, np.ndarray]:
        model = self.model
        x = as_modal_field(x, model.n_modes)
        x_norm = float(np.linalg.norm(x))
        if x_norm > self.params.x_norm_bound:
            raise StateExplosionError(t, x_norm, 0.0, self.params.x_norm_bound)
        key = self._key(x)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        x_quantized = np.array(key, dtype=float) * self.params.cache_quantum
        x_phys = synthesize(x_quantized, model.grid)
        theta = self.params.theta if self.params.theta > 0 else None

        def drift_observable(v_phys):
            return analyze(
                nemytskii_drift(model.reaction_slow, theta, t, x_phys, v_phys,
                                model.grid),
                model.grid)

        cfg = FrozenFastConfig(
            x=x_quantized, op2=model.op2, reaction_fast=model.reaction_fast,
            grid=model.grid, h=self.params.h_fast, t_burn=self.params.t_burn,
            t_avg=self.params.t_avg, n_replicas=self.params.n_replicas,
        )
        est = estimate_invariant_average(
            cfg, drift_observable,
            master_seed=self.master_seed + self._nested_seed_id(key),
        )
        result = (np.asarray(est.mean, dtype=float),
                  np.asarray(est.std_error, dtype=float))
        self.cache[key] = result
        return result


def estimate_Fbar(t: float, x, params: AveragedDriftParams, model: ModelSpec,
                  master_seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """One-shot averaged-drift estimate (mean field, std-error field)."""
    return FbarEstimator(model, params, master_seed).estimate(t, x)


def analytic_Fbar_linear(model: ModelSpec, t: float, x) -> np.ndarray:
    """Closed-form averaged drift a_c x_k / (alpha_{2,k} + b_c) for the
    linear benchmark."""
    if not model.is_linear_benchmark:
        raise InvalidParameterError(
            "analytic averaged drift requires linear_benchmark reactions")
    x = as_modal_field(x, model.n_modes)
    a_c = model.reaction_fast.param("a_c")
    b_c = model.reaction_fast.param("b_c")
    return a_c * x / (model.op2.alphas + b_c)


def averaged_mean_rates(model: ModelSpec) -> np.ndarray:
    """Per-mode mean-dynamics rates of the averaged equation for the linear
    benchmark: mu_k = -alpha_{1,k} + a_c/(alpha_{2,k} + b_c).  The noise has
    zero mean, so E<u_bar(T), e_k> = exp(mu_k T) u0_k exactly."""
    if not model.is_linear_benchmark:
        raise InvalidParameterError("mean rates require linear_benchmark reactions")
    a_c = model.reaction_fast.param("a_c")
    b_c = model.reaction_fast.param("b_c")
    return -model.op1.alphas + a_c / (model.op2.alphas + b_c)


@dataclass
class AveragedTrajectory:
    times: np.ndarray
    path: np.ndarray              # (n_nodes, N) slow coefficients
    drift_se_budget: float        # integral of the drift std-error norm


def step_averaged(state: AveragedState, model: ModelSpec, drift_fn, h: float,
                  stream: RngStream, plan=None) -> tuple[AveragedState, float]:
    """One exponential-Euler macro step of the averaged equation.

    drift_fn(t, u) -> (drift, std_error); returns the new state and the
    std-error norm contributed by this step's drift estimate.
    """
    if h <= 0:
        raise InvalidParameterError("h must be positive")
    if plan is None:
        plan = make_plan(model.op1, h, 1.0)
    drift, drift_se = drift_fn(state.t, state.u)
    u_next = ou_step(state.u, plan, drift, stream)
    return (AveragedState(u=u_next, t=state.t + h),
            float(np.linalg.norm(drift_se)))


def make_drift_fn(model: ModelSpec, params: AveragedDriftParams | None,
                  master_seed: int = 0, mode: str = "auto"):
    """Averaged-drift callable: analytic oracle for the linear benchmark,
    slow-only evaluation when b ignores the fast variable, nested estimator
    otherwise."""
    if mode == "auto":
        if model.is_linear_benchmark:
            mode = "oracle"
        elif not model.reaction_slow.depends_on_fast:
            mode = "slow_only"
        else:
            mode = "estimator"
    if mode == "oracle":
        zero = np.zeros(model.n_modes)

        def fn(t, u):
            return analytic_Fbar_linear(model, t, u), zero
        return fn
    if mode == "slow_only":
        zero = np.zeros(model.n_modes)
        zeros_phys = np.zeros(model.grid.n_quad)
        theta = model.theta if model.theta > 0 else None

        def fn(t, u):
            u_phys = synthesize(u, model.grid)
            drift = analyze(nemytskii_drift(model.reaction_slow, theta, t,
                                            u_phys, zeros_phys, model.grid),
                            model.grid)
            return drift, zero
        return fn
    if mode == "estimator":
        if params is None:
            raise InvalidParameterError("estimator drift mode requires params")
        estimator = FbarEstimator(model, params, master_seed)
        return estimator.estimate
    raise InvalidParameterError(f"unknown drift mode {mode!r}")


def simulate_averaged(model: ModelSpec, params: AveragedDriftParams | None,
                      u0, T: float, h: float, stream: RngStream,
                      drift_mode: str = "auto",
                      master_seed: int = 0) -> AveragedTrajectory:
    """Sample the averaged slow equation on the macro grid."""
    if T < 0:
        raise InvalidParameterError("T must be nonnegative")
    u0 = as_modal_field(u0, model.n_modes)
    n_steps = int(round(T / h)) if T > 0 else 0
    times = np.arange(n_steps + 1) * h
    path = np.empty((n_steps + 1, model.n_modes))
    path[0] = u0
    drift_fn = make_drift_fn(model, params, master_seed, drift_mode)
    plan = make_plan(model.op1, h, 1.0) if n_steps else None
    state = AveragedState(u=u0, t=0.0)
    budget = 0.0
    for i in range(n_steps):
        state, se = step_averaged(state, model, drift_fn, h, stream, plan)
        budget += h * se
        path[i + 1] = state.u
    return AveragedTrajectory(times=times, path=path, drift_se_budget=budget)


def estimate_Vbar(x, model: ModelSpec, params: AveragedDriftParams,
                  master_seed: int = 0) -> tuple[float, float]:
    """Stationary expectation of V(x, v) under the frozen fast dynamics."""
    x = as_modal_field(x, model.n_modes)
    x_phys = synthesize(x, model.grid)
    cfg = FrozenFastConfig(
        x=x, op2=model.op2, reaction_fast=model.reaction_fast, grid=model.grid,
        h=params.h_fast, t_burn=params.t_burn, t_avg=params.t_avg,
        n_replicas=params.n_replicas,
    )

    def v_observable(v_phys):
        return eval_V(x_phys, v_phys, model.lyapunov, model.grid)

    est = estimate_invariant_average(cfg, v_observable, master_seed)
    return float(est.mean), float(est.std_error)
