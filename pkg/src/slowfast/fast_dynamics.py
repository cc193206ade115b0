"""Frozen-fast simulation, ergodic time averaging and mixing diagnostics.

With the slow state frozen at x, the fast field solves
dv = [A2 v + g(x, v)] dt + Q2 dW.  Under the dissipativity gap
omega = alpha_{2,1} - L2 > 0 this chain mixes exponentially and has a
unique stationary law; its integrals are estimated here by time averages
over replica ensembles with batch-means standard errors.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .noise import OUStepPlan, RngStream, derive_stream, make_plan
from .reactions import ReactionSpec, eval_g, validate_dissipativity
from .spectral import GridSpec, SpectralOperator, analyze, as_modal_field, synthesize

__all__ = [
    "FrozenFastConfig",
    "InvariantAverageEstimate",
    "step_frozen_fast",
    "estimate_invariant_average",
    "MomentCheckRow",
    "invariant_moment_check",
    "contraction_diagnostic",
    "frozen_lipschitz_in_x",
]

N_BATCHES = 20  # batch-means blocks per replica


@dataclass(frozen=True)
class FrozenFastConfig:
    """Frozen slow state plus micro-integration and averaging horizons."""

    x: np.ndarray
    op2: SpectralOperator
    reaction_fast: ReactionSpec
    grid: GridSpec
    h: float
    t_burn: float
    t_avg: float
    n_replicas: int = 1

    def __post_init__(self):
        if self.h <= 0 or self.t_avg <= 0:
            raise InvalidParameterError("h and t_avg must be positive")
        if self.t_burn < 0:
            raise InvalidParameterError("t_burn must be nonnegative")
        if self.n_replicas < 1:
            raise InvalidParameterError("n_replicas must be >= 1")
        object.__setattr__(self, "x", as_modal_field(self.x, self.grid.n_modes))
        omega = validate_dissipativity(float(self.op2.alphas[0]),
                                       self.reaction_fast.L2)
        if self.t_burn < 5.0 / omega:
            warnings.warn(
                f"t_burn={self.t_burn:g} is below the recommended floor "
                f"5/omega={5.0 / omega:g}; stationary averages may be biased",
                stacklevel=2,
            )

    @property
    def omega(self) -> float:
        return float(self.op2.alphas[0]) - self.reaction_fast.L2


@dataclass(frozen=True)
class InvariantAverageEstimate:
    """Ergodic time average of an observable with batch-means standard error."""

    mean: float | np.ndarray
    std_error: float | np.ndarray
    n_effective: int
    t_burn: float
    t_avg: float
    n_replicas: int


def step_frozen_fast(v: np.ndarray, cfg: FrozenFastConfig, stream: RngStream,
                     plan: OUStepPlan | None = None,
                     x_phys: np.ndarray | None = None) -> np.ndarray:
    """One exponential-Euler step: linear part and noise exact, g frozen."""
    if plan is None:
        plan = make_plan(cfg.op2, cfg.h, 1.0)
    if x_phys is None:
        x_phys = synthesize(cfg.x, cfg.grid)
    v = as_modal_field(v, cfg.grid.n_modes)
    v_phys = synthesize(v, cfg.grid)
    forcing = analyze(eval_g(cfg.reaction_fast, 0.0, cfg.grid.nodes, x_phys, v_phys),
                      cfg.grid)
    return (plan.decay * v + plan.drift_weight * forcing
            + plan.noise_std * stream.normals(cfg.grid.n_modes))


def _run_replica(cfg: FrozenFastConfig, observable, stream: RngStream,
                 plan: OUStepPlan, x_phys: np.ndarray):
    """Burn in, then return the per-batch time averages of the observable."""
    n_burn = int(round(cfg.t_burn / cfg.h))
    n_avg = N_BATCHES * max(1, int(math.ceil(cfg.t_avg / (N_BATCHES * cfg.h))))
    batch_len = n_avg // N_BATCHES

    v = np.zeros(cfg.grid.n_modes)
    for _ in range(n_burn):
        v = step_frozen_fast(v, cfg, stream, plan, x_phys)

    batches = []
    acc = None
    comp = None
    for i in range(n_avg):
        v = step_frozen_fast(v, cfg, stream, plan, x_phys)
        value = observable(synthesize(v, cfg.grid))
        value = np.asarray(value, dtype=float)
        if acc is None:
            acc = np.zeros_like(value)
            comp = np.zeros_like(value)
        # Kahan accumulation keeps batch sums independent of vectorization.
        y = value - comp
        t = acc + y
        comp = (t - acc) - y
        acc = t
        if (i + 1) % batch_len == 0:
            batches.append(acc / batch_len)
            acc = np.zeros_like(acc)
            comp = np.zeros_like(comp)
    return batches


def estimate_invariant_average(cfg: FrozenFastConfig, observable,
                               master_seed: int = 0,
                               role: str = "frozen_fast_noise"
                               ) -> InvariantAverageEstimate:
    """Time average of observable(v_phys) over [t_burn, t_burn + t_avg].

    The observable may return a scalar or an array; replicas use independent
    streams derived from (master_seed, replica, role).  The standard error
    comes from the spread of the per-batch means and shrinks like
    1/sqrt(n_replicas * t_avg).
    """
    plan = make_plan(cfg.op2, cfg.h, 1.0)
    x_phys = synthesize(cfg.x, cfg.grid)
    all_batches = []
    for replica in range(cfg.n_replicas):
        stream = derive_stream(master_seed, replica, role)
        all_batches.extend(_run_replica(cfg, observable, stream, plan, x_phys))
    stacked = np.stack(all_batches)
    n = stacked.shape[0]
    mean = stacked.mean(axis=0)
    if n > 1:
        std_error = stacked.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        std_error = np.zeros_like(mean)
    if mean.ndim == 0:
        mean = float(mean)
        std_error = float(std_error)
    return InvariantAverageEstimate(
        mean=mean, std_error=std_error, n_effective=n,
        t_burn=cfg.t_burn, t_avg=cfg.t_avg, n_replicas=cfg.n_replicas,
    )


@dataclass(frozen=True)
class MomentCheckRow:
    x_norm: float
    moment: float
    ratio: float
    std_error: float


def invariant_moment_check(cfg: FrozenFastConfig, p: int,
                           x_grid=None, c_p: float = 1.0,
                           master_seed: int = 0) -> list[MomentCheckRow]:
    """Ratio of the stationary moment E|v|^p to c_p(1 + |x|^p) over an x grid.

    Bounded ratios uniformly in x witness the stationary moment bound.
    """
    if p not in (2, 4):
        raise InvalidParameterError("p must be 2 or 4")
    if x_grid is None:
        x_grid = [cfg.x]
    rows = []
    for x in x_grid:
        cfg_x = FrozenFastConfig(x=x, op2=cfg.op2, reaction_fast=cfg.reaction_fast,
                                 grid=cfg.grid, h=cfg.h, t_burn=cfg.t_burn,
                                 t_avg=cfg.t_avg, n_replicas=cfg.n_replicas)
        quad = cfg.grid.quad_weight

        def norm_p(v_phys):
            # |v|^p with the L2 norm; quadrature weight matches Parseval.
            return (quad * float(np.sum(v_phys * v_phys))) ** (p / 2)

        est = estimate_invariant_average(cfg_x, norm_p, master_seed)
        x_norm = float(np.linalg.norm(np.asarray(x, dtype=float)))
        denom = c_p * (1.0 + x_norm ** p)
        rows.append(MomentCheckRow(x_norm=x_norm, moment=est.mean,
                                   ratio=est.mean / denom,
                                   std_error=est.std_error / denom))
    return rows


def _coupled_pair_run(cfg: FrozenFastConfig, v1, v2, x1, x2, t_max,
                      master_seed: int):
    """Advance two chains under common noise; return times and distances."""
    plan = make_plan(cfg.op2, cfg.h, 1.0)
    stream = derive_stream(master_seed, 0, "frozen_fast_noise")
    x1_phys = synthesize(as_modal_field(x1, cfg.grid.n_modes), cfg.grid)
    x2_phys = synthesize(as_modal_field(x2, cfg.grid.n_modes), cfg.grid)
    n_steps = max(2, int(round(t_max / cfg.h)))
    v1 = as_modal_field(v1, cfg.grid.n_modes).copy()
    v2 = as_modal_field(v2, cfg.grid.n_modes).copy()
    times = np.empty(n_steps)
    dists = np.empty(n_steps)
    for i in range(n_steps):
        xi = stream.normals(cfg.grid.n_modes)
        f1 = analyze(eval_g(cfg.reaction_fast, 0.0, cfg.grid.nodes, x1_phys,
                            synthesize(v1, cfg.grid)), cfg.grid)
        f2 = analyze(eval_g(cfg.reaction_fast, 0.0, cfg.grid.nodes, x2_phys,
                            synthesize(v2, cfg.grid)), cfg.grid)
        v1 = plan.decay * v1 + plan.drift_weight * f1 + plan.noise_std * xi
        v2 = plan.decay * v2 + plan.drift_weight * f2 + plan.noise_std * xi
        times[i] = (i + 1) * cfg.h
        dists[i] = np.linalg.norm(v1 - v2)
    return times, dists


def contraction_diagnostic(cfg: FrozenFastConfig, y1, y2,
                           master_seed: int = 0,
                           t_max: float | None = None) -> float:
    """Fitted exponential decay rate of |v^{x,y1}(t) - v^{x,y2}(t)| under
    common noise; for omega > 0 the slope should be <= -omega (up to fit
    tolerance)."""
    y1 = as_modal_field(y1, cfg.grid.n_modes)
    y2 = as_modal_field(y2, cfg.grid.n_modes)
    if np.array_equal(y1, y2):
        raise InvalidParameterError("identical initial data: decay fit undefined")
    if t_max is None:
        t_max = 5.0 / cfg.omega
    times, dists = _coupled_pair_run(cfg, y1, y2, cfg.x, cfg.x, t_max, master_seed)
    mask = dists > 0
    slope = np.polyfit(times[mask], np.log(dists[mask]), 1)[0]
    return float(slope)


def frozen_lipschitz_in_x(cfg: FrozenFastConfig, x1, x2,
                          master_seed: int = 0,
                          t_max: float | None = None) -> float:
    """sup_t |v^{x1,y}(t) - v^{x2,y}(t)| / |x1 - x2| under common noise."""
    x1 = as_modal_field(x1, cfg.grid.n_modes)
    x2 = as_modal_field(x2, cfg.grid.n_modes)
    dx = float(np.linalg.norm(x1 - x2))
    if dx == 0:
        raise InvalidParameterError("identical frozen states: ratio undefined")
    if t_max is None:
        t_max = 10.0 / cfg.omega
    y0 = np.zeros(cfg.grid.n_modes)
    _, dists = _coupled_pair_run(cfg, y0, y0.copy(), x1, x2, t_max, master_seed)
    return float(np.max(dists)) / dx
