"""Q-Wiener increments and exact per-mode Ornstein-Uhlenbeck updates.

Every random stream is a Philox counter-based generator keyed by
(master_seed, trajectory_id, role), so identical identities reproduce
identical draw sequences regardless of scheduling or worker count, and
distinct trajectory ids or roles give statistically independent streams.

Standard normals are produced by the inverse-CDF transform: a 53-bit
integer j from the Philox stream is mapped to the open-interval uniform
(2j+1) * 2^-54 and passed through scipy's ndtri.  The choice is fixed so
that draws are bit-reproducible and never hit the CDF endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import InvalidParameterError
from .spectral import SpectralOperator, as_modal_field

__all__ = [
    "ROLES",
    "RngStream",
    "derive_stream",
    "wiener_increment",
    "OUStepPlan",
    "make_plan",
    "ou_step",
    "stationary_std",
]

ROLES = ("slow_noise", "fast_noise", "frozen_fast_noise", "auxiliary")


class RngStream:
    """Counter-based Gaussian stream owned by one (trajectory, role) pair."""

    __slots__ = ("master_seed", "trajectory_id", "role", "counter", "_gen")

    def __init__(self, master_seed: int, trajectory_id: int, role: str):
        if role not in ROLES:
            raise InvalidParameterError(f"unknown role {role!r}, expected one of {ROLES}")
        if master_seed < 0 or trajectory_id < 0:
            raise InvalidParameterError("master_seed and trajectory_id must be >= 0")
        self.master_seed = int(master_seed)
        self.trajectory_id = int(trajectory_id)
        self.role = role
        self.counter = 0
        seq = np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(ROLES.index(role), self.trajectory_id),
        )
        self._gen = np.random.Generator(np.random.Philox(seq))

    def normals(self, n: int) -> np.ndarray:
        """Draw n standard normals via the fixed inverse-CDF construction."""
        raw = self._gen.integers(0, 1 << 53, size=n, dtype=np.uint64)
        u = (2.0 * raw.astype(float) + 1.0) * 2.0 ** -54
        self.counter += n
        return ndtri(u)

    def fresh_copy(self) -> "RngStream":
        """Same identity restarted at draw 0; replays the identical sequence."""
        return RngStream(self.master_seed, self.trajectory_id, self.role)


def derive_stream(master_seed: int, trajectory_id: int, role: str) -> RngStream:
    """Deterministic, collision-free stream derivation."""
    return RngStream(master_seed, trajectory_id, role)


def wiener_increment(op: SpectralOperator, h: float, stream: RngStream) -> np.ndarray:
    """Increment of the Q-Wiener process over a step: mode k ~ N(0, lambda_k^2 h)."""
    if h <= 0:
        raise InvalidParameterError(f"step h must be positive, got {h}")
    return op.lambdas * np.sqrt(h) * stream.normals(op.n_modes)


@dataclass(frozen=True)
class OUStepPlan:
    """Precomputed exact one-step update for dz = (A z + f)/eps dt + Q/sqrt(eps) dW.

    Per mode: z' = decay*z + drift_weight*f + noise_std*xi with
    decay = exp(-alpha*h/eps), drift_weight = (1 - decay)/alpha and
    noise_std^2 = lambda^2 (1 - decay^2) / (2 alpha).  The stationary
    variance lambda^2/(2 alpha) is independent of eps: the 1/sqrt(eps)
    noise amplitude cancels the 1/eps decay rate.
    """

    decay: np.ndarray
    drift_weight: np.ndarray
    noise_std: np.ndarray
    h: float
    eps_eff: float


def make_plan(op: SpectralOperator, h: float, eps_eff: float) -> OUStepPlan:
    if h <= 0:
        raise InvalidParameterError(f"step h must be positive, got {h}")
    if eps_eff <= 0:
        raise InvalidParameterError(f"eps_eff must be positive, got {eps_eff}")
    decay = np.exp(-op.alphas * (h / eps_eff))
    drift_weight = (1.0 - decay) / op.alphas
    noise_std = op.lambdas * np.sqrt((1.0 - decay * decay) / (2.0 * op.alphas))
    return OUStepPlan(decay=decay, drift_weight=drift_weight,
                      noise_std=noise_std, h=h, eps_eff=eps_eff)


def ou_step(z: np.ndarray, plan: OUStepPlan, forcing: np.ndarray,
            stream: RngStream) -> np.ndarray:
    """One exact exponential-Euler step with the drift frozen over the step."""
    n = plan.decay.size
    z = as_modal_field(z, n)
    f = as_modal_field(forcing, n)
    return plan.decay * z + plan.drift_weight * f + plan.noise_std * stream.normals(n)


def stationary_std(op: SpectralOperator) -> np.ndarray:
    """Per-mode stationary standard deviation lambda_k / sqrt(2 alpha_k)."""
    return op.lambdas / np.sqrt(2.0 * op.alphas)
