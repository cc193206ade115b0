"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """An operation received arguments outside its contract."""


class ConfigurationRejectedError(ValueError):
    """A model configuration violates one of the structural hypotheses.

    The message names the violated hypothesis so that load-time rejection
    is self-explanatory (CLI exit code 2).
    """


class StateExplosionError(RuntimeError):
    """A trajectory breached the explosion guard ``|u| + |v| <= bound``."""

    def __init__(self, t: float, norm_u: float, norm_v: float, bound: float):
        self.t = t
        self.norm_u = norm_u
        self.norm_v = norm_v
        self.bound = bound
        super().__init__(
            f"state explosion at t={t:g}: |u|={norm_u:.3e}, |v|={norm_v:.3e} "
            f"exceeds guard {bound:.3e}"
        )
