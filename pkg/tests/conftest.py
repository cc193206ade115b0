import numpy as np
import pytest

import slowfast as sf

CONFIG_DIR = "configs"


def linear_model(eps=0.1, *, n_modes=8, n_quad=32, nu1=0.01, nu2=1.0,
                 lam_slow=0.01, lam_fast=0.1, a_c=1.0, b_c=2.0,
                 horizon=1.0, h_macro=0.01, u0_mode=1.0, v0_mode=1.0,
                 **kwargs) -> sf.ModelSpec:
    """Fully solvable benchmark: b = lam, g = a_c*rho - b_c*sigma."""
    grid = sf.GridSpec(n_modes=n_modes, n_quad=n_quad)
    op1 = sf.SpectralOperator.from_power_law(n_modes, nu1, 1.0, lam_slow, 1.0, 0.5)
    op2 = sf.SpectralOperator.from_power_law(n_modes, nu2, 1.0, lam_fast, 1.0, 0.5)
    u0 = np.zeros(n_modes)
    v0 = np.zeros(n_modes)
    u0[0] = u0_mode
    v0[0] = v0_mode
    return sf.build_model(
        op1, op2, sf.make_slow_reaction("linear_benchmark"),
        sf.make_fast_reaction("linear_benchmark", a_c=a_c, b_c=b_c),
        grid, eps, horizon, u0, v0, h_macro=h_macro, **kwargs)


def cubic_model(eps=0.1, *, n_modes=8, n_quad=32, theta=0.01, c_u=0.5,
                c_v=0.5, c_s=0.2, lam_slow=0.05, lam_fast=0.25,
                horizon=1.0, h_macro=0.01, **kwargs) -> sf.ModelSpec:
    """Rough polynomial slow drift with a saturating Lipschitz fast drift."""
    grid = sf.GridSpec(n_modes=n_modes, n_quad=n_quad)
    op1 = sf.SpectralOperator.from_power_law(n_modes, 0.01, 1.0, lam_slow, 1.0, 0.5)
    op2 = sf.SpectralOperator.from_power_law(n_modes, 1.0, 1.0, lam_fast, 1.0, 0.5)
    u0 = np.zeros(n_modes)
    v0 = np.zeros(n_modes)
    u0[0] = 1.0
    v0[0] = 1.0
    return sf.build_model(
        op1, op2, sf.make_slow_reaction("cubic_rough", c_u=c_u, c_v=c_v),
        sf.make_fast_reaction("lipschitz_saturating", a_c=1.0, b_c=2.0, c_s=c_s),
        grid, eps, horizon, u0, v0, theta=theta, h_macro=h_macro, **kwargs)


def unit_field(n_modes: int, mode: int = 1, value: float = 1.0) -> np.ndarray:
    f = np.zeros(n_modes)
    f[mode - 1] = value
    return f


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
