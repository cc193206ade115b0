import dataclasses
import math

import numpy as np
import pytest

from slowfast import (AveragedDriftParams, FbarEstimator, InvalidParameterError,
                      analytic_Fbar_linear, estimate_Fbar, estimate_Vbar,
                      simulate_averaged)
from slowfast.averaging import AveragedState, averaged_mean_rates, step_averaged
from slowfast.noise import derive_stream, make_plan

from conftest import cubic_model, linear_model, unit_field


def fast_params(model, t_avg_units=50.0, n_replicas=4, h=0.01, **kw):
    omega = model.omega
    return AveragedDriftParams(h_fast=h, t_burn=10.0 / omega,
                               t_avg=t_avg_units / omega,
                               n_replicas=n_replicas, **kw)


class TestAnalyticOracle:
    def test_mode_one_value(self):
        model = linear_model(n_modes=8)
        out = analytic_Fbar_linear(model, 0.0, unit_field(8))
        assert out[0] == pytest.approx(1.0 / (math.pi ** 2 + 2.0), rel=1e-12)
        assert np.all(out[1:] == 0)

    def test_zero_coupling(self):
        model = linear_model(a_c=0.0)
        out = analytic_Fbar_linear(model, 0.0, unit_field(8))
        assert np.all(out == 0)

    def test_linearity(self, rng):
        model = linear_model()
        x = rng.normal(size=8)
        assert np.array_equal(analytic_Fbar_linear(model, 0.0, 2.0 * x),
                              2.0 * analytic_Fbar_linear(model, 0.0, x))

    def test_requires_linear_benchmark(self):
        with pytest.raises(InvalidParameterError):
            analytic_Fbar_linear(cubic_model(), 0.0, unit_field(8))


class TestEstimateFbar:
    def test_matches_oracle_componentwise(self):
        model = linear_model(n_modes=4, n_quad=16, lam_fast=0.2)
        params = fast_params(model, t_avg_units=60.0, n_replicas=6, h=0.005)
        mean, se = estimate_Fbar(0.0, unit_field(4), params, model,
                                 master_seed=101)
        exact = analytic_Fbar_linear(model, 0.0, unit_field(4))
        assert np.all(np.abs(mean - exact) <= 3.0 * se + 1e-12)

    def test_centered_invariant_measure_gives_zero_drift(self):
        # odd-in-v reaction averaged against the centered stationary law
        model = cubic_model(n_modes=4, n_quad=16, c_u=0.0, c_v=1.0, theta=0.0)
        model = model.with_epsilon(0.5)
        # remove the slow->fast coupling so mu^0 is centered at 0
        from slowfast import make_fast_reaction
        import dataclasses
        model = dataclasses.replace(
            model, reaction_fast=make_fast_reaction("linear_benchmark",
                                                    a_c=0.0, b_c=2.0))
        params = fast_params(model, t_avg_units=40.0, n_replicas=4, h=0.005)
        mean, se = estimate_Fbar(0.0, np.zeros(4), params, model, master_seed=7)
        assert np.all(np.abs(mean) <= 3.0 * se + 1e-12)

    def test_fast_independent_reaction_has_no_mc_noise(self):
        # b independent of the fast variable: every batch sees the same value
        from slowfast import make_slow_reaction
        import dataclasses
        model = linear_model(n_modes=4, n_quad=16)
        slow = make_slow_reaction("polynomial", terms=[(1.0, 1, 0)],
                                  m1=1, m2=1, kappa1=2, kappa2=0)
        model = dataclasses.replace(model, reaction_slow=slow)
        params = fast_params(model, t_avg_units=5.0, n_replicas=2)
        mean, se = estimate_Fbar(0.0, unit_field(4), params, model)
        assert np.max(se) <= 1e-12
        # the drift equals the pointwise value of b(u, .) = u
        assert mean[0] == pytest.approx(1.0, rel=1e-10)

    def test_cache_determinism(self):
        model = linear_model(n_modes=4, n_quad=16)
        params = fast_params(model, t_avg_units=5.0, n_replicas=2)
        est = FbarEstimator(model, params, master_seed=55)
        x = unit_field(4)
        first = est.estimate(0.0, x)
        second = est.estimate(0.0, x)           # cache hit
        fresh = FbarEstimator(model, params, master_seed=55).estimate(0.0, x)
        assert np.array_equal(first[0], second[0])
        assert np.array_equal(first[0], fresh[0])

    def test_quantization_shares_cache_entries(self):
        model = linear_model(n_modes=4, n_quad=16)
        params = fast_params(model, t_avg_units=5.0, n_replicas=2,
                             cache_quantum=0.1)
        est = FbarEstimator(model, params, master_seed=3)
        est.estimate(0.0, unit_field(4, value=1.0))
        est.estimate(0.0, unit_field(4, value=1.04))
        assert len(est.cache) == 1

    def test_norm_bound_guard(self):
        from slowfast import StateExplosionError
        model = linear_model(n_modes=4, n_quad=16)
        params = fast_params(model, t_avg_units=5.0, n_replicas=2,
                             x_norm_bound=0.5)
        with pytest.raises(StateExplosionError):
            estimate_Fbar(0.0, unit_field(4), params, model)


class TestAveragedEquation:
    def test_pure_decay_without_drift_or_noise(self):
        model = linear_model(a_c=0.0, lam_slow=0.0)
        stream = derive_stream(0, 0, "auxiliary")
        out = simulate_averaged(model, None, unit_field(8), 1.0, 0.01, stream,
                                drift_mode="oracle")
        assert out.path[-1][0] == pytest.approx(
            math.exp(-model.op1.alphas[0]), rel=1e-10)

    def test_single_step_matches_scalar_exponential(self):
        model = linear_model(lam_slow=0.0)
        h = 1e-3
        plan = make_plan(model.op1, h, 1.0)
        stream = derive_stream(0, 0, "auxiliary")

        def drift(t, u):
            return analytic_Fbar_linear(model, t, u), np.zeros(8)

        state, _ = step_averaged(AveragedState(u=unit_field(8), t=0.0), model,
                                 drift, h, stream, plan)
        mu = averaged_mean_rates(model)[0]
        assert abs(state.u[0] - math.exp(mu * h)) <= 1e-8

    def test_first_order_in_time(self):
        # terminal drift-handling error halves with the step
        model = linear_model(lam_slow=0.0)
        errs = []
        for h in (0.02, 0.01):
            stream = derive_stream(0, 0, "auxiliary")
            out = simulate_averaged(model, None, unit_field(8), 1.0, h, stream,
                                    drift_mode="oracle")
            exact = math.exp(averaged_mean_rates(model)[0])
            errs.append(abs(out.path[-1][0] - exact))
        ratio = errs[0] / errs[1]
        assert 1.5 <= ratio <= 2.5

    def test_zero_horizon_returns_initial_state(self):
        model = linear_model()
        out = simulate_averaged(model, None, unit_field(8), 0.0, 0.01,
                                derive_stream(0, 0, "auxiliary"),
                                drift_mode="oracle")
        assert out.times.size == 1
        assert np.array_equal(out.path[0], unit_field(8))

    def test_noise_off_terminal_value(self):
        model = linear_model(lam_slow=0.0)
        stream = derive_stream(0, 0, "auxiliary")
        out = simulate_averaged(model, None, unit_field(8), 1.0, 1e-4, stream,
                                drift_mode="oracle")
        exact = math.exp(averaged_mean_rates(model)[0])
        assert abs(out.path[-1][0] - exact) <= 1e-6

    def test_ensemble_mean_matches_deterministic_path(self):
        model = linear_model(lam_slow=0.05)
        exact = math.exp(averaged_mean_rates(model)[0])
        terminals = []
        for i in range(200):
            stream = derive_stream(9, i, "auxiliary")
            out = simulate_averaged(model, None, unit_field(8), 1.0, 0.01,
                                    stream, drift_mode="oracle")
            terminals.append(out.path[-1][0])
        terminals = np.array(terminals)
        se = terminals.std(ddof=1) / math.sqrt(terminals.size)
        assert abs(terminals.mean() - exact) <= 3 * se + 1e-4


class TestVbar:
    def test_degenerate_exponents_give_c_V(self):
        import dataclasses
        from slowfast import LyapunovSpec
        model = linear_model(n_modes=4, n_quad=16)
        model = dataclasses.replace(
            model, lyapunov=LyapunovSpec(c_V=2.5, m1=0, m2=0, kappa1=0, kappa2=0))
        params = fast_params(model, t_avg_units=2.0, n_replicas=1)
        mean, se = estimate_Vbar(np.zeros(4), model, params)
        assert mean == pytest.approx(2.5)
        assert se == 0.0

    def test_deterministic_zero_state(self):
        import dataclasses
        from slowfast import make_fast_reaction
        model = linear_model(n_modes=4, n_quad=16, lam_fast=0.0)
        model = dataclasses.replace(
            model, reaction_fast=make_fast_reaction("linear_benchmark",
                                                    a_c=0.0, b_c=0.0))
        params = AveragedDriftParams(h_fast=0.01, t_burn=2.0, t_avg=2.0,
                                     n_replicas=1)
        mean, _ = estimate_Vbar(np.zeros(4), model, params)
        assert mean == pytest.approx(model.lyapunov.c_V)

    def test_growth_in_x_is_polynomially_bounded(self):
        # Vbar(x) / (1 + |x|_{L^{4m1}}^{2m1}) stays bounded over an x grid
        model = linear_model(n_modes=4, n_quad=16, lam_fast=0.2)
        params = fast_params(model, t_avg_units=10.0, n_replicas=2)
        lyap = model.lyapunov
        ratios = []
        for scale in (0.5, 1.0, 2.0, 4.0):
            x = unit_field(4, value=scale)
            mean, _ = estimate_Vbar(x, model, params, master_seed=3)
            from slowfast.spectral import lp_norm, synthesize
            x_norm = lp_norm(synthesize(x, model.grid), model.grid, 4.0 * lyap.m1)
            ratios.append(mean / (1.0 + x_norm ** (2.0 * lyap.m1)))
        assert max(ratios) / min(ratios) < 3.0
        assert max(ratios) < 10.0 * model.lyapunov.c_V


class TestOracleAgreementProperty:
    def test_twenty_random_states(self, rng):
        # estimator vs closed form, componentwise within 3 se, over random
        # slow states with norm at most 2
        model = linear_model(n_modes=4, n_quad=16, lam_fast=0.2)
        params = fast_params(model, t_avg_units=30.0, n_replicas=4, h=0.005)
        estimator = FbarEstimator(model, params, master_seed=71)
        for trial in range(20):
            x = rng.normal(size=4)
            x *= rng.uniform(0.1, 2.0) / np.linalg.norm(x)
            mean, se = estimator.estimate(0.0, x)
            exact = analytic_Fbar_linear(model, 0.0, x)
            # quantization shifts the target by at most cache_quantum/2
            slack = params.cache_quantum
            assert np.all(np.abs(mean - exact) <= 3.0 * se + slack), \
                f"trial {trial}: diff={np.abs(mean - exact)}, se={se}"


class TestThetaConsistency:
    def test_truncated_drift_gap_bounded_by_theta_vbar(self):
        # |Fbar - Fbar_theta|^2 <= theta * (Vbar + 3 sigma) for theta in
        # {0.1, 0.01}; common streams make the difference purely truncation
        model = cubic_model(n_modes=4, n_quad=16, theta=0.0)
        x = unit_field(4, value=0.5)
        seed = 404
        base_params = fast_params(model, t_avg_units=30.0, n_replicas=4,
                                  h=0.005)
        raw, _ = estimate_Fbar(0.0, x, base_params, model, master_seed=seed)
        vbar, vbar_se = estimate_Vbar(x, model, base_params, master_seed=seed)
        for theta in (0.1, 0.01):
            params = dataclasses.replace(base_params, theta=theta)
            trunc, _ = estimate_Fbar(0.0, x, params, model, master_seed=seed)
            gap_sq = float(np.sum((raw - trunc) ** 2))
            assert gap_sq <= theta * (vbar + 3.0 * vbar_se), \
                f"theta={theta}: gap^2={gap_sq:.3e} vs bound " \
                f"{theta * (vbar + 3 * vbar_se):.3e}"
