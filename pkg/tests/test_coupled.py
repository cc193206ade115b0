import dataclasses
import math

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.stats import linregress

from slowfast import (InvalidParameterError, KhasminskiiPlan,
                      StateExplosionError, auxiliary_error_stats,
                      build_auxiliary, compute_rho0, khasminskii_delta,
                      make_fast_reaction, make_slow_reaction, simulate_slowfast)

from conftest import cubic_model, linear_model, unit_field


class TestKhasminskiiDelta:
    def test_direct_evaluation(self):
        expected = 0.01 * math.sqrt(abs(math.log(0.01)))
        assert khasminskii_delta(0.01, 1.0, 2.0) == pytest.approx(expected,
                                                                   rel=1e-12)
        assert expected == pytest.approx(0.021460, abs=1e-6)

    def test_schedule_limits_on_grid(self):
        eps_grid = [0.1, 0.01, 0.001]
        deltas = [khasminskii_delta(e, 1.0, 2.0) for e in eps_grid]
        assert all(a > b for a, b in zip(deltas, deltas[1:]))
        ratios = [d / e for d, e in zip(deltas, eps_grid)]
        assert all(a < b for a, b in zip(ratios, ratios[1:]))

    def test_exponent_collapse(self):
        for eps in (0.5, 0.05):
            assert khasminskii_delta(eps, 0.0, 4.0) == pytest.approx(
                0.5 * eps, rel=1e-14)

    def test_formula_identity_to_1e12(self):
        for eps in (0.9, 0.1, 0.004, 1e-6):
            direct = (2.0 / 3.0) * eps * abs(math.log(eps)) ** 0.75
            assert abs(khasminskii_delta(eps, 1.5, 3.0) - direct) <= 1e-12

    def test_degenerate_epsilon_rejected(self):
        for eps in (1.0, 1.5, 0.0, -0.1):
            with pytest.raises(InvalidParameterError):
                khasminskii_delta(eps, 1.0, 2.0)


class TestRho0:
    def test_coincident_times(self):
        assert compute_rho0(1.0, 1.0, 0.5, 0.5) == 0.0

    def test_direct_evaluation(self):
        val = compute_rho0(1.0, math.e, 0.5, 0.5)
        expected = 1.0 + (math.e - 1.0) ** 0.5 + (math.e - 1.0)
        assert val == pytest.approx(expected, rel=1e-12)

    def test_monotone_in_t(self):
        vals = [compute_rho0(0.5, t, 0.2, 0.5) for t in (0.6, 0.8, 1.0, 2.0)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_origin_rejected(self):
        with pytest.raises(InvalidParameterError):
            compute_rho0(0.0, 1.0, 0.5, 0.5)
        with pytest.raises(InvalidParameterError):
            compute_rho0(2.0, 1.0, 0.5, 0.5)


class TestCoupledStep:
    def test_pure_semigroup_decay(self):
        # no reactions, no noise: both components decay at their own clocks
        model = linear_model(eps=0.25, lam_slow=0.0, lam_fast=0.0, a_c=0.0,
                             b_c=0.0, horizon=0.1, h_macro=0.01)
        model = dataclasses.replace(
            model, reaction_slow=make_slow_reaction("polynomial", terms=[]))
        traj = simulate_slowfast(model, 0, 0)
        T = 0.1
        assert traj.u[-1][0] == pytest.approx(math.exp(-model.op1.alphas[0] * T),
                                              rel=1e-10)
        assert traj.v[-1][0] == pytest.approx(
            math.exp(-model.op2.alphas[0] * T / 0.25), rel=1e-10)

    def test_matches_matrix_exponential(self):
        # linear benchmark, eps=1, noise off: the pair solves a 2x2 linear
        # ODE; the first-order error constant of the splitting is ~0.35 here
        model = linear_model(eps=1.0, lam_slow=0.0, lam_fast=0.0,
                             horizon=0.1, h_macro=1e-4)
        traj = simulate_slowfast(model, 0, 0)
        a1, a2 = model.op1.alphas[0], model.op2.alphas[0]
        M2 = np.array([[-a1, 1.0], [1.0, -(a2 + 2.0)]])
        exact = expm(M2 * 0.1) @ np.array([1.0, 1.0])
        err = max(abs(traj.u[-1][0] - exact[0]), abs(traj.v[-1][0] - exact[1]))
        assert err <= 5e-5

    def test_first_order_in_macro_step(self):
        model_fn = lambda h: linear_model(eps=1.0, lam_slow=0.0, lam_fast=0.0,
                                          horizon=0.1, h_macro=h)
        a1 = 0.01 * math.pi ** 2
        a2 = math.pi ** 2
        M2 = np.array([[-a1, 1.0], [1.0, -(a2 + 2.0)]])
        exact = (expm(M2 * 0.1) @ np.array([1.0, 1.0]))[0]
        errs = [abs(simulate_slowfast(model_fn(h), 0, 0).u[-1][0] - exact)
                for h in (2e-3, 1e-3)]
        assert 1.6 <= errs[0] / errs[1] <= 2.4

    def test_zero_horizon_returns_initial_state(self):
        model = linear_model(horizon=1e-9, h_macro=0.01)
        traj = simulate_slowfast(model, 0, 0)
        assert traj.times.size == 1
        assert np.array_equal(traj.u[0], model.u0)

    def test_explosion_guard_carries_state(self):
        # anti-dissipative drift with a tiny guard trips quickly
        model = cubic_model(horizon=1.0, h_macro=0.01)
        spec = make_slow_reaction("polynomial", terms=[(5.0, 3, 0)],
                                  m1=3, m2=1, kappa1=2, kappa2=2,
                                  c1=10.0, c2=10.0, a1=1.0, a2=1.0)
        model = dataclasses.replace(model, reaction_slow=spec, theta=0.0,
                                    explosion_bound=5.0)
        model = dataclasses.replace(model, u0=unit_field(8, value=2.0))
        with pytest.raises(StateExplosionError) as info:
            simulate_slowfast(model, 0, 0)
        assert info.value.norm_u + info.value.norm_v > 5.0
        assert 0 < info.value.t <= 1.0

    def test_cubic_rough_runs_without_explosion(self):
        model = cubic_model(eps=0.1, n_modes=16, n_quad=64, theta=0.01)
        traj = simulate_slowfast(model, 3, 0)
        assert np.all(np.isfinite(traj.u))
        assert traj.v_integral < 1e6

    def test_reproducibility_bit_exact(self):
        model = cubic_model(eps=0.1)
        a = simulate_slowfast(model, 123, 7)
        b = simulate_slowfast(model, 123, 7)
        assert np.array_equal(a.u, b.u)
        assert np.array_equal(a.v, b.v)

    def test_slow_stream_separation_across_eps(self):
        # with the slow equation decoupled from v, changing eps must not
        # change the slow path: the slow noise stream is consumed identically
        base = linear_model(lam_slow=0.02, lam_fast=0.1, horizon=0.2)
        decoupled = make_slow_reaction("polynomial", terms=[(1.0, 1, 0)],
                                       m1=1, m2=1, kappa1=2, kappa2=0)
        paths = []
        for eps in (1.0, 0.5):
            model = dataclasses.replace(base.with_epsilon(eps),
                                        reaction_slow=decoupled)
            paths.append(simulate_slowfast(model, 5, 0).u)
        assert np.array_equal(paths[0], paths[1])

    def test_coupled_paths_differ_across_eps(self):
        model = linear_model(lam_slow=0.02, lam_fast=0.1, horizon=0.2)
        u1 = simulate_slowfast(model.with_epsilon(1.0), 5, 0).u
        u2 = simulate_slowfast(model.with_epsilon(0.5), 5, 0).u
        assert not np.array_equal(u1, u2)


class TestFastMoments:
    def test_sup_moment_uniform_in_eps(self):
        # E sup_t |v|^2 stays within a factor 2 across the eps grid and shows
        # no significant growth trend as eps decreases
        eps_grid = (0.1, 0.02, 0.004)
        means = []
        for eps in eps_grid:
            model = linear_model(eps=eps, lam_fast=0.2, horizon=0.5)
            sups = []
            for i in range(30):
                traj = simulate_slowfast(model, 31, i)
                sups.append(float(np.max(np.sum(traj.v ** 2, axis=1))))
            means.append(np.mean(sups))
        assert max(means) / min(means) <= 2.0
        fit = linregress(np.log(eps_grid), means)
        # growth as eps decreases would need a significantly negative slope
        assert fit.slope > 0 or fit.pvalue > 0.05

    def test_fast_autocorrelation_clock(self):
        # g = 0: mode 1 of v is an OU with relaxation time eps/alpha_{2,1}.
        # Pool the lag-1..3 autocorrelation over trajectories; longer lags
        # add correlated estimation noise, not signal.
        eps = 0.1
        h = 2e-3
        model = linear_model(eps=eps, a_c=0.0, b_c=0.0, lam_fast=0.3,
                             lam_slow=0.0, horizon=10.0, h_macro=h)
        lags = np.arange(1, 4)
        acfs = []
        for tid in range(4):
            x = simulate_slowfast(model, 13, tid).v[:, 0]
            x = x - x.mean()
            acfs.append([np.dot(x[:-k], x[k:]) / np.dot(x, x) for k in lags])
        acf = np.mean(acfs, axis=0)
        rate = -linregress(lags * h, np.log(acf)).slope
        tau_exact = eps / model.op2.alphas[0]
        assert 1.0 / rate == pytest.approx(tau_exact, rel=0.10)


class TestAuxiliary:
    def test_single_block_x_independent_is_exact(self):
        # g independent of x: freezing the slow argument changes nothing
        model = linear_model(eps=0.1, a_c=0.0, lam_fast=0.2, horizon=0.2)
        traj = simulate_slowfast(model, 17, 0, record_noise=True)
        plan = KhasminskiiPlan(delta=1.0, blocks=1)
        aux = build_auxiliary(traj, plan, model)
        assert np.array_equal(aux.v_aux, traj.v)
        assert np.all(aux.u_aux == traj.u[0])

    def test_replay_fidelity_block_equals_step(self):
        model = linear_model(eps=0.1, a_c=0.0, lam_fast=0.2, horizon=0.2)
        traj = simulate_slowfast(model, 19, 0, record_noise=True)
        plan = KhasminskiiPlan(delta=model.h_macro, blocks=20)
        aux = build_auxiliary(traj, plan, model)
        assert np.array_equal(aux.v_aux, traj.v)

    def test_deterministic_rebuild(self):
        model = linear_model(eps=0.1, horizon=0.2)
        traj = simulate_slowfast(model, 23, 0, record_noise=True)
        plan = KhasminskiiPlan(delta=0.05, blocks=4)
        a = build_auxiliary(traj, plan, model)
        b = build_auxiliary(traj, plan, model)
        assert np.array_equal(a.v_aux, b.v_aux)
        assert a.delta_snapped == b.delta_snapped

    def test_missing_noise_rejected(self):
        model = linear_model(eps=0.1, horizon=0.1)
        traj = simulate_slowfast(model, 0, 0)
        with pytest.raises(InvalidParameterError):
            build_auxiliary(traj, KhasminskiiPlan(delta=0.05, blocks=2), model)

    def test_error_grows_with_block_length(self):
        # quadrupling delta increases both freezing errors (3 sigma)
        model = linear_model(eps=0.05, lam_slow=0.02, lam_fast=0.1, horizon=0.5)
        trajs = [simulate_slowfast(model, 29, i, record_noise=True)
                 for i in range(48)]
        stats = []
        for delta in (0.025, 0.1):
            plan = KhasminskiiPlan(delta=delta, blocks=int(0.5 / delta))
            auxes = [build_auxiliary(t, plan, model) for t in trajs]
            stats.append(auxiliary_error_stats(trajs, auxes))
        small, big = stats
        gap_se = math.hypot(small.sup_slow_increment_se,
                            big.sup_slow_increment_se)
        assert big.sup_slow_increment_msq > small.sup_slow_increment_msq + 3 * gap_se
        fast_se = math.hypot(small.fast_deviation_se, big.fast_deviation_se)
        assert big.fast_deviation_msq > small.fast_deviation_msq + 3 * fast_se

    def test_fast_deviation_zero_when_x_independent(self):
        model = linear_model(eps=0.1, a_c=0.0, lam_fast=0.2, horizon=0.2)
        trajs = [simulate_slowfast(model, 37, i, record_noise=True)
                 for i in range(4)]
        plan = KhasminskiiPlan(delta=0.05, blocks=4)
        auxes = [build_auxiliary(t, plan, model) for t in trajs]
        stats = auxiliary_error_stats(trajs, auxes)
        assert stats.fast_deviation_msq == 0.0

    def test_mismatched_inputs_rejected(self):
        with pytest.raises(InvalidParameterError):
            auxiliary_error_stats([], [])
