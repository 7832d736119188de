import numpy as np
import pytest
from statsmodels.stats.proportion import proportion_confint

from splap.mesh import Grid, zero_field
from splap.noise import make_noise_model
from splap.plaplace import PLaplaceOperator
from splap.skeleton import Control, StepperConfig, random_control, solve_skeleton
from splap.ldp import (BudgetExceeded, NoDescent, RateOptions, RateProblem,
                       condition_c1_experiment, condition_c2_experiment,
                       fit_loglog_slope, oscillating_control,
                       rare_event_probability, rate_function_estimate,
                       wilson_interval)

from conftest import sine_initial, small_setup


class TestWilson:
    @pytest.mark.parametrize("hits,n", [(0, 10), (5, 10), (10, 10), (3, 77)])
    def test_matches_reference_implementation(self, hits, n):
        lo, hi = wilson_interval(hits, n)
        ref_lo, ref_hi = proportion_confint(hits, n, alpha=0.05, method="wilson")
        assert lo == pytest.approx(ref_lo, abs=1e-9)
        assert hi == pytest.approx(ref_hi, abs=1e-9)

    def test_degenerate(self):
        lo, hi = wilson_interval(0, 5)
        assert lo == 0.0 and 0 < hi < 1


class TestConditionC1:
    def test_silent_noise_statistic_exactly_zero(self):
        grid = Grid(1, 1.0, 17)
        noise = make_noise_model(grid, 4, "bounded", lambda_scale=0.0)
        cfg = StepperConfig(PLaplaceOperator(3.0, 1e-4), noise, sine_initial(grid))
        h = Control.zero(8, 4, 0.125)
        rep = condition_c1_experiment(cfg, h, [0.5, 0.1], n_samples=3, seed=0,
                                      ball_bound=1.0)
        assert all(c["mean"] == 0.0 for c in rep["cells"])

    def test_small_sweep_monotone_and_quadratic(self):
        cfg = small_setup("bounded")
        steps, dt = 16, 1.0 / 16
        h = random_control(steps, cfg.noise.n_modes, dt, seed=1, stream=0, norm=1.0)
        rep = condition_c1_experiment(cfg, h, [0.4, 0.2, 0.1], n_samples=40,
                                      seed=2, ball_bound=4.0)
        assert rep["monotone_decreasing"]
        assert rep["slope"] == pytest.approx(2.0, abs=0.5)

    def test_control_family_callable(self):
        cfg = small_setup("bounded")
        steps, dt = 8, 0.125
        base = random_control(steps, cfg.noise.n_modes, dt, seed=3, stream=0, norm=1.0)
        family = lambda eps: base.scaled(1.0 / (1.0 + eps))
        rep = condition_c1_experiment(cfg, family, [0.4, 0.2], n_samples=5,
                                      seed=4, ball_bound=4.0)
        assert len(rep["cells"]) == 2

    def test_ball_enforced(self):
        cfg = small_setup("bounded")
        h = random_control(8, cfg.noise.n_modes, 0.125, seed=5, stream=0, norm=3.0)
        with pytest.raises(ValueError):
            condition_c1_experiment(cfg, h, [0.1], n_samples=2, seed=0, ball_bound=1.0)


class TestConditionC2:
    def test_zero_amplitude_distances_exactly_zero(self):
        cfg = small_setup("bounded")
        h = random_control(16, cfg.noise.n_modes, 1.0 / 16, seed=6, stream=0, norm=1.0)
        rep = condition_c2_experiment(cfg, h, [2, 4], amplitude=0.0, ball_bound=9.0)
        assert rep["distances"] == [0.0, 0.0]

    def test_distances_decrease_with_frequency(self):
        cfg = small_setup("bounded")
        steps, dt = 32, 1.0 / 32
        vals = np.zeros((steps, cfg.noise.n_modes))
        vals[:, 0] = 0.5
        h = Control(vals, dt)
        rep = condition_c2_experiment(cfg, h, [2, 4, 8], amplitude=1.0,
                                      ball_bound=16.0)
        assert rep["decreasing"]

    def test_increment_law_uniform_over_frequencies(self):
        cfg = small_setup("bounded")
        steps, dt = 32, 1.0 / 32
        h = random_control(steps, cfg.noise.n_modes, dt, seed=7, stream=0, norm=1.0)
        rep = condition_c2_experiment(cfg, h, [2, 8], amplitude=0.5, ball_bound=16.0)
        consts = [r["increment_constant"] for r in rep["rows"]]
        assert max(consts) <= 3 * min(consts)

    def test_ball_violation_rejected(self):
        cfg = small_setup("bounded")
        h = random_control(16, cfg.noise.n_modes, 1.0 / 16, seed=8, stream=0, norm=1.0)
        with pytest.raises(ValueError):
            condition_c2_experiment(cfg, h, [2], amplitude=5.0, ball_bound=1.1)

    def test_oscillation_exact_norm_and_orthogonality(self):
        base = Control.zero(32, 2, 1.0 / 32)
        pert = oscillating_control(base, 4, amplitude=0.7)
        assert np.sqrt(pert.norm_sq) == pytest.approx(0.7, rel=1e-12)

    def test_invisible_frequency_rejected(self):
        base = Control.zero(8, 2, 0.125)
        with pytest.raises(ValueError):
            oscillating_control(base, 8, amplitude=1.0)  # sin(2*pi*k) == 0


class TestRareEvents:
    def _cfg(self):
        return small_setup("bounded", p=2.0, delta=0.0, n=17)

    def test_gamma_zero_certain(self):
        cfg = self._cfg()
        rep = rare_event_probability(cfg, 8, 0.125, epsilon=0.3, gamma=0.0,
                                     n_samples=40, seed=0)
        assert rep["p_hat"] == 1.0
        assert rep["exponent"] == 0.0

    def test_huge_gamma_zero_hits_reported_as_bound(self):
        cfg = self._cfg()
        rep = rare_event_probability(cfg, 8, 0.125, epsilon=0.3, gamma=1e6,
                                     n_samples=40, seed=0)
        assert rep["zero_hits"] and rep["p_hat"] == 0.0
        assert rep["exponent"] is None
        assert rep["exponent_lower_bound"] > 0

    def test_monotone_in_gamma(self):
        cfg = self._cfg()
        ps = [rare_event_probability(cfg, 8, 0.125, 0.5, g, 60, seed=1)["p_hat"]
              for g in (0.05, 0.1, 0.2)]
        assert ps[0] >= ps[1] >= ps[2]

    def test_exponent_stabilizes_across_epsilon(self):
        cfg = self._cfg()
        gamma = 0.08
        cells = [rare_event_probability(cfg, 16, 1.0 / 16, e, gamma, 1500, seed=2)
                 for e in (0.45, 0.3)]
        exps = [c["exponent"] for c in cells if c["hits"] > 0]
        assert len(exps) == 2
        ratio = max(exps) / min(exps)
        assert ratio <= 2.0


class TestRateFunction:
    def test_flow_target_zero_rate(self):
        cfg = small_setup("bounded")
        steps, dt = 8, 0.125
        target = solve_skeleton(cfg, Control.zero(steps, cfg.noise.n_modes, dt)).trajectory
        res = rate_function_estimate(cfg, RateProblem(target, 50.0, dt))
        assert res.i_hat <= 1e-6
        assert np.max(np.abs(res.control.values)) <= 1e-6

    def test_budget_enforced(self):
        cfg = small_setup("bounded", modes=4)
        target = [cfg.u0] * 300  # 299*4 > 1024
        with pytest.raises(BudgetExceeded):
            rate_function_estimate(cfg, RateProblem(target, 1.0, 0.01))

    def test_unreachable_initial_state_raises_no_descent(self):
        cfg = small_setup("bounded")
        steps, dt = 6, 1.0 / 6
        base = solve_skeleton(cfg, Control.zero(steps, cfg.noise.n_modes, dt)).trajectory
        shifted = [f + sine_initial(f.grid, amplitude=3.0) for f in base]
        with pytest.raises(NoDescent) as err:
            rate_function_estimate(cfg, RateProblem(shifted, 50.0, dt),
                                   RateOptions(max_iter=3))
        assert err.value.partial.misfit_sup > 1e-3

    def test_plant_and_recover_upper_bound(self):
        cfg = small_setup("additive", p=3.0)
        steps, dt = 8, 0.125
        h_star = random_control(steps, cfg.noise.n_modes, dt, seed=9, stream=0,
                                norm=0.8)
        target = solve_skeleton(cfg, h_star).trajectory
        res = rate_function_estimate(
            cfg, RateProblem(target, 50.0, dt),
            RateOptions(max_iter=200, misfit_mode="msq", misfit_tol=0.05))
        assert res.i_hat <= 0.5 * h_star.norm_sq + 1e-3

    def test_spsa_mode_descends(self):
        cfg = small_setup("additive", p=2.0, delta=0.0)
        steps, dt = 4, 0.25
        h_star = random_control(steps, cfg.noise.n_modes, dt, seed=10, stream=0,
                                norm=0.5)
        target = solve_skeleton(cfg, h_star).trajectory
        start_misfit = max(
            np.linalg.norm(a.values - b.values)
            for a, b in zip(solve_skeleton(cfg, Control.zero(steps, cfg.noise.n_modes, dt)).trajectory, target))
        res = rate_function_estimate(
            cfg, RateProblem(target, 20.0, dt),
            RateOptions(max_iter=60, misfit_mode="msq", gradient_mode="spsa",
                        misfit_tol=np.inf))
        assert res.misfit_sup < start_misfit**2

    def test_weight_must_be_positive(self):
        cfg = small_setup()
        with pytest.raises(ValueError):
            RateProblem([cfg.u0, cfg.u0], 0.0, 0.1)


class TestSlopeFit:
    def test_exact_powerlaw(self):
        x = np.array([1.0, 2.0, 4.0])
        assert fit_loglog_slope(x, 3.0 * x**1.7) == pytest.approx(1.7, rel=1e-12)
