import math

import numpy as np
import pytest

from splap.skeleton import Control
from splap.tci import (TciExperiment, coupling_distance, entropy, tci_constant,
                       tci_ratio_check)

from conftest import small_setup


class TestConstantFormula:
    def test_reference_value(self):
        # sigma_bar=1, c=0, T=1: 2*e^2
        assert tci_constant(1.0, 0.0, 1.0) == pytest.approx(2.0 * math.e**2, abs=1e-12)

    def test_short_horizon_limit(self):
        assert tci_constant(3.0, 0.7, 1e-14) == pytest.approx(2.0 * 9.0, rel=1e-10)

    def test_quadratic_in_sigma_bar(self):
        assert tci_constant(2.0, 0.3, 0.5) == pytest.approx(
            4.0 * tci_constant(1.0, 0.3, 0.5))

    @pytest.mark.parametrize("args", [(0.0, 0.0, 1.0), (-1.0, 0.0, 1.0),
                                      (1.0, -0.1, 1.0), (1.0, 0.0, 0.0)])
    def test_validation(self, args):
        with pytest.raises(ValueError):
            tci_constant(*args)


class TestEntropy:
    def test_zero_control(self):
        assert entropy(Control.zero(8, 4, 0.125)) == 0.0

    def test_unit_norm_on_unit_interval(self):
        # ||g(t)||_H = 1 on [0,1]: entropy = 1/2 exactly
        vals = np.zeros((10, 3))
        vals[:, 0] = 1.0
        assert entropy(Control(vals, 0.1)) == pytest.approx(0.5, abs=1e-15)

    def test_quadratic_scaling(self):
        vals = np.random.default_rng(0).standard_normal((6, 2))
        g = Control(vals, 0.25)
        assert entropy(Control(2 * vals, 0.25)) == pytest.approx(4 * entropy(g), rel=1e-14)


def _experiment(cfg, norm, n_samples=20, steps=16):
    dt = 1.0 / steps
    vals = np.zeros((steps, cfg.noise.n_modes))
    vals[:, 0] = 1.0
    g = Control(vals, dt).scaled(norm / np.sqrt(dt * steps))
    return TciExperiment(cfg, g, n_samples, seed=21)


class TestCoupling:
    def test_zero_drift_distance_exactly_zero(self):
        cfg = small_setup("bounded")
        g = Control.zero(16, cfg.noise.n_modes, 1.0 / 16)
        est, err = coupling_distance(TciExperiment(cfg, g, 5, seed=1))
        assert est == 0.0 and err == 0.0

    def test_additive_zero_variance_and_quarter_scaling(self):
        # additive family at p=2: the pathwise difference is deterministic,
        # so the Monte Carlo estimate has zero variance and is exactly
        # quadratic in the drift amplitude
        cfg = small_setup("additive", p=2.0, delta=0.0)
        full = _experiment(cfg, 1.0, n_samples=5)
        half = TciExperiment(cfg, full.g.scaled(0.5), 5, seed=21)
        e1, s1 = coupling_distance(full)
        e2, s2 = coupling_distance(half)
        assert s1 <= 1e-14 and s2 <= 1e-14
        assert e2 == pytest.approx(e1 / 4.0, rel=1e-9)

    def test_ratio_scale_invariant_for_additive(self):
        cfg = small_setup("additive", p=2.0, delta=0.0)
        r1 = tci_ratio_check(_experiment(cfg, 0.7, n_samples=4))
        r2 = tci_ratio_check(TciExperiment(cfg, _experiment(cfg, 0.7).g.scaled(2.0),
                                           4, seed=21))
        assert r1["ratio"] == pytest.approx(r2["ratio"], rel=1e-8)


class TestRatioCheck:
    @pytest.mark.parametrize("norm", [0.5, 1.0, 2.0])
    def test_default_suite_passes(self, norm):
        cfg = small_setup("bounded")
        rep = tci_ratio_check(_experiment(cfg, norm, n_samples=25))
        assert rep["pass"]
        assert rep["ratio"] <= rep["constant"]
        assert rep["entropy"] == pytest.approx(0.5 * norm**2)

    def test_constant_matches_formula(self):
        cfg = small_setup("bounded")
        rep = tci_ratio_check(_experiment(cfg, 1.0, n_samples=4))
        assert rep["constant"] == tci_constant(cfg.noise.uniform_bound,
                                               cfg.noise.lipschitz_const, 1.0)

    def test_linear_family_rejected(self):
        cfg = small_setup("linear")
        with pytest.raises(ValueError):
            TciExperiment(cfg, Control.zero(4, cfg.noise.n_modes, 0.25), 4, seed=0)

    def test_zero_entropy_rejected(self):
        cfg = small_setup("bounded")
        exp = TciExperiment(cfg, Control.zero(4, cfg.noise.n_modes, 0.25), 4, seed=0)
        with pytest.raises(ValueError):
            tci_ratio_check(exp)

    def test_needs_two_samples(self):
        cfg = small_setup("bounded")
        with pytest.raises(ValueError):
            TciExperiment(cfg, Control.zero(4, cfg.noise.n_modes, 0.25), 1, seed=0)
