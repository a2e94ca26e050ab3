import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qqvar.bounds import (
    BoundReport,
    exact_sym_diff,
    exact_sym_diff_parallel,
    expected_norm,
    fit_constant,
    generic_slab_bound,
    mc_sym_diff,
    perturbation_grid,
    plugin_norm,
    slab_inclusion_check,
    t_perturbation_size,
    t_population_bound,
    verify_bound,
)
from qqvar.dist import MvtModel, ProjectedT, population_quantile, project_loss, sample_mvt, t_quantile
from qqvar.empirical import HalfSpace, sym_diff_proportion


@pytest.fixture(scope="module")
def setup():
    model = MvtModel.equicorrelated(5, 0.5, 10.0)
    w0 = np.full(5, 0.2)
    return model, w0, population_quantile(model, w0, 0.95)


class TestGenericBound:
    def test_zero(self):
        assert generic_slab_bound([0.2, 0.8], [0.2, 0.8], 1.0, 1.0, 2.0, 3.0) == 0.0

    def test_value(self):
        assert generic_slab_bound([1.0, 0.0], [0.0, 0.0], 0.5, 0.25, 2.0, 3.0) == pytest.approx(
            3.0 * math.sqrt(2.25), rel=1e-15)

    def test_quadrupling_doubles(self):
        b1 = generic_slab_bound([0.3, 0.7], [0.2, 0.8], 1.1, 1.0, 1.7, 2.0)
        b4 = generic_slab_bound([0.6, 0.4], [0.2, 0.8], 1.4, 1.0, 1.7, 2.0)
        assert b4 == pytest.approx(2 * b1, rel=1e-12)

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    def test_monotone(self, a, b, extra):
        lo = generic_slab_bound([a, 0.0], [0.0, 0.0], b, 0.0, 1.3, 1.0)
        assert generic_slab_bound([a + extra, 0.0], [0.0, 0.0], b, 0.0, 1.3, 1.0) >= lo
        assert generic_slab_bound([a, 0.0], [0.0, 0.0], b + extra, 0.0, 1.3, 1.0) >= lo

    @pytest.mark.parametrize("c, e", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, -2.0)])
    def test_rejects_nonpositive(self, c, e):
        with pytest.raises(ValueError):
            generic_slab_bound([1.0], [0.0], 0.0, 0.0, e, c)


class TestTBound:
    def test_zero(self, setup):
        model, w0, q0 = setup
        assert t_population_bound(model, w0, w0, q0, q0, 2.0) == 0.0

    def test_centered_reduces_to_scale(self, setup):
        model, w0, q0 = setup
        d = np.array([0.01, -0.02, 0.0, 0.03, 0.005])
        expected = 2.0 * (0.04 + math.sqrt(d @ model.sigma @ d))
        assert t_population_bound(model, w0, w0 + d, q0 + 0.04, q0, 2.0) == pytest.approx(
            expected, rel=1e-14)

    def test_location_term(self, shifted_model):
        w0 = np.full(4, 0.25)
        d = np.array([0.1, 0.0, -0.1, 0.05])
        size = t_perturbation_size(shifted_model, w0, w0 + d, 0.0, 0.0)
        assert size == pytest.approx(abs(d @ shifted_model.mu)
                                     + math.sqrt(d @ shifted_model.sigma @ d), rel=1e-14)

    @given(st.floats(-3, 3), st.floats(-0.1, 0.1))
    def test_homogeneous_degree_one(self, c, dt):
        model = MvtModel(np.array([0.1, -0.2, 0.05]), np.eye(3) + 0.2, 4.0)
        w0 = np.array([0.5, 0.3, 0.2])
        d = np.array([0.02, -0.01, 0.03])
        base = t_perturbation_size(model, w0, w0 + d, 1.0 + dt, 1.0)
        scaled = t_perturbation_size(model, w0, w0 + c * d, 1.0 + c * dt, 1.0)
        assert scaled == pytest.approx(abs(c) * base, rel=1e-12, abs=1e-15)

    def test_rejects_nonpositive(self, setup):
        model, w0, q0 = setup
        with pytest.raises(ValueError):
            t_population_bound(model, w0, w0, q0, q0, 0.0)


class TestExactSymDiff:
    def test_parallel_example(self):
        std5 = ProjectedT(0.0, 1.0, 5.0)
        assert exact_sym_diff_parallel(std5, t_quantile(std5, 0.95), 0.0) == pytest.approx(
            0.45, abs=1e-12)
        assert exact_sym_diff_parallel(std5, 0.3, 0.3) == 0.0

    def test_parallel_matches_empirical(self, setup):
        model, w0, q0 = setup
        s = sample_mvt(model, 10**5, 11)
        p = exact_sym_diff_parallel(project_loss(model, w0), q0, q0 + 0.1)
        est = sym_diff_proportion(s, HalfSpace(w0, q0), HalfSpace(w0, q0 + 0.1))
        assert abs(est - p) <= 3 * math.sqrt(p * (1 - p) / s.n)

    def test_parallel_case_of_general(self, setup):
        model, w0, q0 = setup
        a, b = HalfSpace(w0, q0 + 0.07), HalfSpace(w0, q0)
        assert exact_sym_diff(model, a, b) == pytest.approx(
            exact_sym_diff_parallel(project_loss(model, w0), q0 + 0.07, q0), abs=1e-12)

    def test_scaled_parallel(self, setup):
        model, w0, q0 = setup
        # {-2w.r <= 2t} is the same set as {-w.r <= t}
        assert exact_sym_diff(model, HalfSpace(2 * w0, 2 * q0), HalfSpace(w0, q0)) == pytest.approx(
            0.0, abs=1e-12)

    def test_opposite_normals(self, setup):
        model, w0, _ = setup
        # A = {L <= 0}, B = {-L <= 0} = {L >= 0}: disagree everywhere except L = 0
        assert exact_sym_diff(model, HalfSpace(-w0, 0.0), HalfSpace(w0, 0.0)) == pytest.approx(
            1.0, abs=1e-12)

    def test_symmetric_in_arguments(self, shifted_model):
        a = HalfSpace([0.3, 0.2, 0.4, 0.1], 0.9)
        b = HalfSpace([0.25, 0.25, 0.25, 0.25], 1.0)
        assert exact_sym_diff(shifted_model, a, b) == pytest.approx(
            exact_sym_diff(shifted_model, b, a), abs=1e-10)

    @pytest.mark.parametrize("nu", [2.0, 3.0, 10.0])
    def test_against_monte_carlo(self, nu):
        model = MvtModel.equicorrelated(5, 0.5, nu)
        w0 = np.full(5, 0.2)
        q0 = population_quantile(model, w0, 0.95)
        a = HalfSpace(w0 + np.array([0.04, -0.03, 0.0, 0.01, -0.02]), q0 - 0.02)
        b = HalfSpace(w0, q0)
        mc = mc_sym_diff(model, a, b, 4 * 10**5, 5)
        assert abs(exact_sym_diff(model, a, b) - mc.estimate) <= 3 * mc.mcse


class TestMonteCarlo:
    def test_identical_sets(self, setup):
        model, w0, q0 = setup
        mc = mc_sym_diff(model, HalfSpace(w0, q0), HalfSpace(w0, q0), 1000, 1)
        assert (mc.estimate, mc.mcse, mc.slab_violations) == (0.0, 0.0, 0)

    @pytest.mark.parametrize("dt", [0.01, 0.1, 0.5])
    def test_parallel_within_three_mcse(self, setup, dt):
        model, w0, q0 = setup
        mc = mc_sym_diff(model, HalfSpace(w0, q0 + dt), HalfSpace(w0, q0), 10**5, 2)
        exact = exact_sym_diff_parallel(project_loss(model, w0), q0 + dt, q0)
        assert abs(mc.estimate - exact) <= 3 * mc.mcse

    def test_mcse_formula(self, setup):
        model, w0, q0 = setup
        mc = mc_sym_diff(model, HalfSpace(w0, q0 + 0.3), HalfSpace(w0, q0), 5000, 3)
        assert mc.mcse == math.sqrt(mc.estimate * (1 - mc.estimate) / 5000)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32), st.lists(st.floats(-0.3, 0.3), min_size=5, max_size=5),
           st.floats(-0.5, 0.5))
    def test_slab_inclusion_pointwise(self, seed, d, dt):
        model = MvtModel.equicorrelated(5, 0.5, 3.0)
        w0 = np.full(5, 0.2)
        a = HalfSpace(w0 + np.array(d), 1.0 + dt)
        mc = mc_sym_diff(model, a, HalfSpace(w0, 1.0), 2000, seed)
        assert mc.slab_violations == 0

    def test_slab_check_detects_outsiders(self):
        # rows engineered to sit in the difference but far outside the slab of a wrong reference
        a, b = HalfSpace([1.0, 0.0], 0.0), HalfSpace([0.0, 1.0], 0.0)
        r = np.array([[1.0, -1.0], [-1.0, 1.0], [2.0, 2.0]])
        assert slab_inclusion_check(r, a, b) == 0
        bad = HalfSpace([0.0, 1.0], 5.0)
        assert slab_inclusion_check(np.array([[-10.0, -100.0]]), HalfSpace([0.0, 1.0], 0.0), bad) == 0

    def test_ray_slope_is_one(self, setup):
        model, w0, q0 = setup
        h = np.array([1.0, -1.0, 0.5, 0.0, -0.5])
        h /= np.linalg.norm(h)
        eps = np.logspace(-3, -1, 5)
        est = []
        for k, e in enumerate(eps):
            mc = mc_sym_diff(model, HalfSpace(w0 + e * h, q0), HalfSpace(w0, q0), 10**6, 100 + k)
            assert mc.slab_violations == 0
            est.append(mc.estimate)
        slope = np.polyfit(np.log(eps), np.log(est), 1)[0]
        assert slope == pytest.approx(1.0, abs=0.1)


class TestCalibration:
    def test_norms(self, setup):
        model, _, _ = setup
        s = sample_mvt(model, 10**5, 4)
        e = expected_norm(model)
        assert expected_norm(model) is e or expected_norm(model) == e
        assert plugin_norm(s) == pytest.approx(e, rel=0.01)

    def test_grid_radius(self, setup):
        model, w0, q0 = setup
        grid = perturbation_grid(model, w0, q0, 50, 0.05, 9, include_zero=True)
        assert len(grid) == 50
        assert np.array_equal(grid[0][0], w0) and grid[0][1] == q0
        for w, t in grid:
            assert np.linalg.norm(w - w0) <= 0.05 and abs(t - q0) <= 0.05

    @pytest.mark.parametrize("which", ["t_model", "generic"])
    def test_fitted_constant_has_no_holdout_violations(self, setup, which):
        model, w0, q0 = setup
        calib = perturbation_grid(model, w0, q0, 100, 0.05, 1)
        holdout = perturbation_grid(model, w0, q0, 100, 0.05, 2, include_zero=True)
        c = fit_constant(model, w0, q0, calib, which)
        reports = verify_bound(model, w0, q0, holdout, c, which)
        assert len(reports) == 100
        assert sum(r.violation for r in reports) == 0
        zero = reports[0]
        assert zero.slack == zero.bound_value == zero.observed == 0.0
        assert all(r.constant_used == c for r in reports)

    def test_tiny_constant_reports(self, setup):
        model, w0, q0 = setup
        grid = perturbation_grid(model, w0, q0, 20, 0.05, 2)
        reports = verify_bound(model, w0, q0, grid, 1e-6, "t_model")
        assert sum(r.violation for r in reports) == 20
        assert all(r.slack < 0 for r in reports)

    def test_monte_carlo_observations(self, setup):
        model, w0, q0 = setup
        grid = perturbation_grid(model, w0, q0, 5, 0.05, 2)
        reports = verify_bound(model, w0, q0, grid, 1.0, "t_model", n_mc=20000, seed=4)
        for r in reports:
            assert 0 <= r.observed <= 1 and r.mcse > 0
            exact = exact_sym_diff(model, HalfSpace(r.inputs["w"], r.inputs["t"]),
                                   HalfSpace(w0, q0))
            assert abs(r.observed - exact) <= 4 * r.mcse

    def test_t_bound_tighter_at_small_perturbations(self, setup):
        # both constants by least squares on one calibration grid; the
        # first-order bound tracks held-out observations more closely
        model, w0, q0 = setup
        calib = perturbation_grid(model, w0, q0, 100, 0.01, 21)
        holdout = perturbation_grid(model, w0, q0, 100, 0.01, 22)
        errs = {}
        for which in ("t_model", "generic"):
            c = fit_constant(model, w0, q0, calib, which, safety=1.0, method="lsq")
            reps = verify_bound(model, w0, q0, holdout, c, which)
            obs = np.array([r.observed for r in reps])
            bound = np.array([r.bound_value for r in reps])
            errs[which] = (np.mean(np.abs(bound - obs) / obs), np.sqrt(np.mean((bound - obs) ** 2)))
        assert errs["t_model"][0] < errs["generic"][0]
        assert errs["t_model"][1] < errs["generic"][1]

    def test_violation_rule(self):
        assert BoundReport(0.1, 0.05, 1.0, -0.05, mcse=0.02).violation is False
        assert BoundReport(0.1, 0.05, 1.0, -0.05, mcse=0.01).violation is True
        assert BoundReport(0.1, 0.05, 1.0, -0.05).violation is True

    def test_unknown_kind(self, setup):
        model, w0, q0 = setup
        with pytest.raises(ValueError):
            fit_constant(model, w0, q0, [(w0, q0 + 0.01)], "nope")

    def test_all_zero_grid(self, setup):
        model, w0, q0 = setup
        with pytest.raises(ValueError):
            fit_constant(model, w0, q0, [(w0, q0)], "t_model")
