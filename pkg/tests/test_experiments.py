"""Experiment orchestration: convergence, martingale statistic, stability."""

import pytest

from rankflow.bumps import Bump1D
from rankflow.coefficients import build_from_sources
from rankflow.experiments import (
    PhiConst,
    PhiLinear,
    PhiSquare,
    PhiTanh,
    PsiConst,
    PsiCosNoise,
    PsiTanhPairing,
    bias_allowance,
    convergence_study,
    martingale_statistic,
    stability_experiment,
)
from rankflow.measures import gaussian, grid_cdf, point_mass
from rankflow.randomness import sample_path, STREAM_COMMON
from rankflow.solver import SolverConfig


@pytest.fixture(scope="module")
def cs_const():
    return build_from_sources("1", "1", "0.5", 64)


class TestConvergenceStudy:
    def test_frozen_dynamics_single_particle(self):
        """All coefficients zero with a point mass: the error reduces to the
        solver's deterministic projection error and does not vary across
        replicas."""
        cs = build_from_sources("0", "0", "0", 16, allow_degenerate=True)
        rep = convergence_study(
            cs, point_mass(0.0), [1], 3, SolverConfig(-2.0, 2.0, 64),
            [0.5, 1.0], seed=9, T=1.0, steps=8, reference="spde",
        )
        errors = [r[2] for r in rep.rows]
        assert len(set(errors)) == 1
        assert errors[0] == pytest.approx(0.015625)  # dx/4 projection error

    def test_constant_coefficients_root_n_scaling(self, cs_const):
        rep = convergence_study(
            cs_const, point_mass(0.0), [100, 1600], 10,
            SolverConfig(-11.0, 12.0, 128), [0.5, 1.0],
            seed=42, T=1.0, steps=128, reference="analytic",
        )
        means = rep.summary["mean_error"]
        ratio = means[100] / means[1600]
        assert 2.5 <= ratio <= 6.5

    def test_analytic_reference_requires_constant_coefficients(self):
        cs = build_from_sources("a", "1", "1", 16)
        with pytest.raises(ValueError):
            convergence_study(
                cs, point_mass(0.0), [10], 2, SolverConfig(-8.0, 8.0, 32),
                [1.0], seed=1, T=1.0, steps=8, reference="analytic",
            )

    def test_stderr_clt_shrink(self, cs_const):
        """Doubling the replica count shrinks the stderr by roughly sqrt(2):
        the ratio lands in [1.2, 1.7]."""
        r1 = convergence_study(cs_const, point_mass(0.0), [64], 16,
                               SolverConfig(-11.0, 12.0, 64), [1.0],
                               seed=11, T=1.0, steps=64, reference="analytic")
        r2 = convergence_study(cs_const, point_mass(0.0), [64], 32,
                               SolverConfig(-11.0, 12.0, 64), [1.0],
                               seed=11, T=1.0, steps=64, reference="analytic")
        ratio = r1.summary["stderr"][64] / r2.summary["stderr"][64]
        assert 1.2 <= ratio <= 1.7

    def test_report_reproducible_and_thread_invariant(self, cs_const):
        kw = dict(seed=5, T=0.5, steps=32, reference="analytic")
        reps = [
            convergence_study(cs_const, point_mass(0.0), [16, 32], 6,
                              SolverConfig(-9.0, 9.0, 32), [0.5], threads=thr, **kw)
            for thr in (1, 4)
        ]
        assert reps[0].rows == reps[1].rows

    def test_rows_schema(self, cs_const):
        rep = convergence_study(cs_const, point_mass(0.0), [8], 2,
                                SolverConfig(-9.0, 9.0, 32), [0.5],
                                seed=5, T=0.5, steps=16, reference="analytic")
        assert rep.columns == ("n", "replica", "error")
        assert all(len(r) == 3 for r in rep.rows)


class TestMartingaleStatistic:
    def test_constant_phi_statistic_exactly_zero(self, cs_const):
        rep = martingale_statistic(
            cs_const, gaussian(0, 1), [Bump1D(0.0, 2.0)], PhiConst(), PsiConst(),
            s=0.25, t=0.5, n=32, replicas=8, steps=16, seed=3,
        )
        assert rep.summary["estimate"] == 0.0
        assert rep.summary["stderr"] == 0.0

    def test_equal_endpoints_statistic_exactly_zero(self, cs_const):
        rep = martingale_statistic(
            cs_const, gaussian(0, 1), [Bump1D(0.0, 2.0)], PhiLinear(), PsiConst(),
            s=0.5, t=0.5, n=32, replicas=8, steps=16, seed=3,
        )
        assert rep.summary["estimate"] == 0.0

    def test_linear_phi_centered(self, cs_const):
        rep = martingale_statistic(
            cs_const, gaussian(0, 1), [Bump1D(0.0, 2.0)], PhiLinear(), PsiConst(),
            s=0.25, t=0.5, n=128, replicas=60, steps=64, seed=13,
        )
        C = bias_allowance(cs_const, [Bump1D(0.0, 2.0)], PhiLinear(), 0.25, 0.5)
        assert abs(rep.summary["estimate"]) <= 3 * rep.summary["stderr"] + C / 128

    def test_nonlinear_phi_and_psi_families(self, cs_const):
        for phi, psi in [(PhiTanh(2.0), PsiTanhPairing()), (PhiSquare(1.0), PsiCosNoise())]:
            rep = martingale_statistic(
                cs_const, gaussian(0, 1), [Bump1D(0.0, 2.0)], phi, psi,
                s=0.25, t=0.5, n=128, replicas=60, steps=64, seed=13,
            )
            C = rep.summary["allowance_C"]
            assert abs(rep.summary["estimate"]) <= 3 * rep.summary["stderr"] + C / 128

    def test_allowance_zero_for_constant_coefficients_linear_phi(self, cs_const):
        # constant coefficients have exact rank sums and linear phi has no
        # Ito correction, so the budget vanishes
        assert bias_allowance(cs_const, [Bump1D(0.0, 2.0)], PhiLinear(), 0.0, 1.0) == 0.0

    def test_allowance_positive_for_varying_coefficients(self):
        cs = build_from_sources("a - 0.5", "1", "0.5*(1 + a)", 32)
        assert bias_allowance(cs, [Bump1D(0.0, 2.0)], PhiTanh(2.0), 0.0, 1.0) > 0.0

    def test_off_grid_s_rejected(self, cs_const):
        with pytest.raises(ValueError):
            martingale_statistic(
                cs_const, gaussian(0, 1), [Bump1D(0.0, 2.0)], PhiLinear(), PsiConst(),
                s=0.333, t=0.5, n=8, replicas=2, steps=10, seed=1,
            )


@pytest.fixture(scope="module")
def stability_report():
    cs = build_from_sources("a - 0.5", "1", "0.5*(1 + a)", 64)
    cfg = SolverConfig(-18.0, 18.0, 128)
    u0 = grid_cdf(gaussian(0, 1), cfg.x_min, cfg.x_max, cfg.cells)
    W = sample_path(11, STREAM_COMMON, 1.0, 96)
    return stability_experiment(cs, u0, W, [0.0, 0.04, 0.16, 0.64], cfg,
                                snapshot_times=[0.5, 1.0])


class TestStabilityExperiment:

    def test_zero_perturbation_zero_distance(self, stability_report):
        assert stability_report.rows[0][0] == 0.0
        assert stability_report.rows[0][1] == 0.0

    def test_distance_nondecreasing(self, stability_report):
        ds = [r[1] for r in stability_report.rows]
        assert all(a <= b + 1e-15 for a, b in zip(ds[:-1], ds[1:]))

    def test_implied_constant_within_factor_three(self, stability_report):
        assert stability_report.summary["implied_C_spread"] <= 3.0

    def test_pure_shift_oracle(self):
        """sigma -> 0 limit: the exact solutions translate rigidly, so
        D(eps) = gamma0 * eps at the final time (quadrature-exact)."""
        from rankflow.measures import w1
        from rankflow.solver import analytic_constant_solution

        cfg = SolverConfig(-12.0, 12.0, 256)
        init = gaussian(0.0, 1.0)
        for eps in (0.04, 0.16, 0.64):
            a = analytic_constant_solution(init, 1.0, 0.0, 0.75, 1.0, 0.3, cfg)
            b = analytic_constant_solution(init, 1.0, 0.0, 0.75, 1.0, 0.3 + eps, cfg)
            assert w1(a, b) == pytest.approx(0.75 * eps, rel=1e-9)

    def test_decreasing_epsilons_rejected(self, cs_const):
        cfg = SolverConfig(-11.0, 12.0, 32)
        u0 = grid_cdf(point_mass(0.0), cfg.x_min, cfg.x_max, cfg.cells)
        W = sample_path(1, STREAM_COMMON, 1.0, 16)
        with pytest.raises(ValueError):
            stability_experiment(cs_const, u0, W, [0.5, 0.1], cfg)
