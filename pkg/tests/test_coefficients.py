"""Antiderivative tables against an adaptive-quadrature oracle, plus
validation behavior."""

import numpy as np
import pytest
from scipy.integrate import quad

from rankflow.coefficients import (
    DomainError,
    NondegeneracyViolated,
    PositivityViolated,
    TRANSFORMS,
    ValidationError,
    build_from_sources,
    validate,
)
from rankflow.expr import parse_coefficient


class TestBuildExamples:
    def test_constant_coefficients(self):
        cs = build_from_sources("0", "sqrt(2)", "0", 32, allow_degenerate=True)
        r = np.linspace(0, 1, 11)
        np.testing.assert_allclose(cs.eval_transform("B", r), 0.0, atol=1e-15)
        np.testing.assert_allclose(cs.eval_transform("Sigma", r), r, atol=1e-14)
        np.testing.assert_allclose(cs.eval_transform("Gamma", r), 0.0, atol=1e-15)
        np.testing.assert_allclose(cs.eval_transform("G", r), 0.0, atol=1e-15)
        np.testing.assert_allclose(cs.eval_transform("S", r), np.sqrt(2) * r, atol=1e-14)

    def test_polynomial_antiderivative(self):
        cs = build_from_sources("a", "1", "1", 16)
        assert cs.eval_transform("B", 1.0) == pytest.approx(0.5, abs=1e-15)

    def test_affine_gamma_values(self):
        cs = build_from_sources("0", "1", "1 + a", 16)
        # int_0^0.5 (1+a) da and 0.5*int_0^0.5 (1+a)^2 da
        assert cs.eval_transform("G", 0.5) == pytest.approx(0.625, abs=1e-14)
        assert cs.eval_transform("Gamma", 0.5) == pytest.approx(
            0.5 * (0.5 + 0.25 + 0.125 / 3), abs=1e-14
        )
        assert cs.eval_transform("Gamma", 1.0) == pytest.approx(7.0 / 6.0, abs=1e-14)

    def test_low_resolution_rejected(self):
        with pytest.raises(ValidationError):
            build_from_sources("0", "1", "1", 8)


class TestQuadratureOracle:
    """Table evaluation vs scipy.integrate.quad at tolerance 1e-12."""

    @pytest.mark.parametrize(
        "b,sigma,gamma",
        [
            ("a - 0.5", "1 + a/2", "0.5*(1 + a)"),
            ("sin(a)", "exp(a/2)", "1 + a^2"),
            ("cos(2*a)", "sqrt(1 + a)", "2 - a"),
        ],
    )
    def test_matches_adaptive_quadrature(self, b, sigma, gamma):
        cs = build_from_sources(b, sigma, gamma, 32)
        fb = parse_coefficient(b)
        fs = parse_coefficient(sigma)
        fg = parse_coefficient(gamma)
        integrands = {
            "B": lambda a: fb(a),
            "Sigma": lambda a: 0.5 * fs(a) ** 2,
            "Gamma": lambda a: 0.5 * fg(a) ** 2,
            "G": lambda a: fg(a),
            "S": lambda a: fs(a),
        }
        rng = np.random.default_rng(5)
        for which in TRANSFORMS:
            for r in rng.uniform(0, 1, 8):
                expected = quad(integrands[which], 0.0, r, epsabs=1e-13, epsrel=1e-13)[0]
                assert cs.eval_transform(which, float(r)) == pytest.approx(expected, abs=1e-12)


class TestValidate:
    def test_valid_unit_coefficients(self):
        cs = build_from_sources("0", "1", "1", 16)
        rep = validate(cs)
        assert rep.c_sigma == 1.0
        assert rep.inf_gamma == 1.0
        assert not rep.warnings

    def test_degenerate_sigma_rejected(self):
        with pytest.raises(NondegeneracyViolated):
            build_from_sources("0", "0", "1", 16)

    def test_gamma_zero_at_origin_rejected(self):
        with pytest.raises(PositivityViolated):
            build_from_sources("0", "1", "a", 16)

    def test_allow_degenerate_downgrades_to_warning(self):
        cs = build_from_sources("0", "1", "a", 16, allow_degenerate=True)
        assert cs.report.warnings

    def test_undefined_evaluation_always_rejected(self):
        with pytest.raises(ValidationError):
            build_from_sources("0", "1/a", "1", 16, allow_degenerate=True)
        with pytest.raises(ValidationError):
            build_from_sources("sqrt(a - 0.5)", "1", "1", 16, allow_degenerate=True)

    def test_report_sups(self):
        cs = build_from_sources("a - 0.5", "1 + a", "2", 16)
        assert cs.report.sup_abs_b == pytest.approx(0.5)
        assert cs.report.sup_abs_sigma == pytest.approx(2.0)
        assert cs.report.sup_abs_gamma == pytest.approx(2.0)


class TestEvalTransform:
    def test_domain_error_beyond_tolerance(self):
        cs = build_from_sources("0", "1", "1", 16)
        with pytest.raises(DomainError):
            cs.eval_transform("Sigma", 1.001)
        with pytest.raises(DomainError):
            cs.eval_transform("Sigma", -0.001)

    def test_clamp_within_tolerance(self):
        cs = build_from_sources("0", "1", "1", 16)
        assert cs.eval_transform("Sigma", 1.0 + 5e-13) == pytest.approx(0.5)
        assert cs.eval_transform("Sigma", -5e-13) == 0.0

    def test_zero_at_origin(self):
        cs = build_from_sources("a", "1 + a", "2 - a", 32)
        for which in TRANSFORMS:
            assert cs.eval_transform(which, 0.0) == 0.0

    def test_unknown_transform_name(self):
        cs = build_from_sources("0", "1", "1", 16)
        with pytest.raises(KeyError):
            cs.eval_transform("Q", 0.5)

    def test_nondecreasing_in_r(self):
        cs = build_from_sources("a - 0.5", "1 + a/2", "0.5*(1 + a)", 32)
        rng = np.random.default_rng(11)
        r = np.sort(rng.uniform(0, 1, 200))
        for which in ("Sigma", "Gamma", "G", "S"):
            vals = cs.eval_transform(which, r)
            assert np.all(np.diff(vals) >= -1e-14)


def _random_positive_poly(rng):
    c = rng.uniform(0.05, 2.0, 3)
    return f"{c[0]:.6f} + {c[1]:.6f}*a + {c[2]:.6f}*a^2"


def _random_signed_poly(rng):
    c = rng.uniform(-2.0, 2.0, 3)
    return f"{c[0]:.6f} + {c[1]:.6f}*a + {c[2]:.6f}*a^2"


def test_invariants_on_200_random_polynomial_triples():
    """Table-node invariants and the Cauchy-Schwarz bound
    G(r)^2 <= 2 r Gamma(r) on random coefficient sets."""
    rng = np.random.default_rng(20240518)
    sample_r = rng.uniform(0, 1, 1000)
    for trial in range(200):
        cs = build_from_sources(
            _random_signed_poly(rng), _random_positive_poly(rng), _random_positive_poly(rng), 16
        )
        nodes = np.arange(17) / 16
        for which in ("Sigma", "Gamma", "G", "S"):
            table = cs.transform_table(which)
            assert table[0] == 0.0
            assert np.all(np.diff(table) >= -1e-14)
        b_table = cs.transform_table("B")
        assert b_table[0] == 0.0
        lip = cs.report.sup_abs_b
        assert np.all(np.abs(np.diff(b_table)) <= lip / 16 + 1e-12)
        if trial < 20:  # the sampled bound is slow; spot-check a subset densely
            g = cs.eval_transform("G", sample_r)
            gam = cs.eval_transform("Gamma", sample_r)
            assert np.all(g**2 <= 2 * sample_r * gam + 1e-12)
        else:
            g = cs.eval_transform("G", nodes)
            gam = cs.eval_transform("Gamma", nodes)
            assert np.all(g**2 <= 2 * nodes * gam + 1e-12)


def test_symbolic_derivatives_attached():
    cs = build_from_sources("a^2", "1", "1 + a", 16)
    xs = np.linspace(0.1, 0.9, 7)
    np.testing.assert_allclose(cs.b_prime(xs), 2 * xs, rtol=1e-12)
    np.testing.assert_allclose(cs.gamma_prime(xs), 1.0, rtol=1e-12)
