import numpy as np
import pytest

from errors import CoercivityError, ConvergenceError, DomainError
from grid import FieldVector
from solver import (
    coercivity_threshold,
    min_generalized_eigen,
    relative_residual,
    solve_linear,
    weight_vector,
)


class TestSolveLinear:
    """Preconditioned CG on A(γ) = local + fractional - γ hardy."""

    def test_constant_source(self, ball_ops):
        report = solve_linear(ball_ops, 0.15, np.ones(ball_ops.size))
        assert report.residual_norm <= 1e-10
        assert report.min_value > 0.0
        # the maximum sits at one of the eight nodes closest to the origin
        argmax = int(np.argmax(report.solution.values))
        assert ball_ops.mesh.radii[argmax] == pytest.approx(ball_ops.mesh.radii.min())
        for key in ("L1", "L2", "Linf", "rho_sq", "hardy"):
            assert key in report.norms
        assert report.parameters["s"] == 0.5

    def test_residual_matches_helper(self, small_ops, rng):
        f = rng.uniform(0.0, 1.0, small_ops.size)
        report = solve_linear(small_ops, 0.1, f)
        assert relative_residual(small_ops, 0.1, report.solution.values, f) == pytest.approx(
            report.residual_norm
        )

    def test_zero_source(self, small_ops):
        report = solve_linear(small_ops, 0.1, np.zeros(small_ops.size))
        assert report.iterations == 0
        assert report.max_value == 0.0

    def test_optional_lebesgue_norm(self, small_ops):
        report = solve_linear(small_ops, 0.0, np.ones(small_ops.size), m_double_star=3.9)
        assert report.norms["L_m**"] > 0

    def test_parameters_echoed(self, small_ops):
        report = solve_linear(small_ops, 0.0, np.ones(small_ops.size), parameters={"tag": "x"})
        assert report.to_dict()["parameters"]["tag"] == "x"

    def test_wrong_shape(self, small_ops):
        with pytest.raises(DomainError):
            solve_linear(small_ops, 0.0, np.ones(3))

    def test_wrong_mesh(self, small_ops, ball_mesh):
        with pytest.raises(DomainError):
            solve_linear(small_ops, 0.0, FieldVector.constant(ball_mesh, 1.0))

    def test_breakdown_far_above_threshold(self, small_ops):
        with pytest.raises(CoercivityError) as info:
            solve_linear(small_ops, 20.0, np.ones(small_ops.size))
        assert info.value.gamma == 20.0

    def test_iteration_cap(self, ball_ops):
        with pytest.raises(ConvergenceError) as info:
            solve_linear(ball_ops, 0.0, np.ones(ball_ops.size), maxit=2)
        assert len(info.value.residual_history) == 2


class TestDiscretePrinciples:

    @pytest.mark.parametrize("gamma", [0.0, 0.1, 0.2])
    def test_maximum_principle(self, small_ops, rng, gamma):
        for _ in range(50):
            f = rng.uniform(0.0, 1.0, small_ops.size) * (rng.uniform(size=small_ops.size) < 0.5)
            report = solve_linear(small_ops, gamma, f)
            assert report.min_value >= -1e-10, f"negative value {report.min_value} at gamma={gamma}"

    @pytest.mark.parametrize("gamma", [0.0, 0.1, 0.2])
    def test_comparison_principle(self, small_ops, rng, gamma):
        f1 = rng.uniform(0.0, 1.0, small_ops.size)
        f2 = f1 + rng.uniform(0.0, 0.5, small_ops.size)
        u1 = solve_linear(small_ops, gamma, f1).solution.values
        u2 = solve_linear(small_ops, gamma, f2).solution.values
        assert np.all(u1 <= u2 + 1e-9)


class TestEigen:
    """Inverse power iteration for λ_min(A(0), W)."""

    def test_hardy_eigenvalue_above_calibrated_bound(self, ball_ops):
        lam, v = min_generalized_eigen(ball_ops, "hardy")
        assert lam >= 0.8 * 0.25
        mass = ball_ops.mass
        assert mass * float(np.sum(ball_ops.hardy_diag * v.values ** 2)) == pytest.approx(1.0)
        assert np.all(v.values > 0) or np.all(v.values < 0)

    def test_fractional_part_raises_hardy_eigenvalue(self, ball_ops):
        mixed, _ = min_generalized_eigen(ball_ops, "hardy")
        local, _ = min_generalized_eigen(ball_ops.local_only(), "hardy")
        assert mixed >= local > 0.0, f"mixed {mixed:.4f} vs local {local:.4f}"

    def test_threshold_separates_coercive_couplings(self, small_ops):
        lam = coercivity_threshold(small_ops)
        report = solve_linear(small_ops, 0.95 * lam, np.ones(small_ops.size))
        assert report.min_value > 0.0

    def test_rayleigh_quotient_of_eigenvector(self, small_ops):
        lam, v = min_generalized_eigen(small_ops, "mass", tol=1e-10)
        quotient = float(v.values @ small_ops.apply(v.values)) / float(v.values @ v.values)
        assert quotient == pytest.approx(lam, rel=1e-10)

    def test_weight_validation(self, small_ops):
        with pytest.raises(DomainError):
            weight_vector(small_ops, "unknown")
        with pytest.raises(DomainError):
            weight_vector(small_ops, -np.ones(small_ops.size))
        np.testing.assert_allclose(
            weight_vector(small_ops, ("hardy_p", 2.0)), small_ops.hardy_diag
        )
