import numpy as np
import pytest

from errors import DomainError, SchemeError
from grid import FieldVector, build_mesh, sample_field
from operators import assemble_operators, rho_sq
from schemes import (
    TREND_RATIO,
    bounded_solution_check,
    comparison_defect,
    compute_phi_omega,
    duality_verify,
    l1_case_bounds,
    monotone_iteration,
    singular_source,
    sola_uniqueness_check,
    solvability_probe,
    w1m_star_bounds,
)
from solver import solve_linear
from special import exponent_table


def _power(ops, beta):
    return sample_field(singular_source(beta), ops.mesh)


class TestMonotoneIteration:
    """Truncation scheme φ_k = A(0)^{-1}(γ φ_{k-1}/(|x|^2 + ε_k) + T_k f)."""

    def test_gamma_zero_collapses_to_direct_solve(self, small_ops):
        trace = monotone_iteration(small_ops, 0.0, np.ones(small_ops.size), 5)
        for row in trace.rows:
            assert row["distance_to_direct"] <= 1e-9

    def test_monotone_and_non_negative(self, ball_ops):
        trace = monotone_iteration(ball_ops, 0.15, np.ones(ball_ops.size), 30)
        assert trace.max_monotonicity_defect <= 1e-8
        assert trace.min_value >= -1e-9
        assert len(trace.iterates) == 31
        assert np.all(trace.iterates[0].values == 0.0)

    def test_default_schedule_approaches_direct_solve(self, ball_ops):
        short = monotone_iteration(ball_ops, 0.15, np.ones(ball_ops.size), 10)
        longer = monotone_iteration(ball_ops, 0.15, np.ones(ball_ops.size), 30)
        assert longer.final_distance < short.final_distance

    @pytest.mark.parametrize("gamma", [0.05, 0.10, 0.15, 0.20])
    @pytest.mark.parametrize("beta", [0.0, 1.0])
    def test_agrees_with_direct_solve(self, ball_ops, gamma, beta):
        f = _power(ball_ops, beta)
        trace = monotone_iteration(ball_ops, gamma, f, 30, regularization="none")
        assert trace.final_distance <= 1e-4, f"distance {trace.final_distance:.2e}"
        assert trace.max_monotonicity_defect <= 1e-8

    def test_trace_frame(self, small_ops):
        trace = monotone_iteration(small_ops, 0.1, np.ones(small_ops.size), 4)
        frame = trace.to_frame()
        assert list(frame["step"]) == [1, 2, 3, 4]
        assert {"L1", "L2", "rho_sq", "hardy", "monotonicity_defect", "distance_to_direct"} <= set(frame)
        assert trace.summary()["steps"] == 4

    def test_preconditions(self, small_ops):
        ones = np.ones(small_ops.size)
        with pytest.raises(DomainError):
            monotone_iteration(small_ops, 0.1, -ones, 5)
        with pytest.raises(DomainError):
            monotone_iteration(small_ops, 0.1, ones, 1)
        with pytest.raises(DomainError):
            monotone_iteration(small_ops, 0.25, ones, 5)

    def test_solver_failure_carries_step(self, small_ops):
        with pytest.raises(SchemeError) as info:
            monotone_iteration(small_ops, 0.1, np.ones(small_ops.size), 3, tol=1e-30)
        assert info.value.step == 1


class TestDuality:
    """∫gu = γ∫(u/|x|^2) w + ∫f w for γ-free adjoint solutions w."""

    def _solution(self, ops, gamma):
        f = FieldVector.constant(ops.mesh, 1.0)
        return f, solve_linear(ops, gamma, f).solution

    def test_solver_output_satisfies_identity(self, ball_ops, rng):
        f, u = self._solution(ball_ops, 0.15)
        probes = [rng.uniform(0.0, 1.0, ball_ops.size) for _ in range(20)]
        assert duality_verify(ball_ops, u, f, 0.15, probes) <= 100 * 1e-10

    def test_adjoint_identity_at_gamma_zero(self, small_ops, rng):
        f, g = rng.uniform(0.0, 1.0, (2, small_ops.size))
        u_f = solve_linear(small_ops, 0.0, f).solution.values
        u_g = solve_linear(small_ops, 0.0, g).solution.values
        assert float(g @ u_f) == pytest.approx(float(f @ u_g), rel=1e-9)

    def test_detects_single_node_corruption(self, ball_ops, rng):
        f, u = self._solution(ball_ops, 0.15)
        node = int(np.argmin(np.abs(ball_ops.mesh.radii - 0.5)))
        corrupted = u.copy()
        corrupted.values[node] += 1.0
        probes = [rng.uniform(0.0, 1.0, ball_ops.size) for _ in range(20)]
        assert duality_verify(ball_ops, corrupted, f, 0.15, probes) > 1e-3


class TestPhiOmega:

    def test_positive_with_maximum_near_origin(self, ball_ops):
        report = compute_phi_omega(ball_ops, 0.15)
        assert report.min_value > 0.0
        radii = ball_ops.mesh.radii
        assert radii[int(np.argmax(report.solution.values))] <= 2.0 * ball_ops.mesh.h

    def test_monotone_in_gamma(self, ball_ops):
        low = compute_phi_omega(ball_ops, 0.05).solution.values
        high = compute_phi_omega(ball_ops, 0.15).solution.values
        assert np.all(low <= high + 1e-8)

    def test_gamma_zero_is_torsion_type_solution(self, small_ops):
        phi = compute_phi_omega(small_ops, 0.0).solution.values
        direct = solve_linear(small_ops, 0.0, np.ones(small_ops.size)).solution.values
        np.testing.assert_allclose(phi, direct)

    def test_comparison_defect(self, small_ops, rng):
        low = rng.uniform(0.0, 1.0, small_ops.size)
        assert comparison_defect(small_ops, 0.1, low, 2.0 * low) <= 1e-9
        with pytest.raises(DomainError):
            comparison_defect(small_ops, 0.1, 2.0 * low + 1.0, low)


class TestSolvabilityProbe:
    """Trend of ∫ f Φ_Ω over the mesh ladder."""

    def test_short_ladder_rejected(self, unit_ball):
        with pytest.raises(DomainError):
            solvability_probe(unit_ball, 0.5, 0.15, 0.0, [12, 16])

    @pytest.mark.slow
    @pytest.mark.parametrize("beta,verdict", [
        (0.0, "finite-trend"), (1.0, "finite-trend"), (3.0, "divergent-trend"),
    ])
    def test_verdicts(self, unit_ball, beta, verdict):
        probe = solvability_probe(unit_ball, 0.5, 0.15, beta, [12, 16, 24])
        assert probe.verdict == verdict, f"ratios {probe.ratios}"
        assert len(probe.integrals) == 3
        if verdict == "divergent-trend":
            assert min(probe.ratios) >= 1.0 + TREND_RATIO
        assert len(probe.to_frame()) == 3


class TestSolaUniqueness:

    def test_two_schedules_share_the_direct_limit(self, ball_ops):
        ones = np.ones(ball_ops.size)
        distance = sola_uniqueness_check(ball_ops, 0.1, ones, "truncation", "geometric", 30,
                                         regularization="none")
        assert distance <= 1e-4
        direct = solve_linear(ball_ops, 0.1, ones).solution
        limit = monotone_iteration(ball_ops, 0.1, ones, 30, regularization="none",
                                   schedule="geometric")
        assert limit.final_distance <= 1e-4
        assert limit.direct.solution.values == pytest.approx(direct.values)

    def test_identical_schedules(self, small_ops):
        ones = np.ones(small_ops.size)
        assert sola_uniqueness_check(small_ops, 0.1, ones, "truncation", "truncation", 10) <= 1e-12

    def test_unbounded_datum(self, ball_ops):
        f = _power(ball_ops, 1.2)
        m2 = exponent_table(3, 0.5, 1.3).m_double_star
        distance = sola_uniqueness_check(ball_ops, 0.1, f, "truncation", "geometric", 40, exponent=m2)
        assert distance <= 1e-3

    def test_unknown_schedule(self, small_ops):
        with pytest.raises(DomainError):
            sola_uniqueness_check(small_ops, 0.1, np.ones(small_ops.size), "truncation", "bogus", 5)


class TestIterateBounds:

    def test_l1_exponent_threshold(self, small_ops):
        f = _power(small_ops, 2.5)
        with pytest.raises(DomainError) as info:
            l1_case_bounds(small_ops, 0.1, f, 5, [1, 2], 1.6)
        assert "1.5" in str(info.value)

    def test_l1_bounds(self, ball_ops):
        f = _power(ball_ops, 2.5)
        bounds = l1_case_bounds(ball_ops, 0.1, f, 40, [1, 2, 4, 8, 16, 32], 1.4)
        energies = bounds.tk_energies["rho_sq"].to_numpy()
        assert np.all(np.isfinite(energies))
        assert np.all(np.diff(energies) >= -1e-12 * energies.max())
        assert energies.max() <= bounds.rho_sq_limit * (1.0 + 1e-10)
        assert bounds.grad_lp_norms.bound_ratio <= 10.0
        assert len(bounds.grad_lp_norms.frame) == 40

    @pytest.mark.slow
    def test_l1_bound_stable_across_meshes(self, unit_ball):
        ratios = []
        for N in (12, 16):
            ops = assemble_operators(build_mesh(unit_ball, N), 0.5)
            bounds = l1_case_bounds(ops, 0.1, _power(ops, 2.5), 40, [1, 4, 16], 1.4)
            ratios.append(bounds.grad_lp_norms.bound_ratio)
        assert max(ratios) / min(ratios) <= 2.0

    def test_truncated_energy_below_full_energy(self, small_ops):
        u = solve_linear(small_ops, 0.1, np.ones(small_ops.size)).solution.values
        k = 0.5 * u.max()
        assert rho_sq(small_ops, np.minimum(u, k)) <= rho_sq(small_ops, u)

    def test_w1m_star_bounds(self, small_ops):
        f = _power(small_ops, 2.5)
        bounds = w1m_star_bounds(small_ops, 0.1, f, 10, 1.1)
        assert bounds.exponent == pytest.approx(3.3 / 1.9)
        assert np.isfinite(bounds.bound_ratio) and bounds.bound_ratio >= 1.0
        with pytest.raises(DomainError):
            w1m_star_bounds(small_ops, 0.1, f, 10, 1.3)

    def test_bounded_solution_check(self, small_ops):
        bounds = bounded_solution_check(small_ops, 0.1, np.ones(small_ops.size), 10, 2.0)
        assert bounds.sup == pytest.approx(bounds.trace.final.values.max())
        assert bounds.bound_ratio >= 1.0
        with pytest.raises(DomainError):
            bounded_solution_check(small_ops, 0.1, np.ones(small_ops.size), 10, 1.2)
