"""Property suite behind the ``verify`` command.

Every check returns (value, limit); a check passes when value <= limit.
The suite runs on one configured mesh (unit ball, N = 12 by default) so it
finishes in seconds.
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from analysis import (
    gaussian_profile,
    ground_state_inequality_check,
    local_rayleigh_quotient,
    power_inequality_check,
    rayleigh_quotient,
    scaling_study,
)
from errors import DomainError, MlnHardyError
from grid import Domain, FieldVector, build_mesh
from operators import assemble_operators
from schemes import comparison_defect, duality_verify, monotone_iteration
from solver import min_generalized_eigen, solve_linear
from special import exponent_table, gamma_fn, hardy_constant, normalization_constant, truncate

logger = logging.getLogger(__name__)


@dataclass
class SuiteContext:
    ops: object
    gamma: float
    tol: float
    rng: np.random.Generator


def check_constants(ctx):
    worst = abs(hardy_constant(3) - 0.25) + abs(hardy_constant(4) - 1.0)
    worst += abs(normalization_constant(3, 0.5) - np.pi ** -2)
    for n in (3, 4, 5, 6):
        conj = 2.0 * n / (n + 2.0)
        worst = max(worst, abs(exponent_table(n, 0.5, conj).gamma_m - hardy_constant(n)))
        for m in ctx.rng.uniform(1.0 + 1e-3, n / 2.0 - 1e-3, 5):
            t = exponent_table(n, 0.5, m)
            worst = max(worst, abs((t.alpha - 1.0) * t.m_conj - t.m_double_star) / t.m_double_star)
    return worst, 1e-10


def check_symmetry(ctx):
    dense = ctx.ops.matrix(ctx.gamma)
    return float(np.max(np.abs(dense - dense.T))) / float(np.max(np.abs(dense))), 1e-12


def check_off_diagonal_sign(ctx):
    dense = ctx.ops.matrix(0.0)
    np.fill_diagonal(dense, 0.0)
    return float(dense.max()), 0.0


def check_maximum_principle(ctx):
    worst = 0.0
    for _ in range(10):
        f = ctx.rng.uniform(0.0, 1.0, ctx.ops.size)
        report = solve_linear(ctx.ops, ctx.gamma, f, tol=ctx.tol)
        worst = max(worst, -report.min_value)
    return worst, 1e-10


def check_comparison(ctx):
    low = ctx.rng.uniform(0.0, 1.0, ctx.ops.size)
    high = low + ctx.rng.uniform(0.0, 1.0, ctx.ops.size)
    return comparison_defect(ctx.ops, ctx.gamma, low, high, tol=ctx.tol), 10.0 * ctx.tol


def check_scheme_monotonicity(ctx):
    trace = monotone_iteration(ctx.ops, ctx.gamma, np.ones(ctx.ops.size), 10, tol=ctx.tol,
                               compare_direct=False)
    return max(trace.max_monotonicity_defect, -trace.min_value), 10.0 * ctx.tol


def check_scheme_limit(ctx):
    trace = monotone_iteration(ctx.ops, ctx.gamma, np.ones(ctx.ops.size), 40, tol=ctx.tol,
                               regularization="none")
    return trace.final_distance, 1e-4


def check_duality(ctx):
    ops = ctx.ops
    f = FieldVector(ops.mesh, np.ones(ops.size))
    u = solve_linear(ops, ctx.gamma, f, tol=ctx.tol).solution
    probes = [ctx.rng.uniform(0.0, 1.0, ops.size) for _ in range(20)]
    return duality_verify(ops, u, f, ctx.gamma, probes, tol=ctx.tol), 100.0 * ctx.tol


def check_quotient_homogeneity(ctx):
    u = ctx.rng.uniform(0.1, 1.0, ctx.ops.size)
    q = rayleigh_quotient(ctx.ops, u)
    return abs(rayleigh_quotient(ctx.ops, 3.7 * u) - q) / q, 1e-12


def check_quotient_order(ctx):
    u = ctx.rng.uniform(0.1, 1.0, ctx.ops.size)
    return local_rayleigh_quotient(ctx.ops, u) - rayleigh_quotient(ctx.ops, u), 0.0


def check_ground_state(ctx):
    u = FieldVector(ctx.ops.mesh, ctx.rng.uniform(0.1, 2.0, ctx.ops.size))
    phi = FieldVector(ctx.ops.mesh, ctx.rng.normal(size=ctx.ops.size))
    return ground_state_inequality_check(u, phi, num_pairs=20_000), 1e-9


def check_power_inequality(ctx):
    worst = 0.0
    for a in (0.5, 1.0, 1.5, 2.5):
        worst = max(worst, power_inequality_check(a, 100_000) / 10.0 ** (a + 1.0))
    return worst, 1e-12


def check_scaling_identity(ctx):
    study = scaling_study(gaussian_profile(0.25), ctx.ops.s, [1, 2, 4, 8, 16], ctx.ops.mesh.domain,
                          N=ctx.ops.mesh.N)
    return study.decomposition_defect, 1e-10


def check_gamma_recurrence(ctx):
    xs = np.linspace(-2.0, 20.0, 2201)
    xs = xs[np.abs(xs - np.round(xs)) > 1e-6]
    worst = 0.0
    for x in xs:
        lhs, rhs = gamma_fn(x + 1.0), x * gamma_fn(x)
        worst = max(worst, abs(lhs - rhs) / abs(lhs))
    return worst, 1e-10


def check_truncation(ctx):
    a, b = ctx.rng.uniform(-5.0, 5.0, (2, 1000))
    worst = 0.0
    for k in (0.5, 1.0, 3.0):
        ta, tb = truncate(a, k), truncate(b, k)
        worst = max(worst, float(np.max(np.abs(ta - tb) - np.abs(a - b))))
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        worst = max(worst, float(np.max(truncate(lo, k) - truncate(hi, k))))
    nested = np.abs(truncate(truncate(a, 3.0), 1.0) - truncate(a, 1.0))
    return max(worst, float(nested.max())), 0.0


def check_index_bijection(ctx):
    mesh = ctx.ops.mesh
    interior = np.arange(mesh.count)
    round_trip = mesh.interior_index[mesh.interior_nodes]
    exterior = mesh.interior_index[~mesh.interior_mask.ravel()]
    defects = int(np.count_nonzero(round_trip != interior)) + int(np.count_nonzero(exterior != -1))
    return float(defects), 0.0


def check_diagonal_dominance(ctx):
    frac = ctx.ops.fractional
    diag = np.diag(frac)
    off = np.abs(frac).sum(axis=1) - np.abs(diag)
    dominance = float(np.max((off - diag) / diag))
    rows = ctx.ops.matrix(0.0).sum(axis=1)
    row_sums = float(-rows.min()) / float(np.max(ctx.ops.diagonal()))
    return max(dominance, row_sums), 1e-12


def check_coercivity(ctx):
    ops = ctx.ops
    lowest = np.inf
    for gamma in (ctx.gamma, 0.99 * hardy_constant(ops.n)):
        for _ in range(20):
            u = ctx.rng.normal(size=ops.size)
            lowest = min(lowest, float(u @ ops.apply(u, gamma)) / float(u @ u))
    return -lowest, 0.0


def check_hardy_witness(ctx):
    lam, _ = min_generalized_eigen(ctx.ops, "hardy", tol=1e-8)
    return 0.8 * hardy_constant(ctx.ops.n) - lam, 0.0


def check_adjoint_identity(ctx):
    f, g = ctx.rng.uniform(0.0, 1.0, (2, ctx.ops.size))
    u_f = solve_linear(ctx.ops, ctx.gamma, f, tol=ctx.tol).solution.values
    u_g = solve_linear(ctx.ops, ctx.gamma, g, tol=ctx.tol).solution.values
    lhs, rhs = float(g @ u_f), float(f @ u_g)
    return abs(lhs - rhs) / abs(lhs), 1e-9


def check_residual_report(ctx):
    f = ctx.rng.uniform(0.0, 1.0, ctx.ops.size)
    report = solve_linear(ctx.ops, ctx.gamma, f, tol=ctx.tol)
    dense = ctx.ops.matrix(ctx.gamma)
    recomputed = float(np.linalg.norm(f - dense @ report.solution.values) / np.linalg.norm(f))
    return max(abs(recomputed - report.residual_norm), recomputed - ctx.tol), 1e-2 * ctx.tol


CHECKS = {
    "constants": check_constants,
    "gamma_recurrence": check_gamma_recurrence,
    "truncation": check_truncation,
    "index_bijection": check_index_bijection,
    "symmetry": check_symmetry,
    "off_diagonal_sign": check_off_diagonal_sign,
    "diagonal_dominance": check_diagonal_dominance,
    "coercivity": check_coercivity,
    "hardy_witness": check_hardy_witness,
    "maximum_principle": check_maximum_principle,
    "comparison_principle": check_comparison,
    "scheme_monotonicity": check_scheme_monotonicity,
    "scheme_limit": check_scheme_limit,
    "duality_identity": check_duality,
    "adjoint_identity": check_adjoint_identity,
    "residual_report": check_residual_report,
    "quotient_homogeneity": check_quotient_homogeneity,
    "quotient_order": check_quotient_order,
    "ground_state_inequality": check_ground_state,
    "power_inequality": check_power_inequality,
    "scaling_identity": check_scaling_identity,
}


def run_suite(s=0.5, gamma=0.1, N=12, domain=None, tol=1e-10, seed=0, threads=1, names=None):
    """Run the property checks on ``domain`` (unit ball by default); returns a
    DataFrame with one row per check."""
    if not 0.0 <= gamma < hardy_constant((domain or Domain.ball(1.0, 3)).n):
        raise DomainError(f"suite coupling {gamma:g} must lie in [0, Λ_n)")
    mesh = build_mesh(domain or Domain.ball(1.0, 3), N)
    ops = assemble_operators(mesh, s, threads=threads)
    ctx = SuiteContext(ops, gamma, tol, np.random.default_rng(seed))
    rows = []
    for name in names or CHECKS:
        try:
            value, limit = CHECKS[name](ctx)
            passed, error = bool(value <= limit), ""
        except MlnHardyError as exc:
            value, limit, passed, error = np.nan, np.nan, False, str(exc)
        logger.info("check %-24s %s (%.3e <= %.1e)", name, "ok" if passed else "FAIL", value, limit)
        rows.append({"check": name, "value": value, "limit": limit, "passed": passed, "error": error})
    return pd.DataFrame(rows)
