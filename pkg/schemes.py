"""Constructive procedures built on the linear solver.

The monotone truncation scheme solves, for k = 1..K,

    (local + fractional) φ_k = γ φ_{k-1} / (|x|^2 + ε_k) + f_k,   φ_0 = 0,

with f_k = T_k(f) and ε_k = 1/k unless another schedule is requested. Every
step is a γ = 0 solve, so only the coercive part of the operator is ever
inverted. The remaining procedures (duality check, Φ_Ω, solvability trend,
uniqueness of limits, iterate bounds) reuse the same scheme.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from errors import DomainError, MlnHardyError, SchemeError
from grid import FieldVector, build_mesh, lp_norm, sample_field
from operators import assemble_operators, gradient_lp_norm, rho_sq
from solver import DEFAULT_TOL, solve_linear
from special import hardy_constant, truncate

logger = logging.getLogger(__name__)

# relative growth between consecutive ladder levels that counts as divergence
TREND_RATIO = 0.05


def _regularization_schedule(regularization):
    if callable(regularization):
        return regularization
    if regularization in (None, "inverse_k"):
        return lambda k: 1.0 / k
    if regularization == "none":
        return lambda k: 0.0
    raise DomainError(f"unknown regularization schedule '{regularization}'")


def _data_schedule(schedule):
    """Map a schedule name to (k, f_values) -> f_k values."""
    if callable(schedule):
        return schedule
    if schedule in (None, "truncation"):
        return lambda k, values: truncate(values, k)
    if schedule == "scaled":
        return lambda k, values: (1.0 - 1.0 / k) * values
    if schedule == "geometric":
        return lambda k, values: (1.0 - 2.0 ** (-k)) * values
    if schedule == "identity":
        return lambda k, values: values
    raise DomainError(f"unknown data schedule '{schedule}'")


@dataclass(frozen=True)
class IterationTrace:
    """Iterates φ_0 = 0, φ_1, ..., φ_K with one row of diagnostics per step."""

    iterates: list = field(repr=False)
    rows: list = field(repr=False)
    gamma: float
    direct: object = field(default=None, repr=False)
    final_distance: float = None
    parameters: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.iterates[-1]

    @property
    def steps(self):
        return len(self.iterates) - 1

    @property
    def max_monotonicity_defect(self):
        return max((row["monotonicity_defect"] for row in self.rows), default=0.0)

    @property
    def min_value(self):
        return min(float(phi.values.min()) for phi in self.iterates) if self.final.values.size else 0.0

    def to_frame(self):
        return pd.DataFrame(self.rows)

    def summary(self):
        return {
            "steps": self.steps,
            "gamma": self.gamma,
            "final_distance": self.final_distance,
            "max_monotonicity_defect": self.max_monotonicity_defect,
            "min_value": self.min_value,
            "parameters": dict(self.parameters),
        }


def _source_values(ops, f):
    if isinstance(f, FieldVector):
        if not f.mesh.same_as(ops.mesh):
            raise DomainError("source and operators live on different meshes")
        return f.values
    values = np.asarray(f, dtype=float)
    if values.shape != (ops.size,):
        raise DomainError(f"source has shape {values.shape}, expected ({ops.size},)")
    return values


def _check_coupling(ops, gamma):
    lam = hardy_constant(ops.n)
    if not 0.0 <= gamma < lam:
        raise DomainError(f"gamma={gamma} must lie in [0, Λ_n) = [0, {lam:g})")


def monotone_iteration(ops, gamma, f, K, tol=DEFAULT_TOL, regularization="inverse_k",
                       schedule="truncation", compare_direct=True, m_double_star=None):
    """Run the truncation scheme for K steps and compare with the direct solve.

    ``regularization`` gives ε_k ("inverse_k", "none" or a callable of k);
    ``schedule`` gives the data f_k ("truncation", "scaled", "geometric",
    "identity" or a callable of (k, values)).
    """
    _check_coupling(ops, gamma)
    if int(K) != K or K < 2:
        raise DomainError(f"the scheme needs K >= 2 steps, got {K}")
    values = _source_values(ops, f)
    if values.size and values.min() < 0:
        raise DomainError(f"the scheme needs f >= 0, found min {values.min():.3e}")

    epsilon = _regularization_schedule(regularization)
    data = _data_schedule(schedule)
    r2 = ops.mesh.radii ** 2
    phi = FieldVector.zeros(ops.mesh)
    iterates = [phi]
    rows = []
    for k in range(1, int(K) + 1):
        eps_k = float(epsilon(k))
        rhs = gamma * phi.values / (r2 + eps_k) + data(k, values)
        try:
            report = solve_linear(ops, 0.0, rhs, tol=tol, x0=phi.values)
        except MlnHardyError as exc:
            raise SchemeError(f"linear solve failed at step {k}: {exc}", step=k, cause=exc) from exc
        nxt = report.solution
        defect = float(np.max(phi.values - nxt.values, initial=0.0))
        rows.append({
            "step": k,
            "epsilon": eps_k,
            "L1": report.norms["L1"],
            "L2": report.norms["L2"],
            "rho_sq": report.norms["rho_sq"],
            "hardy": report.norms["hardy"],
            "min_value": report.min_value,
            "max_value": report.max_value,
            "monotonicity_defect": defect,
            "cg_iterations": report.iterations,
            "residual": report.residual_norm,
        })
        logger.debug("scheme step %d: L2 %.6e defect %.2e", k, report.norms["L2"], defect)
        phi = nxt
        iterates.append(phi)

    direct, distance = None, None
    if compare_direct:
        try:
            direct = solve_linear(ops, gamma, values, tol=tol)
        except MlnHardyError as exc:
            raise SchemeError(f"direct solve failed: {exc}", cause=exc) from exc
        reference = lp_norm(direct.solution, 2.0)
        scale = reference if reference > 0 else 1.0
        for row, iterate in zip(rows, iterates[1:]):
            gap = iterate.with_values(iterate.values - direct.solution.values)
            row["distance_to_direct"] = lp_norm(gap, 2.0) / scale
        distance = rows[-1]["distance_to_direct"]
        logger.info("scheme gamma=%g K=%d: relative L2 distance to direct solve %.3e",
                    gamma, K, distance)

    params = {
        "K": int(K),
        "tol": tol,
        "regularization": regularization if isinstance(regularization, str) else "custom",
        "schedule": schedule if isinstance(schedule, str) else "custom",
    }
    if m_double_star is not None and direct is not None:
        params["L_m**_direct"] = lp_norm(direct.solution, m_double_star)
    return IterationTrace(iterates, rows, float(gamma), direct, distance, params)


def _inner(mesh, a, b):
    return mesh.cell_volume * float(np.dot(a, b))


def duality_verify(ops, u, f, gamma, probes, tol=DEFAULT_TOL):
    """Largest normalized defect of ∫gu = γ∫(u hardy) w + ∫f w over the probes,
    where each w solves the γ-free problem with datum g."""
    u.check_mesh(f)
    if not u.mesh.same_as(ops.mesh):
        raise DomainError("u and operators live on different meshes")
    mesh = ops.mesh
    worst = 0.0
    for j, g in enumerate(probes):
        g_values = _source_values(ops, g)
        if not np.all(np.isfinite(g_values)):
            raise DomainError(f"probe {j} is not bounded")
        w = solve_linear(ops, 0.0, g_values, tol=tol).solution.values
        lhs = _inner(mesh, g_values, u.values)
        rhs = gamma * _inner(mesh, u.values * ops.hardy_diag, w) + _inner(mesh, f.values, w)
        defect = abs(lhs - rhs) / max(1.0, abs(lhs))
        logger.debug("duality probe %d: defect %.3e", j, defect)
        worst = max(worst, defect)
    return worst


def compute_phi_omega(ops, gamma, tol=DEFAULT_TOL):
    """Φ_Ω: the solution of (L - γ/|x|^2) u = 1, checked for positivity."""
    report = solve_linear(ops, gamma, np.ones(ops.size), tol=tol,
                          parameters={"quantity": "phi_omega"})
    if report.min_value < -1e-10:
        raise SchemeError(f"Φ_Ω has a negative value {report.min_value:.3e} at gamma={gamma:g}")
    mesh = ops.mesh
    deep = mesh.domain.depth(mesh.coordinates) >= 2.0 * mesh.h
    if deep.any():
        inner_min = float(report.solution.values[deep].min())
        if inner_min <= 0.0:
            raise SchemeError(f"Φ_Ω is not strictly positive inside the domain (min {inner_min:.3e})")
    return report


@dataclass(frozen=True)
class SolvabilityProbe:
    beta: float
    gamma: float
    ladder: tuple
    integrals: tuple
    ratios: tuple
    verdict: str

    def to_frame(self):
        return pd.DataFrame({
            "N": self.ladder,
            "integral": self.integrals,
            "ratio": (np.nan,) + tuple(self.ratios),
        })

    def summary(self):
        return {
            "beta": self.beta,
            "gamma": self.gamma,
            "ladder": list(self.ladder),
            "integrals": list(self.integrals),
            "ratios": list(self.ratios),
            "verdict": self.verdict,
            "trend_ratio": TREND_RATIO,
        }


def singular_source(beta, profile=None):
    """x -> |x|^{-β} profile(x), vectorized over the rows of x."""
    if beta < 0:
        raise DomainError(f"singularity exponent must be >= 0, got {beta}")

    def source(coords):
        r = np.sqrt(np.sum(coords ** 2, axis=1))
        values = r ** (-float(beta))
        if profile is not None:
            values = values * np.asarray(profile(coords), dtype=float)
        return values

    return source


def solvability_probe(domain, s, gamma, beta, ladder, profile=None, box_halfwidth=None,
                      threads=1, tol=DEFAULT_TOL):
    """Trend of I_N = ∫ f Φ_Ω over a refinement ladder, f = |x|^{-β} profile.

    ``box_halfwidth`` may be a number, a callable of N or None (aligned boxes).
    """
    ladder = tuple(int(N) for N in ladder)
    if len(ladder) < 3:
        raise DomainError(f"the solvability probe needs at least 3 mesh levels, got {len(ladder)}")
    if list(ladder) != sorted(set(ladder)):
        raise DomainError(f"mesh ladder must be strictly increasing, got {list(ladder)}")
    source = singular_source(beta, profile)

    integrals = []
    for N in ladder:
        L = box_halfwidth(N) if callable(box_halfwidth) else box_halfwidth
        mesh = build_mesh(domain, N, L)
        ops = assemble_operators(mesh, s, threads=threads)
        phi = compute_phi_omega(ops, gamma, tol=tol).solution
        f = sample_field(source, mesh)
        integrals.append(_inner(mesh, f.values, phi.values))
        logger.info("solvability probe N=%d: I_N = %.6e", N, integrals[-1])

    ratios = tuple(b / a for a, b in zip(integrals, integrals[1:]))
    diverging = all(r >= 1.0 + TREND_RATIO for r in ratios[-2:])
    verdict = "divergent-trend" if diverging else "finite-trend"
    return SolvabilityProbe(float(beta), float(gamma), ladder, tuple(integrals), ratios, verdict)


def sola_uniqueness_check(ops, gamma, f, schedule_a="truncation", schedule_b="geometric", K=30,
                          exponent=2.0, regularization="inverse_k", tol=DEFAULT_TOL):
    """Relative L^exponent distance between the limits of two data schedules.

    Both runs share the regularization schedule; pass m** as ``exponent``.
    """
    runs = []
    for schedule in (schedule_a, schedule_b):
        runs.append(monotone_iteration(ops, gamma, f, K, tol=tol, regularization=regularization,
                                       schedule=schedule, compare_direct=False).final)
    limit_a, limit_b = runs
    scale = lp_norm(limit_a, exponent)
    gap = lp_norm(limit_a.with_values(limit_a.values - limit_b.values), exponent)
    distance = gap / scale if scale > 0 else gap
    logger.info("limits of the two schedules differ by %.3e in L^%g", distance, exponent)
    return distance


@dataclass(frozen=True)
class IterateBounds:
    """One norm tabulated over the scheme iterates, plus the sup / reference ratio."""

    norm: str
    exponent: float
    frame: pd.DataFrame = field(repr=False)
    bound_ratio: float
    trace: IterationTrace = field(repr=False)

    @property
    def sup(self):
        return float(self.frame["value"].max())

    def summary(self):
        return {"norm": self.norm, "exponent": self.exponent, "sup": self.sup,
                "bound_ratio": self.bound_ratio}


def _gradient_table(trace, exponent, reference_step):
    mesh = trace.final.mesh
    values = [gradient_lp_norm(mesh, phi, exponent) for phi in trace.iterates[1:]]
    frame = pd.DataFrame({"step": np.arange(1, len(values) + 1), "value": values})
    reference = values[reference_step - 1]
    ratio = max(values) / reference if reference > 0 else float("inf")
    return frame, ratio


@dataclass(frozen=True)
class L1CaseBounds:
    tk_energies: pd.DataFrame = field(repr=False)
    grad_lp_norms: IterateBounds = field(repr=False)
    rho_sq_limit: float = 0.0

    def summary(self):
        return {
            "rho_sq_limit": self.rho_sq_limit,
            "tk_energies": self.tk_energies.to_dict(orient="list"),
            **self.grad_lp_norms.summary(),
        }


def l1_case_bounds(ops, gamma, f, K, k_levels, p, tol=DEFAULT_TOL, regularization="inverse_k"):
    """Energies of T_k(u) and ||∇φ_j||_{L^p} along the scheme for an L^1 datum."""
    threshold = ops.n / (ops.n - 1.0)
    if not 1.0 <= p < threshold:
        raise DomainError(
            f"gradient exponent p={p} must satisfy 1 <= p < n/(n-1) = {threshold:g}"
        )
    trace = monotone_iteration(ops, gamma, f, K, tol=tol, regularization=regularization,
                               compare_direct=False)
    u = trace.final
    energies = [rho_sq(ops, truncate(u.values, k)) for k in k_levels]
    tk = pd.DataFrame({"k": list(k_levels), "rho_sq": energies})
    frame, ratio = _gradient_table(trace, p, reference_step=min(2, trace.steps))
    return L1CaseBounds(tk, IterateBounds("grad_Lp", float(p), frame, ratio, trace), rho_sq(ops, u))


def w1m_star_bounds(ops, gamma, f, K, m, tol=DEFAULT_TOL, regularization="inverse_k"):
    """||∇φ_k||_{L^{m*}} along the scheme for an L^m datum with 1 < m < (2*)'."""
    n = ops.n
    upper = 2.0 * n / (n + 2.0)
    if not 1.0 < m < upper:
        raise DomainError(f"m={m} must lie in (1, (2*)') = (1, {upper:g})")
    m_star = n * m / (n - m)
    trace = monotone_iteration(ops, gamma, f, K, tol=tol, regularization=regularization,
                               compare_direct=False)
    frame, ratio = _gradient_table(trace, m_star, reference_step=1)
    return IterateBounds("grad_Lm*", m_star, frame, ratio, trace)


def bounded_solution_check(ops, gamma, f, K, m, tol=DEFAULT_TOL, regularization="inverse_k"):
    """sup_k ||φ_k||_∞ along the scheme for an L^m datum with m > n/2."""
    if not m > ops.n / 2.0:
        raise DomainError(f"bounded solutions need m > n/2 = {ops.n / 2.0:g}, got m={m}")
    values = _source_values(ops, f)
    if not np.isfinite(lp_norm(FieldVector(ops.mesh, values), m)):
        raise DomainError(f"datum is not in L^{m} on this mesh")
    trace = monotone_iteration(ops, gamma, f, K, tol=tol, regularization=regularization,
                               compare_direct=False)
    sup_norms = [lp_norm(phi, np.inf) for phi in trace.iterates[1:]]
    frame = pd.DataFrame({"step": np.arange(1, len(sup_norms) + 1), "value": sup_norms})
    ratio = max(sup_norms) / sup_norms[0] if sup_norms[0] > 0 else float("inf")
    return IterateBounds("Linf", float("inf"), frame, ratio, trace)


def comparison_defect(ops, gamma, f_low, f_high, tol=DEFAULT_TOL):
    """max (u_low - u_high)_+ for data f_low <= f_high; should not exceed 10 tol."""
    low, high = _source_values(ops, f_low), _source_values(ops, f_high)
    if np.any(low > high):
        raise DomainError("comparison needs f_low <= f_high nodewise")
    u_low = solve_linear(ops, gamma, low, tol=tol).solution.values
    u_high = solve_linear(ops, gamma, high, tol=tol).solution.values
    return float(np.max(u_low - u_high, initial=0.0))

