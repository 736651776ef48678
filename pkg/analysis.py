"""Rayleigh quotients, scaling families, integrability sweeps and the pointwise
inequalities used along the way.

Tables come back as pandas DataFrames so that the driver can write them
directly; summaries are plain dicts.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from errors import CoercivityError, ConvergenceError, DomainError
from grid import Domain, FieldVector, build_mesh, lp_norm, sample_field
from operators import (
    assemble_operators,
    gagliardo_seminorm_sq,
    hardy_functional,
    local_energy,
    rho_sq,
)
from solver import DEFAULT_TOL, min_generalized_eigen, solve_linear
from special import exponent_table

logger = logging.getLogger(__name__)


def _hardy_or_raise(ops, u, p=2.0):
    value = hardy_functional(ops.mesh, u, p, s=ops.s if p != 2.0 else None)
    if value <= 0.0:
        raise DomainError("Hardy functional vanishes: the quotient needs u != 0")
    return value


def rayleigh_quotient(ops, u):
    """ρ(u)^2 / H(u)."""
    return rho_sq(ops, u) / _hardy_or_raise(ops, u)


def local_rayleigh_quotient(ops, u):
    """||∇u||^2 / H(u): the same quotient without the fractional part."""
    return local_energy(ops, u) / _hardy_or_raise(ops, u)


def gaussian_profile(width=0.25):
    def profile(coords):
        return np.exp(-np.sum(coords ** 2, axis=1) / (2.0 * width ** 2))

    return profile


@dataclass(frozen=True)
class ScalingStudy:
    s: float
    profile: str
    lambdas: tuple
    quotients: tuple
    local_quotient: float
    gradient_sq: float
    seminorm_sq: float
    hardy: float
    c_ns: float
    slope: float
    intercept: float
    decomposition_defect: float
    cross_check: dict = field(default_factory=dict)

    @property
    def gaps(self):
        return tuple(q - self.local_quotient for q in self.quotients)

    def to_frame(self):
        return pd.DataFrame({
            "lambda": self.lambdas,
            "quotient": self.quotients,
            "gap": self.gaps,
        })

    def summary(self):
        return {
            "s": self.s,
            "profile": self.profile,
            "local_quotient": self.local_quotient,
            "slope": self.slope,
            "expected_slope": 2.0 * self.s - 2.0,
            "intercept": self.intercept,
            "decomposition_defect": self.decomposition_defect,
            "cross_check": dict(self.cross_check),
        }


def scaling_study(profile, s, lambdas, domain=None, N=16, box_halfwidth=None, threads=1,
                  profile_name="gaussian", check_lambda=None):
    """Quotients of u_λ(x) = λ^{(n-2)/2} u(λx) over the given dilations.

    The functionals of u are measured once; the quotient at every λ then
    follows from the exact scale laws. One λ is recomputed by resampling u_λ
    on the mesh shrunk by 1/λ as a cross-check.
    """
    lambdas = tuple(float(lam) for lam in lambdas)
    if len(lambdas) < 4 or min(lambdas) < 1.0 or max(lambdas) / min(lambdas) < 8.0:
        raise DomainError("scaling study needs >= 4 dilations >= 1 spanning a factor of at least 8")
    if list(lambdas) != sorted(set(lambdas)):
        raise DomainError("dilations must be strictly increasing")
    domain = domain or Domain.ball(1.0, 3)
    n = domain.n

    mesh = build_mesh(domain, N, box_halfwidth)
    ops = assemble_operators(mesh, s, threads=threads)
    u = sample_field(profile, mesh)
    gradient = local_energy(ops, u)
    seminorm = gagliardo_seminorm_sq(ops, u)
    hardy = _hardy_or_raise(ops, u)
    fractional_part = 0.5 * ops.c_ns * seminorm

    local_q = gradient / hardy
    quotients = tuple((gradient + lam ** (2.0 * s - 2.0) * fractional_part) / hardy for lam in lambdas)
    gaps = np.array([q - local_q for q in quotients])
    if gaps.min() < 1e-13:
        raise DomainError(
            f"quotient gap fell to {gaps.min():.2e}; use a smaller range of dilations"
        )
    slope, intercept = np.polyfit(np.log(lambdas), np.log(gaps), 1)
    defect = max(
        abs(q - local_q - lam ** (2.0 * s - 2.0) * 0.5 * ops.c_ns * seminorm / hardy) / q
        for q, lam in zip(quotients, lambdas)
    )

    lam = float(check_lambda or lambdas[len(lambdas) // 2])
    shrunk = Domain(domain.kind, tuple(a / lam for a in domain.half_widths),
                    tuple(c / lam for c in domain.center))
    fine = build_mesh(shrunk, N, mesh.L / lam)
    fine_ops = assemble_operators(fine, s, threads=threads)
    dilated = sample_field(lambda x: lam ** ((n - 2) / 2.0) * np.asarray(profile(lam * x)), fine)
    resampled = rayleigh_quotient(fine_ops, dilated)
    predicted = (gradient + lam ** (2.0 * s - 2.0) * fractional_part) / hardy
    cross_check = {
        "lambda": lam,
        "resampled_quotient": resampled,
        "predicted_quotient": predicted,
        "relative_deviation": abs(resampled - predicted) / predicted,
    }
    logger.info("scaling study s=%g: slope %.4f (expected %.4f), cross-check deviation %.2e",
                s, slope, 2.0 * s - 2.0, cross_check["relative_deviation"])
    return ScalingStudy(
        s=float(s), profile=profile_name, lambdas=lambdas, quotients=quotients,
        local_quotient=local_q, gradient_sq=gradient, seminorm_sq=seminorm, hardy=hardy,
        c_ns=ops.c_ns, slope=float(slope), intercept=float(intercept),
        decomposition_defect=float(defect), cross_check=cross_check,
    )


@dataclass(frozen=True)
class HardyInfEstimate:
    frame: pd.DataFrame = field(repr=False)

    @property
    def values(self):
        return self.frame["lambda_min"].tolist()

    @property
    def spread(self):
        values = self.frame["lambda_min"]
        return float((values.max() - values.min()) / values.min())

    def summary(self):
        return {"values": self.values, "spread": self.spread,
                "domains": self.frame["domain"].tolist()}


def hardy_inf_estimate(domains, s, N, box_halfwidth=None, threads=1, tol=1e-8):
    """Discrete Hardy constant λ_min(A(0), 1/|x|^2) on each domain."""
    rows = []
    for domain in domains:
        mesh = build_mesh(domain, N, box_halfwidth)
        ops = assemble_operators(mesh, s, threads=threads)
        lam, _ = min_generalized_eigen(ops, "hardy", tol=tol)
        logger.info("λ_min on %s (N=%d): %.6f", domain.kind, N, lam)
        rows.append({"domain": domain.kind, "N": N, "interior": mesh.count, "lambda_min": lam})
    return HardyInfEstimate(pd.DataFrame(rows))


def _smooth_probe(rng, mesh):
    centre = rng.uniform(-0.5, 0.5, mesh.n) * mesh.domain.extent()
    width = rng.uniform(0.1, 0.5) * mesh.domain.extent()
    shifted = mesh.coordinates - centre
    return np.exp(-np.sum(shifted ** 2, axis=1) / (2.0 * width ** 2))


def mixed_hardy_p_probe(ops, p, num_probes=20, seed=0, tol=1e-8):
    """Smallest observed ρ(u)^2 / H_p(u) over random smooth probes and the
    generalized eigenvector of the weight |x|^{-p}."""
    if not 2.0 * ops.s <= p <= 2.0:
        raise DomainError(f"p={p} must lie in [2s, 2] = [{2.0 * ops.s:g}, 2]")
    rng = np.random.default_rng(seed)
    lowest, _ = min_generalized_eigen(ops, ("hardy_p", p), tol=tol)
    for _ in range(num_probes):
        v = _smooth_probe(rng, ops.mesh)
        lowest = min(lowest, rho_sq(ops, v) / hardy_functional(ops.mesh, v, p, s=ops.s))
    if not lowest > 0.0:
        raise DomainError(f"non-positive mixed Hardy quotient {lowest:g} for p={p}")
    return lowest


@dataclass(frozen=True)
class IntegrabilitySweep:
    m: float
    gamma_m: float
    m_double_star: float
    source_norm: float
    frame: pd.DataFrame = field(repr=False)

    @property
    def band(self):
        ratios = self.frame["bound_ratio"]
        return float(ratios.max() / ratios.min())

    @property
    def increasing(self):
        return bool(np.all(np.diff(self.frame["norm_m**"].to_numpy()) > 0))

    def summary(self):
        return {
            "m": self.m,
            "gamma(m)": self.gamma_m,
            "m**": self.m_double_star,
            "source_Lm": self.source_norm,
            "bound_ratio_band": self.band,
            "strictly_increasing": self.increasing,
        }


def integrability_sweep(ops, m, f, gammas, tol=DEFAULT_TOL, threads=1):
    """||u_γ||_{L^{m**}} over couplings below γ(m), with the a priori bound ratio
    (γ(m) - γ) ||u||_{m**} / ||f||_{L^m}."""
    n = ops.n
    lower, upper = 2.0 * n / (n + 2.0), n / 2.0
    if not lower < m < upper:
        raise DomainError(f"m={m} must lie in ((2*)', n/2) = ({lower:g}, {upper:g})")
    table = exponent_table(n, ops.s, m)
    gamma_m, m2 = table.require("gamma_m"), table.require("m_double_star")
    gammas = sorted(float(g) for g in gammas)
    for g in gammas:
        if g < 0 or g >= gamma_m:
            raise DomainError(f"coupling {g:g} is not in [0, γ(m)) with γ(m) = {gamma_m:.6g}")
    source = f if isinstance(f, FieldVector) else FieldVector(ops.mesh, f)
    f_norm = lp_norm(source, m)

    def run(gamma):
        return solve_linear(ops, gamma, source, tol=tol, m_double_star=m2)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(run, gammas))
    else:
        reports = [run(g) for g in gammas]

    rows = []
    for gamma, report in zip(gammas, reports):
        norm = report.norms["L_m**"]
        rows.append({
            "gamma": gamma,
            "norm_m**": norm,
            "bound_ratio": (gamma_m - gamma) * norm / f_norm,
            "residual": report.residual_norm,
        })
    return IntegrabilitySweep(float(m), gamma_m, m2, f_norm, pd.DataFrame(rows))


def _pairs(count, num_pairs, rng):
    if count * (count - 1) // 2 <= num_pairs:
        return np.triu_indices(count, k=1)
    return rng.integers(0, count, num_pairs), rng.integers(0, count, num_pairs)


def ground_state_inequality_check(u, phi, num_pairs=100_000, seed=0):
    """max over node pairs of (u_x - u_y)(ψ_x - ψ_y) - (φ_x - φ_y)^2 with ψ = φ^2/u.

    Every pair is enumerated when there are at most ``num_pairs`` of them.
    """
    u.check_mesh(phi)
    if np.any(u.values <= 0):
        raise DomainError("ground state check needs u > 0 at every node")
    psi = phi.values ** 2 / u.values
    i, j = _pairs(len(u), int(num_pairs), np.random.default_rng(seed))
    lhs = (u.values[i] - u.values[j]) * (psi[i] - psi[j])
    rhs = (phi.values[i] - phi.values[j]) ** 2
    return float(np.max(lhs - rhs, initial=0.0))


def power_inequality_check(a, num_samples=1_000_000, upper=10.0, seed=0):
    """max of (4a/(a+1)^2)(s1^{(a+1)/2} - s2^{(a+1)/2})^2 - (s1 - s2)(s1^a - s2^a)."""
    if a <= 0:
        raise DomainError(f"exponent a must be positive, got {a}")
    rng = np.random.default_rng(seed)
    s1, s2 = rng.uniform(0.0, upper, (2, int(num_samples)))
    half = (a + 1.0) / 2.0
    lhs = (s1 - s2) * (s1 ** a - s2 ** a)
    rhs = 4.0 * a / (a + 1.0) ** 2 * (s1 ** half - s2 ** half) ** 2
    return float(np.max(rhs - lhs))


def supersolution_hardy_check(ops, u, gamma, probes):
    """Largest relative excess of γ H(v) over ρ(v)^2 among the probes, given a
    positive u with A(0)u >= γ hardy u."""
    if np.any(u.values <= 0):
        raise DomainError("supersolution must be positive at every node")
    excess = ops.apply(u.values) - gamma * ops.hardy_diag * u.values
    slack = 1e-9 * float(np.max(np.abs(ops.apply(u.values))))
    if excess.min() < -slack:
        raise DomainError(f"u is not a supersolution at gamma={gamma:g} (defect {excess.min():.3e})")
    worst = -math.inf
    for v in probes:
        values = v.values if isinstance(v, FieldVector) else np.asarray(v, dtype=float)
        energy = rho_sq(ops, values)
        worst = max(worst, (gamma * hardy_functional(ops.mesh, values) - energy) / energy)
    return worst


def nonexistence_scan(ops, gammas, tol=DEFAULT_TOL):
    """Status of the f = 1 solve at each coupling: positive, sign-changing,
    breakdown (non-positive curvature) or no-convergence."""
    rows = []
    rhs = np.ones(ops.size)
    for gamma in sorted(float(g) for g in gammas):
        row = {"gamma": gamma, "status": None, "min_value": np.nan, "max_value": np.nan,
               "iterations": np.nan}
        try:
            report = solve_linear(ops, gamma, rhs, tol=tol)
        except CoercivityError as exc:
            row["status"] = "breakdown"
            row["iterations"] = exc.iteration
        except ConvergenceError:
            row["status"] = "no-convergence"
        else:
            row.update(min_value=report.min_value, max_value=report.max_value,
                       iterations=report.iterations)
            row["status"] = "positive" if report.min_value >= -1e-10 else "sign-changing"
        logger.info("gamma=%g: %s", gamma, row["status"])
        rows.append(row)
    return pd.DataFrame(rows)
