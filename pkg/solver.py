"""Linear solves and the smallest generalized eigenpair of A(0) against a weight."""
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from errors import CoercivityError, ConvergenceError, DomainError
from grid import FieldVector, lp_norm
from operators import hardy_functional, rho_sq

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


def default_maxit(count):
    return int(20 * math.sqrt(count)) + 500


@dataclass(frozen=True)
class SolveReport:
    solution: FieldVector = field(repr=False)
    residual_norm: float
    iterations: int
    gamma: float
    norms: dict
    min_value: float
    max_value: float
    wall_time: float
    parameters: dict = field(default_factory=dict)
    residual_history: tuple = field(default=(), repr=False)

    def to_dict(self):
        return {
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "gamma": self.gamma,
            "norms": dict(self.norms),
            "min_value": self.min_value,
            "max_value": self.max_value,
            "wall_time": self.wall_time,
            "parameters": dict(self.parameters),
        }


def relative_residual(ops, gamma, u, rhs):
    """||A(γ)u - rhs|| / ||rhs||; the cell volume cancels out of the ratio."""
    rhs = np.asarray(rhs, dtype=float)
    scale = float(np.linalg.norm(rhs))
    residual = float(np.linalg.norm(rhs - ops.apply(u, gamma)))
    return residual / scale if scale > 0 else residual


def _pcg(ops, gamma, b, tol, maxit, x0=None):
    diag = ops.diagonal(gamma)
    if np.any(diag <= 0):
        raise CoercivityError(
            f"form not coercive at gamma={gamma:g} on this mesh (non-positive diagonal)",
            gamma=gamma,
        )
    inv_diag = 1.0 / diag
    b_norm = float(np.linalg.norm(b))
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    history = []
    if b_norm == 0.0:
        return np.zeros_like(b), 0, [0.0]

    r = b - ops.apply(x, gamma)
    if x0 is not None and float(np.linalg.norm(r)) <= tol * b_norm:
        return x, 0, [float(np.linalg.norm(r)) / b_norm]
    z = inv_diag * r
    p = z.copy()
    rz = float(np.dot(r, z))
    for it in range(1, maxit + 1):
        q = ops.apply(p, gamma)
        curvature = float(np.dot(p, q))
        if curvature <= 0.0:
            raise CoercivityError(
                f"form not coercive at gamma={gamma:g} on this mesh "
                f"(p'Ap = {curvature:.3e} at iteration {it}); gamma is at or above "
                "the discrete Hardy constant",
                gamma=gamma, iteration=it, curvature=curvature,
            )
        step = rz / curvature
        x += step * p
        r -= step * q
        relres = float(np.linalg.norm(r)) / b_norm
        history.append(relres)
        logger.debug("pcg iter %d relres %.3e", it, relres)
        if relres <= tol:
            # confirm on the true residual, restart from it if the recurrence drifted
            r = b - ops.apply(x, gamma)
            true_relres = float(np.linalg.norm(r)) / b_norm
            if true_relres <= tol:
                return x, it, history
            z = inv_diag * r
            p = z.copy()
            rz = float(np.dot(r, z))
            continue
        z = inv_diag * r
        rz_new = float(np.dot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"PCG did not reach tol={tol:g} in {maxit} iterations at gamma={gamma:g} "
        f"(last relative residual {history[-1]:.3e})",
        residual_history=history,
    )


def solve_linear(ops, gamma, rhs, tol=DEFAULT_TOL, maxit=None, m_double_star=None,
                 parameters=None, x0=None):
    """Solve (local + fractional - γ hardy) u = rhs by Jacobi-preconditioned CG.

    Raises CoercivityError on non-positive curvature and ConvergenceError
    when ``maxit`` is exhausted.
    """
    if isinstance(rhs, FieldVector):
        if not rhs.mesh.same_as(ops.mesh):
            raise DomainError("right-hand side and operators live on different meshes")
        b = rhs.values
    else:
        b = np.asarray(rhs, dtype=float)
    if b.shape != (ops.size,):
        raise DomainError(f"right-hand side has shape {b.shape}, expected ({ops.size},)")
    if not np.all(np.isfinite(b)):
        raise DomainError("right-hand side has non-finite entries")
    maxit = maxit or default_maxit(ops.size)

    started = time.perf_counter()
    x, iterations, history = _pcg(ops, gamma, b, tol, maxit, x0=x0)
    elapsed = time.perf_counter() - started

    u = FieldVector(ops.mesh, x)
    norms = {
        "L1": lp_norm(u, 1.0),
        "L2": lp_norm(u, 2.0),
        "Linf": lp_norm(u, np.inf),
        "rho_sq": rho_sq(ops, u),
        "hardy": hardy_functional(ops.mesh, u, 2.0),
    }
    if m_double_star is not None:
        norms["L_m**"] = lp_norm(u, m_double_star)
    params = {
        "n": ops.n,
        "s": ops.s,
        "N": ops.mesh.N,
        "L": ops.mesh.L,
        "domain": ops.mesh.domain.to_dict(),
        "fractional_weight": ops.fractional_weight,
        "tol": tol,
        "maxit": maxit,
    }
    params.update(parameters or {})
    return SolveReport(
        solution=u,
        residual_norm=relative_residual(ops, gamma, x, b),
        iterations=iterations,
        gamma=float(gamma),
        norms=norms,
        min_value=float(x.min()) if x.size else 0.0,
        max_value=float(x.max()) if x.size else 0.0,
        wall_time=elapsed,
        parameters=params,
        residual_history=tuple(history),
    )


def weight_vector(ops, weight):
    """Diagonal weight for the eigenproblem: "hardy", "mass", ("hardy_p", p) or an array."""
    if isinstance(weight, str):
        if weight == "hardy":
            return ops.hardy_diag
        if weight == "mass":
            return np.ones(ops.size)
        raise DomainError(f"unknown weight '{weight}'")
    if isinstance(weight, tuple) and weight[0] == "hardy_p":
        return ops.mesh.radii ** (-float(weight[1]))
    values = np.asarray(weight, dtype=float)
    if values.shape != (ops.size,) or np.any(values <= 0):
        raise DomainError("weight must be a positive vector on the interior nodes")
    return values


def min_generalized_eigen(ops, weight="hardy", tol=1e-8, maxit=200, inner_tol=None):
    """Smallest λ with A(0) v = λ W v by inverse power iteration.

    Returns (lambda_min, eigvec) with eigvec normalized to v'Wv h^n = 1 and
    lambda_min equal to its Rayleigh quotient.
    """
    w = weight_vector(ops, weight)
    inner_tol = inner_tol or min(DEFAULT_TOL, 1e-2 * tol)
    v = np.ones(ops.size)
    v /= math.sqrt(ops.mass * float(np.dot(v, w * v)))
    previous = None
    x = None
    for it in range(1, maxit + 1):
        x, _, _ = _pcg(ops, 0.0, w * v, inner_tol, default_maxit(ops.size), x0=x)
        v = x / math.sqrt(ops.mass * float(np.dot(x, w * x)))
        lam = ops.mass * float(np.dot(v, ops.apply(v)))
        logger.debug("inverse power iter %d lambda %.12g", it, lam)
        if previous is not None and abs(lam - previous) <= tol * abs(lam):
            return lam, FieldVector(ops.mesh, v)
        previous = lam
        # warm start: the next iterate is close to the current one scaled by 1/λ
        x = v / lam
    raise ConvergenceError(
        f"inverse power iteration did not settle to {tol:g} in {maxit} steps",
        residual_history=[previous],
    )


def coercivity_threshold(ops, tol=1e-8):
    """Discrete Hardy constant λ_min(A(0), hardy): A(γ) is coercive iff γ is below it."""
    lam, _ = min_generalized_eigen(ops, "hardy", tol=tol)
    return lam
