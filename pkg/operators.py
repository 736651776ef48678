"""Discrete pieces of L - γ/|x|^2 and the quadratic functionals built on them.

All matrices are stored in operator form (they act on nodal values and
return nodal values). The bilinear form carries the cell volume h^n:

    B(u, v) = h^n v . (local + fractional) u

Fractional rows use punctured quadrature of the singular integral:

    off-diagonal (i, j interior)  -C h^n |x_i - x_j|^{-n-2s}
    diagonal                       C h^n Σ_{box nodes j != i, |x_i-x_j| < ρ_i} |x_i - x_j|^{-n-2s}
                                   + C ω_{n-1} ρ_i^{-2s} / (2s)

with ρ_i the distance from x_i to the box boundary; the last term is the
exact integral of the kernel over the exterior of B(x_i, ρ_i). The omitted
self-cell is restored to second order by adding

    C / (2n) * ∫_{cell} |y|^{2-n-2s} dy * (local stencil)

which is symmetric with non-positive off-diagonals and non-negative row sums.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from errors import DomainError, SizeGuardError
from grid import FieldVector
from special import normalization_constant, self_cell_moment, sphere_surface

logger = logging.getLogger(__name__)

DENSE_GUARD = 10_000
# rows per assembly task; fixed so the output does not depend on the worker count
ROW_BLOCK = 64


@dataclass(frozen=True, eq=False)
class OperatorSet:
    mesh: object
    s: float
    c_ns: float
    local: sp.csr_matrix = field(repr=False)
    fractional: np.ndarray = field(repr=False)
    hardy_diag: np.ndarray = field(repr=False)
    fractional_weight: float = 1.0
    regularization_k: float = None
    assembly_seconds: float = 0.0

    @property
    def n(self):
        return self.mesh.n

    @property
    def mass(self):
        return self.mesh.cell_volume

    @property
    def size(self):
        return self.mesh.count

    @property
    def memory_bytes(self):
        frac = self.fractional.nbytes if self.fractional is not None else 0
        loc = self.local.data.nbytes + self.local.indices.nbytes + self.local.indptr.nbytes
        return int(frac + loc + self.hardy_diag.nbytes)

    def form(self, u):
        """(local + weight * fractional) u, on raw value arrays."""
        out = self.local @ u
        if self.fractional is not None and self.fractional_weight:
            out = out + self.fractional_weight * (self.fractional @ u)
        return out

    def apply(self, u, gamma=0.0):
        """A(γ) u = (local + fractional - γ hardy) u."""
        out = self.form(u)
        if gamma:
            out = out - gamma * self.hardy_diag * u
        return out

    def diagonal(self, gamma=0.0):
        diag = self.local.diagonal().copy()
        if self.fractional is not None and self.fractional_weight:
            diag += self.fractional_weight * np.diag(self.fractional)
        return diag - gamma * self.hardy_diag

    def matrix(self, gamma=0.0):
        """Dense A(γ); only meant for small meshes and structural checks."""
        dense = self.local.toarray()
        if self.fractional is not None and self.fractional_weight:
            dense = dense + self.fractional_weight * self.fractional
        return dense - gamma * np.diag(self.hardy_diag)

    def with_hardy(self, regularization_k=None):
        """Same operators with the (possibly regularized) Hardy weight."""
        return replace(
            self,
            hardy_diag=assemble_hardy(self.mesh, regularization_k),
            regularization_k=regularization_k,
        )

    def local_only(self):
        return replace(self, fractional_weight=0.0)


def _readonly(array):
    array.setflags(write=False)
    return array


def assemble_local(mesh):
    """2n+1 point stencil of -Δ; neighbours outside Ω carry the value 0."""
    n, N, h = mesh.n, mesh.N, mesh.h
    multi = np.unravel_index(mesh.interior_nodes, mesh.shape)
    rows = [np.arange(mesh.count)]
    cols = [np.arange(mesh.count)]
    data = [np.full(mesh.count, 2.0 * n / h ** 2)]
    for axis in range(n):
        for step in (-1, 1):
            shifted = list(multi)
            shifted[axis] = multi[axis] + step
            valid = (shifted[axis] >= 0) & (shifted[axis] < N)
            neighbour = np.full(mesh.count, -1, dtype=np.int64)
            flat = np.ravel_multi_index(
                tuple(c[valid] for c in shifted), mesh.shape
            )
            neighbour[valid] = mesh.interior_index[flat]
            keep = neighbour >= 0
            rows.append(np.flatnonzero(keep))
            cols.append(neighbour[keep])
            data.append(np.full(int(keep.sum()), -1.0 / h ** 2))
    matrix = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.count, mesh.count),
    )
    matrix.sort_indices()
    return matrix


def _fractional_rows(mesh, s, c_ns, start, stop):
    n, h, L = mesh.n, mesh.h, mesh.L
    exponent = n + 2.0 * s
    points = mesh.coordinates[start:stop]
    box = mesh.box_coordinates

    dist2 = np.zeros((points.shape[0], box.shape[0]))
    for axis in range(n):
        dist2 += (points[:, axis, None] - box[None, :, axis]) ** 2
    rows = np.arange(stop - start)
    self_cols = mesh.interior_nodes[start:stop]
    dist2[rows, self_cols] = np.inf
    kernel = dist2 ** (-0.5 * exponent)

    rho = L - np.max(np.abs(points), axis=1)
    near = dist2 < rho[:, None] ** 2
    near_sum = np.sum(np.where(near, kernel, 0.0), axis=1)
    tail = sphere_surface(n) * rho ** (-2.0 * s) / (2.0 * s)

    block = -c_ns * h ** n * kernel[:, mesh.interior_nodes]
    block[rows, start + rows] = c_ns * (h ** n * near_sum + tail)
    return block


def assemble_fractional(mesh, s, threads=1, guard=DENSE_GUARD, local=None):
    """Dense punctured-quadrature matrix of (-Δ)^s with exterior zeros."""
    if not 0.0 < s < 1.0:
        raise DomainError(f"fractional order s must lie in (0, 1), got {s}")
    if mesh.count > guard:
        raise SizeGuardError(
            f"{mesh.count} interior nodes exceed the dense guard of {guard}; use a smaller N"
        )
    c_ns = normalization_constant(mesh.n, s)
    matrix = np.empty((mesh.count, mesh.count))
    starts = list(range(0, mesh.count, ROW_BLOCK))

    def fill(start):
        stop = min(start + ROW_BLOCK, mesh.count)
        matrix[start:stop] = _fractional_rows(mesh, s, c_ns, start, stop)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, starts))
    else:
        for start in starts:
            fill(start)

    if local is None:
        local = assemble_local(mesh)
    self_weight = c_ns / (2.0 * mesh.n) * self_cell_moment(mesh.n, s, mesh.h)
    matrix += self_weight * local.toarray()
    return matrix


def assemble_hardy(mesh, regularization_k=None):
    """1/|x_i|^2, or 1/(|x_i|^2 + 1/k) when a regularization level k is given."""
    r2 = np.sum(mesh.coordinates ** 2, axis=1)
    if regularization_k is None:
        return _readonly(1.0 / r2)
    if regularization_k <= 0:
        raise DomainError(f"regularization level must be positive, got {regularization_k}")
    return _readonly(1.0 / (r2 + 1.0 / regularization_k))


def assemble_operators(mesh, s, fractional_weight=1.0, threads=1,
                       regularization_k=None, guard=DENSE_GUARD):
    """Assemble the full OperatorSet for (mesh, s).

    ``fractional_weight = 0`` skips the dense part (local-only validation mode).
    """
    started = time.perf_counter()
    local = assemble_local(mesh)
    fractional = None
    if fractional_weight:
        fractional = assemble_fractional(mesh, s, threads=threads, guard=guard, local=local)
        _readonly(fractional)
    ops = OperatorSet(
        mesh=mesh,
        s=float(s),
        c_ns=normalization_constant(mesh.n, s),
        local=local,
        fractional=fractional,
        hardy_diag=assemble_hardy(mesh, regularization_k),
        fractional_weight=float(fractional_weight),
        regularization_k=regularization_k,
    )
    elapsed = time.perf_counter() - started
    ops = replace(ops, assembly_seconds=elapsed)
    logger.info(
        "assembled %d nodes (s=%g, weight=%g) in %.2fs, %.1f MB, %d worker(s)",
        mesh.count, s, fractional_weight, elapsed, ops.memory_bytes / 2 ** 20, max(1, threads),
    )
    return ops


def _values(u):
    return u.values if isinstance(u, FieldVector) else np.asarray(u, dtype=float)


def bilinear_form(ops, u, v):
    """B(u, v) = h^n v . (local + fractional) u."""
    for field_ in (u, v):
        if isinstance(field_, FieldVector) and not field_.mesh.same_as(ops.mesh):
            raise DomainError("field and operators live on different meshes")
    return ops.mass * float(np.dot(_values(v), ops.form(_values(u))))


def rho_sq(ops, u):
    """ρ(u)^2 = B(u, u)."""
    return bilinear_form(ops, u, u)


def local_energy(ops, u):
    """Discrete ||∇u||^2_{L^2}."""
    values = _values(u)
    return ops.mass * float(np.dot(values, ops.local @ values))


def gagliardo_seminorm_sq(ops, u):
    """[u]_s^2, normalized so that ρ(u)^2 = ||∇u||^2 + weight * C_{n,s}/2 [u]_s^2."""
    if ops.fractional is None:
        raise DomainError("operators were assembled without the fractional part")
    values = _values(u)
    return 2.0 / ops.c_ns * ops.mass * float(np.dot(values, ops.fractional @ values))


def hardy_functional(mesh, u, p=2.0, s=None):
    """H_p(u) = h^n Σ u_i^2 / |x_i|^p for p in [2s, 2].

    ``s`` may be omitted only for p = 2.
    """
    if p != 2.0 and s is None:
        raise DomainError(f"Hardy exponent p={p} < 2 needs the fractional order s")
    if not 0.0 < p <= 2.0 or (s is not None and p < 2.0 * s):
        lower = f"{2.0 * s:g}" if s is not None else "2s"
        raise DomainError(f"Hardy exponent p={p} outside [{lower}, 2]")
    values = _values(u)
    return mesh.cell_volume * float(np.sum(values ** 2 / mesh.radii ** p))


def weighted_hardy(ops, u):
    """h^n Σ hardy_diag u^2, honouring the regularization stored in ``ops``."""
    values = _values(u)
    return ops.mass * float(np.sum(ops.hardy_diag * values ** 2))


def gradient_lp_norm(mesh, u, p=2.0):
    """||∇u||_{L^p} from forward differences of the zero extension.

    For p = 2 this equals local_energy(u) ** 0.5 exactly.
    """
    if p < 1:
        raise DomainError(f"gradient norm needs p >= 1, got {p}")
    values = _values(u)
    full = np.zeros(mesh.box_coordinates.shape[0])
    full[mesh.interior_nodes] = values
    padded = np.pad(full.reshape(mesh.shape), 1)
    N = mesh.N
    base = padded[(slice(0, N + 1),) * mesh.n]
    squares = np.zeros_like(base)
    for axis in range(mesh.n):
        ahead = tuple(slice(1, N + 2) if a == axis else slice(0, N + 1) for a in range(mesh.n))
        squares += ((padded[ahead] - base) / mesh.h) ** 2
    if p == 2:
        return float(np.sqrt(mesh.cell_volume * np.sum(squares)))
    return float((mesh.cell_volume * np.sum(squares ** (p / 2.0))) ** (1.0 / p))
