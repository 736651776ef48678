"""Cell-centred Cartesian discretization of a bounded domain containing 0.

The bounding box [-L, L]^n is split into N^n cells of side h = 2L/N and every
cell is represented by its centre. With N even no centre sits at the origin,
so 1/|x|^2 is finite at every node. A node is interior when its centre lies
strictly inside the domain; all other nodes carry the exterior value 0.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from errors import DomainError, MeshError
from special import gamma_fn

logger = logging.getLogger(__name__)

DOMAIN_KINDS = ("ball", "box", "ellipsoid")

# relative margin used for the strict membership test
_STRICT = 1e-9


@dataclass(frozen=True)
class Domain:
    kind: str
    half_widths: tuple
    center: tuple

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise MeshError(f"unknown domain kind '{self.kind}', expected one of {DOMAIN_KINDS}")
        if len(self.half_widths) != len(self.center):
            raise MeshError("half_widths and center must have the same dimension")
        if any(a <= 0 for a in self.half_widths):
            raise MeshError(f"half widths must be positive, got {self.half_widths}")
        if self.kind == "ball" and len(set(self.half_widths)) != 1:
            raise MeshError("a ball has a single radius")
        if self.level(np.zeros((1, self.n)))[0] >= -_STRICT:
            raise MeshError(f"the origin must lie strictly inside the {self.kind} centred at {self.center}")

    @classmethod
    def ball(cls, radius=1.0, n=3, center=None):
        center = tuple(float(c) for c in (center if center is not None else [0.0] * n))
        return cls("ball", (float(radius),) * len(center), center)

    @classmethod
    def box(cls, half_widths=1.0, n=3, center=None):
        center = tuple(float(c) for c in (center if center is not None else [0.0] * n))
        if np.ndim(half_widths) == 0:
            half_widths = [half_widths] * len(center)
        return cls("box", tuple(float(a) for a in half_widths), center)

    @classmethod
    def ellipsoid(cls, half_widths, center=None):
        n = len(half_widths)
        center = tuple(float(c) for c in (center if center is not None else [0.0] * n))
        return cls("ellipsoid", tuple(float(a) for a in half_widths), center)

    @classmethod
    def from_dict(cls, spec, n=3):
        """Build from a config entry such as {"kind": "ball", "radius": 1}."""
        kind = spec.get("kind", "ball")
        center = spec.get("center")
        if kind == "ball":
            return cls.ball(spec.get("radius", 1.0), n=n, center=center)
        widths = spec.get("half_widths", spec.get("radius", 1.0))
        if kind == "box":
            return cls.box(widths, n=n, center=center)
        if np.ndim(widths) == 0:
            widths = [widths] * n
        return cls.ellipsoid(widths, center=center)

    @property
    def n(self):
        return len(self.center)

    @property
    def radius(self):
        return self.half_widths[0] if self.kind == "ball" else None

    def level(self, points):
        """Negative inside, zero on the boundary, positive outside."""
        shifted = (np.atleast_2d(points) - np.asarray(self.center)) / np.asarray(self.half_widths)
        if self.kind == "box":
            return np.max(np.abs(shifted), axis=1) - 1.0
        return np.sqrt(np.sum(shifted ** 2, axis=1)) - 1.0

    def contains(self, points):
        return self.level(points) < -_STRICT

    def depth(self, points):
        """Distance to the boundary (a lower bound for ellipsoids), negative outside."""
        shifted = np.atleast_2d(points) - np.asarray(self.center)
        widths = np.asarray(self.half_widths)
        if self.kind == "ball":
            return widths[0] - np.sqrt(np.sum(shifted ** 2, axis=1))
        if self.kind == "box":
            return np.min(widths - np.abs(shifted), axis=1)
        return -self.level(points) * widths.min()

    def extent(self):
        """Largest |x_d| reached by the closure of the domain."""
        return max(abs(c) + a for c, a in zip(self.center, self.half_widths))

    def volume(self):
        if self.kind == "box":
            return float(np.prod([2.0 * a for a in self.half_widths]))
        unit_ball = np.pi ** (self.n / 2.0) / gamma_fn(self.n / 2.0 + 1.0)
        return unit_ball * float(np.prod(self.half_widths))

    def to_dict(self):
        return {"kind": self.kind, "half_widths": list(self.half_widths), "center": list(self.center)}


@dataclass(frozen=True, eq=False)
class Mesh:
    domain: Domain
    N: int
    L: float
    box_coordinates: np.ndarray = field(repr=False)
    interior_mask: np.ndarray = field(repr=False)
    interior_index: np.ndarray = field(repr=False)
    interior_nodes: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.domain.n

    @property
    def h(self):
        return 2.0 * self.L / self.N

    @property
    def cell_volume(self):
        return self.h ** self.n

    @property
    def count(self):
        return int(self.interior_nodes.size)

    @property
    def coordinates(self):
        return self.box_coordinates[self.interior_nodes]

    @property
    def radii(self):
        return np.sqrt(np.sum(self.coordinates ** 2, axis=1))

    @property
    def shape(self):
        return (self.N,) * self.n

    @property
    def signature(self):
        return (self.n, self.N, self.L, self.domain)

    def node_to_index(self, node):
        """Box node id -> interior index (-1 for exterior nodes)."""
        return int(self.interior_index[node])

    def index_to_node(self, index):
        return int(self.interior_nodes[index])

    def same_as(self, other):
        return self is other or self.signature == other.signature

    def to_header(self):
        return {
            "n": self.n,
            "N": self.N,
            "L": self.L,
            "h": self.h,
            "interior_count": self.count,
            "domain": self.domain.to_dict(),
        }


def aligned_halfwidth(domain, N):
    """Box half width that puts a cell centre exactly on the outermost point of
    the domain along each axis, with one more cell of margin beyond it.

    Meshes of a refinement ladder built this way share the same boundary
    placement, so their functionals are comparable level to level.
    """
    return domain.extent() * N / (N - 3.0)


def build_mesh(domain, N, box_halfwidth=None):
    """Discretize ``domain`` on the cell-centred grid of [-L, L]^n with N cells per axis."""
    if int(N) != N or N < 8 or N % 2:
        raise MeshError(f"nodes_per_axis must be an even integer >= 8, got {N}")
    N = int(N)
    L = float(box_halfwidth) if box_halfwidth is not None else aligned_halfwidth(domain, N)
    if L <= 0:
        raise MeshError(f"box half width must be positive, got {L}")
    if domain.extent() > L * (1.0 + _STRICT):
        raise MeshError(
            f"domain reaches |x_d| = {domain.extent():g}, beyond the box half width {L:g}"
        )

    h = 2.0 * L / N
    if domain.extent() > L - h and domain.kind != "box":
        logger.warning("domain leaves less than one cell of margin inside the box (h=%g)", h)

    axis = -L + (np.arange(N) + 0.5) * h
    grids = np.meshgrid(*([axis] * domain.n), indexing="ij")
    coords = np.stack([g.ravel() for g in grids], axis=1)
    mask = domain.contains(coords)
    if not mask.any():
        raise MeshError("no cell centre falls inside the domain; increase N")

    index = np.full(coords.shape[0], -1, dtype=np.int64)
    nodes = np.flatnonzero(mask)
    index[nodes] = np.arange(nodes.size)
    for array in (coords, mask, index, nodes):
        array.setflags(write=False)

    logger.debug("mesh N=%d L=%g h=%g interior=%d", N, L, h, nodes.size)
    return Mesh(domain, N, L, coords, mask, index, nodes)


@dataclass
class FieldVector:
    """Values on the interior nodes; zero everywhere else."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.count,):
            raise DomainError(
                f"field has shape {self.values.shape}, mesh has {self.mesh.count} interior nodes"
            )

    def __len__(self):
        return self.values.size

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(mesh.count))

    @classmethod
    def constant(cls, mesh, value):
        return cls(mesh, np.full(mesh.count, float(value)))

    def with_values(self, values):
        return FieldVector(self.mesh, values)

    def copy(self):
        return FieldVector(self.mesh, self.values.copy())

    def scaled(self, c):
        return FieldVector(self.mesh, c * self.values)

    def check_mesh(self, other):
        if not self.mesh.same_as(other.mesh):
            raise DomainError("fields live on different meshes")

    def on_box(self):
        """Values on every box node (zero extension), shaped (N,)*n."""
        full = np.zeros(self.mesh.box_coordinates.shape[0])
        full[self.mesh.interior_nodes] = self.values
        return full.reshape(self.mesh.shape)


def sample_field(g, mesh):
    """Evaluate ``g`` at the interior cell centres.

    ``g`` receives the (count, n) coordinate array and returns one value per
    row (or a scalar, which is broadcast).
    """
    coords = mesh.coordinates
    values = np.asarray(g(coords), dtype=float)
    if values.ndim == 0:
        values = np.full(mesh.count, float(values))
    values = values.reshape(-1)
    if values.size != mesh.count:
        raise DomainError(f"sampled {values.size} values for {mesh.count} nodes")
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        i = int(bad[0])
        raise DomainError(
            f"non-finite sample {values[i]} at interior node {i} (x={coords[i].tolist()})"
        )
    return FieldVector(mesh, values)


def integrate(u, p=1.0):
    """Midpoint quadrature h^n Σ |u_i|^p."""
    if p < 1:
        raise DomainError(f"integrate needs p >= 1, got {p}")
    return u.mesh.cell_volume * float(np.sum(np.abs(u.values) ** p))


def lp_norm(u, p):
    if np.isinf(p):
        return float(np.max(np.abs(u.values))) if len(u) else 0.0
    return integrate(u, p) ** (1.0 / p)
