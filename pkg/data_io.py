import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from errors import ConfigError, DomainError
from grid import FieldVector, sample_field

logger = logging.getLogger(__name__)

# 17 significant digits round-trip every double
FLOAT_FORMAT = "%.17g"


def axis_names(n):
    return ["x", "y", "z"] if n == 3 else [f"x{d + 1}" for d in range(n)]


class SourceTable:
    """Nodal data read from a CSV with one coordinate column per axis and a
    ``value`` column; sampled onto a mesh by nearest neighbour."""

    def __init__(self, csv_path):
        self.csv_path = Path(csv_path)
        self.df = None
        self.tree = None

    def load_csv(self):
        if not self.csv_path.is_file():
            raise ConfigError(f"source table not found: {self.csv_path}")
        self.df = pd.read_csv(self.csv_path)
        if "value" not in self.df.columns:
            raise ConfigError(f"source table {self.csv_path} has no 'value' column")
        return self.df

    def coordinates(self, n):
        columns = axis_names(n)
        missing = [c for c in columns if c not in self.df.columns]
        if missing:
            raise ConfigError(f"source table {self.csv_path} lacks column(s) {missing}")
        return self.df[columns].to_numpy(dtype=float)

    def __call__(self, coords):
        if self.df is None:
            self.load_csv()
        if self.tree is None:
            self.tree = cKDTree(self.coordinates(coords.shape[1]))
        _, nearest = self.tree.query(coords)
        return self.df["value"].to_numpy(dtype=float)[nearest]


def source_function(spec):
    """Callable x -> f(x) for a source spec.

    {"kind": "constant", "value": c}
    {"kind": "power", "beta": β, "scale": c}     c |x|^{-β}
    {"kind": "custom", "path": "table.csv"}
    """
    kind = spec.get("kind", "constant")
    if kind == "constant":
        value = float(spec.get("value", 1.0))
        return lambda coords: np.full(coords.shape[0], value)
    if kind == "power":
        beta, scale = float(spec["beta"]), float(spec.get("scale", 1.0))
        if beta < 0:
            raise DomainError(f"power source needs beta >= 0, got {beta}")
        return lambda coords: scale * np.sqrt(np.sum(coords ** 2, axis=1)) ** (-beta)
    if kind == "custom":
        return SourceTable(spec["path"])
    raise ConfigError(f"unknown source kind '{kind}'")


def build_source(spec, mesh):
    return sample_field(source_function(spec), mesh)


def write_table(frame, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info("wrote %s (%d rows)", path, len(frame))
    return path


def solution_frame(u):
    mesh = u.mesh
    frame = pd.DataFrame(mesh.coordinates, columns=axis_names(mesh.n))
    frame.insert(0, "node", mesh.interior_nodes)
    frame["value"] = u.values
    return frame


def write_solution(u, path):
    """node (box node id), one coordinate per axis, value."""
    return write_table(solution_frame(u), path)


def load_solution(path, mesh):
    df = pd.read_csv(path)
    if len(df) != mesh.count:
        raise DomainError(f"{path} holds {len(df)} nodes, mesh has {mesh.count}")
    if not np.array_equal(df["node"].to_numpy(), mesh.interior_nodes):
        raise DomainError(f"{path} was written on a different mesh")
    return FieldVector(mesh, df["value"].to_numpy(dtype=float))


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def write_report(payload, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n",
                    encoding="utf-8")
    logger.info("wrote %s", path)
    return path
