"""Toy ring-of-Gaussians data: construction, sampling and CSV persistence."""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .distributions import GmmDensity, gmm_log_pdf


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ToyDatasetSpec:
    n_components: int = 5
    dim: int = 2
    component_std: float = 0.1
    ring_radius: float = 2.0
    n_samples: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.dim < 2:
            raise ValueError("the ring construction needs dim >= 2")
        if not (self.component_std > 0 and self.ring_radius > 0):
            raise ValueError("component_std and ring_radius must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


class PointSet(NamedTuple):
    points: np.ndarray
    components: np.ndarray | None = None


def build_toy_gmm(spec: ToyDatasetSpec = ToyDatasetSpec()) -> GmmDensity:
    """Equal-weight isotropic components centred at angles 2*pi*k/n on a circle.

    Extra dimensions beyond the first two sit at zero.
    """
    k = np.arange(spec.n_components)
    angles = 2.0 * math.pi * k / spec.n_components
    means = np.zeros((spec.n_components, spec.dim))
    means[:, 0] = spec.ring_radius * np.cos(angles)
    means[:, 1] = spec.ring_radius * np.sin(angles)
    variances = np.full((spec.n_components, spec.dim), spec.component_std ** 2)
    return GmmDensity(np.full(spec.n_components, 1.0 / spec.n_components), means, variances)


def sample_dataset(gmm: GmmDensity, n: int, seed: int | np.random.Generator) -> PointSet:
    if n < 1:
        raise ValueError("n must be >= 1")
    points, labels = gmm.sample(n, np.random.default_rng(seed))
    return PointSet(points, labels)


def make_dataset(spec: ToyDatasetSpec = ToyDatasetSpec()) -> tuple[GmmDensity, PointSet]:
    gmm = build_toy_gmm(spec)
    return gmm, sample_dataset(gmm, spec.n_samples, spec.seed)


def data_log_density_constant(gmm: GmmDensity, points: np.ndarray) -> tuple[float, float]:
    """Monte Carlo E_q log q(x) with its standard error."""
    vals = gmm_log_pdf(gmm, points)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))


# ------------------------------------------------------------------------ io


def write_points(path: str | os.PathLike, data: PointSet | np.ndarray) -> None:
    """Atomic CSV write: header ``x0,x1[,component]``, floats in round-trip repr."""
    ps = data if isinstance(data, PointSet) else PointSet(np.asarray(data))
    pts = np.atleast_2d(np.asarray(ps.points, dtype=np.float64))
    if pts.shape[0] == 0:
        raise ValueError("refusing to write an empty point set")
    header = [f"x{i}" for i in range(pts.shape[1])]
    if ps.components is not None:
        header.append("component")
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i, row in enumerate(pts):
                cells = [repr(float(v)) for v in row]
                if ps.components is not None:
                    cells.append(str(int(ps.components[i])))
                w.writerow(cells)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_points(path: str | os.PathLike, dim: int | None = None) -> PointSet:
    """Parse a CSV written by :func:`write_points`; errors name the offending line."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetFormatError(f"{path}: line 1: empty file, expected header x0,x1[,component]")
    header = [h.strip() for h in rows[0]]
    has_component = bool(header) and header[-1] == "component"
    coord_cols = header[:-1] if has_component else header
    n_coord = len(coord_cols) if dim is None else dim
    expected = [f"x{i}" for i in range(n_coord)]
    if coord_cols != expected or n_coord < 1:
        want = ",".join(expected or ["x0", "x1"])
        raise DatasetFormatError(f"{path}: line 1: header {','.join(header)!r} does not match expected "
                                 f"columns {want}[,component]")
    points, comps = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DatasetFormatError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            points.append([float(v) for v in row[:n_coord]])
            if has_component:
                comps.append(int(row[-1]))
        except ValueError as exc:
            raise DatasetFormatError(f"{path}: line {lineno}: {exc}") from None
    if not points:
        raise DatasetFormatError(f"{path}: line 2: no data rows")
    return PointSet(np.array(points, dtype=np.float64), np.array(comps, dtype=np.int64) if has_component else None)


def dataset_io(points, path, direction: str):
    """Single entry point mirroring read/write."""
    if direction == "write":
        write_points(path, points)
        return None
    if direction == "read":
        return read_points(path)
    raise ValueError(f"direction must be 'read' or 'write', got {direction!r}")
