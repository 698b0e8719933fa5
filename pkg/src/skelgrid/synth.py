"""Synthetic models, surface-noise injection and skeleton quality metrics."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .grid import OFFSETS, VoxelGrid, surface_mask

log = logging.getLogger(__name__)

SHAPES = ("cylinder", "y-junction", "torus", "sphere", "tree")
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
# laterals leave the parent at these fractions of its length, tilted away from it
LATERAL_POSITIONS = (0.3, 0.55)
LATERAL_TILT_DEG = 45.0
LATERAL_LENGTH = 0.6


class NoiseError(RuntimeError):
    pass


@dataclass(frozen=True)
class ShapeSpec:
    """Analytic solid to rasterize.

    cylinder: ``radii[0]``, ``length`` along ``axis`` (flat ends).
    y-junction: three round-tipped arms of ``radii`` meeting at one point,
        each ``length`` long (tip cap excluded).
    torus: ``major`` / ``minor`` radii, ring in the xy plane.
    sphere: ``radii[0]``.
    tree: trunk of ``radii[0]`` and ``length``; ``depth`` levels of two
        laterals per branch, radius scaled by ``shrink`` (never below
        ``min_radius``) and length by 0.6.
    """

    kind: str
    radii: Tuple[float, ...] = (3.0,)
    length: float = 40.0
    major: float = 12.0
    minor: float = 3.0
    depth: int = 2
    shrink: float = 0.75
    min_radius: float = 3.0
    axis: str = "x"
    margin: int = 2
    dims: Optional[Tuple[int, int, int]] = None

    def __post_init__(self):
        if self.kind not in SHAPES:
            raise ValueError(f"unknown shape {self.kind!r}; choose from {SHAPES}")
        if any(r < 1 for r in self.radii) or not self.radii:
            raise ValueError("all radii must be >= 1")
        if self.kind == "y-junction" and len(self.radii) != 3:
            raise ValueError("a y-junction needs three radii")
        if self.kind == "torus" and (self.minor < 1 or self.major <= self.minor):
            raise ValueError("torus needs 1 <= minor < major")
        if self.length <= 0:
            raise ValueError("length must be positive")
        if not (0.0 < self.shrink <= 1.0) or self.min_radius < 1:
            raise ValueError("shrink must lie in (0, 1] and min_radius be >= 1")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if self.axis not in ("x", "y", "z"):
            raise ValueError("axis must be x, y or z")


@dataclass
class Model:
    """Rasterized solid and its analytic centerline (one polyline per part)."""

    grid: VoxelGrid
    centerlines: List[np.ndarray] = field(default_factory=list)

    def centerline_voxels(self, spacing: float = 0.2) -> Tuple[np.ndarray, np.ndarray]:
        """Rounded centerline samples as unique voxels plus their polyline id."""
        pts, ids = [], []
        for k, line in enumerate(self.centerlines):
            for a, b in zip(line[:-1], line[1:]):
                m = max(2, int(math.ceil(np.linalg.norm(b - a) / spacing)) + 1)
                s = a + np.linspace(0.0, 1.0, m)[:, None] * (b - a)
                pts.append(np.rint(s).astype(np.int64))
                ids.append(np.full(m, k))
            if len(line) == 1:
                pts.append(np.rint(line).astype(np.int64))
                ids.append(np.array([k]))
        if not pts:
            return np.empty((0, 3), dtype=np.int64), np.empty(0, dtype=np.int64)
        p = np.concatenate(pts)
        i = np.concatenate(ids)
        _, first = np.unique(p, axis=0, return_index=True)
        first = np.sort(first)
        return p[first], i[first]


# -- primitives -------------------------------------------------------------


def _box(lo, hi):
    lo = np.floor(lo).astype(np.int64)
    hi = np.ceil(hi).astype(np.int64)
    ax = [np.arange(lo[i], hi[i] + 1) for i in range(3)]
    g = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1).reshape(-1, 3)
    return g


def _capsule(p0, p1, r):
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    pts = _box(np.minimum(p0, p1) - r, np.maximum(p0, p1) + r)
    d = p1 - p0
    L2 = float(d @ d)
    t = np.clip(((pts - p0) @ d) / L2, 0.0, 1.0) if L2 > 0 else np.zeros(len(pts))
    near = p0 + t[:, None] * d
    return pts[((pts - near) ** 2).sum(axis=1) <= r * r + 1e-9]


def _unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def _perp(u):
    a = np.array([1.0, 0, 0]) if abs(u[0]) < 0.9 else np.array([0, 1.0, 0])
    p = np.cross(u, a)
    return p / np.linalg.norm(p)


def _tilt(u, angle, azimuth):
    e1 = _perp(u)
    e2 = np.cross(u, e1)
    side = math.cos(azimuth) * e1 + math.sin(azimuth) * e2
    return _unit(math.cos(angle) * u + math.sin(angle) * side)


def _shape_parts(spec: ShapeSpec):
    """Occupied points (float frame) and centerline polylines before placement."""
    k = spec.kind
    if k == "cylinder":
        r = spec.radii[0]
        L = int(round(spec.length))
        ax = "xyz".index(spec.axis)
        pts = _box([-r] * 3, [r] * 3)
        pts = pts[(pts[:, 1] ** 2 + pts[:, 2] ** 2 <= r * r + 1e-9)]
        pts = np.concatenate([pts[pts[:, 0] == 0] + [i, 0, 0] for i in range(L)])
        line = np.array([[0.0, 0, 0], [L - 1.0, 0, 0]])
        perm = {0: [0, 1, 2], 1: [1, 0, 2], 2: [2, 1, 0]}[ax]
        return pts[:, perm], [line[:, perm]]
    if k == "sphere":
        r = spec.radii[0]
        pts = _box([-r] * 3, [r] * 3)
        return pts[(pts**2).sum(axis=1) <= r * r + 1e-9], [np.zeros((1, 3))]
    if k == "torus":
        R, r = spec.major, spec.minor
        pts = _box([-R - r, -R - r, -r], [R + r, R + r, r])
        rho = np.sqrt(pts[:, 0] ** 2 + pts[:, 1] ** 2)
        pts = pts[(rho - R) ** 2 + pts[:, 2] ** 2 <= r * r + 1e-9]
        th = np.linspace(0, 2 * np.pi, int(8 * R) + 1)
        return pts, [np.stack([R * np.cos(th), R * np.sin(th), np.zeros_like(th)], axis=1)]
    caps = []
    lines = []
    if k == "y-junction":
        a = math.radians(50.0)
        dirs = [
            # trunk points up so the tie-break over its axis lands by the junction
            np.array([0.0, 0.0, 1.0]),
            _unit([math.sin(a), 0.15, -math.cos(a)]),
            _unit([-math.sin(a), -0.15, -math.cos(a)]),
        ]
        for u, r in zip(dirs, spec.radii):
            end = u * spec.length
            caps.append((np.zeros(3), end, r))
            lines.append(np.array([np.zeros(3), u * (spec.length + r)]))
    else:
        _grow(np.zeros(3), np.array([0.0, 0, 1]), spec.length, spec.radii[0], spec.depth, spec, caps, lines, [0])
    pts = np.unique(np.concatenate([_capsule(p0, p1, r) for p0, p1, r in caps]), axis=0)
    return pts, lines


def _grow(origin, u, length, radius, depth, spec, caps, lines, counter):
    end = origin + u * length
    caps.append((origin, end, radius))
    lines.append(np.array([origin, end + u * radius]))
    if depth == 0:
        return
    for frac in LATERAL_POSITIONS:
        counter[0] += 1
        child = _tilt(u, math.radians(LATERAL_TILT_DEG), counter[0] * GOLDEN_ANGLE)
        _grow(
            origin + u * length * frac,
            child,
            length * LATERAL_LENGTH,
            max(radius * spec.shrink, spec.min_radius),
            depth - 1,
            spec,
            caps,
            lines,
            counter,
        )


def generate_model(spec: ShapeSpec) -> Model:
    pts, lines = _shape_parts(spec)
    pts = np.rint(pts).astype(np.int64)
    lo = pts.min(axis=0)
    shift = spec.margin - lo
    pts = pts + shift
    lines = [np.asarray(l, float) + shift for l in lines]
    dims = tuple(int(v) for v in pts.max(axis=0) + spec.margin + 1)
    if spec.dims is not None:
        if any(a < b for a, b in zip(spec.dims, dims)):
            raise ValueError(f"shape needs dims of at least {dims}, spec gives {spec.dims}")
        dims = tuple(spec.dims)
    return Model(VoxelGrid(dims, pts), lines)


def standard_tree(margin: int = 16) -> ShapeSpec:
    """The tree used by the noise experiments (margin leaves room for growth)."""
    return ShapeSpec("tree", radii=(4.5,), length=100.0, depth=2, margin=margin)


def generate(spec: ShapeSpec) -> VoxelGrid:
    return generate_model(spec).grid


# -- noise --------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    p: float = 0.05
    iterations: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.p < 1.0):
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 stream; identical draws on every platform for a given seed."""
    return np.random.Generator(np.random.PCG64(int(seed) & (2**64 - 1)))


def noise_step(grid: VoxelGrid, p: float, rng: np.random.Generator, iteration: int = 0) -> VoxelGrid:
    n = grid.n
    m = int(math.floor(p / 2.0 * n))
    if m == 0:
        return grid
    surf = surface_mask(grid)
    nb = grid.neighbors
    inner_nb = ((nb >= 0) & ~surf[np.where(nb >= 0, nb, 0)]).any(axis=1)
    deletable = np.flatnonzero(surf & inner_nb)
    if len(deletable) < m:
        raise NoiseError(f"iteration {iteration}: {len(deletable)} deletable voxels, need {m}")
    drop = rng.choice(deletable, size=m, replace=False)
    keep = np.ones(n, dtype=bool)
    keep[drop] = False
    hosts_pool = np.flatnonzero(surf & keep)
    if len(hosts_pool) < m:
        raise NoiseError(f"iteration {iteration}: {len(hosts_pool)} surface hosts, need {m}")
    hosts = rng.choice(hosts_pool, size=m, replace=False)

    dims = np.asarray(grid.dims)
    added = set()
    skipped = 0
    for h in hosts:
        c = grid.coords[h]
        free = np.flatnonzero(nb[h] < 0)
        q = c + OFFSETS[free]
        free = free[((q >= 0) & (q < dims)).all(axis=1)]
        if len(free) == 0:
            skipped += 1
            continue
        for _ in range(10):
            v = tuple(int(a) for a in c + OFFSETS[free[rng.integers(len(free))]])
            if v not in added:
                added.add(v)
                break
        else:
            skipped += 1
    if skipped:
        log.info("noise iteration %d: %d additions skipped after collisions", iteration, skipped)
    coords = grid.coords[keep]
    if added:
        coords = np.concatenate([coords, np.array(sorted(added), dtype=np.int64)])
    return VoxelGrid(grid.dims, coords)


def inject_noise(grid: VoxelGrid, spec: NoiseSpec) -> VoxelGrid:
    """Iteratively delete and grow random surface voxels (see :class:`NoiseSpec`)."""
    rng = make_rng(spec.rng_seed)
    g = grid
    for it in range(spec.iterations):
        g = noise_step(g, spec.p, rng, it)
    return g


def noise_levels(grid: VoxelGrid, p: float, levels: int, rng_seed: int) -> List[VoxelGrid]:
    """Grids after 0, 1, ..., *levels* iterations of one noise stream."""
    rng = make_rng(rng_seed)
    out = [grid]
    for it in range(levels):
        out.append(noise_step(out[-1], p, rng, it))
    return out


# -- metrics -------------------------------------------------------------------


def _as_points(s) -> np.ndarray:
    if hasattr(s, "voxels"):
        return s.voxels()
    return np.asarray(s, dtype=np.float64).reshape(-1, 3)


def skeleton_rmse(reference, test) -> float:
    """Root mean squared distance from each reference voxel to the nearest test voxel."""
    ref = _as_points(reference)
    tst = _as_points(test)
    if len(ref) == 0 or len(tst) == 0:
        raise ValueError("both skeletons must be non-empty")
    dist, _ = cKDTree(tst).query(ref)
    return float(np.sqrt(np.mean(dist**2)))


def skeleton_voxel_count(s) -> int:
    return len(s.union) if hasattr(s, "union") else len({tuple(v) for v in np.asarray(s).tolist()})


# -- runtime report -----------------------------------------------------------------

CSV_HEADER = ["model", "n", "N", "d_max", "proposals", "accepted", "rejected", "loops", "time_ms", "rmse", "voxel_count"]


@dataclass
class ReportRow:
    model: str
    n: int
    N: int
    d_max: float
    proposals: int
    accepted: int
    rejected: int
    loops: int
    time_ms: float
    rmse: float
    voxel_count: int
    failed: bool = False

    def as_csv(self) -> list:
        if self.failed:
            return [self.model, self.n, self.N, "failed", "", "", "", "", "", "", ""]
        return [
            self.model,
            self.n,
            self.N,
            f"{self.d_max:.6g}",
            self.proposals,
            self.accepted,
            self.rejected,
            self.loops,
            f"{self.time_ms:.3f}",
            "" if math.isnan(self.rmse) else f"{self.rmse:.6g}",
            self.voxel_count,
        ]


def evaluate_model(name: str, model: Model, config=None, policy=None) -> ReportRow:
    from .skeleton import skeletonize

    t0 = time.perf_counter()
    skel = skeletonize(model.grid, config, policy)
    ms = (time.perf_counter() - t0) * 1000.0
    ref, _ = model.centerline_voxels()
    rmse = skeleton_rmse(ref, skel) if len(ref) else float("nan")
    st = skel.stats
    nx, ny, nz = model.grid.dims
    return ReportRow(name, model.grid.n, nx * ny * nz, st.d_max, st.proposals, st.accepted, st.rejected, st.loops, ms, rmse, skeleton_voxel_count(skel))


def runtime_scaling_report(specs: Sequence[ShapeSpec], config=None, policy=None, names=None) -> List[ReportRow]:
    rows = []
    for i, spec in enumerate(specs):
        name = names[i] if names else f"{spec.kind}-{i}"
        rows.append(evaluate_model(name, generate_model(spec), config, policy))
    return rows


def scaling_exponent(rows: Sequence[ReportRow]) -> float:
    """Least-squares slope of log(time) against log(n)."""
    ok = [r for r in rows if not r.failed and r.time_ms > 0]
    if len(ok) < 2:
        raise ValueError("need at least two timed rows")
    x = np.log([r.n for r in ok])
    y = np.log([r.time_ms for r in ok])
    return float(np.polyfit(x, y, 1)[0])


def rows_to_csv(rows: Sequence[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.as_csv())
    return buf.getvalue()
