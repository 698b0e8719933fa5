"""Curve-skeleton extraction by repeated weighted searches.

Per connected component: distance field, seed at the thickest voxel, then
repeat { update search labels from the skeleton, propose the farthest
surface voxel, search back from it until the wave meets the skeleton,
trace a centered path, and either test it as a branch or close a loop }.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numba as nb
import numpy as np

from .bfs import as_ids, propagate
from .distance import DistanceField, distance_transform, weights_from_distance
from .grid import STEPS, VoxelGrid, component_labels, connected_components, surface_mask
from .spurious import SpuriousTestConfig, Verdict, spurious_test

log = logging.getLogger(__name__)

Coord = Tuple[int, int, int]

SEED, BRANCH, LOOP_ARM = "seed", "branch", "loop-arm"


class TraceError(RuntimeError):
    """Path tracing ran out of downhill neighbors before reaching the tip."""


class SkeletonInvariantError(RuntimeError):
    pass


@dataclass(frozen=True)
class RejectPolicy:
    """When to stop proposing endpoints.

    ``stop-after-k-rejections`` ends after *k* consecutive rejected
    proposals; ``exhaustive`` keeps going until no unrejected surface voxel
    is left off the skeleton.  Rejected tips are never proposed twice.
    """

    kind: str = "stop-after-k-rejections"
    k: int = 1
    max_proposals: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("stop-after-k-rejections", "exhaustive"):
            raise ValueError(f"unknown reject policy {self.kind!r}")
        if self.k < 1:
            raise ValueError("k must be at least 1")

    def describe(self) -> str:
        if self.kind == "exhaustive":
            return "exhaustive"
        return f"{self.kind}:{self.k}"


@dataclass(frozen=True)
class SkeletonSegment:
    path: Tuple[Coord, ...]
    kind: str
    attach: Optional[Coord] = None
    labels: Tuple[float, ...] = ()
    component: int = 0

    def __len__(self) -> int:
        return len(self.path)


@dataclass(frozen=True)
class FrontierComponent:
    """One connected piece of the terminal search frontier (voxel ids)."""

    voxels: np.ndarray
    surface: np.ndarray
    skeleton_neighbors: np.ndarray


@dataclass(frozen=True)
class SkeletonStats:
    n: int = 0
    d_max: float = 0.0
    proposals: int = 0
    accepted: int = 0
    rejected: int = 0
    loops: int = 0
    time_ms: float = 0.0


@dataclass(frozen=True)
class CurveSkeleton:
    dims: Tuple[int, int, int]
    segments: Tuple[SkeletonSegment, ...]
    junctions: Tuple[Coord, ...] = ()
    loops: Tuple[Tuple[int, ...], ...] = ()
    params: dict = field(default_factory=dict)
    stats: SkeletonStats = SkeletonStats()

    @cached_property
    def union(self) -> frozenset:
        return frozenset(v for s in self.segments for v in s.path)

    def voxels(self) -> np.ndarray:
        """Skeleton voxels as a sorted (k, 3) array."""
        if not self.union:
            return np.empty((0, 3), dtype=np.int64)
        return np.array(sorted(self.union), dtype=np.int64)

    def branch_segments(self) -> list:
        return [s for s in self.segments if s.kind == BRANCH]


@dataclass
class SkeletonDebug:
    """Label fields kept for dumps: last BFS1 labels and last BFS2 labels per voxel."""

    bfs1: np.ndarray
    bfs2: np.ndarray


# -- kernels ------------------------------------------------------------------


@nb.njit(cache=True)
def _trace(nbr, labels2, d2, start, tip, in_skel, out):
    c = start
    m = 0
    out[m] = c
    m += 1
    while c != tip and not in_skel[c]:
        lc = labels2[c]
        best_d = -1
        for k in range(26):
            j = nbr[c, k]
            if j >= 0 and labels2[j] < lc and d2[j] > best_d:
                best_d = d2[j]
        if best_d < 0:
            return -m
        nxt = -1
        best_l = np.inf
        for k in range(26):
            j = nbr[c, k]
            if j >= 0 and labels2[j] < lc and d2[j] == best_d and labels2[j] < best_l:
                best_l = labels2[j]
                nxt = j
        out[m] = nxt
        m += 1
        c = nxt
    return m


# -- pipeline steps -------------------------------------------------------------


def find_seed(field: DistanceField, grid: VoxelGrid) -> Coord:
    """Lexicographically smallest voxel at maximal distance."""
    return grid.coord(_seed_id(field))


def _seed_id(field: DistanceField) -> int:
    d2 = field.d2
    return int(np.flatnonzero(d2 == d2.max())[0])


def bfs1_update(labels, new_segment_voxels, grid: VoxelGrid, weights) -> np.ndarray:
    """Zero the new skeleton voxels and let the decrease propagate."""
    ids = as_ids(grid, new_segment_voxels)
    if len(ids) == 0:
        raise ValueError("no new skeleton voxels")
    return propagate(grid, weights, ids, initial_labels=labels).labels


def select_endpoint(labels, mask, exclude=None) -> Optional[int]:
    """Id of the surface voxel with the largest finite label (smallest id on ties).

    Returns ``None`` when that label is 0, i.e. nothing is left to propose.
    """
    cand = np.asarray(mask, dtype=bool) & np.isfinite(labels)
    if exclude is not None:
        cand &= ~exclude
    if not cand.any():
        return None
    vals = np.where(cand, labels, -1.0)
    best = vals.max()
    if best <= 0.0:
        return None
    return int(np.flatnonzero(vals == best)[0])


def bfs2_components(grid: VoxelGrid, weights, v_t: int, in_skeleton: np.ndarray, mask: np.ndarray):
    """Search back from *v_t*; return BFS2 labels and the frozen frontier pieces."""
    if in_skeleton[v_t]:
        raise ValueError("proposed endpoint already lies on the skeleton")
    run = propagate(grid, weights, np.array([v_t]), barrier=np.flatnonzero(in_skeleton))
    comps = []
    ids = np.flatnonzero(run.component >= 0)
    if len(ids):
        # pieces frozen at different times still merge when they end up adjacent
        count, which = component_labels(grid.subgrid(ids))
        nb_ids = grid.neighbors[ids]
        touches = ((nb_ids >= 0) & in_skeleton[np.where(nb_ids >= 0, nb_ids, 0)]).any(axis=1)
        for c in range(count):
            sel = which == c
            vox = ids[sel]
            comps.append(
                FrontierComponent(voxels=vox, surface=vox[mask[vox]], skeleton_neighbors=vox[touches[sel]])
            )
    return run.labels, comps


def entry_voxel(component: FrontierComponent, labels2) -> int:
    """Skeleton-adjacent voxel of the component with the smallest BFS2 label."""
    csn = component.skeleton_neighbors
    if len(csn) == 0:
        raise SkeletonInvariantError("frontier component does not touch the skeleton")
    vals = labels2[csn]
    return int(csn[np.flatnonzero(vals == vals.min())[0]])


def trace_path(grid: VoxelGrid, labels2, field: DistanceField, v_t: int, v_s1: int, in_skeleton) -> np.ndarray:
    """Ids from *v_s1* to *v_t*, stepping to the most central downhill neighbor."""
    out = np.empty(grid.n, dtype=np.int64)
    m = _trace(grid.neighbors, np.asarray(labels2, dtype=np.float64), field.d2, v_s1, v_t, in_skeleton, out)
    if m < 0:
        raise TraceError(f"no downhill neighbor at {grid.coord(int(out[-m - 1]))}")
    return out[:m].copy()


def attachment_voxel(grid: VoxelGrid, v_s1: int, in_skeleton) -> int:
    """Skeleton neighbor of *v_s1* nearest to it (first in lexicographic order on ties)."""
    best = -1
    best_step = np.inf
    for k, j in enumerate(grid.neighbors[v_s1]):
        if j >= 0 and in_skeleton[j] and STEPS[k] < best_step:
            best, best_step = int(j), STEPS[k]
    if best < 0:
        raise SkeletonInvariantError("entry voxel has no skeleton neighbor")
    return best


def handle_loops(proposals: Sequence[Sequence], skeleton=None) -> list:
    """Strip the shared tip region from loop arms and make them disjoint.

    *proposals* are ordered voxel paths (any hashable voxel type); the
    result keeps each path's order.
    """
    if len(proposals) < 2:
        raise ValueError("loop handling needs at least two proposals")
    sets = [set(p) for p in proposals]
    common = set.intersection(*sets)
    out = [list(p) for p in proposals]
    for j in range(len(out)):
        out[j] = [v for v in out[j] if v not in common]
        for k in range(j + 1, len(out)):
            later = set(out[k]) - common
            out[j] = [v for v in out[j] if v not in later]
    return out


# -- driver ---------------------------------------------------------------------


class _ComponentRun:
    """Mutable state of one component's skeletonization."""

    def __init__(self, grid, config, policy, seed_id, comp_index):
        self.grid = grid
        self.config = config
        self.policy = policy
        self.comp = comp_index
        self.mask = surface_mask(grid)
        self.field = distance_transform(grid, self.mask)
        self.weights = weights_from_distance(self.field)
        n = grid.n
        self.in_skel = np.zeros(n, dtype=bool)
        self.degree = np.zeros(n, dtype=np.int64)
        self.rejected = np.zeros(n, dtype=bool)
        self.segments: list = []
        self.junctions: list = []
        self.loops: list = []
        self.proposals = 0
        self.accepted = 0
        self.n_rejected = 0
        self.bfs2_last = np.full(n, np.inf)
        self.streak = 0
        self.seed = _seed_id(self.field) if seed_id is None else seed_id
        self.in_skel[self.seed] = True
        self.labels1 = propagate(grid, self.weights, np.array([self.seed])).labels
        self._emit([self.seed], SEED, None, ())

    def _emit(self, ids, kind, attach, labels) -> int:
        g = self.grid
        self.segments.append(
            SkeletonSegment(
                path=tuple(g.coord(i) for i in ids),
                kind=kind,
                attach=None if attach is None else g.coord(attach),
                labels=tuple(float(v) for v in labels),
                component=self.comp,
            )
        )
        return len(self.segments) - 1

    def _attach(self, ids, v_s0):
        if v_s0 is not None:
            if self.degree[v_s0] >= 2:
                self.junctions.append(self.grid.coord(v_s0))
            self.degree[v_s0] += 1
            self.degree[ids[0]] += 1
        for a, b in zip(ids[:-1], ids[1:]):
            self.degree[a] += 1
            self.degree[b] += 1
        self.in_skel[ids] = True

    def step(self) -> bool:
        """One proposal; returns False when the component is finished."""
        g = self.grid
        pol = self.policy
        if pol.max_proposals is not None and self.proposals >= pol.max_proposals:
            return False
        v_t = select_endpoint(self.labels1, self.mask, self.rejected | self.in_skel)
        if v_t is None:
            return False
        self.proposals += 1
        labels2, comps = bfs2_components(g, self.weights, v_t, self.in_skel, self.mask)
        self.bfs2_last = labels2
        if not comps:
            raise SkeletonInvariantError(f"search from {g.coord(v_t)} never met the skeleton")
        if len(comps) == 1:
            return self._single(v_t, labels2, comps[0])
        return self._loop(v_t, labels2, comps)

    def _reject(self, v_t) -> bool:
        self.rejected[v_t] = True
        self.n_rejected += 1
        self.streak += 1
        if self.policy.kind == "stop-after-k-rejections" and self.streak >= self.policy.k:
            return False
        return True

    def _single(self, v_t, labels2, comp) -> bool:
        g = self.grid
        v_s1 = entry_voxel(comp, labels2)
        path = trace_path(g, labels2, self.field, v_t, v_s1, self.in_skel)
        v_s0 = attachment_voxel(g, v_s1, self.in_skel)
        verdict = spurious_test(
            g.coords[comp.surface], g.coords[v_t], g.coords[v_s0], self.config, segment_length=len(path)
        )
        if verdict.verdict is Verdict.REJECT:
            return self._reject(v_t)
        self._emit(path, BRANCH, v_s0, labels2[path])
        self._attach(path, v_s0)
        self.accepted += 1
        self.streak = 0
        self.labels1 = bfs1_update(self.labels1, path, g, self.weights)
        return True

    def _loop(self, v_t, labels2, comps) -> bool:
        g = self.grid
        arms = []
        for fc in comps:
            v_s1 = entry_voxel(fc, labels2)
            path = trace_path(g, labels2, self.field, v_t, v_s1, self.in_skel)
            arms.append((path, attachment_voxel(g, v_s1, self.in_skel)))
        first_path = arms[0][0]
        common = set(first_path.tolist())
        for p, _ in arms[1:]:
            common &= set(p.tolist())
        kept = handle_loops([p.tolist() for p, _ in arms])
        if not any(kept):
            return self._reject(v_t)
        # keep the voxel where the arms merge so the cycle stays closed
        meet = next(v for v in first_path.tolist() if v in common)
        if meet not in kept[0]:
            kept[0] = kept[0] + [meet]
        new_ids = []
        group = []
        for (path, v_s0), ids in zip(arms, kept):
            if not ids:
                continue
            ids = np.asarray(ids, dtype=np.int64)
            attach = v_s0 if ids[0] == path[0] else None
            group.append(self._emit(ids, LOOP_ARM, attach, labels2[ids]))
            self._attach(ids, attach)
            if ids[-1] != meet:
                # closing edge from the arm's end to the merge voxel
                self.degree[ids[-1]] += 1
                self.degree[meet] += 1
            new_ids.append(ids)
        if not new_ids:
            return self._reject(v_t)
        self.loops.append(tuple(group))
        self.streak = 0
        self.labels1 = bfs1_update(self.labels1, np.concatenate(new_ids), g, self.weights)
        return True

    def run(self):
        while self.step():
            pass


def skeletonize(
    grid: VoxelGrid,
    config: SpuriousTestConfig | None = None,
    policy: RejectPolicy | None = None,
    seed_voxel: Optional[Coord] = None,
    debug: bool = False,
):
    """Extract the curve skeleton of every connected component of *grid*.

    *seed_voxel* overrides the automatic seed in the component containing
    it.  With ``debug=True`` a ``(skeleton, SkeletonDebug)`` pair is
    returned.
    """
    config = config or SpuriousTestConfig()
    policy = policy or RejectPolicy()
    t0 = time.perf_counter()
    comps = connected_components(grid)
    if seed_voxel is not None and tuple(seed_voxel) not in grid:
        raise ValueError(f"seed voxel {tuple(seed_voxel)} is not occupied")

    segments, junctions, loops, seeds = [], [], [], []
    proposals = accepted = rejected = 0
    d_max = 0.0
    dbg1 = np.full(grid.n, np.inf)
    dbg2 = np.full(grid.n, np.inf)
    for ci, sub in enumerate(comps):
        seed_id = None
        if seed_voxel is not None and tuple(seed_voxel) in sub:
            seed_id = sub.index_of(seed_voxel)
        run = _ComponentRun(sub, config, policy, seed_id, ci)
        run.run()
        offset = len(segments)
        segments.extend(run.segments)
        junctions.extend(run.junctions)
        loops.extend(tuple(i + offset for i in grp) for grp in run.loops)
        seeds.append(sub.coord(run.seed))
        proposals += run.proposals
        accepted += run.accepted
        rejected += run.n_rejected
        d_max = max(d_max, run.field.d_max)
        if debug:
            gid = grid.indices_of(sub.coords)
            dbg1[gid] = run.labels1
            dbg2[gid] = run.bfs2_last
    elapsed = (time.perf_counter() - t0) * 1000.0
    stats = SkeletonStats(
        n=grid.n,
        d_max=d_max,
        proposals=proposals,
        accepted=accepted,
        rejected=rejected,
        loops=len(loops),
        time_ms=elapsed,
    )
    params = {
        "t": config.t,
        "epsilon": config.epsilon,
        "policy": policy.describe(),
        "seed": [list(s) for s in seeds],
    }
    log.debug("skeletonized n=%d proposals=%d in %.1f ms", grid.n, proposals, elapsed)
    skel = CurveSkeleton(
        dims=grid.dims,
        segments=tuple(segments),
        junctions=tuple(junctions),
        loops=tuple(loops),
        params=params,
        stats=stats,
    )
    if debug:
        return skel, SkeletonDebug(dbg1, dbg2)
    return skel
