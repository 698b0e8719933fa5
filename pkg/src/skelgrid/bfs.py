"""Weighted frontier search over the voxel graph.

Labels grow by ``w[target] + |step|`` per move, with step lengths 1, sqrt(2)
and sqrt(3).  The search keeps an active frontier (voxels settled this
iteration, the only ones that relax their neighbors) and a waiting frontier
(settled voxels that still have unsettled neighbors).  Each iteration takes
the smallest tentative label ``l_min`` among undiscovered candidates and
activates every candidate below ``l_min + 1``.  Because every move costs at
least 1, those labels can no longer improve, so the result equals the exact
weighted shortest-path distance while each voxel is activated exactly once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .grid import STEPS, VoxelGrid

IDLE, CANDIDATE, SETTLED, BARRIER = 0, 1, 2, 3


@nb.njit(cache=True)
def _freeze_touching(nbr, state, frozen, comp, remaining, fa, nfa, ncomp, stack):
    found = False
    for a in range(nfa):
        j = fa[a]
        if frozen[j]:
            continue
        touch = False
        for k in range(26):
            u = nbr[j, k]
            if u >= 0 and state[u] == BARRIER:
                touch = True
                break
        if not touch:
            continue
        # the whole connected piece of the open frontier stops here
        found = True
        frozen[j] = True
        comp[j] = ncomp
        top = 0
        stack[top] = j
        top += 1
        while top > 0:
            top -= 1
            v = stack[top]
            for k in range(26):
                u = nbr[v, k]
                if u >= 0 and state[u] == SETTLED and not frozen[u] and remaining[u] > 0:
                    frozen[u] = True
                    comp[u] = ncomp
                    stack[top] = u
                    top += 1
        ncomp += 1
    return ncomp, found


@nb.njit(cache=True)
def _drop_orphans(nbr, state, frozen, labels, init_labels, cand, ncand):
    # candidates reachable only through frozen voxels go back to idle
    keep = 0
    for a in range(ncand):
        j = cand[a]
        alive = False
        for k in range(26):
            u = nbr[j, k]
            if u >= 0 and state[u] == SETTLED and not frozen[u]:
                alive = True
                break
        if alive:
            cand[keep] = j
            keep += 1
        else:
            state[j] = IDLE
            labels[j] = init_labels[j]
    return keep


@nb.njit(cache=True)
def _settle(nbr, fa, nfa, k, state, settle_it, retire_it, remaining):
    for a in range(nfa):
        j = fa[a]
        state[j] = SETTLED
        settle_it[j] = k
    for a in range(nfa):
        j = fa[a]
        for kk in range(26):
            u = nbr[j, kk]
            if u < 0:
                continue
            remaining[u] -= 1
            if remaining[u] == 0 and state[u] == SETTLED:
                retire_it[u] = max(k, settle_it[u] + 1)
    for a in range(nfa):
        j = fa[a]
        if remaining[j] == 0 and retire_it[j] < 0:
            retire_it[j] = k + 1


@nb.njit(cache=True)
def _propagate(nbr, steps, weights, labels, init, barrier, terminating):
    n = nbr.shape[0]
    init_labels = labels.copy()
    state = np.zeros(n, dtype=np.int8)
    frozen = np.zeros(n, dtype=np.bool_)
    comp = np.full(n, -1, dtype=np.int64)
    remaining = np.zeros(n, dtype=np.int32)
    for i in range(n):
        c = 0
        for k in range(26):
            if nbr[i, k] >= 0:
                c += 1
        remaining[i] = c
    for a in range(len(barrier)):
        state[barrier[a]] = BARRIER
    settle_it = np.full(n, -1, dtype=np.int64)
    retire_it = np.full(n, -1, dtype=np.int64)
    lmins = np.empty(n + 1, dtype=np.float64)
    fa = np.empty(n, dtype=np.int64)
    cand = np.empty(n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    ncomp = 0

    nfa = 0
    for a in range(len(init)):
        i = init[a]
        if state[i] == IDLE:
            state[i] = CANDIDATE  # provisional, _settle marks it
            fa[nfa] = i
            nfa += 1
    k = 0
    _settle(nbr, fa, nfa, k, state, settle_it, retire_it, remaining)
    ncand = 0
    if terminating:
        ncomp, _ = _freeze_touching(nbr, state, frozen, comp, remaining, fa, nfa, ncomp, stack)

    while nfa > 0:
        for a in range(nfa):
            i = fa[a]
            if frozen[i]:
                continue
            li = labels[i]
            for kk in range(26):
                j = nbr[i, kk]
                if j < 0 or state[j] >= SETTLED:
                    continue
                if labels[j] > li:
                    c = li + weights[j] + steps[kk]
                    if c < labels[j]:
                        labels[j] = c
                        if state[j] == IDLE:
                            state[j] = CANDIDATE
                            cand[ncand] = j
                            ncand += 1
        if ncand == 0:
            break
        lmin = np.inf
        for a in range(ncand):
            if labels[cand[a]] < lmin:
                lmin = labels[cand[a]]
        lmins[k] = lmin
        thr = lmin + 1.0
        nfa = 0
        keep = 0
        for a in range(ncand):
            j = cand[a]
            if labels[j] < thr:
                fa[nfa] = j
                nfa += 1
            else:
                cand[keep] = j
                keep += 1
        ncand = keep
        k += 1
        _settle(nbr, fa, nfa, k, state, settle_it, retire_it, remaining)
        if terminating:
            ncomp, found = _freeze_touching(
                nbr, state, frozen, comp, remaining, fa, nfa, ncomp, stack
            )
            if found:
                ncand = _drop_orphans(nbr, state, frozen, labels, init_labels, cand, ncand)
    iterations = k + 1
    for i in range(n):
        if settle_it[i] >= 0 and retire_it[i] < 0:
            retire_it[i] = iterations
        if terminating and state[i] != SETTLED:
            labels[i] = np.inf
    return comp, ncomp, settle_it, retire_it, lmins[:k], iterations


@dataclass(frozen=True)
class BFSRun:
    """Labels plus the frontier bookkeeping of one search.

    ``settle_iter[i]`` is the iteration in which voxel ``i`` entered the
    active frontier (-1 if never) and ``retire_iter[i]`` the first iteration
    in which it was no longer part of the frontier.
    """

    labels: np.ndarray
    settle_iter: np.ndarray
    retire_iter: np.ndarray
    l_min: np.ndarray
    iterations: int
    component: np.ndarray | None = None
    n_components: int = 0

    def active_sizes(self) -> np.ndarray:
        s = self.settle_iter[self.settle_iter >= 0]
        return np.bincount(s, minlength=self.iterations)

    def frontier_sizes(self) -> np.ndarray:
        """|F_A(k)| + |F_B(k)| for each iteration k."""
        live = self.settle_iter >= 0
        delta = np.zeros(self.iterations + 1, dtype=np.int64)
        np.add.at(delta, self.settle_iter[live], 1)
        np.add.at(delta, self.retire_iter[live], -1)
        return np.cumsum(delta)[: self.iterations]

    def waiting_sizes(self) -> np.ndarray:
        return self.frontier_sizes() - self.active_sizes()

    def memberships(self) -> np.ndarray:
        """Number of iterations each reached voxel spent in the frontier."""
        live = self.settle_iter >= 0
        out = np.zeros(len(self.labels), dtype=np.int64)
        out[live] = self.retire_iter[live] - self.settle_iter[live]
        return out

    def terminal_frontier(self) -> np.ndarray:
        if self.component is None:
            return np.empty(0, dtype=np.int64)
        return np.flatnonzero(self.component >= 0)


def as_ids(grid: VoxelGrid, voxels) -> np.ndarray:
    """Voxel ids from ids or (k, 3) coordinates; unoccupied voxels are an error."""
    a = np.asarray(voxels)
    if a.ndim == 2:
        ids = grid.indices_of(a)
        if (ids < 0).any():
            bad = a.reshape(-1, 3)[ids < 0][0]
            raise ValueError(f"voxel {tuple(int(v) for v in bad)} is not occupied")
        return ids
    ids = a.astype(np.int64).ravel()
    if ((ids < 0) | (ids >= grid.n)).any():
        raise ValueError("voxel id out of range")
    return ids


def fresh_labels(n: int, frontier: np.ndarray) -> np.ndarray:
    """Labels of the form 0 on the initial frontier, +inf elsewhere."""
    labels = np.full(n, np.inf)
    labels[frontier] = 0.0
    return labels


def propagate(grid: VoxelGrid, weights, initial_frontier, initial_labels=None, barrier=None) -> BFSRun:
    """Run the search; with a *barrier*, frontier pieces touching it stop."""
    front = as_ids(grid, initial_frontier)
    if len(front) == 0:
        raise ValueError("initial frontier is empty")
    w = np.ascontiguousarray(weights, dtype=np.float64)
    if w.shape != (grid.n,):
        raise ValueError("weights must have one entry per voxel")
    if (w < 0).any():
        raise ValueError("weights must be non-negative")
    if initial_labels is None:
        labels = fresh_labels(grid.n, front)
    else:
        labels = np.array(initial_labels, dtype=np.float64)
        labels[front] = 0.0
    terminating = barrier is not None
    bar = as_ids(grid, barrier) if terminating else np.empty(0, dtype=np.int64)
    if terminating and np.isin(front, bar).any():
        raise ValueError("initial frontier overlaps the barrier")
    comp, ncomp, settle_it, retire_it, lmins, iters = _propagate(
        grid.neighbors, STEPS, w, labels, front, bar, terminating
    )
    return BFSRun(
        labels=labels,
        settle_iter=settle_it,
        retire_iter=retire_it,
        l_min=lmins,
        iterations=int(iters),
        component=comp if terminating else None,
        n_components=int(ncomp),
    )


def run_bfs(grid: VoxelGrid, weights, initial_frontier, initial_labels=None) -> np.ndarray:
    """Weighted shortest-path labels from the zero-label set."""
    return propagate(grid, weights, initial_frontier, initial_labels).labels


def run_bfs_terminating(grid: VoxelGrid, weights, initial_frontier, barrier, initial_labels=None):
    """Search that halts where it meets *barrier*.

    Returns ``(labels, terminal)``; ``terminal`` lists the ids of frozen
    frontier voxels.  Voxels never settled keep ``+inf``.
    """
    run = propagate(grid, weights, initial_frontier, initial_labels, barrier=barrier)
    return run.labels, run.terminal_frontier()
