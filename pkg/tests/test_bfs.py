import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import random_bfs_case
from skelgrid import VoxelGrid, propagate, run_bfs, run_bfs_terminating
from skelgrid.skeleton import bfs1_update

LINE3 = VoxelGrid((3, 1, 1), [(0, 0, 0), (1, 0, 0), (2, 0, 0)])


def test_unit_chain():
    assert run_bfs(LINE3, np.zeros(3), [0]).tolist() == [0, 1, 2]


def test_weighted_chain():
    assert run_bfs(LINE3, np.array([0.0, 5.0, 0.0]), [0]).tolist() == [0, 6, 7]


def test_block_diagonal():
    g = VoxelGrid((2, 2, 1), [(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0)])
    l = run_bfs(g, np.zeros(4), np.array([[0, 0, 0]]))
    assert l[g.index_of((1, 0, 0))] == 1 and l[g.index_of((0, 1, 0))] == 1
    assert l[g.index_of((1, 1, 0))] == pytest.approx(math.sqrt(2), abs=1e-12)


def test_terminating_line():
    g = VoxelGrid((5, 1, 1), [(i, 0, 0) for i in range(5)])
    labels, term = run_bfs_terminating(g, np.zeros(5), [4], [0])
    assert [g.coord(i) for i in term] == [(1, 0, 0)]
    assert np.isinf(labels[0])


def test_terminating_ring_two_arms():
    ring = [(1, 0, 0), (2, 0, 0), (3, 1, 0), (3, 2, 0), (2, 3, 0), (1, 3, 0), (0, 2, 0), (0, 1, 0)]
    g = VoxelGrid((4, 4, 1), ring)
    labels, term = run_bfs_terminating(g, np.zeros(8), np.array([[2, 3, 0]]), np.array([[1, 0, 0]]))
    assert sorted(g.coord(i) for i in term) == [(0, 1, 0), (2, 0, 0)]


def test_unreachable_barrier_equals_plain_run():
    g = VoxelGrid((6, 1, 1), [(0, 0, 0), (1, 0, 0), (4, 0, 0), (5, 0, 0)])
    w = np.zeros(4)
    labels, term = run_bfs_terminating(g, w, [0], [3])
    assert len(term) == 0
    assert labels[:2].tolist() == [0, 1]


def test_input_validation():
    with pytest.raises(ValueError):
        run_bfs(LINE3, np.zeros(3), [])
    with pytest.raises(ValueError):
        run_bfs(LINE3, -np.ones(3), [0])
    with pytest.raises(ValueError):
        run_bfs(LINE3, np.zeros(2), [0])
    with pytest.raises(ValueError):
        run_bfs(LINE3, np.zeros(3), np.array([[0, 0, 1]]))
    with pytest.raises(ValueError):
        run_bfs_terminating(LINE3, np.zeros(3), [0], [0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_frontier_partition(seed):
    g, w, src = random_bfs_case(seed, 600)
    run = propagate(g, w, src)
    reached = np.isfinite(run.labels).sum()
    assert run.active_sizes().sum() == reached
    assert ((run.settle_iter >= 0) == np.isfinite(run.labels)).all()
    assert np.all(np.diff(run.l_min) >= -1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_zero_weight_membership_at_most_three(seed):
    g, _, src = random_bfs_case(seed, 600)
    run = propagate(g, np.zeros(g.n), src)
    assert run.memberships().max() <= 3


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_incremental_equals_batch(seed):
    g, w, src = random_bfs_case(seed, 500)
    rng = np.random.default_rng(seed)
    labels = run_bfs(g, w, src[:1])
    extra = []
    for _ in range(2):
        new = np.unique(rng.integers(0, g.n, 3))
        labels = bfs1_update(labels, new, g, w)
        extra.extend(new.tolist())
    batch = run_bfs(g, w, np.unique(np.concatenate([src[:1], extra])))
    fin = np.isfinite(batch)
    assert (np.isfinite(labels) == fin).all()
    assert np.max(np.abs(labels[fin] - batch[fin]), initial=0.0) <= 1e-9


def test_bfs1_update_examples():
    l = bfs1_update(np.full(3, np.inf), [0], LINE3, np.zeros(3))
    assert l.tolist() == [0, 1, 2]
    assert bfs1_update(l, [1, 2], LINE3, np.zeros(3)).tolist() == [0, 0, 0]
