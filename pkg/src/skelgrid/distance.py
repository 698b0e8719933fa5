"""Euclidean distance from each occupied voxel to the nearest surface voxel.

Three separable scans (x, then y, then z) in the style of Meijster et al.,
run only over maximal runs of consecutive occupied voxels.  Restricting the
scans to occupied runs is exact here: every lattice point strictly inside
the ball between a voxel and its nearest surface voxel is occupied and
interior, so the three axis-aligned legs of the optimal route never leave
a run.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .grid import VoxelGrid, surface_mask


@dataclass(frozen=True)
class DistanceField:
    """Per-voxel squared distances (exact integers) and their square roots."""

    d2: np.ndarray

    @property
    def d(self) -> np.ndarray:
        return np.sqrt(self.d2.astype(np.float64))

    @property
    def d2_max(self) -> int:
        return int(self.d2.max())

    @property
    def d_max(self) -> float:
        return float(np.sqrt(self.d2_max))


def _runs(order: np.ndarray, coords: np.ndarray, axis: int):
    """Split *order* into runs that advance by one along *axis*, others fixed."""
    c = coords[order]
    step = np.diff(c, axis=0)
    other = [a for a in range(3) if a != axis]
    cont = (step[:, axis] == 1) & (step[:, other[0]] == 0) & (step[:, other[1]] == 0)
    starts = np.concatenate(([0], np.flatnonzero(~cont) + 1, [len(order)])).astype(np.int64)
    return starts


@nb.njit(cache=True, parallel=True)
def _scan_first(order, starts, is_surface, out):
    # Squared distance to the nearest surface voxel inside the same x-run.
    for r in nb.prange(len(starts) - 1):
        a = starts[r]
        b = starts[r + 1]
        last = -1
        for p in range(a, b):
            if is_surface[order[p]]:
                last = p
            out[order[p]] = p - last if last >= 0 else 1 << 30
        last = -1
        for p in range(b - 1, a - 1, -1):
            if is_surface[order[p]]:
                last = p
            if last >= 0:
                g = last - p
                if g < out[order[p]]:
                    out[order[p]] = g
        for p in range(a, b):
            g = out[order[p]]
            out[order[p]] = g * g


@nb.njit(cache=True, parallel=True)
def _scan_envelope(order, starts, g_in, out):
    # Lower envelope of parabolas (u - i)^2 + g_in[i] over each run.
    for r in nb.prange(len(starts) - 1):
        a = starts[r]
        m = starts[r + 1] - a
        s = np.empty(m, dtype=np.int64)
        t = np.empty(m, dtype=np.int64)
        q = 0
        s[0] = 0
        t[0] = 0
        for u in range(1, m):
            gu = g_in[order[a + u]]
            while q >= 0:
                sq = s[q]
                tq = t[q]
                if (tq - sq) * (tq - sq) + g_in[order[a + sq]] > (tq - u) * (tq - u) + gu:
                    q -= 1
                else:
                    break
            if q < 0:
                q = 0
                s[0] = u
            else:
                sq = s[q]
                num = u * u - sq * sq + gu - g_in[order[a + sq]]
                w = 1 + num // (2 * (u - sq))
                if w < m:
                    q += 1
                    s[q] = u
                    t[q] = w
        for u in range(m - 1, -1, -1):
            sq = s[q]
            out[order[a + u]] = (u - sq) * (u - sq) + g_in[order[a + sq]]
            if u == t[q]:
                q -= 1


def distance_transform(grid: VoxelGrid, mask: np.ndarray | None = None) -> DistanceField:
    """Exact squared Euclidean distance to the closest surface voxel center."""
    if mask is None:
        mask = surface_mask(grid)
    c = grid.coords
    n = grid.n
    # ids are already (x, y, z)-sorted: z-runs come for free
    by_x = np.lexsort((c[:, 0], c[:, 2], c[:, 1]))
    by_y = np.lexsort((c[:, 1], c[:, 2], c[:, 0]))
    by_z = np.arange(n, dtype=np.int64)

    g1 = np.empty(n, dtype=np.int64)
    _scan_first(by_x, _runs(by_x, c, 0), np.ascontiguousarray(mask), g1)
    g2 = np.empty(n, dtype=np.int64)
    _scan_envelope(by_y, _runs(by_y, c, 1), g1, g2)
    g3 = np.empty(n, dtype=np.int64)
    _scan_envelope(by_z, _runs(by_z, c, 2), g2, g3)
    g3.setflags(write=False)
    return DistanceField(g3)


def weights_from_distance(field: DistanceField) -> np.ndarray:
    """Search weights ``d_max - d``: zero on the thickest voxels, ``d_max`` on the surface."""
    d = field.d
    return d.max() - d

