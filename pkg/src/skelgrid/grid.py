"""Sparse voxel grid: occupied cells, 26-neighborhoods, surface, components, IO."""
from __future__ import annotations

import itertools
import os
import struct
from typing import Iterable, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components as _cc

Coord = Tuple[int, int, int]

# Lexicographic (dx, dy, dz) order, so a voxel's neighbor slots come out sorted.
OFFSETS = np.array(
    [d for d in itertools.product((-1, 0, 1), repeat=3) if d != (0, 0, 0)],
    dtype=np.int64,
)
STEPS = np.sqrt((OFFSETS**2).sum(axis=1)).astype(np.float64)

MAX_DIM = 2**31 - 1
ASCII_MAGIC = "VOXA"
BINARY_MAGIC = b"VOXB"


class GridFormatError(ValueError):
    """Base class for voxel file parse failures."""

    def __init__(self, message: str, *, line: int | None = None, offset: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}: "
        elif offset is not None:
            where = f"byte offset {offset}: "
        super().__init__(where + message)
        self.line = line
        self.offset = offset


class HeaderError(GridFormatError):
    pass


class CoordinateError(GridFormatError):
    """A coordinate line is malformed or lies outside the declared dims."""


class EmptyGridError(GridFormatError):
    pass


class VoxelGrid:
    """Immutable sparse set of occupied lattice cells.

    Voxels are stored sorted lexicographically by ``(x, y, z)``, so the dense
    id of a voxel doubles as its rank in that order; every "smallest voxel"
    tie-break in the package is a plain ``min`` over ids.

    ``neighbors[i, k]`` holds the id of the occupied voxel at
    ``coords[i] + OFFSETS[k]`` or ``-1``.
    """

    __slots__ = ("dims", "coords", "keys", "neighbors", "_degree")

    def __init__(self, dims: Sequence[int], coords, *, _presorted: bool = False, _neighbors=None):
        dims = tuple(int(v) for v in dims)
        if len(dims) != 3 or any(v <= 0 for v in dims):
            raise ValueError(f"dims must be three positive integers, got {dims}")
        if any(v > MAX_DIM for v in dims):
            raise ValueError(f"dims exceed the 32-bit coordinate range: {dims}")
        c = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        if len(c) == 0:
            raise ValueError("a voxel grid needs at least one occupied voxel")
        if (c < 0).any() or (c >= np.asarray(dims)).any():
            bad = c[((c < 0) | (c >= np.asarray(dims))).any(axis=1)][0]
            raise ValueError(f"voxel {tuple(int(v) for v in bad)} outside dims {dims}")

        keys = _keys(c, dims)
        if not _presorted:
            keys, first = np.unique(keys, return_index=True)
            c = c[first]
        self.dims: Tuple[int, int, int] = dims
        self.coords = c
        self.keys = keys
        self.neighbors = _neighbors if _neighbors is not None else _neighbor_table(c, keys, dims)
        self._degree = None
        for a in (self.coords, self.keys, self.neighbors):
            a.setflags(write=False)

    # -- basic queries -----------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.coords)

    def __len__(self) -> int:
        return len(self.coords)

    def __eq__(self, other) -> bool:
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.coords, other.coords)

    def __repr__(self) -> str:
        return f"VoxelGrid(dims={self.dims}, n={self.n})"

    @property
    def degree(self) -> np.ndarray:
        """Occupied 26-neighbor count per voxel."""
        if self._degree is None:
            self._degree = (self.neighbors >= 0).sum(axis=1).astype(np.int32)
        return self._degree

    def index_of(self, v: Iterable[int]) -> int:
        """Dense id of occupied voxel *v*; ``KeyError`` when unoccupied."""
        x, y, z = (int(a) for a in v)
        nx, ny, nz = self.dims
        if not (0 <= x < nx and 0 <= y < ny and 0 <= z < nz):
            raise KeyError((x, y, z))
        key = (x * ny + y) * nz + z
        i = int(np.searchsorted(self.keys, key))
        if i >= len(self.keys) or self.keys[i] != key:
            raise KeyError((x, y, z))
        return i

    def indices_of(self, coords) -> np.ndarray:
        """Vectorised :meth:`index_of`; unoccupied or out-of-range entries give -1."""
        c = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        inside = ((c >= 0) & (c < np.asarray(self.dims))).all(axis=1)
        out = np.full(len(c), -1, dtype=np.int64)
        if inside.any():
            k = _keys(c[inside], self.dims)
            pos = np.searchsorted(self.keys, k)
            pos_c = np.minimum(pos, len(self.keys) - 1)
            hit = self.keys[pos_c] == k
            out[np.flatnonzero(inside)[hit]] = pos_c[hit]
        return out

    def __contains__(self, v) -> bool:
        try:
            self.index_of(v)
        except KeyError:
            return False
        return True

    def coord(self, i: int) -> Coord:
        x, y, z = self.coords[i]
        return int(x), int(y), int(z)

    def occupied(self) -> set:
        return {tuple(int(a) for a in row) for row in self.coords}

    def subgrid(self, ids) -> "VoxelGrid":
        """Grid over a union of whole components (neighbors are remapped, not rebuilt)."""
        ids = np.asarray(ids, dtype=np.int64)
        ids = np.sort(ids)
        remap = np.full(self.n + 1, -1, dtype=np.int64)
        remap[ids] = np.arange(len(ids))
        nb = self.neighbors[ids]
        # slot -1 maps through remap[-1], which is the sentinel cell
        sub_nb = remap[nb].astype(np.int32)
        return VoxelGrid(
            self.dims, self.coords[ids], _presorted=True, _neighbors=np.ascontiguousarray(sub_nb)
        )


def _keys(c: np.ndarray, dims) -> np.ndarray:
    _, ny, nz = dims
    return (c[:, 0] * ny + c[:, 1]) * nz + c[:, 2]


def _neighbor_table(c: np.ndarray, keys: np.ndarray, dims) -> np.ndarray:
    n = len(c)
    table = np.full((n, 26), -1, dtype=np.int32)
    lim = np.asarray(dims, dtype=np.int64)
    for k, off in enumerate(OFFSETS):
        q = c + off
        ok = ((q >= 0) & (q < lim)).all(axis=1)
        idx = np.flatnonzero(ok)
        qk = _keys(q[idx], dims)
        pos = np.searchsorted(keys, qk)
        pos = np.minimum(pos, n - 1)
        hit = keys[pos] == qk
        table[idx[hit], k] = pos[hit]
    return table


# -- topology ---------------------------------------------------------------


def neighbors26(grid: VoxelGrid, v) -> list:
    """Occupied voxels at Chebyshev distance 1 from *v*, lexicographically ordered."""
    try:
        i = grid.index_of(v)
    except KeyError:
        raise ValueError(f"voxel {tuple(v)} is not occupied") from None
    return [grid.coord(j) for j in grid.neighbors[i] if j >= 0]


def surface_mask(grid: VoxelGrid) -> np.ndarray:
    """Boolean per voxel id: fewer than 26 occupied neighbors."""
    return grid.degree < 26


def component_labels(grid: VoxelGrid) -> Tuple[int, np.ndarray]:
    """Component count and per-voxel component index.

    Components are numbered by their lexicographically smallest voxel.
    """
    n = grid.n
    nb = grid.neighbors
    rows, cols = np.nonzero(nb >= 0)
    adj = csr_matrix(
        (np.ones(len(rows), dtype=np.int8), (rows, nb[rows, cols])), shape=(n, n)
    )
    count, raw = _cc(adj, directed=False)
    first = np.full(count, n, dtype=np.int64)
    np.minimum.at(first, raw, np.arange(n))
    order = np.argsort(first, kind="stable")
    rank = np.empty(count, dtype=np.int64)
    rank[order] = np.arange(count)
    return count, rank[raw]


def connected_components(grid: VoxelGrid) -> list:
    """Maximal 26-connected pieces as separate grids, ordered by smallest voxel."""
    count, labels = component_labels(grid)
    if count == 1:
        return [grid]
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(count + 1))
    return [grid.subgrid(order[bounds[i] : bounds[i + 1]]) for i in range(count)]


# -- file IO ----------------------------------------------------------------


def detect_format(path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == BINARY_MAGIC:
        return "binary-vox"
    return "ascii-vox"


def load_grid(path, format: str | None = None) -> VoxelGrid:
    """Read an ascii-vox or binary-vox file (format sniffed when omitted)."""
    if format is None:
        format = detect_format(path)
    if format == "ascii-vox":
        with open(path, "r", encoding="ascii", newline="") as fh:
            return parse_ascii(fh.read())
    if format == "binary-vox":
        with open(path, "rb") as fh:
            return parse_binary(fh.read())
    raise ValueError(f"unknown voxel format {format!r}")


def parse_ascii(text: str) -> VoxelGrid:
    lines = text.split("\n")
    dims = None
    rows = []
    line_nos = []
    for no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if dims is None:
            if parts[0] != ASCII_MAGIC or len(parts) != 4:
                raise HeaderError(f"expected '{ASCII_MAGIC} nx ny nz', got {line!r}", line=no)
            try:
                dims = tuple(int(p) for p in parts[1:])
            except ValueError:
                raise HeaderError(f"non-integer dims in {line!r}", line=no) from None
            if any(d <= 0 for d in dims):
                raise HeaderError(f"dims must be positive, got {dims}", line=no)
            if any(d > MAX_DIM for d in dims):
                raise HeaderError(f"dims exceed 32-bit range: {dims}", line=no)
            continue
        if len(parts) != 3:
            raise CoordinateError(f"expected 'x y z', got {line!r}", line=no)
        try:
            rows.append((int(parts[0]), int(parts[1]), int(parts[2])))
        except ValueError:
            raise CoordinateError(f"non-integer coordinate in {line!r}", line=no) from None
        line_nos.append(no)
    if dims is None:
        raise HeaderError("missing header", line=1)
    if not rows:
        raise EmptyGridError("no occupied voxels", line=len(lines))
    c = np.asarray(rows, dtype=np.int64)
    bad = ((c < 0) | (c >= np.asarray(dims))).any(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise CoordinateError(f"voxel {rows[i]} outside dims {dims}", line=line_nos[i])
    return VoxelGrid(dims, c)


def parse_binary(data: bytes) -> VoxelGrid:
    if len(data) < 4 or data[:4] != BINARY_MAGIC:
        raise HeaderError("missing VOXB magic", offset=0)
    if len(data) < 24:
        raise HeaderError("truncated header", offset=len(data))
    dims = struct.unpack_from("<3I", data, 4)
    (count,) = struct.unpack_from("<Q", data, 16)
    if any(d == 0 for d in dims):
        raise HeaderError(f"dims must be positive, got {dims}", offset=4)
    if any(d > MAX_DIM for d in dims):
        raise HeaderError(f"dims exceed 32-bit range: {dims}", offset=4)
    if count == 0:
        raise EmptyGridError("no occupied voxels", offset=16)
    need = 24 + 12 * count
    if len(data) != need:
        raise CoordinateError(f"expected {need} bytes for {count} voxels, got {len(data)}", offset=len(data))
    c = np.frombuffer(data, dtype="<u4", count=3 * count, offset=24).astype(np.int64).reshape(-1, 3)
    bad = (c >= np.asarray(dims)).any(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise CoordinateError(
            f"voxel {tuple(int(v) for v in c[i])} outside dims {dims}", offset=24 + 12 * i
        )
    return VoxelGrid(dims, c)


def format_ascii(grid: VoxelGrid, comments: Sequence[str] = ()) -> str:
    out = [f"{ASCII_MAGIC} {grid.dims[0]} {grid.dims[1]} {grid.dims[2]}"]
    out.extend("# " + c for c in comments)
    out.extend(f"{x} {y} {z}" for x, y, z in grid.coords.tolist())
    return "\n".join(out) + "\n"


def save_grid(grid: VoxelGrid, path, format: str = "ascii-vox", comments: Sequence[str] = ()) -> None:
    """Write *grid*; voxels are emitted in lexicographic order."""
    path = os.fspath(path)
    if format == "ascii-vox":
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(format_ascii(grid, comments))
    elif format == "binary-vox":
        body = grid.coords.astype("<u4").tobytes()
        with open(path, "wb") as fh:
            fh.write(BINARY_MAGIC + struct.pack("<3IQ", *grid.dims, grid.n) + body)
    else:
        raise ValueError(f"unknown voxel format {format!r}")
