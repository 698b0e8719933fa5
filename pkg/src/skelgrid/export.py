"""Skeleton documents (JSON), PLY polylines and centerline sidecars."""
from __future__ import annotations

import colorsys
import json
from typing import List, Tuple

import numpy as np

from .skeleton import CurveSkeleton, SkeletonSegment, SkeletonStats


def skeleton_to_dict(skel: CurveSkeleton) -> dict:
    return {
        "dims": list(skel.dims),
        "segments": [
            {
                "kind": s.kind,
                "path": [list(v) for v in s.path],
                "attach": None if s.attach is None else list(s.attach),
                "component": s.component,
            }
            for s in skel.segments
        ],
        "junctions": [list(v) for v in skel.junctions],
        "loops": [list(g) for g in skel.loops],
        "params": skel.params,
    }


def dumps(skel: CurveSkeleton) -> str:
    """Canonical text: stable key order, one segment per line, no timing data."""
    doc = skeleton_to_dict(skel)
    lines = ["{"]
    lines.append(f'  "dims": {json.dumps(doc["dims"])},')
    lines.append('  "segments": [')
    segs = [json.dumps(s, sort_keys=True, separators=(",", ":")) for s in doc["segments"]]
    lines.append(",\n".join("    " + s for s in segs))
    lines.append("  ],")
    lines.append(f'  "junctions": {json.dumps(doc["junctions"], separators=(",", ":"))},')
    lines.append(f'  "loops": {json.dumps(doc["loops"], separators=(",", ":"))},')
    lines.append(f'  "params": {json.dumps(doc["params"], sort_keys=True)}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> CurveSkeleton:
    doc = json.loads(text)
    try:
        segments = tuple(
            SkeletonSegment(
                path=tuple(tuple(int(c) for c in v) for v in s["path"]),
                kind=s["kind"],
                attach=None if s.get("attach") is None else tuple(int(c) for c in s["attach"]),
                component=int(s.get("component", 0)),
            )
            for s in doc["segments"]
        )
        return CurveSkeleton(
            dims=tuple(int(v) for v in doc["dims"]),
            segments=segments,
            junctions=tuple(tuple(int(c) for c in v) for v in doc.get("junctions", [])),
            loops=tuple(tuple(int(i) for i in g) for g in doc.get("loops", [])),
            params=doc.get("params", {}),
            stats=SkeletonStats(),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed skeleton document: {exc}") from exc


def save_skeleton(skel: CurveSkeleton, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(skel))


def load_skeleton(path) -> CurveSkeleton:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def _palette(k: int) -> List[Tuple[int, int, int]]:
    out = []
    for i in range(k):
        r, g, b = colorsys.hsv_to_rgb((i * 0.618033988749895) % 1.0, 0.75, 0.95)
        out.append((int(r * 255), int(g * 255), int(b * 255)))
    return out


def skeleton_edges(skel: CurveSkeleton):
    """Vertex coordinates, per-vertex segment index and edge index pairs."""
    index = {}
    verts, owner = [], []
    for si, seg in enumerate(skel.segments):
        for v in seg.path:
            if v not in index:
                index[v] = len(verts)
                verts.append(v)
                owner.append(si)
    edges = []
    for seg in skel.segments:
        ids = [index[v] for v in seg.path]
        edges.extend(zip(ids[:-1], ids[1:]))
        if seg.attach is not None and seg.attach in index:
            edges.append((index[seg.attach], ids[0]))
    return np.array(verts, dtype=np.int64).reshape(-1, 3), np.array(owner, dtype=np.int64), edges


def to_ply(skel: CurveSkeleton) -> str:
    verts, owner, edges = skeleton_edges(skel)
    colors = _palette(len(skel.segments))
    out = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(verts)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        f"element edge {len(edges)}",
        "property int vertex1",
        "property int vertex2",
        "end_header",
    ]
    for (x, y, z), s in zip(verts.tolist(), owner.tolist()):
        r, g, b = colors[s]
        out.append(f"{x} {y} {z} {r} {g} {b}")
    for a, b in edges:
        out.append(f"{a} {b}")
    return "\n".join(out) + "\n"


def save_ply(skel: CurveSkeleton, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(to_ply(skel))


def save_centerline(voxels: np.ndarray, segment_ids: np.ndarray, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for (x, y, z), s in zip(np.asarray(voxels).tolist(), np.asarray(segment_ids).tolist()):
            fh.write(f"{x} {y} {z} {s}\n")


def load_centerline(path) -> Tuple[np.ndarray, np.ndarray]:
    rows = []
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 'x y z segment_id'")
            rows.append([int(p) for p in parts])
    a = np.array(rows, dtype=np.int64).reshape(-1, 4)
    return a[:, :3], a[:, 3]
