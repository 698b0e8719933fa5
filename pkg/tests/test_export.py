import json

import numpy as np
import pytest

from skelgrid import generate, skeletonize
from skelgrid import export
from skelgrid.synth import ShapeSpec


@pytest.fixture(scope="module")
def torus_skel():
    return skeletonize(generate(ShapeSpec("torus", major=12, minor=3)))


def test_json_round_trip(tmp_path, torus_skel):
    p = tmp_path / "s.json"
    export.save_skeleton(torus_skel, p)
    back = export.load_skeleton(p)
    assert back.segments[0].path == torus_skel.segments[0].path
    assert back.union == torus_skel.union
    assert back.loops == torus_skel.loops and back.junctions == torus_skel.junctions
    assert export.dumps(back) == p.read_text()


def test_json_fields(torus_skel):
    doc = json.loads(export.dumps(torus_skel))
    assert set(doc) == {"dims", "segments", "junctions", "loops", "params"}
    assert set(doc["params"]) == {"t", "epsilon", "policy", "seed"}
    assert all(isinstance(c, int) for s in doc["segments"] for v in s["path"] for c in v)


def test_malformed_document():
    with pytest.raises(ValueError):
        export.loads('{"dims": [1, 1, 1], "segments": [{"path": [[0, 0, 0]]}]}')


def test_ply(torus_skel):
    text = export.to_ply(torus_skel)
    head, body = text.split("end_header\n")
    verts, owner, edges = export.skeleton_edges(torus_skel)
    assert f"element vertex {len(verts)}" in head and f"element edge {len(edges)}" in head
    lines = body.splitlines()
    assert len(lines) == len(verts) + len(edges)
    colors = {tuple(l.split()[3:]) for l in lines[: len(verts)]}
    assert len(colors) == len({int(o) for o in owner})
    for a, b in edges:
        step = np.abs(verts[a] - verts[b]).max()
        assert step == 1


def test_centerline_round_trip(tmp_path):
    v = np.array([[0, 1, 2], [3, 4, 5]])
    s = np.array([0, 1])
    p = tmp_path / "c.centerline"
    export.save_centerline(v, s, p)
    v2, s2 = export.load_centerline(p)
    assert (v2 == v).all() and (s2 == s).all()
    p.write_text("1 2 3\n")
    with pytest.raises(ValueError):
        export.load_centerline(p)
