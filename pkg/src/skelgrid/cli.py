"""Command-line entry point: gen, noise, extract, eval, bench."""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import export
from .distance import distance_transform
from .grid import GridFormatError, load_grid, save_grid
from .skeleton import RejectPolicy, SkeletonInvariantError, TraceError, skeletonize
from .spurious import SpuriousTestConfig
from .synth import (
    NoiseError,
    NoiseSpec,
    ShapeSpec,
    evaluate_model,
    generate_model,
    inject_noise,
    rows_to_csv,
    scaling_exponent,
    skeleton_rmse,
    skeleton_voxel_count,
    ReportRow,
)

log = logging.getLogger("skelgrid")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3

SHAPE_ALIASES = {"y": "y-junction", "cyl": "cylinder"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text: str):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _voxel(text: str):
    try:
        v = tuple(int(c) for c in text.split(","))
    except ValueError:
        v = ()
    if len(v) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    return v


def _shape_spec(args) -> ShapeSpec:
    kind = SHAPE_ALIASES.get(args.shape, args.shape)
    kw = dict(kind=kind, margin=args.margin, axis=args.axis, depth=args.depth)
    if args.radii is not None:
        kw["radii"] = args.radii
    elif kind == "y-junction":
        kw["radii"] = (6.0, 4.0, 3.0)
    for name in ("length", "major", "minor"):
        if getattr(args, name) is not None:
            kw[name] = getattr(args, name)
    return ShapeSpec(**kw)


def _policy(args) -> RejectPolicy:
    return RejectPolicy(kind=args.policy, k=args.k, max_proposals=args.max_proposals)


def _config(args) -> SpuriousTestConfig:
    return SpuriousTestConfig(t=args.t, epsilon=args.epsilon)


def cmd_gen(args) -> int:
    spec = _shape_spec(args)
    model = generate_model(spec)
    fmt = "binary-vox" if args.binary else "ascii-vox"
    save_grid(model.grid, args.out, fmt, comments=[f"shape {spec.kind}"])
    vox, seg = model.centerline_voxels()
    base = args.out[:-4] if args.out.endswith(".vox") else args.out
    export.save_centerline(vox, seg, base + ".centerline")
    print(f"n={model.grid.n} dims={'x'.join(map(str, model.grid.dims))}")
    return EXIT_OK


def cmd_noise(args) -> int:
    spec = NoiseSpec(p=args.p, iterations=args.iters, rng_seed=args.seed)
    grid = load_grid(args.input)
    noisy = inject_noise(grid, spec)
    save_grid(
        noisy,
        args.out,
        "binary-vox" if args.binary else "ascii-vox",
        comments=[f"noise p={spec.p} iterations={spec.iterations} rng=pcg64 seed={spec.rng_seed}"],
    )
    print(f"n_before={grid.n} n_after={noisy.n}")
    return EXIT_OK


def _dump(path, grid, values):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for (x, y, z), v in zip(grid.coords.tolist(), np.asarray(values).tolist()):
            fh.write(f"{x} {y} {z} {v!r}\n")


def cmd_extract(args) -> int:
    grid = load_grid(args.input)
    want_dbg = args.dump_labels is not None
    res = skeletonize(grid, _config(args), _policy(args), seed_voxel=args.seed_voxel, debug=want_dbg)
    skel, dbg = res if want_dbg else (res, None)
    if args.out:
        export.save_skeleton(skel, args.out)
    if args.ply:
        export.save_ply(skel, args.ply)
    if args.dump_distance:
        _dump(args.dump_distance, grid, distance_transform(grid).d)
    if want_dbg:
        _dump(args.dump_labels, grid, dbg.bfs1)
    st = skel.stats
    print(
        f"n={st.n} dmax={st.d_max:.6g} proposals={st.proposals} accepted={st.accepted} "
        f"loops={st.loops} time_ms={st.time_ms:.3f}"
    )
    return EXIT_OK


def _read_skeleton_points(path):
    if path.endswith(".centerline"):
        vox, _ = export.load_centerline(path)
        return vox, len(vox)
    skel = export.load_skeleton(path)
    return skel.voxels(), skeleton_voxel_count(skel)


def cmd_eval(args) -> int:
    ref, nref = _read_skeleton_points(args.reference)
    tst, ntst = _read_skeleton_points(args.test)
    if nref == 0 or ntst == 0:
        raise UsageError("empty skeleton")
    r = skeleton_rmse(ref, tst)
    print(f"rmse={r:.6g} ref_count={nref} test_count={ntst}")
    if args.csv:
        new = not os.path.exists(args.csv)
        with open(args.csv, "a", encoding="ascii", newline="\n") as fh:
            if new:
                fh.write("reference,test,rmse,ref_count,test_count\n")
            fh.write(f"{args.reference},{args.test},{r:.6g},{nref},{ntst}\n")
    return EXIT_OK


def cmd_bench(args) -> int:
    jobs = []
    for path in args.models or ():
        jobs.append((os.path.basename(path), path))
    for i, length in enumerate(args.sweep or ()):
        spec = ShapeSpec("tree", radii=(args.radius,), length=length, depth=args.depth, margin=2)
        jobs.append((f"tree-L{length:g}", spec))
    if not jobs:
        raise UsageError("nothing to benchmark: give model paths or --sweep")
    config, policy = _config(args), _policy(args)
    # compile outside the timed region
    skeletonize(generate_model(ShapeSpec("y-junction", radii=(3, 2, 2), length=8)).grid)
    rows = []
    failed = False
    for name, src in jobs:
        try:
            if isinstance(src, ShapeSpec):
                rows.append(evaluate_model(name, generate_model(src), config, policy))
            else:
                grid = load_grid(src)
                t0 = time.perf_counter()
                skel = skeletonize(grid, config, policy)
                ms = (time.perf_counter() - t0) * 1000.0
                st = skel.stats
                nx, ny, nz = grid.dims
                rows.append(
                    ReportRow(name, grid.n, nx * ny * nz, st.d_max, st.proposals, st.accepted,
                              st.rejected, st.loops, ms, float("nan"), skeleton_voxel_count(skel))
                )
        except Exception as exc:  # a failing model only marks its row
            log.error("%s: %s", name, exc)
            failed = True
            rows.append(ReportRow(name, 0, 0, 0.0, 0, 0, 0, 0, 0.0, float("nan"), 0, failed=True))
    text = rows_to_csv(rows)
    if args.out:
        with open(args.out, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    sys.stdout.write(text)
    ok = [r for r in rows if not r.failed]
    if len(ok) >= 2:
        print(f"exponent={scaling_exponent(ok):.3f}")
    return EXIT_PARTIAL if failed else EXIT_OK


def _add_skeleton_flags(p):
    p.add_argument("--t", type=float, default=1e-12, help="density threshold of the tip test")
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--policy", choices=("stop-after-k-rejections", "exhaustive"), default="stop-after-k-rejections")
    p.add_argument("--k", type=int, default=1, help="consecutive rejections before stopping")
    p.add_argument("--max-proposals", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="skelgrid", description="Curve skeletons of sparse voxel models.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic model and its centerline")
    g.add_argument("--shape", required=True, choices=sorted(set(SHAPE_ALIASES) | {"cylinder", "y-junction", "torus", "sphere", "tree"}))
    g.add_argument("--radii", type=_floats)
    g.add_argument("--length", type=float)
    g.add_argument("--major", type=float)
    g.add_argument("--minor", type=float)
    g.add_argument("--depth", type=int, default=2)
    g.add_argument("--axis", default="x", choices=("x", "y", "z"))
    g.add_argument("--margin", type=int, default=2)
    g.add_argument("--binary", action="store_true")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    n = sub.add_parser("noise", help="iterative surface noise")
    n.add_argument("--in", dest="input", required=True)
    n.add_argument("--p", type=float, default=0.05)
    n.add_argument("--iters", type=int, required=True)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--binary", action="store_true")
    n.add_argument("--out", required=True)
    n.set_defaults(func=cmd_noise)

    e = sub.add_parser("extract", help="skeletonize a model")
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--out")
    e.add_argument("--ply")
    e.add_argument("--seed-voxel", type=_voxel)
    e.add_argument("--dump-distance")
    e.add_argument("--dump-labels")
    _add_skeleton_flags(e)
    e.set_defaults(func=cmd_extract)

    v = sub.add_parser("eval", help="RMSE between two skeletons")
    v.add_argument("--ref", dest="reference", required=True, help="skeleton document or .centerline file")
    v.add_argument("--test", required=True)
    v.add_argument("--csv")
    v.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="runtime report")
    b.add_argument("models", nargs="*")
    b.add_argument("--sweep", type=_floats, help="tree trunk lengths to generate")
    b.add_argument("--radius", type=float, default=5.0)
    b.add_argument("--depth", type=int, default=2)
    b.add_argument("--out")
    _add_skeleton_flags(b)
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"skelgrid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, GridFormatError, NoiseError, ValueError, KeyError, OSError) as exc:
        print(f"skelgrid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SkeletonInvariantError, TraceError) as exc:
        print(f"skelgrid: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
