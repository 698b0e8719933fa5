"""Curve skeletons of sparse voxel solids."""
import os

import numba

# the default TBB layer is often missing; workqueue ships with numba
numba.config.THREADING_LAYER = "workqueue"
if os.environ.get("SKELGRID_THREADS"):
    numba.set_num_threads(max(1, min(int(os.environ["SKELGRID_THREADS"]), numba.config.NUMBA_NUM_THREADS)))

from .bfs import propagate, run_bfs, run_bfs_terminating  # noqa: E402
from .distance import DistanceField, distance_transform, weights_from_distance  # noqa: E402
from .grid import (  # noqa: E402
    GridFormatError,
    VoxelGrid,
    connected_components,
    load_grid,
    neighbors26,
    save_grid,
    surface_mask,
)
from .skeleton import CurveSkeleton, RejectPolicy, skeletonize  # noqa: E402
from .spurious import SpuriousTestConfig, chi2_pdf_3dof, spurious_test  # noqa: E402
from .synth import NoiseSpec, ShapeSpec, generate, generate_model, inject_noise, skeleton_rmse  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "CurveSkeleton",
    "DistanceField",
    "GridFormatError",
    "NoiseSpec",
    "RejectPolicy",
    "ShapeSpec",
    "SpuriousTestConfig",
    "VoxelGrid",
    "chi2_pdf_3dof",
    "connected_components",
    "distance_transform",
    "generate",
    "generate_model",
    "inject_noise",
    "load_grid",
    "neighbors26",
    "propagate",
    "run_bfs",
    "run_bfs_terminating",
    "save_grid",
    "skeleton_rmse",
    "skeletonize",
    "spurious_test",
    "surface_mask",
    "weights_from_distance",
]
