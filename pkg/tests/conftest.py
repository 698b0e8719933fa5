import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from skelgrid import VoxelGrid, generate, skeletonize  # noqa: E402
from skelgrid.synth import ShapeSpec  # noqa: E402


@pytest.fixture(scope="session", autouse=True)
def warm_jit():
    # compile the numba kernels once so timing checks measure steady state
    skeletonize(generate(ShapeSpec("torus", major=6, minor=2)))
    skeletonize(generate(ShapeSpec("y-junction", radii=(3, 2, 2), length=8)))


def line_grid(k, dims=None):
    return VoxelGrid(dims or (k + 2, 3, 3), [(i, 1, 1) for i in range(k)])


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for num in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[num])
