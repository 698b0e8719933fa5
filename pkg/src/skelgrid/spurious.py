"""Statistical rejection of proposed branches whose tip looks like surface noise."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

_CHI2_3_NORM = 2.0**1.5 * math.gamma(1.5)
# density of chi^2 with 3 dof peaks at x = 1
CHI2_3_PEAK = math.sqrt(1.0) * math.exp(-0.5) / _CHI2_3_NORM


class Verdict(enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"


@dataclass(frozen=True)
class SpuriousTestConfig:
    """Knobs of the tip test.

    t: density threshold; a tip whose density exceeds *t* is rejected.
    epsilon: ridge added to the surface covariance before inversion (voxel^2).
    min_surface_samples: below this many frontier surface voxels the
        covariance is not estimated and the length fallback decides.
    min_segment_length: fallback rejects segments of at most this many voxels.
    """

    t: float = 1e-12
    epsilon: float = 1e-6
    min_surface_samples: int = 4
    min_segment_length: int = 3

    def __post_init__(self):
        if not (0.0 < self.t <= 1.0):
            raise ValueError(f"t must lie in (0, 1], got {self.t}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.min_surface_samples < 1:
            raise ValueError("min_surface_samples must be at least 1")


def chi2_pdf_3dof(x):
    """Chi-square density with three degrees of freedom.

    Accepts scalars or arrays; negative input raises ``ValueError``.
    """
    arr = np.asarray(x, dtype=np.float64)
    if (arr < 0).any():
        raise ValueError("chi-square density is undefined for x < 0")
    out = np.sqrt(arr) * np.exp(-arr / 2.0) / _CHI2_3_NORM
    if np.ndim(x) == 0:
        return float(out)
    return out


def mahalanobis_sq(surface_voxels, tip, origin, epsilon: float = 1e-6) -> float:
    """Squared Mahalanobis distance of *tip* from the surface-voxel cloud.

    Offsets are taken relative to *origin*; mean and covariance use the
    1/N normalisation.
    """
    pts = np.asarray(surface_voxels, dtype=np.float64).reshape(-1, 3) - np.asarray(origin, dtype=np.float64)
    rel_tip = np.asarray(tip, dtype=np.float64) - np.asarray(origin, dtype=np.float64)
    mu = pts.mean(axis=0)
    centered = pts - mu
    cov = centered.T @ centered / len(pts)
    delta = rel_tip - mu
    sol = np.linalg.solve(cov + epsilon * np.eye(3), delta)
    return float(delta @ sol)


@dataclass(frozen=True)
class TipTest:
    verdict: Verdict
    x: float | None
    density: float | None
    degenerate: bool

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPT


def spurious_test(surface_voxels, tip, origin, config: SpuriousTestConfig, segment_length: int | None = None) -> TipTest:
    """Decide whether a proposed branch with end *tip* is kept.

    *surface_voxels* are the surface voxels of the frontier component the
    branch was traced from; *origin* is the skeleton voxel it attaches to.
    """
    pts = np.asarray(surface_voxels).reshape(-1, 3)
    if len(pts) == 0:
        raise RuntimeError("frontier component has no surface voxels")
    if len(pts) < config.min_surface_samples:
        length = 0 if segment_length is None else segment_length
        # a threshold above the density peak disables rejection altogether
        reject = length <= config.min_segment_length and config.t < CHI2_3_PEAK
        return TipTest(Verdict.REJECT if reject else Verdict.ACCEPT, None, None, True)
    x = mahalanobis_sq(pts, tip, origin, config.epsilon)
    f = chi2_pdf_3dof(max(x, 0.0))
    verdict = Verdict.REJECT if f > config.t else Verdict.ACCEPT
    return TipTest(verdict, x, f, False)
