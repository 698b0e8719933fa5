import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from skelgrid import SpuriousTestConfig, chi2_pdf_3dof, spurious_test
from skelgrid.spurious import CHI2_3_PEAK, Verdict, mahalanobis_sq


def _direct(x):
    return math.sqrt(x) * math.exp(-x / 2) / (2**1.5 * (math.sqrt(math.pi) / 2))


def test_pdf_matches_direct_evaluation():
    xs = np.linspace(0, 80, 1000)
    got = chi2_pdf_3dof(xs)
    want = np.array([_direct(x) for x in xs])
    nz = want > 0
    assert np.all(np.abs(got[nz] - want[nz]) <= 1e-12 * want[nz])
    assert np.all(got[~nz] == 0)


def test_pdf_integrates_to_one():
    total, _ = integrate.quad(chi2_pdf_3dof, 0, np.inf, epsabs=1e-12, epsrel=1e-12)
    assert abs(total - 1) <= 1e-6


def test_pdf_values():
    assert chi2_pdf_3dof(0.0) == 0.0
    assert chi2_pdf_3dof(1.0) == pytest.approx(0.2420, abs=1e-4)
    assert chi2_pdf_3dof(25.0) == pytest.approx(7.4e-6, rel=0.02)
    assert CHI2_3_PEAK == pytest.approx(chi2_pdf_3dof(1.0))
    with pytest.raises(ValueError):
        chi2_pdf_3dof(-1.0)


def _unit_cloud():
    # points with mean 0 and covariance I (1/N normalisation)
    e = np.eye(3) * math.sqrt(3)
    return np.concatenate([e, -e])


def test_cloud_is_standard():
    p = _unit_cloud()
    assert np.allclose(p.mean(0), 0) and np.allclose(p.T @ p / len(p), np.eye(3))


def test_tip_at_mean_accepted():
    r = spurious_test(_unit_cloud(), (0, 0, 0), (0, 0, 0), SpuriousTestConfig())
    assert r.x == pytest.approx(0) and r.verdict is Verdict.ACCEPT


def test_tip_at_five_sigma_rejected():
    r = spurious_test(_unit_cloud(), (5, 0, 0), (0, 0, 0), SpuriousTestConfig())
    assert r.x == pytest.approx(25, rel=1e-5) and r.verdict is Verdict.REJECT


def test_tip_at_one_sigma_rejected():
    r = spurious_test(_unit_cloud(), (1, 0, 0), (0, 0, 0), SpuriousTestConfig())
    assert r.density == pytest.approx(0.2420, abs=1e-3) and not r.accepted


def test_far_tip_accepted():
    assert spurious_test(_unit_cloud(), (20, 0, 0), (0, 0, 0), SpuriousTestConfig()).accepted


def test_origin_shift_invariance():
    p = _unit_cloud()
    a = mahalanobis_sq(p, (3, 1, 0), (0, 0, 0))
    b = mahalanobis_sq(p + 7, (10, 8, 7), (7, 7, 7))
    assert a == pytest.approx(b)


def test_coplanar_cloud_is_regularized():
    p = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [2, 2, 0]])
    r = spurious_test(p, (0, 0, 3), (0, 0, 0), SpuriousTestConfig())
    assert np.isfinite(r.x) and r.accepted


def test_degenerate_fallback():
    cfg = SpuriousTestConfig()
    few = np.array([[0, 0, 0], [1, 0, 0]])
    assert not spurious_test(few, (2, 0, 0), (0, 0, 0), cfg, segment_length=3).accepted
    assert spurious_test(few, (9, 0, 0), (0, 0, 0), cfg, segment_length=4).accepted
    assert spurious_test(few, (2, 0, 0), (0, 0, 0), SpuriousTestConfig(t=1.0), segment_length=1).accepted
    with pytest.raises(RuntimeError):
        spurious_test(np.empty((0, 3)), (0, 0, 0), (0, 0, 0), cfg)


@pytest.mark.parametrize("t", [0.0, -1.0, 1.5])
def test_config_validation(t):
    with pytest.raises(ValueError):
        SpuriousTestConfig(t=t)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 200))
def test_pdf_bounded(x):
    assert 0 <= chi2_pdf_3dof(x) <= CHI2_3_PEAK + 1e-15
