"""Smoke tests for the compiled module; heavy verification lives in C++."""

import numpy as np
import pytest

import tokengray as tg


def test_svd_reconstructs():
    a = np.asarray(tg.random_gaussian(12, 7, seed=3))
    u, s, v = tg.svd(a)
    back = np.asarray(u) @ np.diag(s) @ np.asarray(v).T
    assert np.max(np.abs(back - a)) < 1e-10
    assert list(s) == sorted(s, reverse=True)


def test_condition_number_matches_numpy():
    a = np.asarray(tg.random_gaussian(10, 6, seed=4))
    k = tg.condition_number(a)
    assert k["finite"]
    assert k["value"] == pytest.approx(np.linalg.cond(a), rel=1e-8)


def test_dct_roundtrip_and_scipy_convention():
    a = np.asarray(tg.random_gaussian(8, 8, seed=5))
    ahat = np.asarray(tg.dct2(a))
    assert np.max(np.abs(np.asarray(tg.idct2(ahat)) - a)) < 1e-12
    # Orthogonal DCT-II preserves the Frobenius norm.
    assert np.linalg.norm(ahat) == pytest.approx(np.linalg.norm(a), rel=1e-12)


def test_svd_token_gray_exponent_law():
    a = np.asarray(tg.random_gaussian(16, 8, seed=6))
    eps = 0.7
    before = tg.condition_number(a)["log_value"]
    after = tg.condition_number(np.asarray(tg.svd_token_gray(a, eps)))["log_value"]
    assert after == pytest.approx(eps * before, rel=1e-8)


def test_dct_token_gray_identity_at_eps1():
    a = np.asarray(tg.random_gaussian(12, 12, seed=7))
    assert np.max(np.abs(np.asarray(tg.dct_token_gray(a, 1.0)) - a)) < 1e-12


def test_bound_suites_report_dicts():
    p1 = tg.verify_prop1(n=12, d=6, trials=30, seed=11)
    assert p1["satisfaction_fraction"] == 1.0
    p2 = tg.verify_prop2(n=12, d=6, trials=30, seed=11, psd_mode=True)
    assert p2["satisfaction_fraction"] == 1.0
    assert p2["median_ln_ratio"] < 0.0
    cm = tg.verify_convmixer_bound(channels=3, size=6, trials=20, seed=11)
    assert cm["satisfaction_fraction"] == 1.0


def test_input_validation():
    with pytest.raises(Exception):
        tg.svd(np.zeros((2, 2, 2)))
    with pytest.raises(Exception):
        tg.svd_token_gray(np.eye(3), 0.0)
