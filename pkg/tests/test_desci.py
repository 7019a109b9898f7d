import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snapsci.core import make_operator
from snapsci.desci import (
    GroupMatchConfig, desci_solve, geometric_schedule, patch_match, wnnm_denoise, wnnm_group, wnnm_weights,
)
from snapsci.errors import ArgumentError, UnsupportedCombinationError
from snapsci.metrics import psnr
from snapsci.patches import PatchConfig
from snapsci.solvers import SolverConfig, gap_solve

SMALL = GroupMatchConfig(window=8, group_size=5, patch=PatchConfig(4, 1, 2))


def test_identical_patches_match_in_scan_order():
    cube = np.full((12, 12, 2), 0.3)
    cfg = GroupMatchConfig(window=8, group_size=6, patch=PatchConfig(4, 1, 2))
    idx = patch_match(cube, (4, 4, 1), cfg)
    # the window around (4, 4) spans origins 2..6; lowest linear index first
    assert idx.tolist() == [[2, 2, 0], [3, 2, 0], [4, 2, 0], [5, 2, 0], [6, 2, 0], [2, 3, 0]]


def test_match_prefers_nearest_patch(rng):
    cube = rng.random((12, 12, 2))
    ref = (3, 5, 0)
    cube[4:8, 6:10, 1] = cube[3:7, 5:9, 0]
    idx = patch_match(cube, ref, SMALL)
    assert idx[0].tolist() == list(ref)
    assert idx[1].tolist() == [4, 6, 1]


def test_wnnm_known_singular_values():
    rng = np.random.default_rng(0)
    U, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    V, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    G = U @ np.diag([3.0, 2.0, 1.0]) @ V.T
    out = wnnm_group(G, 1.0, weights=np.ones(3))
    assert np.allclose(np.linalg.svd(out, compute_uv=False), [2.0, 1.0, 0.0], atol=1e-12)


def test_wnnm_rank_one_vanishing_sigma(rng):
    G = np.outer(rng.random(16), rng.random(8))
    assert np.abs(wnnm_group(G, 1e-14) - G).max() <= 1e-8
    assert np.array_equal(wnnm_group(G, 0.0), G) or np.allclose(wnnm_group(G, 0.0), G, atol=1e-12)


def test_wnnm_weights_formula():
    s = np.array([4.0, 1.0])
    w = wnnm_weights(s, 0.5, 2.8, 9)
    assert np.allclose(w, 2.8 * 3 / (s / 0.5 + 1e-8))
    assert not wnnm_weights(s, 0.0, 2.8, 9).any()
    with pytest.raises(ArgumentError):
        wnnm_group(np.eye(2), -1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), sigma=st.floats(0.0, 2.0), d=st.integers(2, 10), m=st.integers(2, 10))
def test_wnnm_contracts_singular_values(seed, sigma, d, m):
    G = np.random.default_rng(seed).standard_normal((d, m))
    s_in = np.linalg.svd(G, compute_uv=False)
    s_out = np.linalg.svd(wnnm_group(G, sigma), compute_uv=False)
    assert np.all(s_out <= s_in + 1e-10)


def test_wnnm_denoise_constant_and_zero_sigma(rng):
    c = np.full((12, 12, 2), 0.4)
    assert np.allclose(wnnm_denoise(c, 0.1, SMALL), 0.4)
    x = rng.random((12, 12, 2))
    assert np.array_equal(wnnm_denoise(x, 0.0, SMALL), x)


def test_wnnm_denoise_reduces_noise():
    rng = np.random.default_rng(1)
    i = np.arange(16)
    clean = np.repeat((0.5 + 0.3 * np.sin(i / 3))[:, None, None] * np.ones((16, 16, 2)), 1, axis=0)
    noisy = clean + 0.05 * rng.standard_normal(clean.shape)
    out = wnnm_denoise(noisy, 0.05, GroupMatchConfig(window=12, group_size=10, patch=PatchConfig(4, 1, 2)))
    assert psnr(clean, out) > psnr(clean, noisy) + 3


def test_zero_schedule_is_gap_identity(small_scene):
    truth, op, y = small_scene
    v0 = np.random.default_rng(2).random(op.cube_shape)
    cfg = GroupMatchConfig(sigma_schedule=(0.0, 0.0, 0.0), iters_per_sigma=1)
    scfg = SolverConfig(allow_unsensed=True)
    a, tr = desci_solve(op, y, cfg, scfg, v0=v0)
    b, _ = gap_solve(op, y, SolverConfig(max_iters=3, tol=0, denoiser="identity", allow_unsensed=True), v0=v0)
    assert len(tr) == 3
    assert np.allclose(a, b, atol=1e-12)


def test_desci_beats_gap_tv_and_is_deterministic(small_scene):
    truth, op, y = small_scene
    scfg = SolverConfig(allow_unsensed=True)
    gap, _ = gap_solve(op, y, scfg)
    a, ta = desci_solve(op, y, GroupMatchConfig(), scfg, reference=truth)
    b, tb = desci_solve(op, y, GroupMatchConfig(), scfg, reference=truth)
    assert np.array_equal(a, b) and ta.to_csv() == tb.to_csv()
    assert psnr(truth, a) >= psnr(truth, gap)


def test_desci_rejects_cassi_and_bad_config():
    op = make_operator(np.ones((8, 8, 2)), "cassi")
    with pytest.raises(UnsupportedCombinationError):
        desci_solve(op, np.zeros((8, 9)))
    with pytest.raises(ArgumentError):
        GroupMatchConfig(group_size=1).validate((16, 16, 2))
    with pytest.raises(ArgumentError):
        GroupMatchConfig(sigma_schedule=(-1.0,)).validate((16, 16, 2))


def test_geometric_schedule():
    s = geometric_schedule()
    assert len(s) == 8 and s[0] == pytest.approx(50 / 255) and s[-1] == pytest.approx(5 / 255)
    assert all(a > b for a, b in zip(s, s[1:]))
