import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snapsci.errors import ArgumentError
from snapsci.patches import (
    PatchConfig, aggregate_patches, coverage_counts, extract_patches, grid_positions, patch_origins,
)


def test_grid_covers_border():
    assert grid_positions(10, 4, 4).tolist() == [0, 4, 6]
    assert grid_positions(8, 4, 4).tolist() == [0, 4]


def test_single_tile_roundtrip(rng):
    x = rng.random((8, 8, 2))
    cfg = PatchConfig(8, None, 8)
    origins, patches = extract_patches(x, cfg)
    assert len(origins) == 1
    assert np.array_equal(patches[0], x.ravel(order="F"))
    assert np.array_equal(aggregate_patches(origins, patches, x.shape, cfg), x)


def test_constant_cube():
    x = np.full((12, 12, 3), 0.7)
    cfg = PatchConfig(5, 2, 3)
    origins, patches = extract_patches(x, cfg)
    assert np.allclose(patches, 0.7)
    assert np.allclose(aggregate_patches(origins, patches, x.shape, cfg), 0.7)


def test_random_roundtrip(rng):
    x = rng.random((16, 16, 2))
    cfg = PatchConfig(8, None, 4)
    origins, patches = extract_patches(x, cfg)
    assert np.abs(aggregate_patches(origins, patches, x.shape, cfg) - x).max() <= 1e-12


def test_origins_order_and_validation():
    o = patch_origins((6, 6, 2), PatchConfig(4, 1, 2))
    lin = o[:, 0] + 6 * o[:, 1] + 36 * o[:, 2]
    assert np.all(np.diff(lin) > 0)
    with pytest.raises(ArgumentError):
        patch_origins((6, 6, 2), PatchConfig(7, 1, 2))
    with pytest.raises(ArgumentError):
        patch_origins((6, 6, 2), PatchConfig(4, 1, 5))
    with pytest.raises(ArgumentError):
        patch_origins((6, 6, 2), PatchConfig(4, 3, 2))


@settings(max_examples=30, deadline=None)
@given(nx=st.integers(3, 12), ny=st.integers(3, 12), nt=st.integers(1, 3), P=st.integers(1, 3),
       s=st.integers(1, 3), seed=st.integers(0, 1000))
def test_partition_of_unity(nx, ny, nt, P, s, seed):
    cfg = PatchConfig(P, 1, min(s, P))
    x = np.random.default_rng(seed).random((nx, ny, nt))
    origins, patches = extract_patches(x, cfg)
    out, counts = aggregate_patches(origins, patches, x.shape, cfg, return_counts=True)
    assert np.array_equal(counts, coverage_counts(x.shape, cfg))
    assert counts.min() >= 1
    assert np.allclose(out, x)
