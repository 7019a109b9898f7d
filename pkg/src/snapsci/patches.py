"""Overlapping 3D patch extraction and overlap-average aggregation.

Patch origins lie on a stride grid along each spatial axis, with the last
valid origin appended when the grid does not reach the border, so every
pixel is covered. Along the frame axis the stride equals the patch depth.
A patch is vectorized with the same convention as whole cubes
(``ravel(order="F")``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError


@dataclass(frozen=True)
class PatchConfig:
    patch_size: int = 8
    patch_depth: int | None = None  # None means full depth (nt)
    stride: int = 4

    def depth(self, nt):
        return nt if self.patch_depth is None else int(self.patch_depth)

    def validate(self, dims):
        nx, ny, nt = dims
        P, s, D = self.patch_size, self.stride, self.depth(nt)
        if not 1 <= P <= min(nx, ny):
            raise ArgumentError(f"patch size {P} must lie in [1, {min(nx, ny)}]")
        if not 1 <= s <= P:
            raise ArgumentError(f"stride {s} must lie in [1, patch size {P}]")
        if not 1 <= D <= nt:
            raise ArgumentError(f"patch depth {D} must lie in [1, {nt}]")


def grid_positions(n, size, stride):
    pos = list(range(0, n - size + 1, stride))
    if pos[-1] != n - size:
        pos.append(n - size)
    return np.asarray(pos)


def patch_origins(dims, config):
    config.validate(dims)
    nx, ny, nt = dims
    P, D = config.patch_size, config.depth(nt)
    gi = grid_positions(nx, P, config.stride)
    gj = grid_positions(ny, P, config.stride)
    gk = grid_positions(nt, D, D)
    I, J, K = np.meshgrid(gi, gj, gk, indexing="ij")
    # frame-major, then column, then row: matches the cube vec order
    order = np.lexsort((I.ravel(), J.ravel(), K.ravel()))
    return np.stack([I.ravel()[order], J.ravel()[order], K.ravel()[order]], axis=1)


def all_windows(cube, P, D):
    """View of every ``P x P x D`` window: shape ``(nx-P+1, ny-P+1, nt-D+1, P, P, D)``."""
    return np.lib.stride_tricks.sliding_window_view(cube, (P, P, D))


def extract_patches(cube, config=PatchConfig()):
    """Return ``(origins, patches)``; ``patches[n]`` is the vectorized patch at ``origins[n]``."""
    cube = np.asarray(cube, dtype=np.float64)
    if cube.ndim != 3:
        raise ArgumentError("cube must be 3D")
    origins = patch_origins(cube.shape, config)
    P, D = config.patch_size, config.depth(cube.shape[2])
    win = all_windows(cube, P, D)[origins[:, 0], origins[:, 1], origins[:, 2]]
    # (n, P, P, D) -> column-major vec per patch
    return origins, win.transpose(0, 3, 2, 1).reshape(len(origins), -1)


def patch_to_block(vecs, P, D):
    """Inverse of the per-patch vectorization: ``(n, d) -> (n, P, P, D)``."""
    return np.asarray(vecs).reshape(-1, D, P, P).transpose(0, 3, 2, 1)


def aggregate_patches(origins, patches, dims, config=PatchConfig(), return_counts=False):
    """Average overlapping patches back into a cube of shape ``dims``."""
    nx, ny, nt = dims
    P, D = config.patch_size, config.depth(nt)
    blocks = patch_to_block(patches, P, D)
    acc = np.zeros(dims)
    cnt = np.zeros(dims)
    for (i, j, k), b in zip(origins, blocks):
        acc[i:i + P, j:j + P, k:k + D] += b
        cnt[i:i + P, j:j + P, k:k + D] += 1.0
    out = np.divide(acc, cnt, out=np.zeros(dims), where=cnt > 0)
    return (out, cnt) if return_counts else out


def coverage_counts(dims, config=PatchConfig()):
    nx, ny, nt = dims
    P, D = config.patch_size, config.depth(nt)
    cnt = np.zeros(dims)
    for i, j, k in patch_origins(dims, config):
        cnt[i:i + P, j:j + P, k:k + D] += 1.0
    return cnt
