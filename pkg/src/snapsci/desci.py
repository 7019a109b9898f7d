"""Nonlocal low-rank reconstruction (DeSCI-style).

GAP projections alternate with a denoising pass that groups similar
patches from a spatio-temporal search window and shrinks the singular
values of each group by weighted nuclear norm minimization (WNNM).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import _meas_array, phi_phit_diag, pinv_diag
from .errors import ArgumentError, UnsupportedCombinationError
from .patches import PatchConfig, all_windows, patch_origins
from .solvers import SolverConfig, SolveTrace, gap_project, gap_solve, rel_change, _psnr

log = logging.getLogger(__name__)

WNNM_EPS = 1e-8


def geometric_schedule(start=50 / 255, stop=5 / 255, n=8):
    return tuple(float(s) for s in np.geomspace(start, stop, n))


@dataclass(frozen=True)
class GroupMatchConfig:
    window: int = 20
    window_t: int | None = None  # None means all frames
    group_size: int = 30
    wnnm_c: float = 2.8
    sigma_schedule: tuple = field(default_factory=geometric_schedule)
    iters_per_sigma: int = 2
    patch: PatchConfig = PatchConfig(patch_size=8, patch_depth=1, stride=4)
    # start from a GAP-TV estimate instead of zeros
    warm_start: bool = True

    def validate(self, dims):
        self.patch.validate(dims)
        if self.group_size < 2:
            raise ArgumentError(f"group size must be >= 2, got {self.group_size}")
        if self.window < self.patch.patch_size:
            raise ArgumentError("search window must be at least the patch size")
        if any(s < 0 for s in self.sigma_schedule):
            raise ArgumentError("sigma schedule entries must be >= 0")


def _window_range(center, half, lo, hi):
    return max(lo, center - half), min(hi, center + half)


def _search_box(ref, dims, config):
    """Origin ranges (inclusive) of candidate patches around ``ref``."""
    nx, ny, nt = dims
    P = config.patch.patch_size
    D = config.patch.depth(nt)
    half = (config.window - P) // 2
    i0, i1 = _window_range(ref[0], half, 0, nx - P)
    j0, j1 = _window_range(ref[1], half, 0, ny - P)
    # T consecutive frame origins, centered on the reference where possible
    T = nt if config.window_t is None else int(config.window_t)
    k0 = min(max(0, ref[2] - (T - 1) // 2), max(0, nt - D - (T - 1)))
    k1 = min(nt - D, k0 + T - 1)
    return (i0, i1), (j0, j1), (k0, k1)


def _match(windows, ref, dims, config):
    (i0, i1), (j0, j1), (k0, k1) = _search_box(ref, dims, config)
    nx, ny = dims[0], dims[1]
    cand = windows[i0:i1 + 1, j0:j1 + 1, k0:k1 + 1]
    flat = cand.reshape(-1, cand.shape[-1])
    dist = ((flat - windows[ref[0], ref[1], ref[2]]) ** 2).sum(axis=1)
    ai, aj, ak = np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), np.arange(k0, k1 + 1)
    lin = (ai[:, None, None] + nx * aj[None, :, None] + nx * ny * ak[None, None, :]).ravel()
    M = config.group_size
    if len(dist) < M:
        log.info("only %d candidates for a group of %d at %s", len(dist), M, tuple(ref))
        M = len(dist)
    order = np.lexsort((lin, dist))[:M]
    bi, bj, bk = np.unravel_index(order, cand.shape[:3])
    return np.stack([bi + i0, bj + j0, bk + k0], axis=1), flat[order]


def _patch_table(cube, config):
    P = config.patch.patch_size
    D = config.patch.depth(cube.shape[2])
    win = all_windows(cube, P, D)
    a, b, c = win.shape[:3]
    # column-major vec per patch, as elsewhere
    return win.transpose(0, 1, 2, 5, 4, 3).reshape(a, b, c, -1)


def patch_match(cube, ref_index, config=GroupMatchConfig()):
    """Origins of the ``group_size`` nearest patches to the one at ``ref_index``.

    Candidates are all patch origins inside the search window; ties in
    distance go to the lowest linear (column-major, frame-major) index.
    """
    cube = np.asarray(cube, dtype=np.float64)
    config.validate(cube.shape)
    idx, _ = _match(_patch_table(cube, config), tuple(int(v) for v in ref_index), cube.shape, config)
    return idx


def wnnm_weights(s, sigma, wnnm_c, n_cols):
    """Per-singular-value weights ``c sqrt(M) / (s_i / sigma + eps)``."""
    if sigma == 0:
        return np.zeros_like(s)
    with np.errstate(over="ignore"):
        return wnnm_c * np.sqrt(n_cols) / (s / sigma + WNNM_EPS)


def wnnm_group(group, sigma, wnnm_c=2.8, weights=None):
    """Shrink singular values of a patch group (columns are patches).

    The threshold on singular value ``i`` is ``sigma * w_i``; weights are
    computed from the group's own singular values unless given. Accepts
    a stack of groups with shape ``(..., d, M)``.
    """
    group = np.asarray(group, dtype=np.float64)
    if sigma < 0:
        raise ArgumentError(f"sigma must be >= 0, got {sigma}")
    U, s, Vt = np.linalg.svd(group, full_matrices=False)
    if weights is None:
        weights = wnnm_weights(s, sigma, wnnm_c, group.shape[-1])
    s_new = np.maximum(s - sigma * np.asarray(weights, dtype=np.float64), 0.0)
    return (U * s_new[..., None, :]) @ Vt


def _fold(table, dims, P, D):
    """Sum a per-origin table of patch blocks back onto the cube grid."""
    out = np.zeros(dims)
    na, nb, nc = table.shape[:3]
    blocks = table.reshape(na, nb, nc, D, P, P)
    for a in range(P):
        for b in range(P):
            for c in range(D):
                out[a:a + na, b:b + nb, c:c + nc] += blocks[:, :, :, c, b, a]
    return out


def wnnm_denoise(cube, sigma, config=GroupMatchConfig()):
    """One full match-and-shrink pass over reference patches on a stride grid."""
    cube = np.asarray(cube, dtype=np.float64)
    if sigma == 0:
        return cube.copy()
    dims = cube.shape
    P = config.patch.patch_size
    D = config.patch.depth(dims[2])
    table = _patch_table(cube, config)
    matched = [_match(table, tuple(ref), dims, config) for ref in patch_origins(dims, config.patch)]
    acc = np.zeros(table.shape)
    cnt = np.zeros(table.shape[:3])
    by_size = {}
    for idx, group in matched:
        by_size.setdefault(len(idx), []).append((idx, group))
    for items in by_size.values():
        idx = np.concatenate([it[0] for it in items])
        G = np.stack([it[1].T for it in items])  # (n_groups, d, M)
        mean = G.mean(axis=2, keepdims=True)
        den = wnnm_group(G - mean, sigma, config.wnnm_c) + mean
        blocks = den.transpose(0, 2, 1).reshape(-1, den.shape[1])
        np.add.at(acc, (idx[:, 0], idx[:, 1], idx[:, 2]), blocks)
        np.add.at(cnt, (idx[:, 0], idx[:, 1], idx[:, 2]), 1.0)
    total = _fold(acc, dims, P, D)
    weight = _fold(np.repeat(cnt[..., None], table.shape[-1], axis=3), dims, P, D)
    return np.where(weight > 0, total / np.maximum(weight, 1.0), cube)


def desci_solve(op, y, group_config=GroupMatchConfig(), solver_config=SolverConfig(),
                reference=None, v0=None):
    """GAP projection alternated with WNNM patch-group denoising.

    Runs ``iters_per_sigma`` iterations for each entry of the sigma
    schedule. Without ``v0`` the loop is warm-started from GAP-TV (run
    with ``solver_config``) when ``warm_start`` is set, else from zeros.
    """
    if op.mode != "cacti":
        raise UnsupportedCombinationError("DeSCI supports cacti mode only")
    y = _meas_array(y, op)
    group_config.validate(op.cube_shape)
    psi_inv = pinv_diag(phi_phit_diag(op), solver_config.allow_unsensed)
    if v0 is not None:
        v = np.array(v0, dtype=np.float64)
    elif group_config.warm_start:
        v, _ = gap_solve(op, y, solver_config)
    else:
        v = np.zeros(op.cube_shape)
    trace = SolveTrace()
    for sigma in group_config.sigma_schedule:
        for _ in range(group_config.iters_per_sigma):
            x = gap_project(v, op, y, psi_inv)
            v_new = wnnm_denoise(x, sigma, group_config)
            change = rel_change(v_new, v)
            v = v_new
            trace.record(y - op.apply(x), change, _psnr(reference, v))
    trace.v = v
    return v, trace
