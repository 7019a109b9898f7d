"""Patch sparse coding over a fixed orthonormal 3D-DCT dictionary.

Each patch solves ``min_c 0.5 ||y_i - Phi_i Psi c||^2 + lam ||c||_1`` by
plain iterative soft-thresholding (monotone objective, step ``1/L``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn

from .core import _meas_array
from .errors import ArgumentError, UnsupportedCombinationError
from .patches import PatchConfig, aggregate_patches, all_windows, patch_origins


@dataclass(frozen=True)
class DictionaryModel:
    atoms: np.ndarray  # (d, d), columns are atoms
    patch_size: int
    depth: int
    lam: float = 0.01
    ista_iters: int = 200


def dct_dictionary(patch_size, depth, lam=0.01, ista_iters=200):
    """Orthonormal 3D-DCT synthesis basis in the patch vec convention."""
    P, D = int(patch_size), int(depth)
    d = P * P * D
    eye = np.eye(d).reshape(d, D, P, P).transpose(0, 3, 2, 1)  # basis blocks (d, P, P, D)
    analysis = dctn(eye, axes=(1, 2, 3), norm="ortho")
    analysis = analysis.transpose(0, 3, 2, 1).reshape(d, d)  # row e -> coefficients of e_e
    # analysis[e, c] = <dct_c, e_e>, so Psi[:, c] = analysis[:, c]
    return DictionaryModel(analysis, P, D, lam, ista_iters)


def power_iteration(matvec, rmatvec, dim, iters=50, seed=0):
    """Largest eigenvalue of A^T A, returned with a 5% safety margin."""
    v = np.random.default_rng(seed).standard_normal(dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = rmatvec(matvec(v))
        lam = float(np.linalg.norm(w))
        if lam == 0:
            return 0.0
        v = w / lam
    return 1.05 * lam


def lasso_objective(y, A, c, lam):
    r = y - A @ c
    return 0.5 * float(r @ r) + lam * float(np.abs(c).sum())


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def sparse_code_patch(y, phi, dictionary, lam=None, iters=None, return_history=False):
    """ISTA for one patch; ``phi`` is the local sensing block."""
    lam = dictionary.lam if lam is None else float(lam)
    iters = dictionary.ista_iters if iters is None else int(iters)
    if lam < 0:
        raise ArgumentError(f"lambda must be >= 0, got {lam}")
    A = np.asarray(phi, dtype=np.float64) @ dictionary.atoms
    y = np.asarray(y, dtype=np.float64)
    L = power_iteration(lambda v: A @ v, lambda v: A.T @ v, A.shape[1])
    c = np.zeros(A.shape[1])
    hist = [lasso_objective(y, A, c, lam)]
    if L == 0:
        return (c, hist) if return_history else c
    for _ in range(iters):
        c = soft_threshold(c + A.T @ (y - A @ c) / L, lam / L)
        if return_history:
            hist.append(lasso_objective(y, A, c, lam))
    return (c, hist) if return_history else c


def sparse_reconstruct(measurement, op, dictionary=None, patch_config=PatchConfig()):
    """Batched ISTA over all full-depth patches, then overlap-average."""
    if op.mode != "cacti":
        raise UnsupportedCombinationError("sparse patch reconstruction supports cacti mode only")
    y = _meas_array(measurement, op)
    nx, ny, nt = op.cube_shape
    P = patch_config.patch_size
    if patch_config.depth(nt) != nt:
        raise ArgumentError("sparse reconstruction needs full-depth patches")
    if dictionary is None:
        dictionary = dct_dictionary(P, nt)
    m = P * P
    origins = patch_origins(op.cube_shape, patch_config)
    masks = all_windows(op.masks.values, P, nt)[origins[:, 0], origins[:, 1], 0]
    masks = masks.transpose(0, 3, 2, 1).reshape(len(origins), m * nt)  # diag entries of Phi_i
    ys = all_windows(y[:, :, None], P, 1)[origins[:, 0], origins[:, 1], 0][..., 0]
    ys = ys.transpose(0, 2, 1).reshape(len(origins), m)
    Psi = dictionary.atoms
    # Phi_i x = sum over frames of mask * x
    fwd = lambda X: (masks * X).reshape(len(origins), nt, m).sum(axis=1)
    adj = lambda R: masks * np.tile(R, (1, nt))
    # ||Phi_i Psi||^2 = ||Phi_i||^2 = max_a sum_k m_k(a)^2 since Psi is orthonormal
    L = (masks.reshape(len(origins), nt, m) ** 2).sum(axis=1).max(axis=1)
    L = np.where(L > 0, L, 1.0)[:, None]
    lam = dictionary.lam
    C = np.zeros((len(origins), m * nt))
    for _ in range(dictionary.ista_iters):
        X = C @ Psi.T
        C = soft_threshold(C + (adj(ys - fwd(X)) @ Psi) / L, lam / L)
    return aggregate_patches(origins, C @ Psi.T, op.cube_shape, patch_config)
