"""Anisotropic total-variation proximal operator.

Solves ``argmin_z 0.5 * ||z - f||^2 + weight * sum |D z|`` where ``D``
stacks forward differences along the spatial axes of each frame (and the
frame axis too when ``temporal=True``). The dual problem is a box
constrained quadratic, ``|p| <= weight``, solved by accelerated projected
gradient with a fixed number of iterations; ``z = f - D^T p``.
"""
import numpy as np

from .errors import ArgumentError


def _diff(x, axis):
    return np.diff(x, axis=axis)


def _diff_adjoint(q, axis, n):
    # D^T q for forward differences without wrap-around
    shape = list(q.shape)
    shape[axis] = n
    out = np.zeros(shape)
    sl_hi = [slice(None)] * q.ndim
    sl_lo = [slice(None)] * q.ndim
    sl_hi[axis] = slice(1, n)
    sl_lo[axis] = slice(0, n - 1)
    out[tuple(sl_hi)] += q
    out[tuple(sl_lo)] -= q
    return out


def tv_norm(cube, temporal=False):
    cube = np.asarray(cube, dtype=np.float64)
    axes = _axes(cube, temporal)
    return float(sum(np.abs(_diff(cube, a)).sum() for a in axes))


def _axes(cube, temporal):
    axes = [0, 1] if cube.ndim >= 2 else [0]
    if temporal and cube.ndim == 3:
        axes.append(2)
    return [a for a in axes if cube.shape[a] > 1]


def tv_denoise(cube, weight, inner_iters=10, temporal=False):
    """Approximate anisotropic TV prox, applied frame-wise for 3D input."""
    f = np.asarray(cube, dtype=np.float64)
    if weight < 0:
        raise ArgumentError(f"TV weight must be >= 0, got {weight}")
    axes = _axes(f, temporal)
    if weight == 0 or not axes or inner_iters < 1:
        return f.copy()
    step = 1.0 / (4.0 * len(axes))
    p = [np.zeros(np.diff(f, axis=a).shape) for a in axes]
    r = [q.copy() for q in p]
    t = 1.0
    for _ in range(inner_iters):
        z = f.copy()
        for a, q in zip(axes, r):
            z -= _diff_adjoint(q, a, f.shape[a])
        p_new = [np.clip(q + step * _diff(z, a), -weight, weight) for a, q in zip(axes, r)]
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_new
        r = [pn + beta * (pn - po) for pn, po in zip(p_new, p)]
        p, t = p_new, t_new
    z = f.copy()
    for a, q in zip(axes, p):
        z -= _diff_adjoint(q, a, f.shape[a])
    return z
