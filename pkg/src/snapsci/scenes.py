"""Seeded synthetic video scenes with values in [0, 1]."""
import numpy as np
from scipy.ndimage import gaussian_filter, shift as nd_shift

from .errors import ArgumentError


def _background(nx, ny, rng):
    ii, jj = np.meshgrid(np.linspace(0, 1, nx), np.linspace(0, 1, ny), indexing="ij")
    a, b = rng.uniform(-0.1, 0.1, size=2)
    return 0.25 + a * ii + b * jj


def moving_square(nx=64, ny=64, nt=8, seed=0):
    """A bright square translating over a gently sloped background."""
    rng = np.random.default_rng(seed)
    side = max(2, min(nx, ny) // 4)
    v = rng.choice([-2, -1, 1, 2], size=2)
    i0 = int(rng.integers(2 * nt, max(2 * nt + 1, nx - side - 2 * nt)))
    j0 = int(rng.integers(2 * nt, max(2 * nt + 1, ny - side - 2 * nt)))
    level = rng.uniform(0.75, 0.9)
    bg = _background(nx, ny, rng)
    cube = np.empty((nx, ny, nt))
    for k in range(nt):
        frame = bg.copy()
        i, j = (i0 + v[0] * k) % nx, (j0 + v[1] * k) % ny
        frame[max(i, 0):i + side, max(j, 0):j + side] = level
        cube[:, :, k] = frame
    return np.clip(cube, 0.0, 1.0)


def moving_blob(nx=64, ny=64, nt=8, seed=0):
    """A Gaussian blob drifting across a dark background."""
    rng = np.random.default_rng(seed)
    width = min(nx, ny) / 8.0
    c = rng.uniform(0.3, 0.7, size=2) * (nx, ny)
    v = rng.uniform(-1.5, 1.5, size=2)
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    cube = np.empty((nx, ny, nt))
    for k in range(nt):
        ci, cj = c + v * k
        cube[:, :, k] = 0.1 + 0.8 * np.exp(-((ii - ci) ** 2 + (jj - cj) ** 2) / (2 * width ** 2))
    return np.clip(cube, 0.0, 1.0)


def smooth_field(nx=64, ny=64, nt=8, seed=0):
    """Low-pass random texture translating by a sub-pixel velocity."""
    rng = np.random.default_rng(seed)
    base = gaussian_filter(rng.standard_normal((nx, ny)), sigma=min(nx, ny) / 16.0, mode="wrap")
    base = (base - base.min()) / max(np.ptp(base), 1e-12)
    v = rng.uniform(-1.0, 1.0, size=2)
    cube = np.stack(
        [nd_shift(base, v * k, order=1, mode="wrap") for k in range(nt)], axis=2
    )
    return np.clip(0.1 + 0.8 * cube, 0.0, 1.0)


SCENES = {
    "moving-square": moving_square,
    "moving-blob": moving_blob,
    "smooth-field": smooth_field,
}


def make_scene(name, nx=64, ny=64, nt=8, seed=0):
    try:
        gen = SCENES[name]
    except KeyError:
        raise ArgumentError(f"unknown scene {name!r}; available: {sorted(SCENES)}") from None
    return gen(nx, ny, nt, seed)
