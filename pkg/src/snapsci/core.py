"""Data types and the structured SCI sensing operator.

Cubes are ``(nx, ny, nt)`` float arrays. Vectorization is column-major
within a frame with frames concatenated in order, which is exactly
``cube.ravel(order="F")``; every dense oracle in the package uses it.

In CACTI mode each frame is modulated by its own mask and the frames are
summed on the detector. In CASSI mode the modulated channels are sheared
along the column axis by an integer dispersion step before summation, so
the detector is ``nx x (ny + (nt - 1) * step)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, CapacityError, SingularOperatorError

MODES = ("cacti", "cassi")
MASK_KINDS = ("bernoulli", "gaussian", "shifted-base", "conjugate-difference")
DENSE_VOXEL_LIMIT = 65536


@dataclass(frozen=True)
class DataCube:
    """A 3D signal with a declared peak value (the amplitude bound rho)."""

    data: np.ndarray
    peak: float = 1.0

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ArgumentError(f"cube must be 3D with positive dims, got {arr.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def shape(self):
        return self.data.shape

    @property
    def nx(self):
        return self.data.shape[0]

    @property
    def ny(self):
        return self.data.shape[1]

    @property
    def nt(self):
        return self.data.shape[2]

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def check_signal(self):
        """Raise if values fall outside ``[0, peak]`` (signal-role cubes only)."""
        lo, hi = float(self.data.min()), float(self.data.max())
        if lo < 0.0 or hi > self.peak:
            raise ArgumentError(
                f"signal values must lie in [0, {self.peak}], got [{lo:g}, {hi:g}]"
            )
        return self


@dataclass(frozen=True)
class MaskStack:
    values: np.ndarray
    kind: str
    seed: int | None = None
    param: float | None = None

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ArgumentError(f"noise sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class Measurement:
    """A coded 2D snapshot plus the metadata needed to interpret it."""

    data: np.ndarray
    noise_sigma: float = 0.0
    mode: str = "cacti"
    n_lambda: int | None = None
    dispersion_step: int | None = None
    reference_channel: int | None = None

    @property
    def shape(self):
        return self.data.shape

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def _as_cube(cube):
    arr = np.asarray(cube, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ArgumentError(f"expected a 3D cube, got shape {arr.shape}")
    return arr


def vec(arr):
    """Column-major within frames, frames concatenated."""
    return np.asarray(arr).ravel(order="F")


def unvec(v, shape):
    return np.reshape(v, shape, order="F")


def make_masks(kind, nx, ny, nt, param=None, seed=0):
    """Draw a mask stack.

    ``param`` is the success probability for ``bernoulli`` and
    ``conjugate-difference`` (default 0.5) and the integer row shift per
    frame for ``shifted-base`` (default 1). ``conjugate-difference`` gives
    the {+1, -1} operator of a two-path system that subtracts a mask
    measurement from its complement.
    """
    if kind not in MASK_KINDS:
        raise ArgumentError(f"unknown mask kind {kind!r}; expected one of {MASK_KINDS}")
    for name, n in (("nx", nx), ("ny", ny), ("nt", nt)):
        if int(n) != n or n < 1:
            raise ArgumentError(f"{name} must be a positive integer, got {n}")
    nx, ny, nt = int(nx), int(ny), int(nt)
    rng = np.random.default_rng(seed)
    if kind in ("bernoulli", "conjugate-difference"):
        p = 0.5 if param is None else float(param)
        if not 0.0 < p < 1.0:
            raise ArgumentError(f"bernoulli probability must lie in (0, 1), got {p}")
        values = (rng.random((nx, ny, nt)) < p).astype(np.float64)
        if kind == "conjugate-difference":
            values = 2.0 * values - 1.0
    elif kind == "gaussian":
        p = None
        values = rng.standard_normal((nx, ny, nt))
    else:
        p = 1 if param is None else param
        if int(p) != p or p < 1:
            raise ArgumentError(f"shift step must be an integer >= 1, got {p}")
        p = int(p)
        base = (rng.random((nx, ny)) < 0.5).astype(np.float64)
        values = np.stack([np.roll(base, k * p, axis=0) for k in range(nt)], axis=2)
    return MaskStack(values=values, kind=kind, seed=seed, param=p)


def replicate_mask(base, nt):
    """Stack one physical mask ``nt`` times (the CASSI fixed-mask case)."""
    base = np.asarray(base, dtype=np.float64)
    if base.ndim != 2:
        raise ArgumentError("base mask must be 2D")
    return MaskStack(values=np.repeat(base[:, :, None], nt, axis=2), kind="explicit")


def shear_offsets(nt, dispersion_step, reference_channel=0):
    """Column offset of each channel, normalized so the smallest is 0."""
    if int(dispersion_step) != dispersion_step or dispersion_step < 0:
        raise ArgumentError(f"dispersion step must be a non-negative integer, got {dispersion_step}")
    if not 0 <= reference_channel < nt:
        raise ArgumentError(f"reference channel {reference_channel} outside [0, {nt})")
    raw = (np.arange(nt) - reference_channel) * int(dispersion_step)
    return raw - raw.min()


def shear_cube(cube, dispersion_step=1, reference_channel=0):
    x = _as_cube(cube)
    nx, ny, nt = x.shape
    offs = shear_offsets(nt, dispersion_step, reference_channel)
    out = np.zeros((nx, ny + (nt - 1) * int(dispersion_step), nt))
    for k, o in enumerate(offs):
        out[:, o:o + ny, k] = x[:, :, k]
    return out


def unshear_cube(sheared, ny, dispersion_step=1, reference_channel=0):
    s = _as_cube(sheared)
    nt = s.shape[2]
    offs = shear_offsets(nt, dispersion_step, reference_channel)
    if s.shape[1] != ny + (nt - 1) * int(dispersion_step):
        raise ArgumentError(f"sheared width {s.shape[1]} inconsistent with ny={ny}")
    return np.stack([s[:, o:o + ny, k] for k, o in enumerate(offs)], axis=2)


@dataclass(frozen=True)
class SensingOperator:
    """Phi = [D_1, ..., D_nt], optionally with CASSI shear offsets."""

    masks: MaskStack
    mode: str = "cacti"
    dispersion_step: int = 1
    reference_channel: int = 0
    _offsets: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.masks, np.ndarray):
            object.__setattr__(self, "masks", MaskStack(np.asarray(self.masks, float), "explicit"))
        if self.mode not in MODES:
            raise ArgumentError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.masks.values.ndim != 3:
            raise ArgumentError("mask stack must be 3D")
        nt = self.masks.values.shape[2]
        step = self.dispersion_step if self.mode == "cassi" else 0
        object.__setattr__(self, "_offsets", shear_offsets(nt, step, self.reference_channel))

    @property
    def cube_shape(self):
        return self.masks.values.shape

    @property
    def meas_shape(self):
        nx, ny, nt = self.cube_shape
        return (nx, ny + int(self._offsets[-1]))

    @property
    def offsets(self):
        return self._offsets

    def effective_masks(self):
        """Masks as seen on the detector grid (sheared in CASSI mode)."""
        if self.mode == "cacti":
            return self.masks.values
        return shear_cube(self.masks.values, self.dispersion_step, self.reference_channel)

    def apply(self, x):
        """Phi x with x given as a cube; returns a 2D measurement array."""
        x = _as_cube(x)
        if x.shape != self.cube_shape:
            raise ArgumentError(f"cube shape {x.shape} does not match operator {self.cube_shape}")
        m = self.masks.values
        if self.mode == "cacti":
            return np.einsum("ijk,ijk->ij", x, m)
        ny = self.cube_shape[1]
        y = np.zeros(self.meas_shape)
        for k, o in enumerate(self._offsets):
            y[:, o:o + ny] += x[:, :, k] * m[:, :, k]
        return y

    def apply_adjoint(self, y):
        y = np.asarray(y, dtype=np.float64)
        if y.shape != self.meas_shape:
            raise ArgumentError(f"measurement shape {y.shape} does not match operator {self.meas_shape}")
        m = self.masks.values
        if self.mode == "cacti":
            return m * y[:, :, None]
        ny = self.cube_shape[1]
        return np.stack(
            [m[:, :, k] * y[:, o:o + ny] for k, o in enumerate(self._offsets)], axis=2
        )


def make_operator(masks, mode="cacti", dispersion_step=1, reference_channel=0):
    return SensingOperator(masks, mode, dispersion_step, reference_channel)


def _meas_array(measurement, op):
    y = np.asarray(measurement, dtype=np.float64)
    if y.shape != op.meas_shape:
        raise ArgumentError(f"measurement shape {y.shape} does not match operator {op.meas_shape}")
    return y


def forward(cube, op, noise=None):
    """Simulate a snapshot: Y = sum_k X_k * M_k (+ shear in CASSI) + E."""
    if isinstance(cube, DataCube):
        cube.check_signal()
        x = cube.data
    else:
        x = _as_cube(cube)
    y = op.apply(x)
    sigma = 0.0
    if noise is not None and noise.sigma > 0:
        sigma = float(noise.sigma)
        y = y + np.random.default_rng(noise.seed).normal(0.0, sigma, size=y.shape)
    nx, ny, nt = op.cube_shape
    if op.mode == "cassi":
        return Measurement(y, sigma, "cassi", nt, int(op.dispersion_step), int(op.reference_channel))
    return Measurement(y, sigma, "cacti")


def adjoint(measurement, op):
    return op.apply_adjoint(_meas_array(measurement, op))


def phi_phit_diag(op):
    """Diagonal of Phi Phi^T as a measurement-shaped array (psi)."""
    m2 = op.masks.values ** 2
    if op.mode == "cacti":
        return m2.sum(axis=2)
    return shear_cube(m2, op.dispersion_step, op.reference_channel).sum(axis=2)


def build_dense_phi(op):
    nx, ny, nt = op.cube_shape
    n = nx * ny * nt
    if n > DENSE_VOXEL_LIMIT:
        raise CapacityError(f"dense Phi needs {n} columns, limit is {DENSE_VOXEL_LIMIT}")
    rows_x = op.meas_shape[0]
    phi = np.zeros((op.meas_shape[0] * op.meas_shape[1], n))
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    for k, o in enumerate(op.offsets):
        cols = (ii + nx * jj + nx * ny * k).ravel()
        rows = (ii + rows_x * (jj + o)).ravel()
        phi[rows, cols] = op.masks.values[:, :, k].ravel()
    return phi


def pinv_diag(psi, allow_unsensed=False):
    """Elementwise 1/psi; zero where psi == 0 if ``allow_unsensed``."""
    zero = psi == 0
    if zero.any() and not allow_unsensed:
        raise SingularOperatorError(int(zero.sum()))
    return np.divide(1.0, psi, out=np.zeros_like(psi), where=~zero)


def least_squares_init(measurement, op, allow_unsensed=False):
    """Minimum-norm consistent estimate Phi^T (Phi Phi^T)^-1 y."""
    y = _meas_array(measurement, op)
    inv = pinv_diag(phi_phit_diag(op), allow_unsensed)
    return op.apply_adjoint(y * inv)
