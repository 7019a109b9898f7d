"""GAP and ADMM reconstruction loops for SCI.

Both exploit that Phi Phi^T is diagonal (``psi``), so the data-fidelity
step is a pixelwise division followed by the adjoint.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .core import _meas_array, phi_phit_diag, pinv_diag
from .errors import ArgumentError, SingularOperatorError
from .tv import tv_denoise

DENOISERS = ("tv", "identity")


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 100
    rho: float = 1.0
    tv_weight: float = 0.02
    tv_inner_iters: int = 10
    tol: float = 1e-4
    denoiser: str = "tv"
    tv_temporal: bool = False
    # Treat pixels with psi == 0 through the pseudo-inverse instead of raising.
    allow_unsensed: bool = False

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ArgumentError(f"max_iters must be a positive integer, got {self.max_iters}")
        if not self.rho > 0:
            raise ArgumentError(f"rho must be > 0, got {self.rho}")
        if not self.tol >= 0:
            raise ArgumentError(f"tol must be >= 0, got {self.tol}")
        if not self.tv_weight >= 0:
            raise ArgumentError(f"tv_weight must be >= 0, got {self.tv_weight}")
        if self.denoiser not in DENOISERS:
            raise ArgumentError(f"denoiser must be one of {DENOISERS}, got {self.denoiser!r}")


@dataclass
class SolveTrace:
    residual: list = field(default_factory=list)
    residual_inf: list = field(default_factory=list)
    change: list = field(default_factory=list)
    psnr: list = field(default_factory=list)
    v: np.ndarray | None = None
    u: np.ndarray | None = None

    def __len__(self):
        return len(self.residual)

    def record(self, residual_map, change, psnr=None):
        self.residual.append(float(np.linalg.norm(residual_map)))
        self.residual_inf.append(float(np.abs(residual_map).max()))
        self.change.append(float(change))
        self.psnr.append(None if psnr is None else float(psnr))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "residual", "change", "psnr"])
        for i, (r, c, p) in enumerate(zip(self.residual, self.change, self.psnr), start=1):
            w.writerow([i, repr(r), repr(c), "" if p is None else repr(p)])
        return buf.getvalue()


def rel_change(new, old):
    den = np.linalg.norm(old)
    num = np.linalg.norm(new - old)
    if den == 0:
        return 0.0 if num == 0 else float("inf")
    return float(num / den)


def x_update_closed_form(v, u, rho, op, y, psi):
    """ADMM x-step: argmin 0.5||y - Phi x||^2 + rho/2 ||x - (v - u/rho)||^2.

    Uses the matrix inversion lemma with diagonal Phi Phi^T, so the solve
    reduces to a pixelwise division by ``rho + psi``.
    """
    if not rho > 0:
        raise ArgumentError(f"rho must be > 0, got {rho}")
    z = np.asarray(v, dtype=np.float64) - np.asarray(u, dtype=np.float64) / rho
    r = np.asarray(y, dtype=np.float64) - op.apply(z)
    return z + op.apply_adjoint(r / (rho + psi))


def gap_project(v, op, y, psi_inv):
    """Euclidean projection of v onto {x : Phi x = y}."""
    return v + op.apply_adjoint((y - op.apply(v)) * psi_inv)


def make_denoiser(config, scale=1.0):
    if config.denoiser == "identity":
        return lambda z: z
    weight = config.tv_weight * scale
    return lambda z: tv_denoise(z, weight, config.tv_inner_iters, temporal=config.tv_temporal)


def _psnr(reference, estimate):
    if reference is None:
        return None
    from .metrics import psnr

    return psnr(reference, estimate)


def _check_sensed(psi, allow_unsensed):
    zero = int((psi == 0).sum())
    if zero and not allow_unsensed:
        raise SingularOperatorError(zero)


def admm_solve(op, y, config=SolverConfig(), reference=None, v0=None, u0=None):
    """Three-step ADMM: closed-form x, denoise x + u/rho, dual ascent on u.

    Returns ``(v, trace)`` where ``v`` is the final denoised iterate.
    """
    y = _meas_array(y, op)
    psi = phi_phit_diag(op)
    _check_sensed(psi, config.allow_unsensed)
    rho = float(config.rho)
    v = np.zeros(op.cube_shape) if v0 is None else np.array(v0, dtype=np.float64)
    u = np.zeros(op.cube_shape) if u0 is None else np.array(u0, dtype=np.float64)
    denoise = make_denoiser(config, scale=1.0 / rho)
    trace = SolveTrace()
    for _ in range(config.max_iters):
        x = x_update_closed_form(v, u, rho, op, y, psi)
        v_new = denoise(x + u / rho)
        u = u + rho * (x - v_new)
        change = rel_change(v_new, v)
        v = v_new
        trace.record(y - op.apply(x), change, _psnr(reference, v))
        if change < config.tol:
            break
    trace.v, trace.u = v, u
    return v, trace


def gap_solve(op, y, config=SolverConfig(), reference=None, v0=None):
    """Two-step GAP: project onto {Phi x = y}, then denoise."""
    y = _meas_array(y, op)
    psi_inv = pinv_diag(phi_phit_diag(op), config.allow_unsensed)
    v = np.zeros(op.cube_shape) if v0 is None else np.array(v0, dtype=np.float64)
    denoise = make_denoiser(config)
    trace = SolveTrace()
    for _ in range(config.max_iters):
        x = gap_project(v, op, y, psi_inv)
        v_new = denoise(x)
        change = rel_change(v_new, v)
        v = v_new
        trace.record(y - op.apply(x), change, _psnr(reference, v))
        if change < config.tol:
            break
    trace.v = v
    return v, trace
