"""Desk-scale checks of compression-based recovery for SCI.

A rate-r code is realized as a uniform scalar quantizer with ``levels``
cells on ``[-rho/2, rho/2]``, so its codebook is a Cartesian grid of cell
centers. Codeword indices follow ``itertools.product`` order over samples
in cube vec order (sample 0 most significant).

Compressible signal pursuit (CSP) minimizes ``||y - Phi c||^2`` over the
codebook. For a grid codebook and a CACTI operator the objective splits
into one independent term per detector pixel, each involving only that
pixel's ``nt`` samples, so the exact minimizer is found by enumerating
``levels**nt`` combinations per pixel instead of the whole codebook.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import SensingOperator, MaskStack, vec, unvec
from .errors import ArgumentError, CapacityError

ENUM_LIMIT = 2 ** 20


@dataclass(frozen=True)
class Codebook:
    dims: tuple
    amplitude: float = 1.0
    levels: int | None = None  # set for uniform-quantizer codebooks
    explicit: np.ndarray | None = None  # (count, n) for explicit lists

    @property
    def n(self):
        return int(np.prod(self.dims))

    @property
    def provenance(self):
        return "uniform-quantizer" if self.levels is not None else "explicit-list"

    @property
    def count(self):
        if self.levels is not None:
            return self.levels ** self.n
        return len(self.explicit)

    @property
    def rate(self):
        """Bits per sample."""
        if self.levels is not None:
            return math.log2(self.levels)
        return math.log2(max(self.count, 1)) / self.n

    def centers(self):
        L, rho = self.levels, self.amplitude
        return -rho / 2 + (rho / L) * (np.arange(L) + 0.5)

    def codewords(self):
        """All codewords as an ``(count, n)`` array (guarded enumeration)."""
        if self.levels is None:
            return self.explicit
        if self.count > ENUM_LIMIT:
            raise CapacityError(f"codebook has {self.count} words, enumeration limit is {ENUM_LIMIT}")
        c = self.centers()
        digits = np.array(list(itertools.product(range(self.levels), repeat=self.n)), dtype=np.int64)
        return c[digits]


def uniform_codebook(dims, levels, amplitude=1.0):
    """Grid codebook described by its quantizer; never enumerated here."""
    dims = tuple(int(d) for d in dims)
    if levels < 2 or int(levels) != levels:
        raise ArgumentError(f"levels must be an integer >= 2, got {levels}")
    if not amplitude > 0:
        raise ArgumentError(f"amplitude must be > 0, got {amplitude}")
    return Codebook(dims=dims, amplitude=float(amplitude), levels=int(levels))


def build_uniform_codebook(dims, levels, amplitude=1.0):
    """Enumerable grid codebook; raises CapacityError beyond 2**20 words."""
    cb = uniform_codebook(dims, levels, amplitude)
    if cb.count > ENUM_LIMIT:
        raise CapacityError(f"codebook would have {cb.count} words, limit is {ENUM_LIMIT}")
    return cb


def explicit_codebook(codewords, dims=None, amplitude=None):
    cw = np.atleast_2d(np.asarray(codewords, dtype=np.float64))
    if cw.shape[0] == 0:
        raise ArgumentError("codebook is empty")
    if dims is None:
        dims = (cw.shape[1], 1, 1)
    if amplitude is None:
        amplitude = 2.0 * float(np.abs(cw).max()) or 1.0
    return Codebook(dims=tuple(dims), amplitude=float(amplitude), explicit=cw)


def _flat(x, codebook):
    v = np.asarray(x, dtype=np.float64)
    v = vec(v) if v.ndim == 3 else v.ravel()
    if v.size != codebook.n:
        raise ArgumentError(f"signal has {v.size} samples, codebook expects {codebook.n}")
    return v


def _index_from_digits(digits, levels):
    idx = 0
    for d in digits:
        idx = idx * levels + int(d)
    return idx


def nearest_codeword(x, codebook):
    """``(codeword, index)`` minimizing ``||x - c||^2``; ties go to the lowest index."""
    v = _flat(x, codebook)
    if codebook.levels is None:
        cw = codebook.explicit
        if len(cw) == 0:
            raise ArgumentError("codebook is empty")
        k = int(np.argmin(((cw - v) ** 2).sum(axis=1)))
        return cw[k].copy(), k
    c = codebook.centers()
    d = np.abs(v[:, None] - c[None, :])
    digits = np.argmin(d, axis=1)
    return c[digits], _index_from_digits(digits, codebook.levels)


def distortion_rate(codebook, samples):
    """Worst per-sample mean squared quantization error over ``samples``."""
    worst = 0.0
    for x in samples:
        v = _flat(x, codebook)
        c, _ = nearest_codeword(v, codebook)
        worst = max(worst, float(np.mean((v - c) ** 2)))
    return worst


def _as_operator(op):
    if not isinstance(op, SensingOperator):
        op = SensingOperator(MaskStack(np.asarray(op, dtype=np.float64), "explicit"))
    return op


def csp_solve(y, op, codebook):
    """Exhaustive CSP: ``argmin_c ||y - Phi c||^2`` over the codebook.

    Returns ``(codeword_cube, objective)``. Grid codebooks with a CACTI
    operator use the exact per-pixel decomposition; everything else is
    enumerated directly (subject to the enumeration guard).
    """
    op = _as_operator(op)
    y = np.asarray(y, dtype=np.float64)
    if codebook.n != int(np.prod(op.cube_shape)):
        raise ArgumentError("codebook dims do not match the operator")
    if codebook.levels is not None and op.mode == "cacti":
        return _csp_separable(y, op, codebook)
    if codebook.count > ENUM_LIMIT:
        raise CapacityError(f"CSP over {codebook.count} codewords exceeds limit {ENUM_LIMIT}")
    cw = codebook.codewords()
    best, best_k = np.inf, 0
    for start in range(0, len(cw), 4096):
        chunk = cw[start:start + 4096]
        pred = np.stack([vec(op.apply(unvec(c, op.cube_shape))) for c in chunk])
        obj = ((pred - vec(y)) ** 2).sum(axis=1)
        k = int(np.argmin(obj))
        if obj[k] < best:
            best, best_k = float(obj[k]), start + k
    return unvec(cw[best_k], op.cube_shape), best


def _csp_separable(y, op, codebook):
    nx, ny, nt = op.cube_shape
    L = codebook.levels
    if L ** nt > ENUM_LIMIT:
        raise CapacityError(f"{L}**{nt} combinations per pixel exceeds limit {ENUM_LIMIT}")
    c = codebook.centers()
    combos = np.array(list(itertools.product(range(L), repeat=nt)), dtype=np.int64)  # (L^nt, nt)
    vals = c[combos]
    m = op.masks.values.reshape(nx * ny, nt, order="F")
    pred = m @ vals.T  # (pixels, L^nt)
    obj = (vec(y)[:, None] - pred) ** 2
    best = np.argmin(obj, axis=1)
    cube = np.empty((nx * ny, nt))
    cube[:] = vals[best]
    return cube.reshape(nx, ny, nt, order="F"), float(obj[np.arange(nx * ny), best].sum())


def theorem_floor(nx, ny, nt, rate, epsilon):
    """``1 - 2^(n r + 1) exp(-nx ny (3 eps / 32)^2)`` evaluated in the log domain."""
    log_tail = (nx * ny * nt * rate + 1) * math.log(2.0) - nx * ny * (3.0 * epsilon / 32.0) ** 2
    if log_tail > 700:
        return -math.inf
    return 1.0 - math.exp(log_tail)


def corollary_terms(delta, rate, eta, rho, nx, ny):
    """Frame bound, error level and tail bound of the corollary (natural log)."""
    if not 0 < delta < 1:
        return {"nt_bound": math.inf, "error_level": math.inf, "tail_bound": 0.0, "epsilon": math.inf}
    ld = math.log(1.0 / delta)
    return {
        "nt_bound": ld / (2.0 * rate * eta),
        "epsilon": 8.0 * math.sqrt(ld / eta),
        "error_level": delta + 8.0 * rho ** 2 * math.sqrt(ld / eta),
        "tail_bound": 2.0 * math.exp(-ld / (5.0 * eta) * nx * ny),
    }


@dataclass
class TheoremCheckReport:
    dims: tuple
    levels: int
    trials: int
    epsilon: float
    eta: float
    rate: float
    rho: float
    delta: float
    measured_delta: float
    error_bound: float
    success_frequency: float
    violation_frequency: float
    theoretical_floor: float
    sampling_sigma: float
    vacuous: bool
    verdict: str
    corollary_nt_bound: float
    corollary_error_level: float
    corollary_tail_bound: float
    corollary_violation_frequency: float
    max_error: float = 0.0
    config_digest: str = ""
    errors: list = field(default_factory=list, repr=False)

    @property
    def passed(self):
        return self.verdict == "pass"

    def rows(self):
        d = asdict(self)
        d.pop("errors")
        d["dims"] = "x".join(str(v) for v in self.dims)
        return d

    def to_csv(self):
        d = self.rows()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(d))
        w.writerow([repr(v) if isinstance(v, float) else v for v in d.values()])
        return buf.getvalue()

    def to_text(self):
        d = self.rows()
        width = max(len(k) for k in d)
        lines = [f"{k:<{width}}  {v}" for k, v in d.items()]
        if self.vacuous:
            lines.append("note: probability floor <= 0, the guarantee is vacuous at these dims")
        return "\n".join(lines) + "\n"


def theorem_check(dims, levels, trials, epsilon, seed=0, rho=1.0, perturbation=0.5,
                  sigma=0.0, eta=1.0):
    """Monte Carlo check of the CSP recovery bound with Gaussian masks.

    Each trial draws a codeword plus a uniform perturbation of at most
    ``perturbation`` half-cells per sample (so the code distortion on the
    signal class is exactly ``(perturbation * cell / 2)**2``), fresh
    N(0, 1) masks, and solves CSP. A trial succeeds when
    ``||x - x_hat||^2 / (nx ny) <= nt (delta + rho^2 eps)``.
    """
    nx, ny, nt = (int(d) for d in dims)
    if not 0 < epsilon <= 16.0 / 3.0:
        raise ArgumentError(f"epsilon must lie in (0, 16/3], got {epsilon}")
    if trials < 1:
        raise ArgumentError("trials must be >= 1")
    if not 0 <= perturbation <= 1:
        raise ArgumentError("perturbation must lie in [0, 1] (fraction of a half cell)")
    cb = uniform_codebook((nx, ny, nt), levels, rho)
    half = rho / levels / 2.0
    a = perturbation * half
    delta = a * a
    bound = nt * (delta + rho ** 2 * epsilon)
    cor = corollary_terms(delta, cb.rate, eta, rho, nx, ny)
    centers = cb.centers()
    successes = 0
    cor_viol = 0
    measured = 0.0
    errors = []
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        digits = rng.integers(levels, size=(nx, ny, nt))
        x = centers[digits] + rng.uniform(-a, a, size=(nx, ny, nt))
        masks = rng.standard_normal((nx, ny, nt))
        op = SensingOperator(MaskStack(masks, "gaussian", seed=None))
        y = op.apply(x)
        if sigma > 0:
            y = y + rng.normal(0.0, sigma, size=y.shape)
        x_hat, _ = csp_solve(y, op, cb)
        sq = float(((x - x_hat) ** 2).sum())
        err = sq / (nx * ny)
        errors.append(err)
        successes += err <= bound
        cor_viol += sq / (nx * ny * nt) > cor["error_level"]
        measured = max(measured, float(np.mean((x - centers[digits]) ** 2)))
    freq = successes / trials
    floor = theorem_floor(nx, ny, nt, cb.rate, epsilon)
    vacuous = floor <= 0
    s = math.sqrt(floor * (1 - floor) / trials) if 0 < floor < 1 else 0.0
    passed = vacuous or freq >= floor - 3 * s
    return TheoremCheckReport(
        dims=(nx, ny, nt), levels=int(levels), trials=int(trials), epsilon=float(epsilon),
        eta=float(eta), rate=cb.rate, rho=float(rho), delta=delta, measured_delta=measured,
        error_bound=bound, success_frequency=freq, violation_frequency=1.0 - freq,
        theoretical_floor=floor, sampling_sigma=s, vacuous=vacuous,
        verdict="pass" if passed else "fail",
        corollary_nt_bound=cor["nt_bound"], corollary_error_level=cor["error_level"],
        corollary_tail_bound=cor["tail_bound"], corollary_violation_frequency=cor_viol / trials,
        max_error=max(errors), errors=errors,
    )
