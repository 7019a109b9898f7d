"""Benchmark harness: simulate, reconstruct, score (PSNR / SSIM / time)."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import forward, least_squares_init, make_masks, make_operator, NoiseModel
from .desci import GroupMatchConfig, desci_solve
from .errors import ArgumentError
from .gmm import gmm_reconstruct, gmm_train
from .metrics import psnr, ssim
from .patches import PatchConfig, extract_patches
from .scenes import make_scene
from .solvers import SolverConfig, admm_solve, gap_solve
from .sparse import dct_dictionary, sparse_reconstruct


def derive_seed(*parts):
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def config_digest(obj):
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


@dataclass(frozen=True)
class SceneSpec:
    name: str = "moving-square"
    nx: int = 64
    ny: int = 64
    nt: int = 8
    seed: int = 0
    mask_kind: str = "bernoulli"
    mask_param: float = 0.5
    sigma: float = 0.0

    @property
    def dataset_id(self):
        return f"{self.name}-{self.nx}x{self.ny}x{self.nt}-s{self.seed}"


@dataclass(frozen=True)
class SolverSpec:
    id: str
    params: dict = field(default_factory=dict)

    def __hash__(self):
        return hash((self.id, json.dumps(self.params, sort_keys=True)))


def _solver_config(params):
    return SolverConfig(**{"allow_unsensed": True, **params})


def _run_oracle(op, y, truth, scene, params):
    return truth.copy(), 0


def _run_lsq(op, y, truth, scene, params):
    return least_squares_init(y, op, allow_unsensed=True), 0


def _run_gap(op, y, truth, scene, params):
    est, tr = gap_solve(op, y, _solver_config(params))
    return est, len(tr)


def _run_admm(op, y, truth, scene, params):
    est, tr = admm_solve(op, y, _solver_config(params))
    return est, len(tr)


def _run_desci(op, y, truth, scene, params):
    params = dict(params)
    solver = _solver_config(params.pop("solver", {}))
    est, tr = desci_solve(op, y, GroupMatchConfig(**params), solver)
    return est, len(tr)


def _run_sparse(op, y, truth, scene, params):
    P = params.get("patch_size", 8)
    cfg = PatchConfig(patch_size=P, stride=params.get("stride", 4))
    d = dct_dictionary(P, scene.nt, lam=params.get("lam", 0.01), ista_iters=params.get("iters", 200))
    return sparse_reconstruct(y, op, d, cfg), d.ista_iters


def _run_gmm(op, y, truth, scene, params):
    # trained on an independent instance of the same scene generator
    P = params.get("patch_size", 8)
    train = make_scene(scene.name, scene.nx, scene.ny, scene.nt, derive_seed(scene.seed, 7919))
    _, patches = extract_patches(train, PatchConfig(patch_size=P, stride=params.get("train_stride", 2)))
    K = params.get("K", 4)
    model = gmm_train(patches, K=K, em_iters=params.get("em_iters", 20), seed=scene.seed,
                      cov_floor=params.get("cov_floor", 1e-6))
    est = gmm_reconstruct(y, op, model, patch_config=PatchConfig(patch_size=P, stride=params.get("stride", 4)),
                          sigma=params.get("sigma", 1e-3))
    return est, params.get("em_iters", 20)


SOLVERS = {
    "oracle": _run_oracle,
    "lsq": _run_lsq,
    "gap-tv": _run_gap,
    "admm-tv": _run_admm,
    "desci": _run_desci,
    "sparse": _run_sparse,
    "gmm": _run_gmm,
}


def register_solver(name, fn):
    SOLVERS[name] = fn


@dataclass
class BenchRow:
    dataset: str
    solver: str
    psnr_db: float
    ssim: float
    seconds: float
    iters: int
    config: str


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)

    HEADER = ("dataset", "solver", "psnr_db", "ssim", "seconds", "iters", "config")

    def metric_columns(self):
        return [(r.dataset, r.solver, r.psnr_db, r.ssim, r.iters, r.config) for r in self.rows]

    def mean_psnr(self, solver):
        vals = [r.psnr_db for r in self.rows if r.solver == solver]
        return float(np.mean(vals)) if vals else float("nan")

    def mean_ssim(self, solver):
        vals = [r.ssim for r in self.rows if r.solver == solver]
        return float(np.mean(vals)) if vals else float("nan")

    def to_csv(self, include_time=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        for r in self.rows:
            w.writerow([r.dataset, r.solver, f"{r.psnr_db:.6f}", f"{r.ssim:.6f}",
                        f"{r.seconds:.3f}" if include_time else "", r.iters, r.config])
        return buf.getvalue()

    def to_text(self):
        head = f"{'dataset':<28} {'solver':<10} {'PSNR(dB)':>9} {'SSIM':>7} {'sec':>8} {'iters':>6}  config"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(f"{r.dataset:<28} {r.solver:<10} {r.psnr_db:>9.2f} {r.ssim:>7.4f} "
                         f"{r.seconds:>8.2f} {r.iters:>6d}  {r.config}")
        return "\n".join(lines) + "\n"


def _as_solver_spec(s):
    if isinstance(s, SolverSpec):
        return s
    if isinstance(s, str):
        return SolverSpec(s)
    sid, params = s
    return SolverSpec(sid, dict(params))


def simulate_scene(scene):
    truth = make_scene(scene.name, scene.nx, scene.ny, scene.nt, scene.seed)
    masks = make_masks(scene.mask_kind, scene.nx, scene.ny, scene.nt, scene.mask_param,
                       seed=derive_seed(scene.seed, 1))
    op = make_operator(masks)
    meas = forward(truth, op, NoiseModel(scene.sigma, derive_seed(scene.seed, 2)))
    return truth, op, meas


def run_benchmark(scenes, solvers, peak=1.0):
    """Run every (scene, solver) pair in the given order and collect metrics."""
    solvers = [_as_solver_spec(s) for s in solvers]
    unknown = [s.id for s in solvers if s.id not in SOLVERS]
    if unknown:
        raise ArgumentError(f"unknown solver id(s) {unknown}; registered: {sorted(SOLVERS)}")
    report = BenchReport()
    for scene in scenes:
        truth, op, meas = simulate_scene(scene)
        for spec in solvers:
            t0 = time.perf_counter()
            est, iters = SOLVERS[spec.id](op, meas.data, truth, scene, spec.params)
            seconds = time.perf_counter() - t0
            digest = config_digest({"scene": asdict(scene), "solver": spec.id, "params": spec.params})
            report.rows.append(BenchRow(scene.dataset_id, spec.id, psnr(truth, est, peak),
                                        ssim(truth, est, peak), seconds, int(iters), digest))
    return report


def moving_square_suite(n=3, nx=64, ny=64, nt=8, sigma=0.0):
    return [SceneSpec("moving-square", nx, ny, nt, seed=s, sigma=sigma) for s in range(n)]
