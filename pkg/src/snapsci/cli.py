"""Command-line entry point: ``snapsci {simulate,reconstruct,bench,theory}``.

Options may also come from a ``key=value`` file passed with ``--config``;
flags given on the command line take precedence. Exit codes: 0 success,
1 usage / unsupported combination, 2 malformed input file, 3 numeric or
singular-operator failure (and a failed theory verdict).
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as sio
from .bench import SceneSpec, SolverSpec, config_digest, derive_seed, run_benchmark
from .core import (
    DataCube, NoiseModel, forward, least_squares_init, make_masks, make_operator, replicate_mask,
    MaskStack, SensingOperator,
)
from .desci import GroupMatchConfig, desci_solve
from .errors import (
    ArgumentError, CapacityError, DecompositionError, FormatError, SingularOperatorError,
    UnsupportedCombinationError,
)
from .gmm import GmmModel, gmm_reconstruct, gmm_train
from .metrics import psnr, ssim
from .patches import PatchConfig, extract_patches
from .scenes import SCENES, make_scene
from .solvers import SolverConfig, SolveTrace, admm_solve, gap_solve
from .sparse import dct_dictionary, sparse_reconstruct
from .theory import theorem_check

log = logging.getLogger("snapsci")

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_NUMERIC = 0, 1, 2, 3
SOLVER_IDS = ("lsq", "gap-tv", "admm-tv", "gmm", "sparse", "desci")
# options that do not change results and stay out of the digest
_NON_RESULT_KEYS = {"out", "config", "verbose", "png", "save_gmm"}
# input paths enter the digest by content, so relocated inputs digest the same
_PATH_KEYS = {"input", "measurement", "masks", "meta", "reference", "gmm_model", "train"}


class UsageError(Exception):
    pass


def parse_dims(text):
    try:
        dims = tuple(int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise UsageError(f"bad dims {text!r}, expected e.g. 64x64x8") from None
    if len(dims) != 3 or min(dims) < 1:
        raise UsageError(f"bad dims {text!r}, expected three positive integers")
    return dims


def read_config_file(path):
    values = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, val = line.split("=", 1)
        values[key.strip().replace("-", "_")] = val.strip()
    return values


def _shared(p):
    p.add_argument("--config", help="key=value file; command-line flags override it")
    p.add_argument("--mode", choices=("cacti", "cassi"))
    p.add_argument("--seed", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="snapsci", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="synthesize a coded snapshot")
    _shared(s)
    s.add_argument("--input", help="SCIT cube, or a directory / list of PNG frames")
    s.add_argument("--scene", choices=sorted(SCENES), help="synthetic scene instead of --input")
    s.add_argument("--dims", help="scene size NXxNYxNT (default 64x64x8)")
    s.add_argument("--mask-kind", choices=("bernoulli", "gaussian", "shifted-base", "conjugate-difference"))
    s.add_argument("--mask-param", type=float)
    s.add_argument("--mask-seed", type=int)
    s.add_argument("--dispersion-step", type=int)
    s.add_argument("--reference-channel", type=int)

    r = sub.add_parser("reconstruct", help="recover a cube from a snapshot")
    _shared(r)
    r.add_argument("--input", help="directory written by simulate")
    r.add_argument("--measurement")
    r.add_argument("--masks")
    r.add_argument("--meta")
    r.add_argument("--solver", choices=SOLVER_IDS)
    r.add_argument("--reference", help="ground-truth SCIT cube for metrics")
    r.add_argument("--iters", type=int)
    r.add_argument("--tv-weight", type=float)
    r.add_argument("--rho", type=float)
    r.add_argument("--gmm-model", help="SCIT-framed GMM file")
    r.add_argument("--train", help="SCIT cube to train a GMM on when --gmm-model is absent")
    r.add_argument("--save-gmm", help="write the trained GMM here")
    r.add_argument("--patch-size", type=int)
    r.add_argument("--allow-unsensed", action="store_true", default=None,
                   help="use the pseudo-inverse at pixels no mask value senses")
    r.add_argument("--png", action="store_true", default=None, help="also export PNG frames")

    b = sub.add_parser("bench", help="benchmark solvers on synthetic scenes")
    _shared(b)
    b.add_argument("--scenes", help="comma-separated scene names")
    b.add_argument("--solvers", help="comma-separated solver ids")
    b.add_argument("--dims")
    b.add_argument("--seeds", help="comma-separated scene seeds")

    t = sub.add_parser("theory", help="Monte Carlo check of the CSP recovery bound")
    _shared(t)
    t.add_argument("--dims")
    t.add_argument("--levels", type=int)
    t.add_argument("--trials", type=int)
    t.add_argument("--epsilon", type=float)
    t.add_argument("--eta", type=float)
    t.add_argument("--perturbation", type=float)
    return parser


DEFAULTS = {
    "simulate": dict(mode="cacti", seed=0, sigma=0.0, out="sim", dims="64x64x8",
                     mask_kind="bernoulli", mask_param=None, mask_seed=None, dispersion_step=1,
                     reference_channel=0, input=None, scene=None),
    "reconstruct": dict(mode=None, seed=0, sigma=None, out="recon", input=None, measurement=None,
                        masks=None, meta=None, solver="gap-tv", reference=None, iters=None,
                        tv_weight=None, rho=None, gmm_model=None, train=None, save_gmm=None,
                        patch_size=8, allow_unsensed=False, png=False),
    "bench": dict(mode="cacti", seed=0, sigma=0.0, out="bench", scenes="moving-square",
                  solvers="oracle,lsq,gap-tv,desci", dims="64x64x8", seeds="0,1,2"),
    "theory": dict(mode="cacti", seed=0, sigma=0.0, out="theory", dims="8x8x2", levels=2,
                   trials=500, epsilon=1.0, eta=1.0, perturbation=0.5),
}

_TYPES = {
    "seed": int, "sigma": float, "mask_param": float, "mask_seed": int, "dispersion_step": int,
    "reference_channel": int, "iters": int, "tv_weight": float, "rho": float, "patch_size": int,
    "levels": int, "trials": int, "epsilon": float, "eta": float, "perturbation": float,
}


def _bool(v):
    return v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes", "on")


def resolve_config(args):
    """Merge defaults < config file < command-line flags."""
    cfg = dict(DEFAULTS[args.command])
    if args.config:
        if not Path(args.config).exists():
            raise UsageError(f"config file not found: {args.config}")
        for k, v in read_config_file(args.config).items():
            if k not in cfg:
                raise UsageError(f"unknown config key {k!r} for {args.command}")
            cfg[k] = v
    for k, v in vars(args).items():
        if k in cfg and v is not None:
            cfg[k] = v
    for k, v in list(cfg.items()):
        if v is None or v == "":
            cfg[k] = None if v == "" else v
        elif k in _TYPES:
            cfg[k] = _TYPES[k](v)
        elif k in ("allow_unsensed", "png"):
            cfg[k] = _bool(v)
    cfg["command"] = args.command
    return cfg


def _content_hash(path):
    p = Path(path)
    h = hashlib.sha256()
    files = sorted(f for f in p.iterdir() if f.is_file()) if p.is_dir() else [p]
    for f in files:
        h.update(f.name.encode() + b"\0" + f.read_bytes())
    return h.hexdigest()


def digest_of(cfg):
    items = {}
    for k, v in cfg.items():
        if k in _NON_RESULT_KEYS:
            continue
        if k in _PATH_KEYS and v is not None and Path(v).exists():
            v = "sha256:" + _content_hash(v)
        items[k] = v
    return config_digest(items)


def _require(path, what):
    if path is None:
        raise UsageError(f"missing {what}")
    if not Path(path).exists():
        raise UsageError(f"{what} not found: {path}")
    return Path(path)


def _load_cube(path):
    p = Path(path)
    if p.is_dir():
        return sio.read_png_frames(sorted(p.glob("*.png")))
    if p.suffix.lower() == ".png":
        return sio.read_png_frames([p])
    arr = sio.read_scit(p)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise FormatError(f"{p}: expected a 3D cube, got {arr.ndim} dims")
    return arr


def write_meta(path, items):
    sio.atomic_write_text(path, "".join(f"{k}={v}\n" for k, v in items.items()))


def read_meta(path):
    return read_config_file(path)


def cmd_simulate(cfg):
    out = Path(cfg["out"])
    if cfg["input"]:
        cube = _load_cube(_require(cfg["input"], "input cube"))
    elif cfg["scene"]:
        nx, ny, nt = parse_dims(cfg["dims"])
        cube = make_scene(cfg["scene"], nx, ny, nt, cfg["seed"])
    else:
        raise UsageError("simulate needs --input or --scene")
    nx, ny, nt = cube.shape
    mask_seed = cfg["mask_seed"] if cfg["mask_seed"] is not None else derive_seed(cfg["seed"], 1)
    if cfg["mode"] == "cassi":
        base = make_masks(cfg["mask_kind"], nx, ny, 1, cfg["mask_param"], seed=mask_seed)
        masks = replicate_mask(base.values[:, :, 0], nt)
    else:
        masks = make_masks(cfg["mask_kind"], nx, ny, nt, cfg["mask_param"], seed=mask_seed)
    op = make_operator(masks, cfg["mode"], cfg["dispersion_step"], cfg["reference_channel"])
    noise = NoiseModel(cfg["sigma"], derive_seed(cfg["seed"], 2))
    meas = forward(DataCube(cube), op, noise)
    digest = digest_of(cfg)
    sio.write_scit(out / "measurement.scit", meas.data)
    sio.write_scit(out / "masks.scit", masks.values)
    if cfg["scene"]:
        sio.write_scit(out / "truth.scit", cube)
    write_meta(out / "meta.txt", {
        "mode": cfg["mode"], "sigma": repr(float(cfg["sigma"])), "seed": cfg["seed"],
        "mask_kind": cfg["mask_kind"], "mask_seed": mask_seed,
        "dims": f"{nx}x{ny}x{nt}", "measurement_dims": f"{meas.data.shape[0]}x{meas.data.shape[1]}",
        "n_lambda": nt if cfg["mode"] == "cassi" else "",
        "dispersion_step": cfg["dispersion_step"] if cfg["mode"] == "cassi" else "",
        "reference_channel": cfg["reference_channel"] if cfg["mode"] == "cassi" else "",
        "config_digest": digest,
    })
    log.info("wrote %s (measurement %s)", out, meas.data.shape)
    return EXIT_OK


def _solver_config(cfg):
    kw = {"allow_unsensed": cfg["allow_unsensed"]}
    if cfg["iters"] is not None:
        kw["max_iters"] = cfg["iters"]
    if cfg["tv_weight"] is not None:
        kw["tv_weight"] = cfg["tv_weight"]
    if cfg["rho"] is not None:
        kw["rho"] = cfg["rho"]
    return SolverConfig(**kw)


def cmd_reconstruct(cfg):
    out = Path(cfg["out"])
    base = Path(cfg["input"]) if cfg["input"] else None
    pick = lambda key, name: cfg[key] or (str(base / name) if base else None)
    y = sio.read_scit(_require(pick("measurement", "measurement.scit"), "measurement file"))
    masks = sio.read_scit(_require(pick("masks", "masks.scit"), "mask file"))
    meta_path = pick("meta", "meta.txt")
    meta = read_meta(meta_path) if meta_path and Path(meta_path).exists() else {}
    mode = cfg["mode"] or meta.get("mode", "cacti")
    if masks.ndim == 2:
        masks = masks[:, :, None]
    step = int(meta.get("dispersion_step") or 1)
    ref_ch = int(meta.get("reference_channel") or 0)
    op = SensingOperator(MaskStack(masks, "explicit"), mode, step, ref_ch)
    if y.shape != op.meas_shape:
        raise FormatError(f"measurement shape {y.shape} does not match masks (expected {op.meas_shape})")
    solver = cfg["solver"]
    if solver in ("gmm", "desci", "sparse") and mode != "cacti":
        raise UnsupportedCombinationError(f"solver {solver!r} does not support {mode} mode")
    reference = _load_cube(_require(cfg["reference"], "reference cube")) if cfg["reference"] else None
    scfg = _solver_config(cfg)
    trace = SolveTrace()
    if solver == "lsq":
        est = least_squares_init(y, op, allow_unsensed=scfg.allow_unsensed)
    elif solver == "gap-tv":
        est, trace = gap_solve(op, y, scfg, reference=reference)
    elif solver == "admm-tv":
        est, trace = admm_solve(op, y, scfg, reference=reference)
    elif solver == "desci":
        est, trace = desci_solve(op, y, GroupMatchConfig(), scfg, reference=reference)
    elif solver == "sparse":
        P = cfg["patch_size"]
        est = sparse_reconstruct(y, op, dct_dictionary(P, op.cube_shape[2]), PatchConfig(patch_size=P))
    else:
        est = _reconstruct_gmm(cfg, op, y, meta)
    digest = digest_of(cfg)
    sio.write_scit(out / "recon.scit", est)
    sio.atomic_write_text(out / "trace.csv", f"# config={digest}\n" + trace.to_csv())
    info = {"solver": solver, "mode": mode, "iters": len(trace), "config_digest": digest}
    if reference is not None:
        info["psnr_db"] = f"{psnr(reference, est):.6f}"
        if min(est.shape[:2]) >= 11:
            info["ssim"] = f"{ssim(reference, est):.6f}"
    write_meta(out / "metrics.txt", info)
    if cfg["png"]:
        sio.write_png_frames(out / "frames", est)
    return EXIT_OK


def _reconstruct_gmm(cfg, op, y, meta):
    P = cfg["patch_size"]
    pc = PatchConfig(patch_size=P)
    if cfg["gmm_model"]:
        model = GmmModel.load(_require(cfg["gmm_model"], "GMM model file"))
    elif cfg["train"]:
        train = _load_cube(_require(cfg["train"], "training cube"))
        K = 4
        _, patches = extract_patches(train, PatchConfig(patch_size=P, stride=2))
        if len(patches) < 10 * K:
            _, patches = extract_patches(train, PatchConfig(patch_size=P, stride=1))
        model = gmm_train(patches, K=K, em_iters=20, seed=cfg["seed"])
        if cfg["save_gmm"]:
            model.save(cfg["save_gmm"])
    else:
        raise UsageError("solver gmm needs --gmm-model or --train")
    sigma = cfg["sigma"] if cfg["sigma"] else float(meta.get("sigma") or 0.0) or 1e-3
    return gmm_reconstruct(y, op, model, patch_config=pc, sigma=sigma)


def cmd_bench(cfg):
    out = Path(cfg["out"])
    nx, ny, nt = parse_dims(cfg["dims"])
    seeds = [int(s) for s in str(cfg["seeds"]).split(",") if s.strip()]
    names = [s.strip() for s in str(cfg["scenes"]).split(",") if s.strip()]
    scenes = [SceneSpec(n, nx, ny, nt, seed=cfg["seed"] + s, sigma=cfg["sigma"]) for n in names for s in seeds]
    solvers = [SolverSpec(s.strip()) for s in str(cfg["solvers"]).split(",") if s.strip()]
    report = run_benchmark(scenes, solvers)
    sio.atomic_write_text(out / "bench.csv", report.to_csv())
    sio.atomic_write_text(out / "bench.txt", report.to_text())
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_theory(cfg):
    out = Path(cfg["out"])
    dims = parse_dims(cfg["dims"])
    report = theorem_check(dims, cfg["levels"], cfg["trials"], cfg["epsilon"], seed=cfg["seed"],
                           perturbation=cfg["perturbation"], sigma=cfg["sigma"], eta=cfg["eta"])
    report.config_digest = digest_of(cfg)
    sio.atomic_write_text(out / "theory.csv", report.to_csv())
    sio.atomic_write_text(out / "theory.txt", report.to_text())
    print(report.to_text(), end="")
    return EXIT_OK if report.passed else EXIT_NUMERIC


COMMANDS = {"simulate": cmd_simulate, "reconstruct": cmd_reconstruct, "bench": cmd_bench, "theory": cmd_theory}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (UsageError, UnsupportedCombinationError, ArgumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (SingularOperatorError, DecompositionError, CapacityError, np.linalg.LinAlgError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
