"""SCIT tensor files, PNG frame sequences, and GMM containers.

SCIT layout (all little-endian)::

    "SCIT" | version u8 = 1 | dtype u8 (1 = f32, 2 = f64) | ndim u8
    | ndim x u32 dims (nx, ny, nt) | payload, column-major / frame-major

A GMM container reuses the framing with ``ndim = 2`` and dims ``(K, d)``,
followed by K records of ``weight, mean[d], cov[d*d]`` as f64 (covariance
column-major).
"""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ArgumentError, FormatError

MAGIC = b"SCIT"
VERSION = 1
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}


def atomic_write_bytes(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def _header(dtype_code, dims):
    return MAGIC + struct.pack("<BBB", VERSION, dtype_code, len(dims)) + struct.pack(
        f"<{len(dims)}I", *dims
    )


def encode_scit(arr, dtype="f8"):
    arr = np.asarray(arr)
    dt = np.dtype("<" + dtype)
    if dt not in _DTYPE_CODES:
        raise ArgumentError(f"unsupported SCIT dtype {dtype!r}")
    if arr.ndim > 255:
        raise ArgumentError("too many dimensions")
    payload = np.asarray(arr, dtype=dt).ravel(order="F").tobytes()
    return _header(_DTYPE_CODES[dt], arr.shape) + payload


def _parse_header(buf):
    if len(buf) < 7:
        raise FormatError("truncated SCIT header", offset=len(buf))
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}", offset=0)
    version, code, ndim = struct.unpack_from("<BBB", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported SCIT version {version}", offset=4)
    if code not in DTYPES:
        raise FormatError(f"unknown dtype code {code}", offset=5)
    end = 7 + 4 * ndim
    if len(buf) < end:
        raise FormatError("truncated SCIT dims", offset=len(buf))
    dims = struct.unpack_from(f"<{ndim}I", buf, 7)
    return DTYPES[code], tuple(dims), end


def decode_scit(buf):
    dt, dims, start = _parse_header(buf)
    count = int(np.prod(dims, dtype=np.int64)) if dims else 1
    need = start + count * dt.itemsize
    if len(buf) != need:
        raise FormatError(
            f"payload size mismatch: expected {need - start} bytes, found {len(buf) - start}",
            offset=min(len(buf), need),
        )
    data = np.frombuffer(buf, dtype=dt, count=count, offset=start)
    return np.reshape(data, dims, order="F").astype(np.float64)


def write_scit(path, arr, dtype="f8"):
    atomic_write_bytes(path, encode_scit(arr, dtype))


def read_scit(path):
    return decode_scit(Path(path).read_bytes())


def write_png_frames(directory, cube, prefix="frame"):
    """One 8-bit grayscale PNG per frame; values clipped to [0, 1]."""
    from PIL import Image

    cube = np.asarray(cube, dtype=np.float64)
    if cube.ndim == 2:
        cube = cube[:, :, None]
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    width = max(3, len(str(cube.shape[2] - 1)))
    for k in range(cube.shape[2]):
        img = np.round(255.0 * np.clip(cube[:, :, k], 0.0, 1.0)).astype(np.uint8)
        path = directory / f"{prefix}_{k:0{width}d}.png"
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".png")
        os.close(fd)
        Image.fromarray(img, mode="L").save(tmp, format="PNG")
        os.replace(tmp, path)
        paths.append(path)
    return paths


def read_png_frames(paths):
    from PIL import Image

    frames = [np.asarray(Image.open(p).convert("L"), dtype=np.float64) / 255.0 for p in paths]
    if not frames:
        raise FormatError("no PNG frames given")
    if len({f.shape for f in frames}) != 1:
        raise FormatError("PNG frames have inconsistent sizes")
    return np.stack(frames, axis=2)


def encode_gmm(weights, means, covs):
    weights = np.asarray(weights, dtype="<f8")
    means = np.asarray(means, dtype="<f8")
    covs = np.asarray(covs, dtype="<f8")
    K, d = means.shape
    parts = [_header(2, (K, d))]
    for k in range(K):
        parts.append(weights[k:k + 1].tobytes())
        parts.append(means[k].tobytes())
        parts.append(covs[k].ravel(order="F").tobytes())
    return b"".join(parts)


def decode_gmm(buf):
    dt, dims, start = _parse_header(buf)
    if dt != np.dtype("<f8") or len(dims) != 2:
        raise FormatError("GMM container must be f64 with dims (K, d)", offset=5)
    K, d = dims
    rec = 1 + d + d * d
    need = start + 8 * K * rec
    if len(buf) != need:
        raise FormatError(
            f"GMM payload size mismatch: expected {need - start} bytes, found {len(buf) - start}",
            offset=min(len(buf), need),
        )
    flat = np.frombuffer(buf, dtype=dt, offset=start).reshape(K, rec)
    weights = flat[:, 0].copy()
    means = flat[:, 1:1 + d].copy()
    covs = np.ascontiguousarray(np.stack([flat[k, 1 + d:].reshape(d, d, order="F") for k in range(K)]))
    return weights, means, covs
