"""On-disk formats: CSV matrices, raw binary arrays, netpbm images, traces.

CSV matrices carry the header line ``# blindcal matrix <rows> <cols>`` and
one row per line, row major. The binary format is magic ``BCAL``, u32
version (= 1), u32 ndims, then ndims u64 dimensions, followed by the payload
as little-endian 64-bit floats in C order. Images are binary netpbm, P5
(grayscale) or P6 (colour), 8-bit with maxval 255, mapped to floats in [0, 1].

Floats in text formats are written with ``repr`` (shortest round-trip form),
so identical data produces identical bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError
from .solver import SolverTrace

_MAGIC = b"BCAL"
_VERSION = 1


# ---------------------------------------------------------------------------
# CSV vectors and matrices
# ---------------------------------------------------------------------------

def write_matrix_csv(path, a):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    rows, cols = a.shape
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# blindcal matrix {rows} {cols}\n")
        for row in a:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        parts = header.split()
        if parts[:3] != ["#", "blindcal", "matrix"] or len(parts) != 5:
            raise FormatError(f"{path}: bad matrix header {header!r}")
        rows, cols = int(parts[3]), int(parts[4])
        data = [[float(v) for v in line.strip().split(",")]
                for line in fh if line.strip()]
    a = np.asarray(data, dtype=float)
    if a.shape != (rows, cols):
        raise FormatError(f"{path}: header says {rows}x{cols}, data is {a.shape}")
    return a


def write_vector_csv(path, v):
    write_matrix_csv(path, np.asarray(v, dtype=float).reshape(1, -1))


def read_vector_csv(path) -> np.ndarray:
    return read_matrix_csv(path).ravel()


# ---------------------------------------------------------------------------
# Raw binary arrays
# ---------------------------------------------------------------------------

def write_array_binary(path, a):
    a = np.asarray(a, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, a.ndim))
        fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        fh.write(np.ascontiguousarray(a).tobytes())


def read_array_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        version, ndims = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        dims = struct.unpack(f"<{ndims}Q", fh.read(8 * ndims))
        payload = fh.read()
    expected = 8 * int(np.prod(dims)) if dims else 8
    if len(payload) != expected:
        raise FormatError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype="<f8").reshape(dims).copy()


def read_vector_file(path) -> np.ndarray:
    """Vector from .csv or binary, chosen by extension."""
    if str(path).endswith(".csv"):
        return read_vector_csv(path)
    return read_array_binary(path).ravel()


# ---------------------------------------------------------------------------
# netpbm images (binary P5 / P6, maxval 255)
# ---------------------------------------------------------------------------

def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(data):
        if data[pos:pos + 1].isspace():
            pos += 1
        elif data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < len(data) and not data[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError("truncated netpbm header")
    return data[start:pos], pos


def read_image(path) -> np.ndarray:
    """Read a P5/P6 netpbm file into a (channels, height, width) float array."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, pos = _read_token(data, 0)
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise FormatError(f"{path}: unsupported netpbm magic {magic!r} (need P5 or P6)")
    width, pos = _read_token(data, pos)
    height, pos = _read_token(data, pos)
    maxval, pos = _read_token(data, pos)
    width, height, maxval = int(width), int(height), int(maxval)
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte terminates the header
    expected = width * height * channels
    raster = data[pos:pos + expected]
    if len(raster) != expected:
        raise FormatError(f"{path}: raster has {len(raster)} bytes, expected {expected}")
    pixels = np.frombuffer(raster, dtype=np.uint8).astype(float) / 255.0
    return pixels.reshape(height, width, channels).transpose(2, 0, 1).copy()


def write_image(path, image):
    """Write a (channels, height, width) array in [0, 1] as binary P5/P6."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 3 or image.shape[0] not in (1, 3):
        raise FormatError(f"image must be (1|3, h, w), got shape {image.shape}")
    c, h, w = image.shape
    quantised = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n" if c == 1 else b"P6\n")
        fh.write(f"{w} {h}\n255\n".encode("ascii"))
        fh.write(quantised.transpose(1, 2, 0).tobytes())


# ---------------------------------------------------------------------------
# Solver traces and phase grids
# ---------------------------------------------------------------------------

_TRACE_COLUMNS = "iteration,f,mu_xi,mu_gamma,delta,delta_F,elapsed_seconds"


def _cell(v) -> str:
    return "" if v is None else repr(float(v))


def write_trace_csv(path, trace: SolverTrace):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(_TRACE_COLUMNS + "\n")
        for k in range(len(trace)):
            fh.write(",".join([
                str(trace.iteration[k]),
                repr(float(trace.objective[k])),
                repr(float(trace.mu_xi[k])),
                repr(float(trace.mu_gamma[k])),
                _cell(trace.delta[k]),
                _cell(trace.delta_F[k]),
                repr(float(trace.elapsed_seconds[k])),
            ]) + "\n")


def read_trace_csv(path) -> SolverTrace:
    trace = SolverTrace()
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != _TRACE_COLUMNS:
            raise FormatError(f"{path}: bad trace header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != 7:
                raise FormatError(f"{path}: bad trace row {line!r}")
            trace.iteration.append(int(parts[0]))
            trace.objective.append(float(parts[1]))
            trace.mu_xi.append(float(parts[2]))
            trace.mu_gamma.append(float(parts[3]))
            trace.delta.append(float(parts[4]) if parts[4] else None)
            trace.delta_F.append(float(parts[5]) if parts[5] else None)
            trace.elapsed_seconds.append(float(parts[6]))
    return trace


_GRID_COLUMNS = "p,rho,trials,successes,probability"


def write_grid_csv(path, result):
    spec = result.spec
    with open(path, "w", encoding="ascii") as fh:
        fh.write(_GRID_COLUMNS + "\n")
        for ip, p in enumerate(spec.p_values):
            for ir, rho in enumerate(spec.rho_values):
                prob = float(result.success_probability[ip, ir])
                successes = int(round(prob * spec.trials_per_cell))
                fh.write(f"{p},{rho!r},{spec.trials_per_cell},{successes},{prob!r}\n")


def read_grid_csv(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != _GRID_COLUMNS:
            raise FormatError(f"{path}: bad grid header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            p, rho, trials, successes, prob = line.strip().split(",")
            rows.append({"p": int(p), "rho": float(rho), "trials": int(trials),
                         "successes": int(successes), "probability": float(prob)})
    return rows


def write_report_json(path, report: dict):
    with open(path, "w", encoding="ascii") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
