"""Binary field/measure/spectrum files, CSV tables, and provenance headers.

Binary files start with a magic line (``LQGF1``, ``LQGM1`` or ``LQGS1``),
then ASCII ``key=value`` header lines, a blank line, and a little-endian
float64 payload.  CSV files carry the same provenance as ``#`` comment lines
above the column header.  Nothing time- or host-dependent is written, so a
rerun with the same configuration reproduces every file byte for byte.
"""
from __future__ import annotations

import csv
import hashlib
import io
import os
import subprocess
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import GridMismatchError, InvalidSpecError
from .field import GridField, GridSpec
from .gmc import LiouvilleMeasure
from .spectral import Spectrum

FIELD_MAGIC = b"LQGF1\n"
MEASURE_MAGIC = b"LQGM1\n"
SPECTRUM_MAGIC = b"LQGS1\n"
LE_F8 = np.dtype("<f8")


@lru_cache(maxsize=1)
def version_string() -> str:
    """Package version, with ``git describe`` output appended inside a checkout."""
    from . import __version__

    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--tags"], cwd=here, capture_output=True,
            text=True, timeout=5, check=True,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        out = ""
    return f"{__version__}+g{out}" if out else __version__


def config_hash(config: dict) -> str:
    """First 16 hex digits of the SHA-256 of the sorted ``key=value`` lines."""
    text = "".join(f"{k}={config[k]}\n" for k in sorted(config))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def provenance(seed, config: dict | None = None) -> dict:
    return {"seed": seed, "version": version_string(), "config_hash": config_hash(config or {})}


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_binary(path, magic: bytes, header: dict, payload: np.ndarray) -> None:
    lines = "".join(f"{k}={_fmt(v)}\n" for k, v in header.items())
    blob = magic + lines.encode("ascii") + b"\n" + np.ascontiguousarray(payload, dtype=LE_F8).tobytes()
    Path(path).write_bytes(blob)


def _read_binary(path, magic: bytes):
    data = Path(path).read_bytes()
    if not data.startswith(magic):
        raise InvalidSpecError(f"{path}: not a {magic.decode().strip()} file")
    end = data.find(b"\n\n", len(magic) - 1)
    if end < 0:
        raise InvalidSpecError(f"{path}: header is not terminated by a blank line")
    header = {}
    for line in data[len(magic):end + 1].decode("ascii").splitlines():
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InvalidSpecError(f"{path}: malformed header line {line!r}")
        header[key] = value
    payload = np.frombuffer(data[end + 2:], dtype=LE_F8).astype(np.float64)
    return header, payload


def _parse_gamma(text: str):
    return None if text == "none" else float(text)


def write_field(path, field: GridField, gamma=None, prov: dict | None = None) -> None:
    header = {"n": field.spec.n, "seed": field.spec.seed, "gamma": gamma}
    header.update({k: v for k, v in (prov or {}).items() if k not in header})
    _write_binary(path, FIELD_MAGIC, header, field.values)


def read_field(path):
    """Returns ``(GridField, header)``."""
    header, payload = _read_binary(path, FIELD_MAGIC)
    n = int(header["n"])
    if payload.size != n * n:
        raise GridMismatchError(f"{path}: expected {n * n} values, found {payload.size}")
    spec = GridSpec(n, int(header.get("seed", 0)))
    return GridField(spec, payload.reshape(n, n)), header


def write_measure(path, measure: LiouvilleMeasure, prov: dict | None = None) -> None:
    header = {"n": measure.spec.n, "seed": measure.spec.seed, "gamma": float(measure.gamma)}
    header.update({k: v for k, v in (prov or {}).items() if k not in header})
    _write_binary(path, MEASURE_MAGIC, header, measure.mass)


def read_measure(path):
    """Returns ``(LiouvilleMeasure, header)``."""
    header, payload = _read_binary(path, MEASURE_MAGIC)
    n = int(header["n"])
    if payload.size != n * n:
        raise GridMismatchError(f"{path}: expected {n * n} values, found {payload.size}")
    spec = GridSpec(n, int(header.get("seed", 0)))
    return LiouvilleMeasure.from_masses(spec, float(header["gamma"]), payload.reshape(n, n)), header


def write_spectrum(path, spectrum: Spectrum, prov: dict | None = None, vectors_path=None) -> None:
    """Write eigenvalues; eigenvectors (if present and requested) go to ``vectors_path``
    as consecutive ``n*n`` blocks behind an LQGF1 header with ``count=k``."""
    header = {"n": spectrum.n, "gamma": float(spectrum.gamma), "seed": spectrum.seed,
              "k": spectrum.k, "tol": float(spectrum.tol)}
    header.update({k: v for k, v in (prov or {}).items() if k not in header})
    _write_binary(path, SPECTRUM_MAGIC, header, spectrum.eigenvalues)
    if vectors_path is not None and spectrum.eigenvectors is not None:
        vh = {"n": spectrum.n, "seed": spectrum.seed, "gamma": float(spectrum.gamma),
              "count": spectrum.k}
        vh.update({k: v for k, v in (prov or {}).items() if k not in vh})
        _write_binary(vectors_path, FIELD_MAGIC, vh, spectrum.eigenvectors)


def read_spectrum(path, vectors_path=None):
    """Returns ``(Spectrum, header)``."""
    header, payload = _read_binary(path, SPECTRUM_MAGIC)
    k = int(header["k"])
    if payload.size != k:
        raise GridMismatchError(f"{path}: header says k={k}, payload has {payload.size}")
    n = int(header["n"])
    vectors = None
    if vectors_path is not None:
        vh, vp = _read_binary(vectors_path, FIELD_MAGIC)
        if int(vh["n"]) != n or vp.size != k * n * n:
            raise GridMismatchError(f"{vectors_path}: does not match spectrum {path}")
        vectors = vp.reshape(k, n * n)
    spec = Spectrum(payload, vectors, n, float(header["gamma"]), int(header["seed"]),
                    float(header["tol"]))
    return spec, header


def write_csv(path, columns: list[str], rows, prov: dict | None = None) -> None:
    """CSV with ``# key=value`` provenance lines, a header row, then ``rows``.

    Floats are written with ``repr`` so they round-trip exactly.
    """
    buf = io.StringIO()
    for k, v in (prov or {}).items():
        buf.write(f"# {k}={_fmt(v)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise InvalidSpecError(f"row has {len(row)} fields, expected {len(columns)}")
        w.writerow([_fmt(float(x)) if isinstance(x, (float, np.floating)) else
                    (int(x) if isinstance(x, (np.integer, np.bool_)) else x) for x in row])
    Path(path).write_text(buf.getvalue())


def read_csv(path):
    """Returns ``(provenance dict, column names, list of row dicts with str values)``."""
    prov, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            prov[k] = v
        else:
            body.append(line)
    reader = csv.DictReader(body)
    rows = list(reader)
    return prov, reader.fieldnames, rows


def write_path_csv(path, sample) -> None:
    """Two-column ``t,value`` dump of a 1D :class:`~lqgspec.paths.PathSample`."""
    vals = np.asarray(sample.values)
    if vals.ndim != 1:
        raise InvalidSpecError("only 1D paths can be dumped as t,value")
    write_csv(path, ["t", "value"], zip(np.asarray(sample.times, float), vals.astype(float)))


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
