"""File formats: binary sample files, basis text files, key files and flat configs."""
from __future__ import annotations

import contextlib
import json
import math
import os
import struct
import tempfile
from fractions import Fraction
from pathlib import Path
from typing import IO, Iterator

import numpy as np

from .model import SampleList

MAGIC = b"BKWS"
VERSION = 1
HEADER = struct.Struct("<4sHIQQB")
FLAG_FLOAT_B = 1
FLAG_PACKED = 2
_CHUNK = 1 << 16


class FormatError(ValueError):
    """A file does not follow the expected layout."""


@contextlib.contextmanager
def atomic_write(path, mode: str = "wb") -> Iterator[IO]:
    """Write to a temporary sibling and rename over ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.chmod(tmp, 0o644)
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def residue_bits(q: int) -> int:
    return max(1, math.ceil(math.log2(q)))


def _word(q: int) -> np.dtype:
    for dt in (np.uint8, np.uint16, np.uint32, np.uint64):
        if q - 1 <= np.iinfo(dt).max:
            return np.dtype(dt).newbyteorder("<")
    raise FormatError("modulus too large")


def _residue_bytes(count: int, q: int, packed: bool) -> int:
    if packed:
        return (count * residue_bits(q) + 7) // 8
    return count * _word(q).itemsize


def payload_size(n: int, q: int, count: int, flags: int) -> int:
    packed = bool(flags & FLAG_PACKED)
    size = _residue_bytes(count * n, q, packed)
    size += count * 8 if flags & FLAG_FLOAT_B else _residue_bytes(count, q, packed)
    return size


def _pack(values: np.ndarray, w: int) -> bytes:
    v = values.astype(np.uint64).ravel()
    bits = ((v[:, None] >> np.arange(w, dtype=np.uint64)) & np.uint64(1)).astype(np.uint8)
    return np.packbits(bits.ravel(), bitorder="little").tobytes()


def _unpack(raw: bytes, count: int, w: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")[: count * w]
    bits = bits.reshape(count, w).astype(np.uint64)
    return (bits << np.arange(w, dtype=np.uint64)).sum(axis=1)


def _write_residues(fh, values: np.ndarray, q: int, packed: bool) -> None:
    flat = np.asarray(values).ravel()
    if not packed:
        dt = _word(q)
        for i in range(0, flat.size, _CHUNK * 8):
            fh.write(flat[i : i + _CHUNK * 8].astype(dt).tobytes())
        return
    w = residue_bits(q)
    step = _CHUNK * 8  # multiple of 8 keeps chunks byte aligned
    for i in range(0, flat.size, step):
        fh.write(_pack(flat[i : i + step], w))


def _read_residues(fh, count: int, q: int, packed: bool) -> np.ndarray:
    out = np.empty(count, dtype=np.int64)
    if not packed:
        dt = _word(q)
        raw = fh.read(count * dt.itemsize)
        if len(raw) != count * dt.itemsize:
            raise FormatError("truncated payload")
        out[:] = np.frombuffer(raw, dtype=dt)
    else:
        w = residue_bits(q)
        step = _CHUNK * 8
        for i in range(0, count, step):
            c = min(step, count - i)
            nbytes = (c * w + 7) // 8
            raw = fh.read(nbytes)
            if len(raw) != nbytes:
                raise FormatError("truncated payload")
            out[i : i + c] = _unpack(raw, c, w)
    if np.any(out >= q):
        raise FormatError("residue out of range")
    return out


def write_samples(path, samples: SampleList, *, packed: bool = False, float_b: bool | None = None) -> None:
    """Write ``samples`` in the binary sample format, atomically."""
    b = np.asarray(samples.b)
    if float_b is None:
        float_b = not (np.issubdtype(b.dtype, np.integer) or np.all(b == np.floor(b)))
    flags = (FLAG_FLOAT_B if float_b else 0) | (FLAG_PACKED if packed else 0)
    n, q, count = samples.dim, int(samples.q), len(samples)
    with atomic_write(path) as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, n, q, count, flags))
        _write_residues(fh, samples.A, q, packed)
        if float_b:
            fh.write(np.asarray(b, dtype="<f8").tobytes())
        else:
            _write_residues(fh, np.mod(np.rint(b).astype(np.int64), q), q, packed)


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
    if len(raw) != HEADER.size:
        raise FormatError("file shorter than the header")
    magic, version, n, q, count, flags = HEADER.unpack(raw)
    if magic != MAGIC:
        raise FormatError("bad magic")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if q < 2:
        raise FormatError("modulus must be >= 2")
    return {"version": version, "n": n, "q": q, "count": count, "flags": flags}


def read_samples(path) -> SampleList:
    """Read a sample file, rejecting any whose size disagrees with its declared count."""
    head = read_header(path)
    n, q, count, flags = head["n"], head["q"], head["count"], head["flags"]
    expected = HEADER.size + payload_size(n, q, count, flags)
    actual = os.path.getsize(path)
    if actual != expected:
        raise FormatError(f"declared {count} samples need {expected} bytes, file has {actual}")
    packed = bool(flags & FLAG_PACKED)
    with open(path, "rb") as fh:
        fh.seek(HEADER.size)
        A = _read_residues(fh, count * n, q, packed).reshape(count, n)
        if flags & FLAG_FLOAT_B:
            b = np.frombuffer(fh.read(count * 8), dtype="<f8").astype(np.float64)
        else:
            b = _read_residues(fh, count, q, packed)
    from .model import residue_dtype

    return SampleList(A.astype(residue_dtype(q)), b, q)


# --------------------------------------------------------------------------
# text formats


def _fmt_rational(v) -> str:
    v = Fraction(v)
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


def write_basis(path, basis, target=None) -> None:
    """Basis text file: a size line, one line per column, then an optional ``t:`` target line."""
    cols = basis.cols
    n, dim = len(cols), len(cols[0])
    lines = [str(n) if n == dim else f"{n} {dim}"]
    lines += [" ".join(_fmt_rational(v) for v in c) for c in cols]
    if target is not None:
        lines.append("t: " + " ".join(_fmt_rational(v) for v in target))
    with atomic_write(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_basis(path):
    """Inverse of :func:`write_basis`; returns ``(LatticeBasis, target or None)``."""
    from .lattice import LatticeBasis

    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise FormatError("empty basis file")
    size = lines[0].split()
    try:
        n = int(size[0])
        dim = int(size[1]) if len(size) > 1 else n
    except (ValueError, IndexError) as exc:
        raise FormatError("bad size line") from exc
    body = lines[1:]
    target = None
    if body and body[-1].startswith("t:"):
        target = [Fraction(v) for v in body[-1][2:].split()]
        body = body[:-1]
        if len(target) != dim:
            raise FormatError("target length does not match the dimension")
    if len(body) != n:
        raise FormatError(f"expected {n} column lines, found {len(body)}")
    cols = []
    for ln in body:
        vals = [Fraction(v) for v in ln.split()]
        if len(vals) != dim:
            raise FormatError("column length does not match the dimension")
        cols.append(vals)
    return LatticeBasis.from_columns(cols), target


def write_key(path, s) -> None:
    with atomic_write(path, "w") as fh:
        fh.write(" ".join(str(int(v)) for v in s) + "\n")


def read_key(path) -> np.ndarray:
    with open(path) as fh:
        return np.array([int(v) for v in fh.read().split()], dtype=np.int64)


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for num, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"line {num}: expected key = value")
            key, value = (p.strip() for p in line.split("=", 1))
            if not key:
                raise FormatError(f"line {num}: empty key")
            out[key] = value
    return out


def write_config(path, config: dict) -> None:
    lines = [f"{k} = {'' if v is None else v}" for k, v in sorted(config.items())]
    with atomic_write(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def jsonl_logger(stream) -> callable:
    """Callable writing one JSON object per line with keys in insertion order."""

    def log(record: dict) -> None:
        stream.write(json.dumps(record, default=_jsonable) + "\n")
        stream.flush()

    return log


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, Fraction):
        return _fmt_rational(v)
    return str(v)
