"""Embedding file formats and report serialization.

Binary layout (little-endian)::

    b"MXE1" | u16 version=1 | u32 d | u32 B | d*B float64, column-major
    optional: b"L" | B x u32 labels

CSV layout: a header line ``d,B`` followed by one line per column holding
``d`` comma-separated values.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ParseError

MAGIC = b"MXE1"
VERSION = 1
LABEL_MARKER = 0x4C
_HEADER = struct.Struct("<4sHII")
MAX_LABEL = 2**32 - 2


class EmbeddingFile(NamedTuple):
    Z: np.ndarray
    labels: np.ndarray | None = None


def encode_mxe(Z, labels=None) -> bytes:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise ValueError(f"expected a d x B matrix, got shape {Z.shape}")
    d, B = Z.shape
    parts = [_HEADER.pack(MAGIC, VERSION, d, B), Z.astype("<f8").tobytes(order="F")]
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (B,):
            raise ValueError(f"{labels.size} labels for {B} columns")
        if labels.size and (labels.min() < 0 or labels.max() > MAX_LABEL):
            raise ValueError("labels must lie in [0, 2^32 - 1)")
        parts.append(bytes([LABEL_MARKER]))
        parts.append(labels.astype("<u4").tobytes())
    return b"".join(parts)


def decode_mxe(data: bytes) -> EmbeddingFile:
    if len(data) < _HEADER.size:
        raise ParseError(f"truncated header: {len(data)} bytes, need {_HEADER.size} (byte offset {len(data)})")
    magic, version, d, B = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r} at byte offset 0")
    if version != VERSION:
        raise ParseError(f"unsupported version {version} at byte offset 4")
    if d < 1 or B < 1:
        raise ParseError(f"empty shape d={d}, B={B} at byte offset 6")
    start = _HEADER.size
    end = start + 8 * d * B
    if len(data) < end:
        raise ParseError(f"payload truncated at byte offset {len(data)}: expected {8 * d * B} payload bytes ending at {end}")
    Z = np.frombuffer(data, dtype="<f8", count=d * B, offset=start).reshape((d, B), order="F").astype(float)
    if len(data) == end:
        return EmbeddingFile(Z)
    if data[end] != LABEL_MARKER:
        raise ParseError(f"unexpected byte 0x{data[end]:02x} at byte offset {end}, expected label marker 0x4c")
    lab_start = end + 1
    lab_end = lab_start + 4 * B
    if len(data) < lab_end:
        raise ParseError(f"label block truncated at byte offset {len(data)}: expected {B} labels ending at {lab_end}")
    if len(data) > lab_end:
        raise ParseError(f"{len(data) - lab_end} trailing bytes at byte offset {lab_end}")
    labels = np.frombuffer(data, dtype="<u4", count=B, offset=lab_start).astype(np.int64)
    bad = np.flatnonzero(labels > MAX_LABEL)
    if bad.size:
        raise ParseError(f"reserved label value at byte offset {lab_start + 4 * int(bad[0])}")
    return EmbeddingFile(Z, labels)


def format_csv(Z) -> str:
    Z = np.asarray(Z, dtype=float)
    d, B = Z.shape
    lines = [f"{d},{B}"]
    lines += [",".join(format(v, ".17g") for v in Z[:, j]) for j in range(B)]
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> np.ndarray:
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ParseError("line 1: empty file, expected header 'd,B'")
    try:
        d, B = (int(tok) for tok in lines[0].split(","))
    except ValueError:
        raise ParseError(f"line 1: expected header 'd,B', got {lines[0]!r}") from None
    if d < 1 or B < 1:
        raise ParseError(f"line 1: empty shape d={d}, B={B}")
    if len(lines) - 1 != B:
        raise ParseError(f"line {len(lines) + 1}: expected {B} column lines, found {len(lines) - 1}")
    Z = np.empty((d, B))
    for j, line in enumerate(lines[1:]):
        toks = line.split(",")
        if len(toks) != d:
            raise ParseError(f"line {j + 2}: expected {d} values, found {len(toks)}")
        try:
            Z[:, j] = [float(t) for t in toks]
        except ValueError:
            raise ParseError(f"line {j + 2}: non-numeric value in {line!r}") from None
    return Z


def read_embeddings(path) -> EmbeddingFile:
    """Read a binary or CSV embedding file, detected by the magic bytes."""
    data = Path(path).read_bytes()
    if data[:4] == MAGIC:
        return decode_mxe(data)
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise ParseError(f"neither MXE1 binary nor ASCII CSV (byte offset {exc.start})") from None
    return EmbeddingFile(parse_csv(text))


def write_embeddings(path, Z, labels=None, fmt: str = "binary") -> None:
    if fmt == "binary":
        Path(path).write_bytes(encode_mxe(Z, labels))
    elif fmt == "csv":
        Path(path).write_text(format_csv(Z))
    else:
        raise ValueError(f"unknown embedding format {fmt!r}")


def read_labels(path) -> np.ndarray:
    """Integer labels separated by commas and/or newlines."""
    text = Path(path).read_text()
    labels = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        for tok in line.split(","):
            tok = tok.strip()
            if not tok:
                continue
            try:
                value = int(tok)
            except ValueError:
                raise ParseError(f"line {lineno}: bad label {tok!r}") from None
            if value < 0:
                raise ParseError(f"line {lineno}: negative label {value}")
            labels.append(value)
    return np.array(labels, dtype=np.int64)


def _render(value, indent: int) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f'{inner}{_render(str(k), 0)}: {_render(v, indent + 1)}' for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        items = [inner + _render(v, indent + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "NaN"
        if math.isinf(value):
            return "Infinity" if value > 0 else "-Infinity"
        return "%.16e" % value
    if isinstance(value, np.ndarray):
        return _render(value.tolist(), indent)
    if isinstance(value, str):
        return json.dumps(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def render_report(doc: dict) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _render(doc, 0) + "\n"


def check(name: str, measured: float, expected: float, tolerance: float) -> dict:
    measured = float(measured)
    expected = float(expected)
    gap = abs(measured - expected)
    ok = bool(gap <= tolerance) if not (math.isinf(measured) and measured == expected) else True
    return {"name": name, "pass": ok, "measured": measured, "expected": expected, "tolerance": float(tolerance)}
