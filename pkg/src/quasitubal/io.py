"""QTT binary container and CSV emitters.

Layout of a ``.qtt`` file::

    b"QTT1" | header_len (u32 LE) | header (UTF-8 JSON) | payload

The payload is complex128 little-endian, interleaved ``(re, im)``, slices in
row-major order: band slices by increasing index, then the tail slice when
``has_tail`` is 1. ``kind=qsvd`` concatenates the U, S and V sections;
``kind=components`` stores, per component, ``sigma`` (as a complex with zero
imaginary part) followed by ``u`` and ``v``. A tensor header carrying a
``transform`` descriptor holds a spatial-domain finite tubal tensor
(``n_slices`` frontal slices starting at 0).

Per-slice oracle files (``slice_{k}.mat``) reuse the same framing with the
header ``{"m", "p", "k"}`` and one slice of payload.
"""
from __future__ import annotations

import csv
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .decomp import Component, ComponentList, QSvd, TSvd
from .tensor import FiniteTubalTensor, QtTensor
from .transform import TransformSpec

__all__ = [
    "QttFormatError",
    "MAGIC",
    "VERSION",
    "write_qtt",
    "read_qtt",
    "write_slice_file",
    "read_slice_file",
    "write_components_csv",
    "read_components_csv",
]

MAGIC = b"QTT1"
VERSION = 1
_LE_C16 = np.dtype("<c16")


class QttFormatError(ValueError):
    pass


def _atomic_write(path, blob: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _frame(header: dict, payload: bytes) -> bytes:
    h = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(h)) + h + payload


def _unframe(blob: bytes) -> tuple[dict, memoryview]:
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise QttFormatError("bad magic: not a QTT file")
    (hlen,) = struct.unpack("<I", blob[4:8])
    if len(blob) < 8 + hlen:
        raise QttFormatError("truncated header")
    try:
        header = json.loads(bytes(blob[8 : 8 + hlen]).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise QttFormatError(f"malformed header: {exc}") from exc
    if not isinstance(header, dict):
        raise QttFormatError("malformed header: not a JSON object")
    return header, memoryview(blob)[8 + hlen :]


def _c16(a) -> bytes:
    return np.ascontiguousarray(a, dtype=_LE_C16).tobytes()


def _tensor_section(X: QtTensor) -> tuple[dict, bytes]:
    has_tail = int(X.has_tail)
    meta = {"m": X.m, "p": X.p, "lo": X.lo, "n_slices": X.n_slices, "has_tail": has_tail}
    payload = _c16(X.slices) + (_c16(X.tail_slice) if has_tail else b"")
    return meta, payload


def _section_size(meta: dict) -> int:
    return 16 * meta["m"] * meta["p"] * (meta["n_slices"] + meta["has_tail"])


def _read_tensor(meta: dict, buf: memoryview) -> QtTensor:
    m, p, n = meta["m"], meta["p"], meta["n_slices"]
    arr = np.frombuffer(buf, dtype=_LE_C16).astype(complex)
    slices = arr[: n * m * p].reshape(n, m, p)
    tail = arr[n * m * p :].reshape(m, p) if meta["has_tail"] else np.zeros((m, p), dtype=complex)
    return QtTensor(meta["lo"], slices, tail)


def _encode(obj) -> tuple[dict, bytes]:
    if isinstance(obj, QtTensor):
        meta, payload = _tensor_section(obj)
        return {"kind": "tensor", **meta}, payload
    if isinstance(obj, FiniteTubalTensor):
        m, p, n = obj.shape
        header = {"kind": "tensor", "m": m, "p": p, "lo": 0, "n_slices": n, "has_tail": 0,
                  "transform": obj.spec.to_descriptor()}
        return header, _c16(np.moveaxis(obj.data, 2, 0))
    if isinstance(obj, QSvd):
        sections = [_tensor_section(T) for T in (obj.U, obj.S, obj.V)]
        m, p = obj.shape
        header = {"kind": "qsvd", "m": m, "p": p, "lo": obj.S.lo, "n_slices": obj.S.n_slices,
                  "has_tail": int(obj.S.has_tail), "rtol": obj.rtol,
                  "sections": [s[0] for s in sections]}
        return header, b"".join(s[1] for s in sections)
    if isinstance(obj, TSvd):
        m, p, n = obj.S.shape
        header = {"kind": "qsvd", "m": m, "p": p, "lo": 0, "n_slices": n, "has_tail": 0,
                  "transform": obj.S.spec.to_descriptor(), "optimal": obj.optimal,
                  "sections": [{"m": T.shape[0], "p": T.shape[1], "lo": 0, "n_slices": n, "has_tail": 0}
                               for T in (obj.U, obj.S, obj.V)]}
        return header, b"".join(_c16(np.moveaxis(T.data, 2, 0)) for T in (obj.U, obj.S, obj.V))
    if isinstance(obj, ComponentList):
        comps = list(obj)
        if comps:
            m, p = comps[0].u.shape[0], comps[0].v.shape[0]
        else:
            m = p = 0
        header = {"kind": "components", "m": m, "p": p, "lo": 0, "n_slices": 0, "has_tail": 0,
                  "n_components": len(comps), "provenance": obj.provenance,
                  "entries": [[c.l, c.t] for c in comps]}
        payload = b"".join(_c16(np.concatenate([[c.sigma], c.u, c.v])) for c in comps)
        return header, payload
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_qtt(path, obj, extra: dict | None = None) -> None:
    """Write ``obj`` atomically (temp file then rename)."""
    header, payload = _encode(obj)
    header["version"] = VERSION
    if extra:
        header["extra"] = extra
    _atomic_write(path, _frame(header, payload))


def _check_len(buf: memoryview, expected: int) -> None:
    if len(buf) < expected:
        raise QttFormatError(f"truncated payload: {len(buf)} bytes, expected {expected}")
    if len(buf) > expected:
        raise QttFormatError(f"trailing bytes: {len(buf)} bytes, expected {expected}")


def read_qtt(path, with_header: bool = False):
    """Read a QTT file back into the object that was written."""
    blob = Path(path).read_bytes()
    header, buf = _unframe(blob)
    try:
        obj = _decode(header, buf)
    except KeyError as exc:
        raise QttFormatError(f"malformed header: missing {exc}") from exc
    return (obj, header) if with_header else obj


def _decode(header: dict, buf: memoryview):
    if header.get("version") != VERSION:
        raise QttFormatError(f"unsupported version {header.get('version')!r}")
    kind = header["kind"]
    spec = TransformSpec.from_descriptor(header["transform"]) if "transform" in header else None
    if kind == "tensor":
        _check_len(buf, _section_size(header))
        X = _read_tensor(header, buf)
        if spec is None:
            return X
        return FiniteTubalTensor(np.moveaxis(X.window(0, header["n_slices"]), 0, 2), spec)
    if kind == "qsvd":
        sections = header["sections"]
        if len(sections) != 3:
            raise QttFormatError("qsvd needs three sections")
        sizes = [_section_size(s) for s in sections]
        _check_len(buf, sum(sizes))
        parts, off = [], 0
        for meta, size in zip(sections, sizes):
            parts.append(_read_tensor(meta, buf[off : off + size]))
            off += size
        if spec is None:
            return QSvd(*parts, rtol=header.get("rtol", 1e-10))
        to_f = lambda T, n=header["n_slices"]: FiniteTubalTensor(np.moveaxis(T.window(0, n), 0, 2), spec)
        return TSvd(*(to_f(T) for T in parts), optimal=bool(header.get("optimal", True)))
    if kind == "components":
        n, m, p = header["n_components"], header["m"], header["p"]
        _check_len(buf, 16 * n * (1 + m + p))
        arr = np.frombuffer(buf, dtype=_LE_C16).astype(complex).reshape(n, 1 + m + p)
        comps = [
            Component(float(row[0].real), int(l), int(t), row[1 : 1 + m].copy(), row[1 + m :].copy())
            for row, (l, t) in zip(arr, header["entries"])
        ]
        return ComponentList(comps, header.get("provenance", "offline"))
    raise QttFormatError(f"unknown kind {kind!r}")


def write_slice_file(path, k: int, A) -> None:
    A = np.asarray(A, dtype=complex)
    m, p = A.shape
    _atomic_write(path, _frame({"m": m, "p": p, "k": int(k)}, _c16(A)))


def read_slice_file(path) -> tuple[int, np.ndarray]:
    header, buf = _unframe(Path(path).read_bytes())
    try:
        m, p, k = header["m"], header["p"], header["k"]
    except KeyError as exc:
        raise QttFormatError(f"malformed slice header: missing {exc}") from exc
    _check_len(buf, 16 * m * p)
    return int(k), np.frombuffer(buf, dtype=_LE_C16).astype(complex).reshape(m, p)


# -- CSV -------------------------------------------------------------------------------
def _g(x: float) -> str:
    return format(float(x), ".17g")


def write_components_csv(path, comps: ComponentList) -> None:
    comps = list(comps)
    m = comps[0].u.shape[0] if comps else 0
    p = comps[0].v.shape[0] if comps else 0
    head = ["n", "sigma", "l", "t"]
    head += [f"u_{part}_{i}" for i in range(m) for part in ("re", "im")]
    head += [f"v_{part}_{i}" for i in range(p) for part in ("re", "im")]
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(head)
        for n, c in enumerate(comps, start=1):
            row = [n, _g(c.sigma), c.l, c.t]
            row += [_g(x) for z in c.u for x in (z.real, z.imag)]
            row += [_g(x) for z in c.v for x in (z.real, z.imag)]
            w.writerow(row)


def read_components_csv(path) -> ComponentList:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    head, body = rows[0], rows[1:]
    m = sum(1 for h in head if h.startswith("u_re_"))
    p = sum(1 for h in head if h.startswith("v_re_"))
    comps = []
    for r in body:
        vals = [float(x) for x in r[4:]]
        u = np.array(vals[0 : 2 * m : 2]) + 1j * np.array(vals[1 : 2 * m : 2])
        v = np.array(vals[2 * m :: 2]) + 1j * np.array(vals[2 * m + 1 :: 2])
        comps.append(Component(float(r[1]), int(r[2]), int(r[3]), u, v))
    return ComponentList(comps)
