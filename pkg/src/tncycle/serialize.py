"""Tensor and checkpoint serialization.

Two interchangeable container formats are provided:

* JSON: ``{"shape": [...], "data": [[re, im], ...]}`` with data in row-major
  order.  Python's float repr round-trips exactly, so the format is
  bit-exact.
* Binary: a 16-byte magic header, little-endian ``uint32`` rank, the shape
  as ``uint64`` values and the raw complex128 payload.

Checkpoints bundle several named tensors with a JSON metadata block; they
reuse the same two encodings.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import TensorShapeError

TENSOR_MAGIC = b"TNCY0001TENSOR\n\0"
CHECKPOINT_MAGIC = b"TNCY0001CHKPT\n\0\0"


def tensor_to_obj(t: np.ndarray) -> dict:
    """JSON-ready representation of a complex tensor."""
    t = np.ascontiguousarray(np.asarray(t, dtype=np.complex128))
    flat = t.reshape(-1)
    return {
        "shape": [int(n) for n in t.shape],
        "data": [[float(z.real), float(z.imag)] for z in flat],
    }


def tensor_from_obj(obj: dict) -> np.ndarray:
    shape = tuple(int(n) for n in obj["shape"])
    data = np.array([complex(re, im) for re, im in obj["data"]], dtype=np.complex128)
    expected = int(np.prod(shape)) if shape else 1
    if data.size != expected:
        raise TensorShapeError(
            f"data length {data.size} does not match shape {shape} (expected {expected})"
        )
    return data.reshape(shape)


def tensor_to_bytes(t: np.ndarray) -> bytes:
    t = np.ascontiguousarray(np.asarray(t, dtype=np.complex128))
    head = TENSOR_MAGIC + struct.pack("<I", t.ndim)
    head += struct.pack(f"<{t.ndim}Q", *t.shape) if t.ndim else b""
    return head + t.astype("<c16", copy=False).tobytes()


def tensor_from_bytes(buf: bytes) -> np.ndarray:
    if buf[:16] != TENSOR_MAGIC:
        raise TensorShapeError("bad magic header for binary tensor")
    (ndim,) = struct.unpack_from("<I", buf, 16)
    shape = struct.unpack_from(f"<{ndim}Q", buf, 20) if ndim else ()
    off = 20 + 8 * ndim
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(buf, dtype="<c16", count=count, offset=off)
    return data.reshape(shape).astype(np.complex128)


def save_tensor(path, t: np.ndarray, binary: bool = False) -> None:
    path = Path(path)
    if binary:
        path.write_bytes(tensor_to_bytes(t))
    else:
        path.write_text(json.dumps(tensor_to_obj(t)))


def load_tensor(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:16] == TENSOR_MAGIC:
        return tensor_from_bytes(raw)
    return tensor_from_obj(json.loads(raw.decode("utf-8")))


def save_checkpoint(path, kind: str, tensors: dict, meta: dict | None = None,
                    binary: bool = False) -> None:
    """Write a named-tensor bundle with metadata.

    ``kind`` tags the payload (``imps``, ``ipeps``, ``ctm``), ``tensors``
    maps names to arrays and ``meta`` is any JSON-serializable dict.
    """
    path = Path(path)
    meta = dict(meta or {})
    if binary:
        blobs = {name: tensor_to_bytes(np.asarray(t)) for name, t in tensors.items()}
        index = []
        offset = 0
        for name, blob in blobs.items():
            index.append({"name": name, "offset": offset, "length": len(blob)})
            offset += len(blob)
        header = json.dumps({"kind": kind, "meta": meta, "index": index}).encode("utf-8")
        with path.open("wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            for blob in blobs.values():
                fh.write(blob)
    else:
        obj = {
            "kind": kind,
            "meta": meta,
            "tensors": {name: tensor_to_obj(np.asarray(t)) for name, t in tensors.items()},
        }
        path.write_text(json.dumps(obj))


def load_checkpoint(path):
    """Read a checkpoint; returns ``(kind, tensors, meta)``."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:16] == CHECKPOINT_MAGIC:
        (hlen,) = struct.unpack_from("<I", raw, 16)
        header = json.loads(raw[20:20 + hlen].decode("utf-8"))
        base = 20 + hlen
        tensors = {
            entry["name"]: tensor_from_bytes(
                raw[base + entry["offset"]: base + entry["offset"] + entry["length"]]
            )
            for entry in header["index"]
        }
        return header["kind"], tensors, header["meta"]
    obj = json.loads(raw.decode("utf-8"))
    tensors = {name: tensor_from_obj(t) for name, t in obj["tensors"].items()}
    return obj["kind"], tensors, obj["meta"]
