"""Self-describing binary checkpoint container.

Layout, in order:

    magic        4 bytes, ``b"SMCK"``
    version      uint32, little-endian
    header_len   uint64, little-endian
    header       UTF-8 JSON: type, config, meta, tensor manifest, payload_size
    payload      raw tensor bytes, little-endian, C order, manifest order
    digest       sha256 over every preceding byte

The digest is checked before anything else is parsed, so corruption anywhere
in the file is reported as an integrity failure rather than a JSON or shape
error deep inside loading.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import (
    CheckpointError,
    CheckpointIntegrityError,
    CheckpointTypeError,
    CheckpointVersionError,
)

MAGIC = b"SMCK"
VERSION = 1
_DIGEST_BYTES = 32
_PREFIX = struct.Struct("<4sIQ")


def _rebuilders() -> dict:
    from .backbone.model import PretrainedModel
    from .downstream.classifier import ClassifierModel
    from .tokenizer.baselines import KMeansTokenizer, SeparateVQTokenizer
    from .tokenizer.model import CoupledTokenizer

    return {
        cls.type_tag: cls
        for cls in (
            CoupledTokenizer,
            KMeansTokenizer,
            SeparateVQTokenizer,
            PretrainedModel,
            ClassifierModel,
        )
    }


def _le_contiguous(array: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(array)
    if out.dtype.byteorder == ">":
        out = out.astype(out.dtype.newbyteorder("<"))
    return out


def save_checkpoint(model, path) -> None:
    """Serialize any model exposing ``export_checkpoint()`` to ``path``."""
    type_tag, config, meta, tensors = model.export_checkpoint()
    manifest = []
    chunks = []
    for name, array in tensors.items():
        arr = _le_contiguous(np.asarray(array))
        raw = arr.tobytes()
        manifest.append({
            "name": name,
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
            "nbytes": len(raw),
        })
        chunks.append(raw)
    payload = b"".join(chunks)
    header = json.dumps({
        "type": type_tag,
        "config": config,
        "meta": meta,
        "tensors": manifest,
        "payload_size": len(payload),
    }).encode("utf-8")
    body = _PREFIX.pack(MAGIC, VERSION, len(header)) + header + payload
    digest = hashlib.sha256(body).digest()
    Path(path).write_bytes(body + digest)


def read_container(path):
    """Validate the container and return (type, config, meta, tensors)."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if len(blob) < _PREFIX.size + _DIGEST_BYTES:
        raise CheckpointIntegrityError(
            f"file too short to be a checkpoint ({len(blob)} bytes)"
        )
    body, digest = blob[:-_DIGEST_BYTES], blob[-_DIGEST_BYTES:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointIntegrityError("checksum mismatch; file is corrupt")
    magic, version, header_len = _PREFIX.unpack_from(body)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}; not a checkpoint file")
    if version != VERSION:
        raise CheckpointVersionError(
            f"unsupported checkpoint version {version}, expected {VERSION}"
        )
    header_end = _PREFIX.size + header_len
    if header_end > len(body):
        raise CheckpointIntegrityError("declared header overruns the file")
    try:
        header = json.loads(body[_PREFIX.size:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointIntegrityError(f"unreadable header: {exc}") from exc
    payload = body[header_end:]
    if header.get("payload_size") != len(payload):
        raise CheckpointIntegrityError(
            f"payload is {len(payload)} bytes, header declares {header.get('payload_size')}"
        )
    tensors = {}
    offset = 0
    for entry in header["tensors"]:
        nbytes = entry["nbytes"]
        raw = payload[offset:offset + nbytes]
        if len(raw) != nbytes:
            raise CheckpointIntegrityError(f"tensor {entry['name']!r} is truncated")
        array = np.frombuffer(raw, dtype=np.dtype(entry["dtype"]))
        tensors[entry["name"]] = array.reshape(entry["shape"]).copy()
        offset += nbytes
    if offset != len(payload):
        raise CheckpointIntegrityError("payload has trailing bytes not in the manifest")
    return header["type"], header["config"], header.get("meta", {}), tensors


def load_checkpoint(path, expected_type: str | None = None):
    """Rebuild the saved model. ``expected_type`` pins the type tag."""
    type_tag, config, meta, tensors = read_container(path)
    if expected_type is not None and type_tag != expected_type:
        raise CheckpointTypeError(
            f"checkpoint holds {type_tag!r}, expected {expected_type!r}"
        )
    rebuilders = _rebuilders()
    if type_tag not in rebuilders:
        raise CheckpointTypeError(f"unknown checkpoint type {type_tag!r}")
    return rebuilders[type_tag].from_checkpoint(config, tensors, meta)


def state_hash(module) -> str:
    """sha256 over a module's state, for detecting unwanted updates."""
    digest = hashlib.sha256()
    for name in sorted(module.state_dict()):
        value = module.state_dict()[name]
        digest.update(name.encode("utf-8"))
        digest.update(_le_contiguous(value.detach().cpu().numpy()).tobytes())
    return digest.hexdigest()
