"""Binary model checkpoints: text manifest + CRC-guarded float32 payload.

Layout (all multi-byte values little-endian):

    SIGNSEQCKPT 1\\n                  magic + format version (ASCII)
    <manifest_len> <manifest_crc>\\n  decimal byte count + crc32 as 8 hex digits
    <manifest>                        UTF-8 JSON, human-readable (indent 2)
    <payload>                         float32 tensors, manifest-declared order

The manifest records the model config, class vocabulary, creation seed,
optional metric summary, per-tensor shapes, and the payload's own crc32 —
so a flipped byte anywhere in the file is caught on load, not just in the
payload.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict
from typing import Optional

import numpy as np

from .landmarks import ClassVocabulary
from .model import ModelConfig, ModelParams, init_params

FORMAT_VERSION = 1
_MAGIC = b"SIGNSEQCKPT"


class CheckpointError(Exception):
    pass


class CorruptPayload(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass


class TruncatedFile(CheckpointError):
    pass


def save_checkpoint(params: ModelParams, config: ModelConfig,
                    vocabulary: ClassVocabulary, path,
                    seed: Optional[int] = None,
                    metrics: Optional[dict] = None) -> None:
    named = params.named()
    payload = b"".join(
        np.ascontiguousarray(t.data, dtype="<f4").tobytes() for _, t in named)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": asdict(config),
        "vocabulary": list(vocabulary.names),
        "seed": seed,
        "metrics": metrics,
        "dtype": "float32",
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in named],
        "payload_bytes": len(payload),
        "payload_crc32": zlib.crc32(payload),
    }
    body = json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC + b" %d\n" % FORMAT_VERSION)
        fh.write(b"%d %08x\n" % (len(body), zlib.crc32(body)))
        fh.write(body)
        fh.write(payload)


def read_manifest(path) -> dict:
    """Header validation only; cheap relative to loading the payload."""
    with open(path, "rb") as fh:
        blob = fh.read()
    return _split_checkpoint(blob)[0]


def _split_checkpoint(blob: bytes) -> tuple[dict, bytes]:
    first_nl = blob.find(b"\n")
    if first_nl < 0:
        raise TruncatedFile("missing magic line")
    magic = blob[:first_nl].split(b" ")
    if len(magic) != 2 or magic[0] != _MAGIC:
        raise VersionMismatch("not a checkpoint file")
    if magic[1] != b"%d" % FORMAT_VERSION:
        raise VersionMismatch(f"unsupported format version {magic[1]!r}")
    second_nl = blob.find(b"\n", first_nl + 1)
    if second_nl < 0:
        raise TruncatedFile("missing manifest header line")
    try:
        len_field, crc_field = blob[first_nl + 1:second_nl].split(b" ")
        manifest_len, manifest_crc = int(len_field), int(crc_field, 16)
    except ValueError:
        raise CorruptPayload("unreadable manifest header") from None
    body_start = second_nl + 1
    body = blob[body_start:body_start + manifest_len]
    if len(body) < manifest_len:
        raise TruncatedFile("manifest shorter than declared")
    if zlib.crc32(body) != manifest_crc:
        raise CorruptPayload("manifest CRC mismatch")
    try:
        manifest = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CorruptPayload("manifest is not valid JSON") from None
    return manifest, blob[body_start + manifest_len:]


def load_checkpoint(path) -> tuple[ModelParams, ModelConfig, ClassVocabulary]:
    with open(path, "rb") as fh:
        blob = fh.read()
    manifest, payload = _split_checkpoint(blob)
    try:
        return _assemble(manifest, payload)
    except (KeyError, TypeError) as exc:
        raise CorruptPayload(f"manifest field problem: {exc}") from None


def _assemble(manifest: dict, payload: bytes):
    expected = manifest["payload_bytes"]
    if len(payload) < expected:
        raise TruncatedFile(f"payload {len(payload)} bytes, declared {expected}")
    if len(payload) > expected:
        raise CorruptPayload("trailing bytes after payload")
    if zlib.crc32(payload) != manifest["payload_crc32"]:
        raise CorruptPayload("payload CRC mismatch")
    config = ModelConfig(**manifest["config"])
    vocabulary = ClassVocabulary(tuple(manifest["vocabulary"]))
    # Shape skeleton from the config, then overwrite every value from payload.
    skeleton = init_params(config, seed=0)
    values: dict[str, np.ndarray] = {}
    offset = 0
    declared = {(entry["name"], tuple(entry["shape"])) for entry in manifest["tensors"]}
    actual = {(n, t.shape) for n, t in skeleton.named()}
    if declared != actual:
        raise CorruptPayload("manifest tensor list does not match the config")
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        chunk = payload[offset:offset + nbytes]
        values[entry["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
        offset += nbytes
    if offset != expected:
        raise CorruptPayload("tensor shapes disagree with payload size")
    return skeleton.replace_values(values), config, vocabulary
