"""Binary dataset container: magic, length-prefixed JSON header, float32 payload.

Layout: 8-byte magic ``DSSV0001``; uint64 little-endian header length; UTF-8
JSON header declaring per-sample arrays (name + shape); then per-sample
float32 little-endian array payloads in header order. Round-trips bit-exactly.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import InvalidInputError

MAGIC = b"DSSV0001"
SCHEMA_VERSION = 1


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_dataset(path, samples: list[dict], metadata: dict | None = None) -> None:
    """Write samples (each a dict of same-keyed float arrays) with metadata."""
    if not samples:
        raise InvalidInputError("cannot write an empty dataset")
    names = sorted(samples[0].keys())
    arrays = []
    for name in names:
        shape = tuple(np.asarray(samples[0][name]).shape)
        arrays.append({"name": name, "shape": list(shape)})
    header = {
        "schema_version": SCHEMA_VERSION,
        "sample_count": len(samples),
        "arrays": arrays,
        "metadata": metadata or {},
    }
    blob = _canonical_json(header)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for sample in samples:
            if sorted(sample.keys()) != names:
                raise InvalidInputError("inconsistent sample keys")
            for spec in arrays:
                arr = np.ascontiguousarray(sample[spec["name"]], dtype="<f4")
                if list(arr.shape) != spec["shape"]:
                    raise InvalidInputError(
                        f"array {spec['name']!r} shape {arr.shape} != declared {spec['shape']}"
                    )
                fh.write(arr.tobytes())


def read_dataset(path) -> tuple[dict, list[dict]]:
    """Read a container; returns (header, samples as dicts of float32 arrays)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise InvalidInputError(f"bad magic {magic!r}; not a dataset container")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("schema_version") != SCHEMA_VERSION:
            raise InvalidInputError(f"unsupported schema version {header.get('schema_version')}")
        samples = []
        for _ in range(header["sample_count"]):
            sample = {}
            for spec in header["arrays"]:
                shape = tuple(spec["shape"])
                n = int(np.prod(shape)) if shape else 1
                buf = fh.read(4 * n)
                if len(buf) != 4 * n:
                    raise InvalidInputError("truncated dataset payload")
                sample[spec["name"]] = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
            samples.append(sample)
    return header, samples
