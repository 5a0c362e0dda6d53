"""Model checkpoints: magic, length-prefixed JSON header, named float32 blobs."""

from __future__ import annotations

import json
import struct

import numpy as np
import torch

from ..errors import ConfigurationError, InvalidInputError
from .manip_point import CandidateClassifierNet, DensePredictorNet, MPConfig
from .policy import PolicyConfig, PolicyNet

POLICY_MAGIC = b"DNPM0001"
MP_MAGIC = b"DNMP0001"


def _write(path, magic: bytes, config: dict, training: dict, state: dict) -> None:
    names = sorted(state.keys())
    header = {
        "config": config,
        "training": training,
        "tensors": [{"name": n, "shape": list(state[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(state[name], dtype="<f4").tobytes())


def _read(path, magic: bytes):
    with open(path, "rb") as fh:
        got = fh.read(8)
        if got != magic:
            raise ConfigurationError(f"checkpoint magic {got!r} does not match expected {magic!r}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        tensors = {}
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(4 * n)
            if len(buf) != 4 * n:
                raise InvalidInputError("truncated checkpoint payload")
            tensors[spec["name"]] = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
    return header, tensors


def _state_numpy(model: torch.nn.Module) -> dict:
    return {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}


def save_policy(path, model: PolicyNet, training: dict | None = None) -> None:
    _write(path, POLICY_MAGIC, model.config.to_dict(), training or {}, _state_numpy(model))


def load_policy(path) -> tuple[PolicyNet, dict]:
    header, tensors = _read(path, POLICY_MAGIC)
    model = PolicyNet(PolicyConfig(**header["config"]))
    model.load_state_dict({k: torch.as_tensor(v) for k, v in tensors.items()})
    model.eval()
    return model, header["training"]


def save_mp_model(path, model, training: dict | None = None) -> None:
    kind = "dense" if isinstance(model, DensePredictorNet) else "classifier"
    config = dict(model.config.to_dict(), kind=kind)
    _write(path, MP_MAGIC, config, training or {}, _state_numpy(model))


def load_mp_model(path):
    header, tensors = _read(path, MP_MAGIC)
    config = dict(header["config"])
    kind = config.pop("kind")
    cls = DensePredictorNet if kind == "dense" else CandidateClassifierNet
    model = cls(MPConfig(**config))
    model.load_state_dict({k: torch.as_tensor(v) for k, v in tensors.items()})
    model.eval()
    return model, header["training"]
