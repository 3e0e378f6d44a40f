"""Binary checkpoint format for trained component networks.

Layout: 4-byte magic, u32 format version, u32 header length, a JSON
header (component tag, architecture config, metadata, tensor table,
optional optimizer state), then the raw little-endian tensor data in
table order. Saving and loading round-trip bit-exactly, which makes
checkpoint bytes a fingerprint of the whole training run.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import (
    BadMagic,
    ConfigMismatch,
    CorruptTensor,
    VersionUnsupported,
)
from .network import ColorEnhancementNet, NetConfig

MAGIC = b"GQEW"
FORMAT_VERSION = 1

_DTYPES = {"<f4", "<i8"}


@dataclass
class Checkpoint:
    """Everything needed to rebuild and run one component network."""

    config: NetConfig
    component: str
    tensors: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)
    optimizer: dict | None = None  # {"step", "beta1", "beta2", "eps", "base_lr", "m", "v"}


def _tensor_table(tensors: dict[str, np.ndarray]):
    table, blobs = [], []
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        shape = list(arr.shape)  # ascontiguousarray would promote 0-d to 1-d
        tag = "<i8" if np.issubdtype(arr.dtype, np.integer) else "<f4"
        data = np.ascontiguousarray(arr).astype(tag, copy=False)
        table.append({"name": name, "shape": shape, "dtype": tag})
        blobs.append(data.tobytes())
    return table, blobs


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    table, blobs = _tensor_table(ckpt.tensors)
    header = {
        "component": ckpt.component,
        "config": ckpt.config.to_dict(),
        "metadata": ckpt.metadata,
        "tensors": table,
        "optimizer": None,
    }
    if ckpt.optimizer is not None:
        opt = ckpt.optimizer
        m_table, m_blobs = _tensor_table(opt["m"])
        v_table, v_blobs = _tensor_table(opt["v"])
        header["optimizer"] = {
            "step": int(opt["step"]),
            "beta1": opt["beta1"], "beta2": opt["beta2"],
            "eps": opt["eps"], "base_lr": opt["base_lr"],
            "m": m_table, "v": v_table,
        }
        blobs += m_blobs + v_blobs
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)


def _read_tensors(fh, table) -> dict[str, np.ndarray]:
    out = {}
    for entry in table:
        tag = entry["dtype"]
        if tag not in _DTYPES:
            raise CorruptTensor(f"tensor {entry['name']!r} has unknown dtype {tag!r}")
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * np.dtype(tag).itemsize
        raw = fh.read(nbytes)
        if len(raw) < nbytes:
            raise CorruptTensor(
                f"tensor {entry['name']!r}: expected {nbytes} bytes, got {len(raw)}"
            )
        out[entry["name"]] = np.frombuffer(raw, dtype=tag).reshape(shape).copy()
    return out


def load_checkpoint(path, expect_config: NetConfig | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise BadMagic(f"expected magic {MAGIC!r}, found {magic!r}")
        raw = fh.read(8)
        if len(raw) < 8:
            raise CorruptTensor("checkpoint header is truncated")
        version, head_len = struct.unpack("<II", raw)
        if version != FORMAT_VERSION:
            raise VersionUnsupported(f"format version {version} is not supported")
        head_raw = fh.read(head_len)
        if len(head_raw) < head_len:
            raise CorruptTensor("checkpoint header is truncated")
        try:
            header = json.loads(head_raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptTensor(f"checkpoint header is not valid JSON: {exc}") from exc
        config = NetConfig.from_dict(header["config"])
        tensors = _read_tensors(fh, header["tensors"])
        optimizer = None
        if header.get("optimizer") is not None:
            opt = header["optimizer"]
            optimizer = {
                "step": opt["step"],
                "beta1": opt["beta1"], "beta2": opt["beta2"],
                "eps": opt["eps"], "base_lr": opt["base_lr"],
                "m": _read_tensors(fh, opt["m"]),
                "v": _read_tensors(fh, opt["v"]),
            }
    if expect_config is not None and config != expect_config:
        raise ConfigMismatch("checkpoint configuration differs from the expected one")
    return Checkpoint(
        config=config,
        component=header["component"],
        tensors=tensors,
        metadata=header.get("metadata", {}),
        optimizer=optimizer,
    )


def checkpoint_from_model(
    model: ColorEnhancementNet,
    component: str,
    metadata: dict | None = None,
    optimizer: dict | None = None,
) -> Checkpoint:
    tensors = {
        name: value.detach().cpu().numpy()
        for name, value in model.state_dict().items()
    }
    return Checkpoint(
        config=model.config,
        component=component,
        tensors=tensors,
        metadata=dict(metadata or {}),
        optimizer=optimizer,
    )


def model_from_checkpoint(ckpt: Checkpoint) -> ColorEnhancementNet:
    """Rebuild the network; shapes are audited against the config."""
    model = ColorEnhancementNet(ckpt.config)
    state = {}
    for name, arr in ckpt.tensors.items():
        tensor = torch.from_numpy(np.ascontiguousarray(arr))
        if tensor.dtype == torch.float64:
            tensor = tensor.float()
        state[name] = tensor
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise ConfigMismatch(f"checkpoint tensors do not fit the config: {exc}") from exc
    model.eval()
    return model
