"""Versioned checkpoint container: a text header followed by raw little-endian float32 arrays.

Layout::

    DINO-FORGE-CHECKPOINT
    version=1
    config.<field>=<value>        (one line per ModelConfig field)
    meta.<key>=<value>            (epoch, step, seed, mode, ...)
    array <name> <d0,d1,...>      (one line per array, payload order)
    end
    <payload: each array as C-order '<f4' bytes, concatenated>

A scalar array has an empty shape field (``array name ``).
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .model import ModelConfig

MAGIC = "DINO-FORGE-CHECKPOINT"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict[str, str] = field(default_factory=dict)
    version: int = VERSION

    @property
    def epoch(self) -> int:
        return int(self.meta.get("epoch", "0"))

    @property
    def step(self) -> int:
        return int(self.meta.get("step", "0"))

    def add_module(self, prefix: str, module: nn.Module) -> None:
        for name, t in module.state_dict().items():
            self.arrays[f"{prefix}.{name}"] = t.detach().cpu().numpy().astype("<f4", copy=True)

    def has(self, prefix: str) -> bool:
        return any(k.startswith(prefix + ".") for k in self.arrays)

    def load_module(self, prefix: str, module: nn.Module) -> None:
        state = {}
        for name, ref in module.state_dict().items():
            key = f"{prefix}.{name}"
            if key not in self.arrays:
                raise CheckpointError(f"checkpoint lacks array {key!r}")
            arr = self.arrays[key]
            if tuple(arr.shape) != tuple(ref.shape):
                raise CheckpointError(f"{key}: shape {arr.shape} != expected {tuple(ref.shape)}")
            state[name] = torch.from_numpy(np.array(arr, dtype=np.float32))
        module.load_state_dict(state)


def _check_text(s: str) -> str:
    if "\n" in s or "\r" in s:
        raise CheckpointError(f"header values must be single-line: {s!r}")
    return s


def save(ckpt: Checkpoint, path: str | Path) -> None:
    lines = [MAGIC, f"version={ckpt.version}"]
    for f in fields(ModelConfig):
        lines.append(f"config.{f.name}={getattr(ckpt.config, f.name)!r}")
    for k, v in ckpt.meta.items():
        lines.append(f"meta.{_check_text(k)}={_check_text(str(v))}")
    names = list(ckpt.arrays)
    for name in names:
        if " " in name:
            raise CheckpointError(f"array names may not contain spaces: {name!r}")
        shape = ",".join(str(d) for d in np.shape(ckpt.arrays[name]))
        lines.append(f"array {_check_text(name)} {shape}")
    lines.append("end")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        for name in names:
            fh.write(np.ascontiguousarray(ckpt.arrays[name], dtype="<f4").tobytes())
    tmp.replace(path)


def _parse_config(values: dict[str, str]) -> ModelConfig:
    kw = {}
    for f in fields(ModelConfig):
        if f.name not in values:
            raise CheckpointError(f"checkpoint header lacks config.{f.name}")
        kw[f.name] = float(values[f.name]) if f.type in ("float", float) else int(values[f.name])
    return ModelConfig(**kw)


def load(path: str | Path) -> Checkpoint:
    data = Path(path).read_bytes()
    pos = 0
    header: list[str] = []
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise CheckpointError(f"{path}: truncated header")
        line = data[pos:nl].decode("utf-8")
        pos = nl + 1
        if line == "end":
            break
        header.append(line)
    if not header or header[0] != MAGIC:
        raise CheckpointError(f"{path}: not a dino-forge checkpoint")
    version = None
    config: dict[str, str] = {}
    meta: dict[str, str] = {}
    specs: list[tuple[str, tuple[int, ...]]] = []
    for line in header[1:]:
        if line.startswith("array "):
            parts = line.split(" ")
            if len(parts) != 3:
                raise CheckpointError(f"{path}: malformed array line {line!r}")
            shape = tuple(int(d) for d in parts[2].split(",")) if parts[2] else ()
            specs.append((parts[1], shape))
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"{path}: malformed header line {line!r}")
        if key == "version":
            version = int(value)
        elif key.startswith("config."):
            config[key[7:]] = value
        elif key.startswith("meta."):
            meta[key[5:]] = value
        else:
            raise CheckpointError(f"{path}: unknown header key {key!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    arrays = {}
    for name, shape in specs:
        n = int(np.prod(shape, dtype=np.int64))
        end = pos + 4 * n
        if end > len(data):
            raise CheckpointError(f"{path}: payload truncated at {name!r}")
        arrays[name] = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(shape).copy()
        pos = end
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes after payload")
    return Checkpoint(_parse_config(config), arrays, meta, version)
