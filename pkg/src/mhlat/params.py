"""Named trainable tensors with group/kind tags, and checkpoint persistence.

Every parameter is tagged with a group ("encoder" or "head") and a kind
("weight" or "bias"). The tags drive the tuning-mode partition: bias-only
tuning updates encoder biases plus the whole head, full fine-tuning updates
everything, freeze updates the head only.

Checkpoint format: magic "MHLT", version u32 LE, then one record per tensor:
u32 name length, name bytes (utf-8), u32 rows, u32 cols, tag byte
(bit 0 = head, bit 1 = bias), then rows*cols float64 little-endian values.
Round trips are bit-exact.
"""

from __future__ import annotations

import math
import random
import struct
import sys
from array import array
from dataclasses import dataclass
from typing import Iterator

from mhlat.errors import ConfigError, DataError
from mhlat.tensor import Tensor

GROUPS = ("encoder", "head")
KINDS = ("weight", "bias")
TUNING_MODES = ("bitfit", "finetune", "freeze")

_MAGIC = b"MHLT"
_VERSION = 1


@dataclass
class ParamInfo:
    tensor: Tensor
    group: str
    kind: str


class ParamStore:
    """Insertion-ordered registry of trainable tensors."""

    def __init__(self):
        self._params: dict[str, ParamInfo] = {}

    def register(self, name: str, tensor: Tensor, group: str, kind: str) -> Tensor:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name: {name}")
        if group not in GROUPS:
            raise ConfigError(f"unknown group {group!r} for {name}")
        if kind not in KINDS:
            raise ConfigError(f"unknown kind {kind!r} for {name}")
        tensor.requires_grad = True
        self._params[name] = ParamInfo(tensor, group, kind)
        return tensor

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name].tensor

    def __len__(self) -> int:
        return len(self._params)

    def info(self, name: str) -> ParamInfo:
        return self._params[name]

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name, info in self._params.items():
            yield name, info.tensor

    def subset(self, names) -> dict[str, Tensor]:
        return {n: self._params[n].tensor for n in names}

    def zero_grads(self) -> None:
        for info in self._params.values():
            info.tensor.zero_grad()

    def num_scalars(self, group: str | None = None, kind: str | None = None) -> int:
        total = 0
        for info in self._params.values():
            if group is not None and info.group != group:
                continue
            if kind is not None and info.kind != kind:
                continue
            total += len(info.tensor.data)
        return total

    def snapshot(self) -> dict[str, array]:
        return {name: array("d", info.tensor.data)
                for name, info in self._params.items()}

    def restore(self, snap: dict[str, array]) -> None:
        for name, buf in snap.items():
            t = self._params[name].tensor
            t.data[:] = buf


def partition_for_mode(store: ParamStore, mode: str) -> set[str]:
    """Names the optimizer may update under the given tuning mode."""
    if mode not in TUNING_MODES:
        raise ConfigError(f"unknown tuning mode {mode!r}; expected one of {TUNING_MODES}")
    names: set[str] = set()
    for name in store.names():
        info = store.info(name)
        if info.group == "head":
            names.add(name)
        elif mode == "finetune":
            names.add(name)
        elif mode == "bitfit" and info.kind == "bias":
            names.add(name)
    return names


def xavier_uniform(rng: random.Random, rows: int, cols: int) -> Tensor:
    """Xavier/Glorot uniform init: U(-limit, limit), limit = sqrt(6/(fan_in+fan_out))."""
    limit = math.sqrt(6.0 / (rows + cols))
    buf = array("d", (rng.uniform(-limit, limit) for _ in range(rows * cols)))
    return Tensor(rows, cols, buf)


def _tag_byte(info: ParamInfo) -> int:
    return (1 if info.group == "head" else 0) | (2 if info.kind == "bias" else 0)


def _tag_decode(tag: int) -> tuple[str, str]:
    return ("head" if tag & 1 else "encoder", "bias" if tag & 2 else "weight")


def _le_bytes(buf: array) -> bytes:
    if sys.byteorder == "big":
        swapped = array("d", buf)
        swapped.byteswap()
        return swapped.tobytes()
    return buf.tobytes()


def save_checkpoint(path, store: ParamStore) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        for name in store.names():
            info = store.info(name)
            nb = name.encode("utf-8")
            t = info.tensor
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<IIB", t.rows, t.cols, _tag_byte(info)))
            fh.write(_le_bytes(t.data))


def read_checkpoint(path) -> dict[str, ParamInfo]:
    """Parse a checkpoint into fresh tensors keyed by name."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic {blob[:4]!r})")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != _VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    off = 8
    out: dict[str, ParamInfo] = {}
    while off < len(blob):
        try:
            (nlen,) = struct.unpack_from("<I", blob, off)
            off += 4
            name = blob[off:off + nlen].decode("utf-8")
            off += nlen
            rows, cols, tag = struct.unpack_from("<IIB", blob, off)
            off += 9
            nbytes = rows * cols * 8
            if off + nbytes > len(blob):
                raise struct.error("value block truncated")
            buf = array("d")
            buf.frombytes(blob[off:off + nbytes])
            if sys.byteorder == "big":
                buf.byteswap()
            off += nbytes
        except (struct.error, UnicodeDecodeError) as exc:
            raise DataError(f"{path}: truncated or corrupt checkpoint ({exc})") from exc
        group, kind = _tag_decode(tag)
        out[name] = ParamInfo(Tensor(rows, cols, buf), group, kind)
    return out


def load_checkpoint_into(path, store: ParamStore) -> None:
    """Copy checkpoint values into an existing store, validating structure."""
    loaded = read_checkpoint(path)
    missing = set(store.names()) - set(loaded)
    extra = set(loaded) - set(store.names())
    if missing or extra:
        raise DataError(
            f"{path}: parameter names do not match model "
            f"(missing={sorted(missing)}, unexpected={sorted(extra)})")
    for name, info in loaded.items():
        target = store.info(name)
        if info.tensor.shape != target.tensor.shape:
            raise DataError(
                f"{path}: shape mismatch for {name}: "
                f"{info.tensor.shape} vs model {target.tensor.shape}")
        if (info.group, info.kind) != (target.group, target.kind):
            raise DataError(
                f"{path}: tag mismatch for {name}: "
                f"({info.group},{info.kind}) vs model ({target.group},{target.kind})")
        target.tensor.data[:] = info.tensor.data
