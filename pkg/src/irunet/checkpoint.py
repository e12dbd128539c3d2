"""Binary checkpoint serialization.

Model checkpoint layout (all integers little-endian):

    magic "IRUN" | u32 version=1
    u32 field count, then per config field: u16 name length, name bytes, i64 value
    u32 parameter count, then per parameter:
        u16 name length, name bytes, u8 ndim, u32 dims..., float32 payload
    u32 CRC32 of everything prior

A training checkpoint inserts an optimizer section between the parameters
and the CRC: u64 step counter, then the first/second moment tensors encoded
exactly like parameters. The CRC always covers everything before it, so one
reader handles both flavors by the bytes remaining after the parameters.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .model import ModelConfig, ParamStore, layer_specs
from .layers import LayerParams
from .optim import AdamState
from .tensor import Tensor

MAGIC = b"IRUN"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed or inconsistent checkpoint file."""


def _config_fields(config: ModelConfig) -> list[tuple[str, int]]:
    fields = [
        ("input_channels", config.input_channels),
        ("base_width", config.base_width),
        ("stage_width_0", config.stage_widths[0]),
        ("stage_width_1", config.stage_widths[1]),
        ("stage_width_2", config.stage_widths[2]),
        ("stage_width_3", config.stage_widths[3]),
        ("kernel", config.kernel),
        ("dilation_rate", config.dilation_rate),
        ("branch_width", config.branch_width),
        ("sigma_low", config.sigma_low),
        ("sigma_high", config.sigma_high),
    ]
    return fields


def _config_from_fields(fields: dict[str, int]) -> ModelConfig:
    expected = {name for name, _ in _config_fields(ModelConfig())}
    got = set(fields)
    if got != expected:
        missing = sorted(expected - got)
        unknown = sorted(got - expected)
        raise CheckpointError(
            f"config field mismatch: missing {missing}, unknown {unknown}")
    return ModelConfig(
        input_channels=fields["input_channels"],
        base_width=fields["base_width"],
        stage_widths=(fields["stage_width_0"], fields["stage_width_1"],
                      fields["stage_width_2"], fields["stage_width_3"]),
        kernel=fields["kernel"],
        dilation_rate=fields["dilation_rate"],
        branch_width=fields["branch_width"],
        sigma_low=fields["sigma_low"],
        sigma_high=fields["sigma_high"],
    )


def _encode_name(name: str) -> bytes:
    raw = name.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise CheckpointError(f"name too long: {name!r}")
    return struct.pack("<H", len(raw)) + raw


def _encode_tensor(name: str, data: np.ndarray) -> bytes:
    if data.ndim > 0xFF:
        raise CheckpointError("tensor rank too large")
    parts = [_encode_name(name), struct.pack("<B", data.ndim)]
    parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
    parts.append(np.ascontiguousarray(data, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("truncated checkpoint")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self.take(8))[0]

    def name(self) -> str:
        return self.take(self.u16()).decode("utf-8")

    def tensor(self) -> tuple[str, np.ndarray]:
        name = self.name()
        ndim = self.u8()
        shape = struct.unpack(f"<{ndim}I", self.take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        payload = self.take(4 * count)
        data = np.frombuffer(payload, dtype="<f4", count=count).reshape(shape)
        return name, data.astype(np.float32)

    def remaining(self) -> int:
        return len(self.buf) - self.pos


def _serialize(params: ParamStore, config: ModelConfig,
               state: AdamState | None = None) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    fields = _config_fields(config)
    parts.append(struct.pack("<I", len(fields)))
    for name, value in fields:
        parts.append(_encode_name(name) + struct.pack("<q", value))
    tensors = params.named_tensors()
    parts.append(struct.pack("<I", len(tensors)))
    for name, t in tensors.items():
        parts.append(_encode_tensor(name, t.data))
    if state is not None:
        parts.append(struct.pack("<Q", state.t))
        moments: list[tuple[str, np.ndarray]] = []
        for name in tensors:
            moments.append((f"{name}.m", state.m[name]))
            moments.append((f"{name}.v", state.v[name]))
        parts.append(struct.pack("<I", len(moments)))
        for name, arr in moments:
            parts.append(_encode_tensor(name, arr))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def save_checkpoint(params: ParamStore, config: ModelConfig, path) -> None:
    """Write a model checkpoint; round trip is bit-exact for float32 data."""
    with open(path, "wb") as f:
        f.write(_serialize(params, config))


def save_training_checkpoint(params: ParamStore, config: ModelConfig,
                             state: AdamState, path) -> None:
    with open(path, "wb") as f:
        f.write(_serialize(params, config, state))


@dataclass
class LoadedCheckpoint:
    config: ModelConfig
    params: ParamStore
    state: AdamState | None


def load_checkpoint(path, dtype=np.float32) -> LoadedCheckpoint:
    """Parse and validate a checkpoint (model or training flavor)."""
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < len(MAGIC) + 8:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:4]!r}")
    crc_stored = struct.unpack("<I", buf[-4:])[0]
    crc_actual = zlib.crc32(buf[:-4]) & 0xFFFFFFFF
    if crc_stored != crc_actual:
        raise CheckpointError(
            f"{path}: CRC mismatch (stored {crc_stored:#010x}, computed {crc_actual:#010x})")

    r = _Reader(buf[:-4])
    r.take(4)  # magic, already checked
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")

    fields: dict[str, int] = {}
    for _ in range(r.u32()):
        name = r.name()
        if name in fields:
            raise CheckpointError(f"{path}: duplicate config field {name!r}")
        fields[name] = r.i64()
    config = _config_from_fields(fields)

    expected = {}
    for lname, spec in layer_specs(config):
        expected[f"{lname}.weight"] = (spec.weight_shape, lname, spec, "weight")
        expected[f"{lname}.bias"] = (spec.bias_shape, lname, spec, "bias")

    loaded: dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name, data = r.tensor()
        if name in loaded:
            raise CheckpointError(f"{path}: duplicate parameter {name!r}")
        if name not in expected:
            raise CheckpointError(f"{path}: unexpected parameter {name!r} for this config")
        shape = expected[name][0]
        if tuple(data.shape) != tuple(shape):
            raise CheckpointError(
                f"{path}: parameter {name!r} has shape {data.shape}, config requires {shape}")
        loaded[name] = data
    missing = sorted(set(expected) - set(loaded))
    if missing:
        raise CheckpointError(f"{path}: missing parameters {missing}")

    params = ParamStore()
    for lname, spec in layer_specs(config):
        params.add(LayerParams(
            name=lname, spec=spec,
            weight=Tensor(loaded[f"{lname}.weight"].astype(dtype), requires_grad=True),
            bias=Tensor(loaded[f"{lname}.bias"].astype(dtype), requires_grad=True),
        ))

    state: AdamState | None = None
    if r.remaining() > 0:
        step = r.u64()
        m: dict[str, np.ndarray] = {}
        v: dict[str, np.ndarray] = {}
        for _ in range(r.u32()):
            name, data = r.tensor()
            if name.endswith(".m"):
                target, base = m, name[:-2]
            elif name.endswith(".v"):
                target, base = v, name[:-2]
            else:
                raise CheckpointError(f"{path}: unexpected optimizer tensor {name!r}")
            if base not in expected:
                raise CheckpointError(f"{path}: optimizer tensor {name!r} matches no parameter")
            if tuple(data.shape) != tuple(expected[base][0]):
                raise CheckpointError(f"{path}: optimizer tensor {name!r} shape mismatch")
            if base in target:
                raise CheckpointError(f"{path}: duplicate optimizer tensor {name!r}")
            target[base] = data.astype(dtype)
        if set(m) != set(expected) or set(v) != set(expected):
            raise CheckpointError(f"{path}: incomplete optimizer state")
        state = AdamState(m=m, v=v, t=step)
    if r.remaining() != 0:
        raise CheckpointError(f"{path}: {r.remaining()} trailing bytes after payload")
    return LoadedCheckpoint(config=config, params=params, state=state)
