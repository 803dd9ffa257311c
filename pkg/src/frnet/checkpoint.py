"""Binary named-tensor checkpoints.

Layout (all integers little-endian u32)::

    b"FRN1" | version | tensor count
    per tensor: name length | UTF-8 name | rank | dims... | float32 data
    config length | UTF-8 ``key=value`` lines
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"FRN1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save(path: Path | str, tensors: dict[str, np.ndarray], config: dict[str, str] | None = None) -> None:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    text = "".join(f"{k}={v}\n" for k, v in (config or {}).items()).encode("utf-8")
    parts.append(struct.pack("<I", len(text)))
    parts.append(text)
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes, source: str):
        self.buf = buf
        self.pos = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"{self.source}: truncated checkpoint")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, count: int = 1):
        vals = struct.unpack(f"<{count}I", self.take(4 * count))
        return vals if count != 1 else vals[0]


def load(path: Path | str) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Return ``(tensors, config)``; tensors come back as float32 arrays."""
    buf = Path(path).read_bytes()
    r = _Reader(buf, str(path))
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not an FRN1 checkpoint")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        dims = tuple(r.u32(rank)) if rank > 1 else ((r.u32(),) if rank == 1 else ())
        count = int(np.prod(dims, dtype=np.int64))
        tensors[name] = np.frombuffer(r.take(4 * count), dtype="<f4").astype(np.float32).reshape(dims)
    text = r.take(r.u32()).decode("utf-8")
    if r.pos != len(buf):
        raise CheckpointError(f"{path}: trailing bytes after config")
    config = {}
    for line in text.splitlines():
        if line:
            k, _, v = line.partition("=")
            config[k] = v
    return tensors, config


def save_model(path: Path | str, model, config: dict[str, str] | None = None) -> None:
    """Checkpoint a model with enough config echo to rebuild it."""
    spec = model.spec
    echo = {
        "num_features": str(spec.num_features), "num_fields": str(spec.num_fields),
        "embed_dim": str(spec.embed_dim), "attn_dim": str(spec.attn_dim),
        "cie_hidden": ",".join(str(h) for h in spec.cie_hidden), "variant": str(spec.variant),
        "init": spec.init,
    }
    echo.update({f"train.{k}": v for k, v in (config or {}).items()})
    save(path, {k: p.data for k, p in model.params.items()}, echo)


def load_model(path: Path | str):
    from . import numerics as nx
    from .models import FMFRNet, ModelSpec

    tensors, echo = load(path)
    try:
        spec = ModelSpec(
            num_features=int(echo["num_features"]), num_fields=int(echo["num_fields"]),
            embed_dim=int(echo["embed_dim"]), attn_dim=int(echo["attn_dim"]),
            cie_hidden=tuple(int(h) for h in echo["cie_hidden"].split(",") if h),
            variant=int(echo["variant"]), init=echo.get("init", "xavier"))
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: incomplete model config ({exc})") from None
    params = {k: nx.Tensor(v, requires_grad=True) for k, v in tensors.items()}
    return FMFRNet(spec, params), {k[len("train."):]: v for k, v in echo.items() if k.startswith("train.")}
