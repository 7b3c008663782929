"""Versioned binary persistence of network state.

Layout (all little-endian): magic "SYNR", u32 format version, a
length-prefixed network kind tag (the base kind plus builder args, e.g.
"classifier;num_classes=3;img_size=64;img_channels=3;base_ch=16"),
u64 step / u64 epoch counters, u64 seed, u32 tensor count, then per
tensor a length-prefixed name, u8 rank, u32 dims and a raw float32
payload. A crc32 of everything after the magic closes the file.

Writes go to a temp file and are renamed into place, so an interrupted
save never leaves a loadable-looking file; loads parse and checksum the
whole file before touching any network.
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import networks
from .errors import CheckpointError, ContractError
from .networks import Network, state_arrays

MAGIC = b"SYNR"
VERSION = 1


def format_kind_tag(base, meta):
    parts = [base] + [f"{k}={v}" for k, v in sorted(meta.items())]
    return ";".join(parts)


def parse_kind_tag(tag):
    parts = tag.split(";")
    meta = {}
    for p in parts[1:]:
        k, _, v = p.partition("=")
        meta[k] = v
    return parts[0], meta


@dataclass
class CheckpointData:
    kind: str
    meta: dict
    step: int
    epoch: int
    seed: int
    tensors: dict = field(default_factory=dict)


def save_checkpoint(net: Network, path, step=0, epoch=0, seed=0):
    """Serialize one network's parameters and buffers; atomic on completion."""
    blob = bytearray()
    tag = format_kind_tag(net.kind, net.meta).encode()
    blob += struct.pack("<I", VERSION)
    blob += struct.pack("<H", len(tag)) + tag
    blob += struct.pack("<QQQ", step, epoch, seed)
    state = state_arrays(net)
    blob += struct.pack("<I", len(state))
    for name in sorted(state):
        arr = state[name]
        if arr.dtype != np.float32:
            raise ContractError(
                f"checkpoint payload is float32; convert the network first ({name} is {arr.dtype})")
        nb = name.encode()
        blob += struct.pack("<H", len(nb)) + nb
        blob += struct.pack("<B", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    tmp = f"{os.fspath(path)}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes(blob))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"{self.path}: truncated while reading {what}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(path):
    """Parse and verify a checkpoint file; never mutates anything on error."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    body, tail = raw[4:-4], raw[-4:]
    if len(raw) < 12:
        raise CheckpointError(f"{path}: file too short")
    (stored_crc,) = struct.unpack("<I", tail)
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise CheckpointError(f"{path}: checksum mismatch, refusing to load")
    r = _Reader(body, path)
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointError(f"{path}: unknown format version {version}")
    (tag_len,) = r.unpack("<H", "kind tag")
    tag = r.take(tag_len, "kind tag").decode()
    kind, meta = parse_kind_tag(tag)
    step, epoch, seed = r.unpack("<QQQ", "counters")
    (count,) = r.unpack("<I", "tensor count")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H", "tensor name")
        name = r.take(name_len, "tensor name").decode()
        (ndim,) = r.unpack("<B", "tensor rank")
        shape = r.unpack(f"<{ndim}I", "tensor shape") if ndim else ()
        n_items = int(np.prod(shape)) if ndim else 1
        payload = r.take(4 * n_items, f"tensor {name} payload")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    if r.pos != len(body):
        raise CheckpointError(f"{path}: {len(body) - r.pos} trailing bytes")
    return CheckpointData(kind, meta, step, epoch, seed, tensors)


def load_checkpoint_into(net: Network, path, expect_kind=None):
    """Load a checkpoint into an already built network of the matching kind."""
    data = load_checkpoint(path)
    want = expect_kind or net.kind
    if data.kind != want:
        raise CheckpointError(
            f"{path}: kind tag {data.kind!r} does not match requested {want!r}")
    try:
        networks.load_state_arrays(net, data.tensors)
    except Exception as exc:
        raise CheckpointError(f"{path}: state does not fit network: {exc}") from exc
    return data


_INT_META = {"latent_dim", "img_size", "img_channels", "base_ch", "num_classes", "level"}


def _typed_meta(meta):
    out = {}
    for k, v in meta.items():
        out[k] = int(v) if k in _INT_META else v
    return out


def rebuild_network(data: CheckpointData, dtype=np.float32):
    """Reconstruct the network a checkpoint describes and load its state."""
    meta = _typed_meta(data.meta)
    if data.kind == "dcgan_generator":
        net = networks.build_dcgan_generator(
            meta["latent_dim"], meta["img_size"], meta["img_channels"], meta["base_ch"], dtype=dtype)
    elif data.kind == "discriminator":
        net = networks.build_discriminator(
            meta["img_size"], meta["img_channels"], meta["base_ch"], meta["head"], dtype=dtype)
    elif data.kind == "classifier":
        net = networks.build_classifier(
            meta["num_classes"], meta["img_size"], meta["img_channels"], meta["base_ch"], dtype=dtype)
    elif data.kind == "encoder":
        net = networks.build_encoder(meta["level"], meta["img_channels"], meta["base_ch"], dtype=dtype)
    elif data.kind == "decoder":
        net = networks.build_decoder(meta["level"], meta["img_channels"], meta["base_ch"], dtype=dtype)
    else:
        raise CheckpointError(f"no builder registered for kind {data.kind!r}")
    networks.load_state_arrays(net, data.tensors)
    return net


def load_network(path, expect_kind=None):
    data = load_checkpoint(path)
    if expect_kind is not None and data.kind != expect_kind:
        raise CheckpointError(f"{path}: kind tag {data.kind!r} does not match requested {expect_kind!r}")
    return rebuild_network(data), data
