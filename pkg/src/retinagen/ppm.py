"""Binary portable pixmap codec: P6 (RGB) for color fundus shots, P5 for gray.

Pixels map u8 v -> float 2*(v/255) - 1 on load; saving inverts with a
round-half-up clamp, so load/save round trips written files bit for bit.
Headers may carry '#' comment lines; maxval must be 255 and either
dimension is capped at 1024. Writers emit the canonical header
"P6\\n<w> <h>\\n255\\n".
"""

from __future__ import annotations

import os

import numpy as np

from .errors import FormatError

MAX_DIM = 1024


def _fail(path, offset, why):
    raise FormatError(f"{path}: {why} (byte offset {offset})")


def _read_token(buf, pos, path):
    """Next whitespace-delimited header token, skipping '#' comments."""
    n = len(buf)
    while pos < n:
        ch = buf[pos:pos + 1]
        if ch == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        _fail(path, pos, "truncated header")
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    return buf[start:pos], pos


def _int_token(buf, pos, path, what):
    tok, pos = _read_token(buf, pos, path)
    try:
        return int(tok), pos
    except ValueError:
        _fail(path, pos - len(tok), f"bad {what} {tok!r}")


def load_image(path):
    """Decode a P5/P6 file to a float32 (C, H, W) array in [-1, 1]."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 2:
        _fail(path, 0, "file too short for a magic number")
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        _fail(path, 0, f"bad magic {magic!r}, expected P5 or P6")
    channels = 1 if magic == b"P5" else 3
    pos = 2
    width, pos = _int_token(buf, pos, path, "width")
    height, pos = _int_token(buf, pos, path, "height")
    maxval, pos = _int_token(buf, pos, path, "maxval")
    if not (1 <= width <= MAX_DIM and 1 <= height <= MAX_DIM):
        _fail(path, pos, f"dimensions {width}x{height} outside 1..{MAX_DIM}")
    if maxval != 255:
        _fail(path, pos, f"maxval {maxval} unsupported, expected 255")
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        _fail(path, pos, "missing single whitespace after maxval")
    pos += 1
    need = width * height * channels
    payload = buf[pos:pos + need]
    if len(payload) < need:
        _fail(path, pos + len(payload), f"truncated payload, need {need} bytes")
    pix = np.frombuffer(payload, dtype=np.uint8).astype(np.float32)
    pix = pix.reshape(height, width, channels).transpose(2, 0, 1)
    return pix / 255.0 * 2.0 - 1.0


def save_image(tensor, path):
    """Encode a (C, H, W) array in [-1, 1] as P5 (C=1) or P6 (C=3)."""
    arr = np.asarray(tensor, dtype=np.float64)
    if hasattr(tensor, "data"):
        arr = np.asarray(tensor.data, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise FormatError(f"{path}: need (1|3, H, W) to encode, got shape {arr.shape}")
    c, h, w = arr.shape
    if h > MAX_DIM or w > MAX_DIM:
        raise FormatError(f"{path}: dimensions {w}x{h} exceed {MAX_DIM}")
    # round half up after the inverse pixel map, then clamp
    v = np.floor((np.clip(arr, -1.0, 1.0) + 1.0) / 2.0 * 255.0 + 0.5)
    v = np.clip(v, 0, 255).astype(np.uint8)
    magic = b"P5" if c == 1 else b"P6"
    header = magic + b"\n" + f"{w} {h}\n255\n".encode()
    body = v.transpose(1, 2, 0).tobytes()
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(body)
    os.replace(tmp, path)
