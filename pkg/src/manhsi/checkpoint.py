"""MANW checkpoint container.

Layout: magic ``4D 41 4E 57`` ("MANW"), format version u16 LE, entry
count u32 LE, then per entry: name length u16 LE + UTF-8 name, ndim u8,
extents u32 LE each, payload float32 LE row-major. A UTF-8 key=value
text block with a u32 LE length prefix follows the entries (the model
configuration plus any extra state such as training counters).
"""

from __future__ import annotations

import struct
from typing import Mapping

import numpy as np

from .errors import FormatError
from .network import ManConfig, ManParams, init_man
from .tensor import Tensor

MAGIC = b"MANW"
VERSION = 1

_MAX_NDIM = 8
_MAX_EXTENT = 1 << 31


def save_manw(path, tensors: Mapping[str, "Tensor | np.ndarray"], text: str = "") -> None:
    """Write named float32 tensors plus a trailing text block."""
    entries = []
    for name, t in tensors.items():
        arr = np.ascontiguousarray(np.asarray(getattr(t, "data", t), dtype="<f4"))
        nb = name.encode("utf-8")
        if len(nb) > 0xFFFF:
            raise FormatError(f"tensor name too long: {name[:32]}...")
        if arr.ndim > _MAX_NDIM:
            raise FormatError(f"tensor {name!r} has too many axes ({arr.ndim})")
        entries.append((nb, arr))
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<HI", VERSION, len(entries))
    for nb, arr in entries:
        blob += struct.pack("<H", len(nb)) + nb
        blob += struct.pack("<B", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.tobytes()
    tb = text.encode("utf-8")
    blob += struct.pack("<I", len(tb)) + tb
    with open(path, "wb") as fh:
        fh.write(blob)


def load_manw(path) -> tuple[dict[str, np.ndarray], str]:
    """Read back tensors (float32) and the text block, validating layout."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    pos = 4
    try:
        version, count = struct.unpack_from("<HI", blob, pos)
        pos += 6
        if version != VERSION:
            raise FormatError(f"unsupported format version {version}")
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            if ndim > _MAX_NDIM:
                raise FormatError(f"tensor {name!r}: ndim {ndim} out of range")
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            n = 1
            for e in shape:
                if e == 0 or e > _MAX_EXTENT:
                    raise FormatError(f"tensor {name!r}: extent {e} out of range")
                n *= e
            nbytes = 4 * n
            if pos + nbytes > len(blob):
                raise FormatError(f"tensor {name!r}: truncated payload")
            arr = np.frombuffer(blob, dtype="<f4", count=n, offset=pos).reshape(shape)
            tensors[name] = arr.copy()
            pos += nbytes
        (tlen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        if pos + tlen > len(blob):
            raise FormatError("truncated text block")
        text = blob[pos:pos + tlen].decode("utf-8")
    except struct.error as e:
        raise FormatError(f"truncated file: {e}") from None
    return tensors, text


def save_model(path, params: ManParams, config: ManConfig,
               extra: Mapping[str, str] | None = None,
               extra_tensors: Mapping[str, np.ndarray] | None = None) -> None:
    """Persist a model (weights + config text); ``extra``/``extra_tensors``
    carry optimizer or training state for resumable checkpoints."""
    tensors: dict[str, np.ndarray] = {n: t.data for n, t in params.named()}
    if extra_tensors:
        for name, arr in extra_tensors.items():
            if name in tensors:
                raise FormatError(f"extra tensor name {name!r} collides with a weight")
            tensors[name] = np.asarray(arr)
    text = config.to_text()
    for k, v in (extra or {}).items():
        text += f"{k}={v}\n"
    save_manw(path, tensors, text)


def load_model(path, dtype=np.float32) -> tuple[ManParams, ManConfig, dict[str, str],
                                                dict[str, np.ndarray]]:
    """Rebuild a model from a MANW file.

    Returns (params, config, extra_text_keys, extra_tensors). Weight
    arrays are bound by name onto a freshly constructed parameter
    structure; unknown tensor names are returned in extra_tensors.
    """
    tensors, text = load_manw(path)
    config, extra = ManConfig.from_text(text)
    params = init_man(config, seed=0, dtype=dtype)
    leftovers = dict(tensors)
    for name, t in params.named():
        if name not in leftovers:
            raise FormatError(f"checkpoint is missing tensor {name!r}")
        arr = leftovers.pop(name)
        if arr.shape != t.shape:
            raise FormatError(f"tensor {name!r}: shape {arr.shape} != expected {t.shape}")
        t.data = arr.astype(dtype)
    return params, config, extra, leftovers
