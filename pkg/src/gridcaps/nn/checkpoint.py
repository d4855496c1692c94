"""Model checkpoint container.

Layout: magic ``GCKP``, u16 version, u32 header length, UTF-8 JSON
header (sorted keys), then the raw float32 little-endian parameter
blocks in header order. Same parameters -> same bytes.
"""

import json
import struct

import numpy as np

from ..errors import FormatError

MAGIC = b"GCKP"
VERSION = 1


def save_checkpoint(path, named_params, meta):
    """Write named float arrays plus a JSON metadata dict."""
    blocks = []
    payload = bytearray()
    for name, values in named_params:
        arr = np.ascontiguousarray(np.asarray(values), dtype="<f4")
        blocks.append({"name": name, "shape": list(arr.shape)})
        payload.extend(arr.tobytes())
    header = {"meta": meta, "blocks": blocks}
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(raw)))
        fh.write(raw)
        fh.write(bytes(payload))


def load_checkpoint(path):
    """Read back (named_params, meta); arrays come out float32."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 10 or data[:4] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    end = 10 + hlen
    if end > len(data):
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(data[10:end].decode())
        blocks = header["blocks"]
        meta = header["meta"]
    except (ValueError, KeyError) as exc:
        raise FormatError(f"{path}: corrupt header ({exc})") from None
    out = []
    offset = end
    for block in blocks:
        shape = tuple(int(s) for s in block["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        if offset + nbytes > len(data):
            raise FormatError(f"{path}: truncated block {block['name']!r}")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape)
        out.append((block["name"], arr.copy()))
        offset += nbytes
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes")
    return out, meta
