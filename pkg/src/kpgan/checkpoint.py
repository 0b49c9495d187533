"""Checkpoint archive: one file, bit-exact round-trips.

Layout: an 8-byte magic, an 8-byte little-endian header length, a canonical
JSON header (sorted keys, no whitespace), then raw tensor bytes. The header
holds a free-form manifest plus a tensor index mapping each name to dtype,
shape and payload offset. Tensors are written in sorted-name order and
little-endian, so save -> load -> save reproduces identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

MAGIC = b"KPCKPT01"

_DTYPES = {
    "float32": ("<f4", torch.float32),
    "float64": ("<f8", torch.float64),
    "int64": ("<i8", torch.int64),
    "int32": ("<i4", torch.int32),
    "uint8": ("|u1", torch.uint8),
    "bool": ("|b1", torch.bool),
}
_TORCH_NAMES = {t: name for name, (_, t) in _DTYPES.items()}


def save_checkpoint(path, manifest: dict, tensors: dict[str, torch.Tensor]) -> None:
    index = {}
    blobs = []
    offset = 0
    for name in sorted(tensors):
        t = tensors[name].detach().cpu().contiguous()
        if t.dtype not in _TORCH_NAMES:
            raise TypeError(f"tensor {name!r} has unsupported dtype {t.dtype}")
        dtype_name = _TORCH_NAMES[t.dtype]
        np_dtype = _DTYPES[dtype_name][0]
        blob = t.numpy().astype(np_dtype, copy=False).tobytes()
        index[name] = {
            "dtype": dtype_name,
            "shape": list(t.shape),
            "offset": offset,
            "nbytes": len(blob),
        }
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {"manifest": manifest, "tensors": index},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    tmp.replace(path)


def load_checkpoint(path) -> tuple[dict, dict[str, torch.Tensor]]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path} is not a checkpoint archive (magic {magic!r})")
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        payload = fh.read()
    tensors = {}
    for name, meta in header["tensors"].items():
        np_dtype, torch_dtype = _DTYPES[meta["dtype"]]
        raw = payload[meta["offset"] : meta["offset"] + meta["nbytes"]]
        arr = np.frombuffer(raw, dtype=np_dtype).reshape(meta["shape"]).copy()
        tensors[name] = torch.from_numpy(arr).to(torch_dtype)
    return header["manifest"], tensors
