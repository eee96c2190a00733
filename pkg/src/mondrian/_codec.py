"""Lossless, deterministic array encoding for JSON snapshots."""

import base64

import numpy as np


def encode_array(a) -> dict:
    a = np.ascontiguousarray(a)
    dtype = a.dtype.newbyteorder("<")
    return {
        "dtype": dtype.str,
        "shape": list(a.shape),
        "data": base64.b64encode(a.astype(dtype, copy=False).tobytes()).decode("ascii"),
    }


def decode_array(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    a = np.frombuffer(raw, dtype=np.dtype(obj["dtype"])).reshape(obj["shape"])
    return a.astype(a.dtype.newbyteorder("="))


def float_to_json(x: float):
    """JSON has no infinity; encode non-finite floats as strings."""
    x = float(x)
    return x if np.isfinite(x) else repr(x)


def float_from_json(v) -> float:
    return float(v)
