"""Named parameter collections and checkpoint files."""

from __future__ import annotations

import json
import os

import numpy as np

from .tensor import Tensor

CHECKPOINT_VERSION = 1


class ParameterSet:
    """Insertion-ordered map of path-like names to leaf tensors."""

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self._params = {}

    def add(self, name, value):
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def names(self):
        return list(self._params)

    def group(self, prefix):
        """Sub-view of parameters under ``prefix/``, keyed by the remaining path."""
        cut = len(prefix) + 1
        return {k[cut:]: v for k, v in self._params.items() if k.startswith(prefix + "/")}

    def state_dict(self):
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state_dict(self, state, strict=True):
        missing = [k for k in self._params if k not in state]
        extra = [k for k in state if k not in self._params]
        if strict and (missing or extra):
            raise KeyError(f"parameter mismatch: missing={missing} unexpected={extra}")
        for k, arr in state.items():
            if k not in self._params:
                continue
            p = self._params[k]
            if p.data.shape != arr.shape:
                raise ValueError(f"shape mismatch for {k}: checkpoint {arr.shape}, model {p.data.shape}")
            p.data = np.array(arr, dtype=self.dtype)

    def count(self):
        return int(sum(p.data.size for p in self._params.values()))


def glorot(rng, shape, dtype=np.float64):
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def save_checkpoint(path, arrays, meta=None):
    """Write ``arrays`` (name -> ndarray) plus JSON ``meta`` to an ``.npz`` file.

    Values are stored raw, so a load returns bit-identical arrays.
    """
    meta = dict(meta or {})
    meta["format_version"] = CHECKPOINT_VERSION
    payload = {"__meta__": np.array(json.dumps(meta, sort_keys=True))}
    for name, arr in arrays.items():
        if name.startswith("__"):
            raise ValueError(f"reserved array name {name!r}")
        payload[name] = np.ascontiguousarray(arr)
    tmp = f"{path}.tmp.npz"
    with open(tmp, "wb") as fh:
        np.savez(fh, **payload)
    os.replace(tmp, path)


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(arrays, meta)``."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        version = meta.get("format_version")
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version!r} in {path}")
        arrays = {k: z[k].copy() for k in z.files if k != "__meta__"}
    return arrays, meta
