"""Named parameter collections, Adam, and checkpoint files."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractError, DimensionError
from .tensor import Tensor

CHECKPOINT_VERSION = 1


class ParamStore:
    """Name -> Tensor map; iteration is always in sorted-name order."""

    def __init__(self, items: dict | None = None):
        self._items: dict[str, Tensor] = {}
        for name, value in (items or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> Tensor:
        if name in self._items:
            raise ContractError(f"duplicate parameter name {name!r}")
        t = Tensor(value.data if isinstance(value, Tensor) else value, requires_grad=True)
        self._items[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._items[name]

    def __contains__(self, name: str) -> bool:
        return name in self._items

    def __len__(self) -> int:
        return len(self._items)

    def names(self) -> list[str]:
        return sorted(self._items)

    def items(self):
        return [(n, self._items[n]) for n in self.names()]

    def subset(self, prefix: str) -> "ParamStore":
        """A view sharing tensors whose names start with ``prefix``."""
        view = ParamStore()
        view._items = {n: t for n, t in self._items.items() if n.startswith(prefix)}
        return view

    def merge(self, other: "ParamStore") -> "ParamStore":
        view = ParamStore()
        view._items = {**self._items, **other._items}
        if len(view._items) != len(self) + len(other):
            raise ContractError("parameter stores overlap")
        return view

    def zero_grad(self) -> None:
        for t in self._items.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        """Current gradients, zeros for parameters the last backward did not reach."""
        return {
            n: (np.zeros_like(t.data) if t.grad is None else t.grad)
            for n, t in self.items()
        }

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for n, t in self._items.items():
            if arrays[n].shape != t.shape:
                raise DimensionError(f"{n}: shape {arrays[n].shape} != {t.shape}")
            t.data = np.array(arrays[n], dtype=np.float64)

    def copy(self) -> "ParamStore":
        return ParamStore({n: t.data.copy() for n, t in self.items()})


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: ParamStore, grads: dict, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place."""
    if lr <= 0:
        raise ContractError("learning rate must be positive")
    for name, p in params.items():
        if name not in grads:
            raise ContractError(f"missing gradient for parameter {name!r}")
        if grads[name].shape != p.shape:
            raise DimensionError(f"{name}: gradient shape {grads[name].shape} != {p.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name, np.zeros_like(p.data))
        v = state.v.get(name, np.zeros_like(p.data))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def save_checkpoint(path, params: ParamStore) -> None:
    """Write a one-line JSON manifest followed by a little-endian float32 blob."""
    entries, offset, blobs = [], 0, []
    for name, t in params.items():
        raw = np.ascontiguousarray(t.data, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(t.shape), "offset": offset})
        offset += len(raw)
        blobs.append(raw)
    manifest = {"format_version": CHECKPOINT_VERSION, "params": entries}
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest).encode("utf-8") + b"\n")
        fh.write(b"".join(blobs))


def load_checkpoint(path) -> ParamStore:
    data = Path(path).read_bytes()
    head, _, blob = data.partition(b"\n")
    manifest = json.loads(head.decode("utf-8"))
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise ContractError(f"unsupported checkpoint version {manifest.get('format_version')}")
    store = ParamStore()
    for e in manifest["params"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=e["offset"])
        store.add(e["name"], arr.astype(np.float64).reshape(e["shape"]))
    return store
