"""Named parameter storage and the manifest + blob checkpoint format."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterator

import numpy as np

from .tensor import Tensor, default_dtype

MANIFEST = "manifest.txt"
BLOB = "params.bin"


class CheckpointError(RuntimeError):
    pass


class ParamStore:
    """Mapping ``name -> Tensor`` iterated in lexicographic name order."""

    def __init__(self, seed: int = 0):
        self._params: dict[str, Tensor] = {}
        self.rng = np.random.default_rng(seed)

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name in self.names():
            yield name, self._params[name]

    def num_scalars(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already registered")
        t = Tensor(np.ascontiguousarray(value, dtype=np.float32), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def kaiming_uniform(self, name: str, fan_in: int, fan_out: int, gain: float = math.sqrt(2.0)) -> Tensor:
        """U(-b, b) with b = gain * sqrt(3 / fan_in); the default gain suits ReLU."""
        bound = gain * math.sqrt(3.0 / fan_in)
        w = self.rng.uniform(-bound, bound, size=(fan_in, fan_out))
        return self.add(name, w)

    def zeros(self, name: str, *shape: int) -> Tensor:
        return self.add(name, np.zeros(shape))

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def cast(self, dtype) -> None:
        """Cast every parameter in place (float64 for gradient checks)."""
        for p in self._params.values():
            p.data = p.data.astype(dtype)

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) ^ set(state)
        if missing:
            raise CheckpointError(f"parameter names differ: {sorted(missing)[:5]}")
        for name, p in self._params.items():
            value = state[name]
            if value.shape != p.shape:
                raise CheckpointError(f"{name}: checkpoint shape {value.shape} != model shape {p.shape}")
            p.data = np.array(value, dtype=p.dtype)

    def save(self, directory: str | Path) -> Path:
        return save_checkpoint(self.state(), directory)

    def load(self, directory: str | Path) -> None:
        self.load_state(load_checkpoint(directory))


def save_checkpoint(state: dict[str, np.ndarray], directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    chunks = []
    for name in sorted(state):
        if any(c.isspace() for c in name):
            raise CheckpointError(f"parameter name {name!r} contains whitespace")
        arr = np.asarray(state[name])
        lines.append(" ".join([name, *map(str, arr.shape)]))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    (directory / MANIFEST).write_text("\n".join(lines) + "\n", encoding="utf-8")
    (directory / BLOB).write_bytes(b"".join(chunks))
    return directory


def load_checkpoint(directory: str | Path) -> dict[str, np.ndarray]:
    directory = Path(directory)
    try:
        manifest = (directory / MANIFEST).read_text(encoding="utf-8")
        blob = (directory / BLOB).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint at {directory}: {exc}") from None
    state: dict[str, np.ndarray] = {}
    offset = 0
    for lineno, line in enumerate(manifest.splitlines(), 1):
        if not line.strip():
            continue
        name, *dims = line.split()
        try:
            shape = tuple(int(d) for d in dims)
        except ValueError:
            raise CheckpointError(f"manifest line {lineno}: bad shape {dims}") from None
        nbytes = 4 * math.prod(shape)
        if offset + nbytes > len(blob):
            raise CheckpointError(f"blob truncated at byte {len(blob)} while reading {name}")
        arr = np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=offset).reshape(shape)
        state[name] = arr.astype(np.float32)
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"blob has {len(blob) - offset} trailing bytes")
    return state


def constant(x) -> Tensor:
    """Non-trainable tensor in the current default precision."""
    return Tensor(np.asarray(x, dtype=default_dtype()))
