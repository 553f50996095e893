"""Named parameter storage with deterministic initialization.

Each parameter's initial values are keyed by (store seed, parameter
name) through a SeedSequence, so two stores built with the same seed are
bit-identical regardless of thread or process, and creation order does
not matter.
"""

from __future__ import annotations

import hashlib

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor


def _name_key(name: str) -> list[int]:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def _truncated_normal(rng: np.random.Generator, shape: tuple[int, ...], std: float) -> np.ndarray:
    """Standard normal draws resampled until within two sigma, then scaled."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


class ParamStore:
    """Ordered name -> parameter tensor map with gradient slots."""

    def __init__(self, seed: int, dtype=np.float32):
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Tensor] = {}
        self._adam_m: dict[str, np.ndarray] = {}
        self._adam_v: dict[str, np.ndarray] = {}
        self.adam_steps = 0

    def create(self, name: str, shape: tuple[int, ...],
               init: str = "fan_in", fan_in: int | None = None,
               gain: float = 1.0) -> Tensor:
        """Create a parameter; init is one of fan_in | zeros | ones.

        ``gain`` scales the fan-in standard deviation (used by attention
        projections, whose scores would otherwise start too flat to pass
        gradients through the softmax).
        """
        if name in self._params:
            raise ShapeError(f"duplicate parameter name {name!r}")
        if init == "zeros":
            data = np.zeros(shape)
        elif init == "ones":
            data = np.ones(shape)
        elif init == "fan_in":
            if fan_in is None:
                if len(shape) == 4:       # conv kernels [kh, kw, cin, cout]
                    fan_in = shape[0] * shape[1] * shape[2]
                elif len(shape) == 2:     # dense [in, out]
                    fan_in = shape[0]
                else:
                    raise ShapeError(f"cannot infer fan_in for shape {shape}")
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence([self.seed & 0xFFFFFFFF, *_name_key(name)])))
            data = _truncated_normal(rng, tuple(shape), gain / np.sqrt(fan_in))
        else:
            raise ShapeError(f"unknown init {init!r}")
        t = Tensor(data.astype(self.dtype), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def group(self, prefix: str) -> dict[str, Tensor]:
        """Parameters under ``prefix.`` keyed by their remaining name."""
        cut = len(prefix) + 1
        return {k[cut:]: v for k, v in self._params.items() if k.startswith(prefix + ".")}

    @property
    def num_values(self) -> int:
        return sum(int(t.data.size) for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def checksum(self) -> str:
        """SHA-256 over all parameter bytes in insertion order."""
        h = hashlib.sha256()
        for name, t in self._params.items():
            h.update(name.encode("utf-8"))
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Overwrite parameter values; names and shapes must match exactly."""
        missing = set(self._params) - set(arrays)
        extra = set(arrays) - set(self._params)
        if missing or extra:
            raise ShapeError(
                f"parameter names disagree: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, arr in arrays.items():
            t = self._params[name]
            if tuple(arr.shape) != tuple(t.data.shape):
                raise ShapeError(
                    f"tensor {name!r} has shape {arr.shape}, expected {t.data.shape}")
            t.data = np.ascontiguousarray(arr, dtype=self.dtype)
