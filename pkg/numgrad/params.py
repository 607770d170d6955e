from __future__ import annotations

import json
import logging
import pathlib
import zlib
from typing import Iterator

import numpy as np

from numgrad.blob import read_blob, write_blob
from numgrad.tensor import ConfigError, ShapeError, Tensor, default_dtype

"""
Named trainable parameters.

Each parameter is created on first use, from a generator seeded with
(store seed, crc32 of its dotted name), so the value never depends on
creation order. Scopes share the same storage under a dotted prefix.
"""

logger = logging.getLogger(__name__)

MANIFEST = "manifest.txt"


class ParamStore:

    __slots__ = ("seed", "dtype", "prefix", "_params")

    # helping mypy
    seed: int
    dtype: np.dtype
    prefix: str
    _params: dict[str, Tensor]

    def __init__(self, seed: int = 0, dtype=None) -> None:
        self.seed = seed
        self.dtype = np.dtype(dtype or default_dtype())
        self.prefix = ""
        self._params = {}

    def scope(self, name: str) -> ParamStore:
        child = ParamStore.__new__(ParamStore)
        child.seed = self.seed
        child.dtype = self.dtype
        child.prefix = self._full(name)
        child._params = self._params
        return child

    def _full(self, name: str) -> str:
        return f"{self.prefix}.{name}" if self.prefix else name

    def _init(self, full: str, shape: tuple[int, ...], init: str, fan: tuple[int, int] | None) -> np.ndarray:
        if init == "zeros":
            return np.zeros(shape, dtype=self.dtype)
        if init == "ones":
            return np.ones(shape, dtype=self.dtype)
        if init != "xavier":
            raise ConfigError(f"unknown init {init!r} for {full}")
        if fan is None:
            receptive = int(np.prod(shape[:-2])) if len(shape) > 2 else 1
            fan = (shape[-2] * receptive, shape[-1] * receptive) if len(shape) >= 2 else (shape[0], shape[0])
        bound = np.sqrt(6.0 / (fan[0] + fan[1]))
        rng = np.random.default_rng([self.seed, zlib.crc32(full.encode())])
        return rng.uniform(-bound, bound, size=shape).astype(self.dtype)

    def get(
        self,
        name: str,
        shape: tuple[int, ...],
        init: str = "xavier",
        fan: tuple[int, int] | None = None,
    ) -> Tensor:
        """Fetch a parameter, creating it on first use"""
        full = self._full(name)
        shape = tuple(int(s) for s in shape)
        p = self._params.get(full)
        if p is None:
            p = Tensor(self._init(full, shape, init, fan), requires_grad=True, dtype=self.dtype)
            self._params[full] = p
        elif p.shape != shape:
            raise ShapeError(f"param {full}", p.shape, shape, detail="stored shape differs")
        return p

    def weight(self, name: str, fan_in: int, fan_out: int) -> Tensor:
        return self.get(name, (fan_in, fan_out))

    def bias(self, name: str, size: int) -> Tensor:
        return self.get(name, (size,), init="zeros")

    def set(self, name: str, value: Tensor | np.ndarray) -> Tensor:
        """Replace a parameter. A Tensor is stored as given, so gradients can flow through it."""
        full = self._full(name)
        t = value if isinstance(value, Tensor) else Tensor(value, requires_grad=True, dtype=self.dtype)
        self._params[full] = t
        return t

    def __contains__(self, name: str) -> bool:
        return self._full(name) in self._params

    def items(self) -> Iterator[tuple[str, Tensor]]:
        """Parameters under this scope, in sorted name order"""
        lead = f"{self.prefix}." if self.prefix else ""
        for full in sorted(self._params):
            if full.startswith(lead):
                yield full, self._params[full]

    def __len__(self) -> int:
        return sum(1 for _ in self.items())

    def count(self) -> int:
        return sum(t.size for _, t in self.items())

    def zero_grad(self) -> None:
        for _, t in self.items():
            t.zero_grad()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.items()}

    # checkpoints

    def save(self, path: str | pathlib.Path, role: str, meta: dict | None = None) -> pathlib.Path:
        """
        Write every parameter as `<name>.bevt` plus `manifest.txt`.
        The manifest starts with a JSON meta line, then one `name<TAB>shape<TAB>role` line per parameter.
        """
        directory = pathlib.Path(path)
        directory.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps(dict(meta or {}, role=role, seed=self.seed), sort_keys=True)]
        for name, t in self.items():
            write_blob(directory / f"{name}.bevt", t.data)
            lines.append(f"{name}\t{'x'.join(str(s) for s in t.shape) or '-'}\t{role}")
        (directory / MANIFEST).write_text("\n".join(lines) + "\n")
        logger.info("saved %d parameters, %d values (%s) to %s", len(lines) - 1, self.count(), role, directory)
        return directory

    @staticmethod
    def read_manifest(path: str | pathlib.Path) -> tuple[dict, dict[str, tuple[tuple[int, ...], str]]]:
        text = (pathlib.Path(path) / MANIFEST).read_text()
        head, *rows = text.splitlines()
        meta = json.loads(head)
        entries: dict[str, tuple[tuple[int, ...], str]] = {}
        for row in rows:
            name, shape, role = row.split("\t")
            dims = () if shape == "-" else tuple(int(s) for s in shape.split("x"))
            entries[name] = (dims, role)
        return meta, entries

    @classmethod
    def load(cls, path: str | pathlib.Path, dtype=None) -> tuple[ParamStore, dict]:
        meta, entries = cls.read_manifest(path)
        store = cls(seed=int(meta.get("seed", 0)), dtype=dtype)
        for name, (shape, _) in entries.items():
            arr = read_blob(pathlib.Path(path) / f"{name}.bevt")
            if arr.shape != shape:
                raise ShapeError(f"checkpoint {name}", arr.shape, shape, detail="blob and manifest disagree")
            store.set(name, arr)
        logger.info("loaded %d parameters, %d values from %s", len(entries), store.count(), path)
        return store, meta

    def __repr__(self) -> str:
        where = self.prefix or "<root>"
        return f"ParamStore({where}, {len(self)} tensors, seed={self.seed})"
