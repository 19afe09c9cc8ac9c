"""Typed search spaces and their encoding onto the unit hypercube.

All models in this package operate on encoded vectors in ``[0, 1]^D``:
continuous and integer dimensions are scaled affinely (integers by grid
index), categorical dimensions are one-hot expanded. Proposals on discrete
dimensions are snapped back to the nearest grid point before evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .validation import check_rng

BOX_EPSILON = 1e-6  # expansion applied to degenerate bounding-box dimensions


@dataclass(frozen=True)
class Continuous:
    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError("continuous bounds must be finite")
        if not self.lo < self.hi:
            raise ValueError(f"continuous dimension needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def encoded_width(self) -> int:
        return 1


@dataclass(frozen=True)
class Integer:
    """Integer dimension over an explicit grid of attainable levels.

    Defaults to the consecutive range ``lo..hi``; pass ``levels`` for
    non-uniform grids (e.g. power-of-two widths). Encoding is by grid
    index scaled to [0, 1], so non-uniform grids stay evenly spaced in
    the encoded space.
    """

    lo: int
    hi: int
    levels: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"integer dimension needs lo <= hi, got [{self.lo}, {self.hi}]")
        if self.levels:
            lv = tuple(int(v) for v in self.levels)
            if sorted(set(lv)) != list(lv):
                raise ValueError("levels must be strictly increasing")
            if lv[0] != self.lo or lv[-1] != self.hi:
                raise ValueError("levels must span [lo, hi]")
            object.__setattr__(self, "levels", lv)
        else:
            object.__setattr__(self, "levels", tuple(range(self.lo, self.hi + 1)))

    @classmethod
    def from_levels(cls, levels: Sequence[int]) -> "Integer":
        lv = tuple(int(v) for v in levels)
        return cls(lv[0], lv[-1], lv)

    @property
    def encoded_width(self) -> int:
        return 1


@dataclass(frozen=True)
class Categorical:
    n_choices: int

    def __post_init__(self):
        if self.n_choices < 2:
            raise ValueError("categorical dimension needs at least 2 choices")

    @property
    def encoded_width(self) -> int:
        return self.n_choices


Dimension = Union[Continuous, Integer, Categorical]


class SearchSpace:
    """Ordered collection of dimensions with unit-cube encoding."""

    def __init__(self, dims: Sequence[Dimension]):
        if not dims:
            raise ValueError("search space needs at least one dimension")
        self.dims: tuple[Dimension, ...] = tuple(dims)
        self.encoded_dim: int = sum(d.encoded_width for d in self.dims)
        # start offset of each dimension's block in the encoded vector
        self._offsets: list[int] = list(
            np.cumsum([0] + [d.encoded_width for d in self.dims[:-1]]).astype(int)
        )

    def __len__(self) -> int:
        return len(self.dims)

    def __repr__(self) -> str:
        return f"SearchSpace({list(self.dims)!r})"

    def encode(self, raw: Sequence) -> np.ndarray:
        """Encode a native point; categorical values are category indices."""
        if len(raw) != len(self.dims):
            raise ValueError(f"point has {len(raw)} values, space has {len(self.dims)} dims")
        out = np.zeros(self.encoded_dim)
        for value, dim, off in zip(raw, self.dims, self._offsets):
            if isinstance(dim, Continuous):
                v = float(value)
                if not dim.lo <= v <= dim.hi:
                    raise ValueError(f"value {v} outside [{dim.lo}, {dim.hi}]")
                out[off] = (v - dim.lo) / (dim.hi - dim.lo)
            elif isinstance(dim, Integer):
                v = int(value)
                try:
                    idx = dim.levels.index(v)
                except ValueError:
                    raise ValueError(f"value {v} is not a grid level of {dim}") from None
                out[off] = idx / (len(dim.levels) - 1) if len(dim.levels) > 1 else 0.0
            else:
                idx = int(value)
                if not 0 <= idx < dim.n_choices:
                    raise ValueError(f"category index {idx} outside [0, {dim.n_choices})")
                out[off + idx] = 1.0
        return out

    def decode(self, encoded: Sequence[float]) -> list:
        """Invert :meth:`encode`, snapping discrete dimensions to their grid."""
        enc = np.asarray(encoded, dtype=np.float64)
        if enc.shape != (self.encoded_dim,):
            raise ValueError(f"encoded point has shape {enc.shape}, expected ({self.encoded_dim},)")
        out: list = []
        for dim, off in zip(self.dims, self._offsets):
            if isinstance(dim, Continuous):
                u = min(max(float(enc[off]), 0.0), 1.0)
                out.append(dim.lo + u * (dim.hi - dim.lo))
            elif isinstance(dim, Integer):
                u = min(max(float(enc[off]), 0.0), 1.0)
                # nearest index; exact midpoints resolve to the lower index
                idx = int(np.ceil(u * (len(dim.levels) - 1) - 0.5))
                out.append(dim.levels[max(idx, 0)])
            else:
                block = enc[off : off + dim.n_choices]
                out.append(int(np.argmax(block)))
        return out

    def snap(self, encoded: np.ndarray) -> np.ndarray:
        """Project encoded coordinates onto the nearest valid grid point.

        Continuous blocks are clipped to [0, 1]; integer blocks snap to the
        nearest level index; categorical blocks become the one-hot of their
        argmax (ties resolved to the lowest index by argmax).
        """
        enc = np.clip(np.asarray(encoded, dtype=np.float64), 0.0, 1.0)
        out = enc.copy()
        for dim, off in zip(self.dims, self._offsets):
            if isinstance(dim, Integer):
                n = len(dim.levels)
                idx = np.maximum(np.ceil(out[..., off] * (n - 1) - 0.5), 0.0)
                out[..., off] = idx / (n - 1) if n > 1 else 0.0
            elif isinstance(dim, Categorical):
                block = out[..., off : off + dim.n_choices]
                idx = np.argmax(block, axis=-1)
                block[...] = 0.0
                np.put_along_axis(block, idx[..., None], 1.0, axis=-1)
        return out

    def sample_encoded(self, rng, n: int = 1) -> np.ndarray:
        """Draw ``n`` uniform encoded points, snapped to discrete grids."""
        rng = check_rng(rng)
        pts = np.empty((n, self.encoded_dim))
        for dim, off in zip(self.dims, self._offsets):
            if isinstance(dim, Continuous):
                pts[:, off] = rng.uniform(size=n)
            elif isinstance(dim, Integer):
                k = len(dim.levels)
                idx = rng.integers(0, k, size=n)
                pts[:, off] = idx / (k - 1) if k > 1 else 0.0
            else:
                block = np.zeros((n, dim.n_choices))
                block[np.arange(n), rng.integers(0, dim.n_choices, size=n)] = 1.0
                pts[:, off : off + dim.n_choices] = block
        return pts

    # -- descriptor (de)serialisation -------------------------------------

    def to_descriptor(self) -> dict:
        dims = []
        for d in self.dims:
            if isinstance(d, Continuous):
                dims.append({"kind": "continuous", "lo": d.lo, "hi": d.hi})
            elif isinstance(d, Integer):
                entry: dict = {"kind": "integer", "lo": d.lo, "hi": d.hi}
                if d.levels != tuple(range(d.lo, d.hi + 1)):
                    entry["levels"] = list(d.levels)
                dims.append(entry)
            else:
                dims.append({"kind": "categorical", "n_choices": d.n_choices})
        return {"dims": dims}

    @classmethod
    def from_descriptor(cls, desc: dict) -> "SearchSpace":
        dims: list[Dimension] = []
        for i, entry in enumerate(desc.get("dims", [])):
            kind = entry.get("kind")
            if kind == "continuous":
                dims.append(Continuous(float(entry["lo"]), float(entry["hi"])))
            elif kind == "integer":
                levels = tuple(int(v) for v in entry.get("levels", ()))
                dims.append(Integer(int(entry["lo"]), int(entry["hi"]), levels))
            elif kind == "categorical":
                dims.append(Categorical(int(entry["n_choices"])))
            else:
                raise ValueError(f"dimension {i}: unknown kind {kind!r}")
        return cls(dims)

    @classmethod
    def from_json(cls, path) -> "SearchSpace":
        with open(path) as fh:
            return cls.from_descriptor(json.load(fh))


def unit_space(n_dims: int) -> SearchSpace:
    """Convenience: an all-continuous space that is its own encoding."""
    return SearchSpace([Continuous(0.0, 1.0) for _ in range(n_dims)])
