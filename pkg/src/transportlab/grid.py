"""Uniform box grids and scalar grid functions.

Nodes sit at cell centres, so a sum of nodal values times the cell volume is
the composite midpoint rule over the box.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class BoxDomain:
    lower: tuple
    upper: tuple
    shape: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        shape = tuple(int(v) for v in self.shape)
        if not (len(lower) == len(upper) == len(shape)):
            raise ValueError("lower, upper and shape must have the same length")
        if any(hi <= lo for lo, hi in zip(lower, upper)):
            raise ValueError(f"empty box: lower={lower}, upper={upper}")
        if any(s < 1 for s in shape):
            raise ValueError(f"grid shape must be positive, got {shape}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def cube(cls, half_width: float, n: int, dim: int = 2) -> "BoxDomain":
        return cls((-half_width,) * dim, (half_width,) * dim, (n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / np.array(self.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(np.array(self.upper) - np.array(self.lower)))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def axes(self) -> list[np.ndarray]:
        h = self.spacing
        return [lo + (np.arange(n) + 0.5) * dx for lo, n, dx in zip(self.lower, self.shape, h)]

    @cached_property
    def _nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        pts.setflags(write=False)
        return pts

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (size, dim), row-major (C) order."""
        return self._nodes

    def contains(self, points: np.ndarray, pad: float = 0.0) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        lo = np.array(self.lower) - pad
        hi = np.array(self.upper) + pad
        return np.all((points >= lo) & (points <= hi), axis=-1)

    def refined(self, factor: int = 2) -> "BoxDomain":
        return BoxDomain(self.lower, self.upper, tuple(s * factor for s in self.shape))

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper), "grid_shape": list(self.shape)}


@dataclass
class GridFunction:
    domain: BoxDomain
    time: float
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size != self.domain.size:
            raise ValueError(f"expected {self.domain.size} values, got {values.size}")
        values = values.reshape(self.domain.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function values must be finite")
        self.values = values
        self.time = float(self.time)

    @classmethod
    def from_callable(cls, domain: BoxDomain, func, time: float = 0.0) -> "GridFunction":
        return cls(domain, time, np.asarray(func(domain.nodes()), dtype=float))

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def integral(self) -> float:
        return float(np.sum(self.values) * self.domain.cell_volume)

    def apply(self, g) -> "GridFunction":
        return GridFunction(self.domain, self.time, g(self.values), dict(self.meta))

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _same_domain(self, other)
        return GridFunction(self.domain, self.time, self.values - other.values)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _same_domain(self, other)
        return GridFunction(self.domain, self.time, self.values + other.values)

    def __mul__(self, scale: float) -> "GridFunction":
        return GridFunction(self.domain, self.time, self.values * scale)

    __rmul__ = __mul__


def _same_domain(u: GridFunction, v: GridFunction) -> None:
    if u.domain != v.domain:
        raise ValueError("grid functions live on different domains")
