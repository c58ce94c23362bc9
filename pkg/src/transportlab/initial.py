"""Callable initial data with known support (and gradients where cheap)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import smooth_step


def _radius(points, center):
    d = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    return np.linalg.norm(d, axis=-1), d


@dataclass(frozen=True)
class RadialBump:
    """``amplitude * exp(1 - 1/(1 - (r/radius)^2))``: peak ``amplitude``, C-infinity, compact support."""

    center: tuple
    radius: float
    amplitude: float = 1.0

    def __call__(self, points):
        r, _ = _radius(points, self.center)
        q = (r / self.radius) ** 2
        out = np.zeros_like(q)
        inside = q < 1.0
        out[inside] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - q[inside]))
        return out

    def gradient(self, points):
        r, d = _radius(points, self.center)
        q = (r / self.radius) ** 2
        out = np.zeros_like(d)
        inside = q < 1.0
        qi = q[inside]
        # d/dx exp(1 - 1/(1-q)) = value * (-1/(1-q)^2) * 2 d / radius^2
        fac = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - qi)) * (-2.0 / (1.0 - qi) ** 2) / self.radius**2
        out[inside] = fac[:, None] * d[inside]
        return out

    def grad_sup(self) -> float:
        # radial profile maximum of |d/dr|, found on a fine grid of r/radius
        s = np.linspace(0.0, 1.0, 200001)[:-1]
        q = s**2
        dv = np.exp(1.0 - 1.0 / (1.0 - q)) * 2.0 * s / (1.0 - q) ** 2
        return float(abs(self.amplitude) * dv.max() / self.radius)

    def support_box(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius

    @property
    def sup_abs(self) -> float:
        return abs(float(self.amplitude))

    @property
    def support_radius(self) -> float:
        return float(self.radius)

    def to_dict(self) -> dict:
        return {"kind": "bump", "center": list(self.center), "radius": self.radius, "amplitude": self.amplitude}


@dataclass(frozen=True)
class Plateau:
    """Equal to ``amplitude`` on ``r <= inner``, smooth decay to zero at ``r = outer``."""

    center: tuple
    inner: float
    outer: float
    amplitude: float = 1.0

    def __call__(self, points):
        r, _ = _radius(points, self.center)
        return self.amplitude * smooth_step((self.outer - r) / (self.outer - self.inner))

    def support_box(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.outer, c + self.outer

    @property
    def sup_abs(self) -> float:
        return abs(float(self.amplitude))

    @property
    def support_radius(self) -> float:
        return float(self.outer)

    def to_dict(self) -> dict:
        return {"kind": "plateau", "center": list(self.center), "inner": self.inner,
                "outer": self.outer, "amplitude": self.amplitude}


@dataclass(frozen=True)
class BallIndicator:
    center: tuple
    radius: float
    amplitude: float = 1.0

    def __call__(self, points):
        r, _ = _radius(points, self.center)
        return np.where(r < self.radius, self.amplitude, 0.0)

    def support_box(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius

    @property
    def sup_abs(self) -> float:
        return abs(float(self.amplitude))

    @property
    def support_radius(self) -> float:
        return float(self.radius)

    def to_dict(self) -> dict:
        return {"kind": "indicator", "center": list(self.center), "radius": self.radius,
                "amplitude": self.amplitude}


INITIAL_KINDS = {"bump": RadialBump, "plateau": Plateau, "indicator": BallIndicator}


def initial_from_spec(spec: dict):
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind not in INITIAL_KINDS:
        raise ValueError(f"unknown initial datum kind {kind!r}")
    spec["center"] = tuple(spec["center"])
    return INITIAL_KINDS[kind](**spec)
