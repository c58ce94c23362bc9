"""Characteristics of ``x' = a(x)`` for smooth fields.

Integration is classical RK4 over a fixed base step. Every step is compared
with two half steps (Richardson estimate); points whose estimate exceeds the
tolerance are re-stepped with halved steps, independently of their
neighbours in the batch.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .fields import VectorField
from .grid import BoxDomain


class FlowError(RuntimeError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class StepControl:
    """``tolerance`` bounds the local error of one base step; shorter steps get a proportional share."""

    base_step: float = 0.01
    tolerance: float = 1e-10
    max_halvings: int = 30

    def __post_init__(self):
        if self.base_step <= 0 or self.tolerance <= 0:
            raise ValueError("base_step and tolerance must be positive")

    def tol_flow(self, duration: float) -> float:
        """Global error budget for a trajectory of the given duration."""
        return self.tolerance * max(1, math.ceil(abs(duration) / self.base_step - 1e-12))

    def to_dict(self) -> dict:
        return {"base_step": self.base_step, "tolerance": self.tolerance, "max_halvings": self.max_halvings}


def _require_smooth(field: VectorField) -> None:
    if not field.is_smooth:
        raise FlowError(f"field {field.name!r} is tagged rough; integrate a mollified approximation instead")


def _rk4(f, x, h, k1=None):
    if k1 is None:
        k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _advance(f, x, h, sc: StepControl, depth: int = 0):
    if len(x) == 0:
        return x
    k1 = f(x)
    full = _rk4(f, x, h, k1)
    mid = _rk4(f, x, 0.5 * h, k1)
    half = _rk4(f, mid, 0.5 * h)
    err = np.linalg.norm(half - full, axis=-1) / 15.0
    allowed = sc.tolerance * abs(h) / sc.base_step
    bad = ~(err <= allowed)
    if not bad.any():
        return half
    if depth >= sc.max_halvings:
        i = int(np.flatnonzero(bad)[0])
        raise FlowError(
            f"step underflow: error {err[i]:.3e} > {allowed:.3e} at step {h:.3e} from x = {x[i].tolist()}",
            state={"x": x[i].copy(), "step": h, "error": float(err[i])},
        )
    out = half
    xb = x[bad]
    xb = _advance(f, xb, 0.5 * h, sc, depth + 1)
    xb = _advance(f, xb, 0.5 * h, sc, depth + 1)
    out[bad] = xb
    return out


def _march(f, x, duration, sc: StepControl):
    if duration == 0:
        return x.copy()
    nsteps = max(1, math.ceil(abs(duration) / sc.base_step - 1e-12))
    h = duration / nsteps
    for _ in range(nsteps):
        x = _advance(f, x, h, sc)
    return x


def _as_points(field: VectorField, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x.reshape(-1, field.dim)
    return pts, single, x.shape


def integrate(field: VectorField, t0: float, x0, t1: float, step_control: Optional[StepControl] = None,
              horizon: Optional[float] = None) -> np.ndarray:
    """Return ``x(t1; t0, x0)``; ``x0`` may be one point or an array of points."""
    _require_smooth(field)
    sc = step_control or StepControl()
    if horizon is not None and abs(t1 - t0) > horizon + 1e-12:
        raise FlowError(f"|t1 - t0| = {abs(t1 - t0)} exceeds the horizon {horizon}")
    pts, single, shape = _as_points(field, x0)
    out = _march(field.eval, pts.copy(), float(t1) - float(t0), sc)
    return out[0] if single else out.reshape(shape)


def flow_checkpoints(field: VectorField, x0, durations: Sequence[float],
                     step_control: Optional[StepControl] = None) -> np.ndarray:
    """Positions ``x(d; 0, x0)`` for each signed duration ``d``, shape ``(len(durations), *x0.shape)``.

    Durations of one sign are reached by a single march; the system is
    autonomous so one trajectory serves every checkpoint.
    """
    _require_smooth(field)
    sc = step_control or StepControl()
    pts, single, shape = _as_points(field, x0)
    durations = [float(d) for d in durations]
    result = np.empty((len(durations),) + pts.shape)
    for sign in (1.0, -1.0):
        idx = sorted((i for i, d in enumerate(durations) if d * sign > 0), key=lambda i: abs(durations[i]))
        x, elapsed = pts.copy(), 0.0
        for i in idx:
            x = _march(field.eval, x, durations[i] - elapsed, sc)
            elapsed = durations[i]
            result[i] = x
    for i, d in enumerate(durations):
        if d == 0:
            result[i] = pts
    if single:
        return result[:, 0]
    return result.reshape((len(durations),) + shape)


def backward_map(field: VectorField, t: float, x, step_control: Optional[StepControl] = None) -> np.ndarray:
    """Source ``y(t, x) = x(0; t, x)`` of the characteristic through ``(t, x)``."""
    return integrate(field, t, x, 0.0, step_control)


def backward_map_times(field: VectorField, times: Sequence[float], x,
                       step_control: Optional[StepControl] = None) -> np.ndarray:
    return flow_checkpoints(field, x, [-float(t) for t in times], step_control)


@dataclass(frozen=True)
class FlowMap:
    field: VectorField
    horizon: float
    step_control: StepControl = StepControl()

    def __post_init__(self):
        _require_smooth(self.field)

    def __call__(self, t: float, x) -> np.ndarray:
        return self.backward_map(t, x)

    def backward_map(self, t: float, x) -> np.ndarray:
        if abs(t) > self.horizon + 1e-12:
            raise FlowError(f"t = {t} outside the horizon {self.horizon}")
        return backward_map(self.field, t, x, self.step_control)

    def tol_flow(self) -> float:
        return self.step_control.tol_flow(self.horizon)


# --------------------------------------------------------------------------
# checks

def displacement_excess(field: VectorField, t: float, x, step_control: Optional[StepControl] = None) -> float:
    """max(|y(t,x) - x| - N|t|) over the points; should not exceed tol_flow."""
    x = np.asarray(x, dtype=float)
    y = backward_map(field, t, x, step_control)
    return float(np.max(np.linalg.norm(y - x, axis=-1) - field.sup_norm * abs(t)))


def group_law_defect(field: VectorField, t: float, s: float, x, step_control: Optional[StepControl] = None) -> float:
    """max |y(t+s, x) - y(s, y(t, x))| over the points."""
    x = np.asarray(x, dtype=float)
    direct = backward_map(field, t + s, x, step_control)
    composed = backward_map(field, s, backward_map(field, t, x, step_control), step_control)
    return float(np.max(np.linalg.norm(direct - composed, axis=-1)))


def reversal_defect(field: VectorField, t: float, x, step_control: Optional[StepControl] = None) -> float:
    x = np.asarray(x, dtype=float)
    there = integrate(field, 0.0, x, t, step_control)
    back = integrate(field, t, there, 0.0, step_control)
    return float(np.max(np.linalg.norm(back - x, axis=-1)))


def jacobian_determinants(field: VectorField, t: float, x, h: float,
                          step_control: Optional[StepControl] = None) -> np.ndarray:
    """det of the central-difference Jacobian of ``x -> y(t, x)`` at each point."""
    x = np.asarray(x, dtype=float).reshape(-1, field.dim)
    n = field.dim
    offsets = np.concatenate([np.eye(n) * h, -np.eye(n) * h])
    stencil = (x[:, None, :] + offsets[None, :, :]).reshape(-1, n)
    y = backward_map(field, t, stencil, step_control).reshape(len(x), 2 * n, n)
    jac = (y[:, :n, :] - y[:, n:, :]) / (2.0 * h)  # jac[p, j, i] = d y_i / d x_j
    return np.linalg.det(jac)


@dataclass(frozen=True)
class MeasureReport:
    defect: float
    stencil: float
    volume_ratio: float
    volume_ratio_stderr: float
    n_samples: int


def measure_preservation_check(field: VectorField, t: float, region: BoxDomain, n_samples: int = 400,
                               step_control: Optional[StepControl] = None, stencil: Optional[float] = None,
                               mc_samples: int = 20000, seed: int = 0) -> MeasureReport:
    """Jacobian-determinant defect of ``y(t, .)`` on ``region`` plus a Monte-Carlo volume ratio.

    The ratio estimates ``m(y(t,.)^{-1}(A)) / m(A)`` with ``A = region``, by
    sampling the box ``A`` enlarged by ``N|t|``, which contains the preimage.
    """
    sc = step_control or StepControl()
    h = stencil if stencil is not None else max(1e-5, sc.base_step**2)
    rng = np.random.default_rng(seed)
    lo, hi = np.array(region.lower), np.array(region.upper)
    pts = lo + (hi - lo) * rng.random((n_samples, field.dim))
    det = jacobian_determinants(field, t, pts, h, sc)
    defect = float(np.max(np.abs(det - 1.0)))

    pad = field.sup_norm * abs(t) + 1e-9
    blo, bhi = lo - pad, hi + pad
    samples = blo + (bhi - blo) * rng.random((mc_samples, field.dim))
    feet = backward_map(field, t, samples, sc)
    hit = np.all((feet >= lo) & (feet <= hi), axis=-1)
    frac = hit.mean()
    scale = float(np.prod(bhi - blo) / np.prod(hi - lo))
    ratio = frac * scale
    stderr = math.sqrt(max(frac * (1 - frac), 0.0) / mc_samples) * scale
    return MeasureReport(defect, h, float(ratio), stderr, n_samples)


# --------------------------------------------------------------------------
# trajectory output

def trajectory(field: VectorField, x0, t1: float, report_every: float,
               step_control: Optional[StepControl] = None) -> tuple[np.ndarray, np.ndarray]:
    n = max(1, math.ceil(abs(t1) / report_every - 1e-12))
    times = np.linspace(0.0, t1, n + 1)
    states = flow_checkpoints(field, np.asarray(x0, dtype=float), times, step_control)
    return times, states


def write_trajectory_csv(path, times, states) -> None:
    states = np.asarray(states)
    n = states.shape[-1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)])
        for t, x in zip(times, states.reshape(len(times), -1, n)):
            for p in x:
                w.writerow([format(float(t), ".17g")] + [format(float(c), ".17g") for c in p])
