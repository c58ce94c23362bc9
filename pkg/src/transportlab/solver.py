"""Generalized solutions by transport along characteristics.

Smooth fields: ``u(t, x) = u0(y(t, x))`` at every node, each output time
traced directly from t = 0. Rough fields: the same construction for the
averaged coefficients ``a_nu`` over an increasing list of ``nu``; the finest
member stands in for the limit, and the Cauchy table certifies it.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .fields import MollifierKernel, VectorField, mollify
from .flow import StepControl, backward_map_times
from .grid import BoxDomain, GridFunction

InitialDatum = Union[GridFunction, Callable[[np.ndarray], np.ndarray]]


class SolverError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# norms

def lp_norm(u: GridFunction, p: float = 2.0) -> float:
    """Composite-midpoint L^p norm; ``p = inf`` gives the nodal max of |u|."""
    vals = np.abs(u.values)
    if np.isinf(p):
        return float(vals.max()) if vals.size else 0.0
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return float((np.sum(vals**p) * u.domain.cell_volume) ** (1.0 / p))


def lp_distance(u: GridFunction, v: GridFunction, p: float = 2.0) -> float:
    return lp_norm(u - v, p)


# --------------------------------------------------------------------------
# domain validation

def check_expansion(domain: BoxDomain, support_lo, support_hi, sup_norm: float, horizon: float) -> None:
    """Raise unless ``domain`` contains the support box enlarged by ``N * T``."""
    pad = sup_norm * horizon
    lo = np.asarray(support_lo, dtype=float) - pad
    hi = np.asarray(support_hi, dtype=float) + pad
    for i in range(domain.dim):
        if lo[i] < domain.lower[i] or hi[i] > domain.upper[i]:
            raise SolverError(
                f"axis {i}: support [{support_lo[i]:g}, {support_hi[i]:g}] expanded by N*T = {pad:g} "
                f"gives [{lo[i]:g}, {hi[i]:g}], not inside domain [{domain.lower[i]:g}, {domain.upper[i]:g}]")


def grid_support_box(u: GridFunction):
    nz = np.argwhere(u.values != 0)
    if nz.size == 0:
        c = np.array(u.domain.lower)
        return c, c
    h = u.domain.spacing
    lo = np.array(u.domain.lower) + nz.min(axis=0) * h
    hi = np.array(u.domain.lower) + (nz.max(axis=0) + 1) * h
    return lo, hi


# --------------------------------------------------------------------------
# evaluation of initial data

def interpolate(u0: GridFunction, points) -> np.ndarray:
    """Multilinear interpolation of nodal data; constant extension into the half-cell rim.

    Points outside the box are an error unless ``u0`` vanishes on the whole
    boundary layer of nodes, in which case they evaluate to zero.
    """
    dom = u0.domain
    pts = np.asarray(points, dtype=float).reshape(-1, dom.dim)
    axes = dom.axes
    inside = dom.contains(pts)
    if not inside.all():
        if not _vanishes_on_rim(u0):
            bad = pts[~inside][0]
            raise SolverError(f"backward foot {bad.tolist()} escapes the domain of the initial data")
    clamped = np.clip(pts, [a[0] for a in axes], [a[-1] for a in axes])
    if any(a.size == 1 for a in axes):
        raise SolverError("interpolation needs at least two nodes per axis")
    out = RegularGridInterpolator(tuple(axes), u0.values, method="linear")(clamped)
    out[~inside] = 0.0
    return out.reshape(np.shape(points)[:-1])


def _vanishes_on_rim(u: GridFunction) -> bool:
    v = u.values
    for ax in range(v.ndim):
        if np.any(np.take(v, 0, axis=ax) != 0) or np.any(np.take(v, -1, axis=ax) != 0):
            return False
    return True


def _evaluate_initial(u0: InitialDatum, points):
    if isinstance(u0, GridFunction):
        return interpolate(u0, points)
    return np.asarray(u0(points), dtype=float)


# --------------------------------------------------------------------------
# solvers

def solve_smooth(field: VectorField, u0: InitialDatum, times: Sequence[float],
                 step_control: Optional[StepControl] = None,
                 domain: Optional[BoxDomain] = None) -> list[GridFunction]:
    """``u(t, x_i) = u0(y(t, x_i))`` at every node for each output time.

    ``u0`` is a GridFunction (multilinear interpolation, its own domain is the
    output grid unless ``domain`` is given) or a callable evaluated exactly.
    """
    if domain is None:
        if not isinstance(u0, GridFunction):
            raise SolverError("a callable initial datum needs an explicit domain")
        domain = u0.domain
    times = [float(t) for t in times]
    if any(t < 0 for t in times):
        raise SolverError("output times must be nonnegative")
    nodes = domain.nodes()
    feet = backward_map_times(field, times, nodes, step_control)
    out = []
    for t, y in zip(times, feet):
        vals = _evaluate_initial(u0, y)
        out.append(GridFunction(domain, t, vals, {"field": field.spec()}))
    return out


@dataclass
class SolutionSequence:
    nus: list
    times: list
    solutions: dict
    cauchy_table: np.ndarray = field(repr=False)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.nus, self.nus[1:])):
            raise SolverError("nus must be strictly increasing")

    @property
    def finest(self) -> list[GridFunction]:
        """The numerical generalized solution: the member with the largest nu."""
        return self.solutions[self.nus[-1]]

    @property
    def domain(self) -> BoxDomain:
        return self.finest[0].domain

    def at(self, nu: int, k: int) -> GridFunction:
        return self.solutions[nu][k]


def cauchy_table(solutions: dict, nus: Sequence[int], n_times: int, p: float = 2.0) -> np.ndarray:
    """``table[i, j, k] = ||u_{nu_i}(t_k) - u_{nu_j}(t_k)||_p``."""
    table = np.zeros((len(nus), len(nus), n_times))
    for i, a in enumerate(nus):
        for j in range(i + 1, len(nus)):
            b = nus[j]
            for k in range(n_times):
                d = lp_distance(solutions[a][k], solutions[b][k], p)
                table[i, j, k] = table[j, i, k] = d
    return table


def solve_rough(field: VectorField, u0: InitialDatum, times: Sequence[float], nus: Sequence[int],
                kernel: Optional[MollifierKernel] = None, step_control: Optional[StepControl] = None,
                domain: Optional[BoxDomain] = None, m: int = 16, jobs: int = 1) -> SolutionSequence:
    """Solve with ``a_nu`` for each nu; the Cauchy table holds pairwise L^2 distances per time."""
    nus = [int(v) for v in nus]
    if any(b <= a for a, b in zip(nus, nus[1:])):
        raise SolverError(f"nus must be strictly increasing, got {nus}")
    if domain is None and isinstance(u0, GridFunction):
        domain = u0.domain
    if domain is None:
        raise SolverError("a callable initial datum needs an explicit domain")

    def one(nu):
        a_nu = mollify(field, kernel, nu, domain, m)
        sol = solve_smooth(a_nu, u0, times, step_control, domain)
        for g in sol:
            g.meta["nu"] = nu
        return sol

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, nus))
    else:
        results = [one(nu) for nu in nus]
    solutions = dict(zip(nus, results))
    table = cauchy_table(solutions, nus, len(list(times)))
    return SolutionSequence(nus, [float(t) for t in times], solutions, table)


def uniform_times(horizon: float, n_intervals: int) -> list[float]:
    return [horizon * k / n_intervals for k in range(n_intervals + 1)]


# --------------------------------------------------------------------------
# serialization

def write_grid_csv(path, u: GridFunction, sidecar: Optional[dict] = None) -> None:
    """Header rows ``t``, ``grid_shape``, ``lower``, ``upper``, then one nodal value per row (C order)."""
    f17 = lambda v: format(float(v), ".17g")  # noqa: E731
    dom = u.domain
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", f17(u.time)])
        w.writerow(["grid_shape", *dom.shape])
        w.writerow(["lower", *map(f17, dom.lower)])
        w.writerow(["upper", *map(f17, dom.upper)])
        w.writerow(["values"])
        for v in u.values.ravel():
            w.writerow([f17(v)])
    if sidecar is not None:
        from .reporting import dumps

        with open(str(path).rsplit(".", 1)[0] + ".json", "w") as fh:
            fh.write(dumps(sidecar))


def read_grid_csv(path) -> GridFunction:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head = {r[0]: r[1:] for r in rows[:5]}
    try:
        t = float(head["t"][0])
        shape = tuple(int(v) for v in head["grid_shape"])
        lower = [float(v) for v in head["lower"]]
        upper = [float(v) for v in head["upper"]]
    except (KeyError, IndexError, ValueError) as exc:
        raise SolverError(f"{path}: malformed grid header") from exc
    values = np.array([float(r[0]) for r in rows[5:] if r], dtype=float)
    return GridFunction(BoxDomain(lower, upper, shape), t, values)


def load_sidecar(path) -> dict:
    with open(str(path).rsplit(".", 1)[0] + ".json") as fh:
        return json.load(fh)
