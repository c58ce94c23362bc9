"""Quantitative checks on computed generalized solutions.

Every inequality check records ``slack = bound - value``; a check passes when
``slack >= -tol``. Tolerances come from the discretization (boundary layers
of the ball quadrature, grid refinement of the measured quantity), never from
fixed constants.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .fields import VectorField
from .flow import StepControl
from .grid import BoxDomain, GridFunction
from .reporting import digest, dumps, rows_to_csv
from .solver import SolutionSequence, lp_distance, lp_norm, solve_smooth
from .weakform import ResidualReport, TestBank, divergence_weak, residual_report


class DiagnosticsError(ValueError):
    pass


class PreconditionError(DiagnosticsError):
    def __init__(self, message, measured):
        super().__init__(message)
        self.measured = measured


@dataclass
class CheckRecord:
    name: str
    inputs_digest: str
    value: float
    bound: float
    tol: float
    details: dict = field(default_factory=dict)
    strict: bool = False  # pass needs slack > 0

    @property
    def slack(self) -> float:
        return self.bound - self.value

    @property
    def passed(self) -> bool:
        if self.strict:
            return bool(self.slack > 0)
        return bool(self.slack >= -self.tol)

    def to_dict(self) -> dict:
        return {"name": self.name, "inputs_digest": self.inputs_digest, "value": self.value,
                "bound": self.bound, "slack": self.slack, "tol": self.tol, "strict": self.strict,
                "passed": self.passed, "details": self.details}


@dataclass
class DiagnosticsReport:
    checks: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, name: str, value: float, bound: float, tol: float = 0.0, inputs=None, strict: bool = False,
            **details) -> CheckRecord:
        rec = CheckRecord(name, digest(inputs if inputs is not None else {}), float(value), float(bound),
                          float(tol), details, strict)
        self.checks.append(rec)
        return rec

    def extend(self, other: "DiagnosticsReport") -> "DiagnosticsReport":
        self.checks.extend(other.checks)
        return self

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def min_slack(self) -> float:
        return min((c.slack for c in self.checks), default=math.inf)

    def to_dict(self) -> dict:
        return {"metadata": self.metadata, "passed": self.passed, "checks": [c.to_dict() for c in self.checks]}

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def to_csv(self) -> str:
        rows = [(c.name, c.value, c.bound, c.slack, c.tol, "pass" if c.passed else "FAIL") for c in self.checks]
        return rows_to_csv(["name", "value", "bound", "slack", "tol", "status"], rows)


def _grid_values(u0, domain: BoxDomain) -> np.ndarray:
    if isinstance(u0, GridFunction):
        return u0.values
    return np.asarray(u0(domain.nodes()), dtype=float).reshape(domain.shape)


def sphere_area(r: float, dim: int) -> float:
    return 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2) * r ** (dim - 1)


# --------------------------------------------------------------------------
# finite speed of propagation

def apriori_check(u: Sequence[GridFunction], u0, sup_norm: float, radii: Sequence[float],
                  times: Optional[Sequence[float]] = None, center=None) -> DiagnosticsReport:
    """Ball-mass inequalities between each slice and the initial datum.

    inner: mass of u(t) in |x| < R  <=  mass of u0 in |x| < R + N t
    outer: mass of u(t) in |x| > R + N t  <=  mass of u0 in |x| > R

    Cells count by centre-in-ball. ``tol_q = max|u0| sqrt(n) dx (S(R) + S(R + N t))``
    bounds the mass of the cells misclassified along both spheres.
    """
    domain = u[0].domain
    x = domain.nodes()
    c = np.zeros(domain.dim) if center is None else np.asarray(center, dtype=float)
    r = np.linalg.norm(x - c, axis=-1)
    v0 = _grid_values(u0, domain).ravel()
    used_abs = bool(np.any(v0 < 0) or any(np.any(g.values < 0) for g in u))
    if used_abs:
        v0 = np.abs(v0)
    dv = domain.cell_volume
    dx = float(domain.spacing.max())
    amp = float(np.max(v0)) if v0.size else 0.0
    report = DiagnosticsReport(metadata={"check": "apriori", "used_abs": used_abs, "sup_norm": sup_norm,
                                         "radii": list(radii)})
    wanted = None if times is None else [float(t) for t in times]
    for g in u:
        if wanted is not None and not any(abs(g.time - t) < 1e-12 for t in wanted):
            continue
        vals = np.abs(g.flat) if used_abs else g.flat
        for R in radii:
            big = R + sup_norm * g.time
            reach_lo = c - big
            reach_hi = c + big
            if np.any(reach_lo < np.array(domain.lower)) or np.any(reach_hi > np.array(domain.upper)):
                raise DiagnosticsError(f"domain does not contain the ball of radius R + N t = {big:g}")
            tol_q = amp * math.sqrt(domain.dim) * dx * (sphere_area(R, domain.dim) + sphere_area(big, domain.dim))
            inputs = {"t": g.time, "R": R, "N": sup_norm}
            report.add("apriori_inner", np.sum(vals[r < R]) * dv, np.sum(v0[r < big]) * dv, tol_q, inputs,
                       t=g.time, R=R)
            report.add("apriori_outer", np.sum(vals[r > big]) * dv, np.sum(v0[r > R]) * dv, tol_q, inputs,
                       t=g.time, R=R)
    return report


# --------------------------------------------------------------------------
# norms

ISOMETRY, CONTRACTION, NEITHER = "isometry", "contraction", "neither"


@dataclass
class NormHistory:
    p: float
    history: list
    classification: str
    tol: float

    @property
    def max_deviation(self) -> float:
        n0 = self.history[0][1]
        return max(abs(n - n0) for _, n in self.history)

    def to_dict(self) -> dict:
        return {"p": self.p, "history": [list(h) for h in self.history],
                "classification": self.classification, "tol": self.tol}


def norm_history(u: Sequence[GridFunction], p: float = 2.0, rtol: float = 1e-6, atol: float = 1e-14) -> NormHistory:
    """``(t, ||u(t)||_p)`` per slice, classified as isometry, contraction or neither.

    The classification is a numerical proxy only; it does not decide anything
    about the generator of the dynamics.
    """
    hist = [(g.time, lp_norm(g, p)) for g in u]
    norms = np.array([h[1] for h in hist])
    tol = rtol * float(norms[0]) + atol
    if np.all(np.abs(norms - norms[0]) <= tol):
        kind = ISOMETRY
    elif np.all(np.diff(norms) <= tol):
        kind = CONTRACTION
    else:
        kind = NEITHER
    return NormHistory(p, hist, kind, tol)


# --------------------------------------------------------------------------
# modulus of continuity in time

def _grad_sup(u0, domain: BoxDomain) -> float:
    if hasattr(u0, "grad_sup"):
        return float(u0.grad_sup())
    fine = domain.refined(4)
    vals = np.asarray(u0(fine.nodes()), dtype=float).reshape(fine.shape)
    grads = np.gradient(vals, *fine.spacing)
    if fine.dim == 1:
        grads = [grads]
    return float(np.max(np.sqrt(sum(g**2 for g in grads))))


def modulus_check(u0: Callable, field: VectorField, hs: Sequence[float], domain: BoxDomain, p: float = 2.0,
                  times: Sequence[float] = (0.0,), step_control: Optional[StepControl] = None) -> DiagnosticsReport:
    """``||u(t+h) - u(t)||_p <= N ||grad u0||_inf (2 m(A))^(1/p) |h|`` with ``A = {u0 != 0}``.

    The tolerance for each (t, h) is twice the change of the measured
    difference between the grid and a grid of half the resolution.
    """
    lo, hi = u0.support_box()
    if np.any(lo < np.array(domain.lower)) or np.any(hi > np.array(domain.upper)):
        raise DiagnosticsError("initial datum is not compactly supported inside the domain")
    N = field.sup_norm
    G = _grad_sup(u0, domain)
    coarse = BoxDomain(domain.lower, domain.upper, tuple(max(2, s // 2) for s in domain.shape))

    def measure(dom):
        return float(np.count_nonzero(np.asarray(u0(dom.nodes())) != 0) * dom.cell_volume)

    m = measure(domain)
    report = DiagnosticsReport(metadata={"check": "modulus", "p": p, "N": N, "grad_sup": G, "support_measure": m,
                                         "field": field.spec()})
    for t in times:
        for h in hs:
            bound = N * G * (2.0 * m) ** (1.0 / p) * abs(h)
            if h == 0:
                report.add("modulus", 0.0, 0.0, 0.0, {"t": t, "h": h}, t=t, h=h)
                continue
            fine_pair = solve_smooth(field, u0, [t, t + h], step_control, domain)
            coarse_pair = solve_smooth(field, u0, [t, t + h], step_control, coarse)
            value = lp_distance(fine_pair[1], fine_pair[0], p)
            rough = lp_distance(coarse_pair[1], coarse_pair[0], p)
            tol = 2.0 * abs(value - rough) + 1e-12
            report.add("modulus", value, bound, tol, {"t": t, "h": h, "p": p}, t=t, h=h)
    return report


# --------------------------------------------------------------------------
# renormalization

def excess(r: float):
    def g(v):
        return np.maximum(np.abs(v) - r, 0.0)
    g.__name__ = f"excess_{r:g}"
    return g


def cutoff(g: Callable, k: float):
    """``max(-k, min(g(u), k))``."""
    def gk(v):
        return np.clip(g(v), -k, k)
    gk.__name__ = f"{getattr(g, '__name__', 'g')}_cut{k:g}"
    return gk


def square(v):
    return v**2


def identity(v):
    return v


def standard_renormalizations(radii: Sequence[float] = (0.5,), user: Optional[Callable] = None,
                              levels: Sequence[float] = ()) -> dict:
    """``u^2``, ``|u|``, ``(|u| - r)^+`` for each radius, and cutoffs of a user function."""
    family = {"square": square, "abs": np.abs}
    for r in radii:
        family[f"excess_{r:g}"] = excess(r)
    if user is not None:
        for k in levels:
            family[f"{getattr(user, '__name__', 'g')}_cut{k:g}"] = cutoff(user, k)
    return family


@dataclass
class RenormDefect:
    name: str
    defect: float
    report: ResidualReport

    def to_dict(self) -> dict:
        return {"name": self.name, "defect": self.defect, "residuals": self.report.to_dict()}


def renorm_defect(u: Sequence[GridFunction], u0, field: VectorField, g: Callable, bank: TestBank,
                  name: Optional[str] = None) -> RenormDefect:
    """Largest weak residual of ``g(u)`` with initial datum ``g(u0)`` over the bank."""
    gu = [s.apply(g) for s in u]
    gu0 = u0.apply(g) if isinstance(u0, GridFunction) else (lambda x: g(np.asarray(u0(x), dtype=float)))
    rep = residual_report(gu, gu0, field, bank)
    return RenormDefect(name or getattr(g, "__name__", "g"), rep.max_abs, rep)


@dataclass
class StationaryResult:
    precondition_residual: float
    max_abs: float
    per_function: list

    def to_dict(self) -> dict:
        return {"precondition_residual": self.precondition_residual, "max_abs": self.max_abs,
                "per_function": list(self.per_function)}


def stationary_renorm_check(u_stat: GridFunction, field: VectorField, g: Callable, bank: TestBank,
                            precondition_tol: Optional[float] = None) -> StationaryResult:
    """Weak divergence of ``a g(u_stat)`` over a spatial bank, after checking ``div(a u_stat) = 0``.

    The default precondition tolerance is the first-order scale
    ``N max|u_stat| dx``.
    """
    spatial = bank.spatial() if bank.params.get("kind") != "spatial" else bank
    dom = u_stat.domain
    if precondition_tol is None:
        precondition_tol = field.sup_norm * float(np.max(np.abs(u_stat.values))) * float(dom.spacing.max())
    pre = [divergence_weak(field, phi, dom, u_stat.flat) for phi in spatial]
    pre_max = float(np.max(np.abs(pre)))
    if pre_max > precondition_tol:
        raise PreconditionError(
            f"u_stat is not weakly stationary: residual {pre_max:.3e} > {precondition_tol:.1e}", pre_max)
    gvals = g(u_stat.flat)
    vals = [divergence_weak(field, phi, dom, gvals) for phi in spatial]
    return StationaryResult(pre_max, float(np.max(np.abs(vals))), vals)


# --------------------------------------------------------------------------
# convergence in nu

@dataclass
class ConvergenceTable:
    nus: list
    times: list
    consecutive: np.ndarray   # (len(times), len(nus) - 1)
    oracle: Optional[np.ndarray]  # (len(times), len(nus))
    rates: list

    def strictly_decreasing(self, k: int = -1, which: str = "oracle") -> bool:
        d = self.oracle[k] if which == "oracle" else self.consecutive[k]
        return bool(np.all(np.diff(d) < 0))

    def rows(self):
        for k, t in enumerate(self.times):
            for i, nu in enumerate(self.nus):
                cons = self.consecutive[k, i] if i < len(self.nus) - 1 else float("nan")
                orc = self.oracle[k, i] if self.oracle is not None else float("nan")
                yield (t, nu, cons, orc, self.rates[k])

    def to_csv(self) -> str:
        return rows_to_csv(["t", "nu", "dist_to_next_nu", "dist_to_oracle", "fitted_rate"], self.rows())

    def to_dict(self) -> dict:
        return {"nus": self.nus, "times": self.times, "consecutive": self.consecutive.tolist(),
                "oracle": None if self.oracle is None else self.oracle.tolist(), "rates": self.rates}


def _fit_rate(nus, dists) -> float:
    nus = np.asarray(nus, dtype=float)
    d = np.asarray(dists, dtype=float)
    ok = d > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(nus[ok]), np.log(d[ok]), 1)[0])


def convergence_study(seq: SolutionSequence, oracle=None, p: float = 2.0) -> ConvergenceTable:
    """Distances between consecutive ``u_nu`` and, when given, to an exact solution.

    ``oracle`` is a callable ``(t, points) -> values`` or a list of grid
    functions aligned with ``seq.times``. The fitted rate is the log-log slope
    against nu (oracle distances if present).
    """
    if len(seq.nus) < 3:
        raise DiagnosticsError("a convergence study needs at least three values of nu")
    dom = seq.domain
    nt, nn = len(seq.times), len(seq.nus)
    cons = np.zeros((nt, nn - 1))
    orc = None if oracle is None else np.zeros((nt, nn))
    rates = []
    for k, t in enumerate(seq.times):
        for i in range(nn - 1):
            cons[k, i] = lp_distance(seq.at(seq.nus[i], k), seq.at(seq.nus[i + 1], k), p)
        if oracle is not None:
            ref = oracle[k] if isinstance(oracle, (list, tuple)) else GridFunction(dom, t, oracle(t, dom.nodes()))
            for i, nu in enumerate(seq.nus):
                orc[k, i] = lp_distance(seq.at(nu, k), ref, p)
            rates.append(_fit_rate(seq.nus, orc[k]))
        else:
            rates.append(_fit_rate(seq.nus[:-1], cons[k]))
    return ConvergenceTable(list(seq.nus), list(seq.times), cons, orc, rates)


# --------------------------------------------------------------------------
# helpers for calibrating tolerances

def interpolation_bound(u0: Callable, domain: BoxDomain, p: float = 2.0) -> float:
    """L^p bound for multilinear interpolation error of ``u0`` sampled on ``domain``.

    Pointwise ``|u - I u| <= sum_i h_i^2/8 max|d_ii u|``, with the second
    derivatives taken by central differences on a 4x finer grid, times the
    measure of the support enlarged by one cell, to the power 1/p.
    """
    fine = domain.refined(4)
    vals = np.asarray(u0(fine.nodes()), dtype=float).reshape(fine.shape)
    h = domain.spacing
    total = 0.0
    for i in range(domain.dim):
        d2 = np.diff(vals, n=2, axis=i) / fine.spacing[i] ** 2
        total += h[i] ** 2 / 8.0 * float(np.max(np.abs(d2)))
    lo, hi = u0.support_box()
    cells = np.prod((np.asarray(hi) - np.asarray(lo)) + 2 * h)
    if np.isinf(p):
        return total
    return total * float(cells) ** (1.0 / p)


def loglog_slope(h: Sequence[float], values: Sequence[float]) -> float:
    return float(np.polyfit(np.log(np.asarray(h, dtype=float)), np.log(np.asarray(values, dtype=float)), 1)[0])
