"""Quadrature of the weak transport identity against compactly supported bumps.

For a candidate ``u`` on a uniform time partition of [0, T]:

    R(f) = int_0^T int [u f_t + u a . grad f] dx dt + int u0 f(0, .) dx

with the midpoint rule in space and the trapezoid rule in time. Test
functions are evaluated analytically; they are tensor products of centred
copies of the mollifier bump, so the spatial factor is an outer product of
per-axis profiles.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fields import VectorField, _bump_core, _bump_core_prime
from .grid import BoxDomain, GridFunction

_PEAK = float(_bump_core(np.array([0.5]))[0])
MIN_SLICES = 8


class WeakFormError(ValueError):
    pass


def bump1d(z):
    """Centred bump on (-1, 1) with peak 1 at 0."""
    return _bump_core(0.5 * (np.asarray(z, dtype=float) + 1.0)) / _PEAK


def bump1d_prime(z):
    return 0.5 * _bump_core_prime(0.5 * (np.asarray(z, dtype=float) + 1.0)) / _PEAK


@dataclass(frozen=True)
class TestFunction:
    """``f(t, x) = b((t - t_center)/tau) * prod_i b((x_i - x_center_i)/sigma_i)``.

    ``tau = None`` marks a purely spatial test function.
    """

    __test__ = False  # not a pytest class

    x_center: tuple
    sigma: tuple
    t_center: float = 0.0
    tau: Optional[float] = None

    @property
    def dim(self) -> int:
        return len(self.x_center)

    # temporal factor
    def temporal(self, t):
        if self.tau is None:
            return np.ones_like(np.asarray(t, dtype=float))
        return bump1d((np.asarray(t, dtype=float) - self.t_center) / self.tau)

    def temporal_prime(self, t):
        if self.tau is None:
            return np.zeros_like(np.asarray(t, dtype=float))
        return bump1d_prime((np.asarray(t, dtype=float) - self.t_center) / self.tau) / self.tau

    # spatial factor
    def _factors(self, x):
        x = np.asarray(x, dtype=float)
        z = (x - np.asarray(self.x_center)) / np.asarray(self.sigma)
        return bump1d(z), bump1d_prime(z) / np.asarray(self.sigma)

    def spatial(self, x):
        b, _ = self._factors(x)
        return np.prod(b, axis=-1)

    def spatial_grad(self, x):
        b, db = self._factors(x)
        out = np.empty(np.shape(x))
        for i in range(self.dim):
            others = np.prod(np.delete(b, i, axis=-1), axis=-1)
            out[..., i] = db[..., i] * others
        return out

    def spatial_on_grid(self, domain: BoxDomain):
        """(phi, grad phi) at the nodes, flattened in C order, via the outer-product structure."""
        prof, dprof = [], []
        for axis, c, s in zip(domain.axes, self.x_center, self.sigma):
            z = (axis - c) / s
            prof.append(bump1d(z))
            dprof.append(bump1d_prime(z) / s)
        phi = _outer(prof)
        grad = np.empty((phi.size, domain.dim))
        for i in range(domain.dim):
            grad[:, i] = _outer(prof[:i] + [dprof[i]] + prof[i + 1:])
        return phi, grad

    # space-time
    def value(self, t, x):
        return self.temporal(t) * self.spatial(x)

    __call__ = value

    def dt(self, t, x):
        return self.temporal_prime(t) * self.spatial(x)

    def grad(self, t, x):
        return self.temporal(t) * self.spatial_grad(x)

    def support_box(self):
        c, s = np.asarray(self.x_center), np.asarray(self.sigma)
        if self.tau is None:
            return None, (c - s, c + s)
        return (self.t_center - self.tau, self.t_center + self.tau), (c - s, c + s)

    def spatial_part(self) -> "TestFunction":
        return TestFunction(self.x_center, self.sigma)

    def to_dict(self) -> dict:
        return {"x_center": list(self.x_center), "sigma": list(self.sigma),
                "t_center": self.t_center, "tau": self.tau}


def _outer(vectors):
    out = vectors[0]
    for v in vectors[1:]:
        out = np.multiply.outer(out, v)
    return np.ascontiguousarray(out).ravel()


@dataclass
class TestBank:
    """Seeded family of test functions with log-uniform scales."""

    __test__ = False

    functions: list
    seed: int
    params: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.functions)

    def __len__(self):
        return len(self.functions)

    def __getitem__(self, k):
        return self.functions[k]

    @classmethod
    def generate(cls, domain: BoxDomain, horizon: float, dt: float, size: int = 64, seed: int = 0,
                 scale_min: Optional[float] = None, scale_max: Optional[float] = None,
                 tau_min: Optional[float] = None, tau_max: Optional[float] = None) -> "TestBank":
        """Space-time bank. Spatial scales are log-uniform in ``[4 dx, L/4]`` by default,
        temporal half-widths in ``[8 dt, T/2]``; every support lies in ``[0, T) x domain``."""
        smin, smax = _spatial_scales(domain, scale_min, scale_max)
        tmax = tau_max if tau_max is not None else 0.5 * horizon
        tmin = tau_min if tau_min is not None else MIN_SLICES * dt
        tmin = min(tmin, tmax)
        rng = np.random.default_rng(seed)
        lo, hi = np.array(domain.lower), np.array(domain.upper)
        funcs = []
        for _ in range(size):
            sigma = np.exp(rng.uniform(np.log(smin), np.log(smax), domain.dim))
            center = rng.uniform(lo + sigma, hi - sigma)
            tau = float(np.exp(rng.uniform(np.log(tmin), np.log(tmax))))
            t_center = float(rng.uniform(0.0, horizon - tau))
            funcs.append(TestFunction(tuple(center.tolist()), tuple(sigma.tolist()), t_center, tau))
        params = {"kind": "space-time", "size": size, "scale_min": smin, "scale_max": smax,
                  "tau_min": tmin, "tau_max": tmax, "horizon": horizon}
        return cls(funcs, seed, params)

    @classmethod
    def spatial_bank(cls, domain: BoxDomain, size: int = 64, seed: int = 0,
                     scale_min: Optional[float] = None, scale_max: Optional[float] = None) -> "TestBank":
        smin, smax = _spatial_scales(domain, scale_min, scale_max)
        rng = np.random.default_rng(seed)
        lo, hi = np.array(domain.lower), np.array(domain.upper)
        funcs = []
        for _ in range(size):
            sigma = np.exp(rng.uniform(np.log(smin), np.log(smax), domain.dim))
            center = rng.uniform(lo + sigma, hi - sigma)
            funcs.append(TestFunction(tuple(center.tolist()), tuple(sigma.tolist())))
        params = {"kind": "spatial", "size": size, "scale_min": smin, "scale_max": smax}
        return cls(funcs, seed, params)

    def spatial(self) -> "TestBank":
        return TestBank([f.spatial_part() for f in self.functions], self.seed,
                        {**self.params, "kind": "spatial"})


def _spatial_scales(domain, scale_min, scale_max):
    smin = scale_min if scale_min is not None else 4.0 * float(domain.spacing.max())
    smax = scale_max if scale_max is not None else 0.25 * float(min(
        hi - lo for lo, hi in zip(domain.lower, domain.upper)))
    if smin > smax:
        raise WeakFormError(f"test-function scale range empty: [{smin}, {smax}]")
    return smin, smax


# --------------------------------------------------------------------------
# residuals

def _time_grid(u: Sequence[GridFunction]):
    if len(u) < 2:
        raise WeakFormError("need at least two time slices")
    times = np.array([g.time for g in u])
    dt = times[1] - times[0]
    expected = times[0] + dt * np.arange(len(times))
    if abs(times[0]) > 1e-12 or dt <= 0 or np.max(np.abs(times - expected)) > 1e-9 * max(1.0, times[-1]):
        raise WeakFormError("solution slices must form a uniform partition of [0, T] starting at 0")
    domain = u[0].domain
    if any(g.domain != domain for g in u):
        raise WeakFormError("solution slices live on different grids")
    return times, dt, domain


def _trapezoid_weights(n, dt):
    w = np.full(n, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


class _Prepared:
    """Shared quadrature data for one (u, u0, field) triple."""

    def __init__(self, u, u0, field: VectorField):
        self.times, self.dt, self.domain = _time_grid(u)
        self.U = np.stack([g.flat for g in u])
        if isinstance(u0, GridFunction):
            if u0.domain != self.domain:
                raise WeakFormError("u0 lives on a different grid")
            self.u0 = u0.flat
        else:
            self.u0 = np.asarray(u0(self.domain.nodes()), dtype=float).ravel()
        self.a = field.eval(self.domain.nodes())
        self.w = _trapezoid_weights(len(self.times), self.dt)
        self.dv = self.domain.cell_volume

    def residual(self, f: TestFunction) -> float:
        if f.tau is None:
            raise WeakFormError("weak_residual needs a space-time test function")
        lo, hi = f.t_center - f.tau, f.t_center + f.tau
        covered = int(np.count_nonzero((self.times > lo) & (self.times < hi)))
        if covered < MIN_SLICES:
            raise WeakFormError(
                f"test function time support ({lo:.4g}, {hi:.4g}) covers {covered} slices, need {MIN_SLICES}")
        if hi > self.times[-1] + 1e-12:
            raise WeakFormError("test function support reaches past the final time")
        phi, grad = f.spatial_on_grid(self.domain)
        psi = np.einsum("pi,pi->p", self.a, grad)
        uphi = self.U @ phi
        upsi = self.U @ psi
        body = self.w @ (f.temporal_prime(self.times) * uphi + f.temporal(self.times) * upsi)
        init = float(f.temporal(0.0)) * float(self.u0 @ phi)
        return float((body + init) * self.dv)


def weak_residual(u: Sequence[GridFunction], u0, field: VectorField, f: TestFunction) -> float:
    return _Prepared(u, u0, field).residual(f)


def divergence_weak(field: VectorField, phi: TestFunction, domain: BoxDomain,
                    density: Optional[np.ndarray] = None) -> float:
    """Midpoint quadrature of ``int rho a . grad phi dx`` (``rho = 1`` by default)."""
    _, grad = phi.spatial_on_grid(domain)
    flux = field.eval(domain.nodes())
    if density is not None:
        flux = flux * np.asarray(density, dtype=float).reshape(-1, 1)
    return float(np.einsum("pi,pi->", flux, grad) * domain.cell_volume)


@dataclass
class ResidualReport:
    max_abs: float
    mean_abs: float
    per_function: list
    seed: int
    bank_params: dict

    def to_dict(self) -> dict:
        return {"seed": self.seed, "bank": self.bank_params, "max_abs": self.max_abs,
                "mean_abs": self.mean_abs, "per_function": list(self.per_function)}


def residual_report(u: Sequence[GridFunction], u0, field: VectorField, bank: TestBank) -> ResidualReport:
    prep = _Prepared(u, u0, field)
    vals = [prep.residual(f) for f in bank]
    absvals = np.abs(vals)
    return ResidualReport(float(absvals.max()), float(absvals.mean()), vals, bank.seed, dict(bank.params))
