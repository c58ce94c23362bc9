"""Bounded solenoidal vector fields, the bump kernel, and coefficient averaging.

A field is a pure function of position; discontinuous fields are sampled
pointwise with ``sign(0) = 0`` on the jump set.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import RegularGridInterpolator

from .grid import BoxDomain

SMOOTH = "smooth"
ROUGH = "rough"


class FieldError(ValueError):
    pass


# --------------------------------------------------------------------------
# bump profiles

def _bump_core(s):
    """exp(-1/(s(1-s))) on (0, 1), zero elsewhere (unnormalized)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = (s > 0.0) & (s < 1.0)
    si = s[inside]
    out[inside] = np.exp(-1.0 / (si * (1.0 - si)))
    return out


def _bump_core_prime(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = (s > 0.0) & (s < 1.0)
    si = s[inside]
    q = si * (1.0 - si)
    out[inside] = np.exp(-1.0 / q) * (1.0 - 2.0 * si) / q**2
    return out


def smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


class MollifierKernel:
    """Nonnegative bump ``beta`` on [0, 1] with unit mass.

    The tensor kernel at index ``nu`` is ``nu**n * prod(beta(nu * xi_i))``,
    supported in ``[0, 1/nu]**n``.
    """

    MASS_TOL = 1e-10

    def __init__(self):
        mass, _ = integrate.quad(_bump_core, 0.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200)
        self.normalization = mass
        check = self._gauss_mass(400)
        if abs(check - 1.0) > self.MASS_TOL:
            raise FieldError(f"kernel mass check failed: {check!r}")

    def _gauss_mass(self, m: int) -> float:
        s, w = np.polynomial.legendre.leggauss(m)
        s = 0.5 * (s + 1.0)
        return float(np.sum(0.5 * w * self.profile(s)))

    def profile(self, s):
        return _bump_core(s) / self.normalization

    def derivative(self, s):
        return _bump_core_prime(s) / self.normalization

    def rule(self, m: int = 16) -> tuple[np.ndarray, np.ndarray]:
        """Nodes in (0, 1) and nonnegative weights summing to one for ``int beta(s) g(s) ds``."""
        if m < 1:
            raise FieldError("quadrature order must be positive")
        s, w = np.polynomial.legendre.leggauss(m)
        s = 0.5 * (s + 1.0)
        w = 0.5 * w * self.profile(s)
        return s, w / w.sum()


_DEFAULT_KERNEL: Optional[MollifierKernel] = None


def default_kernel() -> MollifierKernel:
    global _DEFAULT_KERNEL
    if _DEFAULT_KERNEL is None:
        _DEFAULT_KERNEL = MollifierKernel()
    return _DEFAULT_KERNEL


# --------------------------------------------------------------------------
# vector fields

@dataclass(frozen=True)
class VectorField:
    dim: int
    func: Callable[[np.ndarray], np.ndarray]
    sup_norm: float
    smoothness: str = SMOOTH
    name: str = "custom"
    params: dict = field(default_factory=dict)
    analytic_flow: Optional[Callable] = None
    analytic_divergence: Optional[Callable] = None
    region: Optional[BoxDomain] = None
    depends_on: Optional[tuple] = None  # coordinates the field reads; None means all

    def __post_init__(self):
        if self.smoothness not in (SMOOTH, ROUGH):
            raise FieldError(f"unknown smoothness tag {self.smoothness!r}")
        if not np.isfinite(self.sup_norm) or self.sup_norm < 0:
            raise FieldError(f"sup_norm must be finite and nonnegative, got {self.sup_norm}")

    def __call__(self, x) -> np.ndarray:
        return self.eval(x)

    def eval(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise FieldError(f"expected points of dimension {self.dim}, got shape {x.shape}")
        return np.asarray(self.func(x), dtype=float)

    @property
    def is_smooth(self) -> bool:
        return self.smoothness == SMOOTH

    def spec(self) -> dict:
        return {"name": self.name, "params": dict(self.params), "sup_norm": self.sup_norm}

    def check_bound(self, points, atol: float = 1e-12) -> float:
        """Largest sampled |a(x)|; raises if it exceeds the declared sup-norm."""
        speed = np.linalg.norm(self.eval(points), axis=-1)
        peak = float(speed.max()) if speed.size else 0.0
        if peak > self.sup_norm + atol:
            raise FieldError(f"{self.name}: sampled |a| = {peak!r} exceeds sup_norm = {self.sup_norm!r}")
        return peak


def _zero_divergence(x):
    return np.zeros(np.shape(x)[:-1])


def constant_field(c) -> VectorField:
    c = np.asarray(c, dtype=float)
    if c.ndim != 1:
        raise FieldError("constant velocity must be a vector")

    def func(x):
        return np.broadcast_to(c, x.shape).copy()

    def flow(t, x):
        return np.asarray(x, dtype=float) - t * c

    return VectorField(
        dim=c.size, func=func, sup_norm=float(np.linalg.norm(c)), smoothness=SMOOTH,
        name="constant", params={"c": c.tolist()},
        analytic_flow=flow, analytic_divergence=_zero_divergence, depends_on=(),
    )


def _profile(name: str, width: float = 0.1, amplitude: float = 1.0, wavenumber: float = np.pi):
    if name == "sign":
        return (lambda s: amplitude * np.sign(s)), abs(amplitude), ROUGH
    if name == "tanh":
        return (lambda s: amplitude * np.tanh(s / width)), abs(amplitude), SMOOTH
    if name == "sin":
        return (lambda s: amplitude * np.sin(wavenumber * s)), abs(amplitude), SMOOTH
    if name == "step":
        return (lambda s: amplitude * np.where(s > 0, 1.0, 0.0)), abs(amplitude), ROUGH
    raise FieldError(f"unknown shear profile {name!r}")


SHEAR_PROFILES = ("sign", "tanh", "sin", "step")


def shear_field(f="sign", sup_norm: Optional[float] = None, smoothness: Optional[str] = None,
                **profile_kw) -> VectorField:
    """Planar shear ``a(x1, x2) = (f(x2), 0)``.

    ``f`` is a profile name from ``SHEAR_PROFILES`` or a callable; a callable
    needs an explicit ``sup_norm``, which is checked on a sample of ``f``.
    """
    if callable(f):
        if sup_norm is None:
            raise FieldError("a callable shear profile needs an explicit sup_norm")
        prof, bound, tag = f, float(sup_norm), smoothness or ROUGH
        sample = np.asarray(prof(np.linspace(-10.0, 10.0, 4001)), dtype=float)
        if np.max(np.abs(sample)) > bound + 1e-12:
            raise FieldError("shear profile exceeds its declared sup_norm")
        params = {"profile": getattr(f, "__name__", "callable")}
    else:
        prof, bound, tag = _profile(f, **profile_kw)
        if sup_norm is not None:
            if sup_norm < bound:
                raise FieldError(f"declared sup_norm {sup_norm} below profile bound {bound}")
            bound = float(sup_norm)
        tag = smoothness or tag
        params = {"profile": f, **profile_kw}

    def func(x):
        out = np.zeros_like(x)
        out[..., 0] = prof(x[..., 1])
        return out

    def flow(t, x):
        y = np.array(x, dtype=float, copy=True)
        y[..., 0] = y[..., 0] - t * prof(y[..., 1])
        return y

    return VectorField(
        dim=2, func=func, sup_norm=bound, smoothness=tag, name="shear", params=params,
        analytic_flow=flow, analytic_divergence=_zero_divergence, depends_on=(1,),
    )


def rotation_cutoff(r, inner: float = 1.0, outer: float = 2.0):
    """1 on r <= inner, smooth decay to 0 on [inner, outer]."""
    return smooth_step((outer - np.asarray(r, dtype=float)) / (outer - inner))


def rotation_field(inner_radius: float = 1.0, outer_radius: float = 2.0, omega: float = 1.0) -> VectorField:
    """``a(x) = omega * g(|x|) * (-x2, x1)``: rigid rotation inside ``inner_radius``.

    Characteristics are circles traversed at angular speed ``omega * g(r)``,
    so the backward map is a rotation by ``-omega * g(|x|) * t``.
    """
    if not 0 < inner_radius < outer_radius:
        raise FieldError("need 0 < inner_radius < outer_radius")

    def g(r):
        return rotation_cutoff(r, inner_radius, outer_radius)

    def func(x):
        r = np.hypot(x[..., 0], x[..., 1])
        s = omega * g(r)
        out = np.empty_like(x)
        out[..., 0] = -s * x[..., 1]
        out[..., 1] = s * x[..., 0]
        return out

    def flow(t, x):
        x = np.asarray(x, dtype=float)
        angle = -omega * g(np.hypot(x[..., 0], x[..., 1])) * t
        c, s = np.cos(angle), np.sin(angle)
        y = np.empty_like(x)
        y[..., 0] = c * x[..., 0] - s * x[..., 1]
        y[..., 1] = s * x[..., 0] + c * x[..., 1]
        return y

    rs = np.linspace(inner_radius, outer_radius, 20001)
    speed = rs * g(rs)
    k = int(np.argmax(speed))
    lo, hi = rs[max(k - 1, 0)], rs[min(k + 1, rs.size - 1)]
    res = optimize.minimize_scalar(lambda r: -r * g(r), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-14})
    peak = max(float(speed[k]), float(-res.fun), inner_radius)
    sup = abs(omega) * peak * (1.0 + 1e-12)

    return VectorField(
        dim=2, func=func, sup_norm=sup, smoothness=SMOOTH, name="rotation",
        params={"inner_radius": inner_radius, "outer_radius": outer_radius, "omega": omega},
        analytic_flow=flow, analytic_divergence=_zero_divergence,
    )


def sampled_field(axes, values, smoothness: str = ROUGH, name: str = "custom-sampled",
                  check_divergence: bool = True, div_tol: float = 1e-2, params=None) -> VectorField:
    """Field given by samples on a uniform tensor grid, multilinearly interpolated.

    ``values`` has shape ``(*grid_shape, n)``. Outside the sampled box the
    field is undefined and evaluation raises.
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    values = np.asarray(values, dtype=float)
    n = len(axes)
    if values.shape != tuple(a.size for a in axes) + (n,):
        raise FieldError(f"values shape {values.shape} does not match the axes")
    for a in axes:
        d = np.diff(a)
        if a.size < 2 or np.any(d <= 0) or not np.allclose(d, d[0], rtol=1e-9, atol=1e-12):
            raise FieldError("sampled field axes must be uniform and increasing")
    interp = RegularGridInterpolator(tuple(axes), values, method="linear", bounds_error=True)
    region = BoxDomain([a[0] for a in axes], [a[-1] for a in axes], [a.size for a in axes])

    def func(x):
        flat = x.reshape(-1, n)
        try:
            out = interp(flat)
        except ValueError as exc:
            raise FieldError(f"{name}: evaluation outside the sampled region") from exc
        return out.reshape(x.shape)

    sup = float(np.max(np.linalg.norm(values, axis=-1)))
    fld = VectorField(
        dim=n, func=func, sup_norm=sup, smoothness=smoothness, name=name,
        params=dict(params or {}), region=region,
    )
    if check_divergence:
        _check_weak_solenoidal(fld, region, div_tol)
    return fld


def _check_weak_solenoidal(fld: VectorField, region: BoxDomain, div_tol: float) -> None:
    from .weakform import TestBank, divergence_weak

    # quadrature on a grid strictly inside the sampled box, twice as fine as the data
    h = (np.array(region.upper) - np.array(region.lower)) / (np.array(region.shape) - 1)
    inner = BoxDomain(region.lower, region.upper, tuple(2 * (s - 1) for s in region.shape))
    smax = 0.25 * float(min(hi - lo for lo, hi in zip(inner.lower, inner.upper)))
    bank = TestBank.spatial_bank(inner, size=16, seed=0, scale_min=min(4 * float(h.max()), 0.5 * smax),
                                 scale_max=smax)
    worst = 0.0
    for phi in bank:
        grad_mass = float(np.sum(np.linalg.norm(phi.spatial_grad(inner.nodes()), axis=-1)) * inner.cell_volume)
        rel = abs(divergence_weak(fld, phi, inner)) / max(fld.sup_norm * grad_mass, 1e-300)
        worst = max(worst, rel)
    if worst > div_tol:
        raise FieldError(f"{fld.name}: weak divergence residual {worst:.3e} exceeds tolerance {div_tol:.1e}")


def read_field_csv(path, **kw) -> VectorField:
    """Read ``x1..xn, a1..an`` rows on a uniform grid (optional header row)."""
    rows = []
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if k == 0:
                    continue
                raise FieldError(f"{path}: non-numeric row {k}")
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] % 2:
        raise FieldError(f"{path}: expected 2n columns")
    n = data.shape[1] // 2
    axes = [np.unique(data[:, i]) for i in range(n)]
    shape = tuple(a.size for a in axes)
    if int(np.prod(shape)) != data.shape[0]:
        raise FieldError(f"{path}: rows do not form a complete tensor grid")
    idx = tuple(np.searchsorted(axes[i], data[:, i]) for i in range(n))
    values = np.full(shape + (n,), np.nan)
    values[idx] = data[:, n:]
    kw.setdefault("params", {"path": str(path)})
    return sampled_field(axes, values, **kw)


def write_field_csv(path, fld: VectorField, domain: BoxDomain) -> None:
    pts = domain.nodes()
    vals = fld.eval(pts)
    n = fld.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(n)] + [f"a{i + 1}" for i in range(n)])
        for p, v in zip(pts, vals):
            w.writerow([format(float(c), ".17g") for c in (*p, *v)])


# --------------------------------------------------------------------------
# gallery

FIELD_GALLERY = {
    "constant": "a(x) = c; params: c (vector)",
    "shear": "a(x1, x2) = (f(x2), 0); params: profile in {sign, tanh, sin, step}, width, amplitude",
    "rotation": "a(x) = omega g(|x|) (-x2, x1), g = 1 on |x| <= inner_radius, 0 beyond outer_radius",
    "custom-sampled": "multilinear interpolant of a CSV sample; params: path, smoothness, div_tol",
}


def builtin_field(name: str, params: Optional[dict] = None) -> VectorField:
    params = dict(params or {})
    try:
        if name == "constant":
            if "c" not in params:
                raise FieldError("constant field needs params['c']")
            return constant_field(params["c"])
        if name == "shear":
            f = params.pop("f", None) or params.pop("profile", "sign")
            return shear_field(f, **params)
        if name == "rotation":
            return rotation_field(**params)
        if name == "custom-sampled":
            if "path" in params:
                path = params.pop("path")
                return read_field_csv(path, **params)
            axes = params.pop("axes")
            values = params.pop("values")
            return sampled_field(axes, values, **params)
    except TypeError as exc:
        raise FieldError(f"bad parameters for field {name!r}: {exc}") from exc
    raise FieldError(f"unknown field {name!r}; known: {sorted(FIELD_GALLERY)}")


def field_from_spec(spec: dict) -> VectorField:
    """Build from a ``{name, params, sup_norm}`` record; the declared sup_norm is an upper bound."""
    fld = builtin_field(spec["name"], spec.get("params"))
    declared = spec.get("sup_norm")
    if declared is not None:
        if declared + 1e-12 < fld.sup_norm:
            raise FieldError(f"declared sup_norm {declared} is below the field bound {fld.sup_norm}")
    return fld


# --------------------------------------------------------------------------
# averaging

def mollify(a: VectorField, kernel: Optional[MollifierKernel] = None, nu: int = 8,
            sample_domain: Optional[BoxDomain] = None, m: int = 16) -> VectorField:
    """Average ``a`` against the kernel scaled to ``[0, 1/nu]**n``.

    The convolution is evaluated with an ``m``-point tensor Gauss rule for the
    kernel weight. ``a_nu(x)`` uses only ``a`` on ``x - [0, 1/nu]**n``, and it
    reproduces ``a(x)`` bit-for-bit when ``a`` is constant on that footprint.
    """
    if int(nu) != nu or nu < 1:
        raise FieldError(f"nu must be a positive integer, got {nu}")
    nu = int(nu)
    kernel = kernel or default_kernel()
    if a.region is not None:
        if sample_domain is None:
            raise FieldError("a field with a bounded region needs a sample_domain")
        lo = np.array(sample_domain.lower) - 1.0 / nu
        hi = np.array(sample_domain.upper)
        if np.any(lo < np.array(a.region.lower) - 1e-12) or np.any(hi > np.array(a.region.upper) + 1e-12):
            raise FieldError(
                f"sample domain minus the footprint [0, 1/{nu}]^n leaves the region where {a.name} is defined")
    s, w = kernel.rule(m)
    n = a.dim
    # the weights of each axis sum to one, so axes the field ignores drop out of the rule
    active = tuple(range(n)) if a.depends_on is None else tuple(sorted(a.depends_on))
    k = len(active)
    shifts = np.zeros((m**k, n))
    if k:
        grids = np.meshgrid(*([s / nu] * k), indexing="ij")
        for axis, g in zip(active, grids):
            shifts[:, axis] = g.ravel()
        weights = np.prod(np.meshgrid(*([w] * k), indexing="ij"), axis=0).ravel()
    else:
        weights = np.ones(1)
    shifts.setflags(write=False)
    weights.setflags(write=False)

    def func(x):
        pts = x.reshape(-1, n)
        ref = a.eval(pts - shifts[0])
        acc = np.zeros_like(ref)
        for sh, wt in zip(shifts[1:], weights[1:]):
            acc += wt * (a.eval(pts - sh) - ref)
        return (ref + acc).reshape(x.shape)

    return VectorField(
        dim=n, func=func, sup_norm=a.sup_norm, smoothness=SMOOTH,
        name=f"{a.name}~nu{nu}", params={"base": a.spec(), "nu": nu, "m": m},
        analytic_divergence=_zero_divergence if a.analytic_divergence is not None else None,
        region=None, depends_on=a.depends_on,
    )
