"""Renormalized solutions: is g(u) a solution too?

For the shear benchmark at nu = 32 the weak residual of g(u), with initial
datum g(u0), is computed for several g. The defects are of the same size as
the plain residual of u, and for g = (|u| - sup|u0|)^+ the composed solution
vanishes identically, so its defect is exactly zero.

A stationary version follows: any function of x2 alone is stationary for the
shear, and so is its square; the weak divergence of a * g(w) decays with the grid.
"""
import numpy as np

from transportlab import BoxDomain, GridFunction, StepControl, TestBank, residual_report, shear_field, solve_rough
from transportlab.diagnostics import excess, renorm_defect, square, standard_renormalizations, stationary_renorm_check
from transportlab.initial import RadialBump
from transportlab.solver import uniform_times

a = shear_field("sign")
dom = BoxDomain.cube(2.0, 128)
bump = RadialBump((-0.5, 0.1), 0.45)
T, K = 0.5, 32
seq = solve_rough(a, bump, uniform_times(T, K), [32], None, StepControl(T / K), dom)
u = seq.finest
u0 = GridFunction.from_callable(dom, bump)
bank = TestBank.generate(dom, T, T / K, 64, seed=0)

print(f"plain residual: {residual_report(u, u0, a, bank).max_abs:.3e}")
for name, g in standard_renormalizations((0.5,)).items():
    print(f"{name:>12}: {renorm_defect(u, u0, a, g, bank).defect:.3e}")
print(f"{'excess_sup':>12}: {renorm_defect(u, u0, a, excess(bump.sup_abs), bank).defect!r}")

w = lambda x: np.cos(3 * x[:, 1]) + 0.5 * np.sign(x[:, 1])  # noqa: E731
spatial = TestBank.spatial_bank(BoxDomain.cube(2.0, 64), 64, seed=0)
for n in (64, 128, 256):
    d = BoxDomain.cube(2.0, n)
    res = stationary_renorm_check(GridFunction.from_callable(d, w), a, square, spatial)
    print(f"stationary, grid {n}^2: residual {res.max_abs:.2e} (precondition {res.precondition_residual:.2e})")
