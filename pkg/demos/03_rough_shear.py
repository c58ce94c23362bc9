"""A discontinuous shear, solved through averaged coefficients.

a(x) = (sign(x2), 0) is bounded and divergence free but not continuous, so
characteristics are only used for the averaged fields a_nu. The averaging
kernel looks one way (footprint x - [0, 1/nu]^2), so a_nu differs from a only
in the band 0 < x2 < 1/nu.

Two initial data show the two regimes:
  * a bump sitting above the band never meets it: every u_nu equals the exact
    solution at the nodes, and the distance to the oracle is zero for all nu;
  * a bump straddling x2 = 0 sees the band, and its distance to the oracle
    shrinks as the band narrows (roughly like nu^(-1/2)).
"""
import numpy as np

from transportlab import BoxDomain, StepControl, shear_field, solve_rough
from transportlab.diagnostics import convergence_study
from transportlab.initial import RadialBump

a = shear_field("sign")
dom = BoxDomain.cube(2.0, 128)
T = 0.5
sc = StepControl(T / 32)

for label, bump in (("above the band", RadialBump((-0.5, 0.75), 0.45)),
                    ("straddling x2 = 0", RadialBump((-0.5, 0.1), 0.45))):
    seq = solve_rough(a, bump, [0.0, T], [4, 8, 16, 32], None, sc, dom)

    def oracle(t, x, bump=bump):
        return bump(np.column_stack([x[:, 0] - t * np.sign(x[:, 1]), x[:, 1]]))

    table = convergence_study(seq, oracle)
    print(f"{label}:")
    print("  distance to oracle at t = 0.5:", ["%.3e" % d for d in table.oracle[-1]])
    print("  consecutive distances:       ", ["%.3e" % d for d in table.consecutive[-1]])
    print("  fitted rate in nu:", table.rates[-1])

print("the field itself has sup norm", a.sup_norm, "and is tagged", a.smoothness)
