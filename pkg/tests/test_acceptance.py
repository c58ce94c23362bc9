"""Acceptance gate: ten criteria, one pass/fail line each in the terminal summary."""
import filecmp
import math
import time

import numpy as np
import pytest

from transportlab.cli import main
from transportlab.diagnostics import (
    apriori_check, excess, interpolation_bound, loglog_slope, modulus_check, norm_history, renorm_defect,
    square, stationary_renorm_check,
)
from transportlab.fields import constant_field, mollify, rotation_field, shear_field
from transportlab.flow import StepControl, group_law_defect, jacobian_determinants, measure_preservation_check
from transportlab.grid import BoxDomain, GridFunction
from transportlab.initial import Plateau, RadialBump
from transportlab.solver import lp_distance, lp_norm, solve_rough, solve_smooth, uniform_times
from transportlab.weakform import TestBank, residual_report


def record(request, key, ok, detail):
    request.config.acceptance_results[key] = (bool(ok), detail)
    assert ok, detail


# -- 1 ---------------------------------------------------------------------

def test_criterion_01_translation_exactness(request):
    a = constant_field([1.0, 0.0])
    bump = RadialBump((-0.5, 0.0), 0.5)
    T = 1.0

    dom = BoxDomain.cube(2.0, 128)
    u0 = GridFunction.from_callable(dom, bump)
    sol = solve_smooth(a, u0, uniform_times(T, 64), StepControl(T / 64, 1e-10))
    bound = 2.0 * interpolation_bound(bump, dom, 2)
    worst = max(lp_distance(g, GridFunction.from_callable(dom, lambda x: bump(x - [g.time, 0.0])), 2) for g in sol)

    coarse = BoxDomain.cube(2.0, 64)
    bank = TestBank.generate(coarse, T, T / 32, 64, seed=0)
    hs, res, runtimes = [], [], []
    for n, k in ((64, 32), (128, 64), (256, 128)):
        start = time.perf_counter()
        d = BoxDomain.cube(2.0, n)
        g0 = GridFunction.from_callable(d, bump)
        u = solve_smooth(a, g0, uniform_times(T, k), StepControl(T / k, 1e-10))
        res.append(residual_report(u, g0, a, bank).max_abs)
        runtimes.append(time.perf_counter() - start)
        hs.append(d.spacing[0])
    slope = loglog_slope(hs, res)
    ok = worst <= bound and slope >= 1.8 and max(runtimes) <= 60.0
    record(request, 1, ok, f"L2 error {worst:.3e} <= {bound:.3e}; residuals {['%.3e' % r for r in res]} "
                           f"slope {slope:.3f} >= 1.8; max runtime {max(runtimes):.1f}s")


# -- 2 ---------------------------------------------------------------------

def test_criterion_02_norm_conservation(request):
    dom = BoxDomain.cube(1.5, 256)
    u0 = Plateau((0.5, 0.0), 0.1, 0.35)
    times = [0.25 * k for k in range(9)]  # t = 0 plus 8 output times
    sol = solve_smooth(rotation_field(), u0, times, StepControl(0.01, 1e-10), dom)
    rel = {}
    for p in (1.0, 2.0, np.inf):
        nh = norm_history(sol, p)
        rel[p] = nh.max_deviation / nh.history[0][1]
    ok = all(v <= 1e-6 for v in rel.values())
    record(request, 2, ok, "relative deviations " + ", ".join(f"p={p:g}: {v:.2e}" for p, v in rel.items())
           + " <= 1e-6")


# -- 3 ---------------------------------------------------------------------

def test_criterion_03_group_law(request):
    tol_flow = 1e-8
    sc = StepControl(0.01, 1e-10)
    t, s = 0.37, 0.512
    assert sc.tol_flow(t + s) <= tol_flow
    x = np.random.default_rng(0).uniform(-2.0, 2.0, (1000, 2))
    d_rot = group_law_defect(rotation_field(), t, s, x, sc)
    d_shear = group_law_defect(mollify(shear_field("sign"), nu=8), t, s, x, sc)
    ok = d_rot <= 2 * tol_flow and d_shear <= 2 * tol_flow
    record(request, 3, ok, f"rotation {d_rot:.2e}, mollified shear {d_shear:.2e} <= {2 * tol_flow:.0e}")


# -- 4 ---------------------------------------------------------------------

def _shrinks(defects, hs, scale):
    # finite differences of a map of size `scale` cannot resolve below ~eps*scale/h
    floor = [100 * np.finfo(float).eps * scale / h for h in hs]
    return all(b < a or (a <= fa and b <= fb) for a, b, fa, fb in zip(defects, defects[1:], floor, floor[1:]))


def test_criterion_04_measure_preservation(request):
    sc = StepControl(0.01, 1e-10)
    region = BoxDomain.cube(1.0, 2)
    hs = (1e-2, 1e-3, 1e-4, 1e-5)
    x = np.random.default_rng(0).uniform(-1.0, 1.0, (400, 2))
    lines, ok = [], True
    for name, fld, t, limit in (("rotation", rotation_field(), 1.0, 1e-6),
                                ("mollified shear nu=8", mollify(shear_field("sign"), nu=8), 0.5, 1e-4)):
        rep = measure_preservation_check(fld, t, region, 400, sc)
        defects = [float(np.max(np.abs(jacobian_determinants(fld, t, x, h, sc) - 1))) for h in hs]
        shrink = _shrinks(defects, hs, 1.0 + fld.sup_norm * t)
        ok &= rep.defect <= limit and shrink
        lines.append(f"{name}: defect {rep.defect:.2e} <= {limit:.0e}, stencil study "
                     f"{['%.1e' % d for d in defects]} shrinking={shrink}")
    record(request, 4, ok, "; ".join(lines))


# -- 5, 6, 7: the shear-sign benchmark ---------------------------------------

BENCH_T = 0.5
BENCH_K = 64


@pytest.fixture(scope="module")
def shear_benchmark():
    dom = BoxDomain.cube(2.0, 256)
    bump = RadialBump((-0.5, 0.75), 0.45)  # supported in {x2 > 0.25}
    start = time.perf_counter()
    seq = solve_rough(shear_field("sign"), bump, uniform_times(BENCH_T, BENCH_K), [4, 8, 16, 32], None,
                      StepControl(BENCH_T / BENCH_K, 1e-10), dom)
    elapsed = time.perf_counter() - start
    return dom, bump, seq, elapsed


def test_criterion_05_apriori(request, shear_benchmark):
    dom, bump, seq, _ = shear_benchmark
    rep = apriori_check(seq.solutions[32], GridFunction.from_callable(dom, bump), 1.0, [0.5, 1.0], [0.25, 0.5])
    worst = min(c.slack + c.tol for c in rep.checks)
    record(request, 5, rep.passed and len(rep.checks) == 8,
           f"{len(rep.checks)} checks, min(slack + tol_q) = {worst:.3e} >= 0")


def test_criterion_06_rough_convergence(request, shear_benchmark):
    dom, bump, seq, elapsed = shear_benchmark
    k = len(seq.times) - 1
    t = seq.times[k]
    oracle = GridFunction.from_callable(
        dom, lambda x: bump(np.column_stack([x[:, 0] - t * np.sign(x[:, 1]), x[:, 1]])), t)
    d = [lp_distance(seq.at(nu, k), oracle, 2) for nu in seq.nus]
    decreasing = all(b < a for a, b in zip(d, d[1:]))
    factor = d[-1] * 4 <= d[0]
    ok = decreasing and factor and elapsed <= 300
    record(request, 6, ok, f"oracle distances at t={t:g}: {['%.3e' % v for v in d]}; strictly decreasing="
                           f"{decreasing}; factor>=4: {factor}; solve {elapsed:.0f}s")


def test_criterion_07_renormalization_defect(request, shear_benchmark):
    dom, bump, seq, _ = shear_benchmark
    field = shear_field("sign")
    u = seq.solutions[32]
    u0 = GridFunction.from_callable(dom, bump)
    bank = TestBank.generate(dom, BENCH_T, BENCH_T / BENCH_K, 64, seed=0)
    plain = residual_report(u, u0, field, bank).max_abs
    defects = {name: renorm_defect(u, u0, field, g, bank).defect
               for name, g in (("u^2", square), ("|u|", np.abs), ("(|u|-0.5)+", excess(0.5)))}
    sup = renorm_defect(u, u0, field, excess(bump.sup_abs), bank).defect
    ok = all(v <= 4 * plain for v in defects.values()) and sup == 0.0
    record(request, 7, ok, f"plain {plain:.3e}; " + ", ".join(f"{k} {v:.3e}" for k, v in defects.items())
           + f" <= {4 * plain:.3e}; (|u|-sup|u0|)+ defect {sup!r}")


# -- 8 ---------------------------------------------------------------------

def test_criterion_08_stationary_renormalization(request):
    field = shear_field("sign")
    w = lambda x: np.cos(3 * x[:, 1]) + 0.5 * np.sign(x[:, 1])  # noqa: E731
    bank = TestBank.spatial_bank(BoxDomain.cube(2.0, 64), 64, seed=0)
    hs, res = [], []
    for n in (64, 128, 256):
        dom = BoxDomain.cube(2.0, n)
        out = stationary_renorm_check(GridFunction.from_callable(dom, w), field, square, bank)
        hs.append(dom.spacing[0])
        res.append(out.max_abs)
    C = res[0] / hs[0]  # calibrated on the coarsest grid
    slope = loglog_slope(hs, res)
    ok = all(r <= C * h for r, h in zip(res, hs)) and slope >= 0.9
    record(request, 8, ok, f"residuals {['%.2e' % r for r in res]} <= C dx with C = {C:.3e}; slope {slope:.2f} >= 0.9")


# -- 9 ---------------------------------------------------------------------

def test_criterion_09_modulus_of_continuity(request):
    dom = BoxDomain.cube(1.5, 128)
    bump = RadialBump((0.5, 0.0), 0.3)
    worst, count = math.inf, 0
    for fld in (constant_field([1.0, 0.0]), rotation_field()):
        rep = modulus_check(bump, fld, [0.01, 0.05, 0.1], dom, 2.0, (0.0, 0.5), StepControl(0.01, 1e-10))
        worst = min(worst, min(c.slack + c.tol for c in rep.checks))
        count += len(rep.checks)
    record(request, 9, worst >= 0 and count == 12, f"{count} checks, min(slack + tol) = {worst:.3e} >= 0")


# -- 10 --------------------------------------------------------------------

def test_criterion_10_determinism(request, tmp_path, capsys):
    first, second = tmp_path / "a", tmp_path / "b"
    codes = [main(["run", "--config", "shear_sign_benchmark", "--out", str(d), "--seed", "0"]) for d in (first, second)]
    capsys.readouterr()
    files = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
    others = sorted(p.relative_to(second) for p in second.rglob("*") if p.is_file())
    same = files == others and all(filecmp.cmp(first / f, second / f, shallow=False) for f in files)
    record(request, 10, same and len(files) > 0, f"{len(files)} artifacts byte-identical={same}; exit codes {codes}")
