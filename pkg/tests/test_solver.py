import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from transportlab.diagnostics import interpolation_bound
from transportlab.fields import constant_field, rotation_field, shear_field
from transportlab.flow import StepControl
from transportlab.grid import BoxDomain, GridFunction
from transportlab.initial import RadialBump
from transportlab.solver import (
    SolutionSequence, SolverError, check_expansion, interpolate, load_sidecar, lp_distance, lp_norm,
    read_grid_csv, solve_rough, solve_smooth, uniform_times, write_grid_csv,
)

SC = StepControl(0.01, 1e-10)


def test_lp_norm_examples():
    dom = BoxDomain((0, 0), (1, 1), (10, 10))
    assert lp_norm(GridFunction(dom, 0, np.ones(100)), 2) == pytest.approx(1.0, abs=1e-15)
    half = GridFunction(dom, 0, (dom.nodes()[:, 0] < 0.5).astype(float))
    assert abs(lp_norm(half, 1) - 0.5) <= dom.cell_volume
    assert lp_norm(GridFunction(dom, 0, -3 * np.ones(100)), np.inf) == 3.0
    with pytest.raises(ValueError):
        lp_norm(half, 0.5)


def test_translated_bump_keeps_norms():
    dom = BoxDomain.cube(2.0, 128)
    u0 = GridFunction.from_callable(dom, RadialBump((-0.5, 0.0), 0.5))
    # 0.5 is a whole number of cells, so the shifted samples are the same numbers
    u = solve_smooth(constant_field([1, 0]), u0, [0.5], SC)[0]
    for p in (1, 2, np.inf):
        assert abs(lp_norm(u, p) - lp_norm(u0, p)) <= 1e-6 * lp_norm(u0, p)


def test_translation_moves_bump():
    dom = BoxDomain.cube(2.0, 64)
    u = solve_smooth(constant_field([1, 0]), RadialBump((0, 0), 0.5), [1.0], SC, dom)[0]
    exact = GridFunction.from_callable(dom, RadialBump((1, 0), 0.5))
    assert lp_distance(u, exact, np.inf) <= 1e-12


def test_rotation_matches_exact_oracle_second_order():
    # a quarter turn maps this grid onto itself, so use t = 1 to get real interpolation error
    t = 1.0
    centre = (0.5 * math.cos(t), 0.5 * math.sin(t))
    errs = []
    for n in (64, 128):
        dom = BoxDomain.cube(1.5, n)
        bump = RadialBump((0.5, 0.0), 0.3)
        u0 = GridFunction.from_callable(dom, bump)
        u = solve_smooth(rotation_field(), u0, [t], SC)[0]
        exact = GridFunction.from_callable(dom, RadialBump(centre, 0.3))
        errs.append(lp_distance(u, exact, 2))
        assert errs[-1] <= interpolation_bound(bump, dom, 2)
    assert errs[0] / errs[1] > 3.0


def test_rotation_quarter_turn_callable_datum():
    dom = BoxDomain.cube(1.5, 64)
    u = solve_smooth(rotation_field(), RadialBump((0.5, 0.0), 0.3), [math.pi / 2], SC, dom)[0]
    exact = GridFunction.from_callable(dom, RadialBump((0.0, 0.5), 0.3))
    assert lp_distance(u, exact, np.inf) <= 1e-6


def test_callable_datum_needs_domain_and_times_nonnegative():
    with pytest.raises(SolverError):
        solve_smooth(constant_field([1, 0]), RadialBump((0, 0), 0.5), [0.5])
    with pytest.raises(SolverError):
        solve_smooth(constant_field([1, 0]), RadialBump((0, 0), 0.5), [-0.1], domain=BoxDomain.cube(1, 8))


def test_finite_speed_of_propagation():
    dom = BoxDomain.cube(2.0, 96)
    c, R = np.array([0.4, -0.3]), 0.5
    a = rotation_field()
    u0 = GridFunction.from_callable(dom, RadialBump(tuple(c), R))
    for g in solve_smooth(a, u0, [0.25, 0.5], SC):
        r = np.linalg.norm(dom.nodes() - c, axis=-1)
        outside = r >= R + a.sup_norm * g.time + SC.tol_flow(g.time) + dom.spacing.max() * math.sqrt(2)
        assert np.max(np.abs(g.flat[outside]), initial=0.0) <= 1e-12


@given(st.integers(0, 2**31 - 1))
def test_monotonicity(seed):
    dom = BoxDomain.cube(2.0, 32)
    r = np.random.default_rng(seed)
    u0 = GridFunction.from_callable(dom, RadialBump((0.0, 0.0), 0.8))
    bump = r.random(dom.size) * u0.flat  # keep the rim at zero
    v0 = GridFunction(dom, 0.0, u0.flat + bump)
    u = solve_smooth(rotation_field(), u0, [0.3], SC)[0]
    v = solve_smooth(rotation_field(), v0, [0.3], SC)[0]
    assert np.all(u.flat <= v.flat + 1e-15)


def test_semigroup_restart():
    dom = BoxDomain.cube(1.5, 96)
    bump = RadialBump((0.5, 0.0), 0.35)
    a = rotation_field()
    t, s = 0.4, 0.55
    direct = solve_smooth(a, bump, [t + s], SC, dom)[0]
    mid = solve_smooth(a, bump, [t], SC, dom)[0]
    restart = solve_smooth(a, mid, [s], SC)[0]
    assert lp_distance(direct, restart, 2) <= 2 * interpolation_bound(bump, dom, 2)


def test_composition_with_callable_datum_is_exact():
    dom = BoxDomain.cube(1.5, 48)
    bump = RadialBump((0.5, 0.0), 0.35)
    g = np.square
    lhs = solve_smooth(rotation_field(), lambda x: g(bump(x)), [0.7], SC, dom)[0]
    rhs = solve_smooth(rotation_field(), bump, [0.7], SC, dom)[0].apply(g)
    np.testing.assert_array_equal(lhs.flat, rhs.flat)


def test_rough_solve_of_constant_field_is_nu_independent():
    dom = BoxDomain.cube(2.0, 32)
    seq = solve_rough(constant_field([1, 0]), RadialBump((-0.5, 0), 0.5), [0, 0.5], [2, 4, 8], None, SC, dom)
    for nu in seq.nus[1:]:
        np.testing.assert_array_equal(seq.at(nu, 1).flat, seq.at(2, 1).flat)
    assert np.all(seq.cauchy_table == 0)


def test_rough_shear_above_band_matches_oracle():
    dom = BoxDomain.cube(2.0, 64)
    bump = RadialBump((-0.5, 0.75), 0.45)
    seq = solve_rough(shear_field("sign"), bump, [0.5], [4, 8, 16, 32], None, StepControl(0.5 / 32), dom)
    exact = GridFunction.from_callable(dom, lambda x: bump(x - [0.5, 0.0]), 0.5)
    for nu in seq.nus:
        assert lp_distance(seq.at(nu, 0), exact, 2) <= dom.spacing[0] + 1.0 / nu


def test_rough_shear_straddling_bump_converges_in_nu():
    # at 64^2 no node lies in the nu = 32 band (0, 1/32); 128^2 resolves all four bands
    dom = BoxDomain.cube(2.0, 128)
    bump = RadialBump((-0.5, 0.1), 0.45)
    seq = solve_rough(shear_field("sign"), bump, [0.5], [4, 8, 16, 32], None, StepControl(0.5 / 32), dom, jobs=2)
    oracle = GridFunction.from_callable(
        dom, lambda x: bump(np.column_stack([x[:, 0] - 0.5 * np.sign(x[:, 1]), x[:, 1]])), 0.5)
    d = [lp_distance(seq.at(nu, 0), oracle, 2) for nu in seq.nus]
    assert all(b < a for a, b in zip(d, d[1:]))
    consecutive = [seq.cauchy_table[i, i + 1, 0] for i in range(3)]
    assert all(b <= a for a, b in zip(consecutive, consecutive[1:]))


def test_sequence_requires_increasing_nus():
    with pytest.raises(SolverError):
        solve_rough(shear_field("sign"), RadialBump((0, 0.5), 0.3), [0.1], [8, 4], domain=BoxDomain.cube(1, 8))
    with pytest.raises(SolverError):
        SolutionSequence([4, 4], [0.0], {}, np.zeros((2, 2, 1)))


def test_check_expansion_message():
    dom = BoxDomain.cube(1.0, 8)
    check_expansion(dom, [-0.5, -0.5], [0.5, 0.5], 1.0, 0.5)
    with pytest.raises(SolverError, match="not inside domain"):
        check_expansion(dom, [-0.5, -0.5], [0.5, 0.5], 1.0, 0.6)


def test_interpolation_rules():
    dom = BoxDomain.cube(1.0, 16)
    lin = GridFunction.from_callable(dom, lambda x: 2 * x[:, 0] - x[:, 1] + 0.5)
    pts = np.random.default_rng(0).uniform(-0.9, 0.9, (50, 2))
    np.testing.assert_allclose(interpolate(lin, pts), 2 * pts[:, 0] - pts[:, 1] + 0.5, atol=1e-13)
    with pytest.raises(SolverError, match="escapes"):
        interpolate(lin, np.array([[1.5, 0.0]]))
    bump = GridFunction.from_callable(dom, RadialBump((0, 0), 0.5))
    assert interpolate(bump, np.array([[1.5, 0.0]]))[0] == 0.0


def test_grid_csv_round_trip(tmp_path):
    dom = BoxDomain((-1.0, 0.0), (1.0, 3.0), (7, 5))
    u = GridFunction(dom, 0.3125, np.random.default_rng(9).normal(size=35))
    path = tmp_path / "u.csv"
    write_grid_csv(path, u, {"nu": 8, "field": {"name": "shear"}, "x": 0.1})
    v = read_grid_csv(path)
    assert v.domain == dom and v.time == u.time
    np.testing.assert_array_equal(v.values, u.values)
    assert load_sidecar(path) == {"nu": 8, "field": {"name": "shear"}, "x": 0.1}
    (tmp_path / "bad.csv").write_text("t,0\nvalues\n")
    with pytest.raises(SolverError):
        read_grid_csv(tmp_path / "bad.csv")


def test_uniform_times():
    assert uniform_times(1.0, 4) == [0.0, 0.25, 0.5, 0.75, 1.0]
