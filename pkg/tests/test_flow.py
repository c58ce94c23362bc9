import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from transportlab.fields import constant_field, mollify, rotation_field, shear_field
from transportlab.flow import (
    FlowError, FlowMap, StepControl, backward_map, displacement_excess, flow_checkpoints, group_law_defect,
    integrate, jacobian_determinants, measure_preservation_check, reversal_defect, trajectory,
    write_trajectory_csv,
)
from transportlab.grid import BoxDomain

ROT = rotation_field()
SC = StepControl(0.01, 1e-10)


def test_integrate_constant():
    np.testing.assert_allclose(integrate(constant_field([1, 0]), 0, [0, 0], 2), [2, 0], atol=1e-14)


def test_integrate_rotation_quarter_turn():
    np.testing.assert_allclose(integrate(ROT, 0, [0.5, 0], math.pi / 2, SC), [0, 0.5], atol=1e-8)


def test_integrate_mollified_shear_outside_band():
    a16 = mollify(shear_field("sign"), nu=16)
    np.testing.assert_allclose(integrate(a16, 0, [0, 0.5], 1.0, SC), [1, 0.5], atol=1e-6)


def test_backward_map_constant_and_smooth_shear():
    c = np.array([0.6, -0.8])
    x = np.random.default_rng(0).uniform(-1, 1, (20, 2))
    np.testing.assert_allclose(backward_map(constant_field(c), 0.7, x), x - 0.7 * c, atol=1e-14)
    a = shear_field("tanh", width=0.2)
    np.testing.assert_allclose(backward_map(a, 0.9, x, SC), a.analytic_flow(0.9, x), atol=SC.tol_flow(0.9))


def test_rough_field_rejected():
    with pytest.raises(FlowError, match="rough"):
        integrate(shear_field("sign"), 0, [0, 0], 1)
    with pytest.raises(FlowError):
        FlowMap(shear_field("sign"), 1.0)


def test_step_underflow_reports_state():
    sc = StepControl(base_step=1.0, tolerance=1e-15, max_halvings=2)
    with pytest.raises(FlowError) as info:
        integrate(ROT, 0, [1.5, 0.0], 1.0, sc)
    assert info.value.state is not None and "x" in info.value.state


def test_tol_flow_counts_base_steps():
    sc = StepControl(0.01, 1e-10)
    assert sc.tol_flow(1.0) == pytest.approx(1e-8)
    assert sc.tol_flow(0.005) == pytest.approx(1e-10)
    assert sc.tol_flow(-0.5) == pytest.approx(5e-9)


def test_flow_map_horizon():
    fm = FlowMap(ROT, 1.0, SC)
    np.testing.assert_allclose(fm(0.5, [0.5, 0]), ROT.analytic_flow(0.5, np.array([0.5, 0])), atol=1e-9)
    with pytest.raises(FlowError):
        fm(1.5, [0.5, 0])
    with pytest.raises(FlowError):
        integrate(ROT, 0, [0.5, 0], 2.0, SC, horizon=1.0)


def test_checkpoints_match_single_shots():
    x = np.array([[0.5, 0.1], [-1.2, 0.4]])
    cps = flow_checkpoints(ROT, x, [0.3, -0.2, 0.0, 0.7], SC)
    np.testing.assert_array_equal(cps[2], x)
    for d, y in zip([0.3, -0.2, 0.7], cps[[0, 1, 3]]):
        np.testing.assert_allclose(y, integrate(ROT, 0, x, d, SC), atol=2 * SC.tol_flow(d))


@given(st.floats(-1.5, 1.5), st.floats(-2.5, 2.5), st.floats(-2.5, 2.5))
def test_lipschitz_displacement(t, x1, x2):
    assert displacement_excess(ROT, t, np.array([[x1, x2]]), SC) <= SC.tol_flow(t)


@given(st.floats(0.01, 0.8), st.floats(0.01, 0.8), st.integers(0, 2**31 - 1))
def test_group_law_and_reversal(t, s, seed):
    x = np.random.default_rng(seed).uniform(-2.2, 2.2, (40, 2))
    assert group_law_defect(ROT, t, s, x, SC) <= 2 * SC.tol_flow(t + s)
    assert reversal_defect(ROT, t, x, SC) <= 2 * SC.tol_flow(t)


def test_jacobian_of_translation_is_one():
    x = np.random.default_rng(2).uniform(-1, 1, (30, 2))
    det = jacobian_determinants(constant_field([1, 0.5]), 0.8, x, 1e-4)
    assert np.max(np.abs(det - 1)) <= 1e-9


def test_measure_preservation_examples():
    region = BoxDomain.cube(1.0, 2)
    assert measure_preservation_check(constant_field([1, 0]), 1.0, region, 100).defect <= 1e-9
    rot = measure_preservation_check(ROT, 1.0, region, 200, SC)
    assert rot.defect <= 1e-6
    assert abs(rot.volume_ratio - 1) <= 4 * rot.volume_ratio_stderr + 1e-3
    shear = measure_preservation_check(mollify(shear_field("sign"), nu=8), 0.5, region, 200, SC)
    assert shear.defect <= 1e-4


def test_jacobian_defect_shrinks_with_stencil():
    x = np.random.default_rng(5).uniform(-1, 1, (100, 2))
    defects = [np.max(np.abs(jacobian_determinants(ROT, 1.0, x, h, SC) - 1)) for h in (1e-2, 1e-3, 1e-4)]
    assert defects[0] > defects[1] > defects[2]


def test_trajectory_csv(tmp_path):
    times, states = trajectory(ROT, [0.5, 0.0], 1.0, 0.25, SC)
    assert len(times) == 5 and states.shape == (5, 2)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(path, times, states)
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(rows[:, 0], times)
    np.testing.assert_array_equal(rows[:, 1:], states)
