import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpcctl.aircraft import (
    AircraftParams,
    _rhs,
    aero_coefficients,
    aircraft_basis,
    augmented_design,
    build_design_model,
    calibrate_density,
    dynamics_rhs,
    isa_density,
    measure,
    rk4_step,
    solve_trim,
    trim_residual,
    truth_step,
)
from gpcctl.sim import dump_config, load_config

P = AircraftParams()
finite = st.floats(-0.6, 0.6)


def test_isa_density_at_30000_ft():
    assert isa_density(0.0) == pytest.approx(1.225, abs=1e-3)
    assert isa_density(9144.0) == pytest.approx(0.4583, abs=1e-4)
    assert P.rho == pytest.approx(0.4583, abs=1e-4)


def test_params_validation():
    with pytest.raises(ValueError):
        AircraftParams(mass=-1.0)
    with pytest.raises(ValueError):
        AircraftParams(CL=(1.0, 2.0))
    with pytest.raises(ValueError):
        AircraftParams.from_dict({"wingspan": 3.0})
    assert AircraftParams.from_dict(P.to_dict()) == P


# ---- aerodynamic coefficients ---------------------------------------------------------

def test_aero_static_values():
    bare = replace(P, include_speed_term=False)
    CL, CD, CM = aero_coefficients(0.0, 0.0, 0.0, 0.0, bare)
    assert (CL, CD, CM) == (0.0179, 0.0355, -0.0332)
    CL, _, _ = aero_coefficients(0.0, 0.0, 0.0, 0.0, P)
    assert CL == pytest.approx(0.0179 + 0.0919, abs=1e-15)
    CL, _, _ = aero_coefficients(0.1, 0.0, 0.0, 0.0, bare)
    assert CL == pytest.approx(0.339430, abs=1e-6)
    assert CL == pytest.approx(0.0179 + 3.2569 * 0.1 + 0.5450 * 0.01 - 9.6098e-3, abs=1e-15)


def test_elevon_increment():
    _, _, m0 = aero_coefficients(0.05, 0.0, 0.0, 0.0, P)
    _, _, m1 = aero_coefficients(0.05, 0.0, 0.01, 0.0, P)
    assert m1 - m0 == pytest.approx(-0.04599, abs=1e-12)


@given(finite, st.floats(-2, 2), st.floats(-0.3, 0.3))
def test_xi_only_moves_cubic_lift(a, q, de):
    base = aero_coefficients(a, q, de, 0.0, P)
    pert = aero_coefficients(a, q, de, 1.7, P)
    assert pert[0] - base[0] == pytest.approx(1.7 * a**3, abs=1e-12)
    assert pert[1:] == base[1:]


# ---- dynamics ----------------------------------------------------------------------------

def test_fast_rhs_matches_generic_form(rng):
    x = rng.uniform(-0.8, 0.8, size=(500, 3))
    de = rng.uniform(-0.3, 0.3, 500)
    xi = rng.normal(0, 5, 500)
    fast = dynamics_rhs(x, de, xi, P)
    ref = np.stack(_rhs(x[:, 0], x[:, 1], x[:, 2], de, xi, P, np.cos, np.sin), axis=-1)
    assert np.allclose(fast, ref, rtol=1e-12, atol=1e-12)


@given(st.tuples(finite, finite, st.floats(-3, 3)), st.floats(-0.3, 0.3), st.floats(-20, 20))
def test_theta_rate_is_q(x, de, xi):
    f = dynamics_rhs(np.array(x), de, xi, P)
    assert f[1] == x[2]


@given(st.tuples(finite, finite, st.floats(-3, 3)), st.floats(-0.3, 0.3))
def test_rhs_affine_in_xi(x, de):
    f = [dynamics_rhs(np.array(x), de, xi, P) for xi in (-4.0, 1.0, 6.0)]
    # three-point collinearity: equally spaced xi gives equal increments
    d1, d2 = f[1] - f[0], f[2] - f[1]
    assert np.allclose(d1, d2, rtol=1e-9, atol=1e-9)


def test_qdot_linear_in_cm():
    x = np.array([0.1, 0.05, 0.2])
    _, _, cm = aero_coefficients(x[0], x[2], 0.02, 0.0, P)
    qd = dynamics_rhs(x, 0.02, 0.0, P)[2]
    assert qd == pytest.approx(cm * P.chord * P.qbar * P.S / P.Iyy, rel=1e-14)


# ---- trim ------------------------------------------------------------------------------------

def test_trim_matches_reference_values():
    aT, deT = solve_trim(P)
    assert math.degrees(aT) == pytest.approx(2.47, abs=0.05)
    assert math.degrees(deT) == pytest.approx(-1.92, abs=0.05)
    assert np.linalg.norm(trim_residual(aT, deT, P)) < 1e-10
    f = dynamics_rhs(np.array([aT, aT, 0.0]), deT, 0.0, P)
    assert np.linalg.norm(f) < 1e-9


def test_trim_without_speed_term_via_calibration():
    bare = replace(P, include_speed_term=False)
    rho = calibrate_density(bare, 2.47)
    aT, deT = solve_trim(replace(bare, rho=rho))
    assert math.degrees(aT) == pytest.approx(2.47, abs=1e-8)
    assert math.degrees(deT) == pytest.approx(-1.92, abs=0.05)


@given(st.floats(-0.05, 0.05))
def test_trim_with_climb_angle(gamma):
    aT, deT = solve_trim(P, gamma)
    f = dynamics_rhs(np.array([aT, aT + gamma, 0.0]), deT, 0.0, P)
    assert np.linalg.norm(f) < 1e-9


def test_equilibrium_survives_config_roundtrip(tmp_path):
    cfg = load_config()
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(cfg))
    back = load_config(path).aircraft
    assert back == P
    aT, deT = solve_trim(back)
    assert np.linalg.norm(dynamics_rhs(np.array([aT, aT, 0.0]), deT, 0.0, back)) < 1e-9


# ---- design model ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def model():
    return build_design_model(P)


def _fd_jacobians(model, h=1e-6):
    x0, u0 = model.trim_state, model.trim_input
    A = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        A[:, j] = (dynamics_rhs(x0 + e, u0, 0.0, P) - dynamics_rhs(x0 - e, u0, 0.0, P)) / (2 * h)
    B = (dynamics_rhs(x0, u0 + h, 0.0, P) - dynamics_rhs(x0, u0 - h, 0.0, P)) / (2 * h)
    return A, B


def test_linear_part_against_finite_differences(model):
    A, B = _fd_jacobians(model)
    assert np.max(np.abs(model.A0 - A)) < 1e-6
    assert np.max(np.abs(model.B - B)) < 1e-6
    assert model.A0[1, 2] == 1.0


def test_xi_part_of_A(model):
    h = 1e-6
    x0, u0 = model.trim_state, model.trim_input
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        d = lambda xi: (dynamics_rhs(x0 + e, u0, xi, P) - dynamics_rhs(x0 - e, u0, xi, P)) / (2 * h)
        assert np.max(np.abs(d(1.0) - d(0.0) - model.A1[:, j])) < 1e-6


@given(st.floats(-20, 20))
def test_nonlinearity_vanishes_at_origin(xi):
    m = build_design_model(P)
    z = np.array([0.0, 0.0, 0.0, xi])
    assert all(p(z) == 0.0 for p in m.h)


def test_dropped_offset_is_the_only_gap_at_origin(model):
    # at x = 0 the input enters exactly linearly; the remaining gap is xi * alpha_T^3 forcing
    for u in (-0.05, 0.0, 0.05):
        for xi in (-3.0, 0.0, 3.0):
            truth = dynamics_rhs(model.trim_state, model.trim_input + u, xi, P)
            approx = model.rhs(np.zeros(3), u, xi)
            assert np.allclose(truth - approx, xi * model.dropped_offset[1], atol=1e-12)


def test_design_fidelity_quartic(model, rng):
    # only the trigonometric truncation separates the cubic model from the
    # truth when u = 0 and xi = 0, so the gap shrinks like |x|^4
    d = rng.normal(size=(400, 3))
    d /= np.abs(d).max(axis=1, keepdims=True)
    errs = []
    scales = (0.3, 0.15, 0.075, 0.0375, 0.01875)
    for s in scales:
        x = s * d
        gap = model.rhs(x, np.zeros(len(x)), 0.0) - dynamics_rhs(model.trim_state + x, model.trim_input, 0.0, P)
        errs.append(np.abs(gap).max())
    errs = np.array(errs)
    rates = np.log2(errs[:-1] / errs[1:])
    assert np.all(rates > 3.8)
    assert errs[-1] < 1e-6
    # documented bound at the edge of the 0.3 rad box
    assert errs[0] < 3e-2


def test_augmented_design_shapes_and_origin(model):
    sys = augmented_design(model, aircraft_basis(1))
    assert sys.nx == 6 and sys.nu == 2
    assert np.all(sys.H(np.zeros(6)) == 0.0)
    assert np.allclose(sys.A[::2, ::2], model.A0, atol=1e-13)
    assert np.allclose(sys.B[::2, 0], model.B, atol=1e-15)


# ---- truth integration ---------------------------------------------------------------------

def test_truth_step_at_trim_and_measurement(model):
    x = model.trim_state.copy()
    for _ in range(100):
        x = truth_step(x, model.trim_input, 0.0, 1e-3, 0.0, P)
    assert np.max(np.abs(x - model.trim_state)) < 1e-9
    assert np.array_equal(measure(x, np.zeros(3)), x)


def test_rk4_fourth_order(model):
    x0 = model.trim_state + np.array([0.2, 0.1, 0.3])
    f = lambda x: dynamics_rhs(x, model.trim_input, 0.0, P)

    def run(dt):
        x = x0.copy()
        for _ in range(int(round(1.0 / dt))):
            x = rk4_step(f, x, dt)
        return x

    ref = run(1e-5)
    e1 = np.linalg.norm(run(0.02) - ref)
    e2 = np.linalg.norm(run(0.01) - ref)
    assert 12.0 < e1 / e2 < 20.0


def test_truth_step_batches():
    x = np.tile(np.array([0.2, 0.1, 0.0]), (4, 1))
    om = np.array([0.0, 1.0, -1.0, 0.5])
    out = truth_step(x, -0.03, 0.0, 1e-3, om, P)
    for i in range(4):
        assert np.array_equal(out[i], truth_step(x[i], -0.03, 0.0, 1e-3, om[i], P))
