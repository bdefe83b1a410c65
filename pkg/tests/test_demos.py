import json
import math

import numpy as np
import pytest

from oracles import numpy_gain_step, numpy_information_step, numpy_rk4
from formulac.demos import (KalmanModel, OdeSystem, bench_compare, bench_threads,
                            build_kalman_step, integrate_rk4, random_kalman_model, random_spd)
from formulac.errors import DiscontinuityError, NonFiniteError
from formulac.interp import random_bindings

EXP = "input x: real\ninput t: real\noutput dx = x\n"


# ---------------------------------------------------------------- Kalman
def test_scalar_model_hand_values():
    step = build_kalman_step(KalmanModel([[1.0]], [[0.1]], [[1.0]], [[1.0]]))
    x, P, P_pred = step.step([0.0], [[0.9]], [0.3])
    assert P_pred[0, 0] == 1.0
    assert P[0, 0] == 0.5
    assert x[0] == 0.15


def test_identity_dynamics_leave_P_unchanged():
    step = build_kalman_step(KalmanModel(np.eye(2), 1e-3 * np.eye(2), np.eye(2), np.eye(2)))
    r = step.predict.runner()
    P = random_spd(2, np.random.default_rng(0))
    r.load({"x": np.zeros((2, 1)), "P": P, "F": np.eye(2), "Q": np.zeros((2, 2))})
    r.run()
    assert np.array_equal(r.out_views["P_pred"].reshape(2, 2), P)


@pytest.mark.parametrize("n, m", [(2, 1), (2, 2), (3, 1), (3, 2), (4, 2), (4, 3)])
def test_random_models_match_dense_oracle(n, m):
    rng = np.random.default_rng(100 * n + m)
    model = random_kalman_model(n, m, rng)
    step = build_kalman_step(model)
    x, P = np.zeros(n), random_spd(n, rng)
    xo, Po = x.copy(), P.copy()
    xg, Pg = x.copy(), P.copy()
    truth = rng.normal(size=n)
    for _ in range(100):
        truth = model.F @ truth + rng.multivariate_normal(np.zeros(n), model.Q)
        z = model.H @ truth + rng.multivariate_normal(np.zeros(m), model.R)
        x, P, _ = step.step(x, P, z)
        xo, Po = numpy_information_step(model, xo, Po, z)
        xg, Pg = numpy_gain_step(model, xg, Pg, z)
        assert np.max(np.abs(P - Po)) <= 1e-10 and np.max(np.abs(x - xo)) <= 1e-10
        assert np.max(np.abs(P - Pg)) <= 1e-10 and np.max(np.abs(x - xg)) <= 1e-10
        assert np.max(np.abs(P - P.T)) <= 1e-10
        assert all(np.linalg.det(P[:k, :k]) > 0 for k in range(1, n + 1))


@pytest.mark.parametrize("kwargs", [
    dict(F=np.eye(5), Q=np.eye(5), H=np.eye(5), R=np.eye(5)),
    dict(F=np.eye(2), Q=-np.eye(2), H=np.eye(2), R=np.eye(2)),
    dict(F=np.eye(2), Q=np.eye(2), H=np.eye(2), R=np.array([[1.0, 2.0], [0.0, 1.0]])),
    dict(F=np.eye(2), Q=np.eye(2), H=np.ones((1, 3)), R=np.eye(1)),
])
def test_model_invariants(kwargs):
    with pytest.raises(ValueError):
        KalmanModel(**kwargs)


# ------------------------------------------------------------------- RK4
def test_exponential_growth():
    traj = integrate_rk4(OdeSystem(EXP, 0.01, 100), 1.0)
    assert traj.shape == (101,)
    assert abs(traj[-1] - math.e) <= 1e-8


def test_zero_field_is_constant():
    traj = integrate_rk4(OdeSystem("input x: vector[2]\noutput dx = 0 * x\n", 0.1, 20), [1.5, -2.0])
    assert np.array_equal(traj, np.tile([1.5, -2.0], (21, 1)))


def test_rk4_order():
    errors = [abs(integrate_rk4(OdeSystem(EXP, h, round(1 / h)), 1.0)[-1] - math.e)
              for h in (0.02, 0.01, 0.005)]
    for coarse, fine in zip(errors, errors[1:]):
        assert 12 <= coarse / fine <= 20


def test_time_dependent_rhs_matches_numpy_rk4():
    src = "input x: real\ninput t: real\noutput dx = -2 * t * x + sin(t)\n"
    traj = integrate_rk4(OdeSystem(src, 0.05, 40), 0.5)
    want = numpy_rk4(lambda x, t: -2 * t * x + np.sin(t), 0.5, 0.05, 40)
    assert np.allclose(traj, want, rtol=1e-13, atol=1e-15)


def test_second_order_pendulum(projects):
    src = (projects / "pendulum.flc").read_text()
    params = {"g": 9.81, "c": 0.0, "e1": [1.0, 0.0], "e2": [0.0, 1.0]}
    traj = integrate_rk4(OdeSystem(src, 0.001, 2000, params), [0.5, 0.0])
    want = numpy_rk4(lambda x, t: np.array([x[1], -9.81 * np.sin(x[0])]), [0.5, 0.0], 0.001, 2000)
    assert np.allclose(traj, want, rtol=1e-12, atol=1e-12)
    energy = 0.5 * traj[:, 1] ** 2 - 9.81 * np.cos(traj[:, 0])
    assert np.ptp(energy) < 1e-8


def test_delta_rhs_is_rejected(projects):
    src = (projects / "ode_delta.flc").read_text()
    sys_ = OdeSystem(src, 0.01, 200)
    assert sys_.discontinuous
    with pytest.raises(DiscontinuityError, match="delta"):
        integrate_rk4(sys_, 1.0)
    assert not OdeSystem(EXP, 0.01, 10).discontinuous


def test_blow_up_aborts():
    with pytest.raises(NonFiniteError, match="step"):
        integrate_rk4(OdeSystem("input x: real\noutput dx = x^2\n", 0.1, 100), 10.0)


def test_ode_system_invariants():
    with pytest.raises(ValueError):
        OdeSystem(EXP, 0.0, 10)
    with pytest.raises(ValueError):
        integrate_rk4(OdeSystem("input x: real\ninput v: vector[2]\noutput dx = v\n", 0.1, 3,
                                {"v": [1.0, 2.0]}), 1.0)
    with pytest.raises(ValueError):
        integrate_rk4(OdeSystem("input y: real\noutput dy = y\n", 0.1, 3), 1.0)


# ------------------------------------------------------------- benchmark
FIELDS = {"project", "iterations", "tape_ns_per_iter", "ast_ns_per_iter", "speedup",
          "instruction_count", "allocations_per_iter"}


def test_trivial_report_is_well_formed():
    r = bench_compare("input t: real\noutput y = t\n", 10_000, name="trivial")
    data = json.loads(r.to_json())
    assert set(data) == FIELDS
    assert data["project"] == "trivial" and data["iterations"] == 10_000
    assert data["tape_ns_per_iter"] > 0 and data["ast_ns_per_iter"] > 0
    assert data["instruction_count"] == 0


def test_bench_validates_iterations():
    with pytest.raises(ValueError):
        bench_compare("input t: real\noutput y = t\n", 9_999)


def test_kalman_update_bench_reports_zero_allocations():
    model = random_kalman_model(4, 2, np.random.default_rng(3))
    step = build_kalman_step(model)
    r = bench_compare(step.update, 100_000, name="kalman-update")
    assert r.instruction_count == len(step.update.tape.instrs) > 0
    assert r.allocations_per_iter == 0
    assert r.speedup > 1


def test_thread_mode_outputs_identical(projects):
    reports, identical = bench_threads((projects / "kalman.flc").read_text(), 10_000, 4,
                                       name="kalman")
    assert identical and len(reports) == 4
    assert [r.project for r in reports] == [f"kalman#thread{k}" for k in range(4)]


def test_binding_pool_is_seeded():
    from formulac.demos import _binding_pool
    from formulac.pipeline import compile_project
    c = compile_project("input a: matrix[2,2]\noutput y = a\n")
    p1, _, _ = _binding_pool(c, 4, 42)
    p2, _, _ = _binding_pool(c, 4, 42)
    assert all(np.array_equal(a["a"], b["a"]) for a, b in zip(p1, p2))
    assert random_bindings(c.project.inputs, np.random.default_rng(0))["a"].shape == (2, 2)
