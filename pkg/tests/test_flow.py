import math

import numpy as np
import pytest

from flowtop import brownian
from flowtop.errors import HorizonExceeded
from flowtop.fields import (GeometricMultiplicative, HyperbolicContraction, LinearContraction,
                            SphereGradientFrame, TorusTranslation, ZeroField)
from flowtop.flow import (FlowRealization, compose_check, exit_fraction, exit_probability_estimate, exit_time,
                          first_exit_steps, flow_map, integrate, simulate, step_doubling_order, tangent_flow)
from flowtop.manifolds import Euclidean, FlatTorus, Sphere
from flowtop.regions import Region

import oracles


def specs():
    return [
        LinearContraction(2, 1.0, 0.5),
        GeometricMultiplicative(1.0, 0.5),
        TorusTranslation(FlatTorus.unit(2), 0.8),
        SphereGradientFrame(Sphere(2)),
        HyperbolicContraction(1.0, 0.4),
    ]


@pytest.mark.parametrize("spec", specs(), ids=repr)
def test_time_zero_is_identity(spec):
    rng = np.random.default_rng(0)
    x = spec.manifold.random_point(rng, (5,))
    R = FlowRealization.sample(spec, 1.0, 0.01, 3)
    assert np.array_equal(flow_map(R, x, 0.0), x)
    v = spec.manifold.random_tangent(rng, x)
    base, w = tangent_flow(R, x, v, 0.0)
    assert np.array_equal(base, x) and np.array_equal(w, v)


@pytest.mark.parametrize("spec", specs(), ids=repr)
def test_constraint_preserved(spec):
    M = spec.manifold
    x = M.random_point(np.random.default_rng(1), (6,))
    R = FlowRealization.sample(spec, 2.0, 0.01, 4)
    traj = R.trajectory(x, 2.0)
    assert np.max(np.abs(M.constraint_residual(traj))) <= 1e-8


@pytest.mark.parametrize("spec", specs(), ids=repr)
def test_same_evaluation_twice_is_identical(spec):
    x = spec.manifold.random_point(np.random.default_rng(2), (3,))
    R = FlowRealization.sample(spec, 1.0, 0.01, 8)
    assert np.array_equal(flow_map(R, x, 0.7), flow_map(R, x, 0.7))


def test_torus_flow_is_path_sum():
    T = FlatTorus.unit(1)
    spec = TorusTranslation(T, sigma=1.0, dim=1)
    R = FlowRealization.sample(spec, 1.0, 0.01, 0, 5)
    x = np.array([0.3])
    B = R.path.values()
    for n in (1, 37, 100):
        expected = np.mod(x + B[n], 1.0)
        assert T.dist(flow_map(R, x, n * 0.01), expected) < 1e-12


def test_torus_tangent_is_isometric():
    spec = TorusTranslation(FlatTorus.unit(2), 1.0)
    R = FlowRealization.sample(spec, 1.0, 0.01, 0, 1)
    v = np.array([0.3, -0.4])
    _, w = tangent_flow(R, np.array([0.1, 0.2]), v, 1.0)
    assert abs(np.linalg.norm(w) - 0.5) < 1e-12


def test_gbm_tangent_closed_form():
    lam, sig = 1.0, 0.5
    spec = GeometricMultiplicative(lam, sig)
    for trial in range(3):
        R = FlowRealization.sample(spec, 0.5, 1e-4, 21, trial)
        _, w = tangent_flow(R, np.array([1.3]), np.array([1.0]), 0.5)
        exact = math.exp(-lam * 0.5 + sig * R.path.values()[-1, 0])
        assert abs(w[0] / exact - 1) < 1e-5


@pytest.mark.parametrize("spec", specs(), ids=repr)
def test_tangent_matches_finite_differences(spec):
    """Relative error <= 1e-3 at eps = 1e-5 on 100 random (x, v, omega)."""
    M = spec.manifold
    rng = np.random.default_rng(3)
    B, eps, dt, n = 100, 1e-5, 0.01, 30
    x = M.random_point(rng, (B,))
    v = M.random_tangent(rng, x)
    v = v / M.norm(x, v)[:, None]
    x_eps = M.exp(x, eps * v)
    dB = brownian.increment_block(17, range(B), n, spec.m, dt)
    base = integrate(spec, x[:, None], dB, dt, v0=v[:, None], keep_positions=False)
    moved = integrate(spec, x_eps[:, None], dB, dt, keep_positions=False)["x"]
    fd = M.log(base["x"], moved, check=False) / eps
    err = np.linalg.norm(fd - base["v"], axis=-1) / np.linalg.norm(base["v"], axis=-1)
    assert np.max(err) <= 1e-3


def test_compose_check_examples():
    T = TorusTranslation(FlatTorus.unit(2), 1.0)
    R = FlowRealization.sample(T, 1.0, 0.01, 0, 0)
    assert compose_check(R, np.array([0.2, 0.9]), 0.0, 0.7) == 0.0
    assert compose_check(R, np.array([0.2, 0.9]), 0.5, 0.5) <= 1e-12
    L = LinearContraction(2, 1.0, 0.3)
    R = FlowRealization.sample(L, 1.0, 0.01, 0, 0)
    assert compose_check(R, np.array([1.0, -1.0]), 0.3, 0.7) <= 1e-10


def test_one_path_drives_every_point():
    spec = SphereGradientFrame(Sphere(2))
    R = FlowRealization.sample(spec, 0.5, 0.01, 2, 0)
    before = brownian.draw_count()
    flow_map(R, np.array([1.0, 0, 0]), 0.5)
    flow_map(R, np.array([0, 0, 1.0]), 0.5)
    flow_map(R, np.array([[0, 1.0, 0], [0, -1.0, 0]]), 0.25)
    assert brownian.draw_count() - before == 1


def test_horizon_and_snapping():
    spec = LinearContraction(1, 1.0, 1.0)
    R = FlowRealization.sample(spec, 1.0, 0.01, 0, 0)
    with pytest.raises(HorizonExceeded):
        flow_map(R, np.array([0.0]), 1.5)
    res = R.evaluate(np.array([0.0]), 0.505)
    assert res.snapped and res.n_steps == 50 and res.time_used == pytest.approx(0.5)
    assert not R.evaluate(np.array([0.0]), 0.5).snapped


def test_ensemble_independent_of_workers_and_block_size():
    spec = LinearContraction(2, 1.0, 0.5)
    x0 = np.array([[1.0, 0.0], [0.0, 1.0]])
    a = simulate(spec, x0, 0.01, 50, 3, 300, record_steps=[10, 50], workers=1)
    b = simulate(spec, x0, 0.01, 50, 3, 300, record_steps=[10, 50], workers=3)
    c = simulate(spec, x0, 0.01, 50, 3, 300, record_steps=[10, 50], block_size=7)
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.positions, c.positions)
    R = FlowRealization.sample(spec, 0.5, 0.01, 3, 123)
    assert np.allclose(a.positions[123, 1], flow_map(R, x0, 0.5), atol=0, rtol=0)


def test_ou_moments():
    spec = LinearContraction(1, 1.0, 1.0)
    tr = simulate(spec, np.array([[0.5]]), 0.01, 100, 5, 4000, record_steps=[100], keep_tangents=False)
    x = tr.positions[:, 0, 0, 0]
    n = len(x)
    m, var = oracles.ou_mean(0.5, 1, 1), oracles.ou_var(1, 1, 1)
    assert abs(x.mean() - m) < 3 * math.sqrt(var / n)
    assert abs(x.var(ddof=1) - var) < 3 * var * math.sqrt(2 / (n - 1))


def test_step_doubling_gbm():
    rep = step_doubling_order(GeometricMultiplicative(1.0, 0.5), [[1.0]], 1.0, 2**-9, 3, 2000, 4)
    assert rep.order > 0.9 and np.all(rep.errors <= rep.constant * rep.dts + 1e-15)
    exact = step_doubling_order(TorusTranslation(FlatTorus.unit(1), 1.0, dim=1), [[0.3]], 1.0, 2**-6, 2, 10, 0)
    assert exact.order == math.inf


# -- exit times ------------------------------------------------------------------

def test_zero_field_never_exits():
    R = FlowRealization.sample(ZeroField(Euclidean(1), 1), 1.0, 0.01, 0)
    assert exit_time(R, np.array([0.0]), Region.ball([0.0], 1.0), 1.0) is None
    est = exit_probability_estimate(ZeroField(Euclidean(1), 1), [[0.0]], Region.ball([0.0], 1.0), 0.5, 100, 0, 0.01)
    assert est.successes == 0 and est.estimate == 0.0


def test_outward_drift_exits_quickly():
    spec = LinearContraction(1, -2.0, 0.1)
    W = Region.ball([0.0], 1.0)
    steps = first_exit_steps(spec, [[1.0 - 1e-12]], W, 0.2, 0.001, 1000, 0)
    assert np.mean((steps >= 0) & (steps <= 10)) >= 0.99


def test_exit_fraction_monotone_in_delta():
    spec = LinearContraction(1, 0.0, 1.0)
    W = Region.ball([0.0], 1.0)
    steps = first_exit_steps(spec, [[0.0], [0.8]], W, 0.5, 0.01, 500, 1)
    p = [exit_fraction(steps, d, 0.01).estimate for d in (0.01, 0.1, 0.2, 0.5)]
    assert p == sorted(p)


def test_exit_requires_start_inside():
    R = FlowRealization.sample(LinearContraction(1, 0.0, 1.0), 1.0, 0.01, 0)
    with pytest.raises(ValueError):
        exit_time(R, np.array([2.0]), Region.ball([0.0], 1.0), 1.0)
