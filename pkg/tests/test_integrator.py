import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from monoflow.errors import InputError
from monoflow.field import CoefficientField
from monoflow.integrator import (
    TimeGrid,
    compose_check,
    euler,
    evolve,
    flow_grid,
    map_replicas,
    noise_block,
    sample_noise,
    simulate,
)

OU = CoefficientField(1, lambda x: -x, (lambda x: np.ones_like(x),), "ou")
GBM = CoefficientField(1, lambda x: 0.0 * x, (lambda x: x,), "gbm")
CUBIC = CoefficientField(1, lambda x: x**3, (), "cubic")


def test_time_grid_validation_and_index():
    g = TimeGrid(0.0, 1.0, 10)
    assert g.step == pytest.approx(0.1)
    assert g.index_of(0.3) == 3
    with pytest.raises(InputError):
        g.index_of(0.35)
    for bad in [(1.0, 1.0, 10), (-1.0, 1.0, 10), (0.0, 1.0, 0), (0.0, 1.0, 2.5)]:
        with pytest.raises(InputError):
            TimeGrid(*bad)


def test_noise_is_deterministic_and_replica_keyed():
    g = TimeGrid(0.0, 1.0, 50)
    a = sample_noise(g, 2, 7, 3).increments
    assert np.array_equal(a, sample_noise(g, 2, 7, 3).increments)
    assert not np.array_equal(a, sample_noise(g, 2, 7, 4).increments)
    assert not np.array_equal(a, sample_noise(g, 2, 8, 3).increments)
    assert np.array_equal(noise_block(g, 2, 7, [3, 4])[0], a)


def test_increment_moments_over_many_replicas():
    g = TimeGrid(0.0, 1.0, 4)
    dw = noise_block(g, 1, 11, range(100_000)).ravel()
    n = dw.size
    se_mean = math.sqrt(g.step / n)
    assert abs(dw.mean()) < 4 * se_mean
    # Var of the sample variance of N(0, s) is 2 s^2 / n
    assert abs(dw.var() - g.step) < 4 * math.sqrt(2 / n) * g.step


def test_coarsen_preserves_the_path():
    g = TimeGrid(0.0, 1.0, 64)
    nz = sample_noise(g, 2, 0, 0)
    c = nz.coarsen(8)
    assert c.grid.n_steps == 8
    np.testing.assert_allclose(c.increments.sum(axis=0), nz.increments.sum(axis=0), atol=1e-13)
    with pytest.raises(InputError):
        nz.coarsen(5)


def test_deterministic_ode_matches_exponential_decay():
    drift_only = CoefficientField(1, lambda x: -x, ())
    g = TimeGrid(0.0, 1.0, 100_000)
    states = evolve(drift_only, [1.0], 0.0, g, sample_noise(g, 0, 0, 0))
    assert states[-1].value[0] == pytest.approx(math.exp(-1.0), rel=1e-5)


def test_ou_mean_and_variance():
    g = TimeGrid(0.0, 1.0, 200)
    out = simulate(OU, [[1.0]], g, 3, 4000, _FinalObserver)
    x = out["final"][:, 0, 0]
    # exact law: N(e^{-1}, (1 - e^{-2}) / 2); Euler bias is O(step)
    var = (1 - math.exp(-2)) / 2
    assert abs(x.mean() - math.exp(-1)) < 4 * math.sqrt(var / x.size) + 0.01
    assert abs(x.var() - var) < 0.05


class _FinalObserver:
    def __init__(self, dw, x0):
        pass

    def start(self, x):
        pass

    def update(self, k, x, alive):
        self.x = x

    def finish(self, res):
        return {"final": res.final.copy()}


def test_additive_noise_cancels_in_differences():
    # with shared additive noise, x - y evolves deterministically: (x - y)(1 - dt)^n
    g = TimeGrid(0.0, 1.0, 100)
    fg = flow_grid(OU, [[2.0], [0.5]], [0.0], g, sample_noise(g, 1, 5, 0))
    diff = fg.values[0, -1, 0, 0] - fg.values[0, -1, 1, 0]
    assert diff == pytest.approx(1.5 * (1 - g.step) ** 100, rel=1e-12)


def _strong_errors(field, exact, x0, fine_n, factors, replicas):
    fine = TimeGrid(0.0, 1.0, fine_n)
    dw = noise_block(fine, field.noise_dim, 21, range(replicas))
    x = np.full((replicas, 1, 1), x0)
    if exact:
        ref = exact(dw)
    else:
        ref = euler(field, x, dw, fine.step).final[:, 0, 0]
    means = []
    for f in factors:
        coarse = dw.reshape(replicas, fine_n // f, f, -1).sum(axis=2)
        approx = euler(field, x, coarse, fine.step * f).final[:, 0, 0]
        means.append(np.mean(np.abs(approx - ref)))
    steps = np.array([fine.step * f for f in factors])
    return np.polyfit(np.log(steps), np.log(means), 1)[0]


def test_strong_order_additive_noise_is_one():
    slope = _strong_errors(OU, None, 1.0, 2048, [16, 32, 64, 128], 1000)
    assert slope >= 0.9


def test_strong_order_gbm_against_exact_solution():
    def exact(dw):
        return np.exp(-0.5 + dw.sum(axis=(1, 2)))

    slope = _strong_errors(GBM, exact, 1.0, 1024, [4, 8, 16, 32, 64], 2000)
    assert 0.4 <= slope <= 0.75


def test_blowup_recorded_with_exit_time():
    g = TimeGrid(0.0, 1.0, 10_000)
    states = evolve(CUBIC, [1.0], 0.0, g, sample_noise(g, 0, 0, 0))
    last = states[-1]
    assert last.blown_up and last.value is None
    assert last.exit_time == pytest.approx(0.5, abs=0.01)
    first_dead = next(i for i, s in enumerate(states) if s.blown_up)
    assert all(s.blown_up for s in states[first_dead:])


@settings(max_examples=10, deadline=None)
@given(st.floats(10.0, 1e3), st.floats(2.0, 100.0))
def test_larger_radius_exits_no_earlier(r_small, factor):
    g = TimeGrid(0.0, 1.0, 2000)
    nz = sample_noise(g, 0, 0, 0)
    small = evolve(CUBIC, [1.0], 0.0, g, nz, R_max=r_small)[-1].exit_time
    big = evolve(CUBIC, [1.0], 0.0, g, nz, R_max=r_small * factor)[-1].exit_time
    assert big >= small


def test_localization_agrees_before_exit_from_ball():
    # a trajectory that never leaves |x| < R is unaffected by stopping at R
    g = TimeGrid(0.0, 1.0, 500)
    nz = sample_noise(g, 1, 2, 0)
    a = evolve(OU, [0.3], 0.0, g, nz, R_max=1e6)
    b = evolve(OU, [0.3], 0.0, g, nz, R_max=50.0)
    assert not b[-1].blown_up
    assert np.array_equal(a[-1].value, b[-1].value)


def test_semiflow_on_ou_and_gbm():
    g = TimeGrid(0.0, 1.0, 40)
    for field in (OU, GBM):
        fg = flow_grid(field, [[0.5], [-1.0]], [0.0, 0.25, 0.5], g, sample_noise(g, 1, 9, 0))
        for s, t, u in [(0.0, 0.25, 1.0), (0.25, 0.5, 0.75), (0.0, 0.0, 0.5), (0.5, 1.0, 1.0)]:
            for i in range(2):
                assert compose_check(fg, s, t, u, i) <= 1e-12


def test_semiflow_with_blowup_agrees_on_exit_time():
    g = TimeGrid(0.0, 1.0, 1000)
    fg = flow_grid(CUBIC, [[1.0]], [0.0], g, sample_noise(g, 0, 0, 0))
    assert compose_check(fg, 0.0, 0.2, 0.9, 0) == 0.0
    assert compose_check(fg, 0.0, 0.8, 0.9, 0) == 0.0


def test_euler_observer_sees_every_step():
    seen = []

    class Obs:
        def start(self, x):
            seen.append(-1)

        def update(self, k, x, alive):
            seen.append(k)

    euler(OU, np.zeros((1, 1, 1)), np.zeros((1, 5, 1)), 0.1, observer=Obs())
    assert seen == [-1, 0, 1, 2, 3, 4]


def test_map_replicas_independent_of_threads():
    def fn(chunk):
        return {"v": noise_block(TimeGrid(0, 1, 3), 1, 4, chunk).sum(axis=(1, 2))}

    one = map_replicas(fn, 1000, threads=1)
    four = map_replicas(fn, 1000, threads=4)
    assert np.array_equal(one["v"], four["v"])
