import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from monoflow.analysis import (
    BoundCheck,
    GronwallProcess,
    additive_apriori_check,
    additive_conditions_check,
    additive_decomposition,
    box_counting_dimension,
    coalescence_detect,
    delta_complete_check,
    gronwall_const,
    gronwall_mc_verify,
    holder_estimate,
    minkowski_cloud,
    moment_bound_verify,
)
from monoflow.assumptions import SampleDomain
from monoflow.errors import InputError
from monoflow.examples import lookup
from monoflow.field import CoefficientField
from monoflow.integrator import TimeGrid, sample_noise

OU = lookup("linear_ou").field
GBM = lookup("gbm").field
SQRT = lookup("sqrt_coalescing").field
ROT = lookup("rotation").field


def test_gronwall_constant_closed_forms():
    assert gronwall_const(0.5) == pytest.approx(math.pi + 1, abs=1e-12)
    # at p = 1/4 the prefactor is 4 * (pi/4) / sin(pi/4) = pi * sqrt(2)
    assert gronwall_const(0.25) == pytest.approx(math.pi * math.sqrt(2) + 1, abs=1e-12)
    # small p: min(4, 1/p) = 4 and pi p / sin(pi p) -> 1
    assert gronwall_const(1e-8) == pytest.approx(5.0, abs=1e-10)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.5, 2.0])
def test_gronwall_constant_domain(p):
    with pytest.raises(InputError):
        gronwall_const(p)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.99))
def test_gronwall_constant_exceeds_one_and_blows_up_near_one(p):
    c = gronwall_const(p)
    assert c > 1
    assert gronwall_const(0.999) > c or p > 0.999


def test_bound_check_verdict():
    assert BoundCheck("a", 1.0, 0.1, 1.4, 10).verdict == "within_bound"
    assert BoundCheck("a", 1.0, 0.2, 1.4, 10).verdict == "violated"


@pytest.mark.parametrize("kind,x", [("squared_norm", (0.0, 0.0)), ("squared_norm", (1.0,)), ("gbm_square", (1.0,))])
def test_gronwall_mc_deterministic(kind, x):
    chk = gronwall_mc_verify(GronwallProcess(kind, x, 0.5), 0.5, 1.0, 2000, n_steps=64)
    assert chk.ok
    assert chk.details["worst_hypothesis_excess"] <= 1e-8


def test_gronwall_mc_random_mode():
    chk = gronwall_mc_verify(
        GronwallProcess("gbm_square", (1.0,), 0.5), 0.3, 1.0, 2000, n_steps=64,
        mode="random", exponent_mu=2.0, exponent_nu=2.0,
    )
    assert chk.ok


def test_gronwall_mc_input_checks():
    with pytest.raises(InputError):
        gronwall_mc_verify("squared_norm", 0.5, 1.0, 10, mode="random", exponent_mu=3.0, exponent_nu=2.0)
    with pytest.raises(InputError):
        gronwall_mc_verify("squared_norm", 0.5, 0.0, 10)
    with pytest.raises(InputError):
        GronwallProcess("cube")


def test_moment_bound_ou_and_parameter_checks():
    grid = TimeGrid(0.0, 1.0, 100)
    chk = moment_bound_verify(OU, [0.5], [-0.5], 1.0, 0.0, 1.0, 3.0, 1.5, grid, replicas=500, check_pairs=256)
    assert chk.ok
    # additive noise: the difference decays deterministically, sup is at t=0
    assert chk.empirical == pytest.approx(1.0, rel=1e-12)
    for args in [(0.0, 2.5, 2.0, 2.0), (0.0, 1.0, 2.0, 3.0), (2.0, 2.0, 2.0, 2.0), (-1.0, 1.0, 2.0, 2.0)]:
        mu, q, P, Q = args
        with pytest.raises(InputError):
            moment_bound_verify(OU, [0.5], [-0.5], 1.0, mu, q, P, Q, grid, replicas=10)


def test_moment_bound_rejects_field_failing_the_condition():
    with pytest.raises(InputError):
        moment_bound_verify(GBM, [1.0], [0.5], 1.0, 2.0, 1.0, 3.0, 1.5, TimeGrid(0, 1, 10), replicas=10)


def test_holder_slope_is_one_for_linear_fields():
    grid = TimeGrid(0.0, 1.0, 50)
    for field in (OU, GBM):
        est = holder_estimate(field, [1.0], [0.1, 0.01, 0.001], 4.0, grid, replicas=200)
        assert est.slope == pytest.approx(1.0, abs=1e-6)
        assert est.claimed_exponent == 0.75


def test_holder_input_checks():
    grid = TimeGrid(0.0, 1.0, 10)
    with pytest.raises(InputError):
        holder_estimate(OU, [1.0], [0.01, 0.1], 4.0, grid, replicas=10)
    with pytest.raises(InputError):
        holder_estimate(OU, [1.0], [0.1, 0.01], 1.0, grid, replicas=10)


def test_coalescence_of_sqrt_drift():
    # x' = -sqrt(x) from 1 reaches 0 at t = 2; the solution from 0 stays at 0
    grid = TimeGrid(0.0, 3.0, 30_000)
    res = coalescence_detect(SQRT, [1.0], [0.0], grid, sample_noise(grid, 0, 0, 0), 1e-6)
    assert res.first_hit == pytest.approx(2.0, abs=0.01)
    assert res.stays_below
    pinned = coalescence_detect(SQRT, [1.0], [0.0], grid, sample_noise(grid, 0, 0, 0), 1e-6, pin=True)
    assert pinned.pinned and pinned.first_hit == res.first_hit


def test_no_coalescence_for_ou():
    grid = TimeGrid(0.0, 1.0, 100)
    res = coalescence_detect(OU, [1.0], [0.0], grid, sample_noise(grid, 1, 0, 0), 1e-6)
    assert res.first_hit is None and not res.stays_below


@pytest.mark.parametrize("ratio", [0.25, 0.2])
def test_cantor_dust_box_counting(ratio):
    cloud = minkowski_cloud("cantor_dust", 0.0, 4**6, 2, ratio=ratio)
    nominal = 2 * math.log(2) / math.log(1 / ratio)
    assert cloud.nominal_dimension == pytest.approx(nominal)
    sizes = [ratio**k for k in range(1, 5)]
    assert box_counting_dimension(cloud.points, sizes) == pytest.approx(nominal, abs=0.05)


def test_cloud_kinds():
    cloud = minkowski_cloud("cantor_dust", math.log(4) / math.log(3), 256, 2)
    assert cloud.points.shape == (256, 2)
    # r = 2^{-d/delta} = 1/3 reproduces the middle-thirds dust
    assert "r=0.333333333333" in cloud.construction
    seg = minkowski_cloud("segment", 1.0, 11, 3)
    # drop the endpoint 1, which would occupy one extra box at every scale
    half_open = minkowski_cloud("segment", 1.0, 4097, 1).points[:-1]
    assert box_counting_dimension(half_open, [1 / 8, 1 / 64, 1 / 512]) == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(seg.points[:, 1:], 0.0)
    circ = minkowski_cloud("circle", 1.0, 64, 2)
    np.testing.assert_allclose(np.linalg.norm(circ.points, axis=1), 1.0)
    pc = minkowski_cloud("product_cantor", 1.5, 256, 2)
    assert pc.nominal_dimension == 1.5
    with pytest.raises(InputError):
        minkowski_cloud("cantor_dust", 2.5, 64, 2)
    with pytest.raises(InputError):
        minkowski_cloud("sponge", 1.0, 64, 2)


def test_delta_complete_on_ou():
    cloud = minkowski_cloud("cantor_dust", 0.0, 64, 2, ratio=0.25)
    field = CoefficientField(2, lambda x: -x, ROT.diffusion, "ou2")
    chk = delta_complete_check(field, cloud, 1.5, 0.0, TimeGrid(0.0, 1.0, 50), replicas=100, n_pairs=16, check_pairs=256)
    assert chk.ok
    d = chk.details
    assert d["blowup_fraction"] == 0.0
    assert d["max_image_diameter"] <= d["diameter_envelope"]
    assert {"power_reading", "literal_reading", "calibrated_c"} <= set(d)


def test_delta_complete_requires_q_above_dimension():
    cloud = minkowski_cloud("cantor_dust", 1.5, 16, 2)
    with pytest.raises(InputError):
        delta_complete_check(ROT, cloud, 1.2, 0.0, TimeGrid(0, 1, 10), replicas=4)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=2))
def test_additive_decomposition_reconstructs(x):
    x = np.array(x)
    if np.linalg.norm(x) < 1e-3:
        return
    dec = additive_decomposition(ROT.drift, x)
    # rotation is purely tangential
    assert abs(dec.radial_coeff) <= 1e-12
    np.testing.assert_allclose(dec.radial_coeff * x + dec.tangential, ROT.drift(x), atol=1e-12)
    assert abs(np.dot(dec.tangential, x)) <= 1e-9 * (1 + np.dot(x, x))


def test_additive_decomposition_undefined_at_origin():
    with pytest.raises(InputError):
        additive_decomposition(ROT.drift, np.zeros(2))


def test_additive_conditions_rotation():
    rep = additive_conditions_check(ROT.drift, SampleDomain.ball(10.0, 2), 0.5)
    # |x| / (1 + |x|^2) <= 1/2 with equality at |x| = 1
    assert rep.satisfied and 0.49 < rep.fitted_constant <= 0.5 + 1e-6
    assert not additive_conditions_check(ROT.drift, SampleDomain.ball(10.0, 2), 0.4).satisfied


def test_additive_apriori_bound_ou():
    chk = additive_apriori_check(lambda x: -x, 1.0, 1.0, [0.5], TimeGrid(0.0, 1.0, 100), replicas=500)
    assert chk.ok and chk.empirical <= 0.0
    with pytest.raises(InputError):
        additive_apriori_check(lambda x: -x, 1.0, 1.0, [0.5], TimeGrid(0.5, 1.0, 10), replicas=5)
