import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from monoflow.errors import InputError, InvariantError
from monoflow.field import (
    CoefficientField,
    CutoffProfile,
    cov_kernel,
    from_spec,
    jacobi_eigenvalues,
    largest_eigenvalue,
    structure_matrices,
    structure_matrix,
    trace_and_opnorm,
    truncate,
)

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def trig_field():
    # two noise vectors in R^2, deliberately non-linear
    return CoefficientField(
        2,
        lambda x: -x,
        (
            lambda x: np.stack([np.sin(x[..., 0]), np.cos(x[..., 1])], axis=-1),
            lambda x: np.stack([x[..., 0] * x[..., 1], np.tanh(x[..., 0])], axis=-1),
        ),
        "trig",
    )


def test_cov_kernel_matches_explicit_sum():
    f = trig_field()
    x, y = np.array([0.3, -1.2]), np.array([2.0, 0.5])
    expected = np.zeros((2, 2))
    for s in f.diffusion:
        expected += np.outer(s(x), s(y))
    np.testing.assert_allclose(cov_kernel(f, x, y), expected, rtol=1e-14)


@settings(max_examples=60, deadline=None)
@given(arrays(float, 2, elements=finite), arrays(float, 2, elements=finite))
def test_structure_matrix_is_four_term_identity(x, y):
    f = trig_field()
    four = cov_kernel(f, x, x) - cov_kernel(f, x, y) - cov_kernel(f, y, x) + cov_kernel(f, y, y)
    A = structure_matrix(f, x, y).entries
    np.testing.assert_allclose(A, four, atol=1e-10 * (1 + np.abs(four).max()))


@settings(max_examples=60, deadline=None)
@given(arrays(float, 2, elements=finite), arrays(float, 2, elements=finite))
def test_structure_matrix_symmetric_psd_and_bounds(x, y):
    A = structure_matrix(trig_field(), x, y).entries
    assert np.array_equal(A, A.T)
    tr, lam = trace_and_opnorm(A)
    eig = np.linalg.eigvalsh(A)
    assert eig.min() >= -1e-12 * (1 + tr)
    # 0 <= largest eigenvalue <= trace
    assert 0.0 <= lam <= tr * (1 + 1e-12) + 1e-15
    assert abs(lam - eig.max()) <= 1e-10 * (1 + tr)


def test_structure_matrix_vanishes_on_diagonal():
    f = trig_field()
    x = np.array([0.7, -0.1])
    assert np.all(structure_matrix(f, x, x).entries == 0.0)


def test_structure_matrix_rejects_batches():
    with pytest.raises(InputError):
        structure_matrix(trig_field(), np.zeros((3, 2)), np.ones((3, 2)))


@pytest.mark.parametrize("n", [3, 4, 6])
def test_jacobi_matches_eigvalsh(n):
    rng = np.random.default_rng(n)
    m = rng.normal(size=(50, n, n))
    a = m + np.swapaxes(m, 1, 2)
    ours = np.sort(jacobi_eigenvalues(a), axis=-1)
    ref = np.linalg.eigvalsh(a)
    np.testing.assert_allclose(ours, ref, atol=1e-10)


def test_largest_eigenvalue_closed_form_2x2():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(200, 2, 2))
    a = m + np.swapaxes(m, 1, 2)
    np.testing.assert_allclose(largest_eigenvalue(a), np.linalg.eigvalsh(a)[:, -1], atol=1e-12)


def test_trace_and_opnorm_rejects_asymmetric():
    with pytest.raises(InvariantError):
        trace_and_opnorm(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_trace_and_opnorm_batch_shapes():
    A = structure_matrices(trig_field(), np.zeros((4, 2)), np.ones((4, 2)))
    tr, lam = trace_and_opnorm(A)
    assert tr.shape == (4,) and lam.shape == (4,)


@pytest.mark.parametrize("shape", ["quintic", "smooth_exponential"])
def test_cutoff_profile_shape(shape):
    psi = CutoffProfile(shape)
    s = np.linspace(0, 3, 301)
    v = psi(s)
    assert np.all(v[s <= 1] == 1.0)
    assert np.all(v[s >= 2] == 0.0)
    assert np.all(np.diff(v) <= 1e-15)
    # both profiles are symmetric about the midpoint of the transition band
    assert psi(1.5) == pytest.approx(0.5, abs=1e-15)


def test_truncate_value_at_transition():
    cubic = CoefficientField(1, lambda x: x**3, (lambda x: x,))
    t = truncate(cubic, 1.0, CutoffProfile("smooth_exponential"))
    # psi(1.5) = 1/2, so drift = 1/4 * 1.5^3 and diffusion = 1/2 * 1.5
    assert t.b(np.array([1.5]))[0] == pytest.approx(0.84375, rel=1e-14)
    assert t.sigma(np.array([1.5]))[0, 0] == pytest.approx(0.75, rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(arrays(float, 2, elements=st.floats(-10, 10)), st.floats(0.5, 4))
def test_truncate_agrees_inside_and_vanishes_outside(x, N):
    f = trig_field()
    t = truncate(f, N)
    r = np.linalg.norm(x)
    if r <= N:
        np.testing.assert_array_equal(t.b(x), f.b(x))
        np.testing.assert_array_equal(t.sigma(x), f.sigma(x))
    elif r >= 2 * N:
        assert np.all(t.b(x) == 0) and np.all(t.sigma(x) == 0)


def test_truncate_idempotent_inside_ball():
    f = trig_field()
    once = truncate(f, 2.0)
    twice = truncate(once, 2.0)
    x = np.array([[0.5, 0.5], [1.0, -1.2]])
    np.testing.assert_array_equal(once.b(x), twice.b(x))


def test_from_spec_inline_field():
    f = from_spec({"dim": 2, "drift": ["-x1", "x1 - x2"], "diffusion": [["1", "0"], ["0", "x2"]]})
    x = np.array([1.0, 3.0])
    np.testing.assert_allclose(f.b(x), [-1.0, -2.0])
    np.testing.assert_allclose(f.sigma(x), [[1.0, 0.0], [0.0, 3.0]])


@pytest.mark.parametrize("spec", [{}, {"dim": 1, "drift": "x1"}, {"dim": 1, "drift": ["x1", "x1"]}])
def test_from_spec_rejects_bad_specs(spec):
    with pytest.raises(InputError):
        from_spec(spec)


def test_dimension_mismatch():
    with pytest.raises(InputError):
        trig_field().b(np.zeros(3))
