import numpy as np
import pytest

from monoflow.errors import InputError
from monoflow.expr import Expression, scalar_function, vector_function


def test_vector_function_evaluates_componentwise():
    f = vector_function(["-x1 + x2", "x1*x2", "norm(x)"], 3)
    x = np.array([[1.0, 2.0, 2.0], [0.0, -1.0, 0.0]])
    out = f(x)
    assert out.shape == (2, 3)
    np.testing.assert_allclose(out[0], [1.0, 2.0, 3.0])
    np.testing.assert_allclose(out[1], [-1.0, 0.0, 1.0])


def test_constant_components_broadcast():
    f = vector_function(["1", "0"], 2)
    assert f(np.zeros((5, 2))).shape == (5, 2)


def test_scalar_function_and_logplus():
    f = scalar_function("logplus(u) + 2*u**2")
    np.testing.assert_allclose(f([0.5, np.e]), [0.5, 1.0 + 2 * np.e**2])


@pytest.mark.parametrize(
    "src",
    ["__import__('os')", "x1.real", "open('f')", "x9", "[1, 2]", "lambda: 1", "'s'", "x1 if x1 else 0"],
)
def test_rejects_unsafe_or_unknown(src):
    with pytest.raises(InputError):
        vector_function([src], 1)


def test_malformed_expression():
    with pytest.raises(InputError):
        Expression("x1 +", frozenset({"x1"}))


def test_wrong_component_count():
    with pytest.raises(InputError):
        vector_function(["x1"], 2)
