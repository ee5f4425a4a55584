import numpy as np

from rdepth.gradcheck import finite_diff_check
from rdepth.layers import conv2d
from rdepth.tensor import Tensor


def test_linear_function_error_at_rounding_level():
    a = np.array([2.0, -3.0, 0.5])
    err = finite_diff_check(lambda x: (x * Tensor(a, dtype=np.float64)).sum(),
                            np.array([1.0, 1.0, 1.0]))
    assert err < 1e-10


def test_square_at_three():
    err = finite_diff_check(lambda x: (x * x).sum(), np.array([3.0]), h=1e-5)
    assert err < 1e-9


def test_conv_layer_on_random_input():
    rng = np.random.default_rng(9)
    k = Tensor(rng.normal(size=(2, 1, 3, 3)), dtype=np.float64)
    w = Tensor(rng.normal(size=(2, 8, 8)), dtype=np.float64)
    err = finite_diff_check(lambda x: (conv2d(x, k) * w).sum(),
                            rng.normal(size=(1, 8, 8)))
    assert err < 1e-6
