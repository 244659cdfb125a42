"""Backend parity: the compiled core and the numpy fallback must agree."""

import numpy as np
import pytest

from xattrib._kernels import pure

try:
    from xattrib._kernels import _core as compiled
except ImportError:
    compiled = None

needs_compiled = pytest.mark.skipif(
    compiled is None, reason="compiled kernel extension not built"
)

ACTS = [pure.ACT_IDENTITY, pure.ACT_RELU, pure.ACT_SIGMOID, pure.ACT_TANH,
        pure.ACT_SOFTMAX]


@needs_compiled
def test_dense_forward_parity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        out_n, in_n = rng.integers(1, 9, 2)
        W = rng.normal(size=(out_n, in_n))
        b = rng.normal(size=out_n)
        x = rng.normal(size=in_n)
        np.testing.assert_allclose(compiled.dense_forward(W, b, x),
                                   pure.dense_forward(W, b, x), rtol=1e-13)
        v = rng.normal(size=out_n)
        np.testing.assert_allclose(compiled.matvec_transpose(W, v),
                                   pure.matvec_transpose(W, v), rtol=1e-13)


@needs_compiled
@pytest.mark.parametrize("code", ACTS)
def test_activation_parity(code):
    rng = np.random.default_rng(code)
    pre = rng.normal(scale=3.0, size=17)
    out_c = compiled.apply_activation(code, pre)
    out_p = pure.apply_activation(code, pre)
    np.testing.assert_allclose(out_c, out_p, rtol=1e-13, atol=1e-300)
    gout = rng.normal(size=17)
    np.testing.assert_allclose(
        compiled.activation_vjp(code, pre, out_c, gout),
        pure.activation_vjp(code, pre, out_p, gout), rtol=1e-12, atol=1e-14)


@needs_compiled
@pytest.mark.parametrize("kernel,stride,pad", [
    (3, 1, (0, 0)), (3, 1, (1, 1)), (3, 2, (0, 0)), (3, 2, (1, 0)),
    (2, 1, (0, 0)),  # even kernel, same-style asymmetric implicit pad
])
def test_conv2d_parity(kernel, stride, pad):
    rng = np.random.default_rng(7)
    filters = rng.normal(size=(3, 2, kernel, kernel))
    x = rng.normal(size=(2, 6, 7))
    pad_h, pad_w = pad
    if kernel == 2:
        # ceil(h / stride) outputs: the last window pokes past the input
        out_h, out_w = 6, 7
    else:
        out_h = (6 + 2 * pad_h - kernel) // stride + 1
        out_w = (7 + 2 * pad_w - kernel) // stride + 1
    yc = compiled.conv2d_forward(filters, x, stride, pad_h, pad_w,
                                 out_h, out_w)
    yp = pure.conv2d_forward(filters, x, stride, pad_h, pad_w, out_h, out_w)
    np.testing.assert_allclose(yc, yp, rtol=1e-12, atol=1e-14)
    gout = rng.normal(size=yc.shape)
    gc = compiled.conv2d_input_vjp(filters, gout, stride, pad_h, pad_w,
                                   2, 6, 7)
    gp = pure.conv2d_input_vjp(filters, gout, stride, pad_h, pad_w, 2, 6, 7)
    np.testing.assert_allclose(gc, gp, rtol=1e-12, atol=1e-14)


@needs_compiled
def test_pool_parity():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 6, 6))
    yc, ac = compiled.maxpool2d_forward(x, 2)
    yp, ap = pure.maxpool2d_forward(x, 2)
    np.testing.assert_array_equal(yc, yp)
    np.testing.assert_array_equal(ac, ap)
    gout = rng.normal(size=yc.shape)
    np.testing.assert_array_equal(
        compiled.maxpool2d_input_vjp(ac, gout, 2, 6, 6),
        pure.maxpool2d_input_vjp(ap, gout, 2, 6, 6))
    np.testing.assert_allclose(compiled.avgpool2d_forward(x, 3),
                               pure.avgpool2d_forward(x, 3), rtol=1e-13)
    g2 = rng.normal(size=(2, 2, 2))
    np.testing.assert_allclose(
        compiled.avgpool2d_input_vjp(g2, 3, 2, 6, 6),
        pure.avgpool2d_input_vjp(g2, 3, 2, 6, 6), rtol=1e-13)


@needs_compiled
def test_maxpool_tie_breaks_to_lowest_index_in_both_backends():
    x = np.zeros((1, 2, 2))
    x[0] = [[5.0, 5.0], [5.0, 5.0]]
    for impl in (compiled, pure):
        y, arg = impl.maxpool2d_forward(x, 2)
        assert y[0, 0, 0] == 5.0
        assert arg[0, 0, 0] == 0  # lowest flat index wins the tie
