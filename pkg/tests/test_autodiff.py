"""Finite-difference checks for every autodiff op.

Each op is compared against central differences on 20 random instances.
The tolerance is a norm-wise relative error of 1e-3; inputs are sampled
away from kinks (relu zero crossings, pool ties, clip edges) so the
numeric oracle itself is trustworthy.
"""

import numpy as np
import pytest

from tanlab import autodiff as ad
from tanlab.autodiff import Tensor, backward
from tanlab.network import Conv3x3, Linear

from util import away_from_zero, numeric_gradient, pool_safe_input, relative_error

TOL = 1e-3
INSTANCES = 20


def check(f_np, arrays, grads_of, f_ad=None):
    """Compare backward() gradients of f_ad against numeric ones of f_np.

    f_np consumes plain arrays and returns a float; f_ad (default: f_np)
    consumes Tensors and returns a scalar Tensor. grads_of lists the
    argument indices to differentiate.
    """
    f_ad = f_ad or f_np
    tensors = [Tensor(a, requires_grad=(i in grads_of)) for i, a in enumerate(arrays)]
    loss = f_ad(*tensors)
    backward(loss)
    for i in grads_of:
        numeric = numeric_gradient(lambda *xs: float(f_np(*xs)), arrays, i)
        err = relative_error(tensors[i].grad, numeric)
        assert err < TOL, f"gradient mismatch on arg {i}: rel err {err:.2e}"


def wrap_np(f_ad):
    """Lift a Tensor-valued function to accept/return plain numpy."""
    def f(*arrays):
        out = f_ad(*[Tensor(a) for a in arrays])
        return float(out.data)
    return f


def run_instances(make_case):
    for seed in range(INSTANCES):
        rng = np.random.default_rng(1000 + seed)
        f_ad, arrays, grads_of = make_case(rng)
        check(wrap_np(f_ad), arrays, grads_of, f_ad)


def test_add_broadcast():
    def case(rng):
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4,))
        return (lambda x, y: ad.tsum(ad.mul(ad.add(x, y), ad.add(x, y)))), [a, b], [0, 1]
    run_instances(case)


def test_mul_broadcast():
    def case(rng):
        a = rng.normal(size=(2, 3, 4))
        b = rng.normal(size=(3, 1))
        return (lambda x, y: ad.tsum(ad.mul(x, y))), [a, b], [0, 1]
    run_instances(case)


def test_power():
    def case(rng):
        a = rng.uniform(0.3, 2.0, size=(3, 5))
        c = float(rng.uniform(0.5, 3.0))
        return (lambda x: ad.tsum(ad.power(x, c))), [a], [0]
    run_instances(case)


def test_matmul():
    def case(rng):
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        return (lambda x, y: ad.tsum(ad.power(ad.matmul(x, y), 2.0))), [a, b], [0, 1]
    run_instances(case)


def test_transpose_reshape():
    def case(rng):
        a = rng.normal(size=(3, 4))
        def f(x):
            return ad.tsum(ad.mul(ad.reshape(ad.transpose(x), (2, 6)),
                                  ad.reshape(ad.transpose(x), (2, 6))))
        return f, [a], [0]
    run_instances(case)


def test_sum_axes():
    def case(rng):
        a = rng.normal(size=(3, 4, 2))
        axis = rng.integers(0, 3)
        keep = bool(rng.integers(0, 2))
        def f(x):
            partial = ad.tsum(x, axis=int(axis), keepdims=keep)
            return ad.tsum(ad.mul(partial, partial))
        return f, [a], [0]
    run_instances(case)


def test_mean():
    def case(rng):
        a = rng.normal(size=(4, 3))
        def f(x):
            m = ad.tmean(x, axis=1)
            return ad.tsum(ad.mul(m, m))
        return f, [a], [0]
    run_instances(case)


def test_relu():
    def case(rng):
        a = away_from_zero(rng, (4, 5))
        return (lambda x: ad.tsum(ad.relu(x))), [a], [0]
    run_instances(case)


def test_sigmoid():
    def case(rng):
        a = rng.normal(size=(3, 4)) * 2.0
        return (lambda x: ad.tsum(ad.sigmoid(x))), [a], [0]
    run_instances(case)


def test_exp_log():
    def case(rng):
        a = rng.uniform(0.2, 3.0, size=(3, 4))
        return (lambda x: ad.tsum(ad.log(ad.exp(x) + 1.0))), [a], [0]
    run_instances(case)


def test_clip():
    def case(rng):
        a = rng.normal(size=(4, 4)) * 2.0
        # keep samples at least 0.05 from the clip edges
        a = np.where(np.abs(np.abs(a) - 1.0) < 0.05, a * 1.2, a)
        return (lambda x: ad.tsum(ad.mul(ad.clip(x, -1.0, 1.0), x))), [a], [0]
    run_instances(case)


def test_mse():
    def case(rng):
        a = rng.normal(size=(5, 3))
        b = rng.normal(size=(5, 3))
        return (lambda x, y: ad.mse(x, y)), [a, b], [0, 1]
    run_instances(case)


def test_log_softmax_and_cross_entropy():
    def case(rng):
        logits = rng.normal(size=(4, 5)) * 3.0
        labels = rng.integers(0, 5, size=4)
        return (lambda x: ad.cross_entropy(x, labels)), [logits], [0]
    run_instances(case)


def test_conv2d():
    def case(rng):
        x = rng.normal(size=(2, 2, 5, 6))
        w = rng.normal(size=(3, 2, 3, 3)) * 0.5
        b = rng.normal(size=(3,))
        def f(xi, wi, bi):
            out = ad.conv2d(xi, wi, bi)
            return ad.tsum(ad.mul(out, out))
        return f, [x, w, b], [0, 1, 2]
    run_instances(case)


def test_maxpool2():
    def case(rng):
        h = int(rng.choice([4, 5, 6]))
        w = int(rng.choice([4, 5, 7]))
        x = pool_safe_input(rng, 2, 2, h, w)
        return (lambda xi: ad.tsum(ad.power(ad.maxpool2(xi), 2.0))), [x], [0]
    run_instances(case)


def test_conv_relu_pool_linear_end_to_end():
    """Finite differences through a two-stage conv net on sampled coordinates."""
    rng = np.random.default_rng(7)
    conv_a = Conv3x3("a", 1, 4, rng)
    conv_b = Conv3x3("b", 4, 4, rng)
    head = Linear("h", 16, 3, rng)
    x = rng.normal(size=(3, 1, 8, 8))
    labels = np.array([0, 2, 1])

    def loss_value():
        z = ad.maxpool2(ad.relu(conv_a(Tensor(x))))
        z = ad.maxpool2(ad.relu(conv_b(z)))
        z = ad.reshape(z, (3, 16))
        return ad.cross_entropy(head(z), labels)

    loss = loss_value()
    backward(loss)
    params = {}
    for mod in (conv_a, conv_b, head):
        params.update(mod.named_parameters())
    checked = 0
    for name, tensor in params.items():
        flat = tensor.data.reshape(-1)
        grad = tensor.grad.reshape(-1)
        for idx in rng.choice(flat.size, size=min(8, flat.size), replace=False):
            keep = flat[idx]
            h = 1e-4
            flat[idx] = keep + h
            hi = float(loss_value().data)
            flat[idx] = keep - h
            lo = float(loss_value().data)
            flat[idx] = keep
            numeric = (hi - lo) / (2 * h)
            denom = max(abs(grad[idx]), abs(numeric), 1e-6)
            assert abs(grad[idx] - numeric) / denom < 5e-3, \
                f"{name}[{idx}]: analytic {grad[idx]:.6g} vs numeric {numeric:.6g}"
            checked += 1
    assert checked >= 30


def test_backward_rejects_non_scalar():
    t = Tensor(np.ones((2, 3)), requires_grad=True)
    with pytest.raises(ValueError):
        backward(ad.mul(t, 2.0))


def test_gradients_accumulate_for_reused_nodes():
    t = Tensor(np.array([2.0, 3.0]), requires_grad=True)
    # y = t*t + t  => dy/dt = 2t + 1
    loss = ad.tsum(ad.add(ad.mul(t, t), t))
    backward(loss)
    assert np.allclose(t.grad, 2 * t.data + 1)


def test_constants_get_no_gradient():
    t = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    c = Tensor(np.array([5.0, 6.0]))
    loss = ad.tsum(ad.mul(t, c))
    backward(loss)
    assert c.grad is None
    assert np.allclose(t.grad, c.data)


def test_tensors_are_float64():
    t = Tensor(np.ones((2, 2), dtype=np.float32))
    assert t.data.dtype == np.float64


def test_detach_blocks_gradient():
    t = Tensor(np.array([3.0]), requires_grad=True)
    loss = ad.tsum(ad.mul(t.detach(), t))
    backward(loss)
    assert np.allclose(t.grad, [3.0])
