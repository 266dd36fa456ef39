"""Backbone shape/count checks, Adam behavior, and weights-file round-trips."""

import numpy as np
import pytest

from tanlab.autodiff import Tensor, backward, tsum, mul, relu, maxpool2
from tanlab.network import (Adam, CompletenessHead, FeatureExtractor, MeaningHead,
                            count_parameters, load_into, load_weights, save_weights)


def test_parameter_count_is_exact():
    net = FeatureExtractor(seed=0)
    # 1->64 conv: 64*1*9 + 64 = 640; each 64->64 conv: 64*64*9 + 64 = 36928
    assert count_parameters(net) == 640 + 3 * 36928 == 111424


def test_forward_shapes_halve_each_stage():
    net = FeatureExtractor(seed=0)
    x = Tensor(np.random.default_rng(0).random((2, 1, 28, 28)))
    sizes = []
    z = x
    for conv in (net.conv1, net.conv2, net.conv3, net.conv4):
        z = maxpool2(relu(conv(z)))
        sizes.append(z.shape[2])
    assert sizes == [14, 7, 3, 1]
    assert net(x).shape == (2, 64)


def test_heads_shapes_and_ranges():
    net = FeatureExtractor(seed=0)
    comp = CompletenessHead(seed=1)
    mean = MeaningHead(seed=2)
    feats = net(Tensor(np.random.default_rng(1).random((3, 1, 28, 28))))
    scores = comp(feats)
    assert scores.shape == (3,)
    assert np.all((scores.data > 0) & (scores.data < 1))
    assert mean(feats).shape == (3, 50)


def test_init_is_seeded_and_glorot_bounded():
    a = FeatureExtractor(seed=5)
    b = FeatureExtractor(seed=5)
    c = FeatureExtractor(seed=6)
    for name, p in a.named_parameters().items():
        assert np.array_equal(p.data, b.named_parameters()[name].data)
    assert any(not np.array_equal(p.data, c.named_parameters()[name].data)
               for name, p in a.named_parameters().items())
    lim1 = np.sqrt(6.0 / (1 * 9 + 64 * 9))
    lim2 = np.sqrt(6.0 / (64 * 9 + 64 * 9))
    assert np.all(np.abs(a.conv1.w.data) <= lim1)
    assert np.abs(a.conv1.w.data).max() > 0.5 * lim1
    assert np.all(np.abs(a.conv2.w.data) <= lim2)
    for conv in (a.conv1, a.conv2, a.conv3, a.conv4):
        assert np.all(conv.b.data == 0.0)


def test_adam_first_step_magnitude():
    # with fresh moments the first update is lr * g/(|g| + eps) ~= lr * sign(g)
    p = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    opt = Adam([p], lr=0.001)
    p.grad = np.array([0.5, -0.25, 4.0])
    before = p.data.copy()
    opt.step()
    assert np.allclose(before - p.data, 0.001 * np.sign(p.grad), atol=1e-9)


def test_adam_matches_reference_updates():
    rng = np.random.default_rng(3)
    p = Tensor(rng.normal(size=(4,)), requires_grad=True)
    ref = p.data.copy()
    m = np.zeros(4)
    v = np.zeros(4)
    opt = Adam([p], lr=0.01)
    for t in range(1, 6):
        g = rng.normal(size=(4,))
        p.grad = g.copy()
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert np.allclose(p.data, ref, atol=1e-12)


def test_adam_descends_a_quadratic():
    target = np.array([1.5, -0.5])
    p = Tensor(np.zeros(2), requires_grad=True)
    opt = Adam([p], lr=0.05)
    for _ in range(400):
        opt.zero_grad()
        loss = tsum(mul(p - Tensor(target), p - Tensor(target)))
        backward(loss)
        opt.step()
    assert np.allclose(p.data, target, atol=1e-3)


def test_weights_round_trip_is_byte_identical(tmp_path):
    rng = np.random.default_rng(9)
    named = {
        "conv.w": rng.normal(size=(4, 2, 3, 3)),
        "conv.b": rng.normal(size=(4,)),
        "head.w": rng.normal(size=(16, 3)),
    }
    first = tmp_path / "a.tgrm"
    second = tmp_path / "b.tgrm"
    save_weights(first, named)
    save_weights(second, load_weights(first))
    assert first.read_bytes() == second.read_bytes()
    loaded = load_weights(first)
    assert list(loaded) == list(named)
    for name in named:
        assert loaded[name].shape == np.asarray(named[name]).shape
        assert np.allclose(loaded[name], named[name], atol=1e-6)


def test_weights_header_and_truncation_errors(tmp_path):
    path = tmp_path / "w.tgrm"
    save_weights(path, {"p": np.ones(3)})
    raw = path.read_bytes()

    bad_magic = tmp_path / "bad_magic.tgrm"
    bad_magic.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(ValueError, match="magic"):
        load_weights(bad_magic)

    bad_version = tmp_path / "bad_version.tgrm"
    bad_version.write_bytes(raw[:4] + bytes([9]) + raw[5:])
    with pytest.raises(ValueError, match="version"):
        load_weights(bad_version)

    truncated = tmp_path / "trunc.tgrm"
    truncated.write_bytes(raw[:-2])
    with pytest.raises(ValueError, match="truncated"):
        load_weights(truncated)


def test_load_into_checks_names_and_shapes(tmp_path):
    net = FeatureExtractor(seed=0)
    path = tmp_path / "net.tgrm"
    save_weights(path, net.named_parameters())

    other = FeatureExtractor(seed=3)
    load_into(other, path)
    x = Tensor(np.random.default_rng(2).random((1, 1, 28, 28)))
    # after loading, both nets share float32-cast weights, so outputs agree
    reference = FeatureExtractor(seed=0)
    load_into(reference, path)
    assert np.array_equal(other(x).data, reference(x).data)

    stored = load_weights(path)
    del stored["conv1.b"]
    stored["stray"] = np.zeros(2)
    bad = tmp_path / "bad.tgrm"
    save_weights(bad, stored)
    with pytest.raises(ValueError, match="mismatch"):
        load_into(FeatureExtractor(seed=0), bad)

    stored = load_weights(path)
    stored["conv1.b"] = np.zeros(65)
    bad2 = tmp_path / "bad2.tgrm"
    save_weights(bad2, stored)
    with pytest.raises(ValueError, match="shape"):
        load_into(FeatureExtractor(seed=0), bad2)
