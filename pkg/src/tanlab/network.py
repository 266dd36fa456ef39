"""Tiny convolutional backbone, task heads, Adam, and a weights container.

The backbone is deliberately small: four 3x3/64 conv+relu+pool stages take a
28x28 grayscale image down to a single spatial cell, giving a 64-d feature.
That is 111,424 parameters, light enough to train on a laptop CPU in minutes.
"""

import struct

import numpy as np

from .autodiff import Tensor, conv2d, matmul, maxpool2, relu, reshape, sigmoid


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Conv3x3:
    """3x3 convolution, stride 1, pad 1, with bias."""

    def __init__(self, name, in_channels, out_channels, rng):
        self.name = name
        w = glorot_uniform(rng, (out_channels, in_channels, 3, 3),
                           fan_in=in_channels * 9, fan_out=out_channels * 9)
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(out_channels), requires_grad=True)

    def __call__(self, x):
        return conv2d(x, self.w, self.b)

    def named_parameters(self):
        return {f"{self.name}.w": self.w, f"{self.name}.b": self.b}


class Linear:
    def __init__(self, name, in_features, out_features, rng):
        self.name = name
        w = glorot_uniform(rng, (in_features, out_features),
                           fan_in=in_features, fan_out=out_features)
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(out_features), requires_grad=True)

    def __call__(self, x):
        return matmul(x, self.w) + self.b

    def named_parameters(self):
        return {f"{self.name}.w": self.w, f"{self.name}.b": self.b}


class FeatureExtractor:
    """Four conv+relu+maxpool stages: 28 -> 14 -> 7 -> 3 -> 1, 64 channels."""

    def __init__(self, seed=0):
        rng = np.random.default_rng(seed)
        self.conv1 = Conv3x3("conv1", 1, 64, rng)
        self.conv2 = Conv3x3("conv2", 64, 64, rng)
        self.conv3 = Conv3x3("conv3", 64, 64, rng)
        self.conv4 = Conv3x3("conv4", 64, 64, rng)

    def __call__(self, images):
        """images: Tensor (N, 1, 28, 28) -> features Tensor (N, 64)."""
        x = images
        for conv in (self.conv1, self.conv2, self.conv3, self.conv4):
            x = maxpool2(relu(conv(x)))
        return reshape(x, (x.shape[0], 64))

    def named_parameters(self):
        out = {}
        for conv in (self.conv1, self.conv2, self.conv3, self.conv4):
            out.update(conv.named_parameters())
        return out

    def parameters(self):
        return list(self.named_parameters().values())


class CompletenessHead:
    """Features -> a single progress score in (0, 1)."""

    def __init__(self, seed=0):
        rng = np.random.default_rng(seed)
        self.linear = Linear("completeness", 64, 1, rng)

    def __call__(self, features):
        return sigmoid(reshape(self.linear(features), (features.shape[0],)))

    def named_parameters(self):
        return self.linear.named_parameters()


class MeaningHead:
    """Features -> a 50-d point in the label embedding space."""

    def __init__(self, seed=0):
        rng = np.random.default_rng(seed)
        self.linear = Linear("meaning", 64, 50, rng)

    def __call__(self, features):
        return self.linear(features)

    def named_parameters(self):
        return self.linear.named_parameters()


def count_parameters(module):
    return sum(p.data.size for p in module.named_parameters().values())


class Adam:
    """Adam with bias correction; defaults are the customary ones."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            mhat = self.m[i] / (1.0 - self.beta1 ** self.t)
            vhat = self.v[i] / (1.0 - self.beta2 ** self.t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# -- weights container --------------------------------------------------------
#
# Layout: magic b"TGRM", one version byte (1), then one record per parameter:
#   uint16 LE  name length in bytes
#   bytes      name, UTF-8
#   uint8      rank
#   uint32 LE  per-rank dimension sizes
#   float32 LE payload, C order
# There is no record count; readers consume records until EOF.

_MAGIC = b"TGRM"
_VERSION = 1


def save_weights(path, named_arrays):
    """Write a name -> array mapping. Values are stored as float32."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(bytes([_VERSION]))
        for name, value in named_arrays.items():
            arr = np.ascontiguousarray(
                value.data if isinstance(value, Tensor) else value, dtype="<f4")
            encoded = name.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise ValueError(f"parameter name too long: {name!r}")
            if arr.ndim > 0xFF:
                raise ValueError(f"parameter rank too large: {name!r}")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(bytes([arr.ndim]))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.tobytes())


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise ValueError(f"truncated weights file while reading {what}")
    return buf


def load_weights(path):
    """Read a weights file back into a name -> float32 ndarray mapping."""
    out = {}
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a weights file (bad magic)")
        version = _read_exact(fh, 1, "version")[0]
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported weights version {version}")
        while True:
            head = fh.read(2)
            if not head:
                break
            if len(head) != 2:
                raise ValueError("truncated weights file while reading name length")
            (name_len,) = struct.unpack("<H", head)
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            rank = _read_exact(fh, 1, "rank")[0]
            shape = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "shape"))
            count = int(np.prod(shape, dtype=np.int64)) if rank else 1
            payload = _read_exact(fh, 4 * count, f"payload of {name!r}")
            if name in out:
                raise ValueError(f"duplicate parameter {name!r} in weights file")
            out[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    return out


def load_into(module, path):
    """Load a weights file into a module, checking names and shapes."""
    params = module.named_parameters()
    stored = load_weights(path)
    missing = sorted(set(params) - set(stored))
    unknown = sorted(set(stored) - set(params))
    if missing or unknown:
        raise ValueError(f"weights mismatch: missing {missing}, unknown {unknown}")
    for name, tensor in params.items():
        if stored[name].shape != tensor.data.shape:
            raise ValueError(
                f"shape mismatch for {name!r}: file has {stored[name].shape}, "
                f"model has {tensor.data.shape}")
        tensor.data = stored[name].astype(np.float64)
