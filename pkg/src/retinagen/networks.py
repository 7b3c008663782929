"""Builders for every architecture the pipeline needs.

Generators and discriminators follow the usual deep-convolutional GAN
recipe (stride-2 4x4 kernels, batchnorm, relu/leaky-relu, tanh output,
normal(0, 0.02) init). The stylizer side is a 4-level feature codec:
encoder level k halves resolution k-1 times at widths 16/32/64/128 and
exposes a tap per level; decoders mirror with nearest-upsample + conv.
The classifier ends in conv -> global average pool -> single linear
layer, the topology class activation maps require.

Every builder runs a one-sample forward/backward smoke test so shape
mismatches surface at build time, not mid-training.
"""

from __future__ import annotations

import hashlib

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError
from .tensor import DEFAULT_DTYPE, RunningStats, Tensor

WEIGHT_STD = 0.02  # conv/linear init scale (DCGAN convention)


# ---------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------


class Conv2d:
    def __init__(self, rng, in_ch, out_ch, k, stride=1, pad=0, dtype=DEFAULT_DTYPE):
        self.weight = Tensor(rng.normal(0.0, WEIGHT_STD, (out_ch, in_ch, k, k)),
                             requires_grad=True, dtype=dtype)
        self.bias = Tensor(np.zeros(out_ch), requires_grad=True, dtype=dtype)
        self.stride = stride
        self.pad = pad

    def forward(self, x, mode):
        return T.conv2d(x, self.weight, self.bias, self.stride, self.pad)

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def buffers(self):
        return []


class ConvTranspose2d:
    def __init__(self, rng, in_ch, out_ch, k, stride=1, pad=0, dtype=DEFAULT_DTYPE):
        self.weight = Tensor(rng.normal(0.0, WEIGHT_STD, (in_ch, out_ch, k, k)),
                             requires_grad=True, dtype=dtype)
        self.bias = Tensor(np.zeros(out_ch), requires_grad=True, dtype=dtype)
        self.stride = stride
        self.pad = pad

    def forward(self, x, mode):
        return T.conv_transpose2d(x, self.weight, self.bias, self.stride, self.pad)

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def buffers(self):
        return []


class Linear:
    def __init__(self, rng, in_features, out_features, dtype=DEFAULT_DTYPE):
        self.weight = Tensor(rng.normal(0.0, WEIGHT_STD, (in_features, out_features)),
                             requires_grad=True, dtype=dtype)
        self.bias = Tensor(np.zeros(out_features), requires_grad=True, dtype=dtype)

    def forward(self, x, mode):
        return T.linear(x, self.weight, self.bias)

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def buffers(self):
        return []


class BatchNorm2d:
    def __init__(self, rng, channels, momentum=0.1, eps=1e-5, dtype=DEFAULT_DTYPE):
        self.gamma = Tensor(rng.normal(1.0, WEIGHT_STD, channels), requires_grad=True, dtype=dtype)
        self.beta = Tensor(np.zeros(channels), requires_grad=True, dtype=dtype)
        self.stats = RunningStats(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x, mode):
        return T.batchnorm2d(x, self.gamma, self.beta, self.stats, mode, self.momentum, self.eps)

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def buffers(self):
        return [("running_mean", self.stats.mean), ("running_var", self.stats.var)]


class Activation:
    def __init__(self, kind, slope=0.2):
        self.kind = kind
        self.slope = slope

    def forward(self, x, mode):
        return T.activation(x, self.kind, self.slope)

    def params(self):
        return []

    def buffers(self):
        return []


class Reshape:
    """Reshapes the per-sample tail, keeping the batch axis."""

    def __init__(self, tail):
        self.tail = tuple(tail)

    def forward(self, x, mode):
        return T.reshape(x, (x.shape[0],) + self.tail)

    def params(self):
        return []

    def buffers(self):
        return []


class GlobalAvgPool:
    def forward(self, x, mode):
        return T.global_avg(x)

    def params(self):
        return []

    def buffers(self):
        return []


class NearestUpsample2:
    def forward(self, x, mode):
        return T.nearest_upsample2(x)

    def params(self):
        return []

    def buffers(self):
        return []


# ---------------------------------------------------------------------
# network container
# ---------------------------------------------------------------------


class Network:
    """An ordered stack of layers with named parameters and output taps."""

    def __init__(self, kind, steps, taps=None, meta=None, input_shape=None, head=None):
        self.kind = kind
        self.steps = list(steps)
        self.meta = dict(meta or {})
        self.input_shape = tuple(input_shape) if input_shape is not None else None
        self.head = head
        names = [name for name, _ in self.steps]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"duplicate step names in network {kind!r}")
        self.taps = dict(taps or {})
        for tap, step in self.taps.items():
            if step not in names:
                raise ConfigurationError(f"tap {tap!r} points at unknown step {step!r}")

    def forward(self, x, want_taps=(), mode="eval"):
        """Run the stack; returns (output, {tap_name: Tensor})."""
        unknown = [t for t in want_taps if t not in self.taps]
        if unknown:
            raise KeyError(f"unknown tap name(s) {unknown} in network {self.kind!r}")
        wanted = {}
        for tap in want_taps:
            wanted.setdefault(self.taps[tap], []).append(tap)
        if not isinstance(x, Tensor):
            x = Tensor(x)
        taps = {}
        for name, layer in self.steps:
            x = layer.forward(x, mode)
            for tap in wanted.get(name, ()):
                taps[tap] = x
        return x, taps

    def parameters(self):
        out = {}
        for name, layer in self.steps:
            for local, p in layer.params():
                out[f"{name}.{local}"] = p
        return out

    def named_buffers(self):
        out = {}
        for name, layer in self.steps:
            for local, b in layer.buffers():
                out[f"{name}.{local}"] = b
        return out

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()

    def num_params(self):
        return sum(p.size for p in self.parameters().values())

    def param_checksum(self):
        h = hashlib.sha256()
        for name, p in sorted(self.parameters().items()):
            h.update(name.encode())
            h.update(p.data.tobytes())
        return h.hexdigest()

    def reset_running_stats(self):
        for _, layer in self.steps:
            if isinstance(layer, BatchNorm2d):
                layer.stats.reset()


def forward(net, x, want_taps=(), mode="eval"):
    return net.forward(x, want_taps, mode)


def state_arrays(net):
    """All learnable and running state as plain arrays, keyed by name."""
    out = {name: p.data for name, p in net.parameters().items()}
    for name, b in net.named_buffers().items():
        out[name] = b
    return out


def snapshot_state(net):
    return {name: arr.copy() for name, arr in state_arrays(net).items()}


def load_state_arrays(net, state):
    """Copy a state dict into the network; names and shapes must match exactly."""
    current = state_arrays(net)
    missing = sorted(set(current) - set(state))
    extra = sorted(set(state) - set(current))
    if missing or extra:
        raise DimensionError(f"state mismatch for {net.kind!r}: missing={missing} extra={extra}")
    for name, arr in state.items():
        dst = current[name]
        src = np.asarray(arr)
        if dst.shape != src.shape:
            raise DimensionError(f"state {name!r}: shape {src.shape} does not match {dst.shape}")
        dst[...] = src


def _smoke_test(net, dtype):
    """One-sample eval forward + backward; validates shape composition."""
    x = np.zeros((1,) + net.input_shape, dtype=dtype)
    out, _ = net.forward(x, mode="eval")
    T.backward(T.tsum(out))
    net.zero_grad()


def _rng(seed, salt):
    return np.random.default_rng((int(seed), salt))


# ---------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------


def _check_img_args(img_size, img_channels, base_ch, who):
    if img_size not in (32, 64):
        raise ConfigurationError(
            f"{who}: img_size must be 32 or 64 (64 is the architecture's resolution cap), got {img_size}")
    if img_channels not in (1, 3):
        raise ConfigurationError(f"{who}: img_channels must be 1 or 3, got {img_channels}")
    if base_ch < 8:
        raise ConfigurationError(f"{who}: base_ch must be >= 8, got {base_ch}")


def build_dcgan_generator(latent_dim=100, img_size=64, img_channels=3, base_ch=64,
                          seed=0, dtype=DEFAULT_DTYPE):
    """Latent vector -> (8*base_ch)x4x4 projection -> stride-2 deconv blocks -> tanh image."""
    _check_img_args(img_size, img_channels, base_ch, "build_dcgan_generator")
    if latent_dim < 1:
        raise ConfigurationError(f"latent_dim must be >= 1, got {latent_dim}")
    rng = _rng(seed, 101)
    n_up = {32: 3, 64: 4}[img_size]
    ch = 8 * base_ch
    steps = [
        ("project", Linear(rng, latent_dim, ch * 4 * 4, dtype)),
        ("reshape", Reshape((ch, 4, 4))),
        ("bn0", BatchNorm2d(rng, ch, dtype=dtype)),
        ("act0", Activation("relu")),
    ]
    for i in range(1, n_up):
        steps += [
            (f"up{i}", ConvTranspose2d(rng, ch, ch // 2, 4, stride=2, pad=1, dtype=dtype)),
            (f"bn{i}", BatchNorm2d(rng, ch // 2, dtype=dtype)),
            (f"act{i}", Activation("relu")),
        ]
        ch //= 2
    steps += [
        ("out", ConvTranspose2d(rng, ch, img_channels, 4, stride=2, pad=1, dtype=dtype)),
        ("tanh", Activation("tanh")),
    ]
    net = Network(
        "dcgan_generator", steps,
        meta=dict(latent_dim=latent_dim, img_size=img_size, img_channels=img_channels, base_ch=base_ch),
        input_shape=(latent_dim,))
    _smoke_test(net, dtype)
    return net


def build_discriminator(img_size=64, img_channels=3, base_ch=64, head="sigmoid",
                        seed=0, dtype=DEFAULT_DTYPE):
    """Stride-2 conv blocks with leaky relu; sigmoid head scores, linear head is a critic.

    Batchnorm on every block but the first. Spatial chain for 64:
    64 -> 32 -> 16 -> 8 -> 4 -> 1.
    """
    _check_img_args(img_size, img_channels, base_ch, "build_discriminator")
    if head not in ("sigmoid", "linear"):
        raise ConfigurationError(f"build_discriminator: head must be sigmoid or linear, got {head!r}")
    rng = _rng(seed, 102)
    n_down = {32: 3, 64: 4}[img_size]
    steps = []
    ch_in = img_channels
    ch_out = base_ch
    for i in range(1, n_down + 1):
        steps.append((f"down{i}", Conv2d(rng, ch_in, ch_out, 4, stride=2, pad=1, dtype=dtype)))
        if i > 1:
            steps.append((f"bn{i}", BatchNorm2d(rng, ch_out, dtype=dtype)))
        steps.append((f"act{i}", Activation("leaky_relu", 0.2)))
        ch_in, ch_out = ch_out, ch_out * 2
    steps += [
        ("score", Conv2d(rng, ch_in, 1, 4, stride=1, pad=0, dtype=dtype)),
        ("flatten", Reshape((1,))),
    ]
    if head == "sigmoid":
        steps.append(("head", Activation("sigmoid")))
    net = Network(
        "discriminator", steps,
        meta=dict(img_size=img_size, img_channels=img_channels, base_ch=base_ch, head=head),
        input_shape=(img_channels, img_size, img_size),
        head=head)
    _smoke_test(net, dtype)
    return net


ENCODER_BASE_CH = 16


def _encoder_widths(level, base_ch):
    return [base_ch * (2 ** j) for j in range(level)]


def build_encoder(level, img_channels=3, base_ch=ENCODER_BASE_CH, seed=0, dtype=DEFAULT_DTYPE):
    """Feature encoder for stylization level k; downsamples by 2^(k-1).

    Exposes taps "enc_level_1" .. "enc_level_k": a level-k encoder contains
    each shallower level as a prefix.
    """
    if level not in (1, 2, 3, 4):
        raise ConfigurationError(f"build_encoder: level must be 1..4, got {level}")
    rng = _rng(seed, 103)
    widths = _encoder_widths(level, base_ch)
    steps, taps = [], {}
    ch_in = img_channels
    for j, ch_out in enumerate(widths, start=1):
        stride = 1 if j == 1 else 2
        steps.append((f"conv{j}", Conv2d(rng, ch_in, ch_out, 3, stride=stride, pad=1, dtype=dtype)))
        steps.append((f"act{j}", Activation("relu")))
        taps[f"enc_level_{j}"] = f"act{j}"
        ch_in = ch_out
    net = Network(
        "encoder", steps, taps=taps,
        meta=dict(level=level, img_channels=img_channels, base_ch=base_ch),
        input_shape=(img_channels, 8 * 2 ** (level - 1), 8 * 2 ** (level - 1)))
    _smoke_test(net, dtype)
    return net


def build_decoder(level, img_channels=3, base_ch=ENCODER_BASE_CH, seed=0, dtype=DEFAULT_DTYPE):
    """Mirror of encoder level k: nearest-upsample + conv back to image space.

    The final conv is linear; callers clamp to [-1, 1] when an image is needed.
    """
    if level not in (1, 2, 3, 4):
        raise ConfigurationError(f"build_decoder: level must be 1..4, got {level}")
    rng = _rng(seed, 104)
    widths = _encoder_widths(level, base_ch)
    steps = []
    for j in range(level, 1, -1):
        steps.append((f"up{j}", NearestUpsample2()))
        steps.append((f"conv{j}", Conv2d(rng, widths[j - 1], widths[j - 2], 3, stride=1, pad=1, dtype=dtype)))
        steps.append((f"act{j}", Activation("relu")))
    steps.append(("out", Conv2d(rng, widths[0], img_channels, 3, stride=1, pad=1, dtype=dtype)))
    spatial = 8
    net = Network(
        "decoder", steps,
        meta=dict(level=level, img_channels=img_channels, base_ch=base_ch),
        input_shape=(widths[-1], spatial, spatial))
    _smoke_test(net, dtype)
    return net


def build_classifier(num_classes, img_size=64, img_channels=3, base_ch=16,
                     seed=0, dtype=DEFAULT_DTYPE):
    """CAM-compatible classifier: conv stack -> "final_conv" tap -> GAP -> one linear layer.

    The network is fully convolutional up to the pooling, so inference
    accepts any input whose spatial dims survive the stride chain.
    """
    if num_classes < 2:
        raise ConfigurationError(f"build_classifier: num_classes must be >= 2, got {num_classes}")
    _check_img_args(img_size, img_channels, base_ch, "build_classifier")
    rng = _rng(seed, 105)
    n_down = {32: 2, 64: 3}[img_size]  # final feature map is 8x8 at nominal size
    steps = []
    ch_in = img_channels
    ch_out = base_ch
    for i in range(1, n_down + 1):
        steps += [
            (f"down{i}", Conv2d(rng, ch_in, ch_out, 3, stride=2, pad=1, dtype=dtype)),
            (f"bn{i}", BatchNorm2d(rng, ch_out, dtype=dtype)),
            (f"act{i}", Activation("relu")),
        ]
        ch_in, ch_out = ch_out, ch_out * 2
    steps += [
        ("final_conv", Conv2d(rng, ch_in, ch_in, 3, stride=1, pad=1, dtype=dtype)),
        ("final_act", Activation("relu")),
        ("gap", GlobalAvgPool()),
        ("head", Linear(rng, ch_in, num_classes, dtype)),
    ]
    net = Network(
        "classifier", steps, taps={"final_conv": "final_act"},
        meta=dict(num_classes=num_classes, img_size=img_size, img_channels=img_channels, base_ch=base_ch),
        input_shape=(img_channels, img_size, img_size))
    _smoke_test(net, dtype)
    return net


def build_mlp(layer_sizes, head="linear", slope=0.2, seed=0, dtype=DEFAULT_DTYPE):
    """Fully connected stack with leaky-relu between layers; used by toy experiments."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ConfigurationError("build_mlp: need at least input and output sizes")
    if head not in ("linear", "sigmoid"):
        raise ConfigurationError(f"build_mlp: head must be linear or sigmoid, got {head!r}")
    rng = _rng(seed, 106)
    steps = []
    for i in range(len(sizes) - 1):
        steps.append((f"fc{i + 1}", Linear(rng, sizes[i], sizes[i + 1], dtype)))
        if i < len(sizes) - 2:
            steps.append((f"act{i + 1}", Activation("leaky_relu", slope)))
    if head == "sigmoid":
        steps.append(("head", Activation("sigmoid")))
    net = Network(
        "mlp", steps,
        meta=dict(sizes="-".join(str(s) for s in sizes), head=head),
        input_shape=(sizes[0],),
        head=head)
    _smoke_test(net, dtype)
    return net


class LatentSampler:
    """Standard-normal latent draws of a fixed dimension, seeded once."""

    def __init__(self, dim=100, seed=0):
        if dim < 1:
            raise ConfigurationError(f"LatentSampler: dim must be >= 1, got {dim}")
        self.dim = dim
        self.seed = seed
        self._rng = np.random.default_rng((int(seed), 107))

    def sample(self, n, dtype=DEFAULT_DTYPE):
        return Tensor(self._rng.standard_normal((n, self.dim)), dtype=dtype)
