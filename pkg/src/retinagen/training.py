"""Optimizers and the four training procedures.

Covered here: the adversarial game in its original log-likelihood form,
the weight-clipped critic variant of it, classifier training with a
two-phase learning-rate schedule plus random affine augmentation, and
autoencoder pretraining for the stylizer's feature codec.

Every loop is a pure function of (initial parameters, data order, seed):
batch assembly, latent draws and augmentation all run off generators
derived from the config seed, so a rerun reproduces the loss series
bit for bit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, ContractError, DimensionError, NumericError
from .networks import LatentSampler, Network, snapshot_state, load_state_arrays
from .tensor import Tensor


# ---------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------


class SGD:
    def __init__(self, lr):
        if lr <= 0:
            raise ConfigurationError(f"sgd: lr must be positive, got {lr}")
        self.lr = lr

    def step(self, params):
        for name, p in params.items():
            if p.grad is None:
                continue
            p.data -= p.dtype.type(self.lr) * p.grad


class RMSProp:
    def __init__(self, lr, rho=0.9, eps=1e-8):
        if lr <= 0 or not (0.0 < rho < 1.0) or eps <= 0:
            raise ConfigurationError(f"rmsprop: bad hyperparameters lr={lr} rho={rho} eps={eps}")
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.acc = {}

    def step(self, params):
        for name, p in params.items():
            if p.grad is None:
                continue
            acc = self.acc.get(name)
            if acc is None:
                acc = self.acc[name] = np.zeros_like(p.data)
            elif acc.shape != p.data.shape:
                raise ContractError(f"rmsprop: shape of {name!r} drifted between steps")
            acc *= self.rho
            acc += (1.0 - self.rho) * p.grad * p.grad
            p.data -= self.lr * p.grad / np.sqrt(acc + self.eps)


class Adam:
    def __init__(self, lr, b1=0.9, b2=0.999, eps=1e-8):
        if lr <= 0 or not (0.0 <= b1 < 1.0) or not (0.0 <= b2 < 1.0) or eps <= 0:
            raise ConfigurationError(f"adam: bad hyperparameters lr={lr} b1={b1} b2={b2} eps={eps}")
        self.lr = lr
        self.b1 = b1
        self.b2 = b2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params):
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for name, p in params.items():
            if p.grad is None:
                continue
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            elif m.shape != p.data.shape:
                raise ContractError(f"adam: shape of {name!r} drifted between steps")
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * p.grad
            v *= self.b2
            v += (1.0 - self.b2) * p.grad * p.grad
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def make_optimizer(kind, lr, **kw):
    if kind == "sgd":
        return SGD(lr)
    if kind == "rmsprop":
        return RMSProp(lr, **kw)
    if kind == "adam":
        return Adam(lr, **kw)
    raise ConfigurationError(f"unknown optimizer kind {kind!r}")


def optimizer_step(params, opt):
    """Apply one update from ``opt`` using the gradients stored on ``params``."""
    opt.step(params)


# ---------------------------------------------------------------------
# configs and reports
# ---------------------------------------------------------------------


@dataclass
class GanConfig:
    batch_size: int = 16
    latent_dim: int = 100
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    optimizer: str = "adam"
    steps: int = 100
    seed: int = 0
    saturating: bool = False  # generator's original minimax loss, kept for experiments

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigurationError("GanConfig: batch_size must be >= 2 (batchnorm needs it)")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ConfigurationError("GanConfig: learning rates must be positive")


@dataclass
class WganConfig:
    clip_c: float = 0.01
    n_critic: int = 5
    lr: float = 5e-5
    optimizer: str = "rmsprop"
    steps: int = 100
    batch_size: int = 16
    latent_dim: int = 100
    lr_g: float | None = None  # defaults to the critic lr
    seed: int = 0

    def __post_init__(self):
        if self.clip_c <= 0:
            raise ConfigurationError("WganConfig: clip_c must be positive")
        if self.n_critic < 1:
            raise ConfigurationError("WganConfig: n_critic must be >= 1")
        if self.batch_size < 2:
            raise ConfigurationError("WganConfig: batch_size must be >= 2")
        if self.lr <= 0 or (self.lr_g is not None and self.lr_g <= 0):
            raise ConfigurationError("WganConfig: learning rates must be positive")


@dataclass
class TrainReport:
    """Loss series plus enough bookkeeping to reproduce or resume a run."""

    series: dict = field(default_factory=dict)
    wall_time: float = 0.0
    checksum: str = ""
    extras: dict = field(default_factory=dict)


def _gan_optimizer(kind, lr):
    # GAN convention: adam runs with beta1 = 0.5
    if kind == "adam":
        return Adam(lr, b1=0.5)
    return make_optimizer(kind, lr)


@dataclass
class GanState:
    opt_g: object
    opt_d: object


def init_gan_state(cfg: GanConfig):
    return GanState(_gan_optimizer(cfg.optimizer, cfg.lr_g),
                    _gan_optimizer(cfg.optimizer, cfg.lr_d))


@dataclass
class WganState:
    opt_g: object
    opt_c: object


def init_wgan_state(cfg: WganConfig):
    lr_g = cfg.lr if cfg.lr_g is None else cfg.lr_g
    return WganState(make_optimizer(cfg.optimizer, lr_g),
                     make_optimizer(cfg.optimizer, cfg.lr))


# ---------------------------------------------------------------------
# adversarial steps
# ---------------------------------------------------------------------


def _check_batch(real, n, who):
    if real.shape[0] != n:
        raise DimensionError(f"{who}: real batch of {real.shape[0]} does not match batch_size {n}")


def _checked_loss(loss, who):
    if not np.isfinite(loss.data).all():
        raise NumericError(f"{who}: training aborted, non-finite loss")
    return loss


def gan_step(G: Network, D: Network, real_batch, sampler: LatentSampler,
             cfg: GanConfig, state: GanState):
    """One discriminator update followed by one generator update.

    D minimizes -[log D(x) + log(1 - D(G(z)))]; G minimizes -log D(G(z))
    (non-saturating) or, behind ``cfg.saturating``, log(1 - D(G(z))).
    Fakes are detached for the D step, so neither update leaks into the
    other network's parameters.
    """
    real = real_batch if isinstance(real_batch, Tensor) else Tensor(real_batch)
    n = cfg.batch_size
    _check_batch(real, n, "gan_step")

    # discriminator phase
    fake = G.forward(sampler.sample(n, real.dtype), mode="train")[0].detach()
    D.zero_grad()
    d_real, _ = D.forward(real, mode="train")
    d_fake, _ = D.forward(fake, mode="train")
    ones = np.ones_like(d_real.data)
    zeros = np.zeros_like(d_fake.data)
    d_loss = _checked_loss(T.bce(d_real, ones) + T.bce(d_fake, zeros), "gan_step")
    T.backward(d_loss)
    state.opt_d.step(D.parameters())

    # generator phase
    G.zero_grad()
    D.zero_grad()
    gen, _ = G.forward(sampler.sample(n, real.dtype), mode="train")
    d_gen, _ = D.forward(gen, mode="train")
    if cfg.saturating:
        g_loss = T.bce(d_gen, np.zeros_like(d_gen.data)) * -1.0
    else:
        g_loss = T.bce(d_gen, np.ones_like(d_gen.data))
    _checked_loss(g_loss, "gan_step")
    T.backward(g_loss)
    state.opt_g.step(G.parameters())
    D.zero_grad()
    return float(d_loss.data), float(g_loss.data)


def clip_params(net: Network, c: float):
    """Clamp every parameter of ``net`` to [-c, c] in place."""
    for p in net.parameters().values():
        np.clip(p.data, -c, c, out=p.data)


def wgan_step(G: Network, C: Network, real_batch, sampler: LatentSampler,
              cfg: WganConfig, state: WganState):
    """n_critic clipped critic updates, then one generator update.

    The critic minimizes mean C(G(z)) - mean C(x) with every parameter
    clamped to [-clip_c, clip_c] after each update; the generator then
    minimizes -mean C(G(z)). Returns (critic_estimate, g_loss) where the
    estimate mean C(x) - mean C(fake) comes from the last critic pass.
    """
    if C.head != "linear":
        raise ContractError("wgan_step: critic must be built with a linear head")
    real = real_batch if isinstance(real_batch, Tensor) else Tensor(real_batch)
    n = cfg.batch_size
    _check_batch(real, n, "wgan_step")

    critic_estimate = 0.0
    for _ in range(cfg.n_critic):
        fake = G.forward(sampler.sample(n, real.dtype), mode="train")[0].detach()
        C.zero_grad()
        c_real = T.tmean(C.forward(real, mode="train")[0])
        c_fake = T.tmean(C.forward(fake, mode="train")[0])
        c_loss = _checked_loss(c_fake - c_real, "wgan_step")
        T.backward(c_loss)
        state.opt_c.step(C.parameters())
        clip_params(C, cfg.clip_c)
        critic_estimate = -float(c_loss.data)

    G.zero_grad()
    C.zero_grad()
    gen, _ = G.forward(sampler.sample(n, real.dtype), mode="train")
    g_loss = _checked_loss(T.tmean(C.forward(gen, mode="train")[0]) * -1.0, "wgan_step")
    T.backward(g_loss)
    state.opt_g.step(G.parameters())
    C.zero_grad()
    return critic_estimate, float(g_loss.data)


def _batches(rng, n_items, batch_size):
    return rng.choice(n_items, size=batch_size, replace=False)


def train_gan(G, D, images, cfg: GanConfig):
    """Run ``cfg.steps`` of gan_step over random batches of ``images`` (M, C, H, W)."""
    images = np.asarray(images)
    if images.shape[0] < cfg.batch_size:
        raise ConfigurationError("train_gan: fewer images than one batch")
    rng = np.random.default_rng((cfg.seed, 201))
    sampler = LatentSampler(cfg.latent_dim, seed=cfg.seed)
    state = init_gan_state(cfg)
    d_series, g_series = [], []
    t0 = time.perf_counter()
    for _ in range(cfg.steps):
        batch = images[_batches(rng, images.shape[0], cfg.batch_size)]
        d_loss, g_loss = gan_step(G, D, batch, sampler, cfg, state)
        d_series.append(d_loss)
        g_series.append(g_loss)
    return TrainReport(
        series={"d_loss": d_series, "g_loss": g_series},
        wall_time=time.perf_counter() - t0,
        checksum=G.param_checksum())


def train_wgan(G, C, images, cfg: WganConfig):
    """Run ``cfg.steps`` of wgan_step over random batches of ``images``."""
    images = np.asarray(images)
    if images.shape[0] < cfg.batch_size:
        raise ConfigurationError("train_wgan: fewer images than one batch")
    rng = np.random.default_rng((cfg.seed, 202))
    sampler = LatentSampler(cfg.latent_dim, seed=cfg.seed)
    state = init_wgan_state(cfg)
    est_series, g_series = [], []
    t0 = time.perf_counter()
    for _ in range(cfg.steps):
        batch = images[_batches(rng, images.shape[0], cfg.batch_size)]
        est, g_loss = wgan_step(G, C, batch, sampler, cfg, state)
        est_series.append(est)
        g_series.append(g_loss)
    return TrainReport(
        series={"critic_estimate": est_series, "g_loss": g_series},
        wall_time=time.perf_counter() - t0,
        checksum=G.param_checksum())


# ---------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------


def _bilinear_sample(img, ys, xs):
    """Sample (C, H, W) at float coords with zero fill outside the frame."""
    c, h, w = img.shape
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = (ys - y0).astype(img.dtype)
    fx = (xs - x0).astype(img.dtype)

    def tap(yy, xx):
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        yc = np.clip(yy, 0, h - 1)
        xc = np.clip(xx, 0, w - 1)
        return img[:, yc, xc] * inside[None].astype(img.dtype)

    top = tap(y0, x0) * (1 - fx)[None] + tap(y0, x0 + 1) * fx[None]
    bot = tap(y0 + 1, x0) * (1 - fx)[None] + tap(y0 + 1, x0 + 1) * fx[None]
    return top * (1 - fy)[None] + bot * fy[None]


def affine_augment(image, prob, rng, max_rotate_deg=15.0, max_translate_frac=0.1,
                   flip_prob=0.5):
    """Random rotate/translate/flip of one (C, H, W) image, bilinear, zero fill.

    With probability ``prob`` draws a rotation uniform in +-max_rotate_deg,
    a translation uniform in +-max_translate_frac of each dimension and a
    coin-flip horizontal mirror; otherwise returns the input unchanged.
    """
    if not (0.0 <= prob <= 1.0):
        raise ConfigurationError(f"affine_augment: prob must lie in [0, 1], got {prob}")
    image = np.asarray(image)
    if image.ndim != 3:
        raise DimensionError(f"affine_augment: need (C, H, W), got shape {image.shape}")
    if rng.uniform() >= prob:
        return image
    c, h, w = image.shape
    angle = np.deg2rad(rng.uniform(-max_rotate_deg, max_rotate_deg))
    ty = rng.uniform(-max_translate_frac, max_translate_frac) * h
    tx = rng.uniform(-max_translate_frac, max_translate_frac) * w
    flip = rng.uniform() < flip_prob
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    # invert the output-space transform to find source coordinates
    dy = yy - cy - ty
    dx = xx - cx - tx
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    src_y = cos_a * dy + sin_a * dx + cy
    src_x = -sin_a * dy + cos_a * dx + cx
    if flip:
        src_x = (w - 1) - src_x
    out = _bilinear_sample(image, src_y, src_x)
    return out.astype(image.dtype)


# ---------------------------------------------------------------------
# classifier training
# ---------------------------------------------------------------------


def _epoch_lr(epoch, epochs, lr_schedule):
    hi, lo = lr_schedule
    return hi if epoch < epochs / 2 else lo


def train_classifier(net: Network, data, epochs, lr_schedule=(1e-4, 1e-5),
                     augment_prob=0.7, seed=0, batch_size=16):
    """Cross-entropy training with per-sample affine augmentation.

    ``data`` maps split name -> (images (M, C, H, W), labels (M,)); the
    "train" split is required, "val"/"test" optional. Learning rate is
    ``lr_schedule[0]`` for the first half of the epochs and
    ``lr_schedule[1]`` afterwards. Validation accuracy is recorded every
    epoch and the best-epoch parameter snapshot rides along in the report.
    """
    if epochs < 1:
        raise ConfigurationError("train_classifier: epochs must be >= 1")
    if "train" not in data or len(data["train"][1]) == 0:
        raise ConfigurationError("train_classifier: empty train split")
    x_train, y_train = data["train"]
    x_train = np.asarray(x_train)
    y_train = np.asarray(y_train)
    rng = np.random.default_rng((seed, 203))
    opt = Adam(lr_schedule[0])
    losses, val_accs, lrs = [], [], []
    best = (-1.0, 0, snapshot_state(net))
    t0 = time.perf_counter()
    for epoch in range(epochs):
        lr = _epoch_lr(epoch, epochs, lr_schedule)
        opt.lr = lr
        lrs.append(lr)
        order = rng.permutation(len(y_train))
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            if len(idx) < 2:  # batchnorm needs at least two samples
                continue
            batch = np.stack([affine_augment(x_train[i], augment_prob, rng) for i in idx])
            net.zero_grad()
            logits, _ = net.forward(batch, mode="train")
            loss = _checked_loss(T.softmax_xent(logits, y_train[idx]), "train_classifier")
            T.backward(loss)
            opt.step(net.parameters())
            epoch_loss += float(loss.data)
            n_batches += 1
        losses.append(epoch_loss / max(n_batches, 1))
        if "val" in data and len(data["val"][1]):
            acc = evaluate_accuracy(net, *data["val"])
            val_accs.append(acc)
            if acc > best[0]:
                best = (acc, epoch, snapshot_state(net))
    extras = {"best_epoch": best[1], "best_val_accuracy": best[0], "best_state": best[2]}
    if "test" in data and len(data["test"][1]):
        extras["test_accuracy"] = evaluate_accuracy(net, *data["test"])
    return TrainReport(
        series={"train_loss": losses, "val_accuracy": val_accs, "lr": lrs},
        wall_time=time.perf_counter() - t0,
        checksum=net.param_checksum(),
        extras=extras)


def evaluate_accuracy(net, images, labels, batch_size=64):
    images = np.asarray(images)
    labels = np.asarray(labels)
    hits = 0
    for start in range(0, len(labels), batch_size):
        logits, _ = net.forward(images[start:start + batch_size], mode="eval")
        hits += int((logits.data.argmax(axis=1) == labels[start:start + batch_size]).sum())
    return hits / len(labels)


def restore_best(net, report: TrainReport):
    """Load the best-validation snapshot a classifier report carries."""
    load_state_arrays(net, report.extras["best_state"])


# ---------------------------------------------------------------------
# autoencoder pretraining
# ---------------------------------------------------------------------


def psnr(a, b, peak=2.0):
    """Peak signal-to-noise ratio in dB; default peak spans the [-1, 1] range."""
    mse = float(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


def reconstruct(encoder, decoder, images, batch_size=32):
    """decode(encode(x)) for a stack of images, eval mode, no clamping."""
    images = np.asarray(images)
    outs = []
    for start in range(0, images.shape[0], batch_size):
        feats, _ = encoder.forward(images[start:start + batch_size], mode="eval")
        rec, _ = decoder.forward(feats, mode="eval")
        outs.append(rec.data)
    return np.concatenate(outs, axis=0)


def train_autoencoder(encoder: Network, decoder: Network, images, steps, lr=1e-3,
                      batch_size=8, seed=0, holdout=None):
    """Minimize l2(decode(encode(x)), x); reports held-out reconstruction PSNR.

    Encoder and decoder must be a matched level pair (their meta levels
    agree). When ``holdout`` is None the PSNR is measured on the training
    images instead.
    """
    if encoder.meta.get("level") != decoder.meta.get("level"):
        raise ConfigurationError(
            f"train_autoencoder: level mismatch, encoder {encoder.meta.get('level')} "
            f"vs decoder {decoder.meta.get('level')}")
    images = np.asarray(images)
    if images.shape[0] < batch_size:
        raise ConfigurationError("train_autoencoder: fewer images than one batch")
    rng = np.random.default_rng((seed, 204))
    opt = Adam(lr)
    params = {f"enc.{k}": v for k, v in encoder.parameters().items()}
    params.update({f"dec.{k}": v for k, v in decoder.parameters().items()})
    series = []
    t0 = time.perf_counter()
    for _ in range(steps):
        batch = Tensor(images[_batches(rng, images.shape[0], batch_size)])
        encoder.zero_grad()
        decoder.zero_grad()
        feats, _ = encoder.forward(batch, mode="train")
        rec, _ = decoder.forward(feats, mode="train")
        loss = _checked_loss(T.l2(rec, batch), "train_autoencoder")
        T.backward(loss)
        opt.step(params)
        series.append(float(loss.data))
    eval_set = images if holdout is None else np.asarray(holdout)
    rec = reconstruct(encoder, decoder, eval_set)
    return TrainReport(
        series={"loss": series},
        wall_time=time.perf_counter() - t0,
        checksum=decoder.param_checksum(),
        extras={"psnr": psnr(rec, eval_set)})
