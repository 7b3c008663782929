"""The verification half of the pipeline.

A frozen classifier scores image sets three ways: class activation maps
localize what drove a prediction, verification rows aggregate the mean
predicted probability of the true class per image source, and the
relation report ranks all classes by mean probability over a generated
set. The sample-size sweep retrains a generator at several corpus sizes
and runs the same verification on each, emitting a deterministic curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError, LabelError
from .networks import GlobalAvgPool, LatentSampler, Linear, Network


# ---------------------------------------------------------------------
# class activation maps
# ---------------------------------------------------------------------


@dataclass
class CamMap:
    """Min-max normalized relevance map at image resolution."""

    values: np.ndarray
    class_idx: int
    source: str | None = None


def assert_cam_compatible(net: Network):
    """The only mapping from "final_conv" to logits may be GAP + one linear layer."""
    if "final_conv" not in net.taps:
        raise ContractError(f"network {net.kind!r} exposes no final_conv tap")
    names = [name for name, _ in net.steps]
    idx = names.index(net.taps["final_conv"])
    tail = [layer for _, layer in net.steps[idx + 1:]]
    if len(tail) != 2 or not isinstance(tail[0], GlobalAvgPool) or not isinstance(tail[1], Linear):
        raise ContractError(
            f"network {net.kind!r} is not CAM compatible: expected global average pool "
            f"followed by a single linear layer after final_conv")
    return tail[1]


def compute_cam(classifier: Network, image, class_idx, source=None):
    """Weight the final conv maps by one class's head weights and normalize.

    The raw map is min-max scaled to [0, 1] (a constant raw map becomes
    all zeros so downstream overlays never divide by zero), then
    nearest-upsampled to the image's resolution.
    """
    head = assert_cam_compatible(classifier)
    image = np.asarray(image)
    if image.ndim != 3:
        raise ConfigurationError(f"compute_cam: need a (C, H, W) image, got shape {image.shape}")
    k, num_classes = head.weight.shape
    if not (0 <= class_idx < num_classes):
        raise LabelError(f"compute_cam: class index {class_idx} outside [0, {num_classes})")
    _, taps = classifier.forward(image[None], want_taps=("final_conv",), mode="eval")
    fmap = taps["final_conv"].data[0]  # (K, h, w)
    raw = np.tensordot(head.weight.data[:, class_idx], fmap, axes=(0, 0))
    lo, hi = float(raw.min()), float(raw.max())
    if hi == lo:
        norm = np.zeros_like(raw)
    else:
        norm = (raw - lo) / (hi - lo)
    h_img, w_img = image.shape[1], image.shape[2]
    ys = (np.arange(h_img) * raw.shape[0]) // h_img
    xs = (np.arange(w_img) * raw.shape[1]) // w_img
    up = norm[np.ix_(ys, xs)]
    return CamMap(values=up.astype(np.float64), class_idx=int(class_idx), source=source)


def cam_to_image(cam: CamMap):
    """Gray [-1, 1] rendering of a map, ready for the P5 writer."""
    return (cam.values * 2.0 - 1.0)[None].astype(np.float32)


def cam_overlay(image, cam: CamMap, strength=0.6):
    """Red-tinted composite of the map over an image (gray inputs are replicated)."""
    img = np.asarray(image, dtype=np.float32)
    if img.shape[0] == 1:
        img = np.repeat(img, 3, axis=0)
    red = np.array([1.0, -1.0, -1.0], dtype=np.float32)[:, None, None]
    w = strength * cam.values[None].astype(np.float32)
    return np.clip(img * (1.0 - w) + red * w, -1.0, 1.0)


# ---------------------------------------------------------------------
# probability aggregation
# ---------------------------------------------------------------------


def softmax_probs(classifier: Network, images, batch_size=64):
    """Per-image softmax probabilities (M, K), eval mode."""
    images = np.asarray(images)
    outs = []
    for start in range(0, images.shape[0], batch_size):
        logits, _ = classifier.forward(images[start:start + batch_size], mode="eval")
        z = logits.data - logits.data.max(axis=1, keepdims=True)
        e = np.exp(z)
        outs.append(e / e.sum(axis=1, keepdims=True))
    return np.concatenate(outs, axis=0)


@dataclass
class VerificationRow:
    source: str
    class_group: str
    true_class: int
    mean_true_prob: float
    count: int
    top1_counts: np.ndarray = field(repr=False)

    @property
    def top1_accuracy(self):
        return float(self.top1_counts[self.true_class]) / self.count


def verify_images(classifier: Network, images, true_class, source="real",
                  class_group="", batch_size=64):
    """Mean predicted probability of the true class, plus the top-1 histogram."""
    images = np.asarray(images)
    if images.shape[0] == 0:
        raise ConfigurationError("verify_images: empty image set")
    probs = softmax_probs(classifier, images, batch_size)
    k = probs.shape[1]
    if not (0 <= true_class < k):
        raise LabelError(f"verify_images: true class {true_class} outside [0, {k})")
    top1 = np.bincount(probs.argmax(axis=1), minlength=k)
    return VerificationRow(
        source=source,
        class_group=class_group,
        true_class=int(true_class),
        mean_true_prob=float(probs[:, true_class].mean()),
        count=int(images.shape[0]),
        top1_counts=top1)


class VerificationTable:
    """Rows of (source, class group) -> mean true-class probability."""

    def __init__(self):
        self.rows = []

    def add(self, row: VerificationRow):
        self.rows.append(row)

    def to_csv(self):
        lines = ["source,class_group,n,mean_true_prob,top1_accuracy"]
        for r in self.rows:
            lines.append(f"{r.source},{r.class_group},{r.count},"
                         f"{r.mean_true_prob:.6f},{r.top1_accuracy:.6f}")
        return "\n".join(lines) + "\n"


def relation_report(classifier: Network, images, top_n, class_names=None, batch_size=64):
    """Classes ranked by mean predicted probability over a generated set.

    Ties break by ascending class index; the untruncated means sum to 1
    up to float roundoff because each row of the softmax does.
    """
    images = np.asarray(images)
    if images.shape[0] == 0:
        raise ConfigurationError("relation_report: empty image set")
    if top_n < 1:
        raise ConfigurationError(f"relation_report: top_n must be >= 1, got {top_n}")
    means = softmax_probs(classifier, images, batch_size).mean(axis=0)
    order = sorted(range(len(means)), key=lambda i: (-means[i], i))
    named = class_names if class_names is not None else list(range(len(means)))
    return [(named[i], float(means[i])) for i in order[:top_n]]


def relation_csv(report):
    lines = ["class,mean_prob"]
    for name, prob in report:
        lines.append(f"{name},{prob:.6f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------
# sample-size sweep
# ---------------------------------------------------------------------


@dataclass
class SweepRow:
    size: int
    mean_true_prob: float
    top1_accuracy: float
    offclass_top3: float


def sample_size_sweep(sizes, corpus_images, train_gan_fn, classifier: Network,
                      true_class, seed=0, n_generate=64):
    """Verification value versus generator training-set size.

    For each size s a fresh generator is trained by ``train_gan_fn(images,
    seed)`` on a seeded s-subset of the corpus, ``n_generate`` samples are
    drawn, and the classifier scores them. Each row also carries the
    probability mass on the three strongest off-true classes. Trainings
    run sequentially so identical seeds give byte-identical curves.
    """
    corpus_images = np.asarray(corpus_images)
    m = corpus_images.shape[0]
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ConfigurationError("sample_size_sweep: sizes must be ascending")
    if any(s > m for s in sizes):
        raise ConfigurationError(f"sample_size_sweep: size exceeds corpus of {m}")
    if any(s < 1 for s in sizes):
        raise ConfigurationError("sample_size_sweep: sizes must be >= 1")
    rows = []
    for i, s in enumerate(sizes):
        sub_rng = np.random.default_rng((int(seed), 903, int(s)))
        subset = corpus_images[sub_rng.choice(m, size=s, replace=False)]
        point_seed = int((seed * 1_000_003 + i) % 2**31)
        generator = train_gan_fn(subset, point_seed)
        sampler = LatentSampler(generator.meta.get("latent_dim", 100), seed=point_seed + 1)
        fakes, _ = generator.forward(sampler.sample(n_generate), mode="eval")
        fake_imgs = np.clip(fakes.data, -1.0, 1.0)
        row = verify_images(classifier, fake_imgs, true_class, source="wgan")
        probs = softmax_probs(classifier, fake_imgs).mean(axis=0)
        off = np.delete(probs, true_class)
        off_top3 = float(np.sort(off)[::-1][:3].sum())
        rows.append(SweepRow(size=int(s),
                             mean_true_prob=row.mean_true_prob,
                             top1_accuracy=row.top1_accuracy,
                             offclass_top3=off_top3))
    return rows


def sweep_csv(rows):
    lines = ["size,mean_true_prob,top1_accuracy,offclass_top3"]
    for r in rows:
        lines.append(f"{r.size},{r.mean_true_prob:.6f},{r.top1_accuracy:.6f},{r.offclass_top3:.6f}")
    return "\n".join(lines) + "\n"
