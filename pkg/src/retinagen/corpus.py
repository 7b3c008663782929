"""Deterministic synthetic fundus corpus plus dataset manifests and splits.

Stands in for clinical data that cannot ship with the code. Each image is
a pure function of (kind, modality, size, seed, index): a dark circular
fundus disk with procedural vessel curves, where the drusen kind adds
5..15 small bright dots (yellow-tinted in color shots), the ga kind adds
one large well-demarcated bright patch, and healthy adds neither.

Color fundus photographs (CFP) are 3-channel P6 files, fluorescein
angiography (FA) frames are single-channel P5.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import ppm
from .errors import ConfigurationError, FormatError

KINDS = ("drusen", "ga", "healthy")
MODALITIES = ("CFP", "FA")

_KIND_ID = {k: i for i, k in enumerate(KINDS)}
_MOD_ID = {m: i for i, m in enumerate(MODALITIES)}


# ---------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------


def _disk_mask(yy, xx, cy, cx, r):
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def _paint_vessels(img, rng, yy, xx, disc_y, disc_x, radius, modality, scale):
    n_vessels = int(rng.integers(4, 8))
    flat_y = yy.reshape(-1)
    flat_x = xx.reshape(-1)
    t = np.linspace(0.0, 1.0, 96)
    for _ in range(n_vessels):
        theta = rng.uniform(0, 2 * np.pi)
        reach = rng.uniform(0.70, 0.95) * radius
        p0 = np.array([disc_y, disc_x])
        p2 = p0 + reach * np.array([np.sin(theta), np.cos(theta)])
        bow = rng.uniform(-0.25, 0.25) * radius
        perp = np.array([np.cos(theta), -np.sin(theta)])
        p1 = (p0 + p2) / 2 + bow * perp
        pts = ((1 - t)[:, None] ** 2 * p0 + 2 * (t * (1 - t))[:, None] * p1
               + (t ** 2)[:, None] * p2)
        d2 = ((flat_y[None, :] - pts[:, 0:1]) ** 2
              + (flat_x[None, :] - pts[:, 1:2]) ** 2).min(axis=0)
        width = rng.uniform(0.7, 1.3) * scale
        m = np.exp(-d2 / (2.0 * width * width)).reshape(yy.shape)
        if modality == "CFP":
            for c, target in enumerate((-0.05, -0.45, -0.62)):
                img[c] += (target - img[c]) * m
        else:
            img[0] += 0.20 * m


def _scatter_centers(rng, n, cy, cx, max_r, min_sep, attempts=200):
    """Deterministic rejection sampling of dot centers with a separation floor."""
    centers = []
    for _ in range(n):
        placed = False
        for trial in range(attempts):
            rr = max_r * np.sqrt(rng.uniform())
            th = rng.uniform(0, 2 * np.pi)
            y, x = cy + rr * np.sin(th), cx + rr * np.cos(th)
            sep = min_sep if trial < attempts - 1 else min_sep * 0.8
            if all((y - py) ** 2 + (x - px) ** 2 >= sep * sep for py, px in centers):
                centers.append((y, x))
                placed = True
                break
        if not placed:
            break
    return centers


def render_image(kind, modality, img_size, rng, ga_quadrant=None):
    """One synthetic fundus image as a float32 (C, H, W) array in [-1, 1]."""
    if kind not in KINDS:
        raise ConfigurationError(f"render_image: kind must be one of {KINDS}, got {kind!r}")
    if modality not in MODALITIES:
        raise ConfigurationError(f"render_image: modality must be CFP or FA, got {modality!r}")
    size = int(img_size)
    scale = size / 64.0
    channels = 3 if modality == "CFP" else 1
    yy, xx = np.meshgrid(np.arange(size, dtype=np.float64),
                         np.arange(size, dtype=np.float64), indexing="ij")
    cy = size / 2 + rng.uniform(-0.03, 0.03) * size
    cx = size / 2 + rng.uniform(-0.03, 0.03) * size
    radius = 0.42 * size * (1 + rng.uniform(-0.05, 0.05))
    disk = _disk_mask(yy, xx, cy, cx, radius)
    t_rad = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2) / radius

    img = np.full((channels, size, size), -0.95)
    if modality == "CFP":
        base = np.stack([0.35 - 0.25 * t_rad, -0.15 - 0.15 * t_rad, -0.55 - 0.10 * t_rad])
    else:
        base = (-0.05 - 0.25 * t_rad)[None]
    img[:, disk] = base[:, disk]

    # optic disc: a small pale circle off-center
    disc_th = rng.uniform(0, 2 * np.pi)
    disc_y = cy + 0.55 * radius * np.sin(disc_th)
    disc_x = cx + 0.55 * radius * np.cos(disc_th)
    disc = _disk_mask(yy, xx, disc_y, disc_x, 0.13 * radius) & disk
    if modality == "CFP":
        for c, v in enumerate((0.55, 0.22, -0.35)):
            img[c, disc] = v
    else:
        img[0, disc] += 0.28

    _paint_vessels(img, rng, yy, xx, disc_y, disc_x, radius, modality, scale)

    if kind == "drusen":
        count = int(rng.integers(5, 16))
        dot_r_lo, dot_r_hi = 2.0 * scale, 3.0 * scale
        centers = _scatter_centers(rng, count, cy, cx, 0.78 * radius,
                                   min_sep=2 * dot_r_hi + 2.0 * scale)
        for (dy, dx) in centers:
            r = rng.uniform(dot_r_lo, dot_r_hi)
            jit = rng.uniform(-0.04, 0.04)
            dot = _disk_mask(yy, xx, dy, dx, r)
            if modality == "CFP":
                for c, v in enumerate((0.95, 0.85, 0.35)):
                    img[c, dot] = v + jit
            else:
                img[0, dot] = 0.82 + jit
    elif kind == "ga":
        if ga_quadrant is None:
            py = cy + rng.uniform(-0.35, 0.35) * radius
            px = cx + rng.uniform(-0.35, 0.35) * radius
        else:
            if ga_quadrant not in (0, 1, 2, 3):
                raise ConfigurationError(f"ga_quadrant must be 0..3, got {ga_quadrant}")
            half = size / 2
            for _ in range(400):
                qy = (ga_quadrant // 2) * half + rng.uniform(0.28, 0.72) * half
                qx = (ga_quadrant % 2) * half + rng.uniform(0.28, 0.72) * half
                if (qy - cy) ** 2 + (qx - cx) ** 2 <= (0.62 * radius) ** 2:
                    break
            py, px = qy, qx
        pr = rng.uniform(0.10, 0.14) * size
        patch = _disk_mask(yy, xx, py, px, pr) & disk
        if modality == "CFP":
            for c, v in enumerate((0.68, 0.52, 0.18)):
                img[c, patch] = v + rng.uniform(-0.03, 0.03)
        else:
            img[0, patch] = 0.62 + rng.uniform(-0.03, 0.03)

    noise = rng.normal(0.0, 0.015, size=img.shape)
    img[:, disk] += noise[:, disk]
    return np.clip(img, -1.0, 1.0).astype(np.float32)


def _image_rng(kind, modality, img_size, seed, index):
    return np.random.default_rng(
        (int(seed), _KIND_ID[kind], _MOD_ID[modality], int(img_size), int(index)))


def cam_probe_set(n, img_size, seed, modality="CFP"):
    """GA images with the patch confined to a known quadrant.

    Returns (images (N, C, H, W), quadrants (N,)); quadrant index is
    row-major: 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right.
    """
    qrng = np.random.default_rng((int(seed), 901))
    quadrants = qrng.integers(0, 4, size=n)
    imgs = []
    for i, q in enumerate(quadrants):
        rng = _image_rng("ga", modality, img_size, seed, 10_000 + i)
        imgs.append(render_image("ga", modality, img_size, rng, ga_quadrant=int(q)))
    return np.stack(imgs), quadrants


# ---------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------


@dataclass
class ManifestEntry:
    path: str
    label: str
    modality: str
    split: str = ""
    provenance: str = "real"


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)
    seed: int = 0

    @property
    def classes(self):
        return sorted({e.label for e in self.entries})

    def entries_for(self, split):
        return [e for e in self.entries if e.split == split]

    def class_index(self):
        return {label: i for i, label in enumerate(self.classes)}

    def save(self, path):
        path = os.fspath(path)
        base = os.path.dirname(os.path.abspath(path))
        lines = [f"# seed={self.seed}", "path,label,modality,split,provenance"]
        for e in self.entries:
            rel = os.path.relpath(os.path.abspath(e.path), base)
            lines.append(f"{rel},{e.label},{e.modality},{e.split},{e.provenance}")
        tmp = f"{path}.tmp.{os.getpid()}"
        with open(tmp, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path):
        path = os.fspath(path)
        base = os.path.dirname(os.path.abspath(path))
        seed = 0
        entries = []
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        body = []
        for ln in lines:
            if ln.startswith("#"):
                if "seed=" in ln:
                    seed = int(ln.split("seed=")[1])
                continue
            body.append(ln)
        if not body or body[0] != "path,label,modality,split,provenance":
            raise FormatError(f"{path}: not a dataset manifest (byte offset 0)")
        for ln in body[1:]:
            parts = ln.split(",")
            if len(parts) != 5:
                raise FormatError(f"{path}: bad manifest row {ln!r} (byte offset unknown)")
            rel, label, modality, split, provenance = parts
            entries.append(ManifestEntry(os.path.normpath(os.path.join(base, rel)),
                                         label, modality, split, provenance))
        return cls(entries=entries, seed=seed)

    def validate(self):
        """Every referenced file must exist and decode."""
        for e in self.entries:
            ppm.load_image(e.path)
        return True


def synth_corpus(kind, modality, n, img_size, seed, out_dir):
    """Render ``n`` images of one kind to ``out_dir`` and return their manifest."""
    if n < 1:
        raise ConfigurationError(f"synth_corpus: n must be >= 1, got {n}")
    if img_size not in (32, 64):
        raise ConfigurationError(f"synth_corpus: img_size must be 32 or 64, got {img_size}")
    if kind not in KINDS:
        raise ConfigurationError(f"synth_corpus: kind must be one of {KINDS}, got {kind!r}")
    if modality not in MODALITIES:
        raise ConfigurationError(f"synth_corpus: modality must be CFP or FA, got {modality!r}")
    os.makedirs(out_dir, exist_ok=True)
    ext = "ppm" if modality == "CFP" else "pgm"
    manifest = DatasetManifest(seed=seed)
    for i in range(n):
        rng = _image_rng(kind, modality, img_size, seed, i)
        img = render_image(kind, modality, img_size, rng)
        path = os.path.join(out_dir, f"{kind}_{modality.lower()}_{i:04d}.{ext}")
        ppm.save_image(img, path)
        manifest.entries.append(ManifestEntry(path, kind, modality))
    return manifest


def merge_manifests(manifests, seed=0):
    out = DatasetManifest(seed=seed)
    for m in manifests:
        out.entries.extend(m.entries)
    return out


def split_dataset(manifest: DatasetManifest, ratios=(0.7, 0.1, 0.2), seed=0):
    """Assign train/val/test per class with a seeded stratified shuffle.

    Counts honor the ratios within one item per class (largest-remainder
    rounding). A class with fewer than 3 items triggers a stratification
    warning and the whole split falls back to one global shuffle.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError(f"split_dataset: ratios must sum to 1, got {ratios}")
    rng = np.random.default_rng((int(seed), 902))
    out = DatasetManifest(entries=[ManifestEntry(**vars(e)) for e in manifest.entries],
                          seed=seed)
    by_class = {}
    for e in out.entries:
        by_class.setdefault(e.label, []).append(e)
    groups = list(by_class.values())
    if any(len(g) < 3 for g in groups):
        warnings.warn("split_dataset: a class has fewer than 3 items; "
                      "falling back to a global (unstratified) split")
        groups = [out.entries]
    names = ("train", "val", "test")
    for group in groups:
        order = rng.permutation(len(group))
        counts = _largest_remainder(len(group), ratios)
        pos = 0
        for name, k in zip(names, counts):
            for j in range(k):
                group[order[pos + j]].split = name
            pos += k
    return out


def _largest_remainder(n, ratios):
    exact = [n * r for r in ratios]
    base = [int(np.floor(v)) for v in exact]
    rem = n - sum(base)
    fracs = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in fracs[:rem]:
        base[i] += 1
    return base


def load_split_arrays(manifest: DatasetManifest, split=None, provenance=None):
    """Decode manifest images into (X (M, C, H, W), y (M,), class_names)."""
    classes = manifest.classes
    index = {c: i for i, c in enumerate(classes)}
    entries = manifest.entries
    if split is not None:
        entries = [e for e in entries if e.split == split]
    if provenance is not None:
        entries = [e for e in entries if e.provenance == provenance]
    if not entries:
        raise ConfigurationError(
            f"no manifest entries for split={split!r} provenance={provenance!r}")
    xs = np.stack([ppm.load_image(e.path) for e in entries])
    ys = np.array([index[e.label] for e in entries], dtype=np.int64)
    return xs, ys, classes
