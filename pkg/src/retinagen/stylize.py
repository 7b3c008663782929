"""Multi-level closed-form stylization.

Each level encodes content and style, swaps the content features'
second-order statistics for the style's via the whitening/coloring
transform, and decodes back to image space. The full pipeline runs
coarse to fine (level 4 down to 1), re-encoding the working image
against the original style at every level. Outputs are clamped to
[-1, 1].

Gray (FA) inputs go through the same machinery with a 1-channel stack;
nothing here assumes three channels.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import ConfigurationError, DimensionError
from .linalg import EIG_FLOOR_DEFAULT, EPS_REG_DEFAULT, FeatureMatrix
from .networks import Network


@dataclass
class StylizerStack:
    """Matched encoder/decoder pairs for levels 1..levels plus transform knobs."""

    encoders: dict
    decoders: dict
    alpha: float = 1.0
    eps_reg: float = EPS_REG_DEFAULT
    eig_floor: float = EIG_FLOOR_DEFAULT
    levels: int = 4

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ConfigurationError(f"StylizerStack: alpha must lie in [0, 1], got {self.alpha}")
        for k in range(1, self.levels + 1):
            if k not in self.encoders or k not in self.decoders:
                raise ConfigurationError(f"StylizerStack: missing encoder/decoder for level {k}")
        self._check_round_trips()

    def _check_round_trips(self):
        ch = self.encoders[1].meta["img_channels"]
        side = 2 ** (self.levels - 1) * 2
        probe = np.zeros((1, ch, side, side), dtype=np.float32)
        for k in range(1, self.levels + 1):
            feats, _ = self.encoders[k].forward(probe, mode="eval")
            rec, _ = self.decoders[k].forward(feats, mode="eval")
            if rec.shape != probe.shape:
                raise ConfigurationError(
                    f"StylizerStack: level {k} round trip maps {probe.shape} to {rec.shape}")

    @property
    def img_channels(self):
        return self.encoders[1].meta["img_channels"]


def _as_single_image(img, who):
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim != 3:
        raise DimensionError(f"{who}: need a (C, H, W) image, got shape {arr.shape}")
    return arr


def _encode(stack: StylizerStack, img, level):
    _, taps = stack.encoders[level].forward(img[None], want_taps=(f"enc_level_{level}",),
                                            mode="eval")
    return taps[f"enc_level_{level}"].data[0]


def stylize_single_level(content_img, style_img, level, stack: StylizerStack):
    """One whiten/color pass at a single encoder level; returns a clamped image."""
    content = _as_single_image(content_img, "stylize_single_level")
    style = _as_single_image(style_img, "stylize_single_level")
    if content.shape[0] != style.shape[0]:
        raise DimensionError(
            f"stylize_single_level: channel counts differ, {content.shape[0]} vs {style.shape[0]}")
    need = 2 ** (level - 1)
    for name, img in (("content", content), ("style", style)):
        if img.shape[1] % need or img.shape[2] % need:
            raise DimensionError(
                f"stylize_single_level: {name} dims {img.shape[1]}x{img.shape[2]} "
                f"must be divisible by {need} for level {level}")
    f_c = _encode(stack, content, level)
    f_s = _encode(stack, style, level)
    c, h, w = f_c.shape
    out_feat = linalg.wct(FeatureMatrix.from_map(f_c), FeatureMatrix.from_map(f_s),
                          stack.alpha, stack.eps_reg, stack.eig_floor)
    feats = out_feat.values.reshape(c, h, w).astype(np.float32)
    rec, _ = stack.decoders[level].forward(feats[None], mode="eval")
    return np.clip(rec.data[0], -1.0, 1.0)


def stylize(content_img, style_img, stack: StylizerStack):
    """Sequential multi-level pass, coarse to fine; shape follows the content."""
    out = _as_single_image(content_img, "stylize")
    for level in range(stack.levels, 0, -1):
        out = stylize_single_level(out, style_img, level, stack)
    return out


@dataclass
class StylizeResult:
    content_id: str
    style_id: str
    alpha: float
    image: np.ndarray = field(repr=False)


def batch_stylize(content_set, style_set, pairing, stack: StylizerStack):
    """Stylize named image sets; ``pairing`` is all_pairs or zip.

    Items are (id, image) pairs; returns one StylizeResult per produced
    image with the provenance needed for a manifest row.
    """
    content_set = list(content_set)
    style_set = list(style_set)
    if not content_set or not style_set:
        raise ConfigurationError("batch_stylize: empty content or style set")
    if pairing == "all_pairs":
        pairs = itertools.product(content_set, style_set)
    elif pairing == "zip":
        if len(content_set) != len(style_set):
            raise ConfigurationError(
                f"batch_stylize: zip pairing needs equal lengths, got "
                f"{len(content_set)} and {len(style_set)}")
        pairs = zip(content_set, style_set)
    else:
        raise ConfigurationError(f"batch_stylize: pairing must be all_pairs or zip, got {pairing!r}")
    results = []
    for (cid, cimg), (sid, simg) in pairs:
        results.append(StylizeResult(cid, sid, stack.alpha, stylize(cimg, simg, stack)))
    return results
