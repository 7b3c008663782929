"""Synthetic retinal symptom imaging toolkit.

Everything runs on numpy: a small reverse-mode autodiff engine, GAN and
classifier builders with their training loops, a closed-form
whitening/coloring style-transfer stack, class-activation-map
verification, and the file plumbing (PPM/PGM codec, checkpoints,
manifests) that ties a run together.
"""

from .tensor import Tensor, backward, grad_check

__all__ = ["Tensor", "backward", "grad_check"]
__version__ = "0.1.0"
