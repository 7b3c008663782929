"""Flat run configuration: ``section.key=value`` lines, '#' comments.

Every key is registered in SCHEMA with its type, default and a one-line
description; an unregistered key in a config file is an error, which
catches typos before a long run burns time. Values are echoed into each
run's output directory for provenance.
"""

from __future__ import annotations

from .errors import ConfigurationError


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_list(s):
    return tuple(int(p) for p in str(s).split(",") if p.strip())


# key -> (caster, default, description)
SCHEMA = {
    "corpus.kind": (str, "drusen", "synthetic image kind: drusen | ga | healthy"),
    "corpus.modality": (str, "CFP", "image modality: CFP (color) | FA (gray)"),
    "corpus.n": (int, 100, "number of images to render"),
    "corpus.img_size": (int, 64, "square image size, 32 or 64"),

    "split.train": (float, 0.7, "train fraction of the dataset split"),
    "split.val": (float, 0.1, "validation fraction of the dataset split"),
    "split.test": (float, 0.2, "test fraction of the dataset split"),

    "gan.batch_size": (int, 16, "samples per adversarial step"),
    "gan.latent_dim": (int, 100, "latent vector dimension"),
    "gan.lr_g": (float, 2e-4, "generator learning rate"),
    "gan.lr_d": (float, 2e-4, "discriminator learning rate"),
    "gan.steps": (int, 500, "number of adversarial steps"),
    "gan.base_ch": (int, 16, "base channel width of generator/discriminator"),
    "gan.saturating": (_bool, False, "use the original minimax generator loss"),

    "wgan.clip_c": (float, 0.01, "critic weight clipping bound"),
    "wgan.n_critic": (int, 5, "critic updates per generator update"),
    "wgan.lr": (float, 5e-5, "rmsprop learning rate for the critic"),
    "wgan.lr_g": (float, 5e-5, "rmsprop learning rate for the generator"),
    "wgan.steps": (int, 500, "number of generator updates"),
    "wgan.batch_size": (int, 16, "samples per critic/generator pass"),
    "wgan.latent_dim": (int, 100, "latent vector dimension"),
    "wgan.base_ch": (int, 16, "base channel width of generator/critic"),

    "classifier.epochs": (int, 40, "training epochs (learning rate halves schedule at the midpoint)"),
    "classifier.lr_hi": (float, 1e-4, "learning rate for the first half of the epochs"),
    "classifier.lr_lo": (float, 1e-5, "learning rate for the second half of the epochs"),
    "classifier.augment_prob": (float, 0.7, "per-sample probability of affine augmentation"),
    "classifier.batch_size": (int, 16, "samples per classifier step"),
    "classifier.base_ch": (int, 16, "base channel width of the classifier"),

    "ae.steps": (int, 2000, "autoencoder training steps per level"),
    "ae.lr": (float, 1e-3, "autoencoder adam learning rate"),
    "ae.batch_size": (int, 8, "autoencoder batch size"),
    "ae.base_ch": (int, 16, "base channel width of the feature codec"),

    "stylize.alpha": (float, 1.0, "statistics-transfer strength in [0, 1]"),
    "stylize.eps_reg": (float, 1e-5, "covariance ridge regularizer"),
    "stylize.eig_floor": (float, 1e-8, "eigenvalue floor before fractional powers"),
    "stylize.levels": (int, 4, "number of stylization levels (coarse to fine)"),

    "generate.n": (int, 16, "images to sample from a generator checkpoint"),
    "verify.batch_size": (int, 64, "inference batch size"),
    "report.top_n": (int, 5, "classes to keep in the relation report"),

    "sweep.sizes": (_int_list, (50, 100, 200), "ascending training-subset sizes"),
    "sweep.n_generate": (int, 64, "samples generated per sweep point"),
    "sweep.steps": (int, 300, "training steps per sweep point"),
}


class RunConfig:
    """Typed view over the flat key space with documented defaults."""

    def __init__(self, values=None):
        self.values = {}
        for key, value in (values or {}).items():
            self.set(key, value)

    def set(self, key, raw):
        if key not in SCHEMA:
            raise ConfigurationError(f"unknown config key {key!r}")
        caster = SCHEMA[key][0]
        try:
            self.values[key] = caster(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"config key {key!r}: bad value {raw!r} ({exc})")

    def get(self, key):
        if key not in SCHEMA:
            raise ConfigurationError(f"unknown config key {key!r}")
        return self.values.get(key, SCHEMA[key][1])

    def echo(self):
        """Canonical text of every key (set or default), sorted."""
        lines = [f"{key}={_fmt(self.get(key))}" for key in sorted(SCHEMA)]
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def parse_config(text):
    """Parse ``key=value`` lines; '#' starts a comment, blank lines skipped."""
    cfg = RunConfig()
    for ln_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {ln_no}: expected key=value, got {raw_line!r}")
        key, _, value = line.partition("=")
        cfg.set(key.strip(), value.strip())
    return cfg


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())
