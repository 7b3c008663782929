"""Command-line surface for the synthesis/verification pipeline.

Commands: synth-data, split, train-ae, train-gan, train-wgan,
train-classifier, generate, stylize, verify, cam, sweep, report. Every
command takes --config, --seed and --out; metrics land as CSV files in
the output directory and each run writes a provenance record (config
echo, seed, sha256 of produced artifacts).

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys

import numpy as np

from . import checkpoint as ck
from . import corpus as corpus_mod
from . import networks, ppm, stylize, training, verify
from .config import RunConfig, load_config
from .corpus import DatasetManifest, ManifestEntry


# ---------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_provenance(out_dir, cfg, seed, argv, artifacts):
    lines = [f"command={' '.join(argv)}", f"seed={seed}", "", "[config]"]
    lines += cfg.echo().splitlines()
    lines += ["", "[artifacts]"]
    for path in sorted(artifacts):
        lines.append(f"{_sha256(path)}  {os.path.relpath(path, out_dir)}")
    with open(os.path.join(out_dir, "provenance.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_metrics(path, series):
    keys = list(series)
    n = max((len(v) for v in series.values()), default=0)
    lines = ["step," + ",".join(keys)]
    for i in range(n):
        vals = [f"{series[k][i]:.6f}" if i < len(series[k]) else "" for k in keys]
        lines.append(f"{i}," + ",".join(vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _load_image_set(path):
    """Images from a manifest (.csv) or every .ppm/.pgm in a directory, sorted."""
    if os.path.isdir(path):
        names = sorted(f for f in os.listdir(path) if f.endswith((".ppm", ".pgm")))
        if not names:
            raise FileNotFoundError(f"{path}: no .ppm/.pgm files")
        paths = [os.path.join(path, f) for f in names]
        return np.stack([ppm.load_image(p) for p in paths]), paths
    manifest = DatasetManifest.load(path)
    paths = [e.path for e in manifest.entries]
    return np.stack([ppm.load_image(p) for p in paths]), paths


def _classes_path(ckpt_path):
    return os.path.join(os.path.dirname(os.path.abspath(ckpt_path)), "classes.txt")


def _load_classes(args):
    path = args.labels or _classes_path(args.classifier)
    with open(path) as fh:
        return [ln.strip() for ln in fh if ln.strip()]


def _manifest_images(path, split=None, label=None, provenance=None):
    manifest = DatasetManifest.load(path)
    entries = manifest.entries
    if split:
        entries = [e for e in entries if e.split == split]
    if label:
        entries = [e for e in entries if e.label == label]
    if provenance:
        entries = [e for e in entries if e.provenance == provenance]
    if not entries:
        raise ValueError(f"{path}: no entries match split={split!r} label={label!r} "
                         f"provenance={provenance!r}")
    return np.stack([ppm.load_image(e.path) for e in entries]), entries, manifest


# ---------------------------------------------------------------------
# command handlers (each returns a list of artifact paths)
# ---------------------------------------------------------------------


def _cmd_synth_data(args, cfg, seed, out):
    kind = args.kind or cfg.get("corpus.kind")
    modality = args.modality or cfg.get("corpus.modality")
    n = args.n if args.n is not None else cfg.get("corpus.n")
    size = args.size if args.size is not None else cfg.get("corpus.img_size")
    manifest = corpus_mod.synth_corpus(kind, modality, n, size, seed, out)
    mpath = os.path.join(out, "manifest.csv")
    manifest.save(mpath)
    manifest.validate()
    return [mpath] + [e.path for e in manifest.entries]


def _cmd_split(args, cfg, seed, out):
    manifest = DatasetManifest.load(args.manifest)
    ratios = (cfg.get("split.train"), cfg.get("split.val"), cfg.get("split.test"))
    split = corpus_mod.split_dataset(manifest, ratios, seed)
    mpath = os.path.join(out, "manifest.csv")
    split.save(mpath)
    return [mpath]


def _train_images(args):
    manifest = DatasetManifest.load(args.manifest)
    entries = manifest.entries
    if any(e.split for e in entries):  # honor an existing split, else use everything
        entries = [e for e in entries if e.split == "train"]
    if args.label:
        entries = [e for e in entries if e.label == args.label]
    if not entries:
        raise ValueError(f"{args.manifest}: no training entries"
                         + (f" with label {args.label!r}" if args.label else ""))
    xs = np.stack([ppm.load_image(e.path) for e in entries])
    return xs, manifest


def _cmd_train_ae(args, cfg, seed, out):
    xs, _ = _train_images(args)
    channels = xs.shape[1]
    level = args.level
    enc = networks.build_encoder(level, channels, cfg.get("ae.base_ch"), seed=seed)
    dec = networks.build_decoder(level, channels, cfg.get("ae.base_ch"), seed=seed + 1)
    report = training.train_autoencoder(
        enc, dec, xs, steps=cfg.get("ae.steps"), lr=cfg.get("ae.lr"),
        batch_size=cfg.get("ae.batch_size"), seed=seed)
    enc_path = os.path.join(out, f"enc{level}.ckpt")
    dec_path = os.path.join(out, f"dec{level}.ckpt")
    ck.save_checkpoint(enc, enc_path, step=cfg.get("ae.steps"), seed=seed)
    ck.save_checkpoint(dec, dec_path, step=cfg.get("ae.steps"), seed=seed)
    metrics = _write_metrics(os.path.join(out, f"ae{level}_metrics.csv"), report.series)
    print(f"level {level} reconstruction psnr: {report.extras['psnr']:.2f} dB")
    return [enc_path, dec_path, metrics]


def _gan_nets(xs, cfg, seed, head):
    size = xs.shape[2]
    channels = xs.shape[1]
    key = "gan" if head == "sigmoid" else "wgan"
    base = cfg.get(f"{key}.base_ch")
    latent = cfg.get(f"{key}.latent_dim")
    g = networks.build_dcgan_generator(latent, size, channels, base, seed=seed)
    d = networks.build_discriminator(size, channels, base, head=head, seed=seed + 1)
    return g, d


def _cmd_train_gan(args, cfg, seed, out):
    xs, _ = _train_images(args)
    g, d = _gan_nets(xs, cfg, seed, head="sigmoid")
    gan_cfg = training.GanConfig(
        batch_size=cfg.get("gan.batch_size"), latent_dim=cfg.get("gan.latent_dim"),
        lr_g=cfg.get("gan.lr_g"), lr_d=cfg.get("gan.lr_d"),
        steps=cfg.get("gan.steps"), seed=seed, saturating=cfg.get("gan.saturating"))
    report = training.train_gan(g, d, xs, gan_cfg)
    g_path, d_path = os.path.join(out, "generator.ckpt"), os.path.join(out, "discriminator.ckpt")
    ck.save_checkpoint(g, g_path, step=gan_cfg.steps, seed=seed)
    ck.save_checkpoint(d, d_path, step=gan_cfg.steps, seed=seed)
    metrics = _write_metrics(os.path.join(out, "gan_metrics.csv"), report.series)
    return [g_path, d_path, metrics]


def _cmd_train_wgan(args, cfg, seed, out):
    xs, _ = _train_images(args)
    g, c = _gan_nets(xs, cfg, seed, head="linear")
    wcfg = training.WganConfig(
        clip_c=cfg.get("wgan.clip_c"), n_critic=cfg.get("wgan.n_critic"),
        lr=cfg.get("wgan.lr"), lr_g=cfg.get("wgan.lr_g"),
        steps=cfg.get("wgan.steps"), batch_size=cfg.get("wgan.batch_size"),
        latent_dim=cfg.get("wgan.latent_dim"), seed=seed)
    report = training.train_wgan(g, c, xs, wcfg)
    g_path, c_path = os.path.join(out, "generator.ckpt"), os.path.join(out, "critic.ckpt")
    ck.save_checkpoint(g, g_path, step=wcfg.steps, seed=seed)
    ck.save_checkpoint(c, c_path, step=wcfg.steps, seed=seed)
    metrics = _write_metrics(os.path.join(out, "wgan_metrics.csv"), report.series)
    return [g_path, c_path, metrics]


def _cmd_train_classifier(args, cfg, seed, out):
    manifest = DatasetManifest.load(args.manifest)
    data = {}
    for split in ("train", "val", "test"):
        if manifest.entries_for(split):
            x, y, classes = corpus_mod.load_split_arrays(manifest, split)
            data[split] = (x, y)
    if "train" not in data:
        raise ValueError(f"{args.manifest}: manifest carries no train split; run split first")
    classes = manifest.classes
    size = data["train"][0].shape[2]
    channels = data["train"][0].shape[1]
    net = networks.build_classifier(len(classes), size, channels,
                                    cfg.get("classifier.base_ch"), seed=seed)
    report = training.train_classifier(
        net, data, epochs=cfg.get("classifier.epochs"),
        lr_schedule=(cfg.get("classifier.lr_hi"), cfg.get("classifier.lr_lo")),
        augment_prob=cfg.get("classifier.augment_prob"), seed=seed,
        batch_size=cfg.get("classifier.batch_size"))
    training.restore_best(net, report)
    ckpt = os.path.join(out, "classifier.ckpt")
    ck.save_checkpoint(net, ckpt, epoch=cfg.get("classifier.epochs"), seed=seed)
    classes_path = os.path.join(out, "classes.txt")
    with open(classes_path, "w") as fh:
        fh.write("\n".join(classes) + "\n")
    metrics = _write_metrics(os.path.join(out, "classifier_metrics.csv"), report.series)
    if "test_accuracy" in report.extras:
        print(f"test accuracy: {report.extras['test_accuracy']:.3f} "
              f"(best val {report.extras['best_val_accuracy']:.3f} "
              f"at epoch {report.extras['best_epoch']})")
    return [ckpt, classes_path, metrics]


def _cmd_generate(args, cfg, seed, out):
    g, data = ck.load_network(args.ckpt, expect_kind="dcgan_generator")
    n = args.n if args.n is not None else cfg.get("generate.n")
    sampler = networks.LatentSampler(int(data.meta["latent_dim"]), seed=seed)
    fakes, _ = g.forward(sampler.sample(n), mode="eval")
    imgs = np.clip(fakes.data, -1.0, 1.0)
    manifest = DatasetManifest(seed=seed)
    modality = "CFP" if imgs.shape[1] == 3 else "FA"
    ext = "ppm" if modality == "CFP" else "pgm"
    for i in range(n):
        path = os.path.join(out, f"gen_{i:04d}.{ext}")
        ppm.save_image(imgs[i], path)
        manifest.entries.append(ManifestEntry(path, args.label, modality,
                                              provenance=args.provenance))
    mpath = os.path.join(out, "manifest.csv")
    manifest.save(mpath)
    return [mpath] + [e.path for e in manifest.entries]


def _load_stack(stack_dir, cfg):
    encoders, decoders = {}, {}
    levels = cfg.get("stylize.levels")
    for k in range(1, levels + 1):
        encoders[k], _ = ck.load_network(os.path.join(stack_dir, f"enc{k}.ckpt"), "encoder")
        decoders[k], _ = ck.load_network(os.path.join(stack_dir, f"dec{k}.ckpt"), "decoder")
    return stylize.StylizerStack(
        encoders, decoders, alpha=cfg.get("stylize.alpha"),
        eps_reg=cfg.get("stylize.eps_reg"), eig_floor=cfg.get("stylize.eig_floor"),
        levels=levels)


def _cmd_stylize(args, cfg, seed, out):
    stack = _load_stack(args.stack, cfg)
    c_imgs, c_paths = _load_image_set(args.content)
    s_imgs, s_paths = _load_image_set(args.style)
    contents = list(zip(c_paths, c_imgs))
    styles = list(zip(s_paths, s_imgs))
    results = stylize.batch_stylize(contents, styles, args.pairing, stack)
    ext = "ppm" if c_imgs.shape[1] == 3 else "pgm"
    lines = ["content_path,style_path,output_path,alpha,levels"]
    artifacts = []
    for i, res in enumerate(results):
        path = os.path.join(out, f"styled_{i:04d}.{ext}")
        ppm.save_image(res.image, path)
        artifacts.append(path)
        lines.append(f"{res.content_id},{res.style_id},{path},{res.alpha},{stack.levels}")
    mpath = os.path.join(out, "stylize_manifest.csv")
    with open(mpath, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    for path in artifacts:  # manifest rows must reference decodable files
        ppm.load_image(path)
    return [mpath] + artifacts


def _cmd_verify(args, cfg, seed, out):
    net, _ = ck.load_network(args.classifier, expect_kind="classifier")
    classes = _load_classes(args)
    if args.true_class not in classes:
        raise ValueError(f"true class {args.true_class!r} not in {classes}")
    imgs, _ = _load_image_set(args.images)
    row = verify.verify_images(net, imgs, classes.index(args.true_class),
                               source=args.source, class_group=args.true_class,
                               batch_size=cfg.get("verify.batch_size"))
    table = verify.VerificationTable()
    table.add(row)
    path = os.path.join(out, "verification.csv")
    with open(path, "w") as fh:
        fh.write(table.to_csv())
    print(f"{args.source}/{args.true_class}: mean true-class probability "
          f"{row.mean_true_prob:.4f} over {row.count} images")
    return [path]


def _cmd_cam(args, cfg, seed, out):
    net, _ = ck.load_network(args.classifier, expect_kind="classifier")
    classes = _load_classes(args)
    if args.class_name not in classes:
        raise ValueError(f"class {args.class_name!r} not in {classes}")
    image = ppm.load_image(args.image)
    cam = verify.compute_cam(net, image, classes.index(args.class_name),
                             source=os.path.basename(args.image))
    cam_path = os.path.join(out, "cam.pgm")
    overlay_path = os.path.join(out, "cam_overlay.ppm")
    ppm.save_image(verify.cam_to_image(cam), cam_path)
    ppm.save_image(verify.cam_overlay(image, cam), overlay_path)
    return [cam_path, overlay_path]


def _cmd_sweep(args, cfg, seed, out):
    net, _ = ck.load_network(args.classifier, expect_kind="classifier")
    classes = _load_classes(args)
    if args.true_class not in classes:
        raise ValueError(f"true class {args.true_class!r} not in {classes}")
    imgs, entries, _ = _manifest_images(args.manifest, label=args.true_class)
    sizes = cfg.get("sweep.sizes")
    steps = cfg.get("sweep.steps")

    def train_point(subset, point_seed):
        g, c = _gan_nets(subset, cfg, point_seed, head="linear")
        wcfg = training.WganConfig(
            steps=steps, batch_size=min(cfg.get("wgan.batch_size"), subset.shape[0]),
            latent_dim=cfg.get("wgan.latent_dim"), lr=cfg.get("wgan.lr"),
            lr_g=cfg.get("wgan.lr_g"), seed=point_seed)
        training.train_wgan(g, c, subset, wcfg)
        return g

    rows = verify.sample_size_sweep(sizes, imgs, train_point, net,
                                    classes.index(args.true_class), seed=seed,
                                    n_generate=cfg.get("sweep.n_generate"))
    path = os.path.join(out, "sweep.csv")
    with open(path, "w") as fh:
        fh.write(verify.sweep_csv(rows))
    return [path]


def _cmd_report(args, cfg, seed, out):
    net, _ = ck.load_network(args.classifier, expect_kind="classifier")
    classes = _load_classes(args)
    imgs, _ = _load_image_set(args.images)
    report = verify.relation_report(net, imgs, cfg.get("report.top_n"), class_names=classes)
    path = os.path.join(out, "relation.csv")
    with open(path, "w") as fh:
        fh.write(verify.relation_csv(report))
    for name, prob in report:
        print(f"{name}: {prob:.4f}")
    return [path]


# ---------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------


def _build_parser():
    parser = argparse.ArgumentParser(prog="retinagen",
                                     description="synthetic retinal imaging pipeline")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to a key=value config file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=".", help="output directory")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth-data", parents=[common], help="render a synthetic corpus")
    p.add_argument("--kind", choices=corpus_mod.KINDS)
    p.add_argument("--modality", choices=corpus_mod.MODALITIES)
    p.add_argument("--n", type=int)
    p.add_argument("--size", type=int, choices=(32, 64))

    p = sub.add_parser("split", parents=[common], help="assign train/val/test splits")
    p.add_argument("--manifest", required=True)

    for name, extra in (("train-ae", ("--level",)), ("train-gan", ()), ("train-wgan", ())):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--manifest", required=True)
        p.add_argument("--label", help="restrict training to one class label")
        if extra:
            p.add_argument("--level", type=int, required=True, choices=(1, 2, 3, 4))

    p = sub.add_parser("train-classifier", parents=[common])
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("generate", parents=[common], help="sample a trained generator")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--label", default="generated")
    p.add_argument("--provenance", default="wgan", choices=("real", "wgan", "styletransfer"))

    p = sub.add_parser("stylize", parents=[common])
    p.add_argument("--stack", required=True, help="directory of enc{k}/dec{k} checkpoints")
    p.add_argument("--content", required=True, help="manifest or directory of content images")
    p.add_argument("--style", required=True, help="manifest or directory of style images")
    p.add_argument("--pairing", default="all_pairs", choices=("all_pairs", "zip"))

    p = sub.add_parser("verify", parents=[common])
    p.add_argument("--classifier", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--true-class", required=True)
    p.add_argument("--source", default="real", choices=("real", "wgan", "styletransfer"))
    p.add_argument("--labels", help="classes.txt path (defaults beside the checkpoint)")

    p = sub.add_parser("cam", parents=[common])
    p.add_argument("--classifier", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--class-name", required=True)
    p.add_argument("--labels")

    p = sub.add_parser("sweep", parents=[common])
    p.add_argument("--classifier", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--true-class", required=True)
    p.add_argument("--labels")

    p = sub.add_parser("report", parents=[common])
    p.add_argument("--classifier", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--labels")
    return parser


_HANDLERS = {
    "synth-data": _cmd_synth_data,
    "split": _cmd_split,
    "train-ae": _cmd_train_ae,
    "train-gan": _cmd_train_gan,
    "train-wgan": _cmd_train_wgan,
    "train-classifier": _cmd_train_classifier,
    "generate": _cmd_generate,
    "stylize": _cmd_stylize,
    "verify": _cmd_verify,
    "cam": _cmd_cam,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def cli_dispatch(argv):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    cfg = RunConfig()
    try:
        if args.config:
            cfg = load_config(args.config)
        out = os.path.abspath(args.out)
        os.makedirs(out, exist_ok=True)
        artifacts = _HANDLERS[args.command](args, cfg, args.seed, out)
        _write_provenance(out, cfg, args.seed, [args.command] + list(argv[1:]), artifacts)
    except Exception as exc:  # runtime failure, not usage
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
