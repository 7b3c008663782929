"""End-to-end command-line runs at miniature scale."""

import os

import numpy as np
import pytest

import retinagen.ppm as ppm
from retinagen.cli import cli_dispatch
from retinagen.corpus import DatasetManifest


def run(*argv):
    return cli_dispatch(list(argv))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """synth-data + split once; later commands build on it."""
    root = tmp_path_factory.mktemp("cli")
    for kind in ("drusen", "healthy"):
        assert run("synth-data", "--kind", kind, "--modality", "CFP", "--n", "24",
                   "--size", "32", "--seed", "5", "--out", str(root / kind)) == 0
    merged = DatasetManifest.load(root / "drusen" / "manifest.csv")
    other = DatasetManifest.load(root / "healthy" / "manifest.csv")
    merged.entries.extend(other.entries)
    merged.save(root / "all.csv")
    assert run("split", "--manifest", str(root / "all.csv"),
               "--seed", "3", "--out", str(root / "split")) == 0
    return root


def test_synth_data_writes_images_and_manifest(workspace):
    files = os.listdir(workspace / "drusen")
    assert "manifest.csv" in files
    assert "provenance.txt" in files
    assert sum(f.endswith(".ppm") for f in files) == 24


def test_provenance_record_contents(workspace):
    text = (workspace / "drusen" / "provenance.txt").read_text()
    assert "seed=5" in text
    assert "corpus.kind=drusen" in text  # full config echo
    assert "manifest.csv" in text
    # artifact hashes are real sha256 hex
    line = [ln for ln in text.splitlines() if ln.endswith("manifest.csv")][0]
    assert len(line.split()[0]) == 64


def test_split_assigns_all_three(workspace):
    m = DatasetManifest.load(workspace / "split" / "manifest.csv")
    assert {e.split for e in m.entries} == {"train", "val", "test"}


def test_unknown_command_usage_error(capsys):
    assert run("frobnicate") == 1
    assert run() == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_usage_error(workspace):
    assert run("split", "--manifest", str(workspace / "all.csv"), "--bogus", "1") == 1


def test_runtime_error_exit_two(tmp_path):
    assert run("split", "--manifest", str(tmp_path / "missing.csv"),
               "--out", str(tmp_path)) == 2


def test_unknown_config_key_exit_two(workspace, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("wgan.clpi_c=0.02\n")
    assert run("split", "--manifest", str(workspace / "all.csv"),
               "--config", str(cfg), "--out", str(tmp_path / "o")) == 2


def test_train_classifier_verify_cam_report(workspace, tmp_path):
    cfg = tmp_path / "fast.cfg"
    cfg.write_text("classifier.epochs=6\nclassifier.lr_hi=1e-3\nclassifier.lr_lo=1e-4\n"
                   "classifier.base_ch=8\nreport.top_n=2\n")
    cls_dir = tmp_path / "cls"
    assert run("train-classifier", "--manifest", str(workspace / "split" / "manifest.csv"),
               "--config", str(cfg), "--seed", "1", "--out", str(cls_dir)) == 0
    assert (cls_dir / "classifier.ckpt").exists()
    assert (cls_dir / "classes.txt").read_text().split() == ["drusen", "healthy"]
    metrics = (cls_dir / "classifier_metrics.csv").read_text().splitlines()
    assert metrics[0] == "step,train_loss,val_accuracy,lr"
    assert len(metrics) == 7

    vdir = tmp_path / "verify"
    assert run("verify", "--classifier", str(cls_dir / "classifier.ckpt"),
               "--images", str(workspace / "drusen"), "--true-class", "drusen",
               "--source", "real", "--out", str(vdir)) == 0
    lines = (vdir / "verification.csv").read_text().splitlines()
    assert lines[0] == "source,class_group,n,mean_true_prob,top1_accuracy"
    value = float(lines[1].split(",")[3])
    assert 0.0 <= value <= 1.0

    cam_dir = tmp_path / "cam"
    some_image = next(f for f in sorted(os.listdir(workspace / "drusen")) if f.endswith(".ppm"))
    assert run("cam", "--classifier", str(cls_dir / "classifier.ckpt"),
               "--image", str(workspace / "drusen" / some_image),
               "--class-name", "drusen", "--out", str(cam_dir)) == 0
    cam_img = ppm.load_image(cam_dir / "cam.pgm")
    overlay = ppm.load_image(cam_dir / "cam_overlay.ppm")
    assert cam_img.shape == (1, 32, 32)
    assert overlay.shape == (3, 32, 32)

    rep_dir = tmp_path / "rep"
    assert run("report", "--classifier", str(cls_dir / "classifier.ckpt"),
               "--images", str(workspace / "drusen"), "--out", str(rep_dir)) == 0
    rep_lines = (rep_dir / "relation.csv").read_text().splitlines()
    assert rep_lines[0] == "class,mean_prob"
    assert len(rep_lines) == 3  # top_n=2


def test_train_wgan_and_generate(workspace, tmp_path):
    cfg = tmp_path / "wgan.cfg"
    cfg.write_text("wgan.steps=4\nwgan.batch_size=4\nwgan.latent_dim=8\n"
                   "wgan.base_ch=8\nwgan.n_critic=2\n")
    gdir = tmp_path / "wgan"
    assert run("train-wgan", "--manifest", str(workspace / "split" / "manifest.csv"),
               "--label", "drusen", "--config", str(cfg), "--seed", "2",
               "--out", str(gdir)) == 0
    assert (gdir / "generator.ckpt").exists()
    assert (gdir / "critic.ckpt").exists()
    assert (gdir / "wgan_metrics.csv").read_text().splitlines()[0] == "step,critic_estimate,g_loss"

    out = tmp_path / "gen"
    assert run("generate", "--ckpt", str(gdir / "generator.ckpt"), "--n", "4",
               "--seed", "9", "--out", str(out)) == 0
    m = DatasetManifest.load(out / "manifest.csv")
    assert len(m.entries) == 4
    assert all(e.provenance == "wgan" for e in m.entries)
    for e in m.entries:
        img = ppm.load_image(e.path)
        assert img.min() >= -1.0 and img.max() <= 1.0


def test_train_ae_and_stylize(workspace, tmp_path):
    cfg = tmp_path / "ae.cfg"
    cfg.write_text("ae.steps=12\nae.batch_size=4\nae.base_ch=8\nstylize.levels=2\n")
    stack_dir = tmp_path / "stack"
    for level in ("1", "2"):
        assert run("train-ae", "--manifest", str(workspace / "split" / "manifest.csv"),
                   "--level", level, "--config", str(cfg), "--seed", "4",
                   "--out", str(stack_dir)) == 0
    sdir = tmp_path / "styled"
    assert run("stylize", "--stack", str(stack_dir),
               "--content", str(workspace / "drusen"),
               "--style", str(workspace / "healthy"),
               "--pairing", "zip", "--config", str(cfg), "--out", str(sdir)) == 0
    rows = (sdir / "stylize_manifest.csv").read_text().splitlines()
    assert rows[0] == "content_path,style_path,output_path,alpha,levels"
    assert len(rows) == 25
    out_img = ppm.load_image(rows[1].split(",")[2])
    assert out_img.shape == (3, 32, 32)


def test_sweep_command(workspace, tmp_path):
    cls_cfg = tmp_path / "c.cfg"
    cls_cfg.write_text("classifier.epochs=2\nclassifier.base_ch=8\n")
    cls_dir = tmp_path / "cls2"
    assert run("train-classifier", "--manifest", str(workspace / "split" / "manifest.csv"),
               "--config", str(cls_cfg), "--out", str(cls_dir)) == 0
    cfg = tmp_path / "s.cfg"
    cfg.write_text("sweep.sizes=4,8\nsweep.steps=2\nsweep.n_generate=4\n"
                   "wgan.batch_size=4\nwgan.latent_dim=8\nwgan.base_ch=8\nwgan.n_critic=1\n")
    out1, out2 = tmp_path / "sw1", tmp_path / "sw2"
    for out in (out1, out2):
        assert run("sweep", "--classifier", str(cls_dir / "classifier.ckpt"),
                   "--manifest", str(workspace / "all.csv"), "--true-class", "drusen",
                   "--config", str(cfg), "--seed", "6", "--out", str(out)) == 0
    csv1 = (out1 / "sweep.csv").read_bytes()
    csv2 = (out2 / "sweep.csv").read_bytes()
    assert csv1 == csv2  # byte-identical across same-seed runs
    lines = csv1.decode().splitlines()
    assert lines[0] == "size,mean_true_prob,top1_accuracy,offclass_top3"
    assert len(lines) == 3
