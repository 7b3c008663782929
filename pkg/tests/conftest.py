"""Session-scoped fixtures shared by the acceptance suite.

Everything here is deterministic (fixed seeds) and built once: a 64x64
three-class corpus with its trained classifier, a 500-image drusen set
with a trained generator, a 32x32 pretrained stylizer stack, and the CAM
probe set. Building these is the bulk of the suite's runtime.
"""

import time

import numpy as np
import pytest

import retinagen.corpus as C
import retinagen.networks as N
import retinagen.stylize as S
import retinagen.training as TR

CORPUS_SEED = 101
DRUSEN_SEED = 202
WGAN_SEED = 300
STACK_SEED = 303
PROBE_SEED = 404
SWEEP_SEED = 505

CLASSES = ("drusen", "ga", "healthy")


@pytest.fixture(scope="session")
def corpus64(tmp_path_factory):
    """600-image three-class corpus at 64x64 with a 70/10/20 split."""
    root = tmp_path_factory.mktemp("corpus64")
    parts = [C.synth_corpus(kind, "CFP", 200, 64, seed=CORPUS_SEED, out_dir=root / kind)
             for kind in CLASSES]
    manifest = C.split_dataset(C.merge_manifests(parts, seed=CORPUS_SEED),
                               (0.7, 0.1, 0.2), seed=CORPUS_SEED)
    data = {}
    for split in ("train", "val", "test"):
        x, y, classes = C.load_split_arrays(manifest, split)
        data[split] = (x, y)
    return {"manifest": manifest, "data": data, "classes": list(classes)}


@pytest.fixture(scope="session")
def classifier64(corpus64):
    """Classifier trained with the stated schedule; also reports its history."""
    net = N.build_classifier(3, 64, 3, 16, seed=CORPUS_SEED)
    report = TR.train_classifier(net, corpus64["data"], epochs=40,
                                 lr_schedule=(1e-4, 1e-5), augment_prob=0.7,
                                 seed=CORPUS_SEED, batch_size=16)
    TR.restore_best(net, report)
    return {"net": net, "report": report, "classes": corpus64["classes"]}


@pytest.fixture(scope="session")
def drusen500():
    imgs = [C.render_image("drusen", "CFP", 64, C._image_rng("drusen", "CFP", 64, DRUSEN_SEED, i))
            for i in range(500)]
    return np.stack(imgs)


@pytest.fixture(scope="session")
def wgan_run(drusen500):
    """2000-step weight-clipped adversarial run, recording the clip invariant."""
    t0 = time.perf_counter()
    g = N.build_dcgan_generator(100, 64, 3, 16, seed=WGAN_SEED)
    critic = N.build_discriminator(64, 3, 16, head="linear", seed=WGAN_SEED + 1)
    cfg = TR.WganConfig(steps=2000, batch_size=16, latent_dim=100, lr=2e-4, seed=WGAN_SEED)
    state = TR.init_wgan_state(cfg)
    sampler = N.LatentSampler(cfg.latent_dim, seed=cfg.seed)
    rng = np.random.default_rng((cfg.seed, 202))
    clip_ok = True
    for _ in range(cfg.steps):
        batch = drusen500[rng.choice(drusen500.shape[0], cfg.batch_size, replace=False)]
        TR.wgan_step(g, critic, batch, sampler, cfg, state)
        worst = max(np.abs(p.data).max() for p in critic.parameters().values())
        clip_ok = clip_ok and worst <= cfg.clip_c
    return {"generator": g, "critic": critic, "cfg": cfg, "clip_ok": clip_ok,
            "wall_time": time.perf_counter() - t0}


@pytest.fixture(scope="session")
def corpus32():
    """Mixed 32x32 images for stylizer pretraining plus held-out ones."""
    imgs = []
    for k, kind in enumerate(CLASSES):
        for i in range(110):
            rng = C._image_rng(kind, "CFP", 32, STACK_SEED, i)
            imgs.append(C.render_image(kind, "CFP", 32, rng))
    imgs = np.stack(imgs)
    order = np.random.default_rng(STACK_SEED).permutation(len(imgs))
    train, held = imgs[order[:270]], imgs[order[270:]]
    return {"train": train, "held": held}


@pytest.fixture(scope="session")
def stylizer32(corpus32):
    """Four pretrained encoder/decoder pairs at 32x32."""
    t0 = time.perf_counter()
    encoders, decoders, psnrs = {}, {}, {}
    for level in (1, 2, 3, 4):
        enc = N.build_encoder(level, img_channels=3, seed=STACK_SEED + level)
        dec = N.build_decoder(level, img_channels=3, seed=STACK_SEED + 10 + level)
        report = TR.train_autoencoder(enc, dec, corpus32["train"], steps=2000, lr=2e-3,
                                      batch_size=8, seed=level,
                                      holdout=corpus32["held"][:20])
        encoders[level], decoders[level] = enc, dec
        psnrs[level] = report.extras["psnr"]
    stack = S.StylizerStack(encoders, decoders, alpha=1.0)
    return {"stack": stack, "level_psnrs": psnrs,
            "pretrain_time": time.perf_counter() - t0}


@pytest.fixture(scope="session")
def cam_probes():
    imgs, quadrants = C.cam_probe_set(100, 64, seed=PROBE_SEED)
    return {"images": imgs, "quadrants": quadrants}


@pytest.fixture(scope="session")
def drusen200_32():
    imgs = [C.render_image("drusen", "CFP", 32, C._image_rng("drusen", "CFP", 32, SWEEP_SEED, i))
            for i in range(200)]
    return np.stack(imgs)
