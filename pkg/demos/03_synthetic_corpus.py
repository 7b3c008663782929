"""Render the synthetic fundus corpus and inspect what separates the classes.

Images are a pure function of (kind, modality, size, seed, index): a dark
disk with vessel curves, plus bright dots for drusen or one demarcated
patch for geographic atrophy. A contact sheet lands in ./demo_out/.
"""

import os

import numpy as np

from retinagen.corpus import render_image
from retinagen.ppm import save_image

OUT = "demo_out"
os.makedirs(OUT, exist_ok=True)


def contact_sheet(images, cols):
    n, c, h, w = images.shape
    rows = (n + cols - 1) // cols
    sheet = np.full((c, rows * h, cols * w), -1.0, dtype=np.float32)
    for i, img in enumerate(images):
        r, cc = divmod(i, cols)
        sheet[:, r * h:(r + 1) * h, cc * w:(cc + 1) * w] = img
    return sheet


kinds = ("healthy", "drusen", "ga")
per_kind = 4
tiles = []
for ki, kind in enumerate(kinds):
    for i in range(per_kind):
        rng = np.random.default_rng((11, ki, i))
        tiles.append(render_image(kind, "CFP", 64, rng))
sheet = contact_sheet(np.stack(tiles), cols=per_kind)
save_image(sheet, os.path.join(OUT, "corpus_cfp.ppm"))
print(f"wrote {OUT}/corpus_cfp.ppm  (rows top to bottom: {', '.join(kinds)})")

fa = [render_image(k, "FA", 64, np.random.default_rng((12, ki, 0)))
      for ki, k in enumerate(kinds)]
save_image(contact_sheet(np.stack(fa), cols=3), os.path.join(OUT, "corpus_fa.pgm"))
print(f"wrote {OUT}/corpus_fa.pgm   (gray angiography variants)\n")

print("what the classifier has to work with")
print("-" * 54)
for ki, kind in enumerate(kinds):
    brights, means = [], []
    for i in range(25):
        img = render_image(kind, "CFP", 64, np.random.default_rng((13, ki, i)))
        gray = img.mean(axis=0)
        disk = gray > -0.9
        brights.append(int(((gray > 0.5) & disk).sum()))
        means.append(gray[disk].mean())
    print(f"{kind:<8} disk mean {np.mean(means):+.3f}   "
          f"bright pixels (>0.5): {np.mean(brights):6.1f} per image")
print("\ndrusen scatter many small bright dots; ga concentrates one patch;")
print("healthy disks keep every pixel below the brightness threshold")
