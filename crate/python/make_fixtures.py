"""Regenerates the bundled CLI fixtures in crates/core/tests/fixtures.

Tensors and embeddings are float32 NPY written by numpy, images are PNG and
masks are VOC-style palette PNG written by Pillow, so the Rust readers are
exercised on files produced by other tools.
"""

import csv
from pathlib import Path

import numpy as np
from PIL import Image

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "tests" / "fixtures"
COLUMNS = ["id", "features", "image", "mask", "p", "o", "embedding", "embedding_masked"]
RANK1 = 3


def voc_palette():
    pal = []
    for i in range(256):
        r = g = b = 0
        c = i
        for j in range(8):
            r |= ((c >> 0) & 1) << (7 - j)
            g |= ((c >> 1) & 1) << (7 - j)
            b |= ((c >> 2) & 1) << (7 - j)
            c >>= 3
        pal += [r, g, b]
    return pal


def mask_image(rng, size, label):
    m = np.zeros((size, size), dtype=np.uint8)
    y0, x0 = rng.integers(2, size // 2, size=2)
    y1, x1 = y0 + rng.integers(6, size // 2), x0 + rng.integers(6, size // 2)
    m[y0 - 1 : y1 + 1, x0 - 1 : x1 + 1] = 255
    m[y0:y1, x0:x1] = label
    img = Image.fromarray(m, mode="P")
    img.putpalette(voc_palette())
    return img


def main():
    rng = np.random.default_rng(20240611)
    OUT.mkdir(parents=True, exist_ok=True)
    rows = []
    confidences = [
        (0.8, 0.6), (0.5, 0.7), (0.9, 0.9), (0.6, 0.3), (0.75, 0.8),
        (0.4, 0.1), (0.95, 0.5), (0.3, 0.45), (0.65, 0.65), (0.85, 0.2),
    ]
    for i in range(10):
        ident = f"f{i:02d}"
        c, h, w = (16, 7, 7) if i % 3 else (12, 5, 6)
        if i < RANK1:
            spatial = rng.random((h, w)) + 0.05
            spatial[rng.integers(h), rng.integers(w)] = 0.0
            channel = rng.random(c) + 0.1
            t = channel[:, None, None] * spatial[None]
            np.save(OUT / f"{ident}.spatial.npy", spatial.astype(np.float64))
        else:
            t = np.maximum(rng.standard_normal((c, h, w)), 0.0)
            t[:, h // 2, w // 2] += 2.0
        np.save(OUT / f"{ident}.features.npy", t if i < RANK1 else t.astype(np.float32))

        size = 28
        pixels = (rng.random((size, size, 3)) * 255).astype(np.uint8)
        if i % 4 == 3:
            Image.fromarray(pixels[..., 0], mode="L").save(OUT / f"{ident}.image.png")
        else:
            Image.fromarray(pixels, mode="RGB").save(OUT / f"{ident}.image.png")
        mask_image(rng, size, label=int(rng.integers(1, 21))).save(OUT / f"{ident}.mask.png")

        z = rng.standard_normal(16).astype(np.float32)
        zm = (z + 0.05 * rng.standard_normal(16)).astype(np.float32)
        np.save(OUT / f"{ident}.z.npy", z)
        np.save(OUT / f"{ident}.zm.npy", zm)

        p, o = confidences[i]
        rows.append([
            ident, f"{ident}.features.npy", f"{ident}.image.png", f"{ident}.mask.png",
            p, o, f"{ident}.z.npy", f"{ident}.zm.npy",
        ])

    for name, subset in [("manifest.csv", rows), ("rank1.csv", rows[:RANK1])]:
        with open(OUT / name, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(COLUMNS)
            wr.writerows(subset)
    with open(OUT / "empty.csv", "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerow(COLUMNS)


if __name__ == "__main__":
    main()
