#!/usr/bin/env python3
"""Regenerate the grayscale fixture images under data/ from scikit-image's bundled samples.

    python3 scripts/make_fixtures.py [--out data]

data/train : 24 images, 180x180, used for patch extraction during training
data/test  : held-out cameraman, 256x256 (not used by data/train)
data/codec : 8 images, 128x128, used by the coding-fidelity sweeps
"""
import argparse
import os

import numpy as np
import skimage.data as sd
from skimage.color import rgb2gray, rgba2rgb
from skimage.transform import resize


def gray(img):
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[2] == 4:
        img = rgba2rgb(img)
    if img.ndim == 3:
        img = rgb2gray(img)
    img = img.astype(np.float64)
    if img.max() > 1.0:
        img = img / 255.0
    return img


def square(img, size, box=None):
    if box is not None:
        y, x, s = box
        img = img[y:y + s, x:x + s]
    else:
        s = min(img.shape)
        y = (img.shape[0] - s) // 2
        x = (img.shape[1] - s) // 2
        img = img[y:y + s, x:x + s]
    out = resize(img, (size, size), anti_aliasing=True)
    return np.clip(np.round(out * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path, img):
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data")
    args = ap.parse_args()

    src = {
        "moon": gray(sd.moon()),
        "coins": gray(sd.coins()),
        "text": gray(sd.text()),
        "page": gray(sd.page()),
        "brick": gray(sd.brick()),
        "grass": gray(sd.grass()),
        "gravel": gray(sd.gravel()),
        "clock": gray(sd.clock()),
        "cell": gray(sd.cell()),
        "astronaut": gray(sd.astronaut()),
        "chelsea": gray(sd.chelsea()),
        "coffee": gray(sd.coffee()),
        "rocket": gray(sd.rocket()),
        "hubble": gray(sd.hubble_deep_field()),
        "ihc": gray(sd.immunohistochemistry()),
        "retina": gray(sd.retina()),
        "moto_l": gray(sd.stereo_motorcycle()[0]),
        "moto_r": gray(sd.stereo_motorcycle()[1]),
    }

    train = [
        ("moon", None), ("coins", None), ("text", None), ("page", None),
        ("brick", None), ("grass", None), ("gravel", None), ("clock", None),
        ("cell", None), ("chelsea", None), ("coffee", None), ("rocket", None),
        ("hubble", None), ("ihc", None), ("retina", None),
        ("astronaut", (0, 0, 256)), ("astronaut", (256, 256, 256)),
        ("astronaut", (0, 256, 256)),
        ("moto_l", (0, 0, 500)), ("moto_l", (0, 241, 500)),
        ("moto_l", (100, 120, 400)),
        ("moto_r", (0, 0, 400)), ("moto_r", (100, 341, 400)),
        ("moto_r", (0, 170, 300)),
    ]
    os.makedirs(os.path.join(args.out, "train"), exist_ok=True)
    for i, (name, box) in enumerate(train):
        write_pgm(os.path.join(args.out, "train", "%02d_%s.pgm" % (i, name)),
                  square(src[name], 180, box))

    os.makedirs(os.path.join(args.out, "test"), exist_ok=True)
    write_pgm(os.path.join(args.out, "test", "cameraman.pgm"), square(gray(sd.camera()), 256))

    codec = ["moon", "coins", "text", "chelsea", "brick", "rocket", "clock", "astronaut"]
    os.makedirs(os.path.join(args.out, "codec"), exist_ok=True)
    write_pgm(os.path.join(args.out, "codec", "cameraman.pgm"), square(gray(sd.camera()), 128))
    for name in codec[:-1]:
        write_pgm(os.path.join(args.out, "codec", "%s.pgm" % name), square(src[name], 128))


if __name__ == "__main__":
    main()
