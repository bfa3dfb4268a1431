"""Deterministic corpora for the test suite.

Benchmark stand-ins come from scikit-image's bundled photographs; the text
class is rendered with Pillow's built-in font; the face-like class is a
parametric portrait generator.  Everything is seeded, so fixtures are
reproducible across runs.
"""

from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw, ImageFont
from skimage import data

from gmmrestore import resize_bilinear

_WORD_CHARS = "abcdefghijklmnopqrstuvwxyz"


def generic_images(size: int = 256) -> list[np.ndarray]:
    """Five grayscale photographs (natural-image training corpus)."""
    astro = data.astronaut().astype(np.float64).mean(axis=2)
    sources = [astro,
               data.moon().astype(np.float64),
               data.coins().astype(np.float64),
               data.clock().astype(np.float64),
               data.brick().astype(np.float64)]
    return [resize_bilinear(img, size, size) for img in sources]


def cameraman(size: int = 256) -> np.ndarray:
    return resize_bilinear(data.camera().astype(np.float64), size, size)


def cameraman128() -> np.ndarray:
    """128x128 crop of the cameraman (face, camera and tripod region)."""
    return cameraman(256)[48:176, 64:192].copy()


def _random_words(rng: np.random.Generator, count: int) -> str:
    words = []
    for _ in range(count):
        length = int(rng.integers(2, 9))
        words.append("".join(rng.choice(list(_WORD_CHARS), size=length)))
    return " ".join(words)


def make_text_images(n: int, shape=(128, 128), seed: int = 0,
                     font_size: int = 13) -> list[np.ndarray]:
    """Rendered pages of pseudo-text: black glyphs on white."""
    rng = np.random.default_rng(seed)
    font = ImageFont.load_default(size=font_size)
    line_step = font_size + 3
    images = []
    for _ in range(n):
        canvas = Image.new("L", (shape[1], shape[0]), 255)
        draw = ImageDraw.Draw(canvas)
        y = 2
        while y < shape[0] - line_step:
            draw.text((2, y), _random_words(rng, 6), font=font, fill=0)
            y += line_step
        images.append(np.asarray(canvas, dtype=np.float64))
    return images


def make_face_images(n: int, shape=(128, 128), seed: int = 0) -> list[np.ndarray]:
    """Smooth portrait-like images: shaded background, elliptical head,
    eye and mouth features.  Only the patch statistics matter."""
    rng = np.random.default_rng(seed)
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    images = []
    for _ in range(n):
        bg = 120.0 + 60.0 * (yy / h - 0.5) * rng.uniform(-1, 1) \
             + 60.0 * (xx / w - 0.5) * rng.uniform(-1, 1)
        cy, cx = h * rng.uniform(0.4, 0.6), w * rng.uniform(0.4, 0.6)
        ry, rx = h * rng.uniform(0.28, 0.38), w * rng.uniform(0.2, 0.3)
        head = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
        img = bg + 90.0 * np.exp(-head * 1.5)
        for side in (-1.0, 1.0):
            ey, ex = cy - 0.3 * ry, cx + side * 0.4 * rx
            img -= 70.0 * np.exp(-(((yy - ey) / (0.09 * ry)) ** 2
                                   + ((xx - ex) / (0.16 * rx)) ** 2))
        my, mx = cy + 0.45 * ry, cx
        img -= 50.0 * np.exp(-(((yy - my) / (0.07 * ry)) ** 2
                               + ((xx - mx) / (0.4 * rx)) ** 2))
        images.append(np.clip(img, 0.0, 255.0))
    return images
