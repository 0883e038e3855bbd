"""Procedural shape dataset used as a small stand-in for natural-image benchmarks.

Each class is a geometric figure (filled or outlined) drawn with random
position, size, rotation and colours over a textured background.  Outline
classes differ from their filled twins only in thin detail, which is what
the degradations destroy first.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .data import write_classes_json
from .degradations import to_uint8

CLASS_NAMES = (
    "circle",
    "ring",
    "square",
    "square_outline",
    "triangle",
    "triangle_outline",
    "plus",
    "two_dots",
    "half_disc",
    "bars",
)

SUPERSAMPLE = 4


def _rotate(x, y, theta):
    c, s = np.cos(theta), np.sin(theta)
    return c * x + s * y, -s * x + c * y


def _triangle_sdf(x, y, r):
    # Signed distance to an equilateral triangle with circumradius r.
    k = np.sqrt(3.0)
    side = r * k
    x = np.abs(x) - side / 2.0
    y = y + r / 2.0
    flip = x + k * y > 0
    x2 = np.where(flip, (x - k * y) / 2.0, x)
    y2 = np.where(flip, (-k * x - y) / 2.0, y)
    x2 = x2 - np.clip(x2, -side, 0.0)
    return -np.hypot(x2, y2) * np.sign(y2)


def shape_mask(name, x, y, radius, thickness):
    """Boolean coverage of shape ``name`` on centred, rotated coordinates."""
    if name == "circle":
        return np.hypot(x, y) <= radius
    if name == "ring":
        d = np.hypot(x, y)
        return (d <= radius) & (d >= radius - thickness)
    if name == "square":
        return np.maximum(np.abs(x), np.abs(y)) <= radius * 0.85
    if name == "square_outline":
        m = np.maximum(np.abs(x), np.abs(y))
        return (m <= radius * 0.85) & (m >= radius * 0.85 - thickness)
    if name == "triangle":
        return _triangle_sdf(x, y, radius) <= 0
    if name == "triangle_outline":
        d = _triangle_sdf(x, y, radius)
        return (d <= 0) & (d >= -thickness)
    if name == "plus":
        w = thickness * 0.6 + radius * 0.12
        return ((np.abs(x) <= w) & (np.abs(y) <= radius)) | ((np.abs(y) <= w) & (np.abs(x) <= radius))
    if name == "two_dots":
        r = radius * 0.38
        return (np.hypot(np.abs(x) - radius * 0.55, y) <= r)
    if name == "half_disc":
        return (np.hypot(x, y + radius * 0.4) <= radius) & (y >= -radius * 0.4)
    if name == "bars":
        w = thickness * 0.5 + 0.5
        gap = radius * 0.45
        return (np.abs(y) <= radius) & (np.abs(np.abs(x) - gap) <= w)
    raise KeyError(name)


def _smooth_noise(rng, size, cells):
    coarse = rng.standard_normal((cells, cells))
    img = Image.fromarray(coarse.astype(np.float32), mode="F").resize((size, size), Image.BICUBIC)
    return np.asarray(img, dtype=np.float64)


def render(name, rng, size=32):
    """Render one ``size x size x 3`` float image of class ``name``."""
    ss = SUPERSAMPLE
    coords = (np.arange(size * ss) + 0.5) / ss
    gx, gy = np.meshgrid(coords, coords)
    radius = rng.uniform(0.22, 0.38) * size
    margin = radius + 1.0
    cx = rng.uniform(margin, size - margin)
    cy = rng.uniform(margin, size - margin)
    theta = rng.uniform(0, 2 * np.pi)
    thickness = rng.uniform(1.3, 2.2)
    x, y = _rotate(gx - cx, gy - cy, theta)
    mask = shape_mask(name, x, y, radius, thickness).astype(np.float64)
    alpha = mask.reshape(size, ss, size, ss).mean(axis=(1, 3))[:, :, None]

    bg = rng.uniform(0.15, 0.85, size=3)
    while True:
        fg = rng.uniform(0.0, 1.0, size=3)
        if np.abs(fg - bg).mean() > 0.3:
            break
    tex = np.stack([_smooth_noise(rng, size, 6) for _ in range(3)], axis=-1)
    background = bg + 0.06 * tex + rng.normal(0.0, 0.02, size=(size, size, 3))
    shade = 1.0 + 0.1 * _smooth_noise(rng, size, 3)[:, :, None]
    img = background * (1 - alpha) + np.clip(fg * shade, 0, 1) * alpha
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def generate(root, num_classes=10, train_per_class=300, val_per_class=60, size=32, seed=0,
             class_names=None):
    """Write ``<root>/<split>/<class>/<index>.png`` and ``<root>/classes.json``."""
    root = Path(root)
    names = list(class_names or CLASS_NAMES[:num_classes])
    if len(names) < num_classes:
        raise ValueError(f"only {len(names)} shape classes are available")
    for split, per_class, split_id in (("train", train_per_class, 0), ("val", val_per_class, 1)):
        for c, name in enumerate(names):
            out = root / split / name
            out.mkdir(parents=True, exist_ok=True)
            rng = np.random.default_rng([seed, split_id, c])
            for i in range(per_class):
                img = render(name, rng, size)
                Image.fromarray(to_uint8(img), mode="RGB").save(out / f"{i:05d}.png")
    write_classes_json(names, root / "classes.json")
    return root
