"""Synthetic data at desk scale.

Image generators write PNG files plus the CSV side files the analyses read;
array generators produce features/embeddings with a known planted signal.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from layerlens.geometry import ASPECTS, PrototypeSet, StroopItem
from layerlens.probing.probe import ProbeDataset

COLORS = {
    "red": (220, 40, 40),
    "green": (40, 170, 60),
    "blue": (40, 70, 220),
    "yellow": (235, 215, 40),
    "purple": (140, 50, 170),
    "cyan": (40, 200, 210),
    "brown": (130, 80, 30),
    "gray": (128, 128, 128),
}
SHAPES = ("cube", "sphere", "cylinder")
SIZES = ("small", "large")
MATERIALS = ("rubber", "metal")

# class counts per split for the synthetic probing benchmark
SPLIT_CLASSES = {"boolean": 2, "color": 8, "material": 2, "number": 5, "shape": 3, "size": 2}

DEFAULT_PROMPT = "Describe the color in this image in one word."


# -- feature-level generators -------------------------------------------------

def onehot_split(num_classes: int, n: int = 1000, noise: float = 0.1, seed: int = 0,
                 name: str = "custom") -> ProbeDataset:
    """Features = one-hot(label) + N(0, noise^2)."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, num_classes, n)
    feats = np.eye(num_classes)[labels] + noise * rng.standard_normal((n, num_classes))
    return ProbeDataset(feats, labels, num_classes, name)


def noise_split(num_classes: int, n: int = 1000, dim: int | None = None, seed: int = 0,
                name: str = "null") -> ProbeDataset:
    """Label-independent Gaussian features."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, num_classes, n)
    feats = rng.standard_normal((n, dim or num_classes))
    return ProbeDataset(feats, labels, num_classes, name)


def linear_code_split(num_classes: int = 4, n: int = 1000, dim: int = 64, seed: int = 0) -> ProbeDataset:
    """Noiseless labels encoded by a random linear map of class one-hots."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, num_classes, n)
    code = rng.standard_normal((num_classes, dim))
    return ProbeDataset(code[labels], labels, num_classes, "linear")


def concept_embeddings(n_concepts: int = 8, per_concept: int = 10, dim: int | None = None,
                       n_items: int = 50, planted: str | None = "background", signal: float = 1.0,
                       proto_noise: float = 0.05, item_noise: float = 0.05, layers=("layer",),
                       seed: int = 0):
    """Orthogonal-axis concepts and Stroop items with one planted aspect.

    Concept ``k`` lives on basis axis ``k``. Each item embedding is
    ``signal * e_planted + item_noise * N(0, I)``; with ``planted=None`` the
    item embeddings are pure noise of unit scale.

    Returns ``(prototypes_by_layer, items)``.
    """
    if planted is not None and planted not in ASPECTS:
        raise ValueError(f"planted must be one of {ASPECTS} or None")
    rng = np.random.default_rng(seed)
    dim = dim or 2 * n_concepts
    names = [f"c{k}" for k in range(n_concepts)]
    axes = np.eye(dim)[:n_concepts]
    prototypes = {}
    for layer in layers:
        prototypes[layer] = PrototypeSet({
            c: axes[k] + proto_noise * rng.standard_normal((per_concept, dim)) for k, c in enumerate(names)
        })
    items = []
    for i in range(n_items):
        trio = rng.choice(n_concepts, size=3, replace=False)
        cues = dict(zip(ASPECTS, (names[t] for t in trio)))
        emb = {}
        for layer in layers:
            if planted is None:
                emb[layer] = rng.standard_normal(dim)
            else:
                k = names.index(cues[planted])
                emb[layer] = signal * axes[k] + item_noise * rng.standard_normal(dim)
        items.append(StroopItem(f"item{i:04d}.png", cues["lexical"], cues["font"], cues["background"], emb))
    return prototypes, items


# -- image generators ---------------------------------------------------------

def _png(img: Image.Image, path: Path) -> None:
    img.save(path, format="PNG", optimize=False)


def random_images(out_dir: str | os.PathLike, n: int, size: int = 8, seed: int = 0) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(n):
        p = out / f"img_{i:04d}.png"
        _png(Image.fromarray(rng.integers(0, 256, (size, size, 3), dtype=np.uint8)), p)
        paths.append(p)
    return paths


def _draw_object(draw, shape, color, size, material, cx, cy):
    r = 9 if size == "large" else 5
    box = (cx - r, cy - r, cx + r, cy + r)
    fill = COLORS[color]
    if shape == "cube":
        draw.rectangle(box, fill=fill)
    elif shape == "sphere":
        draw.ellipse(box, fill=fill)
    else:
        draw.rectangle((cx - r, cy - r // 2, cx + r, cy + r // 2), fill=fill)
        draw.ellipse((cx - r, cy - r, cx + r, cy - r // 2 + 2), fill=fill)
    if material == "metal":
        draw.ellipse((cx - r // 2, cy - r // 2, cx, cy), fill=(250, 250, 250))


def shapes_dataset(out_dir: str | os.PathLike, n: int = 60, seed: int = 0,
                   prompt: str = DEFAULT_PROMPT, canvas: int = 64) -> Path:
    """Scenes of 1-5 simple objects with a six-split labels CSV.

    Labels describe the first object (colour, shape, size, material), the
    object count, and whether any two objects share a colour (boolean).
    Returns the path of ``labels.csv`` (image_path,prompt,split,label).
    """
    out = Path(out_dir)
    img_dir = out / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    colors = list(COLORS)
    rows = []
    for i in range(n):
        img = Image.new("RGB", (canvas, canvas), (200, 200, 200))
        draw = ImageDraw.Draw(img)
        count = int(rng.integers(1, 6))
        objs = []
        for j in range(count):
            obj = (
                SHAPES[rng.integers(len(SHAPES))],
                colors[rng.integers(len(colors))],
                SIZES[rng.integers(len(SIZES))],
                MATERIALS[rng.integers(len(MATERIALS))],
            )
            cx = 10 + (j % 3) * 22 + int(rng.integers(-2, 3))
            cy = 16 + (j // 3) * 30 + int(rng.integers(-2, 3))
            _draw_object(draw, *obj, cx, cy)
            objs.append(obj)
        path = img_dir / f"scene_{i:04d}.png"
        _png(img, path)
        shape, color, size, material = objs[0]
        shared_color = len({o[1] for o in objs}) < len(objs)
        labels = {
            "boolean": "yes" if shared_color else "no",
            "color": color,
            "material": material,
            "number": str(count),
            "shape": shape,
            "size": size,
        }
        for split, label in labels.items():
            rows.append((str(path), prompt, split, label))
    labels_path = out / "labels.csv"
    with open(labels_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("image_path", "prompt", "split", "label"))
        w.writerows(rows)
    return labels_path


def _font(size: int):
    try:
        return ImageFont.load_default(size=size)
    except TypeError:  # Pillow < 10.1
        return ImageFont.load_default()


def stroop_images(out_dir: str | os.PathLike, n: int = 24, seed: int = 0, canvas: int = 64,
                  colors: list[str] | None = None) -> Path:
    """Colour words drawn in an incongruent font colour on a third background colour.

    Returns the path of ``items.csv`` (image_path,lexical,font,background).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    colors = colors or list(COLORS)
    font = _font(canvas // 4)
    rows = []
    for i in range(n):
        lex, fg, bg = (colors[k] for k in rng.choice(len(colors), size=3, replace=False))
        img = Image.new("RGB", (canvas, canvas), COLORS[bg])
        draw = ImageDraw.Draw(img)
        draw.text((canvas // 2, canvas // 2), lex.upper(), fill=COLORS[fg], font=font, anchor="mm")
        path = out / f"stroop_{i:04d}.png"
        _png(img, path)
        rows.append((str(path), lex, fg, bg))
    items = out / "items.csv"
    with open(items, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("image_path", "lexical", "font", "background"))
        w.writerows(rows)
    return items


def color_prototypes(out_dir: str | os.PathLike, per_concept: int = 10, seed: int = 0,
                     canvas: int = 32, colors: list[str] | None = None) -> Path:
    """``out_dir/<colour>/NN.png`` swatches with mild per-image jitter and texture."""
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    for name in colors or list(COLORS):
        d = out / name
        d.mkdir(parents=True, exist_ok=True)
        base = np.array(COLORS[name], dtype=np.float64)
        for k in range(per_concept):
            jitter = base + rng.normal(0, 12, 3)
            pix = jitter + rng.normal(0, 6, (canvas, canvas, 3))
            _png(Image.fromarray(np.clip(pix, 0, 255).astype(np.uint8)), d / f"{k:02d}.png")
    return out
