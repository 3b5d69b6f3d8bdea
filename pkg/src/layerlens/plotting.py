"""Static figures from result CSVs: probing bar charts and Stroop surfaces."""

from __future__ import annotations

import os
from collections import OrderedDict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from layerlens.geometry import ASPECTS, read_surfaces  # noqa: E402
from layerlens.probing.pipeline import read_results  # noqa: E402


def _save(fig, path, seed: int) -> None:
    with matplotlib.rc_context({"svg.hashsalt": f"layerlens-{seed}", "svg.fonttype": "path"}):
        fig.savefig(path, format=os.path.splitext(str(path))[1].lstrip(".") or "svg",
                    metadata={"Date": None, "Description": f"seed={seed}"})
    plt.close(fig)


def plot_probing(csv_path, out_path, seed: int = 0) -> None:
    rows = read_results(csv_path)
    splits = list(OrderedDict.fromkeys(r["split"] for r in rows))
    layers = list(OrderedDict.fromkeys(r["layer"] for r in rows))
    table = {(r["split"], r["layer"]): r for r in rows}
    n_bars = 2 * len(layers)
    width = 0.8 / n_bars
    fig, ax = plt.subplots(figsize=(max(6, 1.4 * len(splits) * len(layers)), 3.5))
    x = np.arange(len(splits))
    for li, layer in enumerate(layers):
        for kind, key, hatch in (("main", "main_acc", ""), ("control", "control_acc", "//")):
            offset = (2 * li + (kind == "control") - (n_bars - 1) / 2) * width
            vals = [float(table[(s, layer)][key]) if (s, layer) in table else np.nan for s in splits]
            bars = ax.bar(x + offset, vals, width, label=f"{layer} ({kind})", hatch=hatch,
                          color=f"C{li}", alpha=1.0 if kind == "main" else 0.45, edgecolor="black", linewidth=0.4)
            if kind == "main":
                for b, s in zip(bars, splits):
                    stars = table.get((s, layer), {}).get("stars", "")
                    if stars and stars != "none":
                        ax.annotate(stars, (b.get_x() + width, b.get_height()), ha="center", va="bottom", fontsize=8)
    ax.set_xticks(x, splits)
    ax.set_ylim(0, 1.1)
    ax.set_ylabel("accuracy")
    ax.legend(fontsize=7, ncol=max(1, len(layers)), loc="upper right")
    fig.tight_layout()
    _save(fig, out_path, seed)


def plot_surfaces(csv_path, out_path, seed: int = 0) -> None:
    rows = read_surfaces(csv_path)
    layers = list(OrderedDict.fromkeys(r["layer"] for r in rows))
    d_primes = sorted({int(r["d_prime"]) for r in rows})
    fig = plt.figure(figsize=(12, 4))
    for k, aspect in enumerate(ASPECTS):
        ax = fig.add_subplot(1, 3, k + 1, projection="3d")
        grid = {name: np.full((len(layers), len(d_primes)), np.nan) for name in ("matched", "mismatched")}
        for r in rows:
            if r["aspect"] != aspect:
                continue
            i, j = layers.index(r["layer"]), d_primes.index(int(r["d_prime"]))
            for name in grid:
                grid[name][i, j] = float(r[name])
        xx, yy = np.meshgrid(np.arange(len(d_primes)), np.arange(len(layers)))
        for name, cmap in (("matched", "Reds"), ("mismatched", "Blues")):
            ax.plot_surface(xx, yy, grid[name], cmap=cmap, alpha=0.8, linewidth=0)
        ax.set_xticks(range(len(d_primes)), [str(d) for d in d_primes], fontsize=6)
        ax.set_yticks(range(len(layers)), [str(i) for i in range(len(layers))], fontsize=6)
        ax.set_xlabel("components")
        ax.set_ylabel("layer")
        ax.set_title(aspect)
    fig.subplots_adjust(left=0.02, right=0.98, bottom=0.05, top=0.92, wspace=0.05)
    _save(fig, out_path, seed)


def plot_csv(csv_path, out_path, seed: int = 0) -> str:
    """Dispatch on the CSV header; returns the kind of plot produced."""
    with open(csv_path) as fh:
        header = fh.readline().strip().split(",")
    if "main_acc" in header:
        plot_probing(csv_path, out_path, seed)
        return "probing"
    if "matched" in header:
        plot_surfaces(csv_path, out_path, seed)
        return "surfaces"
    raise ValueError(f"{csv_path}: not a probing or surfaces results file")
