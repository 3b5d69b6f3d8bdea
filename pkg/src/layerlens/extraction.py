"""Forward-hook extraction engine."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from layerlens.adapters.base import ModelAdapter, ModelInput
from layerlens.config import ExtractionConfig
from layerlens.store import ActivationRecord, ActivationStore

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = frozenset({".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"})


class LayerMatchError(KeyError):
    def __init__(self, missing: list[str], suggestions: dict[str, list[str]]):
        self.missing = missing
        self.suggestions = suggestions
        parts = [f"{m!r} (closest: {', '.join(suggestions[m]) or 'none'})" for m in missing]
        super().__init__(f"unknown layer name(s): {'; '.join(parts)}")

    def __str__(self):
        return self.args[0]


class ExtractionError(RuntimeError):
    def __init__(self, message: str, image_path: str | None = None):
        super().__init__(message)
        self.image_path = image_path


@dataclass
class Capture:
    layer_name: str
    firing_index: int
    tensor: np.ndarray
    dtype: str

    @property
    def dims(self) -> list[int]:
        return list(self.tensor.shape)


@dataclass
class CaptureSet:
    captures: list[Capture] = field(default_factory=list)

    def __len__(self):
        return len(self.captures)

    def __iter__(self):
        return iter(self.captures)

    def get(self, layer_name: str, firing_index: int = 0) -> Capture:
        for c in self.captures:
            if c.layer_name == layer_name and c.firing_index == firing_index:
                return c
        raise KeyError((layer_name, firing_index))

    def for_layer(self, layer_name: str) -> list[Capture]:
        return [c for c in self.captures if c.layer_name == layer_name]


def edit_distance(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def match_layers(requested: list[str], available: list[str]) -> dict[str, str]:
    """Map each requested layer name to the identical available name.

    Raises:
        LayerMatchError: listing every missing name with the five nearest
            available names by edit distance.
    """
    if not requested or not available:
        raise ValueError("both requested and available layer lists must be non-empty")
    pool = set(available)
    missing = [r for r in requested if r not in pool]
    if missing:
        suggestions = {
            m: sorted(available, key=lambda a: (edit_distance(m, a), available.index(a)))[:5]
            for m in missing
        }
        raise LayerMatchError(missing, suggestions)
    return {r: r for r in requested}


def _first_tensor(output):
    if isinstance(output, torch.Tensor):
        return output
    if isinstance(output, (tuple, list)):
        for item in output:
            found = _first_tensor(item)
            if found is not None:
                return found
        return None
    for attr in ("last_hidden_state", "logits"):
        value = getattr(output, attr, None)
        if isinstance(value, torch.Tensor):
            return value
    return None


def extract_one(adapter: ModelAdapter, inputs: ModelInput, layer_names: list[str]) -> CaptureSet:
    """Run one forward pass and capture every firing of every requested layer.

    Hooks are removed before returning, also when the forward pass raises.
    """
    captures = CaptureSet()
    counts: dict[str, int] = {}
    handles = []

    def make_hook(name):
        def hook(module, args, output):
            tensor = _first_tensor(output)
            if tensor is None:
                raise ExtractionError(f"layer {name!r} produced no tensor output")
            t = tensor.detach()
            arr = t.to(device="cpu", dtype=torch.float32).numpy().copy()
            idx = counts.get(name, 0)
            counts[name] = idx + 1
            captures.captures.append(Capture(name, idx, arr, str(t.dtype).removeprefix("torch.")))

        return hook

    try:
        for name in layer_names:
            handles.append(adapter.get_layer(name).register_forward_hook(make_hook(name)))
        adapter.forward(inputs)
    finally:
        for h in handles:
            h.remove()
    return captures


def list_images(input_dir: str | os.PathLike) -> list[Path]:
    """Image files under ``input_dir`` (recursive), sorted by relative path."""
    root = Path(input_dir)
    if not root.is_dir():
        raise ExtractionError(f"input directory not found: {root}")
    files = [p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES]
    return sorted(files, key=lambda p: p.relative_to(root).as_posix())


def load_labels(cfg: ExtractionConfig) -> dict[str, str]:
    """Optional ``labels`` extra: CSV with image_path,label columns.

    A relative CSV path is taken relative to ``input_dir``; image paths in the
    CSV may be full paths or bare file names.
    """
    path = cfg.extras.get("labels")
    if not path:
        return {}
    import csv

    if not os.path.isabs(path):
        path = os.path.join(cfg.input_dir, path)
    with open(path, newline="") as fh:
        return {row["image_path"]: row["label"] for row in csv.DictReader(fh)}


def run_extraction(cfg: ExtractionConfig, adapter: ModelAdapter, store: ActivationStore,
                   images: list[Path] | None = None) -> int:
    """Extract every requested layer for every image and write the records.

    Returns the number of records inserted.
    """
    if not adapter.loaded:
        adapter.load()
    mapping = match_layers(cfg.modules, adapter.named_layers())
    if images is None:
        images = list_images(cfg.input_dir)
    if not images:
        raise ExtractionError(f"empty input directory: {cfg.input_dir}")
    allow_nonfinite = bool(cfg.extras.get("allow_nonfinite", False))
    labels = load_labels(cfg)
    layers = [mapping[m] for m in cfg.modules]

    written = 0
    for path in images:
        image_path = str(path)
        try:
            inputs = adapter.preprocess(Path(path).read_bytes(), cfg.prompt, image_path=image_path)
            captures = extract_one(adapter, inputs, layers)
            label = labels.get(image_path, labels.get(Path(path).name))
            for cap in captures:
                store.insert(
                    ActivationRecord.from_array(
                        cap.tensor,
                        name=adapter.name,
                        architecture=adapter.architecture,
                        image_path=image_path,
                        prompt=cfg.prompt,
                        label=label,
                        layer=cap.layer_name,
                        dtype=cap.dtype,
                        allow_nonfinite=allow_nonfinite,
                    )
                )
                written += 1
        except Exception as exc:
            raise ExtractionError(f"extraction failed for {image_path}: {exc}", image_path) from exc
        log.debug("extracted %s (%d captures)", image_path, len(captures))
    store.flush()
    return written
