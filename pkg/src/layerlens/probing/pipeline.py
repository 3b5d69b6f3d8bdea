"""Probing over an activation store: one result per (split, layer)."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass

import numpy as np

from layerlens.probing.probe import ProbeDataset, ProbeResult, mean_pool, probe_dataset
from layerlens.store import ActivationStore

log = logging.getLogger(__name__)

RESULT_COLUMNS = (
    "split", "layer", "main_acc", "control_acc", "n_test", "z", "stars",
    "best_lr", "best_epochs", "best_batch", "seed",
)


class ProbingDataError(ValueError):
    pass


@dataclass(frozen=True)
class LabelRow:
    image_path: str
    prompt: str
    split: str
    label: str


def read_labels(path: str | os.PathLike) -> list[LabelRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"image_path", "prompt", "split", "label"}
        if not need <= set(reader.fieldnames or ()):
            raise ProbingDataError(f"labels file needs columns {sorted(need)}, has {reader.fieldnames}")
        return [LabelRow(r["image_path"], r["prompt"], r["split"], r["label"]) for r in reader]


def labels_from_store(store: ActivationStore, split: str = "all", **filters) -> list[LabelRow]:
    seen, rows = set(), []
    for rec in store.query(**filters):
        key = (rec.image_path, rec.prompt)
        if rec.label is not None and key not in seen:
            seen.add(key)
            rows.append(LabelRow(rec.image_path, rec.prompt, split, rec.label))
    return rows


def _class_key(label: str):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def build_dataset(store: ActivationStore, rows: list[LabelRow], layer: str, split: str,
                  name: str | None = None) -> ProbeDataset:
    filters = {"layer": layer}
    if name is not None:
        filters["name"] = name
    pooled = {}
    for rec in store.query(**filters):
        if rec.firing_index == 0:
            pooled.setdefault((rec.image_path, rec.prompt), rec)
    missing = [(r.image_path, r.prompt) for r in rows if (r.image_path, r.prompt) not in pooled]
    if missing:
        shown = "; ".join(f"{p} / {q!r}" for p, q in missing[:10])
        raise ProbingDataError(
            f"split {split!r}, layer {layer!r}: {len(missing)} labelled example(s) have no "
            f"activation record: {shown}{' ...' if len(missing) > 10 else ''}"
        )
    classes = sorted({r.label for r in rows}, key=_class_key)
    if len(classes) < 2:
        raise ProbingDataError(f"split {split!r} has fewer than 2 distinct labels")
    index = {c: i for i, c in enumerate(classes)}
    features = np.stack([mean_pool(pooled[(r.image_path, r.prompt)].array()) for r in rows])
    labels = np.array([index[r.label] for r in rows])
    return ProbeDataset(features, labels, len(classes), split)


def run_probing(store: ActivationStore, labels: list[LabelRow], layers: list[str], *,
                name: str | None = None, splits: list[str] | None = None, grid: dict | None = None,
                k: int = 5, seed: int = 0, hidden_size: int = 512) -> list[ProbeResult]:
    """Probe every (split, layer) combination independently."""
    if not labels:
        raise ProbingDataError("no labelled examples")
    available = set(store.distinct("layer"))
    absent = [l for l in layers if l not in available]
    if absent:
        raise ProbingDataError(f"layer(s) not in store: {absent}")
    by_split: dict[str, list[LabelRow]] = {}
    for row in labels:
        by_split.setdefault(row.split, []).append(row)
    if splits is not None:
        unknown = [s for s in splits if s not in by_split]
        if unknown:
            raise ProbingDataError(f"split(s) without labels: {unknown}")
        by_split = {s: by_split[s] for s in splits}

    results = []
    for split, rows in by_split.items():
        for layer in layers:
            ds = build_dataset(store, rows, layer, split, name)
            res = probe_dataset(ds, layer, grid=grid, k=k, seed=seed, hidden_size=hidden_size)
            log.info("%s @ %s: main=%.3f control=%.3f z=%.2f %s", split, layer,
                     res.main_accuracy, res.control_accuracy, res.z_score, res.stars)
            results.append(res)
    return results


def write_results(results: list[ProbeResult], path: str | os.PathLike, seed: int = 0) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in results:
            h = r.best_hyperparams
            w.writerow([
                r.split, r.layer, f"{r.main_accuracy:.6f}", f"{r.control_accuracy:.6f}", r.n_test,
                f"{r.z_score:.6f}", r.stars, h.learning_rate, h.num_epochs, h.batch_size, seed,
            ])


def read_results(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
