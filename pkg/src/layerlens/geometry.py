"""PCA concept geometry: prototypes, projection, matched vs. mismatched cosine.

PCA is fit on the prototype embeddings of one layer; Stroop item embeddings
are projected with that fit and compared to the projected prototypes.
"""

from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from layerlens.probing.kernels import mean_cosine
from layerlens.probing.probe import mean_pool

ASPECTS = ("lexical", "font", "background")
SURFACE_COLUMNS = ("aspect", "layer", "d_prime", "matched", "mismatched", "seed")


class GeometryError(ValueError):
    pass


@dataclass
class PrototypeSet:
    vectors: dict[str, np.ndarray]

    def __post_init__(self):
        if not self.vectors:
            raise GeometryError("prototype set is empty")
        dims = set()
        for concept, v in list(self.vectors.items()):
            arr = np.atleast_2d(np.asarray(v, dtype=np.float64))
            if arr.shape[0] == 0:
                raise GeometryError(f"concept {concept!r} has no prototype vectors")
            dims.add(arr.shape[1])
            self.vectors[concept] = arr
        if len(dims) != 1:
            raise GeometryError(f"prototype vectors have mixed dimensionality {sorted(dims)}")

    @property
    def concepts(self) -> list[str]:
        return list(self.vectors)

    @property
    def dim(self) -> int:
        return next(iter(self.vectors.values())).shape[1]

    def matrix(self) -> np.ndarray:
        return np.concatenate(list(self.vectors.values()), axis=0)


@dataclass
class PCAModel:
    mean: np.ndarray
    components: np.ndarray  # (d, k), column j is the j-th principal axis
    spectrum: np.ndarray  # singular values of the centered matrix, non-increasing
    n_samples: int

    @property
    def n_components(self) -> int:
        return self.components.shape[1]

    @property
    def rank(self) -> int:
        tol = self.spectrum[0] * max(self.components.shape) * np.finfo(float).eps if len(self.spectrum) else 0
        return int(np.sum(self.spectrum > tol))

    @property
    def explained_variance(self) -> np.ndarray:
        return self.spectrum**2 / (self.n_samples - 1)


@dataclass
class StroopItem:
    image_path: str
    lexical: str
    font: str
    background: str
    embeddings: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if len({self.lexical, self.font, self.background}) != 3:
            raise GeometryError(
                f"{self.image_path}: lexical/font/background colours must be pairwise distinct"
            )

    def concept(self, aspect: str) -> str:
        return getattr(self, aspect)


@dataclass
class StroopSurfaces:
    layers: list[str]
    d_primes: list[int]
    matched: dict[str, np.ndarray]  # aspect -> (len(layers), len(d_primes))
    mismatched: dict[str, np.ndarray]

    def gap(self, aspect: str) -> np.ndarray:
        return self.matched[aspect] - self.mismatched[aspect]


def fit_pca(embeddings) -> PCAModel:
    """Centre the rows and take the SVD.

    Component signs are fixed so each column's largest-magnitude entry is
    positive, which makes fits reproducible across LAPACK builds.
    """
    e = np.asarray(embeddings, dtype=np.float64)
    if e.ndim != 2 or e.shape[1] < 1:
        raise GeometryError(f"embeddings must be an (n, d) matrix, got shape {e.shape}")
    if e.shape[0] < 2:
        raise GeometryError("PCA needs at least 2 embeddings")
    mean = e.mean(axis=0)
    centered = e - mean
    if not np.any(centered):
        raise GeometryError("all embeddings are identical; PCA is undefined")
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    w = vt.T
    pivot = np.argmax(np.abs(w), axis=0)
    signs = np.sign(w[pivot, np.arange(w.shape[1])])
    signs[signs == 0] = 1.0
    return PCAModel(mean, w * signs, s, e.shape[0])


def project(x, model: PCAModel, d_prime: int) -> np.ndarray:
    """(x - mean) @ W[:, :d_prime]; ``x`` may be one vector or a stack of rows."""
    if not 1 <= d_prime <= model.n_components:
        raise GeometryError(f"d' must be in 1..{model.n_components}, got {d_prime}")
    return (np.asarray(x, dtype=np.float64) - model.mean) @ model.components[:, :d_prime]


def avg_cosine(x, prototypes) -> float:
    """Mean cosine similarity between ``x`` and every prototype vector."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    protos = np.atleast_2d(np.asarray(prototypes, dtype=np.float64))
    if protos.shape[0] == 0:
        raise GeometryError("no prototypes given")
    if not np.any(x) or not np.all(np.any(protos, axis=1)):
        raise GeometryError("cosine similarity is undefined for a zero vector")
    return float(mean_cosine(x, protos)[0])


def default_d_sweep(rank: int) -> list[int]:
    out, d = [], 1
    while d < rank:
        out.append(d)
        d *= 2
    out.append(rank)
    return out


def stroop_surfaces(items: list[StroopItem], prototypes: dict[str, PrototypeSet],
                    layers: list[str] | None = None, d_sweep: list[int] | None = None) -> StroopSurfaces:
    """Matched and mismatched similarity for every aspect, layer and d'.

    Matched averages, over items, the similarity to the prototypes of the
    item's own colour for that aspect; mismatched averages, over items, the
    mean similarity to each of the other concepts.
    """
    if not items:
        raise GeometryError("no Stroop items")
    layers = list(layers) if layers is not None else list(prototypes)
    models = {}
    for layer in layers:
        if layer not in prototypes:
            raise GeometryError(f"no prototypes for layer {layer!r}")
        protos = prototypes[layer]
        used = {it.concept(a) for it in items for a in ASPECTS}
        absent = sorted(used - set(protos.concepts))
        if absent:
            raise GeometryError(f"concept(s) {absent} appear in items but have no prototypes")
        models[layer] = fit_pca(protos.matrix())
    if d_sweep is None:
        d_sweep = default_d_sweep(min(m.rank for m in models.values()))
    d_sweep = [int(d) for d in d_sweep]

    matched = {a: np.zeros((len(layers), len(d_sweep))) for a in ASPECTS}
    mismatched = {a: np.zeros((len(layers), len(d_sweep))) for a in ASPECTS}
    for li, layer in enumerate(layers):
        protos, model = prototypes[layer], models[layer]
        concepts = protos.concepts
        try:
            x = np.stack([np.asarray(it.embeddings[layer], dtype=np.float64) for it in items])
        except KeyError as exc:
            raise GeometryError(f"item without an embedding for layer {exc}") from None
        for di, d in enumerate(d_sweep):
            xp = project(x, model, d)
            if not np.all(np.any(xp, axis=1)):
                raise GeometryError(f"an item projects to the zero vector at layer {layer!r}, d'={d}")
            # sim[i, c] = mean cosine of item i with concept c's prototypes
            sim = np.empty((len(items), len(concepts)))
            for ci, concept in enumerate(concepts):
                pp = project(protos.vectors[concept], model, d)
                if not np.all(np.any(pp, axis=1)):
                    raise GeometryError(f"a {concept!r} prototype projects to zero at d'={d}")
                sim[:, ci] = mean_cosine(xp, pp)
            col = {c: i for i, c in enumerate(concepts)}
            for aspect in ASPECTS:
                own = np.array([col[it.concept(aspect)] for it in items])
                rows = np.arange(len(items))
                m = sim[rows, own]
                other = (sim.sum(axis=1) - m) / (len(concepts) - 1)
                matched[aspect][li, di] = m.mean()
                mismatched[aspect][li, di] = other.mean()
    return StroopSurfaces(layers, d_sweep, matched, mismatched)


def write_surfaces(surfaces: StroopSurfaces, path: str | os.PathLike, seed: int = 0) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SURFACE_COLUMNS)
        for aspect in ASPECTS:
            for li, layer in enumerate(surfaces.layers):
                for di, d in enumerate(surfaces.d_primes):
                    w.writerow([aspect, layer, d, f"{surfaces.matched[aspect][li, di]:.8f}",
                                f"{surfaces.mismatched[aspect][li, di]:.8f}", seed])


def read_surfaces(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- ingestion from disk / activation store ---------------------------------

def discover_prototypes(root: str | os.PathLike) -> dict[str, list[Path]]:
    """``root/<concept>/*.png`` -> concept -> image paths, exact-duplicate bytes dropped."""
    root = Path(root)
    if not root.is_dir():
        raise GeometryError(f"prototype directory not found: {root}")
    out: dict[str, list[Path]] = {}
    for concept_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        seen, paths = set(), []
        for img in sorted(concept_dir.iterdir()):
            if img.suffix.lower() not in (".png", ".jpg", ".jpeg"):
                continue
            digest = hashlib.sha256(img.read_bytes()).hexdigest()
            if digest not in seen:
                seen.add(digest)
                paths.append(img)
        if paths:
            out[concept_dir.name] = paths
    if not out:
        raise GeometryError(f"no prototype images under {root}")
    return out


def _pooled_by_path(store, layer: str) -> dict[str, np.ndarray]:
    pooled = {}
    for rec in store.query(layer=layer):
        if rec.firing_index == 0 and rec.image_path not in pooled:
            pooled[rec.image_path] = mean_pool(rec.array())
    return pooled


def _lookup(pooled: dict[str, np.ndarray], path) -> np.ndarray:
    key = str(path)
    if key in pooled:
        return pooled[key]
    resolved = os.path.realpath(key)
    for p, v in pooled.items():
        if os.path.realpath(p) == resolved:
            return v
    raise GeometryError(f"no activation record for {key}")


def prototypes_from_store(store, layer: str, images: dict[str, list[Path]]) -> PrototypeSet:
    pooled = _pooled_by_path(store, layer)
    return PrototypeSet({c: np.stack([_lookup(pooled, p) for p in paths]) for c, paths in images.items()})


def read_items(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    need = {"image_path", "lexical", "font", "background"}
    if rows and not need <= set(rows[0]):
        raise GeometryError(f"items file needs columns {sorted(need)}")
    return rows


def items_from_store(store, rows: list[dict], layers: list[str]) -> list[StroopItem]:
    pooled = {layer: _pooled_by_path(store, layer) for layer in layers}
    return [
        StroopItem(
            r["image_path"], r["lexical"], r["font"], r["background"],
            {layer: _lookup(pooled[layer], r["image_path"]) for layer in layers},
        )
        for r in rows
    ]
