"""Inference benchmark: peak memory and timed extraction.

The timer covers forward passes plus store writes for every instance. Model
loading happens before the timer starts, and one untimed warm-up forward pass
is run first.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import psutil
import torch

from layerlens.adapters.base import ModelAdapter
from layerlens.config import ExtractionConfig
from layerlens.extraction import ExtractionError, extract_one, list_images, match_layers
from layerlens.store import ActivationRecord

TABLE_COLUMNS = ("Model", "# Params", "Precision", "Peak Mem (MB)", "Inference Time (s)", "Per-Instance Time (s)")


@dataclass
class BenchmarkReport:
    model_name: str
    n_params: int
    n_instances: int
    precision_label: str
    peak_memory_mb: float
    total_inference_s: float
    per_instance_s: float
    memory_source: str = "rss"
    seed: int = 0

    def __post_init__(self):
        if self.n_instances < 1:
            raise ValueError("n_instances must be positive")
        if min(self.peak_memory_mb, self.total_inference_s, self.per_instance_s) < 0:
            raise ValueError("benchmark measures must be non-negative")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def write_json(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.to_json() + "\n")


def format_params(n: int) -> str:
    for unit, scale in (("B", 1e9), ("M", 1e6), ("K", 1e3)):
        if n >= scale:
            value = n / scale
            return f"{value:.1f}{unit}".replace(".0", "")
    return str(n)


def format_table(reports: list[BenchmarkReport]) -> str:
    rows = [TABLE_COLUMNS] + [
        (
            r.model_name,
            format_params(r.n_params),
            r.precision_label,
            f"{r.peak_memory_mb:,.2f}",
            f"{r.total_inference_s:,.3f}",
            f"{r.per_instance_s:.4f}",
        )
        for r in reports
    ]
    widths = [max(len(row[i]) for row in rows) for i in range(len(TABLE_COLUMNS))]
    lines = []
    for k, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


class MemorySampler:
    """Peak memory over a window.

    With CUDA available this is the device's peak allocated memory; otherwise
    a background thread samples the process RSS and reports the peak above
    the RSS at :meth:`start`.
    """

    def __init__(self, interval: float = 0.005):
        self.interval = interval
        self.cuda = torch.cuda.is_available()
        self._proc = psutil.Process()
        self._stop = threading.Event()
        self._thread = None
        self.baseline = 0
        self.peak = 0

    @property
    def source(self) -> str:
        return "cuda" if self.cuda else "rss"

    def sample(self) -> None:
        if not self.cuda:
            rss = self._proc.memory_info().rss
            if rss > self.peak:
                self.peak = rss

    def _run(self):
        while not self._stop.wait(self.interval):
            self.sample()

    def start(self) -> None:
        if self.cuda:
            torch.cuda.reset_peak_memory_stats()
            self.baseline = 0
            return
        self.baseline = self.peak = self._proc.memory_info().rss
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def stop(self) -> float:
        """Peak in MB."""
        if self.cuda:
            return torch.cuda.max_memory_allocated() / 2**20
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
        self.sample()
        return max(self.peak - self.baseline, 0) / 2**20


def run_benchmark(adapter: ModelAdapter | Callable[[], ModelAdapter], cfg: ExtractionConfig,
                  store, images: list[Path] | None = None, warmup: bool = True,
                  seed: int = 0) -> BenchmarkReport:
    """Time extraction of every image into ``store``.

    ``adapter`` may be a loaded adapter or a zero-argument loader; either way
    loading completes before the timer starts.
    """
    if callable(adapter) and not isinstance(adapter, ModelAdapter):
        adapter = adapter()
    if not adapter.loaded:
        adapter.load()
    if images is None:
        images = list_images(cfg.input_dir)
    if not images:
        raise ExtractionError(f"empty dataset: {cfg.input_dir}")
    layers = list(match_layers(cfg.modules, adapter.named_layers()).values())
    payloads = [(str(p), Path(p).read_bytes()) for p in images]

    if warmup:
        path, data = payloads[0]
        adapter.forward(adapter.preprocess(data, cfg.prompt, image_path=path))

    sampler = MemorySampler()
    sampler.start()
    t0 = time.perf_counter()
    for path, data in payloads:
        inputs = adapter.preprocess(data, cfg.prompt, image_path=path)
        captures = extract_one(adapter, inputs, layers)
        for cap in captures:
            store.insert(
                ActivationRecord.from_array(
                    cap.tensor, name=adapter.name, architecture=adapter.architecture,
                    image_path=path, prompt=cfg.prompt, layer=cap.layer_name, dtype=cap.dtype,
                )
            )
        sampler.sample()
    if hasattr(store, "flush"):
        store.flush()
    total = time.perf_counter() - t0
    peak = sampler.stop()

    n = len(payloads)
    return BenchmarkReport(
        model_name=adapter.name,
        n_params=adapter.num_parameters(),
        n_instances=n,
        precision_label=adapter.dtype_name,
        peak_memory_mb=peak,
        total_inference_s=total,
        per_instance_s=total / n,
        memory_source=sampler.source,
        seed=seed,
    )
