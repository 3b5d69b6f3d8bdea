from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError
from torch import nn

DTYPES = {
    "auto": torch.float32,
    "float32": torch.float32,
    "float64": torch.float64,
    "float16": torch.float16,
    "bfloat16": torch.bfloat16,
}


class AdapterError(RuntimeError):
    pass


class ModelNotLoadedError(AdapterError):
    pass


class PreprocessError(ValueError):
    pass


@dataclass
class ModelInput:
    """Preprocessed input for one (image, prompt) pair.

    ``tensors`` is opaque to the extraction engine and handed to the adapter's
    forward pass as keyword arguments.
    """

    image_path: str
    prompt: str
    tensors: dict[str, torch.Tensor] = field(default_factory=dict)

    def __post_init__(self):
        if not self.image_path or not self.prompt:
            raise PreprocessError("ModelInput provenance strings must be non-empty")

    def equals(self, other: ModelInput) -> bool:
        if (self.image_path, self.prompt) != (other.image_path, other.prompt):
            return False
        if self.tensors.keys() != other.tensors.keys():
            return False
        return all(
            self.tensors[k].dtype == other.tensors[k].dtype
            and self.tensors[k].shape == other.tensors[k].shape
            and bool(torch.equal(self.tensors[k], other.tensors[k]))
            for k in self.tensors
        )


def decode_image(data: bytes, size: int | None = None) -> np.ndarray:
    """Decode raster bytes to an RGB float32 array in [0, 1], shape (H, W, 3)."""
    if not data:
        raise PreprocessError("cannot decode an empty image")
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise PreprocessError(f"cannot decode image: {exc}") from None
    img = img.convert("RGB")
    if size is not None and img.size != (size, size):
        img = img.resize((size, size), Image.Resampling.BILINEAR)
    return np.asarray(img, dtype=np.float32) / np.float32(255.0)


def _is_container(module: nn.Module) -> bool:
    # ModuleList / ModuleDict are never called, so hooks on them never fire.
    return isinstance(module, (nn.ModuleList, nn.ModuleDict))


class ModelAdapter:
    """Base class for everything the extraction engine can drive.

    Subclasses set ``architecture``, implement :meth:`_build` and
    :meth:`preprocess`, and may override :meth:`forward` when the wrapped model
    needs a custom call. Hooks are registered on ``self.model``'s named
    submodules.
    """

    architecture: str = ""
    allowed_options: frozenset[str] = frozenset({"torch_dtype"})

    def __init__(self, model_path: str, options: list[tuple[str, Any]] | dict | None = None):
        self.name = model_path
        opts = dict(options or {})
        unknown = sorted(set(opts) - set(self.allowed_options))
        if unknown:
            raise AdapterError(
                f"{self.architecture}: unknown model option(s) {unknown}; "
                f"allowed: {sorted(self.allowed_options)}"
            )
        self.options = opts
        dtype_name = str(opts.get("torch_dtype", "auto"))
        if dtype_name not in DTYPES:
            raise AdapterError(f"torch_dtype must be one of {sorted(DTYPES)}, got {dtype_name!r}")
        self.dtype_name = "float32" if dtype_name == "auto" else dtype_name
        self.dtype = DTYPES[dtype_name]
        self.model: nn.Module | None = None

    # -- lifecycle -------------------------------------------------------
    def load(self) -> ModelAdapter:
        if self.model is None:
            model = self._build()
            model.eval()
            for p in model.parameters():
                p.requires_grad_(False)
            self.model = model
        return self

    def _build(self) -> nn.Module:
        raise NotImplementedError

    @property
    def loaded(self) -> bool:
        return self.model is not None

    def _require_model(self) -> nn.Module:
        if self.model is None:
            raise ModelNotLoadedError(f"{self.architecture} model {self.name!r} is not loaded")
        return self.model

    # -- layers ----------------------------------------------------------
    def named_layers(self) -> list[str]:
        model = self._require_model()
        return [n for n, m in model.named_modules() if n and not _is_container(m)]

    def get_layer(self, name: str) -> nn.Module:
        return self._require_model().get_submodule(name)

    @property
    def layer_count(self) -> int:
        raise NotImplementedError

    def probe_layer_name(self, index: int) -> str:
        """Layer name for 1-based stacked-layer ``index`` used by probing."""
        raise NotImplementedError

    def hook_count(self) -> int:
        model = self._require_model()
        return sum(
            len(m._forward_hooks) + len(m._forward_pre_hooks) for m in model.modules()
        )

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self._require_model().parameters())

    # -- inference -------------------------------------------------------
    def preprocess(self, image: bytes, prompt: str, image_path: str = "<memory>") -> ModelInput:
        raise NotImplementedError

    def forward(self, inputs: ModelInput) -> torch.Tensor:
        model = self._require_model()
        with torch.inference_mode():
            return model(**inputs.tensors)


def list_named_layers(adapter: ModelAdapter) -> list[str]:
    return adapter.named_layers()


def preprocess(adapter: ModelAdapter, image: bytes, prompt: str, image_path: str = "<memory>") -> ModelInput:
    return adapter.preprocess(image, prompt, image_path=image_path)


def select_probe_layers(num_layers: int) -> set[int]:
    """1-based indices of the middle (ceil(L/2)) and last layers."""
    if isinstance(num_layers, bool) or not isinstance(num_layers, (int, np.integer)):
        raise TypeError("layer count must be an integer")
    if num_layers < 1:
        raise ValueError(f"layer count must be >= 1, got {num_layers}")
    return {(int(num_layers) + 1) // 2, int(num_layers)}
