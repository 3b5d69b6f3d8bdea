"""Blip-2 adapter backed by Hugging Face ``transformers`` (optional dependency)."""

from __future__ import annotations

import io
import os

from PIL import Image, UnidentifiedImageError

from layerlens.adapters.base import ModelAdapter, ModelInput, PreprocessError


class Blip2Adapter(ModelAdapter):
    architecture = "blip2"
    allowed_options = frozenset({"torch_dtype", "max_length"})

    def __init__(self, model_path: str, options=None):
        super().__init__(model_path, options)
        self.processor = None
        self.max_length = self.options.get("max_length")

    @classmethod
    def from_model(cls, model, processor=None, name: str = "in-memory/blip2", options=None):
        """Wrap an already-instantiated model (used by tests and notebooks)."""
        adapter = cls(name, options)
        model.eval()
        for p in model.parameters():
            p.requires_grad_(False)
        adapter.model = model
        adapter.processor = processor
        return adapter

    def _build(self):
        from transformers import Blip2ForConditionalGeneration, Blip2Processor

        cache_dir = os.environ.get("LENS_CACHE_DIR") or None
        self.processor = Blip2Processor.from_pretrained(self.name, cache_dir=cache_dir)
        return Blip2ForConditionalGeneration.from_pretrained(
            self.name, torch_dtype=self.dtype, cache_dir=cache_dir
        )

    @property
    def layer_count(self) -> int:
        return int(self._require_model().config.text_config.num_hidden_layers)

    def probe_layer_name(self, index: int) -> str:
        # OPT is pre-norm: final_layer_norm is the norm applied after attention.
        if not 1 <= index <= self.layer_count:
            raise IndexError(f"layer index {index} outside 1..{self.layer_count}")
        return f"language_model.model.decoder.layers.{index - 1}.final_layer_norm"

    def preprocess(self, image: bytes, prompt: str, image_path: str = "<memory>") -> ModelInput:
        if self.processor is None:
            raise PreprocessError("blip2 adapter has no processor; load() the adapter first")
        if not prompt:
            raise PreprocessError("prompt must be non-empty")
        if not image:
            raise PreprocessError("cannot decode an empty image")
        try:
            img = Image.open(io.BytesIO(image)).convert("RGB")
        except (UnidentifiedImageError, OSError) as exc:
            raise PreprocessError(f"cannot decode image: {exc}") from None
        encoded = self.processor(images=img, text=prompt, return_tensors="pt")
        n_tokens = encoded["input_ids"].shape[-1]
        if self.max_length is not None and n_tokens > int(self.max_length):
            raise PreprocessError(f"prompt needs {n_tokens} tokens, budget is {self.max_length}")
        tensors = dict(encoded)
        tensors["pixel_values"] = tensors["pixel_values"].to(self.dtype)
        return ModelInput(image_path=image_path, prompt=prompt, tensors=tensors)
