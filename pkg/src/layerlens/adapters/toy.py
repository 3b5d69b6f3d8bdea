"""Deterministic reference adapters.

``toy-vlm`` is a tiny fixed-seed transformer-style stack over image patches
concatenated with byte-level prompt tokens. ``linear-probe-oracle`` is one
affine map whose output can be recomputed in closed form.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from layerlens.adapters.base import ModelAdapter, ModelInput, PreprocessError, decode_image


def _seeded(build, seed: int):
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return build()


class _Block(nn.Module):
    def __init__(self, hidden: int):
        super().__init__()
        self.norm = nn.LayerNorm(hidden)
        self.fc1 = nn.Linear(hidden, 2 * hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(2 * hidden, hidden)

    def forward(self, x):
        return x + self.fc2(self.act(self.fc1(self.norm(x))))


class ToyVLM(nn.Module):
    """embedding -> shared mixer -> N blocks -> shared mixer -> norm -> head.

    ``shared`` is deliberately applied twice per forward pass.
    """

    def __init__(self, patch_dim: int, hidden: int, num_layers: int, max_tokens: int, vocab: int = 256):
        super().__init__()
        self.patch_embed = nn.Linear(patch_dim, hidden)
        self.token_embed = nn.Embedding(vocab, hidden)
        self.pos_embed = nn.Parameter(torch.randn(max_tokens, hidden) * 0.02)
        self.shared = nn.Linear(hidden, hidden)
        self.blocks = nn.ModuleList(_Block(hidden) for _ in range(num_layers))
        self.norm = nn.LayerNorm(hidden)
        self.head = nn.Linear(hidden, vocab)

    def forward(self, patches: torch.Tensor, token_ids: torch.Tensor) -> torch.Tensor:
        x = torch.cat([self.patch_embed(patches), self.token_embed(token_ids)], dim=1)
        x = x + self.pos_embed[: x.shape[1]]
        x = x + self.shared(x)
        for block in self.blocks:
            x = block(x)
        x = x + self.shared(x)
        return self.head(self.norm(x))


class ToyVLMAdapter(ModelAdapter):
    architecture = "toy-vlm"
    allowed_options = frozenset(
        {"torch_dtype", "seed", "num_layers", "hidden_size", "image_size", "patch_size", "max_tokens"}
    )

    def __init__(self, model_path: str = "toy-vlm", options=None):
        super().__init__(model_path, options)
        o = self.options
        self.seed = int(o.get("seed", 0))
        self.num_layers = int(o.get("num_layers", 2))
        self.hidden_size = int(o.get("hidden_size", 32))
        self.image_size = int(o.get("image_size", 8))
        self.patch_size = int(o.get("patch_size", 4))
        self.max_tokens = int(o.get("max_tokens", 256))
        if self.num_layers < 1 or self.hidden_size < 1:
            raise ValueError("num_layers and hidden_size must be positive")
        if self.image_size % self.patch_size:
            raise ValueError("image_size must be a multiple of patch_size")

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def layer_count(self) -> int:
        return self.num_layers

    def probe_layer_name(self, index: int) -> str:
        if not 1 <= index <= self.num_layers:
            raise IndexError(f"layer index {index} outside 1..{self.num_layers}")
        return f"blocks.{index - 1}.norm"

    def _build(self) -> nn.Module:
        patch_dim = 3 * self.patch_size**2
        model = _seeded(
            lambda: ToyVLM(patch_dim, self.hidden_size, self.num_layers, self.max_tokens), self.seed
        )
        return model.to(self.dtype)

    def tokenize(self, prompt: str) -> list[int]:
        return list(prompt.encode("utf-8"))

    def preprocess(self, image: bytes, prompt: str, image_path: str = "<memory>") -> ModelInput:
        if not prompt:
            raise PreprocessError("prompt must be non-empty")
        pixels = decode_image(image, self.image_size)
        tokens = self.tokenize(prompt)
        if self.num_patches + len(tokens) > self.max_tokens:
            raise PreprocessError(
                f"{self.num_patches} patches + {len(tokens)} prompt tokens exceed "
                f"the context budget of {self.max_tokens}"
            )
        p, g = self.patch_size, self.image_size // self.patch_size
        patches = pixels.reshape(g, p, g, p, 3).transpose(0, 2, 1, 3, 4).reshape(g * g, p * p * 3)
        return ModelInput(
            image_path=image_path,
            prompt=prompt,
            tensors={
                "patches": torch.from_numpy(np.ascontiguousarray(patches)).unsqueeze(0).to(self.dtype),
                "token_ids": torch.tensor([tokens], dtype=torch.int64),
            },
        )


class LinearOracle(nn.Module):
    def __init__(self, in_features: int, out_features: int):
        super().__init__()
        self.linear = nn.Linear(in_features, out_features)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.linear(x)


class LinearProbeOracleAdapter(ModelAdapter):
    """One affine layer ``linear``: y = W x + b over the flattened image pixels."""

    architecture = "linear-probe-oracle"
    allowed_options = frozenset({"torch_dtype", "seed", "image_size", "out_features"})

    def __init__(self, model_path: str = "linear-probe-oracle", options=None):
        super().__init__(model_path, options)
        self.seed = int(self.options.get("seed", 0))
        self.image_size = int(self.options.get("image_size", 4))
        self.out_features = int(self.options.get("out_features", 16))

    @property
    def layer_count(self) -> int:
        return 1

    def probe_layer_name(self, index: int) -> str:
        if index != 1:
            raise IndexError("linear-probe-oracle has a single layer")
        return "linear"

    def _build(self) -> nn.Module:
        n_in = 3 * self.image_size**2
        return _seeded(lambda: LinearOracle(n_in, self.out_features), self.seed).to(self.dtype)

    def preprocess(self, image: bytes, prompt: str, image_path: str = "<memory>") -> ModelInput:
        if not prompt:
            raise PreprocessError("prompt must be non-empty")
        pixels = decode_image(image, self.image_size).reshape(1, -1)
        return ModelInput(
            image_path=image_path,
            prompt=prompt,
            tensors={"x": torch.from_numpy(pixels).to(self.dtype)},
        )

    def closed_form(self, inputs: ModelInput) -> torch.Tensor:
        """W x + b evaluated directly from the parameters, no module call."""
        lin = self._require_model().linear
        with torch.inference_mode():
            return F.linear(inputs.tensors["x"], lin.weight, lin.bias)

    def closed_form_float64(self, inputs: ModelInput) -> np.ndarray:
        lin = self._require_model().linear
        w = lin.weight.detach().double().numpy()
        b = lin.bias.detach().double().numpy()
        x = inputs.tensors["x"].double().numpy()
        return x @ w.T + b
