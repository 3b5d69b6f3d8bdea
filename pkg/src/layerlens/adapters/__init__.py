"""Adapter registry keyed by architecture string.

Adding a model means writing a :class:`ModelAdapter` subclass and calling
:func:`register`; nothing in the extraction engine changes.
"""

from __future__ import annotations

from typing import Callable

from layerlens.adapters.base import (
    AdapterError,
    ModelAdapter,
    ModelInput,
    ModelNotLoadedError,
    PreprocessError,
    list_named_layers,
    preprocess,
    select_probe_layers,
)
from layerlens.adapters.toy import LinearProbeOracleAdapter, ToyVLMAdapter

REGISTRY: dict[str, Callable[..., ModelAdapter]] = {}


def register(architecture: str, factory: Callable[..., ModelAdapter]) -> None:
    if architecture in REGISTRY:
        raise AdapterError(f"architecture {architecture!r} is already registered")
    REGISTRY[architecture] = factory


def _blip2(model_path, options=None):
    from layerlens.adapters.blip2 import Blip2Adapter

    return Blip2Adapter(model_path, options)


register("toy-vlm", ToyVLMAdapter)
register("linear-probe-oracle", LinearProbeOracleAdapter)
register("blip2", _blip2)


def create_adapter(architecture: str, model_path: str, options=None) -> ModelAdapter:
    try:
        factory = REGISTRY[architecture]
    except KeyError:
        raise AdapterError(
            f"unknown architecture {architecture!r}; registered: {sorted(REGISTRY)}"
        ) from None
    return factory(model_path, options)


def adapter_from_config(cfg) -> ModelAdapter:
    return create_adapter(cfg.architecture, cfg.model_path, cfg.model_options)


__all__ = [
    "AdapterError",
    "ModelAdapter",
    "ModelInput",
    "ModelNotLoadedError",
    "PreprocessError",
    "REGISTRY",
    "adapter_from_config",
    "create_adapter",
    "list_named_layers",
    "preprocess",
    "register",
    "select_probe_layers",
]
