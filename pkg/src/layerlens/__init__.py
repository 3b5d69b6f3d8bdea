"""Activation extraction, probing and concept geometry for vision-language models."""

from layerlens.config import ConfigError, ExtractionConfig, dump_config, parse_config
from layerlens.store import ActivationRecord, ActivationStore, decode_tensor, encode_tensor

__version__ = "0.1.0"

__all__ = [
    "ActivationRecord",
    "ActivationStore",
    "ConfigError",
    "ExtractionConfig",
    "decode_tensor",
    "dump_config",
    "encode_tensor",
    "parse_config",
]
