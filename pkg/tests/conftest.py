import io

import numpy as np
import pytest
from PIL import Image

from layerlens.adapters import create_adapter
from layerlens.store import ActivationStore
from layerlens.synth import random_images


def png_bytes(array: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(array.astype(np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def random_png(rng, size=8) -> bytes:
    return png_bytes(rng.integers(0, 256, (size, size, 3)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy():
    return create_adapter("toy-vlm", "toy-vlm").load()


@pytest.fixture
def oracle():
    return create_adapter("linear-probe-oracle", "linear-probe-oracle").load()


@pytest.fixture
def store(tmp_path):
    with ActivationStore(tmp_path / "acts.db") as s:
        yield s


@pytest.fixture
def toy_config_file(tmp_path):
    """Paper-shaped YAML pointing at three random images and two toy layers."""
    random_images(tmp_path / "data" / "test-images", 3, seed=7)
    path = tmp_path / "toy.yaml"
    path.write_text(
        "architecture: toy-vlm\n"
        "model_path: toy-vlm\n"
        "model:\n"
        "  - torch_dtype: auto\n"
        "output_db: output/toy.db\n"
        "input_dir: ./data/test-images/\n"
        'prompt: "Describe the color in this image in one word."\n'
        "modules:\n"
        "  - blocks.0.norm\n"
        "  - head\n"
    )
    return path
