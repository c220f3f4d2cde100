"""Shared fixtures: reference metric rows, provider commands, file builders.

Input files for parser tests are written with plain text here, not through
the package's own writers, so loaders are exercised against independently
constructed bytes.
"""

from __future__ import annotations

import shlex
import sys
from pathlib import Path

import numpy as np
import pytest

from dermfuse import RasterImage, save_image

# Reference evaluation rows for five classifier backbones, as fractions:
# (acc, pre, rec, f1, auc). Used as realistic inputs for metric and
# weighting tests.
REFERENCE_MODEL_METRICS = {
    "vgg19": (0.7347, 0.7768, 0.6670, 0.7177, 0.82),
    "resnet50": (0.7735, 0.6887, 0.9454, 0.7969, 0.82),
    "resnet101": (0.8091, 0.8253, 0.7811, 0.8026, 0.90),
    "densenet121": (0.8390, 0.8109, 0.8792, 0.8437, 0.91),
    "inceptionv3": (0.8140, 0.8163, 0.8049, 0.8106, 0.89),
}

PROVIDERS_DIR = Path(__file__).parent / "providers"


def provider_command(script_name: str) -> str:
    """Shell command string invoking a bundled provider script."""
    script = PROVIDERS_DIR / script_name
    return f"{shlex.quote(sys.executable)} {shlex.quote(str(script))}"


@pytest.fixture
def echo_provider_cmd() -> str:
    return provider_command("echo_provider.py")


@pytest.fixture
def brightness_provider_cmd() -> str:
    return provider_command("brightness_provider.py")


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def write_manifest_csv(path: Path, rows: list[tuple[str, str, str, str]]) -> Path:
    lines = ["image_id,path,label,source"]
    lines.extend(",".join(row) for row in rows)
    return write_text(path, "\n".join(lines) + "\n")


def write_predictions_csv(path: Path, rows: list[tuple[str, float, float]]) -> Path:
    lines = ["image_id,p_benign,p_malignant"]
    lines.extend(f"{iid},{b!r},{m!r}" for iid, b, m in rows)
    return write_text(path, "\n".join(lines) + "\n")


def write_labels_csv(path: Path, rows: list[tuple[str, str]]) -> Path:
    lines = ["image_id,label"]
    lines.extend(f"{iid},{label}" for iid, label in rows)
    return write_text(path, "\n".join(lines) + "\n")


def make_two_source_rows() -> list[tuple[str, str, str, str]]:
    """A small unbalanced two-source manifest: source_a has 40 benign, 10
    malignant, and 6 unknown records; source_b has 30 benign and 21
    malignant. Balancing should keep 10+10 from a and 21+21 from b."""
    rows = []
    for i in range(40):
        rows.append((f"a-b{i:03d}", f"images/a-b{i:03d}.png", "benign", "source_a"))
    for i in range(10):
        rows.append((f"a-m{i:03d}", f"images/a-m{i:03d}.png", "malignant", "source_a"))
    for i in range(6):
        rows.append((f"a-u{i:03d}", f"images/a-u{i:03d}.png", "unknown", "source_a"))
    for i in range(30):
        rows.append((f"b-b{i:03d}", f"images/b-b{i:03d}.png", "benign", "source_b"))
    for i in range(21):
        rows.append((f"b-m{i:03d}", f"images/b-m{i:03d}.png", "malignant", "source_b"))
    return rows


def random_uint8_image(rng: np.random.Generator, width: int, height: int) -> RasterImage:
    return RasterImage(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))


def save_png(path: Path, data: np.ndarray) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    save_image(RasterImage(data), path)
    return path
