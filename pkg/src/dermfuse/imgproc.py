"""RGB image enhancement, geometry, and randomized augmentation.

All operators work on 8-bit RGB rasters (normalization to [0, 1] reals is the
final, flagged step). Internal arithmetic is float64; results are rounded
half-up (floor(x + 0.5)) and clamped back to [0, 255], so every operator is
bit-deterministic and every neutral parameter is a bit-exact identity.

The three enhancement operators share one shape: interpolate each pixel
between a reference image and the original, out = ref + factor * (orig - ref).
Factor 0 returns the reference, factor 1 the original, factors above 1
extrapolate away from the reference. The reference is what varies: the
pixel's own luminance (color), a smoothed copy (sharpness), or the scalar
mean luminance (contrast).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ParseError, StorageError, ValidationError

# ITU-R 601 luma weights.
_LUMA = (0.299, 0.587, 0.114)

# 3x3 smoothing kernel used as the sharpness reference (center-heavy mean).
_SMOOTH_CENTER = 5.0
_SMOOTH_TOTAL = 13.0


@dataclass(frozen=True)
class RasterImage:
    """An RGB raster: uint8 in [0, 255], or float64 in [0, 1] when the
    normalized flag is set. The buffer is copied and frozen at construction."""

    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValidationError(f"expected an RGB array of shape (h, w, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"image dimensions must be positive, got {arr.shape}")
        if self.normalized:
            arr = arr.astype(np.float64, copy=True)
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ValidationError("normalized image values must lie in [0, 1]")
        else:
            if arr.dtype != np.uint8:
                raise ValidationError(f"8-bit image must have dtype uint8, got {arr.dtype}")
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])


@dataclass(frozen=True)
class PreprocessConfig:
    """Parameters of the fixed enhancement pipeline, in application order."""

    color_factor: float = 1.2
    sharpness_factor: float = 25.0
    brightness_delta: float = -20.0
    contrast_factor: float = 1.5
    crop_fraction: float = 0.75
    target_size: tuple[int, int] = (224, 224)

    def __post_init__(self):
        for name in ("color_factor", "sharpness_factor", "contrast_factor"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValidationError(f"{name} must be a finite non-negative number, got {value!r}")
        if not math.isfinite(self.brightness_delta):
            raise ValidationError(f"brightness_delta must be finite, got {self.brightness_delta!r}")
        if not (0.0 < self.crop_fraction <= 1.0):
            raise ValidationError(f"crop_fraction must lie in (0, 1], got {self.crop_fraction!r}")
        w, h = self.target_size
        if not (isinstance(w, int) and isinstance(h, int) and w > 0 and h > 0):
            raise ValidationError(f"target_size must be positive integers, got {self.target_size!r}")


@dataclass(frozen=True)
class AugmentConfig:
    """Randomized augmentation ranges; magnitude 0 disables a component."""

    horizontal_flip: bool = True
    vertical_flip: bool = True
    rotation_degrees: float = 90.0
    zoom: float = 0.3
    shear: float = 0.1
    width_shift: float = 0.1
    height_shift: float = 0.1

    def __post_init__(self):
        for name in ("rotation_degrees", "zoom", "shear", "width_shift", "height_shift"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValidationError(f"{name} must be a finite non-negative number, got {value!r}")
        # zoom >= 1 would allow a zero or negative scale, which has no inverse.
        if self.zoom >= 1.0:
            raise ValidationError(f"zoom must be below 1, got {self.zoom!r}")


def _require_uint8(img: RasterImage, op: str) -> None:
    if img.normalized:
        raise ValidationError(f"{op} requires an 8-bit image, got a normalized one")


def _to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0.0, 255.0).astype(np.uint8)


def _luminance(float_rgb: np.ndarray) -> np.ndarray:
    return float_rgb[:, :, 0] * _LUMA[0] + float_rgb[:, :, 1] * _LUMA[1] + float_rgb[:, :, 2] * _LUMA[2]


def _blend(reference: np.ndarray, original: np.ndarray, factor: float) -> np.ndarray:
    return _to_uint8(reference + factor * (original - reference))


def color_enhance(img: RasterImage, factor: float) -> RasterImage:
    """Interpolate each pixel between its own luminance and the original.

    The reference pixel is the rounded luminance L = round(0.299 R + 0.587 G
    + 0.114 B) replicated to all three channels, so factor 0 yields a
    grayscale image and factors above 1 boost saturation.
    """
    _require_uint8(img, "color_enhance")
    original = img.data.astype(np.float64)
    gray = np.floor(_luminance(original) + 0.5)
    reference = np.repeat(gray[:, :, np.newaxis], 3, axis=2)
    return RasterImage(_blend(reference, original, factor))


def sharpness_enhance(img: RasterImage, factor: float) -> RasterImage:
    """Interpolate between a smoothed copy and the original.

    The smoothed reference convolves each interior pixel with the 3x3
    center-weighted kernel (center 5, neighbors 1, divided by 13); border
    pixels keep their original values, so they are unchanged at any factor.
    """
    _require_uint8(img, "sharpness_enhance")
    original = img.data.astype(np.float64)
    smooth = original.copy()
    if img.height >= 3 and img.width >= 3:
        acc = _SMOOTH_CENTER * original[1:-1, 1:-1]
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                acc += original[1 + dy:img.height - 1 + dy, 1 + dx:img.width - 1 + dx]
        smooth[1:-1, 1:-1] = acc / _SMOOTH_TOTAL
    return RasterImage(_blend(smooth, original, factor))


def brightness_shift(img: RasterImage, delta: float) -> RasterImage:
    """Add a constant to every channel, clamping to [0, 255]."""
    _require_uint8(img, "brightness_shift")
    return RasterImage(_to_uint8(img.data.astype(np.float64) + delta))


def contrast_enhance(img: RasterImage, factor: float) -> RasterImage:
    """Interpolate between the image's mean luminance and the original.

    The reference is a single scalar: the mean of the exact per-pixel
    luminances, rounded once. Factor 0 flattens the image to that gray;
    factors above 1 stretch values away from it.
    """
    _require_uint8(img, "contrast_enhance")
    original = img.data.astype(np.float64)
    mean_luma = np.floor(float(_luminance(original).mean()) + 0.5)
    return RasterImage(_blend(mean_luma, original, factor))


def center_crop(img: RasterImage, fraction: float) -> RasterImage:
    """Keep the centered fraction of each dimension.

    New dimensions are floor(fraction * dim); offsets floor((dim - new) / 2).
    """
    if not (0.0 < fraction <= 1.0):
        raise ValidationError(f"crop fraction must lie in (0, 1], got {fraction!r}")
    new_w = math.floor(fraction * img.width)
    new_h = math.floor(fraction * img.height)
    if new_w < 1 or new_h < 1:
        raise ValidationError(
            f"crop fraction {fraction!r} of {img.width}x{img.height} leaves no pixels"
        )
    x0 = (img.width - new_w) // 2
    y0 = (img.height - new_h) // 2
    return RasterImage(img.data[y0:y0 + new_h, x0:x0 + new_w], normalized=img.normalized)


def resize_image(img: RasterImage, width: int, height: int) -> RasterImage:
    """Bilinear resize with half-pixel centers; same-size input is returned
    bit-identically. Source coordinates are clamped at the borders."""
    if width < 1 or height < 1:
        raise ValidationError(f"target dimensions must be positive, got {width}x{height}")
    source = img.data.astype(np.float64)

    src_x = np.clip((np.arange(width) + 0.5) * (img.width / width) - 0.5, 0.0, img.width - 1.0)
    src_y = np.clip((np.arange(height) + 0.5) * (img.height / height) - 0.5, 0.0, img.height - 1.0)
    x0 = np.floor(src_x).astype(np.intp)
    y0 = np.floor(src_y).astype(np.intp)
    x1 = np.minimum(x0 + 1, img.width - 1)
    y1 = np.minimum(y0 + 1, img.height - 1)
    wx = (src_x - x0)[np.newaxis, :, np.newaxis]
    wy = (src_y - y0)[:, np.newaxis, np.newaxis]

    top = source[y0][:, x0] * (1.0 - wx) + source[y0][:, x1] * wx
    bottom = source[y1][:, x0] * (1.0 - wx) + source[y1][:, x1] * wx
    blended = top * (1.0 - wy) + bottom * wy

    if img.normalized:
        return RasterImage(np.clip(blended, 0.0, 1.0), normalized=True)
    return RasterImage(_to_uint8(blended))


def normalize_image(img: RasterImage) -> RasterImage:
    """Map byte values to [0, 1] reals by dividing by 255."""
    if img.normalized:
        raise ValidationError("image is already normalized")
    return RasterImage(img.data.astype(np.float64) / 255.0, normalized=True)


def denormalize_image(img: RasterImage) -> RasterImage:
    """Exact inverse of normalize_image (value * 255, rounded half-up)."""
    if not img.normalized:
        raise ValidationError("image is not normalized")
    return RasterImage(_to_uint8(img.data * 255.0))


def preprocess(img: RasterImage, cfg: PreprocessConfig | None = None) -> RasterImage:
    """Run the fixed enhancement pipeline on an 8-bit image.

    Order: color -> sharpness -> brightness -> contrast -> center crop ->
    resize -> normalize. The output is a normalized image at target size.
    """
    cfg = cfg or PreprocessConfig()
    _require_uint8(img, "preprocess")
    out = color_enhance(img, cfg.color_factor)
    out = sharpness_enhance(out, cfg.sharpness_factor)
    out = brightness_shift(out, cfg.brightness_delta)
    out = contrast_enhance(out, cfg.contrast_factor)
    out = center_crop(out, cfg.crop_fraction)
    out = resize_image(out, cfg.target_size[0], cfg.target_size[1])
    return normalize_image(out)


def _translation(tx: float, ty: float) -> np.ndarray:
    return np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])


def _rotation(degrees: float) -> np.ndarray:
    theta = math.radians(degrees)
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _shear_x(factor: float) -> np.ndarray:
    return np.array([[1.0, factor, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


def _scale(sx: float, sy: float) -> np.ndarray:
    return np.array([[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]])


def random_augment(img: RasterImage, cfg: AugmentConfig, seed: int) -> RasterImage:
    """Apply one randomly sampled affine transform, deterministic per seed.

    Draws (in order, each only when its component is enabled): horizontal
    flip at p = 0.5, vertical flip at p = 0.5, rotation angle uniform over
    +/- rotation_degrees, zoom scale uniform over 1 +/- zoom, shear factor
    uniform over +/- shear, then x and y shifts uniform over +/- the shift
    fraction of the matching dimension. The components compose into a single
    center-anchored affine map (rotate, then shear, then scale with flips
    folded into its signs, then shift); sampling is nearest-neighbor with
    source coordinates clamped to the image, so out-of-bounds pixels take
    the nearest edge value. The inverse map is composed analytically from
    the inverted components, which keeps pure flips exact involutions.
    """
    if seed < 0:
        raise ValidationError(f"seed must be non-negative, got {seed}")
    rng = np.random.default_rng(seed)
    hflip = cfg.horizontal_flip and bool(rng.random() < 0.5)
    vflip = cfg.vertical_flip and bool(rng.random() < 0.5)
    angle = float(rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees)) if cfg.rotation_degrees > 0 else 0.0
    scale = float(rng.uniform(1.0 - cfg.zoom, 1.0 + cfg.zoom)) if cfg.zoom > 0 else 1.0
    shear = float(rng.uniform(-cfg.shear, cfg.shear)) if cfg.shear > 0 else 0.0
    tx = float(rng.uniform(-cfg.width_shift, cfg.width_shift)) * img.width if cfg.width_shift > 0 else 0.0
    ty = float(rng.uniform(-cfg.height_shift, cfg.height_shift)) * img.height if cfg.height_shift > 0 else 0.0

    cx = (img.width - 1) / 2.0
    cy = (img.height - 1) / 2.0
    sx = -scale if hflip else scale
    sy = -scale if vflip else scale
    # Output pixel -> source pixel: the forward map is
    # T(c + t) @ S @ Sh @ R @ T(-c); invert each factor and reverse the order.
    inverse = (
        _translation(cx, cy)
        @ _rotation(-angle)
        @ _shear_x(-shear)
        @ _scale(1.0 / sx, 1.0 / sy)
        @ _translation(-cx - tx, -cy - ty)
    )

    xs, ys = np.meshgrid(np.arange(img.width, dtype=np.float64), np.arange(img.height, dtype=np.float64))
    src_x = inverse[0, 0] * xs + inverse[0, 1] * ys + inverse[0, 2]
    src_y = inverse[1, 0] * xs + inverse[1, 1] * ys + inverse[1, 2]
    xi = np.clip(np.floor(src_x + 0.5), 0, img.width - 1).astype(np.intp)
    yi = np.clip(np.floor(src_y + 0.5), 0, img.height - 1).astype(np.intp)
    return RasterImage(img.data[yi, xi], normalized=img.normalized)


def derive_image_seed(master_seed: int, image_index: int) -> int:
    """Mix a master seed and an image index into one child seed, so per-image
    augmentation is deterministic regardless of processing order."""
    if master_seed < 0 or image_index < 0:
        raise ValidationError("master seed and image index must be non-negative")
    state = np.random.SeedSequence([master_seed, image_index]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def load_image(path: str | Path) -> RasterImage:
    """Decode an image file into an 8-bit RGB raster."""
    path = Path(path)
    try:
        with Image.open(path) as decoded:
            rgb = decoded.convert("RGB")
            return RasterImage(np.asarray(rgb, dtype=np.uint8))
    except (OSError, ValueError) as exc:
        raise ParseError(path, 0, f"cannot decode image: {exc}") from exc


def save_image(img: RasterImage, path: str | Path) -> Path:
    """Encode an 8-bit raster to an image file (PNG keeps it lossless)."""
    if img.normalized:
        raise ValidationError("cannot save a normalized image; denormalize first")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.asarray(img.data), "RGB").save(path)
    except (OSError, ValueError) as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc
    return path
