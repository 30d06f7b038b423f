"""Resizing, channel normalization, and train-time geometric augmentation.

Images are resized with nearest-neighbour sampling so no intermediate pixel
values are invented, then normalized per channel with the ImageNet statistics
(mean [0.485, 0.456, 0.406], std [0.229, 0.224, 0.225]) that pretrained
backbones expect.  Augmentation is geometric only (rotation, flips, zoom via
random resized crop) and is a pure function of its seed; photometric changes
are deliberately absent so grayscale channels never diverge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import rotate as nd_rotate

from ._util import round_half_up
from .errors import ConfigError, DataError

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float64)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float64)


@dataclass(frozen=True)
class ModelTensor:
    """Channel-first float tensor ready for a model, tagged with its source id."""

    values: np.ndarray
    image_id: str = ""


@dataclass(frozen=True)
class AugmentPolicy:
    """Train-time augmentation: rotation up to 90 degrees, 0.5-probability
    flips, and area-scale zoom in [0.5, 2.0] with aspect ratio kept."""

    rotation_max_deg: float = 90.0
    hflip_p: float = 0.5
    vflip_p: float = 0.5
    crop_scale_min: float = 0.5
    crop_scale_max: float = 2.0
    enabled: bool = True
    signed_rotation: bool = False

    def __post_init__(self) -> None:
        for name in ("hflip_p", "vflip_p"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {p}")
        if not 0 < self.crop_scale_min <= self.crop_scale_max:
            raise ConfigError(
                f"crop scales must satisfy 0 < min <= max, got "
                f"({self.crop_scale_min}, {self.crop_scale_max})"
            )
        if self.rotation_max_deg < 0:
            raise ConfigError(f"rotation_max_deg must be >= 0, got {self.rotation_max_deg}")


def resize_nearest(img: np.ndarray, target: int | tuple[int, int] = 224) -> np.ndarray:
    """Nearest-neighbour resize; every output value exists in the input."""
    if img.size == 0:
        raise DataError("cannot resize an empty image")
    th, tw = (target, target) if isinstance(target, int) else target
    h, w = img.shape[:2]
    if (h, w) == (th, tw):
        return img.copy()
    rows = np.minimum((np.floor((np.arange(th) + 0.5) * h / th)).astype(np.intp), h - 1)
    cols = np.minimum((np.floor((np.arange(tw) + 0.5) * w / tw)).astype(np.intp), w - 1)
    return np.ascontiguousarray(img[rows][:, cols])


def normalize_values(img: np.ndarray) -> np.ndarray:
    """(H, W, 3) pixel values in 0..255 -> (3, H, W) float32, ImageNet-scaled."""
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"expected an H x W x 3 image, got shape {img.shape}")
    scaled = (img.astype(np.float64) / 255.0 - IMAGENET_MEAN) / IMAGENET_STD
    return scaled.transpose(2, 0, 1).astype(np.float32)


def normalize_channels(img: np.ndarray, image_id: str = "") -> ModelTensor:
    """Wrap :func:`normalize_values` output with its provenance id."""
    return ModelTensor(values=normalize_values(img), image_id=image_id)


def denormalize_values(values: np.ndarray) -> np.ndarray:
    """Inverse of :func:`normalize_values`, returning float (H, W, 3) in 0..255."""
    if values.ndim != 3 or values.shape[0] != 3:
        raise DataError(f"expected a 3 x H x W tensor, got shape {values.shape}")
    hwc = values.astype(np.float64).transpose(1, 2, 0)
    return (hwc * IMAGENET_STD + IMAGENET_MEAN) * 255.0


def denormalize_to_image(values: np.ndarray) -> np.ndarray:
    """Denormalize and quantize back to a uint8 image (for visualization)."""
    return np.clip(np.rint(denormalize_values(values)), 0, 255).astype(np.uint8)


def standardize_image(img: np.ndarray, image_id: str = "", target: int = 224) -> ModelTensor:
    """Resize then normalize: the deterministic eval-time path to a tensor."""
    return normalize_channels(resize_nearest(img, target), image_id=image_id)


def _crop_window(img: np.ndarray, ch: int, cw: int, oy: int, ox: int) -> np.ndarray:
    """Extract a (ch, cw) window; parts beyond the image are zero-padded."""
    h, w = img.shape[:2]
    out = np.zeros((ch, cw) + img.shape[2:], dtype=img.dtype)
    copy_h, copy_w = min(ch, h), min(cw, w)
    src_y, dst_y = (oy, 0) if ch <= h else (0, oy)
    src_x, dst_x = (ox, 0) if cw <= w else (0, ox)
    out[dst_y : dst_y + copy_h, dst_x : dst_x + copy_w] = img[
        src_y : src_y + copy_h, src_x : src_x + copy_w
    ]
    return out


def augment(img: np.ndarray, policy: AugmentPolicy, rng_seed: int) -> np.ndarray:
    """Apply rotation, flips, then zoom crop; deterministic given the seed.

    Rotation and the crop resize use nearest-neighbour sampling with black
    fill, matching the resize stage's no-invented-values rationale.  Zoom-out
    (area scale > 1) crops from a zero-padded canvas around the image.
    """
    if policy.enabled is False:
        return img.copy()
    rng = np.random.default_rng(rng_seed)

    lo_deg = -policy.rotation_max_deg if policy.signed_rotation else 0.0
    angle = float(rng.uniform(lo_deg, policy.rotation_max_deg))
    u_hflip = float(rng.random())
    u_vflip = float(rng.random())
    area_scale = float(rng.uniform(policy.crop_scale_min, policy.crop_scale_max))

    out = img
    if angle != 0.0:
        out = nd_rotate(
            out, angle, axes=(1, 0), reshape=False, order=0, mode="constant", cval=0
        )
    if u_hflip < policy.hflip_p:
        out = out[:, ::-1]
    if u_vflip < policy.vflip_p:
        out = out[::-1]

    h, w = out.shape[:2]
    side = math.sqrt(area_scale)
    ch = max(1, round_half_up(h * side))
    cw = max(1, round_half_up(w * side))
    oy = int(rng.integers(0, abs(h - ch) + 1))
    ox = int(rng.integers(0, abs(w - cw) + 1))
    window = _crop_window(out, ch, cw, oy, ox)
    return resize_nearest(window, (h, w))
