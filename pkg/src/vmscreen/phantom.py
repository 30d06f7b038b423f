"""Synthetic fetal-head ultrasound phantoms with known render geometry.

Each phantom is a dark sector ("fan") of speckle, an elliptical skull ring,
a bright midline echo, and two lateral-ventricle ellipses whose atrial width
is drawn from a per-class range.  The class label is decided purely by which
range the width came from, so a width threshold read back from the stored
render parameters is an exact oracle for the labels.  Optional colored
caliper marks are stamped at the measured atrium so the annotation-removal
stage has something realistic to remove, and a fake grayscale header strip
exercises the top crop.

Everything is a pure function of the spec seed: rendering the same spec twice
produces byte-identical images.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import uniform_filter

from .errors import ConfigError
from .ingest import Dataset, LabeledImage, NAME_OF_LABEL

CALIPER_RGB = (255, 230, 40)

RENDER_PARAMS_FILENAME = "render_params.json"


@dataclass(frozen=True)
class PhantomSpec:
    """Generation parameters for one phantom dataset."""

    n_per_class: int
    image_size: int = 224
    ventricle_width_range_normal: tuple[float, float] = (4.0, 9.0)
    ventricle_width_range_vm: tuple[float, float] = (12.0, 20.0)
    noise_level: float = 0.30
    seed: int = 0
    calipers: bool = True

    def __post_init__(self) -> None:
        if self.n_per_class < 1:
            raise ConfigError(f"n_per_class must be >= 1, got {self.n_per_class}")
        if self.image_size < 32:
            raise ConfigError(f"image_size must be >= 32, got {self.image_size}")
        for name, (lo, hi) in (
            ("normal", self.ventricle_width_range_normal),
            ("vm", self.ventricle_width_range_vm),
        ):
            if not 0 < lo < hi:
                raise ConfigError(f"{name} width range must satisfy 0 < lo < hi, got ({lo}, {hi})")
        if self.ventricle_width_range_vm[0] <= self.ventricle_width_range_normal[1]:
            raise ConfigError(
                "vm width range must lie strictly above the normal range "
                f"(got normal={self.ventricle_width_range_normal}, "
                f"vm={self.ventricle_width_range_vm}); classes would overlap"
            )


def _stamp_cross(rgb: np.ndarray, x: float, y: float, color: tuple[int, int, int], arm: int = 2) -> list[list[int]]:
    """Stamp a plus-shaped marker, returning the pixel coordinates touched."""
    h, w, _ = rgb.shape
    cx, cy = int(round(x)), int(round(y))
    touched = []
    for dx, dy in [(0, 0)] + [(d, 0) for d in range(-arm, arm + 1) if d] + [(0, d) for d in range(-arm, arm + 1) if d]:
        px, py = cx + dx, cy + dy
        if 0 <= px < w and 0 <= py < h:
            rgb[py, px] = color
            touched.append([px, py])
    return touched


def render_phantom(spec: PhantomSpec, label: int, index: int) -> tuple[np.ndarray, dict]:
    """Render one phantom image and its ground-truth geometry record.

    Returns an ``image_size x image_size x 3`` uint8 array plus a dict with
    the drawn atrial width, both ventricle ellipses (outer semi-axes, rim
    included), the head ellipse, and any caliper pixel coordinates.
    """
    s = spec.image_size
    scale = s / 224.0
    rng = np.random.default_rng([spec.seed, label, index])

    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)
    img = np.full((s, s), 5.0)

    # Fan-shaped scan sector with speckle.
    apex_x, apex_y = s / 2.0, 0.06 * s
    half_angle = np.deg2rad(38.0)
    r = np.hypot(xx - apex_x, yy - apex_y)
    theta = np.arctan2(xx - apex_x, yy - apex_y)
    fan = (np.abs(theta) <= half_angle) & (r <= 0.92 * s) & (yy >= apex_y)
    noise = uniform_filter(rng.normal(0.0, 1.0, (s, s)), size=3)
    img[fan] = 35.0 + spec.noise_level * 60.0 * noise[fan]

    # Skull: bright elliptical ring around speckled parenchyma.
    head_cx = s / 2.0 + float(rng.uniform(-0.01, 0.01)) * s
    head_cy = 0.52 * s + float(rng.uniform(-0.01, 0.01)) * s
    head_ax = 0.33 * s * float(rng.uniform(0.95, 1.05))
    head_ay = 0.26 * s * float(rng.uniform(0.95, 1.05))
    re = np.sqrt(((xx - head_cx) / head_ax) ** 2 + ((yy - head_cy) / head_ay) ** 2)
    inside = re < 0.92
    img[inside] = 70.0 + spec.noise_level * 45.0 * noise[inside]
    img[(re >= 0.92) & (re <= 1.0)] = 190.0

    # Midline echo (falx).
    midline = (np.abs(xx - head_cx) <= 1.0) & (re < 0.90)
    img[midline] = 150.0

    # Lateral ventricles: dark interior, bright rim; atrial width is the
    # class signal.
    lo, hi = (
        spec.ventricle_width_range_vm if label == 1 else spec.ventricle_width_range_normal
    )
    width = float(rng.uniform(lo, hi)) * scale
    length = float(rng.uniform(0.80, 1.05)) * head_ay
    rim = max(1.5, 2.0 * scale)
    ventricles = []
    for side in (-1.0, 1.0):
        vcx = head_cx + side * 0.42 * head_ax
        vcy = head_cy + float(rng.uniform(-0.015, 0.015)) * s
        sx, sy = width / 2.0, length / 2.0
        rv_outer = ((xx - vcx) / (sx + rim)) ** 2 + ((yy - vcy) / (sy + rim)) ** 2
        rv_inner = ((xx - vcx) / sx) ** 2 + ((yy - vcy) / sy) ** 2
        img[(rv_outer <= 1.0) & (rv_inner > 1.0)] = 210.0
        img[rv_inner <= 1.0] = 12.0
        ventricles.append(
            {"cx": vcx, "cy": vcy, "sx_outer": sx + rim, "sy_outer": sy + rim}
        )

    # Fake header text: bright grayscale dashes in the strip the crop removes.
    n_dashes = 12
    dash_y = rng.integers(2, max(3, int(0.04 * s)), n_dashes)
    dash_x = rng.integers(2, s - 10, n_dashes)
    dash_len = rng.integers(3, 9, n_dashes)
    for y0, x0, ln in zip(dash_y, dash_x, dash_len):
        img[y0, x0 : min(s, x0 + ln)] = 230.0

    rgb = np.repeat(np.clip(img, 0, 255).astype(np.uint8)[:, :, None], 3, axis=2)

    caliper_pixels: list[list[int]] = []
    measured = int(rng.integers(0, 2))
    if spec.calipers:
        v = ventricles[measured]
        half_w = v["sx_outer"] - rim
        for end in (-1.0, 1.0):
            caliper_pixels += _stamp_cross(
                rgb, v["cx"] + end * (half_w + 2.0), v["cy"], CALIPER_RGB
            )

    record = {
        "id": f"{NAME_OF_LABEL[label]}/p{index:04d}",
        "label": label,
        "width_px": width,
        "head": {"cx": head_cx, "cy": head_cy, "ax": head_ax, "ay": head_ay},
        "ventricles": ventricles,
        "measured_ventricle": measured,
        "calipers": caliper_pixels,
    }
    return rgb, record


def synthesize_phantom_dataset(spec: PhantomSpec, out_dir: str | Path) -> Dataset:
    """Write a phantom dataset to ``out_dir`` and return it as a Dataset.

    Layout is ``out_dir/<class>/pNNNN.png`` plus a ``render_params.json``
    sidecar recording every image's generative parameters.
    """
    out_dir = Path(out_dir)
    records = []
    items = []
    for label in (0, 1):
        class_dir = out_dir / NAME_OF_LABEL[label]
        class_dir.mkdir(parents=True, exist_ok=True)
        for index in range(spec.n_per_class):
            rgb, record = render_phantom(spec, label, index)
            path = class_dir / f"p{index:04d}.png"
            Image.fromarray(rgb).save(path)
            records.append(record)
            items.append(LabeledImage(id=record["id"], path=path, label=label))
    sidecar = {"spec": asdict(spec), "images": records}
    with open(out_dir / RENDER_PARAMS_FILENAME, "w") as fh:
        json.dump(sidecar, fh, indent=1)
    return Dataset(tuple(sorted(items, key=lambda it: it.id)))


def load_render_params(out_dir: str | Path) -> dict:
    """Read back the sidecar written by :func:`synthesize_phantom_dataset`."""
    with open(Path(out_dir) / RENDER_PARAMS_FILENAME) as fh:
        return json.load(fh)
