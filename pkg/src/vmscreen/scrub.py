"""Burned-in annotation removal for ultrasound frames.

Three stages, applied per image: a fixed-fraction top crop that discards the
header strip where patient text lives, HSV thresholding that flags colored
(non-grayscale) overlay pixels such as measurement calipers, and an
isophote-transport inpainting pass that fills the flagged pixels from their
surroundings.

The inpainting solver evolves the masked region under an explicit scheme
combining transport of image smoothness along isophote lines with
gradient-directed (plus a little isotropic) diffusion, the stream-function
formulation by which fluid-dynamics-based inpainting prolongs structure into
a hole.  Iteration stops when the largest per-pixel update drops below a
tolerance on the 0-255 scale, or after ``max_iters`` steps (reported, not
fatal).  Unmasked pixels are never touched, and filled values are clamped to
the unmasked min/max of the input, a discrete maximum principle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation, binary_erosion

from ._util import round_half_up
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class ScrubConfig:
    """Knobs for the three scrub stages; defaults suit the phantom corpus."""

    crop_fraction: float = 0.08
    sat_threshold: float = 0.25
    val_floor: float = 0.15
    morph_kernel: int = 3
    dilate_iters: int = 1
    close_iters: int = 1
    inpaint_radius: int = 3
    inpaint_tol: float = 1e-3
    inpaint_max_iters: int = 2000

    def __post_init__(self) -> None:
        if not 0.0 <= self.crop_fraction < 1.0:
            raise ConfigError(f"crop_fraction must be in [0, 1), got {self.crop_fraction}")
        for name in ("sat_threshold", "val_floor"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.morph_kernel < 1 or self.morph_kernel % 2 == 0:
            raise ConfigError(f"morph_kernel must be odd and >= 1, got {self.morph_kernel}")
        if self.dilate_iters < 0 or self.close_iters < 0:
            raise ConfigError("dilate_iters and close_iters must be non-negative")
        if self.inpaint_radius < 1:
            raise ConfigError(f"inpaint_radius must be >= 1, got {self.inpaint_radius}")
        if self.inpaint_tol <= 0 or self.inpaint_max_iters < 1:
            raise ConfigError("inpaint_tol must be > 0 and inpaint_max_iters >= 1")


@dataclass
class InpaintResult:
    image: np.ndarray
    converged: bool
    iterations: int
    max_update: float


@dataclass
class ScrubResult:
    image: np.ndarray
    mask: np.ndarray
    converged: bool
    iterations: int


def crop_header(img: np.ndarray, crop_fraction: float) -> np.ndarray:
    """Drop the top ``crop_fraction`` of rows; the kept rows are copied verbatim."""
    if not 0.0 <= crop_fraction < 1.0:
        raise ConfigError(f"crop_fraction must be in [0, 1), got {crop_fraction}")
    h = img.shape[0]
    out_h = round_half_up(h * (1.0 - crop_fraction))
    if out_h < 1:
        raise DataError(f"crop_fraction {crop_fraction} leaves no rows of a {h}-row image")
    return img[h - out_h :].copy()


def detect_annotation_mask(img: np.ndarray, cfg: ScrubConfig) -> np.ndarray:
    """Flag colored, non-dark pixels: saturation > threshold and value > floor.

    Saturation and value follow the usual HSV definitions computed from the
    RGB channels, so pure grayscale pixels (R=G=B) are never flagged.
    """
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"expected an RGB image, got shape {img.shape}")
    rgb = img.astype(np.float64) / 255.0
    mx = rgb.max(axis=2)
    mn = rgb.min(axis=2)
    sat = np.where(mx > 0, (mx - mn) / np.maximum(mx, 1e-12), 0.0)
    return (sat > cfg.sat_threshold) & (mx > cfg.val_floor)


def refine_mask(mask: np.ndarray, cfg: ScrubConfig) -> np.ndarray:
    """Dilate then close the mask so annotation fringes are covered.

    Closing treats pixels outside the image as set during its erosion step,
    which keeps the operation extensive at the borders; the input mask is
    OR-ed back in, so refinement can only grow the marked set.
    """
    if mask.dtype != bool or mask.ndim != 2:
        raise DataError(f"expected a 2-D boolean mask, got {mask.dtype} {mask.shape}")
    structure = np.ones((cfg.morph_kernel, cfg.morph_kernel), dtype=bool)
    out = mask.copy()
    if cfg.dilate_iters > 0:
        out = binary_dilation(out, structure, iterations=cfg.dilate_iters)
    for _ in range(cfg.close_iters):
        grown = binary_dilation(out, structure)
        out = out | binary_erosion(grown, structure, border_value=1)
    return out | mask


def _edge_pad(a: np.ndarray) -> np.ndarray:
    return np.pad(a, 1, mode="edge")


def _inpaint_channel(
    chan: np.ndarray,
    hole: np.ndarray,
    lo: float,
    hi: float,
    radius: int,
    tol: float,
    max_iters: int,
) -> tuple[np.ndarray, bool, int, float]:
    """Evolve hole pixels of one float64 channel to steady state.

    Per iteration: transport the Laplacian along isophote directions, diffuse
    along isophotes (second derivative perpendicular to the gradient), and mix
    in a little isotropic diffusion so featureless neighborhoods still relax.
    """
    dt = 0.2
    transport_weight = 0.05
    iso_weight = 0.25
    max_step = 10.0
    eps = 1e-8

    band = binary_dilation(hole, np.ones((2 * radius + 1,) * 2, dtype=bool)) & ~hole
    work = chan.copy()
    work[hole] = float(chan[band].mean()) if band.any() else 0.5 * (lo + hi)

    converged = False
    iters = 0
    delta = np.inf
    for iters in range(1, max_iters + 1):
        p = _edge_pad(work)
        ix = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
        iy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
        ixx = p[1:-1, 2:] - 2.0 * work + p[1:-1, :-2]
        iyy = p[2:, 1:-1] - 2.0 * work + p[:-2, 1:-1]
        ixy = 0.25 * (p[2:, 2:] - p[2:, :-2] - p[:-2, 2:] + p[:-2, :-2])
        lap = ixx + iyy
        lp = _edge_pad(lap)
        lx = 0.5 * (lp[1:-1, 2:] - lp[1:-1, :-2])
        ly = 0.5 * (lp[2:, 1:-1] - lp[:-2, 1:-1])

        g2 = ix * ix + iy * iy + eps
        transport = (lx * -iy + ly * ix) / np.sqrt(g2)
        isophote_diff = (ixx * iy * iy - 2.0 * ixy * ix * iy + iyy * ix * ix) / g2
        update = dt * (
            transport_weight * transport
            + (1.0 - iso_weight) * isophote_diff
            + iso_weight * lap
        )
        np.clip(update, -max_step, max_step, out=update)

        new_vals = np.clip(work[hole] + update[hole], lo, hi)
        delta = float(np.abs(new_vals - work[hole]).max())
        work[hole] = new_vals
        if delta < tol:
            converged = True
            break
    return work, converged, iters, delta


def inpaint_navier_stokes(
    img: np.ndarray,
    mask: np.ndarray,
    radius: int = 3,
    tol: float = 1e-3,
    max_iters: int = 2000,
) -> InpaintResult:
    """Fill masked pixels by the isophote-transport PDE, per channel.

    Only masked pixels are rewritten; everything else is a bit-exact copy of
    the input.  A mask covering the whole image is an error.  Hitting
    ``max_iters`` before the update drops below ``tol`` is reported through
    ``converged=False`` rather than raised.
    """
    if mask.shape != img.shape[:2]:
        raise DataError(f"mask shape {mask.shape} does not match image {img.shape[:2]}")
    if not mask.any():
        return InpaintResult(image=img.copy(), converged=True, iterations=0, max_update=0.0)
    if mask.all():
        raise DataError("mask covers the entire image; nothing to inpaint from")

    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    margin = radius + 4
    r0, r1 = max(0, rows[0] - margin), min(img.shape[0], rows[-1] + margin + 1)
    c0, c1 = max(0, cols[0] - margin), min(img.shape[1], cols[-1] + margin + 1)

    out = img.copy()
    sub_mask = mask[r0:r1, c0:c1]
    channels = 1 if img.ndim == 2 else img.shape[2]
    converged = True
    worst_iters = 0
    worst_delta = 0.0
    for c in range(channels):
        full_chan = img[:, :, c] if img.ndim == 3 else img
        chan = full_chan[r0:r1, c0:c1].astype(np.float64)
        unmasked = full_chan[~mask].astype(np.float64)
        lo, hi = float(unmasked.min()), float(unmasked.max())
        filled, ok, iters, delta = _inpaint_channel(
            chan, sub_mask, lo, hi, radius, tol, max_iters
        )
        converged &= ok
        worst_iters = max(worst_iters, iters)
        worst_delta = max(worst_delta, delta)
        values = np.clip(np.rint(filled[sub_mask]), lo, hi)
        if img.ndim == 3:
            out[r0:r1, c0:c1, c][sub_mask] = values.astype(img.dtype)
        else:
            out[r0:r1, c0:c1][sub_mask] = values.astype(img.dtype)
    return InpaintResult(
        image=out, converged=converged, iterations=worst_iters, max_update=worst_delta
    )


def scrub_image(img: np.ndarray, cfg: ScrubConfig | None = None) -> ScrubResult:
    """Run crop -> detect -> refine -> inpaint on one image."""
    cfg = cfg or ScrubConfig()
    cropped = crop_header(img, cfg.crop_fraction)
    raw = detect_annotation_mask(cropped, cfg)
    refined = refine_mask(raw, cfg) if raw.any() else raw
    if not refined.any():
        return ScrubResult(image=cropped, mask=refined, converged=True, iterations=0)
    res = inpaint_navier_stokes(
        cropped,
        refined,
        radius=cfg.inpaint_radius,
        tol=cfg.inpaint_tol,
        max_iters=cfg.inpaint_max_iters,
    )
    return ScrubResult(
        image=res.image, mask=refined, converged=res.converged, iterations=res.iterations
    )
