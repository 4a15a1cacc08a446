"""Binary layout rasters: rendering, margin cropping, resizing, similarity.

A document's layout image is built by cropping its boxes to the information
area plus a margin, rasterizing each box as an ink rectangle, and resizing to
a fixed target. Similarity between two equal-sized layout images defaults to
mean squared error (smaller is more similar); SSIM and flattened cosine are
available as alternates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .dataset import BoxRect, Document
from .errors import DimensionMismatch, EmptyBoxList, InvalidTarget, ZeroVector

RESIZE_METHODS = ("lanczos_binarize", "coord_rescale", "bilinear", "lanczos", "area")
METRICS = ("mse", "ssim", "cosine")

DEFAULT_MARGIN = 10
DEFAULT_TARGET = (256, 256)
BINARIZE_THRESHOLD = 128  # on the 0..255 scale, applied after LANCZOS resampling


@dataclass(frozen=True)
class BinaryLayoutImage:
    """Fixed-size {0,1} pixel matrix; 1 is ink. Row-major, shape (height, width).

    ``boxes`` optionally records the source rectangles on this canvas so the
    coordinate-rescale resize can re-rasterize them.
    """

    pixels: np.ndarray
    boxes: tuple[BoxRect, ...] | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 2:
            raise ValueError(f"layout image must be 2-D, got shape {px.shape}")
        if not np.isin(px, (0, 1)).all():
            raise ValueError("layout image pixels must be 0 or 1")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def ink_count(self) -> int:
        return int(self.pixels.sum())


@dataclass(frozen=True)
class GrayLayoutImage:
    """Non-binary resize result; pixel values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2:
            raise ValueError(f"layout image must be 2-D, got shape {px.shape}")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class LayoutSimilarityScore:
    """Metric value plus a higher-is-better ordering key.

    For mse the key is the negated value, which ranks identical images
    (mse 0) strictly first without evaluating the inverse-mse form at zero.
    """

    metric: str
    value: float

    @property
    def comparable(self) -> float:
        return -self.value if self.metric == "mse" else self.value


def render_layout(boxes: Sequence[BoxRect], page: tuple[int, int]) -> BinaryLayoutImage:
    """Rasterize boxes as ink on a page-sized canvas.

    Rectangles are half-open: pixel (x, y) is ink iff some box has
    x1 <= x < x2 and y1 <= y < y2. Overlaps are not double-counted.
    """
    if not boxes:
        raise EmptyBoxList("render_layout needs at least one box")
    w, h = page
    if w < 1 or h < 1:
        raise InvalidTarget(f"page size {w}x{h} is not positive")
    canvas = np.zeros((h, w), dtype=np.uint8)
    for box in boxes:
        if box.x2 > w or box.y2 > h:
            raise ValueError(f"box {box.as_list()} exceeds page {w}x{h}")
        canvas[box.y1 : box.y2, box.x1 : box.x2] = 1
    return BinaryLayoutImage(canvas, boxes=tuple(boxes))


def information_area(boxes: Sequence[BoxRect]) -> BoxRect:
    """Minimal rectangle containing every box."""
    if not boxes:
        raise EmptyBoxList("information_area needs at least one box")
    return BoxRect(
        min(b.x1 for b in boxes),
        min(b.y1 for b in boxes),
        max(b.x2 for b in boxes),
        max(b.y2 for b in boxes),
    )


def crop_with_margin(
    boxes: Sequence[BoxRect], margin: int = DEFAULT_MARGIN
) -> tuple[list[BoxRect], tuple[int, int]]:
    """Shift boxes into a canvas that leaves ``margin`` pixels around them.

    The crop origin is the information-area corner minus the margin, clamped
    at zero. Returns the shifted boxes (the B-prime substituted into prompts)
    and the canvas size.
    """
    if not boxes:
        raise EmptyBoxList("crop_with_margin needs at least one box")
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    area = information_area(boxes)
    ox = max(0, area.x1 - margin)
    oy = max(0, area.y1 - margin)
    cropped = [b.translate(-ox, -oy) for b in boxes]
    canvas = (area.x2 - ox + margin, area.y2 - oy + margin)
    return cropped, canvas


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def resize_layout(
    img: BinaryLayoutImage,
    target: tuple[int, int] = DEFAULT_TARGET,
    method: str = "lanczos_binarize",
) -> BinaryLayoutImage | GrayLayoutImage:
    """Resize a layout image to ``target`` (width, height).

    lanczos_binarize (default): LANCZOS resampling on the 0/255 scale, then
    threshold at 128 back to {0,1}. coord_rescale: scale the source boxes,
    round half-up, re-rasterize (requires the image to carry its boxes).
    bilinear / lanczos / area: plain resampling, returned as gray values
    in [0, 1].
    """
    tw, th = target
    if tw < 1 or th < 1:
        raise InvalidTarget(f"target size {tw}x{th} is not positive")
    if method not in RESIZE_METHODS:
        raise InvalidTarget(f"unknown resize method {method!r}; known: {RESIZE_METHODS}")

    if method == "coord_rescale":
        if img.boxes is None:
            raise ValueError("coord_rescale needs an image that carries its source boxes")
        sx, sy = tw / img.width, th / img.height
        scaled = [
            BoxRect(
                min(tw, _round_half_up(b.x1 * sx)),
                min(th, _round_half_up(b.y1 * sy)),
                min(tw, _round_half_up(b.x2 * sx)),
                min(th, _round_half_up(b.y2 * sy)),
            )
            for b in img.boxes
        ]
        return render_layout(scaled, (tw, th))

    pil = Image.fromarray(img.pixels * np.uint8(255), mode="L")
    if method == "lanczos_binarize":
        resized = pil.resize((tw, th), Image.Resampling.LANCZOS)
        arr = np.asarray(resized, dtype=np.uint8)
        return BinaryLayoutImage((arr >= BINARIZE_THRESHOLD).astype(np.uint8))
    resamplers = {
        "bilinear": Image.Resampling.BILINEAR,
        "lanczos": Image.Resampling.LANCZOS,
        "area": Image.Resampling.BOX,
    }
    resized = pil.resize((tw, th), resamplers[method])
    return GrayLayoutImage(np.asarray(resized, dtype=np.float64) / 255.0)


def document_layout(
    doc: Document,
    target: tuple[int, int] = DEFAULT_TARGET,
    method: str = "lanczos_binarize",
    margin: int = DEFAULT_MARGIN,
) -> tuple[BinaryLayoutImage | GrayLayoutImage, list[BoxRect]]:
    """Crop, rasterize, and resize one document's boxes.

    Returns the resized layout image and the cropped boxes (B-prime).
    Rasterizing the cropped boxes directly is equivalent to drawing on the
    full page and cropping, up to blank padding where the margin would
    extend past the page edge.
    """
    cropped, canvas = crop_with_margin(doc.boxes(), margin)
    img = render_layout(cropped, canvas)
    return resize_layout(img, target, method), cropped


# --- similarity ---------------------------------------------------------------


def _pixel_matrix(img) -> np.ndarray:
    return np.asarray(img.pixels, dtype=np.float64)


def layout_similarity(a, b, metric: str = "mse") -> LayoutSimilarityScore:
    """Score two equal-sized layout images under the named metric.

    mse: mean of squared pixel differences, smaller is better. cosine: images
    flattened row-major, then cosine similarity. ssim: single-scale SSIM with
    an 11x11 Gaussian window (sigma 1.5) and dynamic range 1.
    """
    u, v = _pixel_matrix(a), _pixel_matrix(b)
    if u.shape != v.shape:
        raise DimensionMismatch(f"layout images differ in size: {u.shape} vs {v.shape}")
    if metric == "mse":
        value = float(np.mean((u - v) ** 2))
    elif metric == "cosine":
        fu, fv = u.ravel(), v.ravel()
        nu, nv = float(np.linalg.norm(fu)), float(np.linalg.norm(fv))
        if nu == 0.0 or nv == 0.0:
            raise ZeroVector("cosine layout similarity is undefined for a blank image")
        value = float(np.dot(fu, fv) / (nu * nv))
    elif metric == "ssim":
        value = _ssim(u, v)
    else:
        raise ValueError(f"unknown metric {metric!r}; known: {METRICS}")
    return LayoutSimilarityScore(metric=metric, value=value)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2
    coords = np.arange(size) - half
    one_d = np.exp(-(coords**2) / (2 * sigma**2))
    kernel = np.outer(one_d, one_d)
    return kernel / kernel.sum()

def _windowed_mean(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    windows = np.lib.stride_tricks.sliding_window_view(x, kernel.shape)
    return np.einsum("ijkl,kl->ij", windows, kernel)


def _ssim(u: np.ndarray, v: np.ndarray, window: int = 11, sigma: float = 1.5) -> float:
    """Mean SSIM over all fully interior Gaussian windows, dynamic range 1."""
    c1, c2 = 0.01**2, 0.03**2
    size = min(window, *u.shape)
    if size % 2 == 0:
        size -= 1
    kernel = _gaussian_kernel(size, sigma)
    mu_u = _windowed_mean(u, kernel)
    mu_v = _windowed_mean(v, kernel)
    var_u = _windowed_mean(u * u, kernel) - mu_u**2
    var_v = _windowed_mean(v * v, kernel) - mu_v**2
    cov = _windowed_mean(u * v, kernel) - mu_u * mu_v
    num = (2 * mu_u * mu_v + c1) * (2 * cov + c2)
    den = (mu_u**2 + mu_v**2 + c1) * (var_u + var_v + c2)
    return float(np.mean(num / den))


# --- debug export ---------------------------------------------------------------


def write_pgm(img: BinaryLayoutImage, path: str | Path) -> None:
    """Write a binary (P5) PGM; ink pixels are black (0), background white."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    gray = np.where(img.pixels > 0, 0, 255).astype(np.uint8)
    with path.open("wb") as fh:
        fh.write(f"P5\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())


def export_layout_pgm(img: BinaryLayoutImage, directory: str | Path, doc_id: str) -> Path:
    """Debug export under the ``<doc_id>.layout.pgm`` naming pattern."""
    path = Path(directory) / f"{doc_id}.layout.pgm"
    write_pgm(img, path)
    return path
