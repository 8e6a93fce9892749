"""Image/mask primitives: compositing, mask resampling, patch grids, manifest I/O.

Images are float arrays of shape (H, W, 3) with values in [0, 1]; masks are
(H, W) floats in [0, 1]. Everything here is a pure function over value data.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict, field

import numpy as np
from PIL import Image as PILImage

MANIFEST_VERSION = 1


class ImageError(ValueError):
    """Raised on invalid image/mask/bbox arguments."""


class ManifestError(ValueError):
    """Raised on malformed manifest files or entries."""


def as_image(arr) -> np.ndarray:
    """Validate and return a float64 (H, W, 3) image in [0, 1]."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageError(f"image must be (H, W, 3), got {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ImageError("image must have positive height and width")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ImageError("image values must lie in [0, 1]")
    return img


def as_mask(arr) -> np.ndarray:
    """Validate and return a float64 (H, W) mask in [0, 1]."""
    m = np.asarray(arr, dtype=np.float64)
    if m.ndim != 2:
        raise ImageError(f"mask must be (H, W), got {m.shape}")
    if m.min() < 0.0 or m.max() > 1.0:
        raise ImageError("mask values must lie in [0, 1]")
    return m


@dataclass(frozen=True)
class BBox:
    """Half-open pixel box: columns [x0, x1), rows [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ImageError(f"degenerate bbox {self}")
        if self.x0 < 0 or self.y0 < 0:
            raise ImageError(f"bbox has negative origin: {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def validate_for(self, height: int, width: int) -> None:
        if self.x1 > width or self.y1 > height:
            raise ImageError(
                f"bbox {self} exceeds image bounds ({height}x{width})"
            )

    def to_list(self) -> list:
        return [self.x0, self.y0, self.x1, self.y1]


def load_image(path) -> np.ndarray:
    """Read an 8-bit PNG as a float RGB image in [0, 1]."""
    with PILImage.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def save_image(path, img) -> None:
    img = as_image(img)
    data = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(data, mode="RGB").save(path, format="PNG")


def load_mask(path) -> np.ndarray:
    with PILImage.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def save_mask(path, mask) -> None:
    mask = as_mask(mask)
    data = np.clip(np.round(mask * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(data, mode="L").save(path, format="PNG")


def _resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Channel-wise bilinear resize of a float array via PIL."""
    if arr.shape[:2] == (out_h, out_w):
        return arr.copy()
    if arr.ndim == 2:
        im = PILImage.fromarray(arr.astype(np.float32), mode="F")
        out = im.resize((out_w, out_h), resample=PILImage.BILINEAR)
        return np.asarray(out, dtype=np.float64)
    chans = [_resize_bilinear(arr[..., c], out_h, out_w) for c in range(arr.shape[2])]
    return np.stack(chans, axis=-1)


def composite_paste(background, obj, obj_mask, target: BBox):
    """Paste `obj` (under `obj_mask`) into `target` on `background`.

    The object is scaled by min(box_w/obj_w, box_h/obj_h), keeping aspect
    ratio, and centered in the box. Returns (composite, placed_mask); pixels
    where placed_mask is zero are the untouched background.
    """
    background = as_image(background)
    obj = as_image(obj)
    obj_mask = as_mask(obj_mask)
    if obj_mask.shape != obj.shape[:2]:
        raise ImageError("object mask must match object size")
    if obj_mask.sum() == 0:
        raise ImageError("empty foreground")
    bg_h, bg_w = background.shape[:2]
    target.validate_for(bg_h, bg_w)

    obj_h, obj_w = obj.shape[:2]
    s = min(target.width / obj_w, target.height / obj_h)
    new_w = max(1, int(round(obj_w * s)))
    new_h = max(1, int(round(obj_h * s)))
    scaled_obj = np.clip(_resize_bilinear(obj, new_h, new_w), 0.0, 1.0)
    scaled_mask = np.clip(_resize_bilinear(obj_mask, new_h, new_w), 0.0, 1.0)

    y = target.y0 + (target.height - new_h) // 2
    x = target.x0 + (target.width - new_w) // 2

    composite = background.copy()
    placed_mask = np.zeros((bg_h, bg_w), dtype=np.float64)
    region = composite[y : y + new_h, x : x + new_w]
    m = scaled_mask[..., None]
    composite[y : y + new_h, x : x + new_w] = m * scaled_obj + (1.0 - m) * region
    placed_mask[y : y + new_h, x : x + new_w] = scaled_mask
    return composite, placed_mask


def resample_mask(mask, target_h: int, target_w: int) -> np.ndarray:
    """Area-average a mask down to (target_h, target_w)."""
    mask = as_mask(mask)
    h, w = mask.shape
    if target_h > h or target_w > w:
        raise ImageError("resample_mask does not upsample")
    if target_h < 1 or target_w < 1:
        raise ImageError("target size must be positive")
    if h % target_h == 0 and w % target_w == 0:
        fh, fw = h // target_h, w // target_w
        out = mask.reshape(target_h, fh, target_w, fw).mean(axis=(1, 3))
    else:
        im = PILImage.fromarray(mask.astype(np.float32), mode="F")
        out = np.asarray(
            im.resize((target_w, target_h), resample=PILImage.BOX), dtype=np.float64
        )
    return np.clip(out, 0.0, 1.0)


def patch_grid(img, n: int = 4) -> list:
    """Split an image into n*n equal tiles, row-major.

    If the image size is not divisible by n, it is center-cropped to the
    nearest multiple first.
    """
    img = as_image(img)
    if n <= 0:
        raise ImageError("patch count must be positive")
    h, w = img.shape[:2]
    ch, cw = (h // n) * n, (w // n) * n
    if ch == 0 or cw == 0:
        raise ImageError(f"image {h}x{w} too small for a {n}x{n} grid")
    y0, x0 = (h - ch) // 2, (w - cw) // 2
    img = img[y0 : y0 + ch, x0 : x0 + cw]
    th, tw = ch // n, cw // n
    return [
        img[r * th : (r + 1) * th, c * tw : (c + 1) * tw]
        for r in range(n)
        for c in range(n)
    ]


@dataclass
class ManifestEntry:
    """One training triplet: a painting with an annotated reference object
    plus a matching photographic object."""

    painting_path: str
    reference_bbox: BBox
    reference_mask_path: str
    object_image_path: str
    object_mask_path: str
    category_label: int
    split: str = "train"

    def __post_init__(self):
        if isinstance(self.reference_bbox, (list, tuple)):
            self.reference_bbox = BBox(*self.reference_bbox)
        if self.category_label < 0:
            raise ManifestError(f"category_label must be >= 0, got {self.category_label}")
        if self.split not in ("train", "test"):
            raise ManifestError(f"split must be 'train' or 'test', got {self.split!r}")

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["reference_bbox"] = self.reference_bbox.to_list()
        return rec


def write_manifest(path, entries) -> None:
    """Write entries as line-delimited JSON with a version header line."""
    with open(path, "w") as f:
        f.write(json.dumps({"schema": "artharmony-manifest", "version": MANIFEST_VERSION}) + "\n")
        for e in entries:
            f.write(json.dumps(e.to_record()) + "\n")


def read_manifest(path, check_files: bool = False) -> list:
    """Read a manifest; raises ManifestError naming the bad entry index."""
    root = os.path.dirname(os.path.abspath(path))
    with open(path) as f:
        lines = [ln for ln in (ln.strip() for ln in f) if ln]
    if not lines:
        raise ManifestError("empty manifest file")
    header = json.loads(lines[0])
    if header.get("schema") != "artharmony-manifest":
        raise ManifestError("not an artharmony manifest")
    if header.get("version") != MANIFEST_VERSION:
        raise ManifestError(f"unsupported manifest version {header.get('version')}")
    entries = []
    for i, ln in enumerate(lines[1:]):
        try:
            rec = json.loads(ln)
            entry = ManifestEntry(**rec)
        except (json.JSONDecodeError, TypeError, ValueError, ImageError) as exc:
            raise ManifestError(f"entry {i}: {exc}") from exc
        if check_files:
            for key in ("painting_path", "reference_mask_path", "object_image_path", "object_mask_path"):
                p = os.path.join(root, getattr(entry, key))
                if not os.path.exists(p):
                    raise ManifestError(f"entry {i}: missing file {key}={p}")
        entries.append(entry)
    return entries


def split_counts(entries) -> dict:
    counts = {"train": 0, "test": 0}
    for e in entries:
        counts[e.split] += 1
    return counts
