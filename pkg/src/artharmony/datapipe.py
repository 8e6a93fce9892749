"""Training pair construction and a procedural desk-scale dataset.

Toy paintings are built from four-quadrant color/texture fields with a
painted shape per object slot. Every manifest entry is a self-paste: the
photographic object is the painting's own crop, so the reference style is
exactly attainable and the composite reproduces the reference.

Paintings come in background-sharing pairs (same quadrant field and object
placement, different object colors), which makes the object feature genuinely
informative: background style alone cannot predict both object styles.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .imagecore import (
    BBox,
    ManifestEntry,
    composite_paste,
    load_image,
    load_mask,
    read_manifest,
    save_image,
    save_mask,
    write_manifest,
)

SHAPE_NAMES = ("circle", "square", "triangle")


class DatapipeError(ValueError):
    pass


@dataclass
class TrainingPair:
    composite: np.ndarray
    composite_mask: np.ndarray
    reference: np.ndarray
    reference_mask: np.ndarray
    entry: ManifestEntry


def build_pairs(manifest_path, seed: int | None = None) -> list:
    """Materialize (composite, reference) training pairs from a manifest.

    Order is manifest order, or a seeded shuffle when a seed is given.
    """
    entries = read_manifest(manifest_path, check_files=True)
    root = os.path.dirname(os.path.abspath(manifest_path))
    order = list(range(len(entries)))
    if seed is not None:
        np.random.default_rng(seed).shuffle(order)
    pairs = []
    for i in order:
        e = entries[i]
        try:
            painting = load_image(os.path.join(root, e.painting_path))
            ref_mask = load_mask(os.path.join(root, e.reference_mask_path))
            obj = load_image(os.path.join(root, e.object_image_path))
            obj_mask = load_mask(os.path.join(root, e.object_mask_path))
            composite, comp_mask = composite_paste(painting, obj, obj_mask, e.reference_bbox)
        except Exception as exc:
            raise DatapipeError(f"entry {i}: {exc}") from exc
        pairs.append(TrainingPair(composite, comp_mask, painting, ref_mask, e))
    return pairs


def dataset_stats(entries) -> dict:
    """Counts over a manifest: paintings, painterly objects, triplets."""
    paintings = {e.painting_path for e in entries}
    objects = {(e.painting_path, tuple(e.reference_bbox.to_list())) for e in entries}
    n_obj = len(objects)
    n_trip = len(entries)
    return {
        "num_paintings": len(paintings),
        "num_painterly_objects": n_obj,
        "num_triplets": n_trip,
        "avg_refs_per_object": (n_trip / n_obj) if n_obj else 0.0,
    }


def _quadrant_background(rng: np.random.Generator, size: int) -> np.ndarray:
    """Four-quadrant painting background with distinct per-region styles."""
    img = np.zeros((size, size, 3))
    h = size // 2
    yy, xx = np.mgrid[0:h, 0:h]
    for qi, (y0, x0) in enumerate([(0, 0), (0, h), (h, 0), (h, h)]):
        base = rng.uniform(0.1, 0.9, size=3)
        grad_dir = rng.uniform(-1, 1, size=2)
        grad = (grad_dir[0] * yy + grad_dir[1] * xx) / (2.0 * h)
        strokes = 0.08 * np.sin(2 * np.pi * (yy * rng.uniform(0.05, 0.2)
                                             + xx * rng.uniform(0.0, 0.05)))
        noise = rng.normal(0.0, 0.03, size=(h, h))
        field = grad * 0.25 + strokes + noise
        tile = base[None, None, :] + field[..., None] * rng.uniform(0.5, 1.5, size=3)
        img[y0 : y0 + h, x0 : x0 + h] = tile
    return np.clip(img, 0.0, 1.0)


def _shape_mask(shape: str, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2.0
    if shape == "circle":
        return ((yy - c) ** 2 + (xx - c) ** 2 <= (0.42 * size) ** 2).astype(float)
    if shape == "square":
        pad = max(1, int(0.12 * size))
        m = np.zeros((size, size))
        m[pad : size - pad, pad : size - pad] = 1.0
        return m
    if shape == "triangle":
        return ((yy >= 0.15 * size) & (np.abs(xx - c) <= 0.45 * (yy - 0.15 * size))).astype(float)
    raise DatapipeError(f"unknown shape {shape!r}")


def generate_toy_dataset(out_dir, seed: int = 0, n_paintings: int = 8,
                         n_objects: int = 8, size: int = 64) -> str:
    """Write a reproducible toy dataset; returns the manifest path."""
    if n_objects < n_paintings:
        raise DatapipeError("need at least one object per painting")
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    per_painting = n_objects // n_paintings
    extra = n_objects % n_paintings

    # background + object placement shared across each pair of paintings
    backgrounds, placements = [], []
    for b in range((n_paintings + 1) // 2):
        bg_rng = np.random.default_rng(seed * 1000 + 17 + b)
        backgrounds.append(_quadrant_background(bg_rng, size))
        slots = per_painting + (1 if 2 * b < extra else 0)
        boxes = []
        side = max(8, size // 3)
        for s in range(slots):
            x0 = int(bg_rng.integers(0, size - side))
            y0 = int(bg_rng.integers(0, size - side))
            boxes.append(BBox(x0, y0, x0 + side, y0 + side))
        placements.append(boxes)

    entries = []
    obj_count = 0
    for p in range(n_paintings):
        bg = backgrounds[p // 2].copy()
        boxes = list(placements[p // 2])
        # distribute leftover object slots round-robin
        want = per_painting + (1 if p < extra else 0)
        boxes = boxes[:want] if want <= len(boxes) else boxes + [
            BBox(size // 4, size // 4, size // 4 + size // 3, size // 4 + size // 3)
        ] * (want - len(boxes))
        painting_name = f"painting_{p:03d}.png"
        slot_records = []
        for bbox in boxes:
            shape_id = int(rng.integers(0, len(SHAPE_NAMES)))
            color = rng.uniform(0.05, 0.95, size=3)
            side = bbox.width
            m = _shape_mask(SHAPE_NAMES[shape_id], side)
            texture = rng.normal(0.0, 0.02, size=(side, side, 3))
            patch = np.clip(color[None, None, :] + texture, 0.0, 1.0)
            region = bg[bbox.y0 : bbox.y1, bbox.x0 : bbox.x1]
            bg[bbox.y0 : bbox.y1, bbox.x0 : bbox.x1] = (
                m[..., None] * patch + (1.0 - m[..., None]) * region
            )
            slot_records.append((bbox, m, shape_id))
        save_image(os.path.join(out_dir, painting_name), bg)

        for bbox, m, shape_id in slot_records:
            obj_name = f"object_{obj_count:03d}.png"
            obj_mask_name = f"object_{obj_count:03d}_mask.png"
            ref_mask_name = f"refmask_{obj_count:03d}.png"
            crop = bg[bbox.y0 : bbox.y1, bbox.x0 : bbox.x1]
            save_image(os.path.join(out_dir, obj_name), crop)
            save_mask(os.path.join(out_dir, obj_mask_name), m)
            full_mask = np.zeros((size, size))
            full_mask[bbox.y0 : bbox.y1, bbox.x0 : bbox.x1] = m
            save_mask(os.path.join(out_dir, ref_mask_name), full_mask)
            entries.append(
                ManifestEntry(
                    painting_path=painting_name,
                    reference_bbox=bbox,
                    reference_mask_path=ref_mask_name,
                    object_image_path=obj_name,
                    object_mask_path=obj_mask_name,
                    category_label=shape_id,
                    split="train",
                )
            )
            obj_count += 1

    manifest_path = os.path.join(out_dir, "manifest.jsonl")
    write_manifest(manifest_path, entries)
    return manifest_path
