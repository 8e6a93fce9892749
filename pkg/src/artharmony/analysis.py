"""Diagnostics: patch-style locality, mode comparison renders, FLOPs/latency.

The locality experiment splits an image into an n-by-n grid, summarizes each
patch by the concatenated per-stage (mean, std) of its encoder features, and
reports pairwise cosine similarity: nearby regions of one painting can carry
very different styles.
"""

from __future__ import annotations

import json
import time

import numpy as np
import torch
import torch.nn as nn

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .encoder import extract_features, foreground_style, image_to_tensor, mask_to_tensor
from .harmonizer import HarmonizerModel, harmonize
from .imagecore import as_image, as_mask, patch_grid, save_image


class AnalysisError(ValueError):
    pass


def patch_style_vector(enc, patch) -> np.ndarray:
    """Concatenated (mu, sigma) over all four stages, global stats."""
    pyr = extract_features(enc, patch)
    parts = []
    for stage in pyr:
        mu = stage.mean(dim=(-1, -2))
        sigma = torch.sqrt(stage.var(dim=(-1, -2), unbiased=False) + 1e-8)
        parts.extend([mu[0], sigma[0]])
    return torch.cat(parts).double().numpy()


def locality_map(enc, img, n: int = 4, metric: str = "cosine"):
    """Pairwise patch-style similarity; returns (n^2 x n^2 matrix, patches)."""
    img = as_image(img)
    h, w = img.shape[:2]
    if h // n < 8 or w // n < 8:
        raise AnalysisError(f"image {h}x{w} too small for {n}x{n} patches of >= 8x8")
    # crop so each tile size is a multiple of 8 (encoder stride requirement)
    th = 8 * ((h // n) // 8)
    tw = 8 * ((w // n) // 8)
    y0, x0 = (h - th * n) // 2, (w - tw * n) // 2
    patches = patch_grid(img[y0 : y0 + th * n, x0 : x0 + tw * n], n)
    vecs = np.stack([patch_style_vector(enc, p) for p in patches])
    if metric in ("cosine", "cosine_raw"):
        if metric == "cosine":
            # center per dimension across patches: post-activation stats are
            # all positive, and raw cosine saturates near 1 for every pair
            vecs = vecs - vecs.mean(axis=0, keepdims=True)
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
        unit = vecs / np.maximum(norms, 1e-12)
        sim = unit @ unit.T
        np.fill_diagonal(sim, 1.0)
    elif metric == "neg_l2":
        d2 = ((vecs[:, None, :] - vecs[None, :, :]) ** 2).sum(-1)
        sim = -d2
    else:
        raise AnalysisError(f"unknown metric {metric!r}")
    return sim, patches


def render_locality_heatmaps(sim: np.ndarray, n: int, out_prefix: str) -> list:
    """One heatmap PNG per query patch; returns the written paths."""
    paths = []
    for q in range(n * n):
        fig, ax = plt.subplots(figsize=(3, 3))
        ax.imshow(sim[q].reshape(n, n), vmin=-1, vmax=1, cmap="viridis")
        ax.set_title(f"query patch {q}")
        ax.axis("off")
        path = f"{out_prefix}_q{q:02d}.png"
        fig.savefig(path, bbox_inches="tight")
        plt.close(fig)
        paths.append(path)
    return paths


def compare_modes(model: HarmonizerModel, composite, mask,
                  reference=None, reference_mask=None, out_path=None):
    """Render [composite | BG | RO? | OURS] side by side.

    RO (reference-object style) is included when a reference image + mask are
    given; its per-stage styles are measured on the reference object and fed
    through external mode.
    """
    composite = as_image(composite)
    mask = as_mask(mask)
    dtype = next(model.decoder.parameters()).dtype
    panels = {"composite": composite}
    panels["bg"] = harmonize(model, composite, mask, mode="bg")[0]
    if reference is not None:
        if reference_mask is None:
            raise AnalysisError("reference image given without reference mask")
        with torch.no_grad():
            ref_pyr = model.encoder(image_to_tensor(reference, dtype))
        ref_mask_t = mask_to_tensor(reference_mask, dtype)
        styles = [foreground_style(ref_pyr, ref_mask_t, l) for l in range(1, 5)]
        panels["ro"] = harmonize(model, composite, mask, mode="external",
                                 external=styles)[0]
    panels["ours"] = harmonize(model, composite, mask, mode="ours")[0]
    if out_path is not None:
        sep = np.ones((composite.shape[0], 4, 3))
        tiles = []
        for i, p in enumerate(panels.values()):
            if i:
                tiles.append(sep)
            tiles.append(p)
        save_image(out_path, np.concatenate(tiles, axis=1))
    return panels


def count_macs(module: nn.Module, run) -> int:
    """Analytic multiply-accumulate count for all conv/linear layers executed
    by `run(module)`; depends only on architecture and input size."""
    macs = [0]

    def hook(layer, inputs, output):
        if isinstance(layer, nn.Conv2d):
            kh, kw = layer.kernel_size
            cin = layer.in_channels // layer.groups
            macs[0] += kh * kw * cin * layer.out_channels * output.shape[-1] * output.shape[-2]
        elif isinstance(layer, nn.Linear):
            macs[0] += layer.in_features * layer.out_features * int(np.prod(output.shape[:-1]))

    handles = [
        m.register_forward_hook(hook)
        for m in module.modules()
        if isinstance(m, (nn.Conv2d, nn.Linear))
    ]
    try:
        with torch.no_grad():
            run(module)
    finally:
        for h in handles:
            h.remove()
    return macs[0]


def flops_report(model: HarmonizerModel, size: int = 256, latency_runs: int = 100,
                 out_path=None) -> dict:
    """Analytic op counts plus wall-clock latency for one harmonization pass.

    gmacs counts one multiply-accumulate as a single operation (the
    convention behind commonly reported "FLOPs" figures for this kind of
    network); gflops doubles it. Latency is the mean over `latency_runs`
    passes after one warmup.
    """
    dtype = next(model.decoder.parameters()).dtype
    comp = torch.rand(1, 3, size, size, dtype=dtype)
    mask = torch.zeros(1, 1, size, size, dtype=dtype)
    mask[..., size // 4 : 3 * size // 4, size // 4 : 3 * size // 4] = 1.0

    def run(m):
        m.forward_t(comp, mask, mode="ours")

    macs = count_macs(model, run)
    with torch.no_grad():
        model.forward_t(comp, mask, mode="ours")
        t0 = time.perf_counter()
        for _ in range(latency_runs):
            model.forward_t(comp, mask, mode="ours")
        elapsed = time.perf_counter() - t0
    report = {
        "profile": model.profile,
        "size": size,
        "gmacs": macs / 1e9,
        "gflops": 2 * macs / 1e9,
        "mean_latency_s": elapsed / max(1, latency_runs),
        "latency_runs": latency_runs,
    }
    if out_path is not None:
        with open(out_path, "w") as f:
            json.dump(report, f, indent=2)
    return report
