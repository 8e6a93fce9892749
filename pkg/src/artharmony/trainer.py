"""Optimization loop, ablation switches, checkpointing and metrics logging."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, asdict

import torch

from .encoder import (
    background_style,
    foreground_style,
    image_to_tensor,
    mask_to_tensor,
    object_feature,
    parameter_checksum,
)
from .harmonizer import HarmonizerModel, hallucinate_style, load_checkpoint, save_checkpoint
from .losses import loss_content, loss_obj, loss_style, loss_total, make_report

ABLATIONS = (
    "FULL",
    "NO_OBADAIN",
    "NO_OBJECT_FEATURE",
    "NO_L_OBJ",
    "NO_L_MAP_P",
    "NO_L_MAP_C",
)

__all__ = [
    "ABLATIONS", "TrainConfig", "TrainError", "train",
    "save_checkpoint", "load_checkpoint", "load_config", "save_config",
]


class TrainError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    steps: int = 300
    lr: float = 1e-4
    betas: tuple = (0.9, 0.999)
    batch_size: int = 4
    seed: int = 0
    lam: float = 10.0
    width_profile: str = "tiny"
    ablation: str = "FULL"
    checkpoint_every: int = 100
    float64: bool = False

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}")
        self.betas = tuple(self.betas)


def save_config(path, config: TrainConfig) -> None:
    with open(path, "w") as f:
        json.dump(asdict(config), f, indent=2)


def load_config(path) -> TrainConfig:
    with open(path) as f:
        return TrainConfig(**json.load(f))


def _stack_pairs(pairs, dtype):
    comp = torch.cat([image_to_tensor(p.composite, dtype) for p in pairs])
    comp_m = torch.cat([mask_to_tensor(p.composite_mask, dtype) for p in pairs])
    ref = torch.cat([image_to_tensor(p.reference, dtype) for p in pairs])
    ref_m = torch.cat([mask_to_tensor(p.reference_mask, dtype) for p in pairs])
    return comp, comp_m, ref, ref_m


def training_step(model: HarmonizerModel, comp, comp_m, ref, ref_m,
                  ablation: str = "FULL", lam: float = 10.0):
    """One forward pass over a batch; returns (total loss tensor, LossReport)."""
    enc = model.encoder
    use_obj = ablation != "NO_OBJECT_FEATURE"
    mode = "bg" if ablation == "NO_OBADAIN" else "ours"

    out, aux = model.forward_t(comp, comp_m, mode=mode, use_object_feature=use_obj)
    f_c = aux["object_feature"]

    pyr_p = enc(ref)
    f_p = object_feature(pyr_p, ref_m, model.projection)
    gt_styles = [foreground_style(pyr_p, ref_m, l).detach() for l in range(1, 5)]

    zero = out.sum() * 0.0
    obj = zero if ablation == "NO_L_OBJ" else loss_obj(f_p, f_c)

    if ablation == "NO_OBADAIN":
        map_p = zero
        map_c = zero
    else:
        f_p_used = f_p if use_obj else torch.zeros_like(f_p)
        pred_p = [
            hallucinate_style(model.mappers[l - 1],
                              background_style(pyr_p, ref_m, l), f_p_used)
            for l in range(1, 5)
        ]
        map_p = zero if ablation == "NO_L_MAP_P" else sum(
            ((p.cat() - g.cat()) ** 2).flatten(1).sum(1).mean()
            for p, g in zip(pred_p, gt_styles)
        )
        map_c = zero if ablation == "NO_L_MAP_C" else sum(
            ((p.cat() - g.cat()) ** 2).flatten(1).sum(1).mean()
            for p, g in zip(aux["styles"], gt_styles)
        )

    sty = loss_style(out, comp_m, gt_styles, enc)
    con = loss_content(out, comp, enc)
    total = loss_total(obj, map_p, map_c, sty, con, lam=lam)
    return total, make_report(obj, map_p, map_c, sty, con, lam=lam)


def train(model: HarmonizerModel, pairs, config: TrainConfig, out_dir=None):
    """Train on materialized pairs; returns the list of per-step LossReports.

    Writes metrics.jsonl and periodic checkpoints when out_dir is given.
    Aborts on a non-finite loss, reporting the step and last finite report.
    """
    torch.manual_seed(config.seed)
    dtype = torch.float64 if config.float64 else torch.float32
    model.to(dtype)
    enc_sum_before = parameter_checksum(model.encoder)

    comp, comp_m, ref, ref_m = _stack_pairs(pairs, dtype)
    n = comp.shape[0]
    opt = torch.optim.Adam(model.trainable_parameters(), lr=config.lr, betas=config.betas)

    metrics_file = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_config(os.path.join(out_dir, "config.json"), config)
        metrics_file = open(os.path.join(out_dir, "metrics.jsonl"), "w")

    history = []
    try:
        for step in range(1, config.steps + 1):
            idx = [(step - 1) * config.batch_size % n + j for j in range(config.batch_size)]
            idx = [i % n for i in idx]
            total, report = training_step(
                model, comp[idx], comp_m[idx], ref[idx], ref_m[idx],
                ablation=config.ablation, lam=config.lam,
            )
            if not math.isfinite(report.total):
                last = history[-1] if history else None
                raise TrainError(
                    f"non-finite loss at step {step}; last finite report: {last}"
                )
            opt.zero_grad()
            total.backward()
            opt.step()
            history.append(report)
            if metrics_file is not None:
                metrics_file.write(json.dumps({"step": step} | report.to_dict()) + "\n")
            if out_dir is not None and config.checkpoint_every > 0 and step % config.checkpoint_every == 0:
                save_checkpoint(os.path.join(out_dir, f"ckpt_{step:06d}.pt"), model)
    finally:
        if metrics_file is not None:
            metrics_file.close()

    if parameter_checksum(model.encoder) != enc_sum_before:
        raise TrainError("frozen encoder parameters changed during training")
    if out_dir is not None:
        save_checkpoint(os.path.join(out_dir, "ckpt_final.pt"), model)
    return history
