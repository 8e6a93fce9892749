"""Training objectives for the harmonization network.

All norms are plain sums of squared entries per item; batched inputs are
averaged over the batch dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .encoder import StyleVector, masked_stats, resample_mask_t

DEFAULT_LAMBDA = 10.0


class LossError(ValueError):
    pass


def _sq_norm(x: torch.Tensor) -> torch.Tensor:
    """Sum of squares per item, averaged over the leading batch dim."""
    if x.dim() <= 1:
        return (x ** 2).sum()
    return (x ** 2).flatten(1).sum(dim=1).mean()


@dataclass
class LossReport:
    obj: float
    map_p: float
    map_c: float
    sty: float
    con: float
    total: float
    lam: float = DEFAULT_LAMBDA

    def to_dict(self) -> dict:
        return {
            "obj": self.obj,
            "map_p": self.map_p,
            "map_c": self.map_c,
            "sty": self.sty,
            "con": self.con,
            "total": self.total,
            "lambda": self.lam,
        }


def loss_obj(f_p: torch.Tensor, f_c: torch.Tensor) -> torch.Tensor:
    """Squared L2 distance pulling the two domains' object features together."""
    if f_p.shape != f_c.shape:
        raise LossError(f"object feature shapes differ: {f_p.shape} vs {f_c.shape}")
    return _sq_norm(f_p - f_c)


def _style_sq(pred: list, gt: list) -> torch.Tensor:
    if len(pred) != 4 or len(gt) != 4:
        raise LossError("expected style vectors for exactly 4 stages")
    total = 0.0
    for p, g in zip(pred, gt):
        total = total + _sq_norm(p.cat() - g.cat())
    return total


def loss_map_p(pred: list, gt: list) -> torch.Tensor:
    """Supervises the hallucinated reference-branch styles with the measured
    reference-object styles, summed over the four stages."""
    return _style_sq(pred, gt)


def loss_map_c(pred: list, gt_ref: list) -> torch.Tensor:
    """Same contract as loss_map_p, for the composite-branch predictions."""
    return _style_sq(pred, gt_ref)


def loss_style(harmonized: torch.Tensor, fg_mask: torch.Tensor,
               gt_ref: list, enc) -> torch.Tensor:
    """Masked style distance between the harmonized foreground and the
    reference-object style, over all four encoder stages."""
    if len(gt_ref) != 4:
        raise LossError("expected style vectors for exactly 4 stages")
    pyr = enc(harmonized)
    total = 0.0
    for l, stage in enumerate(pyr):
        m = resample_mask_t(fg_mask, stage.shape[-2], stage.shape[-1])
        stats = masked_stats(stage, m)
        g = gt_ref[l]
        total = total + _sq_norm(stats.mu - g.mu) + _sq_norm(stats.sigma - g.sigma)
    return total


def loss_content(harmonized: torch.Tensor, composite: torch.Tensor, enc) -> torch.Tensor:
    """Deepest-stage feature distance keeping the foreground content intact."""
    f_h = enc(harmonized)[3]
    f_c = enc(composite)[3]
    return _sq_norm(f_h - f_c)


def loss_total(obj, map_p, map_c, sty, con, lam: float = DEFAULT_LAMBDA):
    """Weighted sum; the map terms carry weight lambda (default 10)."""
    return obj + lam * (map_p + map_c) + sty + con


def make_report(obj, map_p, map_c, sty, con, lam: float = DEFAULT_LAMBDA) -> LossReport:
    def val(x):
        return float(x.detach()) if torch.is_tensor(x) else float(x)

    parts = [val(obj), val(map_p), val(map_c), val(sty), val(con)]
    total = parts[0] + lam * (parts[1] + parts[2]) + parts[3] + parts[4]
    return LossReport(*parts, total=total, lam=lam)
