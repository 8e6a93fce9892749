"""Frozen multi-scale convolutional encoder and masked feature statistics.

The encoder mirrors the first four stages of a VGG-style classification
network (outputs at the first ReLU of each stage), so stage l has spatial
size input/2^(l-1). Two width profiles exist: "full" (64, 128, 256, 512)
and "tiny" (8, 16, 32, 64) for desk-scale tests with seeded frozen weights.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .imagecore import as_image, as_mask

VAR_EPS = 1e-8

# channel statistics of the standard pretrained-classifier input pipeline
INPUT_MEAN = (0.485, 0.456, 0.406)
INPUT_STD = (0.229, 0.224, 0.225)

PROFILES = {
    "full": (64, 128, 256, 512),
    "tiny": (8, 16, 32, 64),
}

ENCODER_FORMAT = "artharmony-encoder"
ENCODER_VERSION = 1


class EncoderError(ValueError):
    pass


@dataclass
class StyleVector:
    """Per-channel (mean, std) of one encoder stage over a region."""

    mu: torch.Tensor
    sigma: torch.Tensor

    def cat(self) -> torch.Tensor:
        return torch.cat([self.mu, self.sigma], dim=-1)

    @staticmethod
    def from_cat(vec: torch.Tensor) -> "StyleVector":
        c = vec.shape[-1] // 2
        return StyleVector(vec[..., :c], vec[..., c:])

    def detach(self) -> "StyleVector":
        return StyleVector(self.mu.detach(), self.sigma.detach())


def _conv(cin, cout):
    return nn.Conv2d(cin, cout, kernel_size=3, padding=1)


class FeatureEncoder(nn.Module):
    """Four-stage fixed feature extractor.

    Stage layout (VGG-19 up to the fourth stage's first activation):
      stage1: conv(3, w1)
      stage2: conv(w1, w1), pool, conv(w1, w2)
      stage3: conv(w2, w2), pool, conv(w2, w3)
      stage4: conv(w3, w3) x3, pool, conv(w3, w4)
    """

    def __init__(self, profile: str = "tiny", seed: int = 0):
        super().__init__()
        if profile not in PROFILES:
            raise EncoderError(f"unknown profile {profile!r}")
        self.profile = profile
        w1, w2, w3, w4 = PROFILES[profile]
        self.widths = (w1, w2, w3, w4)
        self.stage1 = nn.Sequential(_conv(3, w1), nn.ReLU())
        self.stage2 = nn.Sequential(
            _conv(w1, w1), nn.ReLU(), nn.MaxPool2d(2), _conv(w1, w2), nn.ReLU()
        )
        self.stage3 = nn.Sequential(
            _conv(w2, w2), nn.ReLU(), nn.MaxPool2d(2), _conv(w2, w3), nn.ReLU()
        )
        self.stage4 = nn.Sequential(
            _conv(w3, w3), nn.ReLU(),
            _conv(w3, w3), nn.ReLU(),
            _conv(w3, w3), nn.ReLU(),
            nn.MaxPool2d(2), _conv(w3, w4), nn.ReLU(),
        )
        gen = torch.Generator().manual_seed(seed)
        for p in self.parameters():
            if p.dim() > 1:
                fan_in = p[0].numel()
                p.data = torch.randn(p.shape, generator=gen) * (2.0 / fan_in) ** 0.5
            else:
                p.data.zero_()
        mean = torch.tensor(INPUT_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(INPUT_STD).view(1, 3, 1, 1)
        self.register_buffer("input_mean", mean)
        self.register_buffer("input_std", std)
        self.requires_grad_(False)
        self.eval()

    def forward(self, x: torch.Tensor) -> list:
        x = (x - self.input_mean) / self.input_std
        f1 = self.stage1(x)
        f2 = self.stage2(f1)
        f3 = self.stage3(f2)
        f4 = self.stage4(f3)
        return [f1, f2, f3, f4]


def build_encoder(profile: str = "tiny", seed: int = 0,
                  dtype: torch.dtype = torch.float32) -> FeatureEncoder:
    enc = FeatureEncoder(profile, seed=seed)
    return enc.to(dtype)


def image_to_tensor(img, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """(H, W, 3) float image in [0,1] -> (1, 3, H, W) tensor."""
    img = as_image(img)
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1)))[None].to(dtype)


def tensor_to_image(t: torch.Tensor) -> np.ndarray:
    """(1, 3, H, W) or (3, H, W) tensor -> (H, W, 3) float image, clipped."""
    if t.dim() == 4:
        t = t[0]
    arr = t.detach().cpu().double().numpy().transpose(1, 2, 0)
    return np.clip(arr, 0.0, 1.0)


def mask_to_tensor(mask, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """(H, W) mask -> (1, 1, H, W) tensor."""
    mask = as_mask(mask)
    return torch.from_numpy(np.ascontiguousarray(mask))[None, None].to(dtype)


def resample_mask_t(mask: torch.Tensor, h: int, w: int) -> torch.Tensor:
    """Area-average a (B, 1, H, W) mask tensor down to (h, w)."""
    if h > mask.shape[-2] or w > mask.shape[-1]:
        raise EncoderError("mask resampling does not upsample")
    return F.adaptive_avg_pool2d(mask, (h, w))


def extract_features(enc: FeatureEncoder, img) -> list:
    """Run the frozen encoder on one image (numpy or (B,3,H,W) tensor)."""
    if not torch.is_tensor(img):
        img = image_to_tensor(img, dtype=next(enc.parameters()).dtype)
    if img.shape[-2] % 8 != 0 or img.shape[-1] % 8 != 0:
        raise EncoderError(
            f"input dims {tuple(img.shape[-2:])} must be divisible by 8"
        )
    with torch.no_grad():
        return enc(img)


def masked_stats(stage: torch.Tensor, mask: torch.Tensor) -> StyleVector:
    """Mask-weighted per-channel mean/std of a (B, C, H, W) feature map.

    mask is (B, 1, H, W) at stage resolution. Biased variance with a 1e-8
    floor so sigma stays differentiable at constant regions.
    """
    if stage.dim() == 3:
        stage = stage[None]
    if mask.dim() == 2:
        mask = mask[None, None]
    if mask.shape[-2:] != stage.shape[-2:]:
        raise EncoderError(
            f"mask {tuple(mask.shape[-2:])} must match stage {tuple(stage.shape[-2:])}"
        )
    total = mask.sum(dim=(-1, -2))
    if (total <= 0).any():
        raise EncoderError("empty region: mask sums to zero")
    mu = (stage * mask).sum(dim=(-1, -2)) / total
    var = (((stage - mu[..., None, None]) ** 2) * mask).sum(dim=(-1, -2)) / total
    sigma = torch.sqrt(var + VAR_EPS)
    return StyleVector(mu, sigma)


def background_style(pyr: list, fg_mask: torch.Tensor, l: int) -> StyleVector:
    """Masked stats of stage l over the region outside the foreground mask."""
    stage = pyr[l - 1]
    h, w = stage.shape[-2:]
    bg = 1.0 - resample_mask_t(fg_mask, h, w)
    if (bg.sum(dim=(-1, -2)) <= 0).any():
        raise EncoderError("empty background: foreground covers entire image")
    return masked_stats(stage, bg)


def foreground_style(pyr: list, fg_mask: torch.Tensor, l: int) -> StyleVector:
    """Masked stats of stage l over the foreground region."""
    stage = pyr[l - 1]
    h, w = stage.shape[-2:]
    fg = resample_mask_t(fg_mask, h, w)
    if (fg.sum(dim=(-1, -2)) <= 0).any():
        raise EncoderError("empty region: mask vanishes at stage resolution")
    return masked_stats(stage, fg)


class ResidualBlock(nn.Module):
    """One residual conv block, C -> C; zeroed second conv gives identity."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = _conv(channels, channels)
        self.conv2 = _conv(channels, channels)

    def forward(self, x):
        return x + self.conv2(F.relu(self.conv1(x)))


def object_feature(pyr: list, fg_mask: torch.Tensor, proj: nn.Module) -> torch.Tensor:
    """Masked average pooling of the projected deepest stage: (B, C4)."""
    stage = proj(pyr[3])
    h, w = stage.shape[-2:]
    m = resample_mask_t(fg_mask, h, w)
    total = m.sum(dim=(-1, -2))
    if (total <= 0).any():
        raise EncoderError("empty region: mask vanishes at the deepest stage")
    return (stage * m).sum(dim=(-1, -2)) / total


def parameter_checksum(module: nn.Module) -> str:
    """Stable hash of all parameters; used to prove the encoder stays frozen."""
    h = hashlib.sha256()
    for name, p in sorted(module.named_parameters()):
        h.update(name.encode())
        h.update(p.detach().cpu().double().numpy().tobytes())
    return h.hexdigest()


def save_encoder(path, enc: FeatureEncoder) -> None:
    torch.save(
        {
            "format": ENCODER_FORMAT,
            "version": ENCODER_VERSION,
            "profile": enc.profile,
            "state": enc.state_dict(),
        },
        path,
    )


def load_encoder(path) -> FeatureEncoder:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if blob.get("format") != ENCODER_FORMAT or blob.get("version") != ENCODER_VERSION:
        raise EncoderError("unrecognized encoder checkpoint format/version")
    enc = FeatureEncoder(blob["profile"])
    enc.load_state_dict(blob["state"])
    enc.requires_grad_(False)
    enc.eval()
    return enc
