"""Object-aware style hallucination network.

A frozen encoder feeds four skip/bottleneck insertion points where the
foreground features are re-normalized (AdaIN) toward a target style. The
target can be hallucinated by per-stage mapping modules (mode "ours"), taken
straight from the background ("bg"), or supplied by the caller ("external").
A mirrored decoder with skip fusion reconstructs the image, and a predicted
soft blend mask combines it with the composite; the background region of the
output is always the untouched composite, bitwise.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .encoder import (
    FeatureEncoder,
    PROFILES,
    ResidualBlock,
    StyleVector,
    background_style,
    build_encoder,
    image_to_tensor,
    mask_to_tensor,
    masked_stats,
    object_feature,
    resample_mask_t,
    tensor_to_image,
)
from .imagecore import as_image, as_mask

MODES = ("ours", "bg", "external")

ADAIN_EPS = 1e-5
SIGMA_FLOOR = 1e-5

CKPT_FORMAT = "artharmony-harmonizer"
CKPT_VERSION = 1


class HarmonizerError(ValueError):
    pass


class MappingModule(nn.Module):
    """Maps (background style, object feature) to a hallucinated object style.

    Input projection to the style width, three residual MLP blocks, then an
    output head. The sigma half goes through softplus + 1e-5 so predicted
    stds are strictly positive.
    """

    def __init__(self, style_channels: int, feature_dim: int):
        super().__init__()
        d = 2 * style_channels
        self.style_channels = style_channels
        self.feature_dim = feature_dim
        self.input_proj = nn.Linear(d + feature_dim, d)
        self.blocks = nn.ModuleList(
            [nn.Sequential(nn.Linear(d, d), nn.GELU(), nn.Linear(d, d)) for _ in range(3)]
        )
        self.output_head = nn.Linear(d, d)

    def forward(self, style: StyleVector, f_obj: torch.Tensor) -> StyleVector:
        vec = style.cat()
        if vec.shape[-1] != 2 * self.style_channels:
            raise HarmonizerError(
                f"style width {vec.shape[-1]} != expected {2 * self.style_channels}"
            )
        if f_obj.shape[-1] != self.feature_dim:
            raise HarmonizerError(
                f"object feature width {f_obj.shape[-1]} != expected {self.feature_dim}"
            )
        x = self.input_proj(torch.cat([vec, f_obj], dim=-1))
        for block in self.blocks:
            x = x + block(x)
        raw = self.output_head(x)
        c = self.style_channels
        return StyleVector(raw[..., :c], F.softplus(raw[..., c:]) + SIGMA_FLOOR)


class StylePassthrough(nn.Module):
    """Mapping stub returning the input style unchanged (vanilla-AdaIN ablation)."""

    def forward(self, style: StyleVector, f_obj: torch.Tensor) -> StyleVector:
        return style


def hallucinate_style(mapper: nn.Module, s_bg: StyleVector, f_obj: torch.Tensor) -> StyleVector:
    """Predict the target object style for one stage."""
    return mapper(s_bg, f_obj)


def adain_apply(stage: torch.Tensor, mask: torch.Tensor, target: StyleVector) -> torch.Tensor:
    """Re-normalize the masked region of a feature map to the target style.

    Mask-weighted input stats; positions with mask == 0 pass through
    unchanged.
    """
    if stage.dim() == 3:
        stage = stage[None]
    if mask.dim() == 2:
        mask = mask[None, None]
    stats = masked_stats(stage, mask)
    mu_in = stats.mu[..., None, None]
    sigma_in = stats.sigma[..., None, None]
    mu_t = target.mu[..., None, None]
    sigma_t = target.sigma[..., None, None]
    adjusted = sigma_t * (stage - mu_in) / (sigma_in + ADAIN_EPS) + mu_t
    return torch.where(mask > 0, adjusted, stage)


def _conv(cin, cout, k=3):
    return nn.Conv2d(cin, cout, kernel_size=k, padding=k // 2)


class Decoder(nn.Module):
    """Mirror of the encoder with nearest-neighbor upsampling and skip fusion.

    Skip features for stages 1-3 are fused by concatenation + 1x1 conv. The
    head emits 4 channels: 3 image channels (sigmoid) and 1 blend logit.
    """

    def __init__(self, widths):
        super().__init__()
        w1, w2, w3, w4 = widths
        self.up = nn.Upsample(scale_factor=2, mode="nearest")
        self.from_bottleneck = nn.Sequential(_conv(w4, w3), nn.ReLU())
        self.fuse3 = _conv(2 * w3, w3, k=1)
        self.block3 = nn.Sequential(
            _conv(w3, w3), nn.ReLU(), _conv(w3, w3), nn.ReLU(),
            _conv(w3, w3), nn.ReLU(), _conv(w3, w2), nn.ReLU(),
        )
        self.fuse2 = _conv(2 * w2, w2, k=1)
        self.block2 = nn.Sequential(_conv(w2, w2), nn.ReLU(), _conv(w2, w1), nn.ReLU())
        self.fuse1 = _conv(2 * w1, w1, k=1)
        self.head = nn.Sequential(_conv(w1, w1), nn.ReLU(), _conv(w1, 4))

    def forward(self, bottleneck, skips):
        s1, s2, s3 = skips
        x = self.up(self.from_bottleneck(bottleneck))
        x = F.relu(self.fuse3(torch.cat([x, s3], dim=1)))
        x = self.up(self.block3(x))
        x = F.relu(self.fuse2(torch.cat([x, s2], dim=1)))
        x = self.up(self.block2(x))
        x = F.relu(self.fuse1(torch.cat([x, s1], dim=1)))
        return self.head(x)


class HarmonizerModel(nn.Module):
    """Full harmonization network; only projection, mappers, decoder train."""

    def __init__(self, profile: str = "tiny", encoder_seed: int = 0,
                 encoder: FeatureEncoder | None = None):
        super().__init__()
        widths = PROFILES[profile]
        self.profile = profile
        self.encoder_seed = encoder_seed
        self.encoder = encoder if encoder is not None else build_encoder(profile, seed=encoder_seed)
        self.projection = ResidualBlock(widths[3])
        self.mappers = nn.ModuleList(
            [MappingModule(c, widths[3]) for c in widths]
        )
        self.decoder = Decoder(widths)

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]

    def trainable_state_dict(self) -> dict:
        return {
            k: v for k, v in self.state_dict().items() if not k.startswith("encoder.")
        }

    def load_trainable_state_dict(self, state: dict) -> None:
        missing = [
            k for k in self.state_dict() if not k.startswith("encoder.") and k not in state
        ]
        if missing:
            raise HarmonizerError(f"checkpoint missing tensors: {missing[:3]}...")
        self.load_state_dict(state, strict=False)

    def forward_t(self, composite: torch.Tensor, fg_mask: torch.Tensor,
                  mode: str = "ours", external: list | None = None,
                  use_object_feature: bool = True):
        """Batched forward on tensors; returns (output image, aux dict).

        aux carries the per-stage target styles, the object feature, the raw
        decoder image, and the blend mask.
        """
        if mode not in MODES:
            raise HarmonizerError(f"unknown mode {mode!r}; expected one of {MODES}")
        if mode == "external":
            if external is None or len(external) != 4:
                raise HarmonizerError("external mode needs 4 per-stage style vectors")
        pyr = self.encoder(composite)
        f_real = object_feature(pyr, fg_mask, self.projection)
        f_obj = f_real if use_object_feature else torch.zeros_like(f_real)

        targets, adjusted = [], []
        for l in range(1, 5):
            stage = pyr[l - 1]
            m_l = resample_mask_t(fg_mask, stage.shape[-2], stage.shape[-1])
            if mode == "bg":
                target = background_style(pyr, fg_mask, l)
            elif mode == "ours":
                target = hallucinate_style(self.mappers[l - 1],
                                           background_style(pyr, fg_mask, l), f_obj)
            else:
                target = external[l - 1]
            targets.append(target)
            adjusted.append(adain_apply(stage, m_l, target))

        raw = self.decoder(adjusted[3], adjusted[:3])
        decoded = torch.sigmoid(raw[:, :3])
        blend_mask = torch.sigmoid(raw[:, 3:4])
        out = blend(decoded, composite, blend_mask, fg_mask)
        aux = {
            "styles": targets,
            "object_feature": f_real,
            "object_feature_used": f_obj,
            "decoded": decoded,
            "blend_mask": blend_mask,
        }
        return out, aux


def blend(decoded: torch.Tensor, composite: torch.Tensor,
          blend_mask: torch.Tensor, fg_mask: torch.Tensor) -> torch.Tensor:
    """Soft-combine decoder output and composite inside the foreground.

    Outside fg_mask the result is exactly the composite.
    """
    if decoded.shape != composite.shape:
        raise HarmonizerError("decoded/composite size mismatch")
    if blend_mask.shape[-2:] != composite.shape[-2:] or fg_mask.shape[-2:] != composite.shape[-2:]:
        raise HarmonizerError("mask size mismatch")
    mixed = blend_mask * decoded + (1.0 - blend_mask) * composite
    return fg_mask * mixed + (1.0 - fg_mask) * composite


def harmonize(model: HarmonizerModel, composite, fg_mask, mode: str = "ours",
              external: list | None = None):
    """Numpy-in / numpy-out wrapper around forward_t.

    Inputs whose sides are not multiples of 8 are edge-padded for the encoder
    and cropped back, so the background-identity guarantee still holds on the
    original frame.
    """
    dtype = next(model.decoder.parameters()).dtype
    comp_t = image_to_tensor(composite, dtype=dtype)
    mask_t = mask_to_tensor(fg_mask, dtype=dtype)
    h, w = comp_t.shape[-2:]
    ph, pw = (-h) % 8, (-w) % 8
    if ph or pw:
        comp_t = F.pad(comp_t, (0, pw, 0, ph), mode="replicate")
        mask_t = F.pad(mask_t, (0, pw, 0, ph), mode="constant", value=0.0)
    with torch.no_grad():
        out, aux = model.forward_t(comp_t, mask_t, mode=mode, external=external)
    out = tensor_to_image(out[..., :h, :w])
    # exact background override: float round-trips must not touch the background
    comp_np = as_image(composite)
    bg = as_mask(fg_mask) == 0
    out[bg] = comp_np[bg]
    return out, aux


def save_checkpoint(path, model: HarmonizerModel) -> None:
    torch.save(
        {
            "format": CKPT_FORMAT,
            "version": CKPT_VERSION,
            "profile": model.profile,
            "encoder_seed": model.encoder_seed,
            "state": model.trainable_state_dict(),
        },
        path,
    )


def load_checkpoint(path) -> HarmonizerModel:
    try:
        blob = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise HarmonizerError(f"unreadable checkpoint: {exc}") from exc
    if not isinstance(blob, dict) or blob.get("format") != CKPT_FORMAT:
        raise HarmonizerError("not a harmonizer checkpoint")
    if blob.get("version") != CKPT_VERSION:
        raise HarmonizerError(f"unsupported checkpoint version {blob.get('version')}")
    model = HarmonizerModel(blob["profile"], encoder_seed=blob["encoder_seed"])
    sample = next(iter(blob["state"].values()))
    model.to(sample.dtype)
    model.load_trainable_state_dict(blob["state"])
    return model
