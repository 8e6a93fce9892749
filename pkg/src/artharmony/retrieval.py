"""Object retrieval: common-domain embeddings and brute-force nearest neighbors.

Painterly and photographic object features are pulled into one domain with a
non-saturating adversarial loss plus a shared-classifier cross-entropy
(total = adv + cls, unit weights). Retrieval is exact squared-L2 search.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .encoder import ResidualBlock, image_to_tensor, mask_to_tensor, object_feature

DEFAULT_TOPK = 100

PAINTERLY = "painterly"
PHOTOGRAPHIC = "photographic"


class RetrievalError(ValueError):
    pass


class RetrievalHeads(nn.Module):
    """Domain discriminator (2-layer MLP -> logit) and shared category classifier."""

    def __init__(self, feature_dim: int, num_categories: int, hidden: int = 128):
        super().__init__()
        self.discriminator = nn.Sequential(
            nn.Linear(feature_dim, hidden), nn.LeakyReLU(0.2), nn.Linear(hidden, 1)
        )
        self.classifier = nn.Linear(feature_dim, num_categories)


class RetrievalModel(nn.Module):
    """Image-level retrieval network: frozen encoder + projection + heads."""

    def __init__(self, encoder, num_categories: int):
        super().__init__()
        self.encoder = encoder
        c4 = encoder.widths[3]
        self.projection = ResidualBlock(c4)
        self.heads = RetrievalHeads(c4, num_categories)

    def embed_t(self, img: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        pyr = self.encoder(img)
        return object_feature(pyr, mask, self.projection)


def embed(model: RetrievalModel, image, mask) -> np.ndarray:
    """Masked-pooled projected deep feature of one object; deterministic."""
    dtype = next(model.projection.parameters()).dtype
    with torch.no_grad():
        f = model.embed_t(image_to_tensor(image, dtype), mask_to_tensor(mask, dtype))
    return f[0].cpu().double().numpy()


class VectorProjector(nn.Module):
    """Residual MLP projector for feature-level (desk-scale) alignment runs."""

    def __init__(self, dim: int, hidden: int = 64):
        super().__init__()
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.ReLU(), nn.Linear(hidden, dim))

    def forward(self, x):
        return x + self.mlp(x)


def retrieval_losses(heads: RetrievalHeads, f_paint: torch.Tensor, y_paint: torch.Tensor,
                     f_photo: torch.Tensor, y_photo: torch.Tensor) -> dict:
    """Alignment-side losses on projected features from both domains.

    adv is the non-saturating generator objective: painterly features should
    score as photographic. At a constant discriminator output of 0.5 it
    equals log 2. cls is cross-entropy of the shared classifier over the
    combined batch. total = adv + cls.
    """
    if f_paint.shape[0] == 0 or f_photo.shape[0] == 0:
        raise RetrievalError("adversarial loss needs samples from both domains")
    d_paint = heads.discriminator(f_paint).squeeze(-1)
    adv = F.binary_cross_entropy_with_logits(d_paint, torch.ones_like(d_paint))
    logits = heads.classifier(torch.cat([f_paint, f_photo], dim=0))
    labels = torch.cat([y_paint, y_photo], dim=0)
    cls = F.cross_entropy(logits, labels)
    return {"adv": adv, "cls": cls, "total": adv + cls}


def discriminator_loss(heads: RetrievalHeads, f_paint: torch.Tensor,
                       f_photo: torch.Tensor) -> torch.Tensor:
    """Discriminator side: photographic -> 1, painterly -> 0 (on detached features)."""
    d_photo = heads.discriminator(f_photo.detach()).squeeze(-1)
    d_paint = heads.discriminator(f_paint.detach()).squeeze(-1)
    return F.binary_cross_entropy_with_logits(
        d_photo, torch.ones_like(d_photo)
    ) + F.binary_cross_entropy_with_logits(d_paint, torch.zeros_like(d_paint))


def make_synthetic_domains(seed: int, num_classes: int = 4, n_per_class: int = 64,
                           dim: int = 8, shift: float = 3.0):
    """Shifted-Gaussian two-domain dataset: same class centers, the painterly
    domain offset by a constant vector."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 4.0, size=(num_classes, dim))
    offset = np.full(dim, shift)
    xs_photo, xs_paint, ys = [], [], []
    for k in range(num_classes):
        xs_photo.append(centers[k] + rng.normal(0.0, 1.0, size=(n_per_class, dim)))
        xs_paint.append(centers[k] + offset + rng.normal(0.0, 1.0, size=(n_per_class, dim)))
        ys.append(np.full(n_per_class, k))
    y = np.concatenate(ys)
    to_t = lambda a: torch.tensor(np.concatenate(a), dtype=torch.float32)
    return (to_t(xs_paint), torch.tensor(y), to_t(xs_photo), torch.tensor(y))


def train_domain_aligner(x_paint, y_paint, x_photo, y_photo, *, steps: int = 1000,
                         lr: float = 1e-3, seed: int = 0, hidden: int = 64):
    """Alternating (1:1) adversarial + classification training on feature vectors.

    Returns (projector, heads, history of per-step loss dicts).
    """
    torch.manual_seed(seed)
    dim = x_paint.shape[1]
    num_classes = int(max(y_paint.max(), y_photo.max())) + 1
    projector = VectorProjector(dim, hidden=hidden)
    heads = RetrievalHeads(dim, num_classes, hidden=hidden)
    opt_g = torch.optim.Adam(
        list(projector.parameters()) + list(heads.classifier.parameters()), lr=lr
    )
    opt_d = torch.optim.Adam(heads.discriminator.parameters(), lr=lr)
    history = []
    for _ in range(steps):
        f_paint = projector(x_paint)
        f_photo = projector(x_photo)
        d_loss = discriminator_loss(heads, f_paint, f_photo)
        opt_d.zero_grad()
        d_loss.backward()
        opt_d.step()

        f_paint = projector(x_paint)
        f_photo = projector(x_photo)
        losses = retrieval_losses(heads, f_paint, y_paint, f_photo, y_photo)
        opt_g.zero_grad()
        losses["total"].backward()
        opt_g.step()
        history.append({k: float(v.detach()) for k, v in losses.items()}
                       | {"disc": float(d_loss.detach())})
    return projector, heads, history


def classifier_accuracy(heads: RetrievalHeads, f: torch.Tensor, y: torch.Tensor) -> float:
    with torch.no_grad():
        pred = heads.classifier(f).argmax(dim=1)
    return float((pred == y).float().mean())


def discriminator_accuracy(heads: RetrievalHeads, f_paint, f_photo) -> float:
    """Fraction of features the discriminator assigns to the right domain."""
    with torch.no_grad():
        p_paint = torch.sigmoid(heads.discriminator(f_paint).squeeze(-1))
        p_photo = torch.sigmoid(heads.discriminator(f_photo).squeeze(-1))
    correct = float((p_paint < 0.5).float().sum() + (p_photo >= 0.5).float().sum())
    return correct / (len(p_paint) + len(p_photo))


@dataclass
class EmbeddingIndex:
    """Exact brute-force index over object features."""

    features: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    ids: list = field(default_factory=list)
    domains: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if len(self.ids) != self.features.shape[0]:
            raise RetrievalError("id count must match feature row count")
        if self.domains and len(self.domains) != len(self.ids):
            raise RetrievalError("domain tag count must match feature row count")
        if self.features.size and not np.isfinite(self.features).all():
            raise RetrievalError("index features must be finite")

    def __len__(self):
        return len(self.ids)

    def subset(self, domain: str) -> "EmbeddingIndex":
        rows = [i for i, d in enumerate(self.domains) if d == domain]
        return EmbeddingIndex(
            self.features[rows] if rows else np.zeros((0, self.features.shape[1] if self.features.ndim == 2 else 0)),
            [self.ids[i] for i in rows],
            [domain] * len(rows),
        )


def retrieve_topk(index: EmbeddingIndex, query: np.ndarray, k: int = DEFAULT_TOPK) -> list:
    """Top-k ids by ascending squared L2 distance; ties break by ascending id."""
    if len(index) == 0:
        raise RetrievalError("empty index")
    if k > len(index):
        raise RetrievalError(f"k={k} exceeds index size {len(index)}")
    q = np.asarray(query, dtype=np.float64)
    d = ((index.features - q[None, :]) ** 2).sum(axis=1)
    order = sorted(range(len(index)), key=lambda i: (d[i], index.ids[i]))
    return [(index.ids[i], float(d[i])) for i in order[:k]]


def export_candidates(index: EmbeddingIndex, path, k: int = DEFAULT_TOPK) -> int:
    """Write each painterly object's top-k photographic candidates as JSONL.

    Records: {query_id, rank, candidate_id, distance}. Returns the number of
    queries written.
    """
    gallery = index.subset(PHOTOGRAPHIC)
    queries = index.subset(PAINTERLY)
    if len(gallery) == 0:
        raise RetrievalError("empty photographic gallery")
    k = min(k, len(gallery))
    n = 0
    with open(path, "w") as f:
        for qid, feat in zip(queries.ids, queries.features):
            for rank, (cid, dist) in enumerate(retrieve_topk(gallery, feat, k)):
                f.write(json.dumps({
                    "query_id": qid, "rank": rank,
                    "candidate_id": cid, "distance": dist,
                }) + "\n")
            n += 1
    return n


def read_candidates(path) -> dict:
    """Inverse of export_candidates: {query_id: [(candidate_id, distance), ...]}."""
    out: dict = {}
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            out.setdefault(rec["query_id"], []).append(
                (rec["rank"], rec["candidate_id"], rec["distance"])
            )
    return {
        q: [(cid, dist) for _, cid, dist in sorted(rows)] for q, rows in out.items()
    }
