import math

import numpy as np
import pytest
import torch

from artharmony.encoder import build_encoder
from artharmony.retrieval import (
    PAINTERLY,
    PHOTOGRAPHIC,
    EmbeddingIndex,
    RetrievalError,
    RetrievalHeads,
    RetrievalModel,
    discriminator_loss,
    embed,
    export_candidates,
    make_synthetic_domains,
    read_candidates,
    retrieval_losses,
    retrieve_topk,
)

from conftest import random_soft_mask


class TestRetrievalLosses:
    def test_confident_classifier_drives_cls_to_zero(self):
        heads = RetrievalHeads(2, 2)
        with torch.no_grad():
            heads.classifier.weight.copy_(torch.eye(2) * 1000.0)
            heads.classifier.bias.zero_()
        f_paint = torch.tensor([[1.0, 0.0]])
        f_photo = torch.tensor([[0.0, 1.0]])
        losses = retrieval_losses(heads, f_paint, torch.tensor([0]),
                                  f_photo, torch.tensor([1]))
        assert float(losses["cls"]) == pytest.approx(0.0, abs=1e-6)

    def test_uniform_discriminator_constant(self):
        # zeroed discriminator outputs logit 0 (p = 0.5) for any input;
        # the non-saturating objective is then exactly log 2
        heads = RetrievalHeads(4, 3)
        with torch.no_grad():
            for p in heads.discriminator.parameters():
                p.zero_()
        losses = retrieval_losses(heads, torch.randn(8, 4), torch.zeros(8, dtype=torch.long),
                                  torch.randn(8, 4), torch.zeros(8, dtype=torch.long))
        assert float(losses["adv"]) == pytest.approx(math.log(2.0), rel=1e-6)

    def test_total_is_sum(self):
        torch.manual_seed(0)
        heads = RetrievalHeads(4, 3)
        losses = retrieval_losses(heads, torch.randn(5, 4), torch.randint(0, 3, (5,)),
                                  torch.randn(6, 4), torch.randint(0, 3, (6,)))
        assert float(losses["total"]) == pytest.approx(
            float(losses["adv"]) + float(losses["cls"]), abs=1e-6
        )

    def test_single_domain_rejected(self):
        heads = RetrievalHeads(4, 3)
        with pytest.raises(RetrievalError, match="both domains"):
            retrieval_losses(heads, torch.zeros(0, 4), torch.zeros(0, dtype=torch.long),
                             torch.randn(5, 4), torch.zeros(5, dtype=torch.long))

    def test_discriminator_loss_on_detached(self):
        torch.manual_seed(1)
        heads = RetrievalHeads(4, 3)
        f = torch.randn(5, 4, requires_grad=True)
        loss = discriminator_loss(heads, f, torch.randn(5, 4))
        loss.backward()
        assert f.grad is None


class TestEmbed:
    @pytest.fixture()
    def model(self):
        torch.manual_seed(0)
        return RetrievalModel(build_encoder("tiny", seed=0), num_categories=3)

    def test_deterministic(self, model, rng):
        img = rng.uniform(0, 1, (32, 32, 3))
        mask = random_soft_mask(rng, 32, 32)
        assert np.array_equal(embed(model, img, mask), embed(model, img, mask))

    def test_zero_residual_reduces_to_raw_pooled(self, model, rng):
        from artharmony.encoder import extract_features, mask_to_tensor, masked_stats, resample_mask_t

        with torch.no_grad():
            model.projection.conv2.weight.zero_()
            model.projection.conv2.bias.zero_()
        img = rng.uniform(0, 1, (32, 32, 3))
        mask = random_soft_mask(rng, 32, 32)
        feat = embed(model, img, mask)
        pyr = extract_features(model.encoder, img)
        m = resample_mask_t(mask_to_tensor(mask), 4, 4)
        expected = masked_stats(pyr[3], m).mu[0].numpy()
        assert np.allclose(feat, expected, atol=1e-6)

    def test_masked_mean_oracle(self, rng):
        torch.manual_seed(9)
        model = RetrievalModel(build_encoder("tiny", seed=1), num_categories=2)
        img = rng.uniform(0, 1, (16, 16, 3))
        mask = np.zeros((16, 16))
        mask[0:8, 0:8] = 1.0
        feat = embed(model, img, mask)
        from artharmony.encoder import extract_features, mask_to_tensor, resample_mask_t

        pyr = extract_features(model.encoder, img)
        with torch.no_grad():
            projected = model.projection(pyr[3])[0].numpy()
        m = resample_mask_t(mask_to_tensor(mask), 2, 2)[0, 0].numpy()
        expected = (projected * m).sum(axis=(1, 2)) / m.sum()
        assert np.allclose(feat, expected, atol=1e-6)


class TestRetrieveTopk:
    def test_query_in_gallery_ranks_first(self, rng):
        feats = rng.normal(size=(20, 8))
        index = EmbeddingIndex(feats, list(range(20)), [PHOTOGRAPHIC] * 20)
        ranked = retrieve_topk(index, feats[7], k=5)
        assert ranked[0] == (7, 0.0)

    def test_brute_force_oracle_with_ties(self, rng):
        feats = rng.normal(size=(200, 8)).round(1)  # rounding forces ties
        ids = list(range(200))
        index = EmbeddingIndex(feats, ids, [PHOTOGRAPHIC] * 200)
        q = feats[0] + 0.05
        d = ((feats - q) ** 2).sum(axis=1)
        expected = sorted(ids, key=lambda i: (d[i], i))
        got = [i for i, _ in retrieve_topk(index, q, k=200)]
        assert got == expected

    def test_default_k_is_100(self, rng):
        feats = rng.normal(size=(150, 4))
        index = EmbeddingIndex(feats, list(range(150)), [PHOTOGRAPHIC] * 150)
        assert len(retrieve_topk(index, feats[0])) == 100

    def test_k_exceeds_index_rejected(self, rng):
        index = EmbeddingIndex(rng.normal(size=(5, 4)), list(range(5)), [PHOTOGRAPHIC] * 5)
        with pytest.raises(RetrievalError):
            retrieve_topk(index, np.zeros(4), k=6)

    def test_empty_index_rejected(self):
        with pytest.raises(RetrievalError, match="empty"):
            retrieve_topk(EmbeddingIndex(np.zeros((0, 4)), [], []), np.zeros(4))

    def test_distance_symmetry(self, rng):
        a = rng.normal(size=8)
        b = rng.normal(size=8)
        dab = ((a - b) ** 2).sum()
        dba = ((b - a) ** 2).sum()
        assert abs(dab - dba) < 1e-9


class TestExportCandidates:
    def _index(self, rng, n_paint=3, n_photo=10):
        feats = rng.normal(size=(n_paint + n_photo, 4))
        ids = [f"paint_{i}" for i in range(n_paint)] + [f"photo_{i}" for i in range(n_photo)]
        domains = [PAINTERLY] * n_paint + [PHOTOGRAPHIC] * n_photo
        return EmbeddingIndex(feats, ids, domains)

    def test_round_trip_reproduces_ranks(self, rng, tmp_path):
        index = self._index(rng)
        path = tmp_path / "cands.jsonl"
        export_candidates(index, path, k=5)
        loaded = read_candidates(path)
        gallery = index.subset(PHOTOGRAPHIC)
        for qid, feat in zip(index.subset(PAINTERLY).ids, index.subset(PAINTERLY).features):
            expected = retrieve_topk(gallery, feat, k=5)
            assert loaded[qid] == [(cid, pytest.approx(d)) for cid, d in expected]

    def test_k1_single_candidate_per_query(self, rng, tmp_path):
        index = self._index(rng)
        path = tmp_path / "cands.jsonl"
        export_candidates(index, path, k=1)
        loaded = read_candidates(path)
        assert all(len(v) == 1 for v in loaded.values())
        assert len(loaded) == 3

    def test_empty_gallery_rejected(self, rng, tmp_path):
        feats = rng.normal(size=(3, 4))
        index = EmbeddingIndex(feats, ["a", "b", "c"], [PAINTERLY] * 3)
        with pytest.raises(RetrievalError, match="gallery"):
            export_candidates(index, tmp_path / "x.jsonl")


def test_synthetic_domains_are_shifted(rng):
    x_paint, y_paint, x_photo, y_photo = make_synthetic_domains(0, shift=3.0)
    assert x_paint.shape == x_photo.shape
    assert torch.equal(y_paint, y_photo)
    gap = (x_paint.mean(0) - x_photo.mean(0)).abs().mean()
    assert 2.0 < float(gap) < 4.0
