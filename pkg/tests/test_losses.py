import numpy as np
import pytest
import torch

from artharmony.encoder import StyleVector, build_encoder, foreground_style, mask_to_tensor
from artharmony.losses import (
    LossError,
    loss_content,
    loss_map_c,
    loss_map_p,
    loss_obj,
    loss_style,
    loss_total,
    make_report,
)


def styles(vals):
    """Four StyleVectors from a list of (mu_value, sigma_value) scalars."""
    return [
        StyleVector(torch.full((1, 4), float(m)).double(), torch.full((1, 4), float(s)).double())
        for m, s in vals
    ]


def central_diff(fn, x, i, eps=1e-6):
    xp = x.clone()
    xm = x.clone()
    xp.view(-1)[i] += eps
    xm.view(-1)[i] -= eps
    return (fn(xp) - fn(xm)) / (2 * eps)


@pytest.fixture(scope="module")
def enc64():
    return build_encoder("tiny", seed=0).double()


class TestLossObj:
    def test_identical_zero(self):
        f = torch.randn(1, 8)
        assert float(loss_obj(f, f)) == 0.0

    def test_unit_vectors(self):
        a = torch.tensor([[1.0, 0.0]])
        b = torch.tensor([[0.0, 1.0]])
        assert float(loss_obj(a, b)) == pytest.approx(2.0)
        assert float(loss_obj(b, a)) == pytest.approx(2.0)

    def test_gradient_matches_finite_difference(self):
        torch.manual_seed(0)
        f_p = torch.randn(1, 6).double()
        f_c = torch.randn(1, 6).double().requires_grad_(True)
        loss = loss_obj(f_p, f_c)
        loss.backward()
        analytic = 2 * (f_c.detach() - f_p)
        assert torch.allclose(f_c.grad, analytic, atol=1e-9)
        for i in range(6):
            fd = central_diff(lambda x: float(loss_obj(f_p, x)), f_c.detach(), i)
            assert fd == pytest.approx(float(f_c.grad.view(-1)[i]), rel=1e-4)

    def test_length_mismatch(self):
        with pytest.raises(LossError):
            loss_obj(torch.randn(1, 4), torch.randn(1, 5))


class TestLossMap:
    def test_exact_match_zero(self):
        s = styles([(1, 2)] * 4)
        assert float(loss_map_p(s, s)) == 0.0
        assert float(loss_map_c(s, s)) == 0.0

    def test_single_stage_unit_offset(self):
        gt = styles([(0, 1)] * 4)
        pred = styles([(0, 1)] * 4)
        # bump one coordinate of one stage's mu by 1
        pred[2] = StyleVector(pred[2].mu.clone(), pred[2].sigma)
        pred[2].mu[0, 0] += 1.0
        assert float(loss_map_p(pred, gt)) == pytest.approx(1.0)

    def test_quadratic_scaling(self):
        gt = styles([(0, 1)] * 4)
        pred1 = styles([(0.5, 1)] * 4)
        pred2 = styles([(1.0, 1)] * 4)
        l1 = float(loss_map_p(pred1, gt))
        l2 = float(loss_map_p(pred2, gt))
        assert l2 == pytest.approx(4 * l1)

    def test_wrong_stage_count(self):
        s = styles([(0, 1)] * 3)
        with pytest.raises(LossError):
            loss_map_c(s, s)


class TestLossStyle:
    def _img_mask(self):
        r = np.random.default_rng(7)
        img = torch.tensor(r.uniform(0, 1, (1, 3, 16, 16)))
        mask = np.zeros((16, 16))
        mask[4:12, 4:12] = 1.0
        return img, mask_to_tensor(mask, torch.float64)

    def test_self_target_zero(self, enc64):
        img, mask = self._img_mask()
        pyr = enc64(img)
        gt = [foreground_style(pyr, mask, l) for l in range(1, 5)]
        assert float(loss_style(img, mask, gt, enc64)) == pytest.approx(0.0, abs=1e-12)

    def test_single_coordinate_perturbation(self, enc64):
        img, mask = self._img_mask()
        pyr = enc64(img)
        gt = [foreground_style(pyr, mask, l) for l in range(1, 5)]
        delta = 0.37
        gt[1] = StyleVector(gt[1].mu.clone(), gt[1].sigma)
        gt[1].mu[0, 3] += delta
        assert float(loss_style(img, mask, gt, enc64)) == pytest.approx(delta ** 2, rel=1e-9)

    def test_descent_after_one_step(self, enc64):
        img, mask = self._img_mask()
        target_img = torch.tensor(np.random.default_rng(8).uniform(0, 1, (1, 3, 16, 16)))
        gt = [foreground_style(enc64(target_img), mask, l).detach() for l in range(1, 5)]
        x = img.clone().requires_grad_(True)
        loss0 = loss_style(x, mask, gt, enc64)
        loss0.backward()
        with torch.no_grad():
            x2 = x - 1e-4 * x.grad
        loss1 = loss_style(x2, mask, gt, enc64)
        assert float(loss1.detach()) < float(loss0.detach())


class TestLossContent:
    def test_identical_zero(self, enc64):
        img = torch.rand(1, 3, 16, 16).double()
        assert float(loss_content(img, img, enc64)) == 0.0

    def test_brute_force_oracle(self, enc64):
        a = torch.rand(1, 3, 16, 16).double()
        b = torch.rand(1, 3, 16, 16).double()
        expected = float(((enc64(a)[3] - enc64(b)[3]) ** 2).sum())
        assert float(loss_content(a, b, enc64)) == pytest.approx(expected, rel=1e-12)

    def test_gradient_matches_finite_difference(self, enc64):
        torch.manual_seed(0)
        a = torch.rand(1, 3, 8, 8).double().requires_grad_(True)
        b = torch.rand(1, 3, 8, 8).double()
        loss_content(a, b, enc64).backward()
        idx = np.random.default_rng(0).choice(a.numel(), size=5, replace=False)
        for i in idx:
            fd = central_diff(lambda x: float(loss_content(x, b, enc64)), a.detach(), int(i))
            assert fd == pytest.approx(float(a.grad.view(-1)[int(i)]), rel=1e-3, abs=1e-8)


class TestLossTotal:
    def test_all_zero(self):
        assert loss_total(0.0, 0.0, 0.0, 0.0, 0.0) == 0.0

    def test_ones_with_default_lambda(self):
        assert loss_total(1.0, 1.0, 1.0, 1.0, 1.0) == pytest.approx(23.0)

    def test_linearity_in_each_part(self):
        base = loss_total(1.0, 1.0, 1.0, 1.0, 1.0)
        assert loss_total(3.0, 1.0, 1.0, 1.0, 1.0) - base == pytest.approx(2.0)
        assert loss_total(1.0, 2.0, 1.0, 1.0, 1.0) - base == pytest.approx(10.0)
        assert loss_total(1.0, 1.0, 1.0, 5.0, 1.0) - base == pytest.approx(4.0)

    def test_report_invariant(self):
        rep = make_report(0.5, 0.25, 0.125, 2.0, 1.0)
        expected = 0.5 + 10 * (0.25 + 0.125) + 2.0 + 1.0
        assert rep.total == pytest.approx(expected, abs=1e-6)
        assert rep.lam == 10.0
