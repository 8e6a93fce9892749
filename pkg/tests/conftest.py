import numpy as np
import pytest
import torch

from artharmony.encoder import build_encoder
from artharmony.harmonizer import HarmonizerModel


@pytest.fixture(scope="session")
def tiny_encoder():
    return build_encoder("tiny", seed=0)


@pytest.fixture(scope="session")
def tiny_model():
    torch.manual_seed(0)
    return HarmonizerModel("tiny", encoder_seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(42)


def random_soft_mask(rng, h, w, min_area=4):
    """Soft mask with a guaranteed nonzero region."""
    m = np.clip(rng.uniform(-0.5, 1.0, size=(h, w)), 0.0, 1.0)
    if m.sum() < min_area:
        m[:2, :2] = 1.0
    return m
