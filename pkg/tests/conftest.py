import numpy as np
import pytest
import torch
from hypothesis import settings

settings.register_profile("ci", deadline=None, max_examples=60)
settings.load_profile("ci")


@pytest.fixture(autouse=True)
def _seeded():
    torch.manual_seed(0)
    np.random.seed(0)
    yield


@pytest.fixture(scope="session")
def tiny_model():
    """Shared frozen tiny model; tests that mutate parameters build their own."""
    from nbvc.model import BFrameCodec, ModelConfig

    torch.manual_seed(1234)
    model = BFrameCodec(ModelConfig.tiny())
    model.eval()
    return model


def perturb_parameters(model, scale=0.05, seed=99):
    """Push every parameter off its initialization so zero-initialized
    residual projections become active."""
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.add_(torch.randn(p.shape, generator=g) * scale)
    return model
