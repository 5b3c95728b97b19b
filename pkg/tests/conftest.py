import numpy as np
import pytest
import torch

from yuvc.frames import Frame420


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.manual_seed(0)


def random_frame(rng: np.random.Generator, width: int, height: int) -> Frame420:
    return Frame420(
        rng.integers(0, 256, (height, width), dtype=np.uint8),
        rng.integers(0, 256, (height // 2, width // 2), dtype=np.uint8),
        rng.integers(0, 256, (height // 2, width // 2), dtype=np.uint8),
    )
