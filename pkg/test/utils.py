import pytest
import numpy as np
import torch
from typing import Any, Union

from lkcfunet import ModelConfig
from lkcfunet._constants import DESK_CHANNEL_WIDTHS

Number = Union[int, float]


def approx_val(expected: Number, *, rel: float = 1e-6, abs: float | None = None) -> Any:
    """Return pytest.approx wrapped as Any so static type checkers don't complain.

    Accepts ints or floats and an optional relative or absolute tolerance.
    """
    if abs is not None:
        return pytest.approx(expected, abs=abs)
    return pytest.approx(expected, rel=rel)


def assert_approx(actual: Number, expected: Number, *, rel: float = 1e-6, abs: float | None = None) -> None:
    """Assert that `actual` approximately equals `expected` within tolerance."""
    approx = approx_val(expected, rel=rel, abs=abs)
    assert actual == approx


def desk_config(**changes: Any) -> ModelConfig:
    """Default network with the small desk-scale channel widths."""
    return ModelConfig(channel_widths=DESK_CHANNEL_WIDTHS).replace(**changes)


def rand_pair(seed: int, size: int = 64, batch: int = 1) -> torch.Tensor:
    """Seeded (batch, 2, size, size) input in [0, 1]."""
    gen = torch.Generator().manual_seed(seed)
    return torch.rand(batch, 2, size, size, generator=gen)


def rand_image(seed: int, h: int, w: int, *, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """Seeded (1, 1, h, w) image in [0, 1]."""
    gen = torch.Generator().manual_seed(seed)
    return torch.rand(1, 1, h, w, generator=gen, dtype=dtype)


def rand_gray_255(seed: int, h: int, w: int) -> np.ndarray:
    """Seeded float64 HxW image on the 0-255 scale."""
    return np.random.default_rng(seed).uniform(0.0, 255.0, size=(h, w))
