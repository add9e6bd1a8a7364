"""
Composite fusion objective.

    L_total = L_ssim + L_int + L_grad      (unit weights)

    L_ssim = 1 - (SSIM(I_A, I_F) + SSIM(I_B^Y, I_F)) / 2
    L_int  = mean | I_F - max(I_A, I_B^Y) |
    L_grad = mean | |grad I_F| - max(|grad I_A|, |grad I_B^Y|) |

with |grad I| = |Sobel_x I| + |Sobel_y I| on reflect-padded images. All terms work
on luminance tensors shaped (B, 1, H, W) in [0, 1] and are differentiable with
respect to I_F. "mean" averages over pixels and then over the batch.
"""
from __future__ import annotations

from dataclasses import dataclass

import kornia.filters as KF
import torch

from ._constants import SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW
from ._errors import ContractViolationError, RejectedInputError
from ._types import require_same_shape

_SOBEL_X = torch.tensor([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.t().contiguous()


def _check_images(*images: torch.Tensor, names: tuple[str, ...]) -> None:
    for name, img in zip(names, images):
        if img.dim() != 4:
            raise ContractViolationError(f"{name} must be (B, C, H, W), got {tuple(img.shape)}")
    require_same_shape(*images, names=names)


def ssim_index(
    x: torch.Tensor,
    y: torch.Tensor,
    *,
    data_range: float = 1.0,
    window: int = SSIM_WINDOW,
    sigma: float = SSIM_SIGMA,
) -> torch.Tensor:
    """
    Mean structural similarity between two images.

    Local statistics use a normalized `window` x `window` Gaussian (std `sigma`) with
    reflect padding, so the map covers the full H x W. Stabilizers are
    C1 = (0.01 * data_range)**2 and C2 = (0.03 * data_range)**2; two identical
    constant images therefore score exactly 1.

    Args:
        x: Image (B, C, H, W).
        y: Image of the same shape.
        data_range: Dynamic range of the pixel values (1 for [0, 1], 255 for 8-bit).

    Returns:
        0-dim tensor in [-1, 1]; symmetric in (x, y).

    Raises:
        ContractViolationError: Shape mismatch.
        RejectedInputError: H or W not larger than half the window.
    """
    _check_images(x, y, names=("x", "y"))
    h, w = x.shape[-2:]
    if min(h, w) <= window // 2:
        raise RejectedInputError(
            f"ssim_index: {h}x{w} image is too small for an {window}x{window} window",
            hint=f"use at least {window // 2 + 1}x{window // 2 + 1}",
        )
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    def blur(t: torch.Tensor) -> torch.Tensor:
        return KF.gaussian_blur2d(t, (window, window), (sigma, sigma), border_type="reflect")

    mu_x = blur(x)
    mu_y = blur(y)
    var_x = blur(x * x) - mu_x * mu_x
    var_y = blur(y * y) - mu_y * mu_y
    cov = blur(x * y) - mu_x * mu_y

    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return (num / den).mean()


def loss_ssim(i_a: torch.Tensor, i_b_y: torch.Tensor, i_f: torch.Tensor) -> torch.Tensor:
    """Structure term: 1 - mean of SSIM(I_A, I_F) and SSIM(I_B^Y, I_F); lies in [0, 2]."""
    _check_images(i_a, i_b_y, i_f, names=("I_A", "I_B_Y", "I_F"))
    return 1 - (ssim_index(i_a, i_f) + ssim_index(i_b_y, i_f)) / 2


def loss_int(i_f: torch.Tensor, i_a: torch.Tensor, i_b_y: torch.Tensor) -> torch.Tensor:
    """Intensity term: mean L1 distance from I_F to the elementwise max of the sources."""
    _check_images(i_f, i_a, i_b_y, names=("I_F", "I_A", "I_B_Y"))
    return torch.mean(torch.abs(i_f - torch.maximum(i_a, i_b_y)))


def sobel_magnitude(x: torch.Tensor) -> torch.Tensor:
    """|Sobel_x x| + |Sobel_y x| with reflect padding; same shape as `x`."""
    kx = _SOBEL_X.to(device=x.device, dtype=x.dtype).unsqueeze(0)
    ky = _SOBEL_Y.to(device=x.device, dtype=x.dtype).unsqueeze(0)
    gx = KF.filter2d(x, kx, border_type="reflect")
    gy = KF.filter2d(x, ky, border_type="reflect")
    return gx.abs() + gy.abs()


def loss_grad(i_f: torch.Tensor, i_a: torch.Tensor, i_b_y: torch.Tensor) -> torch.Tensor:
    """Gradient term: mean L1 distance from |grad I_F| to the stronger source gradient."""
    _check_images(i_f, i_a, i_b_y, names=("I_F", "I_A", "I_B_Y"))
    target = torch.maximum(sobel_magnitude(i_a), sobel_magnitude(i_b_y))
    return torch.mean(torch.abs(sobel_magnitude(i_f) - target))


@dataclass(frozen=True)
class LossBreakdown:
    """The three loss components and their unit-weighted sum (0-dim tensors)."""

    l_ssim: torch.Tensor
    l_int: torch.Tensor
    l_grad: torch.Tensor
    l_total: torch.Tensor

    def as_dict(self) -> dict[str, float]:
        return {
            "l_ssim": float(self.l_ssim),
            "l_int": float(self.l_int),
            "l_grad": float(self.l_grad),
            "l_total": float(self.l_total),
        }

    def is_finite(self) -> bool:
        return all(
            bool(torch.isfinite(t)) for t in (self.l_ssim, self.l_int, self.l_grad, self.l_total)
        )


def loss_total(i_f: torch.Tensor, i_a: torch.Tensor, i_b_y: torch.Tensor) -> LossBreakdown:
    """All three terms of the objective and their sum."""
    l_ssim = loss_ssim(i_a, i_b_y, i_f)
    l_int = loss_int(i_f, i_a, i_b_y)
    l_grad = loss_grad(i_f, i_a, i_b_y)
    return LossBreakdown(l_ssim, l_int, l_grad, l_ssim + l_int + l_grad)


__all__ = [
    "ssim_index",
    "loss_ssim",
    "loss_int",
    "loss_grad",
    "loss_total",
    "sobel_magnitude",
    "LossBreakdown",
]
