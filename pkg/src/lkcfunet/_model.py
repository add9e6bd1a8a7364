"""
The fusion network.

`LKCFUNet` maps a spliced source pair (B, 2, H, W) to a fused luminance image
(B, 1, H, W) in [0, 1]:

    InitBlock
    -> 4 encoder stages (LKCBlock [+ LKDCBlock]), each followed by a stride-2 downsample
    -> bottleneck LKCBlock at 1/16 resolution
    -> 4 decoder stages (upsample, skip fusion through MPAFM or plain concat, LKCBlock)
    -> 1x1 conv -> sigmoid

H and W must be multiples of 16.
"""
from __future__ import annotations

import logging

import torch
from torch import nn

from ._config import ModelConfig
from ._constants import BOTTLENECK_KERNEL, NUM_STAGES, OUTPUT_CHANNELS, SPATIAL_MULTIPLE
from ._types import FeatureMap, ImageTensor, padded_size, validate_image_tensor
from .blocks import MPAFM, Downsample, InitBlock, LKCBlock, LKDCBlock, Upsample
from .blocks._base import spatial_conv

logger = logging.getLogger(__name__)


class LKCFUNet(nn.Module):
    """Large-kernel UNet with mixed normalization and MPAFM-gated skips.

    Args:
        cfg: Network variant; see `ModelConfig` and `ablation_config`.

    Examples:
        >>> model = LKCFUNet(ModelConfig())
        >>> model(torch.rand(1, 2, 64, 64)).shape
        torch.Size([1, 1, 64, 64])
    """

    def __init__(self, cfg: ModelConfig | None = None) -> None:
        super().__init__()
        self.cfg: ModelConfig = cfg or ModelConfig()
        widths = self.cfg.channel_widths
        kernels = self.cfg.kernel_schedule
        body = {
            "norm": self.cfg.body_norm,
            "groups": self.cfg.gn_groups_body,
            "dropout_p": self.cfg.dropout_p,
        }

        self.init_block = InitBlock(self.cfg)

        self.encoders = nn.ModuleList()
        self.downs = nn.ModuleList()
        for s in range(NUM_STAGES):
            stage: list[nn.Module] = [LKCBlock(widths[s], kernels[s], **body)]
            if self.cfg.use_lkdc:
                stage.append(LKDCBlock(widths[s], kernels[s], norm=self.cfg.body_norm))
            self.encoders.append(nn.Sequential(*stage))
            self.downs.append(Downsample(widths[s], widths[min(s + 1, NUM_STAGES - 1)]))

        self.bottleneck = LKCBlock(widths[-1], BOTTLENECK_KERNEL, **body)

        # Decoder modules are indexed by the stage they produce (0 = full resolution).
        self.ups = nn.ModuleList()
        self.mpafms = nn.ModuleList()
        self.skip_fusions = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for s in range(NUM_STAGES):
            below = widths[min(s + 1, NUM_STAGES - 1)]
            self.ups.append(Upsample(below, widths[s]))
            self.mpafms.append(MPAFM(widths[s]) if self.cfg.use_mpafm else nn.Identity())
            self.skip_fusions.append(spatial_conv(2 * widths[s], widths[s], 3))
            self.decoders.append(LKCBlock(widths[s], kernels[s], **body))

        self.head = nn.Conv2d(widths[0], OUTPUT_CHANNELS, 1)
        self.reset_parameters()

    def reset_parameters(self) -> None:
        """Kaiming fan-in init for convolutions; zero biases; norms at scale 1, shift 0."""
        for module in self.modules():
            if isinstance(module, nn.Conv2d):
                nn.init.kaiming_normal_(module.weight, mode="fan_in", nonlinearity="relu")
                if module.bias is not None:
                    nn.init.zeros_(module.bias)
            elif isinstance(module, (nn.GroupNorm, nn.BatchNorm2d, nn.InstanceNorm2d)):
                if module.weight is not None:
                    nn.init.ones_(module.weight)
                if module.bias is not None:
                    nn.init.zeros_(module.bias)

    @property
    def min_input_size(self) -> int:
        """Smallest accepted input side: every stage must fit its kernel (multiple of 16)."""
        need = [self.cfg.init_kernel, BOTTLENECK_KERNEL * 2**NUM_STAGES]
        need += [k * 2**s for s, k in enumerate(self.cfg.kernel_schedule)]
        return padded_size(max(need), SPATIAL_MULTIPLE)

    def _skip(self, s: int, e: torch.Tensor, d: torch.Tensor) -> torch.Tensor:
        if self.cfg.use_mpafm:
            return self.mpafms[s](e, d)
        return e

    def _run(
        self, pair: torch.Tensor, capture: dict[str, FeatureMap] | None = None
    ) -> torch.Tensor:
        def keep(name: str, x: torch.Tensor, stage: int, source: str) -> None:
            if capture is not None:
                capture[name] = FeatureMap(x, stage, source, name)  # type: ignore[arg-type]

        x = self.init_block(pair)
        keep("init", x, 0, "init")

        skips: list[torch.Tensor] = []
        for s in range(NUM_STAGES):
            x = self.encoders[s](x)
            keep(f"enc{s}", x, s, "encoder")
            skips.append(x)
            x = self.downs[s](x)

        x = self.bottleneck(x)
        keep("bottleneck", x, NUM_STAGES, "bottleneck")

        for s in reversed(range(NUM_STAGES)):
            d = self.ups[s](x)
            recalibrated = self._skip(s, skips[s], d)
            x = self.skip_fusions[s](torch.cat([d, recalibrated], dim=1))
            x = self.decoders[s](x)
            keep(f"dec{s}", x, s, "decoder")

        return torch.sigmoid(self.head(x))

    def forward(self, pair: ImageTensor) -> ImageTensor:
        validate_image_tensor(pair, channels=2, divisible_by=SPATIAL_MULTIPLE, name="pair")
        return self._run(pair)

    def feature_maps(self, pair: ImageTensor) -> dict[str, FeatureMap]:
        """Run a forward pass and return every named intermediate activation.

        Keys: ``init``, ``enc0``..``enc3``, ``bottleneck``, ``dec3``..``dec0``.
        """
        validate_image_tensor(pair, channels=2, divisible_by=SPATIAL_MULTIPLE, name="pair")
        capture: dict[str, FeatureMap] = {}
        self._run(pair, capture)
        return capture

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        """Parameters grouped by top-level submodule name (``init_block``, ``encoders.0``, ...)."""
        groups: dict[str, list[nn.Parameter]] = {}
        for name, param in self.named_parameters():
            parts = name.split(".")
            key = ".".join(parts[:2]) if parts[1].isdigit() else parts[0]
            groups.setdefault(key, []).append(param)
        return groups


def build_model(cfg: ModelConfig | None = None, *, seed: int | None = None) -> LKCFUNet:
    """Construct a model, optionally seeding torch first so the init is reproducible."""
    if seed is not None:
        torch.manual_seed(seed)
    model = LKCFUNet(cfg)
    n_params = sum(p.numel() for p in model.parameters())
    logger.debug("built LKCFUNet with %d parameters (%s)", n_params, model.cfg)
    return model


def model_forward(pair: ImageTensor, model: LKCFUNet) -> ImageTensor:
    """Fuse a (B, 2, H, W) pair into a (B, 1, H, W) luminance image."""
    return model(pair)


__all__ = ["LKCFUNet", "build_model", "model_forward"]
