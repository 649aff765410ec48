"""PatchGAN discriminator over (source, candidate) image pairs.

A single parameter set scores candidates from either generation stage or
the ground truth; there is no stage tag anywhere in the forward path.
"""

import torch
import torch.nn as nn

from .errors import ConfigurationError, ShapeError


class PatchDiscriminator(nn.Module):
    """70x70-receptive-field patch discriminator.

    Three stride-2 convolutions, one stride-1 convolution, and a stride-1
    projection to per-patch logits (30x30 for 256x256 inputs). LeakyReLU 0.2
    throughout; instance norm from the second layer. `norm="none"` disables
    normalization (per-map statistics couple boundary and interior, which
    some equivariance checks need to avoid).
    """

    def __init__(self, in_channels: int = 6, base_channels: int = 64,
                 norm: str = "instance"):
        super().__init__()
        if norm not in ("instance", "none"):
            raise ConfigurationError(f"unknown norm {norm!r}")

        def block(cin, cout, stride, normed):
            layers = [nn.Conv2d(cin, cout, 4, stride=stride, padding=1)]
            if normed and norm == "instance":
                layers.append(nn.InstanceNorm2d(cout))
            layers.append(nn.LeakyReLU(0.2))
            return layers

        c = base_channels
        self.net = nn.Sequential(
            *block(in_channels, c, 2, normed=False),
            *block(c, 2 * c, 2, normed=True),
            *block(2 * c, 4 * c, 2, normed=True),
            *block(4 * c, 8 * c, 1, normed=True),
            nn.Conv2d(8 * c, 1, 4, stride=1, padding=1),
        )
        self.in_channels = in_channels

    def forward(self, source: torch.Tensor, candidate: torch.Tensor) -> torch.Tensor:
        if source.shape[-2:] != candidate.shape[-2:]:
            raise ShapeError(
                f"source {tuple(source.shape)} and candidate {tuple(candidate.shape)} "
                "spatial sizes differ"
            )
        pair = torch.cat([source, candidate], dim=1)
        if pair.shape[1] != self.in_channels:
            raise ShapeError(
                f"expected {self.in_channels} concatenated channels, got {pair.shape[1]}"
            )
        return self.net(pair)  # (B, 1, H_p, W_p) pre-sigmoid patch logits

    # Both generation stages score through the same parameters; these
    # aliases are the two call sites' entry points and must stay trivial.
    def score_coarse(self, source: torch.Tensor, candidate: torch.Tensor) -> torch.Tensor:
        return self.forward(source, candidate)

    def score_refined(self, source: torch.Tensor, candidate: torch.Tensor) -> torch.Tensor:
        return self.forward(source, candidate)
