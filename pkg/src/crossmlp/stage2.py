"""Stage-2 refinement: combination feature, selection module, semantic U-Net.

The selection module is a contract-compatible stand-in for the external
multi-channel selection design it replaces: a small conv trunk produces
several candidate images, a per-pixel softmax picks among them, and two
positive uncertainty maps (image group, semantic group) feed the
uncertainty-weighted losses.
"""

from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, ShapeError
from .stage1 import Stage1Output

UNCERTAINTY_FLOOR = 1e-3


class Stage2Output(NamedTuple):
    final_image: torch.Tensor       # (B, 3, H, W), tanh-bounded
    refined_semantic: torch.Tensor  # (B, K_s, H, W)
    u_image: torch.Tensor           # (B, 1, H, W), entries >= floor
    u_semantic: torch.Tensor        # (B, 1, H, W), entries >= floor


def build_combination(i_a: torch.Tensor, stage1: Stage1Output) -> torch.Tensor:
    """Channel-concat [I_a | coarse image | coarse semantic | up(bridge)].

    The bridge feature is bilinearly upsampled to the full resolution so
    the result keeps the output resolution.
    """
    h, w = i_a.shape[-2:]
    bridge = F.interpolate(stage1.bridge, size=(h, w), mode="bilinear",
                           align_corners=False)
    parts = [i_a, stage1.coarse_image, stage1.coarse_semantic, bridge]
    for p in parts:
        if p.shape[-2:] != (h, w):
            raise ShapeError(
                f"combination parts disagree on spatial size: {tuple(p.shape)} vs {(h, w)}"
            )
    return torch.cat(parts, dim=1)


class SelectionModule(nn.Module):
    """Multi-candidate softmax selection plus uncertainty heads.

    Produces n_candidates intermediate images from the combination feature,
    blends them with per-pixel softmax weights, bounds the result with tanh,
    and emits two uncertainty maps through softplus heads with a positivity
    floor.
    """

    def __init__(self, in_channels: int, n_candidates: int = 4, width: int = 32):
        super().__init__()
        if n_candidates < 1:
            raise ConfigurationError(f"n_candidates must be >= 1, got {n_candidates}")
        self.n_candidates = n_candidates
        self.trunk = nn.Sequential(
            nn.Conv2d(in_channels, width, 3, padding=1), nn.GELU(),
            nn.Conv2d(width, width, 3, padding=1), nn.GELU(),
        )
        self.candidates = nn.Conv2d(width, 3 * n_candidates, 3, padding=1)
        self.weights = nn.Conv2d(width, n_candidates, 3, padding=1)
        self.u_image_head = nn.Conv2d(width, 1, 3, padding=1)
        self.u_semantic_head = nn.Conv2d(width, 1, 3, padding=1)

    def selection_weights(self, feat: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.weights(feat), dim=1)  # (B, K, H, W)

    def forward(self, fc: torch.Tensor):
        b, _, h, w = fc.shape
        feat = self.trunk(fc)
        cands = self.candidates(feat).view(b, self.n_candidates, 3, h, w)
        weights = self.selection_weights(feat).unsqueeze(2)  # (B, K, 1, H, W)
        final = torch.tanh((weights * cands).sum(dim=1))
        u_image = F.softplus(self.u_image_head(feat)) + UNCERTAINTY_FLOOR
        u_semantic = F.softplus(self.u_semantic_head(feat)) + UNCERTAINTY_FLOOR
        return final, u_image, u_semantic


class SemanticUNet(nn.Module):
    """Shallow U-Net recovering a refined semantic map from the final image.

    Two down / two up steps with skip connections; the first convolution
    has 3 filters.
    """

    def __init__(self, semantic_classes: int = 4, width: int = 16):
        super().__init__()
        self.stem = nn.Sequential(nn.Conv2d(3, 3, 3, padding=1), nn.GELU())
        self.down1 = nn.Sequential(nn.Conv2d(3, width, 4, stride=2, padding=1), nn.GELU())
        self.down2 = nn.Sequential(nn.Conv2d(width, 2 * width, 4, stride=2, padding=1), nn.GELU())
        self.up1 = nn.Sequential(nn.ConvTranspose2d(2 * width, width, 4, stride=2, padding=1), nn.GELU())
        self.up2 = nn.Sequential(nn.ConvTranspose2d(2 * width, width, 4, stride=2, padding=1), nn.GELU())
        self.head = nn.Sequential(nn.Conv2d(width + 3, semantic_classes, 3, padding=1), nn.Tanh())

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        h, w = image.shape[-2:]
        if h % 4 != 0 or w % 4 != 0:
            raise ShapeError(f"input size {h}x{w} not divisible by 4")
        e0 = self.stem(image)
        e1 = self.down1(e0)
        e2 = self.down2(e1)
        d1 = self.up1(e2)
        d2 = self.up2(torch.cat([d1, e1], dim=1))
        return self.head(torch.cat([d2, e0], dim=1))


class Stage2Refiner(nn.Module):
    """Assemble the combination feature, select the final image, recover
    the refined semantic map."""

    def __init__(self, semantic_classes: int = 4, bridge_channels: int = 64,
                 n_candidates: int = 4, selection_width: int = 32,
                 unet_width: int = 16):
        super().__init__()
        in_channels = 3 + 3 + semantic_classes + bridge_channels
        self.selection = SelectionModule(in_channels, n_candidates, selection_width)
        self.semantic_net = SemanticUNet(semantic_classes, unet_width)

    def forward(self, i_a: torch.Tensor, stage1: Stage1Output) -> Stage2Output:
        fc = build_combination(i_a, stage1)
        final, u_image, u_semantic = self.selection(fc)
        refined_semantic = self.semantic_net(final)
        return Stage2Output(final, refined_semantic, u_image, u_semantic)
