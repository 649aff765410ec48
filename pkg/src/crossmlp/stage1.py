"""Stage-1 generator: twin encoders, cross-mixer cascade, three decoders.

Produces the coarse target-view image, the coarse semantic map, and a
half-resolution bridge feature carrying latent transformation cues into
stage 2. Activations are GELU throughout so finite-difference gradient
checks stay clean.
"""

from typing import NamedTuple, Optional

import torch
import torch.nn as nn

from .blocks import BlockState, CrossMLPBlock
from .errors import ConfigurationError, ShapeError


class Stage1Output(NamedTuple):
    coarse_image: torch.Tensor     # (B, 3, H, W), tanh-bounded
    coarse_semantic: torch.Tensor  # (B, K_s, H, W), tanh-bounded
    bridge: torch.Tensor           # (B, C_b, H/2, W/2)


class Encoder(nn.Module):
    """n_down stride-2 convolutions, doubling channels each step."""

    def __init__(self, in_channels: int, base_channels: int = 32, n_down: int = 2):
        super().__init__()
        layers = []
        ch = in_channels
        out = base_channels
        for _ in range(n_down):
            layers += [nn.Conv2d(ch, out, 4, stride=2, padding=1), nn.GELU()]
            ch, out = out, out * 2
        self.net = nn.Sequential(*layers)
        self.out_channels = ch
        self.n_down = n_down

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        d = 2 ** self.n_down
        if h % d != 0 or w % d != 0:
            raise ShapeError(f"input size {h}x{w} not divisible by 2^{self.n_down}")
        return self.net(x)


class Decoder(nn.Module):
    """n_up stride-2 transposed convolutions, halving channels each step."""

    def __init__(self, in_channels: int, out_channels: int, n_up: int,
                 tanh: bool = False):
        super().__init__()
        layers = []
        ch = in_channels
        for i in range(n_up):
            last = i == n_up - 1
            out = out_channels if last else max(ch // 2, out_channels)
            layers.append(nn.ConvTranspose2d(ch, out, 4, stride=2, padding=1))
            if not last:
                layers.append(nn.GELU())
            ch = out
        if tanh:
            layers.append(nn.Tanh())
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class Stage1Generator(nn.Module):
    """encode -> cascade of T cross-mixer blocks -> decode three outputs.

    Args:
        image_size: full input resolution (square).
        semantic_classes: channel count of the semantic input/output.
        n_blocks: cascade depth T (>= 1; 3/5/7/9 are the studied settings).
        n_down: encoder downsampling steps N (must be even, the bridge
            decoder uses N/2 upsampling steps).
    """

    def __init__(self, image_size: int = 256, semantic_classes: int = 4,
                 n_blocks: int = 9, n_down: int = 2, base_channels: int = 32,
                 patch_size: int = 4, mixer_layers: int = 7,
                 token_dim: Optional[int] = None,
                 bridge_channels: Optional[int] = None):
        super().__init__()
        if n_blocks < 1:
            raise ConfigurationError("cascade needs at least one block")
        if n_down % 2 != 0:
            raise ConfigurationError(f"n_down must be even, got {n_down}")
        if image_size % (2 ** n_down) != 0:
            raise ShapeError(f"image size {image_size} not divisible by 2^{n_down}")

        self.encoder_img = Encoder(3, base_channels, n_down)
        self.encoder_sem = Encoder(semantic_classes, base_channels, n_down)
        feat = self.encoder_img.out_channels
        code = image_size // (2 ** n_down)
        self.feature_channels = feat
        self.bridge_channels = bridge_channels or feat

        self.blocks = nn.ModuleList(
            CrossMLPBlock(feat, (code, code), patch_size, token_dim, mixer_layers)
            for _ in range(n_blocks)
        )
        self.decoder_img = Decoder(feat, 3, n_down, tanh=True)
        self.decoder_sem = Decoder(feat, semantic_classes, n_down, tanh=True)
        self.decoder_bridge = Decoder(feat, self.bridge_channels, n_down // 2)

    def encode(self, image: torch.Tensor, semantic: torch.Tensor) -> BlockState:
        if image.shape[-2:] != semantic.shape[-2:]:
            raise ShapeError(
                f"image {tuple(image.shape)} and semantic {tuple(semantic.shape)} "
                "spatial sizes differ"
            )
        return BlockState(self.encoder_img(image), self.encoder_sem(semantic))

    def cascade(self, state: BlockState) -> BlockState:
        for block in self.blocks:
            state = block(state)
        return state

    def decode_outputs(self, state: BlockState) -> Stage1Output:
        f_img, f_sem = state
        return Stage1Output(
            coarse_image=self.decoder_img(f_img),
            coarse_semantic=self.decoder_sem(f_sem),
            bridge=self.decoder_bridge(f_sem),
        )

    def forward(self, image: torch.Tensor, semantic: torch.Tensor) -> Stage1Output:
        return self.decode_outputs(self.cascade(self.encode(image, semantic)))
