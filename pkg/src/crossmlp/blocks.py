"""Cross-mixer block: the cascade unit updating paired image/semantic codes.

Each block re-tokenizes its two feature maps, runs a stack of mixer layers
(token mixing per stream, then channel mixing across the summed streams),
fuses the resulting token tables into a sigmoid attention map, and applies
gated residual updates to both pathways. Output shapes equal input shapes,
so blocks stack to any depth.
"""

import math
from typing import NamedTuple, Optional

import torch
import torch.nn as nn

from .errors import ConfigurationError, ShapeError


class BlockState(NamedTuple):
    """Paired feature codes flowing through the cascade, each (B, C_f, H, W)."""

    image_code: torch.Tensor
    semantic_code: torch.Tensor


class PatchEmbed(nn.Module):
    """Project non-overlapping P x P patches to token vectors.

    Input (B, C_f, H, W) -> token table (B, S, C) with S = H*W / P**2,
    tokens ordered row-major over the patch grid.
    """

    def __init__(self, in_channels: int, patch_size: int, hidden_dim: int):
        super().__init__()
        if patch_size < 1 or hidden_dim < 1:
            raise ConfigurationError("patch_size and hidden_dim must be >= 1")
        self.patch_size = patch_size
        self.proj = nn.Conv2d(in_channels, hidden_dim, patch_size, stride=patch_size)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        p = self.patch_size
        if h % p != 0 or w % p != 0:
            raise ShapeError(
                f"patch size {p} does not divide feature map of size {h}x{w}"
            )
        x = self.proj(x)  # (B, C, H/P, W/P)
        return x.flatten(2).transpose(1, 2)  # (B, S, C)


class PatchUnembed(nn.Module):
    """Inverse layout of PatchEmbed: tokens back to a spatial map.

    Each token is expanded to its P x P patch by a learned per-patch linear
    map (transposed patch convolution), restoring the row-major grid.
    """

    def __init__(self, hidden_dim: int, patch_size: int, out_channels: int):
        super().__init__()
        self.patch_size = patch_size
        self.proj = nn.ConvTranspose2d(hidden_dim, out_channels, patch_size, stride=patch_size)

    def forward(self, tokens: torch.Tensor, grid_hw: tuple) -> torch.Tensor:
        b, s, c = tokens.shape
        gh, gw = grid_hw
        if gh * gw != s:
            raise ShapeError(f"token count {s} does not match {gh}x{gw} patch grid")
        x = tokens.transpose(1, 2).reshape(b, c, gh, gw)
        return self.proj(x)  # (B, C_out, H, W)


class TokenMixing(nn.Module):
    """Residual MLP over the token axis, shared across channels.

    For each channel column: x + W2 @ gelu(W1 @ layernorm(x)_column).
    The MLP carries no biases; only the layernorm has an affine part.
    """

    def __init__(self, n_tokens: int, channels: int, hidden_dim: Optional[int] = None):
        super().__init__()
        hidden_dim = hidden_dim or math.ceil(n_tokens / 2)
        self.norm = nn.LayerNorm(channels)
        self.fc1 = nn.Linear(n_tokens, hidden_dim, bias=False)
        self.act = nn.GELU()  # exact erf form
        self.fc2 = nn.Linear(hidden_dim, n_tokens, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-2] != self.fc1.in_features:
            raise ShapeError(
                f"expected {self.fc1.in_features} tokens, got {x.shape[-2]}"
            )
        y = self.norm(x).transpose(-1, -2)  # (B, C, S)
        y = self.fc2(self.act(self.fc1(y))).transpose(-1, -2)
        return x + y


class CrossChannelMixing(nn.Module):
    """Residual MLPs over the channel axis, cross-coupled between streams.

    Each stream normalizes the *sum* of both streams and adds its own MLP
    of that shared tensor: y_img = u_img + MLP_img(LN_img(u_img + u_sem))
    and symmetrically for the semantic stream. Weights are shared across
    all token rows.
    """

    def __init__(self, channels: int, hidden_dim: Optional[int] = None):
        super().__init__()
        hidden_dim = hidden_dim or math.ceil(channels / 2)
        self.norm_img = nn.LayerNorm(channels)
        self.norm_sem = nn.LayerNorm(channels)
        self.fc1_img = nn.Linear(channels, hidden_dim, bias=False)
        self.fc2_img = nn.Linear(hidden_dim, channels, bias=False)
        self.fc1_sem = nn.Linear(channels, hidden_dim, bias=False)
        self.fc2_sem = nn.Linear(hidden_dim, channels, bias=False)
        self.act = nn.GELU()

    def forward(self, u_img: torch.Tensor, u_sem: torch.Tensor):
        if u_img.shape != u_sem.shape:
            raise ShapeError(
                f"stream shapes differ: {tuple(u_img.shape)} vs {tuple(u_sem.shape)}"
            )
        summed = u_img + u_sem
        y_img = u_img + self.fc2_img(self.act(self.fc1_img(self.norm_img(summed))))
        y_sem = u_sem + self.fc2_sem(self.act(self.fc1_sem(self.norm_sem(summed))))
        return y_img, y_sem


class CrossMixerLayer(nn.Module):
    """One mixer layer: per-stream token mixing, then cross channel mixing."""

    def __init__(self, n_tokens: int, channels: int,
                 token_hidden: Optional[int] = None,
                 channel_hidden: Optional[int] = None):
        super().__init__()
        self.token_img = TokenMixing(n_tokens, channels, token_hidden)
        self.token_sem = TokenMixing(n_tokens, channels, token_hidden)
        self.cross = CrossChannelMixing(channels, channel_hidden)

    def forward(self, x_img: torch.Tensor, x_sem: torch.Tensor):
        u_img = self.token_img(x_img)
        u_sem = self.token_sem(x_sem)
        return self.cross(u_img, u_sem)


class CrossMixerStack(nn.Module):
    """Sequential stack of mixer layers over paired token tables (default 7)."""

    def __init__(self, n_tokens: int, channels: int, n_layers: int = 7,
                 token_hidden: Optional[int] = None,
                 channel_hidden: Optional[int] = None):
        super().__init__()
        if n_layers < 1:
            raise ConfigurationError("mixer stack needs at least one layer")
        self.layers = nn.ModuleList(
            CrossMixerLayer(n_tokens, channels, token_hidden, channel_hidden)
            for _ in range(n_layers)
        )

    def forward(self, x_img: torch.Tensor, x_sem: torch.Tensor):
        for layer in self.layers:
            x_img, x_sem = layer(x_img, x_sem)
        return x_img, x_sem


class AttentionFuse(nn.Module):
    """Fuse both token tables into a per-element attention map in (0, 1).

    Both tables are un-embedded to spatial maps, channel-concatenated into
    a cue map Y, and passed through a 1 x 1 convolution plus sigmoid. The
    cue map is returned alongside because the semantic pathway consumes it.
    """

    def __init__(self, hidden_dim: int, patch_size: int, out_channels: int,
                 fuse_channels: Optional[int] = None):
        super().__init__()
        fuse_channels = fuse_channels or out_channels
        self.unembed_img = PatchUnembed(hidden_dim, patch_size, fuse_channels)
        self.unembed_sem = PatchUnembed(hidden_dim, patch_size, fuse_channels)
        self.conv = nn.Conv2d(2 * fuse_channels, out_channels, 1)

    def forward(self, y_img: torch.Tensor, y_sem: torch.Tensor, grid_hw: tuple):
        y = torch.cat(
            [self.unembed_img(y_img, grid_hw), self.unembed_sem(y_sem, grid_hw)], dim=1
        )
        m_att = torch.sigmoid(self.conv(y))
        return m_att, y


class ImageCodeUpdate(nn.Module):
    """Gated residual update of the image code: f + m * conv3x3(f)."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, f_img: torch.Tensor, m_att: torch.Tensor) -> torch.Tensor:
        if f_img.shape != m_att.shape:
            raise ShapeError(
                f"attention map {tuple(m_att.shape)} does not match code {tuple(f_img.shape)}"
            )
        return f_img + m_att * self.conv(f_img)


class SemanticCodeUpdate(nn.Module):
    """Concat updated image code with the cue map, project back to C_f.

    The concatenation widens the channel count; a learned 3x3 projection
    restores it so successive blocks see identical interfaces.
    """

    def __init__(self, channels: int, cue_channels: int):
        super().__init__()
        self.proj = nn.Conv2d(channels + cue_channels, channels, 3, padding=1)

    def forward(self, f_img_t: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        if f_img_t.shape[-2:] != y.shape[-2:]:
            raise ShapeError(
                f"cue map {tuple(y.shape)} does not align with code {tuple(f_img_t.shape)}"
            )
        return self.proj(torch.cat([f_img_t, y], dim=1))


class CrossMLPBlock(nn.Module):
    """One full cascade block over a BlockState.

    Args:
        channels: feature channels C_f of both codes.
        code_hw: spatial size (H, W) of the codes (token-mixing weights
            are tied to the token count, so the block is size-specific).
        patch_size: patch edge P; must divide H and W.
        token_dim: token hidden width C (defaults to C_f).
        n_layers: mixer layers per block (default 7).
    """

    def __init__(self, channels: int, code_hw: tuple, patch_size: int = 4,
                 token_dim: Optional[int] = None, n_layers: int = 7,
                 token_hidden: Optional[int] = None,
                 channel_hidden: Optional[int] = None,
                 fuse_channels: Optional[int] = None):
        super().__init__()
        h, w = code_hw
        if h % patch_size != 0 or w % patch_size != 0:
            raise ShapeError(
                f"patch size {patch_size} does not divide code size {h}x{w}"
            )
        token_dim = token_dim or channels
        fuse_channels = fuse_channels or channels
        self.code_hw = (h, w)
        self.grid_hw = (h // patch_size, w // patch_size)
        n_tokens = self.grid_hw[0] * self.grid_hw[1]

        self.embed_img = PatchEmbed(channels, patch_size, token_dim)
        self.embed_sem = PatchEmbed(channels, patch_size, token_dim)
        self.mixer = CrossMixerStack(n_tokens, token_dim, n_layers,
                                     token_hidden, channel_hidden)
        self.fuse = AttentionFuse(token_dim, patch_size, channels, fuse_channels)
        self.image_update = ImageCodeUpdate(channels)
        self.semantic_update = SemanticCodeUpdate(channels, 2 * fuse_channels)

    def forward(self, state: BlockState) -> BlockState:
        f_img, f_sem = state
        if f_img.shape != f_sem.shape:
            raise ShapeError(
                f"code shapes differ: {tuple(f_img.shape)} vs {tuple(f_sem.shape)}"
            )
        if tuple(f_img.shape[-2:]) != self.code_hw:
            raise ShapeError(
                f"block built for {self.code_hw}, got {tuple(f_img.shape[-2:])}"
            )
        x_img = self.embed_img(f_img)
        x_sem = self.embed_sem(f_sem)
        y_img, y_sem = self.mixer(x_img, x_sem)
        m_att, y = self.fuse(y_img, y_sem, self.grid_hw)
        f_img_t = self.image_update(f_img, m_att)
        f_sem_t = self.semantic_update(f_img_t, y)
        return BlockState(f_img_t, f_sem_t)
