"""Training objectives.

The refined pixel loss groups both stages' residuals under one uncertainty
map and adds a cross-stage consistency square term; the baseline variant
(one fake-real pair per uncertainty map) is kept for the ablation. The
adversarial term is a numerically stable sigmoid cross-entropy, and the
total-variation term is a plain sum of absolute forward differences.
"""

import warnings
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import ConfigurationError, DomainError

DEFAULT_LAMBDA_IMAGE = 0.5
DEFAULT_LAMBDA_SEMANTIC = 0.5
DEFAULT_LAMBDA_TV = 1.0


@dataclass
class LossBundle:
    """Scalar loss components plus their weighted sum."""

    refined_image: torch.Tensor
    refined_semantic: torch.Tensor
    adversarial: torch.Tensor
    tv: torch.Tensor
    total: torch.Tensor


def _check_uncertainty(u: torch.Tensor) -> None:
    if not torch.all(u > 0):
        raise DomainError("uncertainty map must be strictly positive")


def refined_pixel_loss(fake1: torch.Tensor, fake2: torch.Tensor,
                       real: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
    """Mean of (|fake1-real| + |fake2-real|)/u + log(u) + (fake1-fake2)^2.

    `u` may broadcast (e.g. one channel against three); the same map
    weights both residuals. Symmetric in the two fakes.
    """
    if fake1.shape != real.shape or fake2.shape != real.shape:
        raise DomainError(
            f"shape mismatch: {tuple(fake1.shape)}, {tuple(fake2.shape)}, "
            f"{tuple(real.shape)}"
        )
    _check_uncertainty(u)
    residual = (fake1 - real).abs() + (fake2 - real).abs()
    pointwise = residual / u + torch.log(u) + (fake1 - fake2) ** 2
    return pointwise.mean()


def baseline_uncertainty_loss(fake: torch.Tensor, real: torch.Tensor,
                              u: torch.Tensor) -> torch.Tensor:
    """Mean of |fake-real|/u + log(u): one fake-real pair per call."""
    if fake.shape != real.shape:
        raise DomainError(f"shape mismatch: {tuple(fake.shape)} vs {tuple(real.shape)}")
    _check_uncertainty(u)
    pointwise = (fake - real).abs() / u + torch.log(u)
    return pointwise.mean()


def adversarial_loss(d_real_logits, d_fake_logits, side: str) -> torch.Tensor:
    """Conditional GAN loss from pre-sigmoid patch logits.

    side="discriminator": cross-entropy pushing real logits up and fake
    logits down. side="generator": non-saturating form, pushing fake logits
    up (real logits are ignored). Both use log-sum-exp stable softplus.
    """
    if side == "discriminator":
        real = F.softplus(-d_real_logits).mean()
        fake = F.softplus(d_fake_logits).mean()
        return real + fake
    if side == "generator":
        return F.softplus(-d_fake_logits).mean()
    raise ConfigurationError(f"unknown side {side!r}")


def tv_loss(image: torch.Tensor) -> torch.Tensor:
    """Sum of absolute forward differences over valid indices.

    Expects (..., H, W) with any leading channel/batch axes; differences
    are taken along the two trailing spatial axes and summed per channel.
    """
    dv = (image[..., 1:, :] - image[..., :-1, :]).abs().sum()
    dh = (image[..., :, 1:] - image[..., :, :-1]).abs().sum()
    return dv + dh


def total_objective(refined_image, refined_semantic, adversarial, tv,
                    lambda_image: float = DEFAULT_LAMBDA_IMAGE,
                    lambda_semantic: float = DEFAULT_LAMBDA_SEMANTIC,
                    lambda_tv: float = DEFAULT_LAMBDA_TV) -> LossBundle:
    """Weighted combination of the generator-side loss components."""
    if lambda_image < 0 or lambda_semantic < 0 or lambda_tv < 0:
        warnings.warn("negative loss weight; accepted for experimentation")
    total = (lambda_image * refined_image + lambda_semantic * refined_semantic
             + adversarial + lambda_tv * tv)
    return LossBundle(refined_image, refined_semantic, adversarial, tv, total)
