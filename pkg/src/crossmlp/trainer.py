"""Training loop: alternating generator/discriminator Adam steps.

Each step first updates both generator stages with the discriminator
frozen, then updates the discriminator with the generators frozen, per the
two-player objective. Checkpoints are the deterministic archive format and
runs are reproducible bit-for-bit from (seed, config, data); resuming from
a checkpoint continues the exact trajectory.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import torch
import torch.nn as nn

from .checkpoint import (load_checkpoint, restore_modules, restore_optimizers,
                         restore_rng, save_checkpoint)
from .config import RunConfig
from .data import batches_per_epoch, iterate_epoch, read_manifest
from .discriminator import PatchDiscriminator
from .errors import ConfigurationError, TrainingError
from .losses import (adversarial_loss, baseline_uncertainty_loss,
                     refined_pixel_loss, total_objective, tv_loss)
from .stage1 import Stage1Generator
from .stage2 import Stage2Refiner

LOG_NAME = "train.log"
FINAL_CHECKPOINT = "final.ckpt"


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def init_weights(module: nn.Module, policy: str = "gaussian") -> None:
    """Re-draw conv/linear weights per policy; biases become zero.

    gaussian: N(0, 0.02)  (the paired-translation lineage default)
    gaussian-wide: N(0, 0.2)
    xavier: Xavier normal
    """
    if policy not in ("gaussian", "gaussian-wide", "xavier"):
        raise ConfigurationError(f"unknown init policy {policy!r}")
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            if policy == "gaussian":
                nn.init.normal_(m.weight, 0.0, 0.02)
            elif policy == "gaussian-wide":
                nn.init.normal_(m.weight, 0.0, 0.2)
            else:
                nn.init.xavier_normal_(m.weight)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.LayerNorm):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def build_models(cfg: RunConfig):
    m = cfg.model
    stage1 = Stage1Generator(
        image_size=cfg.data.image_size,
        semantic_classes=cfg.data.classes,
        n_blocks=m.blocks,
        n_down=m.n_down,
        base_channels=m.base_channels,
        patch_size=m.patch_size,
        mixer_layers=m.mixer_layers,
        token_dim=m.token_dim or None,
        bridge_channels=m.bridge_channels or None,
    )
    stage2 = Stage2Refiner(
        semantic_classes=cfg.data.classes,
        bridge_channels=stage1.bridge_channels,
        n_candidates=m.n_candidates,
        selection_width=m.selection_width,
        unet_width=m.unet_width,
    )
    disc = PatchDiscriminator(in_channels=6, base_channels=m.disc_channels)
    return stage1, stage2, disc


@dataclass
class TrainState:
    config: RunConfig
    stage1: Stage1Generator
    stage2: Stage2Refiner
    disc: PatchDiscriminator
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer
    step: int = 0

    def modules(self) -> Dict[str, nn.Module]:
        return {"stage1": self.stage1, "stage2": self.stage2, "disc": self.disc}

    def optimizers(self) -> Dict[str, torch.optim.Optimizer]:
        return {"g": self.opt_g, "d": self.opt_d}


def initialize(cfg: RunConfig) -> TrainState:
    """Seeded model + optimizer construction; same seed, same parameters."""
    torch.manual_seed(cfg.run.seed)
    stage1, stage2, disc = build_models(cfg)
    for mod in (stage1, stage2, disc):
        init_weights(mod, cfg.run.init)
    betas = (cfg.optim.beta1, cfg.optim.beta2)
    opt_g = torch.optim.Adam(
        list(stage1.parameters()) + list(stage2.parameters()),
        lr=cfg.optim.lr, betas=betas,
    )
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.optim.lr, betas=betas)
    return TrainState(cfg, stage1, stage2, disc, opt_g, opt_d)


def restore(cfg: RunConfig, ckpt_path) -> TrainState:
    """Rebuild a TrainState mid-run from a checkpoint."""
    ckpt = load_checkpoint(ckpt_path)
    state = initialize(cfg)
    restore_modules(ckpt, state.modules())
    restore_optimizers(ckpt, state.optimizers())
    restore_rng(ckpt)
    state.step = ckpt.step
    return state


# ---------------------------------------------------------------------------
# single step
# ---------------------------------------------------------------------------

@dataclass
class StepRecord:
    step: int
    g_total: float
    d: float
    refined_img: float
    refined_sem: float
    tv: float
    adv: float
    s1_l1: float


def format_log_line(rec: StepRecord) -> str:
    return (f"step={rec.step} g_total={rec.g_total:.6f} d={rec.d:.6f} "
            f"refined_img={rec.refined_img:.6f} refined_sem={rec.refined_sem:.6f} "
            f"tv={rec.tv:.6f}")


def _set_requires_grad(module: nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


def _check_finite(name: str, value: torch.Tensor, step: int) -> None:
    if not torch.isfinite(value).all():
        raise TrainingError(f"non-finite {name} loss at step {step}")


def train_step(state: TrainState, src: torch.Tensor, tgt: torch.Tensor,
               sem: torch.Tensor) -> StepRecord:
    """One generator update (D fixed) followed by one D update (G fixed)."""
    bundle, coarse, final = generator_substep(state, src, tgt, sem)
    d_loss = discriminator_substep(state, src, tgt, coarse, final)
    state.step += 1
    with torch.no_grad():
        s1_l1 = (coarse - tgt).abs().mean()
    return StepRecord(
        step=state.step,
        g_total=bundle.total.detach().item(),
        d=d_loss.detach().item(),
        refined_img=bundle.refined_image.detach().item(),
        refined_sem=bundle.refined_semantic.detach().item(),
        tv=bundle.tv.detach().item(),
        adv=bundle.adversarial.detach().item(),
        s1_l1=s1_l1.item(),
    )


def generator_substep(state: TrainState, src: torch.Tensor, tgt: torch.Tensor,
                      sem: torch.Tensor):
    """One Adam step on both generator stages with the discriminator fixed.

    Returns the loss bundle plus detached stage outputs for the
    discriminator sub-step.
    """
    cfg = state.config
    step = state.step + 1
    _set_requires_grad(state.disc, False)
    state.opt_g.zero_grad()
    s1 = state.stage1(src, sem)
    s2 = state.stage2(src, s1)
    # catch NaN/inf at the source so the error names the broken stage
    # instead of whichever loss term chokes on the poisoned values first
    for name, value in (("stage1 image", s1.coarse_image),
                        ("stage1 semantic", s1.coarse_semantic),
                        ("stage2 image", s2.final_image),
                        ("stage2 semantic", s2.refined_semantic),
                        ("stage2 uncertainty", s2.u_image),
                        ("stage2 uncertainty", s2.u_semantic)):
        if not torch.isfinite(value).all():
            raise TrainingError(f"non-finite {name} output at step {step}")

    if cfg.loss.variant == "refined":
        loss_img = refined_pixel_loss(s1.coarse_image, s2.final_image, tgt, s2.u_image)
        loss_sem = refined_pixel_loss(s1.coarse_semantic, s2.refined_semantic, sem,
                                      s2.u_semantic)
    else:  # per-pair uncertainty loss, no cross-stage grouping (ablation arm)
        loss_img = (baseline_uncertainty_loss(s1.coarse_image, tgt, s2.u_image)
                    + baseline_uncertainty_loss(s2.final_image, tgt, s2.u_image))
        loss_sem = (baseline_uncertainty_loss(s1.coarse_semantic, sem, s2.u_semantic)
                    + baseline_uncertainty_loss(s2.refined_semantic, sem, s2.u_semantic))

    # both stages' candidates share one discriminator (averaged terms)
    adv_g = 0.5 * (
        adversarial_loss(None, state.disc.score_coarse(src, s1.coarse_image), "generator")
        + adversarial_loss(None, state.disc.score_refined(src, s2.final_image), "generator")
    )
    tv = tv_loss(s2.final_image)
    bundle = total_objective(loss_img, loss_sem, adv_g, tv,
                             cfg.loss.lambda_image, cfg.loss.lambda_semantic,
                             cfg.loss.lambda_tv)
    for name, value in (("refined_image", bundle.refined_image),
                        ("refined_semantic", bundle.refined_semantic),
                        ("adversarial", bundle.adversarial),
                        ("tv", bundle.tv), ("total", bundle.total)):
        _check_finite(name, value, step)
    bundle.total.backward()
    state.opt_g.step()
    _set_requires_grad(state.disc, True)
    return bundle, s1.coarse_image.detach(), s2.final_image.detach()


def discriminator_substep(state: TrainState, src: torch.Tensor, tgt: torch.Tensor,
                          coarse: torch.Tensor, final: torch.Tensor) -> torch.Tensor:
    """One Adam step on the discriminator with the generators fixed."""
    step = state.step + 1
    _set_requires_grad(state.stage1, False)
    _set_requires_grad(state.stage2, False)
    state.opt_d.zero_grad()
    d_real = state.disc(src, tgt)
    d_loss = 0.5 * (
        adversarial_loss(d_real, state.disc.score_coarse(src, coarse.detach()),
                         "discriminator")
        + adversarial_loss(d_real, state.disc.score_refined(src, final.detach()),
                           "discriminator")
    )
    _check_finite("discriminator", d_loss, step)
    d_loss.backward()
    state.opt_d.step()
    _set_requires_grad(state.stage1, True)
    _set_requires_grad(state.stage2, True)
    return d_loss


# ---------------------------------------------------------------------------
# full run
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    state: TrainState
    history: List[StepRecord]
    out_dir: Path
    log_path: Path
    final_checkpoint: Path


def train(cfg: RunConfig, resume: Optional[str] = None) -> TrainResult:
    """Run epochs x batches of train_step with periodic checkpoints.

    epochs=0 writes the initialization checkpoint and stops. Resuming
    appends to the existing log and continues the interrupted trajectory
    (data order is re-derived statelessly from (seed, epoch)).
    """
    out_dir = Path(cfg.run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = read_manifest(cfg.data.manifest)
    steps_per_epoch = batches_per_epoch(len(entries), cfg.run.batch_size)
    total_steps = cfg.run.epochs * steps_per_epoch

    state = restore(cfg, resume) if resume else initialize(cfg)
    if state.step > total_steps:
        raise ConfigurationError(
            f"checkpoint is at step {state.step}, beyond {total_steps} total steps"
        )

    log_path = out_dir / LOG_NAME
    history: List[StepRecord] = []
    with open(log_path, "a" if resume else "w") as log:
        start_epoch = state.step // steps_per_epoch
        start_batch = state.step % steps_per_epoch
        for epoch in range(start_epoch, cfg.run.epochs):
            first = start_batch if epoch == start_epoch else 0
            for _, _ids, src, tgt, sem in iterate_epoch(
                entries, cfg.data.classes, cfg.data.image_size,
                cfg.run.batch_size, cfg.run.seed, epoch,
                augment=cfg.data.augment, start_batch=first,
            ):
                rec = train_step(state, src, tgt, sem)
                log.write(format_log_line(rec) + "\n")
                log.flush()
                history.append(rec)
                if (cfg.run.checkpoint_every > 0
                        and rec.step % cfg.run.checkpoint_every == 0
                        and rec.step < total_steps):
                    save_checkpoint(
                        out_dir / f"step{rec.step:06d}.ckpt",
                        step=rec.step, epoch=epoch, config=cfg,
                        modules=state.modules(), optimizers=state.optimizers(),
                    )

    final_path = out_dir / FINAL_CHECKPOINT
    save_checkpoint(final_path, step=state.step, epoch=cfg.run.epochs, config=cfg,
                    modules=state.modules(), optimizers=state.optimizers())
    return TrainResult(state, history, out_dir, log_path, final_path)


def load_generator(ckpt_path):
    """Inference-ready (stage1, stage2, config) from a checkpoint."""
    ckpt = load_checkpoint(ckpt_path)
    stage1, stage2, _disc = build_models(ckpt.config)
    restore_modules(ckpt, {"stage1": stage1, "stage2": stage2})
    stage1.eval()
    stage2.eval()
    return stage1, stage2, ckpt.config
