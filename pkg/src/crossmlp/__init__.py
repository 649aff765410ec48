"""Two-stage cross-view image translation with a cross-mixer cascade."""

from .blocks import (AttentionFuse, BlockState, CrossChannelMixing,
                     CrossMixerLayer, CrossMixerStack, CrossMLPBlock,
                     ImageCodeUpdate, PatchEmbed, PatchUnembed,
                     SemanticCodeUpdate, TokenMixing)
from .config import RunConfig, load_config, parse_config, serialize_config
from .checkpoint import (CHECKPOINT_TAG, load_checkpoint, restore_modules,
                         save_checkpoint)
from .data import (MANIFEST_HEADER, ManifestEntry, SamplePair,
                   generate_toy_dataset, load_pair, read_manifest,
                   write_manifest)
from .discriminator import PatchDiscriminator
from .errors import (ConfigurationError, DataError, DomainError, ShapeError,
                     TrainingError)
from .losses import (LossBundle, adversarial_loss, baseline_uncertainty_loss,
                     refined_pixel_loss, total_objective, tv_loss)
from .metrics import (MetricReport, ToyClassifier, inception_score, kl_score,
                      psnr, sharpness_difference, ssim, topk_accuracy)
from .reporting import ablate, evaluate, generate
from .stage1 import Stage1Generator, Stage1Output
from .stage2 import SelectionModule, SemanticUNet, Stage2Output, Stage2Refiner
from .trainer import TrainState, initialize, train, train_step

__version__ = "0.1.0"

__all__ = [
    "AttentionFuse", "BlockState", "CrossChannelMixing", "CrossMixerLayer",
    "CrossMixerStack", "CrossMLPBlock", "ImageCodeUpdate", "PatchEmbed",
    "PatchUnembed", "SemanticCodeUpdate", "TokenMixing",
    "RunConfig", "load_config", "parse_config", "serialize_config",
    "CHECKPOINT_TAG", "load_checkpoint", "restore_modules", "save_checkpoint",
    "MANIFEST_HEADER", "ManifestEntry", "SamplePair", "generate_toy_dataset",
    "load_pair", "read_manifest", "write_manifest",
    "PatchDiscriminator",
    "ConfigurationError", "DataError", "DomainError", "ShapeError",
    "TrainingError",
    "LossBundle", "adversarial_loss", "baseline_uncertainty_loss",
    "refined_pixel_loss", "total_objective", "tv_loss",
    "MetricReport", "ToyClassifier", "inception_score", "kl_score", "psnr",
    "sharpness_difference", "ssim", "topk_accuracy",
    "ablate", "evaluate", "generate",
    "Stage1Generator", "Stage1Output",
    "SelectionModule", "SemanticUNet", "Stage2Output", "Stage2Refiner",
    "TrainState", "initialize", "train", "train_step",
]
