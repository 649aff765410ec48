"""Evaluation metric battery.

Pixel-level scores (SSIM, PSNR, sharpness difference) plus classifier-based
scores (inception score, KL score, top-k accuracy) computed from per-image
class probability rows. The classifier itself is pluggable: any callable
mapping an image batch to probability rows works, and rows can also be
loaded from a tab-separated file to decouple the metric math from any
model runtime.

Sharpness difference has no universally fixed formula; here it is defined
as a PSNR-style score on gradient-magnitude images (sum of absolute forward
differences per pixel), which preserves the higher-is-better scaling of the
other pixel metrics.
"""

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.signal import convolve2d

from .errors import DataError, DomainError, ShapeError

PSNR_CAP = 99.0
PROBS_HEADER = "#classes"


# ---------------------------------------------------------------------------
# pixel-level metrics
# ---------------------------------------------------------------------------

def _as_channels(x: np.ndarray) -> np.ndarray:
    """(H, W) or (H, W, C) -> (C, H, W) float64 view for per-channel loops."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None]
    if x.ndim == 3:
        return np.moveaxis(x, -1, 0)
    raise ShapeError(f"expected 2-D or 3-D image, got shape {x.shape}")


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(x: np.ndarray, y: np.ndarray, data_range: float,
         window: int = 11, sigma: float = 1.5) -> float:
    """Structural similarity, channel-averaged.

    Gaussian window (default 11x11, sigma 1.5), stability constants
    (0.01*range)^2 and (0.03*range)^2, local statistics from valid-mode
    windowing.
    """
    if data_range <= 0:
        raise DomainError(f"data_range must be positive, got {data_range}")
    xs, ys = _as_channels(x), _as_channels(y)
    if xs.shape != ys.shape:
        raise ShapeError(f"shape mismatch: {np.shape(x)} vs {np.shape(y)}")
    if xs.shape[-2] < window or xs.shape[-1] < window:
        raise ShapeError(f"image smaller than {window}x{window} window")
    w = _gaussian_window(window, sigma)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    values = []
    for xc, yc in zip(xs, ys):
        mu_x = convolve2d(xc, w, mode="valid")
        mu_y = convolve2d(yc, w, mode="valid")
        s_xx = convolve2d(xc * xc, w, mode="valid") - mu_x ** 2
        s_yy = convolve2d(yc * yc, w, mode="valid") - mu_y ** 2
        s_xy = convolve2d(xc * yc, w, mode="valid") - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * s_xy + c2)
        den = (mu_x ** 2 + mu_y ** 2 + c1) * (s_xx + s_yy + c2)
        values.append(np.mean(num / den))
    return float(np.mean(values))


def psnr(x: np.ndarray, y: np.ndarray, data_range: float) -> float:
    """10*log10(range^2 / MSE); identical images return the 99.0 cap."""
    if data_range <= 0:
        raise DomainError(f"data_range must be positive, got {data_range}")
    xs, ys = _as_channels(x), _as_channels(y)
    if xs.shape != ys.shape:
        raise ShapeError(f"shape mismatch: {np.shape(x)} vs {np.shape(y)}")
    mse = float(np.mean((xs - ys) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return float(10.0 * np.log10(data_range ** 2 / mse))


def _gradient_magnitude(x: np.ndarray) -> np.ndarray:
    """|forward row diff| + |forward column diff| on the common valid grid."""
    dv = np.abs(x[:, 1:, :] - x[:, :-1, :])[:, :, :-1]
    dh = np.abs(x[:, :, 1:] - x[:, :, :-1])[:, :-1, :]
    return dv + dh


def sharpness_difference(x: np.ndarray, y: np.ndarray, data_range: float) -> float:
    """PSNR-style score between gradient-magnitude images (local definition)."""
    if data_range <= 0:
        raise DomainError(f"data_range must be positive, got {data_range}")
    xs, ys = _as_channels(x), _as_channels(y)
    if xs.shape != ys.shape:
        raise ShapeError(f"shape mismatch: {np.shape(x)} vs {np.shape(y)}")
    gx, gy = _gradient_magnitude(xs), _gradient_magnitude(ys)
    mse = float(np.mean((gx - gy) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return float(10.0 * np.log10(data_range ** 2 / mse))


# ---------------------------------------------------------------------------
# classifier-based metrics
# ---------------------------------------------------------------------------

def _check_probs(probs: np.ndarray, tol: float = 1e-4) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ShapeError(f"expected (N, K) probability rows, got {probs.shape}")
    if np.any(probs < 0):
        raise DomainError("probability rows must be nonnegative")
    sums = probs.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > tol):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise DomainError(f"probability rows not normalized (max deviation {worst:.2e})")
    return probs


def _row_kl(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """KL(p_i || q) per row, skipping zero entries of p."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(q)[None, :]), 0.0)
    return terms.sum(axis=1)


def inception_score(probs: np.ndarray, splits: int = 1) -> float:
    """exp(mean_i KL(p(y|x_i) || mean_j p(y|x_j))), averaged over splits."""
    probs = _check_probs(probs)
    n = probs.shape[0]
    if splits < 1 or splits > n:
        raise DomainError(f"splits must be in [1, {n}], got {splits}")
    scores = []
    for part in np.array_split(probs, splits):
        marginal = part.mean(axis=0)
        scores.append(np.exp(_row_kl(part, marginal).mean()))
    return float(np.mean(scores))


def inception_score_topk(probs: np.ndarray, k: int, splits: int = 1) -> float:
    """Inception score after keeping each row's k largest entries, renormalized."""
    probs = _check_probs(probs)
    if k < 1 or k > probs.shape[1]:
        raise DomainError(f"k must be in [1, {probs.shape[1]}], got {k}")
    order = np.argsort(-probs, axis=1)
    mask = np.zeros_like(probs)
    np.put_along_axis(mask, order[:, :k], 1.0, axis=1)
    kept = probs * mask
    kept /= kept.sum(axis=1, keepdims=True)
    return inception_score(kept, splits)


def kl_score(probs_fake: np.ndarray, probs_real: np.ndarray,
             eps: float = 1e-10) -> Tuple[float, float]:
    """Per-fake KL against the real marginal; returns (mean, std)."""
    probs_fake = _check_probs(probs_fake)
    probs_real = _check_probs(probs_real)
    if probs_fake.shape[1] != probs_real.shape[1]:
        raise ShapeError(
            f"class counts differ: {probs_fake.shape[1]} vs {probs_real.shape[1]}"
        )
    marginal = np.clip(probs_real.mean(axis=0), eps, None)
    kls = _row_kl(probs_fake, marginal)
    return float(kls.mean()), float(kls.std())


def topk_accuracy(probs_fake: np.ndarray, probs_real: np.ndarray, k: int,
                  variant: str = "all", confidence: float = 0.5) -> float:
    """Percentage of fakes whose argmax class lies in the paired real top-k.

    variant="all" scores every pair; variant="confident" restricts to pairs
    whose real row has max probability >= `confidence` (inherited protocol
    stand-in). Returns NaN if the restriction leaves no pairs.
    """
    probs_fake = _check_probs(probs_fake)
    probs_real = _check_probs(probs_real)
    if probs_fake.shape != probs_real.shape:
        raise ShapeError(
            f"shape mismatch: {probs_fake.shape} vs {probs_real.shape}"
        )
    if k < 1 or k > probs_real.shape[1]:
        raise DomainError(f"k must be in [1, {probs_real.shape[1]}], got {k}")
    if variant not in ("all", "confident"):
        raise DomainError(f"unknown variant {variant!r}")

    fake_top = probs_fake.argmax(axis=1)
    real_topk = np.argsort(-probs_real, axis=1)[:, :k]
    hits = (real_topk == fake_top[:, None]).any(axis=1)
    if variant == "confident":
        keep = probs_real.max(axis=1) >= confidence
        if not keep.any():
            return float("nan")
        hits = hits[keep]
    return float(100.0 * hits.mean())


# ---------------------------------------------------------------------------
# pluggable classifier + probability file format
# ---------------------------------------------------------------------------

class ToyClassifier:
    """Small seeded conv net mapping image batches to probability rows.

    Deterministic for a fixed seed; good enough to exercise the classifier
    metrics at desk scale without any pretrained weights.
    """

    def __init__(self, classes: int = 4, seed: int = 0):
        import torch
        import torch.nn as nn

        self.classes = classes
        gen = torch.Generator().manual_seed(seed)
        self._net = nn.Sequential(
            nn.Conv2d(3, 8, 3, stride=2, padding=1), nn.GELU(),
            nn.Conv2d(8, 16, 3, stride=2, padding=1), nn.GELU(),
            nn.AdaptiveAvgPool2d(1), nn.Flatten(),
            nn.Linear(16, classes),
        )
        with torch.no_grad():
            for p in self._net.parameters():
                p.copy_(torch.randn(p.shape, generator=gen) * 0.2)
        self._net.eval()

    def __call__(self, images: np.ndarray) -> np.ndarray:
        """(N, H, W, 3) images in [-1, 1] -> (N, classes) probability rows."""
        import torch

        x = torch.from_numpy(
            np.ascontiguousarray(np.moveaxis(images, -1, 1), dtype=np.float32)
        )
        with torch.no_grad():
            logits = self._net(x).double()
            probs = torch.softmax(logits, dim=1)
        return probs.numpy()


def write_probs_file(path, ids: Sequence[str], probs: np.ndarray) -> None:
    """One `id\\tp1...pK` record per line under a `#classes K` header."""
    probs = _check_probs(probs)
    if len(ids) != probs.shape[0]:
        raise DataError(f"{len(ids)} ids for {probs.shape[0]} probability rows")
    lines = [f"{PROBS_HEADER} {probs.shape[1]}"]
    for name, row in zip(ids, probs):
        lines.append(name + "\t" + "\t".join(f"{v:.10g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_probs_file(path) -> Tuple[list, np.ndarray]:
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith(PROBS_HEADER):
        raise DataError(f"{path}: missing '{PROBS_HEADER} K' header")
    try:
        k = int(lines[0].split()[1])
    except (IndexError, ValueError):
        raise DataError(f"{path}: malformed header {lines[0]!r}") from None
    ids, rows = [], []
    for ln in lines[1:]:
        parts = ln.split("\t")
        if len(parts) != k + 1:
            raise DataError(f"{path}: record {parts[0]!r} has {len(parts) - 1} values, expected {k}")
        ids.append(parts[0])
        rows.append([float(v) for v in parts[1:]])
    probs = np.asarray(rows, dtype=np.float64)
    _check_probs(probs)
    return ids, probs


# ---------------------------------------------------------------------------
# report container + emission
# ---------------------------------------------------------------------------

@dataclass
class MetricReport:
    """Aggregate scores over a test set; classifier fields stay None when
    no probability source was supplied."""

    n_pairs: int
    ssim: float
    psnr: float
    sd: float
    l1: float
    acc_top1_all: Optional[float] = None
    acc_top1_confident: Optional[float] = None
    acc_top5_all: Optional[float] = None
    acc_top5_confident: Optional[float] = None
    inception_all: Optional[float] = None
    inception_top1: Optional[float] = None
    inception_top5: Optional[float] = None
    kl_mean: Optional[float] = None
    kl_std: Optional[float] = None


def classifier_metrics(probs_fake: np.ndarray, probs_real: np.ndarray,
                       confidence: float = 0.5) -> dict:
    """All classifier-based report fields from paired probability rows."""
    k = probs_fake.shape[1]
    top5 = min(5, k)
    out = {
        "acc_top1_all": topk_accuracy(probs_fake, probs_real, 1, "all"),
        "acc_top1_confident": topk_accuracy(probs_fake, probs_real, 1, "confident", confidence),
        "acc_top5_all": topk_accuracy(probs_fake, probs_real, top5, "all"),
        "acc_top5_confident": topk_accuracy(probs_fake, probs_real, top5, "confident", confidence),
        "inception_all": inception_score(probs_fake),
        "inception_top1": inception_score_topk(probs_fake, 1),
        "inception_top5": inception_score_topk(probs_fake, top5),
    }
    out["kl_mean"], out["kl_std"] = kl_score(probs_fake, probs_real)
    return out


def report_key_values(report: MetricReport) -> list:
    """Machine-readable `key=value` lines; absent metrics are skipped."""
    lines = []
    for f in fields(report):
        value = getattr(report, f.name)
        if value is None:
            continue
        if isinstance(value, float):
            lines.append(f"{f.name}={value:.6f}")
        else:
            lines.append(f"{f.name}={value}")
    return lines


def _cell(value: Optional[float], width: int = 8) -> str:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return "-".center(width)
    return f"{value:.4f}".center(width)


def format_report_rows(rows) -> str:
    """Text table over (label, MetricReport) rows, one line per row.

    Column layout: paired accuracy sub-columns, three inception variants,
    then SSIM / PSNR / SD and KL as mean +/- std.
    """
    header1 = (f"{'Method':<12} | {'Accuracy (%)':^35} | {'Inception Score':^26} "
               f"| {'SSIM':^8} | {'PSNR':^8} | {'SD':^8} | {'KL':^14}")
    header2 = (f"{'':<12} | {'Top-1':^17} {'Top-5':^17} | "
               f"{'all':^8} {'Top-1':^8} {'Top-5':^8} |{'':^10}|{'':^10}|{'':^10}|")
    lines = [header1, header2, "-" * len(header1)]
    for label, report in rows:
        if report.kl_mean is None:
            kl = "-".center(14)
        else:
            kl = f"{report.kl_mean:.4f} +/- {report.kl_std:.2f}".center(14)
        lines.append(
            f"{label:<12} | "
            f"{_cell(report.acc_top1_all)} {_cell(report.acc_top1_confident)} "
            f"{_cell(report.acc_top5_all)} {_cell(report.acc_top5_confident)} | "
            f"{_cell(report.inception_all)} {_cell(report.inception_top1)} "
            f"{_cell(report.inception_top5)} | {_cell(report.ssim)} | "
            f"{_cell(report.psnr)} | {_cell(report.sd)} | {kl}"
        )
    return "\n".join(lines)


def format_report(report: MetricReport, label: str = "model") -> str:
    return format_report_rows([(label, report)])
