"""Evaluation, single-sample generation, and ablation sweeps.

Each entry point both returns its result and, given an output directory,
writes the report files: machine-readable key=value lines, a tab-separated
table, the formatted text table, and rendered figures.
"""

import copy
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import torch

from .data import (TOY_PALETTE, load_image, load_pair, load_semantic,
                   read_manifest, save_image, save_semantic)
from .errors import ConfigurationError, DataError
from .metrics import (MetricReport, classifier_metrics, format_report_rows,
                      psnr, read_probs_file, report_key_values,
                      sharpness_difference, ssim)
from .plots import save_loss_curves, save_metric_bars, save_panel_grid
from .trainer import load_generator, train

DATA_RANGE = 2.0  # images live in [-1, 1]

ABLATION_AXES = {
    "blocks": (3, 5, 7, 9),
    "loss": ("baseline", "refined"),
}


def _to_hwc(t: torch.Tensor) -> np.ndarray:
    return np.moveaxis(t.detach().cpu().numpy(), 0, -1)


def run_generator(stage1, stage2, src: torch.Tensor, sem: torch.Tensor):
    """Inference over one batch; returns (stage-1 outputs, stage-2 outputs)."""
    with torch.no_grad():
        s1 = stage1(src, sem)
        s2 = stage2(src, s1)
    return s1, s2


def _paired_probs(probs_path, sample_ids):
    """Split a probability file into aligned (fake, real) rows.

    The file carries two records per sample, ids `<sample>/fake` and
    `<sample>/real`.
    """
    ids, probs = read_probs_file(probs_path)
    index = {name: row for name, row in zip(ids, probs)}
    fake_rows, real_rows = [], []
    for sid in sample_ids:
        try:
            fake_rows.append(index[f"{sid}/fake"])
            real_rows.append(index[f"{sid}/real"])
        except KeyError as exc:
            raise DataError(
                f"{probs_path}: missing record {exc.args[0]!r} "
                "(expected '<id>/fake' and '<id>/real' per manifest entry)"
            ) from None
    return np.asarray(fake_rows), np.asarray(real_rows)


def evaluate(ckpt_path, manifest_path, probs_path=None, classifier=None,
             out_dir=None, max_figure_rows: int = 4) -> MetricReport:
    """Score the generator over a manifest.

    Pixel metrics always; classifier metrics only when a probability file
    or a classifier callable is supplied (absent fields stay None). With
    `out_dir`, writes report.txt / report.tsv and figures.
    """
    stage1, stage2, cfg = load_generator(ckpt_path)
    entries = read_manifest(manifest_path)

    ssims, psnrs, sds, l1s = [], [], [], []
    fake_images, real_images = [], []
    figure_panels = []
    for entry in entries:
        pair = load_pair(entry, cfg.data.classes, cfg.data.image_size)
        _s1, s2 = run_generator(stage1, stage2, pair.source[None], pair.semantic[None])
        fake = _to_hwc(s2.final_image[0])
        real = _to_hwc(pair.target)
        ssims.append(ssim(fake, real, DATA_RANGE))
        psnrs.append(psnr(fake, real, DATA_RANGE))
        sds.append(sharpness_difference(fake, real, DATA_RANGE))
        l1s.append(float(np.mean(np.abs(fake - real))))
        fake_images.append(fake)
        real_images.append(real)
        if len(figure_panels) < 3 * max_figure_rows:
            figure_panels += [
                (f"{entry.sample_id} source", _to_hwc(pair.source)),
                (f"{entry.sample_id} target", real),
                (f"{entry.sample_id} output", fake),
            ]

    report = MetricReport(
        n_pairs=len(entries),
        ssim=float(np.mean(ssims)),
        psnr=float(np.mean(psnrs)),
        sd=float(np.mean(sds)),
        l1=float(np.mean(l1s)),
    )
    sample_ids = [e.sample_id for e in entries]
    if probs_path is not None:
        fake_rows, real_rows = _paired_probs(probs_path, sample_ids)
        report = replace(report, **classifier_metrics(fake_rows, real_rows))
    elif classifier is not None:
        fake_rows = classifier(np.stack(fake_images))
        real_rows = classifier(np.stack(real_images))
        report = replace(report, **classifier_metrics(fake_rows, real_rows))

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        lines = report_key_values(report)
        table = format_report_rows([("model", report)])
        (out_dir / "report.txt").write_text("\n".join(lines) + "\n\n" + table + "\n")
        (out_dir / "report.tsv").write_text(
            "\n".join(ln.replace("=", "\t", 1) for ln in lines) + "\n"
        )
        save_panel_grid(figure_panels, out_dir / "samples.png", n_cols=3)
        save_metric_bars(["model"], [report], out_dir / "metrics.png")
    return report


def generate(ckpt_path, source_path, semantic_path, out_dir) -> dict:
    """Single-sample inference; writes individual PNGs plus a summary grid."""
    stage1, stage2, cfg = load_generator(ckpt_path)
    src_arr = load_image(source_path, cfg.data.image_size)
    sem_arr = load_semantic(semantic_path, cfg.data.classes, cfg.data.image_size)
    to_chw = lambda a: torch.from_numpy(np.ascontiguousarray(np.moveaxis(a, -1, 0)))
    s1, s2 = run_generator(stage1, stage2, to_chw(src_arr)[None], to_chw(sem_arr)[None])

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    coarse = _to_hwc(s1.coarse_image[0])
    final = _to_hwc(s2.final_image[0])
    coarse_sem = s1.coarse_semantic[0].argmax(dim=0).cpu().numpy()
    refined_sem = s2.refined_semantic[0].argmax(dim=0).cpu().numpy()
    u_img = s2.u_image[0, 0].cpu().numpy()
    u_sem = s2.u_semantic[0, 0].cpu().numpy()

    paths = {}
    save_image(out_dir / "coarse_image.png", coarse)
    save_image(out_dir / "final_image.png", final)
    save_semantic(out_dir / "coarse_semantic.png", coarse_sem, TOY_PALETTE)
    save_semantic(out_dir / "refined_semantic.png", refined_sem, TOY_PALETTE)
    for name in ("coarse_image", "final_image", "coarse_semantic", "refined_semantic"):
        paths[name] = out_dir / f"{name}.png"
    paths["grid"] = save_panel_grid(
        [("source", src_arr),
         ("semantic in", sem_arr[..., :3]),
         ("coarse image", coarse),
         ("final image", final),
         ("uncertainty (image)", u_img),
         ("uncertainty (semantic)", u_sem)],
        out_dir / "grid.png", n_cols=3,
    )
    return paths


def ablate(cfg, axis: str, classifier=None,
           out_dir=None) -> Tuple[List[str], List[MetricReport]]:
    """Train + evaluate once per axis value; emit one comparative report.

    axis="blocks" sweeps cascade depth over {3, 5, 7, 9}; axis="loss" runs
    the per-pair baseline objective against the grouped refined one.
    """
    if axis not in ABLATION_AXES:
        raise ConfigurationError(
            f"unknown ablation axis {axis!r}; choose from {sorted(ABLATION_AXES)}"
        )
    base_out = Path(out_dir) if out_dir is not None else Path(cfg.run.out_dir)
    base_out.mkdir(parents=True, exist_ok=True)

    labels, reports = [], []
    for value in ABLATION_AXES[axis]:
        run_cfg = copy.deepcopy(cfg)
        if axis == "blocks":
            run_cfg.model.blocks = value
            label = f"blocks-{value}"
        else:
            run_cfg.loss.variant = value
            label = value
        run_cfg.run.out_dir = str(base_out / label)
        result = train(run_cfg)
        report = evaluate(result.final_checkpoint, run_cfg.data.manifest,
                          classifier=classifier)
        save_loss_curves(result.history, Path(run_cfg.run.out_dir) / "losses.png")
        labels.append(label)
        reports.append(report)

    table = format_report_rows(list(zip(labels, reports)))
    (base_out / "ablation.txt").write_text(table + "\n")
    tsv_lines = []
    for label, report in zip(labels, reports):
        for ln in report_key_values(report):
            tsv_lines.append(f"{label}\t" + ln.replace("=", "\t", 1))
    (base_out / "ablation.tsv").write_text("\n".join(tsv_lines) + "\n")
    save_metric_bars(labels, reports, base_out / "ablation.png")
    return labels, reports
