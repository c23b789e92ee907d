"""Structural alignment and reference-based quality metrics.

Everything here is computable without neural networks: box and mask IoU
for per-entity spatial alignment, plus windowed SSIM and PSNR for frame
quality. SSIM uses the canonical constants (11x11 Gaussian window with
sigma 1.5, K1=0.01, K2=0.03, dynamic range 255); they are recorded in
every report so results stay reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import convolve2d

from . import render
from .errors import InputError
from .scene import SceneSequence

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 255.0

Box = tuple[float, float, float, float]  # x_min, y_min, x_max, y_max


def bb_iou(box_a: Box, box_b: Box) -> float:
    """Intersection over union of two axis-aligned boxes.

    Empty boxes (zero area) are legal; two empty boxes compare as 1.0,
    an empty vs non-empty box as 0.0.
    """
    for box in (box_a, box_b):
        if box[2] < box[0] or box[3] < box[1]:
            raise InputError(f"malformed box {box}: min exceeds max")
    area_a = (box_a[2] - box_a[0]) * (box_a[3] - box_a[1])
    area_b = (box_b[2] - box_b[0]) * (box_b[3] - box_b[1])
    iw = min(box_a[2], box_b[2]) - max(box_a[0], box_b[0])
    ih = min(box_a[3], box_b[3]) - max(box_a[1], box_b[1])
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = area_a + area_b - inter
    if union == 0.0:
        return 1.0
    return inter / union


def seg_iou(mask_a: np.ndarray, mask_b: np.ndarray) -> float:
    """|intersection| / |union| of two binary masks; both empty -> 1.0."""
    if mask_a.shape != mask_b.shape:
        raise InputError(f"mask shapes differ: {mask_a.shape} vs {mask_b.shape}")
    a = mask_a.astype(bool)
    b = mask_b.astype(bool)
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(a, b).sum()) / union


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _to_gray(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    if arr.ndim != 2:
        raise InputError(f"expected 2D or 3D image, got shape {img.shape}")
    return arr


def ssim(img_a: np.ndarray, img_b: np.ndarray) -> float:
    """Mean windowed SSIM over all fully interior 11x11 windows."""
    a = _to_gray(img_a)
    b = _to_gray(img_b)
    if a.shape != b.shape:
        raise InputError(f"image shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise InputError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")

    w = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2

    mu_a = convolve2d(a, w, mode="valid")
    mu_b = convolve2d(b, w, mode="valid")
    var_a = convolve2d(a * a, w, mode="valid") - mu_a**2
    var_b = convolve2d(b * b, w, mode="valid") - mu_b**2
    cov = convolve2d(a * b, w, mode="valid") - mu_a * mu_b

    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float((num / den).mean())


def psnr(img_a: np.ndarray, img_b: np.ndarray) -> float:
    """10*log10(255^2 / MSE) in dB; identical images give math.inf."""
    a = np.asarray(img_a, dtype=np.float64)
    b = np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(((a - b) ** 2).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DYNAMIC_RANGE**2 / mse)


# --- sequence comparison ------------------------------------------------------


@dataclass(frozen=True)
class FrameComparison:
    frame_index: int
    ssim: float
    psnr: float
    bb_iou: dict[str, float]
    seg_iou: dict[str, float]


def mask_box(mask: np.ndarray) -> Box:
    """Integer pixel bounds of a mask as a half-open box; empty -> zero box."""
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        return (0.0, 0.0, 0.0, 0.0)
    return (float(xs.min()), float(ys.min()), float(xs.max()) + 1.0, float(ys.max()) + 1.0)


def conditioning_masks(seq: SceneSequence, t: int) -> dict[str, np.ndarray]:
    """Per-entity visible-pixel masks of frame t under the painter's
    algorithm (occluded parts excluded), keyed by entity_id."""
    frame = seq.frames[t]
    emap = render.render_entity_map(frame, seq.resolution)
    return {
        node.entity_id: emap == i + 1 for i, node in enumerate(frame.nodes)
    }


def compare_sequences(
    cond_seq: SceneSequence,
    generated_masks: dict[str, list[np.ndarray]],
    generated_frames: list[np.ndarray],
    reference_frames: list[np.ndarray],
) -> dict:
    """Compare a generated video against its conditioning geometry and a
    reference video.

    generated_masks maps entity_id -> one mask per frame (tracker output,
    or color-matched for the echo pipeline). Per entity the conditioning
    side contributes its painter-visible mask; boxes on both sides are the
    mask pixel bounds, so a byte-identical echo scores exactly 1.0. The
    analytic rotated-ellipse bounds are reported alongside per frame.
    Sequence IoU aggregates are emitted both macro (mean of per-entity
    means) and micro (pooled intersection over pooled union).
    """
    n = len(cond_seq.frames)
    if len(generated_frames) != n or len(reference_frames) != n:
        raise InputError(
            f"frame counts differ: conditioning {n}, generated {len(generated_frames)}, "
            f"reference {len(reference_frames)}"
        )
    for eid, masks in generated_masks.items():
        if len(masks) != n:
            raise InputError(f"entity {eid!r} has {len(masks)} masks for {n} frames")

    frames: list[FrameComparison] = []
    inter_total: dict[str, int] = {}
    union_total: dict[str, int] = {}
    ellipse_boxes: list[dict[str, Box]] = []
    for t in range(n):
        cond = conditioning_masks(cond_seq, t)
        bb: dict[str, float] = {}
        seg: dict[str, float] = {}
        boxes: dict[str, Box] = {}
        for node in cond_seq.frames[t].nodes:
            eid = node.entity_id
            if eid not in generated_masks:
                continue
            gen_mask = generated_masks[eid][t]
            cond_mask = cond[eid]
            seg[eid] = seg_iou(cond_mask, gen_mask)
            bb[eid] = bb_iou(mask_box(cond_mask), mask_box(gen_mask))
            boxes[eid] = render.ellipse_aabb(node, cond_seq.resolution)
            inter_total[eid] = inter_total.get(eid, 0) + int(
                np.logical_and(cond_mask, gen_mask).sum()
            )
            union_total[eid] = union_total.get(eid, 0) + int(
                np.logical_or(cond_mask, gen_mask).sum()
            )
        frames.append(
            FrameComparison(
                frame_index=t,
                ssim=ssim(generated_frames[t], reference_frames[t]),
                psnr=psnr(generated_frames[t], reference_frames[t]),
                bb_iou=bb,
                seg_iou=seg,
            )
        )
        ellipse_boxes.append(boxes)

    entity_ids = sorted(
        {eid for fc in frames for eid in fc.seg_iou}
    )
    per_entity = {
        eid: {
            "bb_iou": _mean([fc.bb_iou[eid] for fc in frames if eid in fc.bb_iou]),
            "seg_iou": _mean([fc.seg_iou[eid] for fc in frames if eid in fc.seg_iou]),
            "seg_iou_micro": (
                1.0 if union_total[eid] == 0 else inter_total[eid] / union_total[eid]
            ),
        }
        for eid in entity_ids
    }

    all_bb = [v for fc in frames for v in fc.bb_iou.values()]
    all_seg = [v for fc in frames for v in fc.seg_iou.values()]
    pooled_union = sum(union_total.values())
    report = {
        "constants": {
            "ssim_window": SSIM_WINDOW,
            "ssim_sigma": SSIM_SIGMA,
            "ssim_k1": SSIM_K1,
            "ssim_k2": SSIM_K2,
            "dynamic_range": DYNAMIC_RANGE,
        },
        "frames": [
            {
                "index": fc.frame_index,
                "ssim": fc.ssim,
                "psnr": None if math.isinf(fc.psnr) else fc.psnr,
                "psnr_infinite": math.isinf(fc.psnr),
                "bb_iou": fc.bb_iou,
                "seg_iou": fc.seg_iou,
                "ellipse_boxes": {k: list(v) for k, v in ellipse_boxes[fc.frame_index].items()},
            }
            for fc in frames
        ],
        "per_entity": per_entity,
        "aggregate": {
            "ssim": _mean([fc.ssim for fc in frames]),
            "psnr": _finite_mean([fc.psnr for fc in frames]),
            # macro: mean of per-entity means; micro: pixel-pooled / mean
            # over every (entity, frame) observation
            "bb_iou_macro": _mean([per_entity[eid]["bb_iou"] for eid in entity_ids]),
            "seg_iou_macro": _mean([per_entity[eid]["seg_iou"] for eid in entity_ids]),
            "bb_iou_micro": _mean(all_bb),
            "seg_iou_micro": (
                1.0
                if pooled_union == 0
                else sum(inter_total.values()) / pooled_union
            ),
            "frame_count": n,
        },
    }
    return report


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def _finite_mean(values: list[float]) -> float | None:
    finite = [v for v in values if not math.isinf(v)]
    return sum(finite) / len(finite) if finite else None


def save_report(report: dict, path: Path | str) -> None:
    Path(path).write_text(json.dumps(report, indent=1))


def report_to_csv(report: dict) -> str:
    """Per-frame summary rows: frame, ssim, psnr, mean bb/seg IoU."""
    lines = ["frame,ssim,psnr,bb_iou_mean,seg_iou_mean"]
    for fc in report["frames"]:
        psnr_val = "inf" if fc["psnr_infinite"] else f"{fc['psnr']:.9g}"
        bb = _mean(list(fc["bb_iou"].values()))
        seg = _mean(list(fc["seg_iou"].values()))
        lines.append(
            f"{fc['index']},{fc['ssim']:.9g},{psnr_val},"
            f"{'' if bb is None else f'{bb:.9g}'},"
            f"{'' if seg is None else f'{seg:.9g}'}"
        )
    return "\n".join(lines) + "\n"
