"""Geometric abstraction: instance masks + depth maps -> ellipsoid scenes.

Fitting is moment-based: the centroid is the mean pixel coordinate and the
semi-axes come from the eigendecomposition of the 2x2 second central moment
matrix, scaled by 2.0 so a uniformly filled ellipse recovers its own
semi-axes (a uniform ellipse has eigenvalue (semi-axis/2)^2).
"""

from __future__ import annotations

import json
import logging
import math
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DegenerateMaskError, InputError
from .scene import EllipsoidNode, SceneFrame, SceneSequence

logger = logging.getLogger(__name__)

MIN_PIXELS = 16
# relative eigenvalue gap below which orientation is treated as undefined
CIRCULAR_TIE_EPS = 0.01

_FRAME_RE = re.compile(r"frame_(\d{5})\.(png|f32)$")
_DEPTH_MAGIC = b"DPF1"


@dataclass(frozen=True)
class MaskBundle:
    """Per-frame integer label images plus the label -> entity mapping.

    Label 0 is background. The mapping must cover every nonzero label and
    is stable across frames (same label = same physical entity).
    """

    frames: tuple[np.ndarray, ...]
    mapping: dict[int, tuple[str, int]]
    resolution: tuple[int, int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", tuple(self.frames))
        w, h = self.resolution
        for i, labels in enumerate(self.frames):
            if labels.shape != (h, w):
                raise InputError(f"mask frame {i} has shape {labels.shape}, expected {(h, w)}")
            present = set(np.unique(labels).tolist()) - {0}
            unknown = present - set(self.mapping)
            if unknown:
                raise InputError(f"mask frame {i} has unmapped labels {sorted(unknown)}")


@dataclass(frozen=True)
class DepthBundle:
    """Per-frame raw relative depth maps (larger = nearer, as emitted by
    inverse-depth-style estimators); resolution must match the masks."""

    frames: tuple[np.ndarray, ...]
    resolution: tuple[int, int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", tuple(self.frames))
        w, h = self.resolution
        for i, depth in enumerate(self.frames):
            if depth.shape != (h, w):
                raise InputError(f"depth frame {i} has shape {depth.shape}, expected {(h, w)}")
            if not np.all(np.isfinite(depth)):
                raise InputError(f"depth frame {i} contains non-finite values")


def fit_ellipse(
    mask: np.ndarray, min_pixels: int = MIN_PIXELS
) -> tuple[float, float, float, float, float]:
    """Fit (cx, cy, semi_a, semi_b, theta) to a binary mask.

    Returns normalized values: centroid as a fraction of width/height,
    semi_a as a fraction of width, semi_b as a fraction of height, theta
    the major-axis angle in [0, pi). Near-circular fits (eigenvalue gap
    under 1%) get theta = 0 so orientation stays deterministic; a
    zero-variance axis is clamped to a 1 px semi-axis.
    """
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    n = xs.size
    if n < min_pixels:
        raise DegenerateMaskError(f"mask has {n} pixels, need >= {min_pixels}")

    mx = float(xs.mean())
    my = float(ys.mean())
    dx = xs - mx
    dy = ys - my
    cov = np.array(
        [
            [float(dx @ dx), float(dx @ dy)],
            [float(dx @ dy), float(dy @ dy)],
        ]
    ) / n

    evals, evecs = np.linalg.eigh(cov)  # ascending
    lam_minor = max(float(evals[0]), 0.0)
    lam_major = max(float(evals[1]), 0.0)

    semi_major = 2.0 * math.sqrt(lam_major)
    semi_minor = 2.0 * math.sqrt(lam_minor)
    # single row/column masks have zero variance across the line
    semi_major = max(semi_major, 1.0)
    semi_minor = max(semi_minor, 1.0)

    if lam_major <= 0.0 or (lam_major - lam_minor) < CIRCULAR_TIE_EPS * lam_major:
        theta = 0.0
    else:
        vx, vy = float(evecs[0, 1]), float(evecs[1, 1])
        theta = math.atan2(vy, vx) % math.pi
        if theta >= math.pi:  # folding can land on pi by rounding
            theta = 0.0

    return (mx / w, my / h, semi_major / w, semi_minor / h, theta)


def instance_depth(mask: np.ndarray, depth_map: np.ndarray) -> float:
    """Mean depth over the mask pixels."""
    if mask.shape != depth_map.shape:
        raise InputError(f"mask shape {mask.shape} != depth shape {depth_map.shape}")
    vals = depth_map[mask]
    if vals.size == 0:
        raise InputError("empty mask has no depth")
    return float(vals.mean())


def normalize_depths(raw: dict) -> dict:
    """Min-max normalize a {key: raw_depth} dict over all values at once.

    All-equal inputs map to 0.5. Keys are opaque; normalization is over the
    whole sequence so the blue channel stays temporally stable.
    """
    if not raw:
        return {}
    values = np.array(list(raw.values()), dtype=float)
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return {k: 0.5 for k in raw}
    return {k: (v - lo) / (hi - lo) for k, v in raw.items()}


def abstract_sequence(
    masks: MaskBundle, depths: DepthBundle, min_pixels: int = MIN_PIXELS
) -> SceneSequence:
    """Fit every instance in every frame and assemble a SceneSequence.

    Masks below min_pixels are skipped with a logged warning; an entity
    whose appearances end up non-contiguous because of skips (or because
    it genuinely leaves) is marked exited on the output sequence.
    """
    if len(masks.frames) != len(depths.frames):
        raise InputError(
            f"mask/depth frame counts differ: {len(masks.frames)} vs {len(depths.frames)}"
        )
    if masks.resolution != depths.resolution:
        raise InputError(
            f"mask/depth resolutions differ: {masks.resolution} vs {depths.resolution}"
        )

    fits: list[list[tuple[str, int, tuple[float, float, float, float, float]]]] = []
    raw_depth: dict[tuple[int, str], float] = {}
    for t, (labels, depth_map) in enumerate(zip(masks.frames, depths.frames)):
        frame_fits = []
        for label in sorted(set(np.unique(labels).tolist()) - {0}):
            entity_id, class_id = masks.mapping[label]
            m = labels == label
            try:
                params = fit_ellipse(m, min_pixels=min_pixels)
            except DegenerateMaskError as exc:
                logger.warning("frame %d: skipping %r: %s", t, entity_id, exc)
                continue
            frame_fits.append((entity_id, class_id, params))
            raw_depth[(t, entity_id)] = instance_depth(m, depth_map)
        fits.append(frame_fits)

    norm_depth = normalize_depths(raw_depth)

    frames = []
    appearances: dict[str, list[int]] = {}
    for t, frame_fits in enumerate(fits):
        nodes = tuple(
            EllipsoidNode(
                entity_id=eid,
                class_id=cid,
                cx=params[0],
                cy=params[1],
                semi_a=params[2],
                semi_b=params[3],
                theta=params[4],
                depth=norm_depth[(t, eid)],
            )
            for eid, cid, params in frame_fits
        )
        for eid, _, _ in frame_fits:
            appearances.setdefault(eid, []).append(t)
        frames.append(SceneFrame(frame_index=t, nodes=nodes))

    exited = frozenset(
        eid for eid, ts in appearances.items() if ts[-1] - ts[0] + 1 != len(ts)
    )
    return SceneSequence(
        frames=tuple(frames), resolution=masks.resolution, exited=exited
    )


# --- disk formats -----------------------------------------------------------
#
# Masks: directory of 16-bit grayscale PNGs frame_%05d.png + mapping.json
# {"<label>": {"entity": "...", "class": n}}. Depths: same naming, either
# 16-bit PNGs (raw value = intensity) or .f32 files with a 12-byte header
# (magic "DPF1", uint32 width, uint32 height, little-endian) followed by
# row-major float32 values. Format is picked by extension.


def _frame_files(directory: Path) -> list[Path]:
    files = sorted(p for p in directory.iterdir() if _FRAME_RE.match(p.name))
    if not files:
        raise InputError(f"no frame_%05d files in {directory}")
    for i, p in enumerate(files):
        if int(_FRAME_RE.match(p.name).group(1)) != i:
            raise InputError(f"frame files in {directory} are not consecutive from 0")
    return files


def save_mask_bundle(bundle: MaskBundle, directory: Path | str) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t, labels in enumerate(bundle.frames):
        img = Image.fromarray(labels.astype(np.uint16))
        img.save(directory / f"frame_{t:05d}.png")
    mapping = {
        str(label): {"entity": eid, "class": cid}
        for label, (eid, cid) in bundle.mapping.items()
    }
    (directory / "mapping.json").write_text(json.dumps(mapping, indent=1))


def load_mask_bundle(directory: Path | str) -> MaskBundle:
    directory = Path(directory)
    mapping_path = directory / "mapping.json"
    if not mapping_path.exists():
        raise InputError(f"missing {mapping_path}")
    raw = json.loads(mapping_path.read_text())
    mapping = {int(k): (v["entity"], int(v["class"])) for k, v in raw.items()}
    frames = []
    for p in _frame_files(directory):
        arr = np.array(Image.open(p), dtype=np.int64)
        frames.append(arr)
    h, w = frames[0].shape
    return MaskBundle(frames=tuple(frames), mapping=mapping, resolution=(w, h))


def save_depth_bundle(
    bundle: DepthBundle, directory: Path | str, fmt: str = "f32"
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    w, h = bundle.resolution
    for t, depth in enumerate(bundle.frames):
        if fmt == "f32":
            payload = struct.pack("<4sII", _DEPTH_MAGIC, w, h)
            payload += depth.astype("<f4").tobytes()
            (directory / f"frame_{t:05d}.f32").write_bytes(payload)
        elif fmt == "png":
            img = Image.fromarray(np.round(depth).astype(np.uint16))
            img.save(directory / f"frame_{t:05d}.png")
        else:
            raise InputError(f"unknown depth format {fmt!r}")


def load_depth_bundle(directory: Path | str) -> DepthBundle:
    directory = Path(directory)
    frames = []
    for p in _frame_files(directory):
        if p.suffix == ".png":
            frames.append(np.array(Image.open(p), dtype=np.float64))
        else:
            blob = p.read_bytes()
            magic, w, h = struct.unpack_from("<4sII", blob)
            if magic != _DEPTH_MAGIC:
                raise InputError(f"{p} is not a depth file (bad magic)")
            data = np.frombuffer(blob, dtype="<f4", offset=12)
            if data.size != w * h:
                raise InputError(f"{p} payload size {data.size} != {w}x{h}")
            frames.append(data.reshape(h, w).astype(np.float64))
    h, w = frames[0].shape
    return DepthBundle(frames=tuple(frames), resolution=(w, h))
