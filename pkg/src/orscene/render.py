"""Rasterization of scene frames into conditioning images, and the inverse.

Images are 8-bit RGB on a black background: red/green carry the class
color, blue carries quantized depth. Filling is hard-edged (no
anti-aliasing, integer pixel-center sampling) so the image is a decodable
code rather than a picture, and byte-identical across platforms. Nodes are
painted farthest-first so nearer entities overwrite (painter's algorithm).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from . import abstraction
from .errors import ConfigError, DecodeError, InputError
from .scene import ClassPalette, EllipsoidNode, SceneFrame, SceneSequence, default_palette, depth_order

MODE_ELLIPSE_DEPTH = "ellipse_depth"
MODE_ELLIPSE_FLAT = "ellipse_flat"
MODE_SEGMASK = "segmask_passthrough"
MODES = (MODE_ELLIPSE_DEPTH, MODE_ELLIPSE_FLAT, MODE_SEGMASK)

_FRAME_RE = re.compile(r"frame_(\d{5})\.png$")


@dataclass(frozen=True)
class RenderConfig:
    resolution: tuple[int, int] = (1024, 768)
    mode: str = MODE_ELLIPSE_DEPTH
    palette: ClassPalette = field(default_factory=default_palette)

    def __post_init__(self) -> None:
        object.__setattr__(self, "resolution", tuple(self.resolution))
        w, h = self.resolution
        if w <= 0 or h <= 0:
            raise ConfigError(f"resolution {self.resolution} must be positive")
        if self.mode not in MODES:
            raise ConfigError(f"mode {self.mode!r} not one of {MODES}")


def ellipse_aabb(node: EllipsoidNode, resolution: tuple[int, int]) -> tuple[float, float, float, float]:
    """Tight axis-aligned bounds of the node's pixel-space ellipse,
    (x_min, y_min, x_max, y_max) as floats."""
    w, h = resolution
    cx, cy = node.cx * w, node.cy * h
    a, b = node.semi_a * w, node.semi_b * h
    c, s = np.cos(node.theta), np.sin(node.theta)
    ex = float(np.hypot(a * c, b * s))
    ey = float(np.hypot(a * s, b * c))
    return (cx - ex, cy - ey, cx + ex, cy + ey)


def ellipse_mask(node: EllipsoidNode, resolution: tuple[int, int]) -> np.ndarray:
    """Boolean (H, W) raster of the node via the implicit ellipse test
    evaluated at integer pixel centers."""
    w, h = resolution
    out = np.zeros((h, w), dtype=bool)
    _paint(out, node, resolution, True)
    return out


def _paint(target: np.ndarray, node: EllipsoidNode, resolution, value) -> None:
    w, h = resolution
    cx, cy = node.cx * w, node.cy * h
    a, b = node.semi_a * w, node.semi_b * h
    x0, y0, x1, y1 = ellipse_aabb(node, resolution)
    xlo, xhi = max(int(np.ceil(x0)), 0), min(int(np.floor(x1)), w - 1)
    ylo, yhi = max(int(np.ceil(y0)), 0), min(int(np.floor(y1)), h - 1)
    if xlo > xhi or ylo > yhi:
        return
    ys, xs = np.mgrid[ylo : yhi + 1, xlo : xhi + 1]
    dx = xs - cx
    dy = ys - cy
    c, s = np.cos(node.theta), np.sin(node.theta)
    inside = ((dx * c + dy * s) / a) ** 2 + ((-dx * s + dy * c) / b) ** 2 <= 1.0
    region = target[ylo : yhi + 1, xlo : xhi + 1]
    region[inside] = value


def render_frame(
    frame: SceneFrame,
    cfg: RenderConfig,
    mask_labels: np.ndarray | None = None,
    mask_mapping: dict[int, tuple[str, int]] | None = None,
) -> np.ndarray:
    """Render one frame to an (H, W, 3) uint8 image.

    segmask_passthrough requires the frame's label image and mapping;
    ellipse modes ignore them.
    """
    w, h = cfg.resolution
    img = np.zeros((h, w, 3), dtype=np.uint8)

    if cfg.mode == MODE_SEGMASK:
        if mask_labels is None or mask_mapping is None:
            raise ConfigError("segmask_passthrough needs the source mask bundle")
        if mask_labels.shape != (h, w):
            raise InputError(
                f"mask shape {mask_labels.shape} does not match render resolution {(h, w)}"
            )
        for label, (_, class_id) in mask_mapping.items():
            r, g = cfg.palette.color(class_id)
            sel = mask_labels == label
            img[sel, 0] = r
            img[sel, 1] = g
        return img

    by_id = {n.entity_id: n for n in frame.nodes}
    for eid in depth_order(frame):
        node = by_id[eid]
        r, g = cfg.palette.color(node.class_id)
        blue = _quantize_depth(node.depth) if cfg.mode == MODE_ELLIPSE_DEPTH else 0
        _paint(img, node, cfg.resolution, (r, g, blue))
    return img


def _quantize_depth(depth: float) -> int:
    # round-half-to-even, so decode tolerance is exactly 1/255
    return int(round(255.0 * depth))


def render_entity_map(frame: SceneFrame, resolution: tuple[int, int]) -> np.ndarray:
    """Painter's-algorithm winner per pixel: int32 (H, W) of node index + 1
    into frame.nodes, 0 where background. Matches render_frame occlusion."""
    w, h = resolution
    out = np.zeros((h, w), dtype=np.int32)
    index_of = {n.entity_id: i for i, n in enumerate(frame.nodes)}
    for eid in depth_order(frame):
        _paint(out, frame.nodes[index_of[eid]], resolution, index_of[eid] + 1)
    return out


def render_sequence(
    seq: SceneSequence,
    cfg: RenderConfig,
    masks: "abstraction.MaskBundle | None" = None,
) -> list[np.ndarray]:
    """One image per frame, deterministic."""
    if cfg.mode == MODE_SEGMASK:
        if masks is None:
            raise ConfigError("segmask_passthrough needs the source mask bundle")
        if len(masks.frames) != len(seq.frames):
            raise InputError(
                f"mask bundle has {len(masks.frames)} frames, sequence has {len(seq.frames)}"
            )
        return [
            render_frame(fr, cfg, mask_labels=masks.frames[t], mask_mapping=masks.mapping)
            for t, fr in enumerate(seq.frames)
        ]
    return [render_frame(fr, cfg) for fr in seq.frames]


def decode_frame(
    image: np.ndarray,
    palette: ClassPalette,
    min_pixels: int = abstraction.MIN_PIXELS,
) -> SceneFrame:
    """Approximate inverse of render_frame for non-overlapping ellipse modes.

    Connected components of identical (R, G) become nodes: class by nearest
    palette entry (error beyond L-inf 18), geometry refit from the component
    pixels, depth from the mean blue value. Components below min_pixels are
    dropped, mirroring the abstraction skip rule.
    """
    h, w = image.shape[:2]
    rg = image[:, :, 0].astype(np.int32) * 256 + image[:, :, 1].astype(np.int32)
    nodes = []
    idx = 0
    for key in np.unique(rg):
        if key == 0:
            continue
        r, g = int(key) // 256, int(key) % 256
        class_id, dist = palette.nearest_class(r, g)
        if dist > 18:
            raise DecodeError(f"color (R={r}, G={g}) is no palette class (L-inf {dist})")
        components, n_comp = ndimage.label(rg == key, structure=np.ones((3, 3)))
        for comp in range(1, n_comp + 1):
            m = components == comp
            if int(m.sum()) < min_pixels:
                continue
            cx, cy, a, b, theta = abstraction.fit_ellipse(m, min_pixels=min_pixels)
            depth = float(image[:, :, 2][m].mean()) / 255.0
            nodes.append(
                EllipsoidNode(
                    entity_id=f"n{idx:03d}",
                    class_id=class_id,
                    cx=cx,
                    cy=cy,
                    semi_a=a,
                    semi_b=b,
                    theta=theta,
                    depth=depth,
                )
            )
            idx += 1
    return SceneFrame(frame_index=0, nodes=tuple(nodes))


# --- frame directories ------------------------------------------------------


def save_frames(images: list[np.ndarray], directory: Path | str) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for t, img in enumerate(images):
        p = directory / f"frame_{t:05d}.png"
        Image.fromarray(img, mode="RGB").save(p)
        paths.append(p)
    return paths


def load_frames(directory: Path | str) -> list[np.ndarray]:
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if _FRAME_RE.match(p.name))
    if not files:
        raise InputError(f"no frame_%05d.png files in {directory}")
    return [np.array(Image.open(p).convert("RGB"), dtype=np.uint8) for p in files]
