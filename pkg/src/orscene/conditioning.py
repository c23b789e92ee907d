"""Trajectory edits and conditioning bundles for a diffusion backend.

The template pathway renders a sequence as-is; the counterfactual pathway
first rewrites entity centroids from user-sketched waypoints. A bundle is
the wire format any backend consumes: a frame directory plus a manifest
with provenance and a content hash over the raw pixel data.
"""

from __future__ import annotations

import hashlib
import json
import shutil
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

import numpy as np

from . import render, scene
from .errors import BackendError, InputError, MissingEntityError
from .scene import SceneFrame, SceneSequence

MODE_OFFSET = "offset"
MODE_REPLACE = "replace"


@dataclass(frozen=True)
class Trajectory:
    """A sketched path for one entity.

    offset mode shifts the entity's existing motion by (path(t) - path(start)),
    preserving whatever it was already doing; replace mode pins the centroid
    to the path. frame_span is inclusive; None means the full sequence.
    """

    target: str
    waypoints: tuple[tuple[float, float], ...]
    mode: str = MODE_OFFSET
    frame_span: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "waypoints", tuple((float(x), float(y)) for x, y in self.waypoints)
        )
        if not self.waypoints:
            raise InputError("trajectory needs at least one waypoint")
        for x, y in self.waypoints:
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                raise InputError(f"waypoint ({x}, {y}) outside [0,1]^2")
        if self.mode not in (MODE_OFFSET, MODE_REPLACE):
            raise InputError(f"mode {self.mode!r} not one of ('offset', 'replace')")
        if self.frame_span is not None:
            t0, t1 = self.frame_span
            object.__setattr__(self, "frame_span", (int(t0), int(t1)))
            if t0 < 0 or t1 < t0:
                raise InputError(f"frame_span {self.frame_span} must satisfy 0 <= t0 <= t1")

    def to_dict(self) -> dict:
        return {
            "entity": self.target,
            "mode": self.mode,
            "span": list(self.frame_span) if self.frame_span else None,
            "waypoints": [list(w) for w in self.waypoints],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Trajectory":
        try:
            span = doc.get("span")
            return cls(
                target=doc["entity"],
                waypoints=tuple(tuple(w) for w in doc["waypoints"]),
                mode=doc.get("mode", MODE_OFFSET),
                frame_span=tuple(span) if span else None,
            )
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed trajectory document: {exc}") from exc


def resample_trajectory(traj: Trajectory, n_frames: int) -> list[tuple[float, float]]:
    """Arc-length-uniform samples of the waypoint polyline, one per frame.

    Endpoints are reproduced exactly; a single waypoint (or zero total
    length) yields a constant path.
    """
    if n_frames < 1:
        raise InputError("n_frames must be >= 1")
    pts = np.array(traj.waypoints, dtype=float)
    if len(pts) == 1:
        return [tuple(pts[0])] * n_frames
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = float(seg.sum())
    if total == 0.0:
        return [tuple(pts[0])] * n_frames
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.linspace(0.0, cum[-1], n_frames)
    xs = np.interp(s, cum, pts[:, 0])
    ys = np.interp(s, cum, pts[:, 1])
    out = list(zip(xs.tolist(), ys.tolist()))
    out[0] = tuple(pts[0])
    out[-1] = tuple(pts[-1])
    return out


def apply_trajectory(seq: SceneSequence, traj: Trajectory) -> SceneSequence:
    """Rewrite the target's centroid over the span; everything else is
    untouched. Centroids are clamped to [0,1]."""
    n = len(seq.frames)
    if n == 0:
        raise InputError("cannot edit an empty sequence")
    t0, t1 = traj.frame_span if traj.frame_span is not None else (0, n - 1)
    if t1 >= n:
        raise InputError(f"frame_span end {t1} beyond last frame {n - 1}")
    for t in range(t0, t1 + 1):
        if not seq.frames[t].has(traj.target):
            raise MissingEntityError(f"entity {traj.target!r} absent in frame {t}")

    path = resample_trajectory(traj, t1 - t0 + 1)
    frames = list(seq.frames)
    for t in range(t0, t1 + 1):
        fr = frames[t]
        px, py = path[t - t0]
        new_nodes = []
        for node in fr.nodes:
            if node.entity_id != traj.target:
                new_nodes.append(node)
                continue
            if traj.mode == MODE_REPLACE:
                cx, cy = px, py
            else:
                cx = node.cx + (px - path[0][0])
                cy = node.cy + (py - path[0][1])
            new_nodes.append(
                replace(node, cx=min(max(cx, 0.0), 1.0), cy=min(max(cy, 0.0), 1.0))
            )
        frames[t] = SceneFrame(frame_index=fr.frame_index, nodes=tuple(new_nodes))
    return SceneSequence(
        frames=tuple(frames), resolution=seq.resolution, fps=seq.fps, exited=seq.exited
    )


# --- bundles ----------------------------------------------------------------

MANIFEST_NAME = "manifest.json"
FRAMES_DIRNAME = "frames"
SCENE_NAME = "scene.json"
INITIAL_SCENE_NAME = "initial_scene.png"

PROVENANCE_TEMPLATE = "template"
PROVENANCE_USER_EDIT = "user_edit"


def content_hash(images: list[np.ndarray]) -> str:
    """sha256 over raw RGB bytes in frame order (PNG-encoder independent)."""
    digest = hashlib.sha256()
    for img in images:
        digest.update(np.ascontiguousarray(img).tobytes())
    return "sha256:" + digest.hexdigest()


@dataclass(frozen=True)
class ConditioningBundle:
    """On-disk conditioning package: frames/ + scene.json + manifest.json."""

    root: Path
    manifest: dict = field(compare=False)

    @property
    def frames_dir(self) -> Path:
        return self.root / FRAMES_DIRNAME

    def frame_paths(self) -> list[Path]:
        return sorted(self.frames_dir.glob("frame_*.png"))

    def load_images(self) -> list[np.ndarray]:
        return render.load_frames(self.frames_dir)

    def verify(self) -> None:
        """Recount frames and rehash pixels against the manifest."""
        paths = self.frame_paths()
        if len(paths) != self.manifest["frame_count"]:
            raise InputError(
                f"manifest says {self.manifest['frame_count']} frames, disk has {len(paths)}"
            )
        if content_hash(self.load_images()) != self.manifest["content_hash"]:
            raise InputError("bundle content hash mismatch")

    @classmethod
    def open(cls, root: Path | str) -> "ConditioningBundle":
        root = Path(root)
        manifest_path = root / MANIFEST_NAME
        if not manifest_path.exists():
            raise InputError(f"no {MANIFEST_NAME} under {root}")
        return cls(root=root, manifest=json.loads(manifest_path.read_text()))


def build_conditioning(
    seq: SceneSequence,
    edits: list[Trajectory],
    cfg: render.RenderConfig,
    out_dir: Path | str,
    initial_scene_image: Path | str | None = None,
    masks: "object | None" = None,
) -> ConditioningBundle:
    """Apply edits in order, render, and package the result.

    With no edits this is the template pathway: the rendered frames equal
    render_sequence(seq, cfg) exactly.
    """
    out_dir = Path(out_dir)
    edited = seq
    for traj in edits:
        edited = apply_trajectory(edited, traj)

    images = render.render_sequence(edited, cfg, masks=masks)
    out_dir.mkdir(parents=True, exist_ok=True)
    render.save_frames(images, out_dir / FRAMES_DIRNAME)
    scene.save(edited, out_dir / SCENE_NAME)

    initial_ref = None
    if initial_scene_image is not None:
        src = Path(initial_scene_image)
        if not src.exists():
            raise InputError(f"initial scene image {src} does not exist")
        shutil.copyfile(src, out_dir / INITIAL_SCENE_NAME)
        initial_ref = INITIAL_SCENE_NAME

    edited_ids = {traj.target for traj in edits}
    provenance = {
        eid: PROVENANCE_USER_EDIT if eid in edited_ids else PROVENANCE_TEMPLATE
        for fr in edited.frames
        for eid in fr.entity_ids()
    }
    manifest = {
        "resolution": list(cfg.resolution),
        "frame_count": len(images),
        "mode": cfg.mode,
        "initial_scene": initial_ref,
        "provenance": dict(sorted(provenance.items())),
        "content_hash": content_hash(images),
        "frames_dir": FRAMES_DIRNAME,
        "scene": SCENE_NAME,
    }
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1))
    return ConditioningBundle(root=out_dir, manifest=manifest)


# --- backend contract -------------------------------------------------------


class DiffusionBackend(Protocol):
    """A backend takes the bundle and returns one PNG-encoded frame per
    conditioning frame."""

    def generate(self, bundle: ConditioningBundle) -> list[bytes]: ...


class MockBackend:
    """Echoes the conditioning frames verbatim; stands in for the
    out-of-scope generative model so the pipeline is testable end to end."""

    def generate(self, bundle: ConditioningBundle) -> list[bytes]:
        return [p.read_bytes() for p in bundle.frame_paths()]


def submit_to_backend(
    bundle: ConditioningBundle, backend: DiffusionBackend, out_dir: Path | str
) -> Path:
    """Run the backend and write its frames; on any contract violation
    nothing is written."""
    out_dir = Path(out_dir)
    try:
        frames = backend.generate(bundle)
    except Exception as exc:
        raise BackendError(f"backend failed: {exc}") from exc
    expected = bundle.manifest["frame_count"]
    if len(frames) != expected:
        raise BackendError(f"backend returned {len(frames)} frames, expected {expected}")
    out_dir.mkdir(parents=True, exist_ok=True)
    for t, blob in enumerate(frames):
        (out_dir / f"frame_{t:05d}.png").write_bytes(blob)
    return out_dir
