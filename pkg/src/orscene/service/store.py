"""On-disk, event-sourced project store behind the HTTP service.

A project directory holds the ingested base scene plus an append-only edit
log; the canonical sequence is always base + replay(log), so a restart (or
crash) reproduces exactly the same content hash. Writes to one project are
serialized with a per-project lock; distinct projects are independent.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

from .. import abstraction, conditioning, render, scene
from ..errors import ConfigError, InputError, NotFoundError
from ..scene import SceneSequence

BASE_SCENE_NAME = "base_scene.json"
EDITS_NAME = "edits.json"
META_NAME = "project.json"
EXPORTS_DIRNAME = "exports"


def scene_content_hash(seq: SceneSequence) -> str:
    return "sha256:" + hashlib.sha256(scene.dumps(seq).encode()).hexdigest()


@dataclass
class Project:
    project_id: str
    root: Path
    base: SceneSequence
    edits: list[conditioning.Trajectory]
    sources: dict

    @property
    def revision(self) -> int:
        return len(self.edits)

    def canonical(self) -> SceneSequence:
        seq = self.base
        for traj in self.edits:
            seq = conditioning.apply_trajectory(seq, traj)
        return seq


class ProjectStore:
    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock(self, project_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(project_id, threading.Lock())

    def _project_dir(self, project_id: str) -> Path:
        d = self.root / project_id
        if not d.is_dir():
            raise NotFoundError(f"no project {project_id!r}")
        return d

    # -- lifecycle ------------------------------------------------------

    def create_from_bundles(
        self, masks_dir: Path | str, depths_dir: Path | str
    ) -> Project:
        masks = abstraction.load_mask_bundle(masks_dir)
        depths = abstraction.load_depth_bundle(depths_dir)
        seq = abstraction.abstract_sequence(masks, depths)
        return self._create(
            seq, {"masks_dir": str(masks_dir), "depths_dir": str(depths_dir)}
        )

    def create_from_scene(self, seq: SceneSequence) -> Project:
        return self._create(seq, {})

    def _create(self, seq: SceneSequence, sources: dict) -> Project:
        project_id = uuid.uuid4().hex[:12]
        d = self.root / project_id
        d.mkdir(parents=True)
        scene.save(seq, d / BASE_SCENE_NAME)
        _atomic_write(d / EDITS_NAME, json.dumps([]))
        meta = {
            "project_id": project_id,
            "sources": sources,
            "created_at": time.time(),
            "base_hash": scene_content_hash(seq),
        }
        _atomic_write(d / META_NAME, json.dumps(meta, indent=1))
        return Project(project_id=project_id, root=d, base=seq, edits=[], sources=sources)

    def load(self, project_id: str) -> Project:
        d = self._project_dir(project_id)
        base = scene.load(d / BASE_SCENE_NAME)
        log = json.loads((d / EDITS_NAME).read_text())
        edits = [conditioning.Trajectory.from_dict(e["trajectory"]) for e in log]
        meta = json.loads((d / META_NAME).read_text())
        return Project(
            project_id=project_id,
            root=d,
            base=base,
            edits=edits,
            sources=meta.get("sources", {}),
        )

    def list_ids(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if (p / META_NAME).exists())

    # -- edits ------------------------------------------------------------

    def append_edit(self, project_id: str, traj: conditioning.Trajectory) -> int:
        """Validate against the current canonical sequence, then append.
        Returns the new revision id (1-based, monotone)."""
        with self._lock(project_id):
            project = self.load(project_id)
            conditioning.apply_trajectory(project.canonical(), traj)  # validate
            d = project.root
            log = json.loads((d / EDITS_NAME).read_text())
            log.append({"revision": len(log) + 1, "time": time.time(),
                        "trajectory": traj.to_dict()})
            _atomic_write(d / EDITS_NAME, json.dumps(log, indent=1))
            return len(log)

    def truncate_edits(self, project_id: str, revision: int) -> int:
        """Drop edit `revision` and everything after it; returns the new
        revision id."""
        with self._lock(project_id):
            project = self.load(project_id)
            if not 1 <= revision <= project.revision:
                raise NotFoundError(
                    f"revision {revision} not in 1..{project.revision}"
                )
            d = project.root
            log = json.loads((d / EDITS_NAME).read_text())
            _atomic_write(d / EDITS_NAME, json.dumps(log[: revision - 1], indent=1))
            return revision - 1

    # -- exports ----------------------------------------------------------

    def export(self, project_id: str, cfg: render.RenderConfig) -> tuple[str, dict]:
        """Render the canonical sequence into a bundle. The export id is a
        pure function of (revision, cfg), so repeating the call reuses the
        existing bundle."""
        with self._lock(project_id):
            project = self.load(project_id)
            export_id = f"rev{project.revision:04d}-{cfg.mode}-{cfg.resolution[0]}x{cfg.resolution[1]}"
            out = project.root / EXPORTS_DIRNAME / export_id
            if (out / conditioning.MANIFEST_NAME).exists():
                return export_id, conditioning.ConditioningBundle.open(out).manifest

            masks = None
            if cfg.mode == render.MODE_SEGMASK:
                masks_dir = project.sources.get("masks_dir")
                if masks_dir is None:
                    raise ConfigError("project has no stored masks for segmask mode")
                masks = abstraction.load_mask_bundle(masks_dir)
            # edits are replayed inside build_conditioning so provenance
            # lands in the manifest
            bundle = conditioning.build_conditioning(
                project.base, project.edits, cfg, out, masks=masks
            )
            return export_id, bundle.manifest

    def export_manifest(self, project_id: str, export_id: str) -> dict:
        out = self._project_dir(project_id) / EXPORTS_DIRNAME / export_id
        if not (out / conditioning.MANIFEST_NAME).exists():
            raise NotFoundError(f"no export {export_id!r}")
        return conditioning.ConditioningBundle.open(out).manifest

    def export_dir(self, project_id: str, export_id: str) -> Path:
        out = self._project_dir(project_id) / EXPORTS_DIRNAME / export_id
        if not out.is_dir():
            raise NotFoundError(f"no export {export_id!r}")
        return out


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
