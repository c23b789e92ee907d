"""HTTP service backing the interactive trajectory editor.

Thin wiring over ProjectStore and the core library; every endpoint body is
a pydantic model and every error comes back as
{"error": {"code", "message", "detail"}}.
"""

from __future__ import annotations

import dataclasses
import io
import os
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from PIL import Image

from .. import metrics, render, scene
from ..conditioning import ConditioningBundle
from ..errors import ConfigError, InputError, NotFoundError, OrsceneError
from ..nearmiss import label_sequence
from ..render import MODES, RenderConfig
from .schemas import (
    CompareRequest,
    CreateProjectRequest,
    EditResponse,
    ExportRequest,
    ExportResponse,
    FrameModel,
    LabelModel,
    NearMissRequest,
    ProjectInfo,
    TrajectoryModel,
)
from .store import ProjectStore, scene_content_hash

_STATUS = {
    "input": 400,
    "missing_entity": 400,
    "degenerate_mask": 400,
    "decode": 400,
    "config": 400,
    "backend": 502,
    "not_found": 404,
    "internal": 500,
}


def create_app(root: Path | str | None = None) -> FastAPI:
    root = Path(root or os.environ.get("ORSCENE_ROOT", "./orscene_projects"))
    store = ProjectStore(root)
    app = FastAPI(title="orscene", version="0.1.0")
    app.state.store = store

    @app.exception_handler(OrsceneError)
    async def _domain_error(request: Request, exc: OrsceneError):
        return _error_response(exc.code, str(exc))

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return _error_response("input", "request validation failed", exc.errors())

    def _info(project) -> ProjectInfo:
        canonical = project.canonical()
        return ProjectInfo(
            project_id=project.project_id,
            frame_count=len(canonical),
            resolution=canonical.resolution,
            revision=project.revision,
            content_hash=scene_content_hash(canonical),
        )

    @app.post("/projects", response_model=ProjectInfo)
    def create_project(body: CreateProjectRequest):
        if body.scene is not None:
            project = store.create_from_scene(body.scene.to_sequence())
        elif body.masks_dir and body.depths_dir:
            project = store.create_from_bundles(body.masks_dir, body.depths_dir)
        else:
            raise InputError("provide either scene or masks_dir + depths_dir")
        return _info(project)

    @app.get("/projects/{project_id}", response_model=ProjectInfo)
    def get_project(project_id: str):
        return _info(store.load(project_id))

    @app.get("/projects/{project_id}/frames/{t}", response_model=FrameModel)
    def get_frame(project_id: str, t: int):
        canonical = store.load(project_id).canonical()
        if not 0 <= t < len(canonical):
            raise NotFoundError(f"frame {t} outside 0..{len(canonical) - 1}")
        return FrameModel.from_frame(canonical.frames[t])

    @app.get("/projects/{project_id}/frames/{t}/render.png")
    def get_frame_render(project_id: str, t: int, mode: str = render.MODE_ELLIPSE_DEPTH):
        if mode not in MODES:
            raise ConfigError(f"mode {mode!r} not one of {MODES}")
        canonical = store.load(project_id).canonical()
        if not 0 <= t < len(canonical):
            raise NotFoundError(f"frame {t} outside 0..{len(canonical) - 1}")
        cfg = RenderConfig(resolution=canonical.resolution, mode=mode)
        img = render.render_frame(canonical.frames[t], cfg)
        buf = io.BytesIO()
        Image.fromarray(img, mode="RGB").save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/projects/{project_id}/edits", response_model=EditResponse)
    def post_edit(project_id: str, body: TrajectoryModel):
        revision = store.append_edit(project_id, body.to_trajectory())
        project = store.load(project_id)
        return EditResponse(
            revision=revision, content_hash=scene_content_hash(project.canonical())
        )

    @app.delete("/projects/{project_id}/edits/{revision}", response_model=EditResponse)
    def delete_edit(project_id: str, revision: int):
        new_rev = store.truncate_edits(project_id, revision)
        project = store.load(project_id)
        return EditResponse(
            revision=new_rev, content_hash=scene_content_hash(project.canonical())
        )

    @app.post("/projects/{project_id}/export", response_model=ExportResponse)
    def export(project_id: str, body: ExportRequest):
        project = store.load(project_id)
        width, height = project.base.resolution
        cfg = RenderConfig(
            resolution=(body.width or width, body.height or height), mode=body.mode
        )
        export_id, manifest = store.export(project_id, cfg)
        return ExportResponse(export_id=export_id, manifest=manifest)

    @app.get("/projects/{project_id}/exports/{export_id}/manifest.json")
    def export_manifest(project_id: str, export_id: str):
        return store.export_manifest(project_id, export_id)

    @app.post("/projects/{project_id}/nearmiss", response_model=list[LabelModel])
    def nearmiss(project_id: str, body: NearMissRequest):
        canonical = store.load(project_id).canonical()
        labels = label_sequence(canonical, body.to_rule())
        return [LabelModel(**dataclasses.asdict(lab)) for lab in labels]

    @app.post("/compare")
    def compare(body: CompareRequest):
        bundle = ConditioningBundle.open(body.bundle_dir)
        cond_seq = scene.load(Path(body.bundle_dir) / bundle.manifest["scene"])
        generated = render.load_frames(body.generated_dir)
        reference = (
            render.load_frames(body.reference_dir)
            if body.reference_dir
            else bundle.load_images()
        )
        masks = derive_entity_masks(cond_seq, generated)
        return metrics.compare_sequences(cond_seq, masks, generated, reference)

    return app


def derive_entity_masks(
    cond_seq, generated_frames: list[np.ndarray], palette=None
) -> dict[str, list[np.ndarray]]:
    """Per-entity masks from generated frames by exact class-color match.

    Stands in for a tracker on echo-style backends: each entity's mask is
    every pixel carrying its class color. Entities sharing a class share
    pixels, which is fine as long as the comparison derives both sides the
    same way.
    """
    from ..scene import default_palette

    palette = palette or default_palette()
    out: dict[str, list[np.ndarray]] = {}
    entity_class: dict[str, int] = {}
    for frame in cond_seq.frames:
        for node in frame.nodes:
            entity_class[node.entity_id] = node.class_id
    for eid, class_id in entity_class.items():
        r, g = palette.color(class_id)
        out[eid] = [
            (img[:, :, 0] == r) & (img[:, :, 1] == g) for img in generated_frames
        ]
    return out


def _error_response(code: str, message: str, detail=None) -> JSONResponse:
    return JSONResponse(
        status_code=_STATUS.get(code, 500),
        content={"error": {"code": code, "message": message, "detail": detail}},
    )

