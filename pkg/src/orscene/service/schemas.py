"""Pydantic request/response models mirroring the JSON wire formats."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from .. import scene
from ..conditioning import Trajectory
from ..nearmiss import NearMissRule
from ..scene import EllipsoidNode, SceneFrame, SceneSequence


class NodeModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    id: str
    class_id: int = Field(alias="class")
    cx: float
    cy: float
    a: float
    b: float
    theta: float
    depth: float

    @classmethod
    def from_node(cls, n: EllipsoidNode) -> "NodeModel":
        return cls(
            id=n.entity_id, cx=n.cx, cy=n.cy, a=n.semi_a, b=n.semi_b,
            theta=n.theta, depth=n.depth, **{"class": n.class_id},
        )


class FrameModel(BaseModel):
    index: int
    nodes: list[NodeModel]

    @classmethod
    def from_frame(cls, f: SceneFrame) -> "FrameModel":
        return cls(index=f.frame_index, nodes=[NodeModel.from_node(n) for n in f.nodes])


class SceneModel(BaseModel):
    resolution: tuple[int, int]
    fps: float = 1.0
    frames: list[FrameModel]
    exited: list[str] = []

    def to_sequence(self) -> SceneSequence:
        return scene.sequence_from_dict(self.model_dump(by_alias=True))


class TrajectoryModel(BaseModel):
    entity: str
    mode: str = "offset"
    span: Optional[tuple[int, int]] = None
    waypoints: list[tuple[float, float]]

    def to_trajectory(self) -> Trajectory:
        return Trajectory(
            target=self.entity,
            waypoints=tuple(self.waypoints),
            mode=self.mode,
            frame_span=self.span,
        )


class CreateProjectRequest(BaseModel):
    masks_dir: Optional[str] = None
    depths_dir: Optional[str] = None
    scene: Optional[SceneModel] = None


class ProjectInfo(BaseModel):
    project_id: str
    frame_count: int
    resolution: tuple[int, int]
    revision: int
    content_hash: str


class EditResponse(BaseModel):
    revision: int
    content_hash: str


class ExportRequest(BaseModel):
    mode: str = "ellipse_depth"
    width: Optional[int] = None
    height: Optional[int] = None


class ExportResponse(BaseModel):
    export_id: str
    manifest: dict


class NearMissRequest(BaseModel):
    subject_classes: list[int]
    protected_class: int
    tau: float = 0.05
    include_contact: bool = True

    def to_rule(self) -> NearMissRule:
        return NearMissRule(
            subject_classes=frozenset(self.subject_classes),
            protected_class=self.protected_class,
            tau=self.tau,
            include_contact=self.include_contact,
        )


class LabelModel(BaseModel):
    frame_index: int
    label: str
    min_distance: Optional[float] = None
    subject_id: Optional[str] = None
    protected_id: Optional[str] = None


class CompareRequest(BaseModel):
    bundle_dir: str
    generated_dir: str
    reference_dir: Optional[str] = None
