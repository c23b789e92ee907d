"""Ellipsoid scene abstraction, conditioning and evaluation toolkit."""

from .abstraction import (
    DepthBundle,
    MaskBundle,
    abstract_sequence,
    fit_ellipse,
    instance_depth,
    normalize_depths,
)
from .conditioning import (
    ConditioningBundle,
    MockBackend,
    Trajectory,
    apply_trajectory,
    build_conditioning,
    resample_trajectory,
    submit_to_backend,
)
from .errors import (
    BackendError,
    ConfigError,
    DecodeError,
    DegenerateMaskError,
    InputError,
    MissingEntityError,
    NotFoundError,
    OrsceneError,
)
from .metrics import bb_iou, compare_sequences, psnr, seg_iou, ssim
from .nearmiss import (
    LabeledFrame,
    NearMissRule,
    ScenarioParams,
    ellipse_boundary_distance,
    export_dataset,
    generate_dataset,
    generate_scenario,
    label_frame,
    label_sequence,
)
from .render import RenderConfig, decode_frame, render_frame, render_sequence
from .scene import (
    ClassPalette,
    EllipsoidNode,
    SceneFrame,
    SceneSequence,
    default_palette,
    depth_order,
    pairwise_distance,
)

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "ClassPalette",
    "ConditioningBundle",
    "ConfigError",
    "DecodeError",
    "DegenerateMaskError",
    "DepthBundle",
    "EllipsoidNode",
    "InputError",
    "LabeledFrame",
    "MaskBundle",
    "MissingEntityError",
    "MockBackend",
    "NearMissRule",
    "NotFoundError",
    "OrsceneError",
    "RenderConfig",
    "ScenarioParams",
    "SceneFrame",
    "SceneSequence",
    "Trajectory",
    "abstract_sequence",
    "apply_trajectory",
    "bb_iou",
    "build_conditioning",
    "compare_sequences",
    "decode_frame",
    "default_palette",
    "depth_order",
    "ellipse_boundary_distance",
    "export_dataset",
    "fit_ellipse",
    "generate_dataset",
    "generate_scenario",
    "instance_depth",
    "label_frame",
    "label_sequence",
    "normalize_depths",
    "pairwise_distance",
    "psnr",
    "render_frame",
    "render_sequence",
    "resample_trajectory",
    "seg_iou",
    "ssim",
    "submit_to_backend",
]
