"""Shared fixtures and independent oracle helpers.

Oracle rasterization here deliberately avoids the library's bounding-box
fill path: it evaluates the implicit ellipse test over the full pixel
grid so renderer bugs cannot hide in both places.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from orscene.scene import EllipsoidNode, SceneFrame, SceneSequence


def oracle_ellipse_mask(
    cx_px: float,
    cy_px: float,
    a_px: float,
    b_px: float,
    theta: float,
    width: int,
    height: int,
) -> np.ndarray:
    """Full-grid implicit-test rasterization, boundary included."""
    ys, xs = np.mgrid[0:height, 0:width]
    dx = xs - cx_px
    dy = ys - cy_px
    c, s = math.cos(theta), math.sin(theta)
    return ((dx * c + dy * s) / a_px) ** 2 + ((-dx * s + dy * c) / b_px) ** 2 <= 1.0


def oracle_node_mask(node: EllipsoidNode, resolution: tuple[int, int]) -> np.ndarray:
    w, h = resolution
    return oracle_ellipse_mask(
        node.cx * w, node.cy * h, node.semi_a * w, node.semi_b * h, node.theta, w, h
    )


def make_node(
    entity_id: str = "e0",
    class_id: int = 0,
    cx: float = 0.5,
    cy: float = 0.5,
    semi_a: float = 0.1,
    semi_b: float = 0.05,
    theta: float = 0.0,
    depth: float = 0.5,
) -> EllipsoidNode:
    return EllipsoidNode(
        entity_id=entity_id,
        class_id=class_id,
        cx=cx,
        cy=cy,
        semi_a=semi_a,
        semi_b=semi_b,
        theta=theta,
        depth=depth,
    )


def random_node(rng: np.random.Generator, entity_id: str, class_id: int) -> EllipsoidNode:
    return make_node(
        entity_id=entity_id,
        class_id=class_id,
        cx=float(rng.uniform(0.2, 0.8)),
        cy=float(rng.uniform(0.2, 0.8)),
        semi_a=float(rng.uniform(0.02, 0.12)),
        semi_b=float(rng.uniform(0.02, 0.12)),
        theta=float(rng.uniform(0.0, math.pi * 0.999)),
        depth=float(rng.uniform(0.0, 1.0)),
    )


def random_frame(
    rng: np.random.Generator, n_nodes: int, frame_index: int = 0
) -> SceneFrame:
    nodes = tuple(
        random_node(rng, f"e{i:02d}", int(rng.integers(0, 36))) for i in range(n_nodes)
    )
    return SceneFrame(frame_index=frame_index, nodes=nodes)


def static_sequence(frame: SceneFrame, n_frames: int, resolution) -> SceneSequence:
    frames = tuple(
        SceneFrame(frame_index=t, nodes=frame.nodes) for t in range(n_frames)
    )
    return SceneSequence(frames=frames, resolution=resolution)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
