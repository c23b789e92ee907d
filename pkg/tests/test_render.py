import hashlib
import math

import numpy as np
import pytest

from orscene.abstraction import MaskBundle
from orscene.errors import ConfigError, DecodeError
from orscene.render import (
    MODE_ELLIPSE_DEPTH,
    MODE_ELLIPSE_FLAT,
    MODE_SEGMASK,
    RenderConfig,
    decode_frame,
    ellipse_aabb,
    ellipse_mask,
    render_frame,
    render_sequence,
)
from orscene.scene import SceneFrame, SceneSequence, default_palette

from conftest import make_node, oracle_node_mask, random_frame, static_sequence

CFG = RenderConfig(resolution=(1024, 768))
SMALL = RenderConfig(resolution=(256, 192))


def seg_iou_masks(a, b):
    union = np.logical_or(a, b).sum()
    return 1.0 if union == 0 else np.logical_and(a, b).sum() / union


class TestRenderFrame:
    def test_empty_frame_is_black(self):
        img = render_frame(SceneFrame(0, ()), CFG)
        assert img.shape == (768, 1024, 3)
        assert not img.any()

    def test_single_node_pixel_exact(self):
        node = make_node("a", class_id=0, depth=1.0, semi_a=0.08, semi_b=0.05, theta=0.4)
        img = render_frame(SceneFrame(0, (node,)), CFG)
        inside = oracle_node_mask(node, CFG.resolution)
        assert np.array_equal(img[inside], np.tile([36, 36, 255], (inside.sum(), 1)))
        assert not img[~inside].any()

    def test_overlap_carries_nearer_color(self):
        far = make_node("far", class_id=0, cx=0.45, cy=0.5, depth=0.3)
        near = make_node("near", class_id=7, cx=0.55, cy=0.5, depth=0.8)
        img = render_frame(SceneFrame(0, (near, far)), CFG)
        overlap = oracle_node_mask(far, CFG.resolution) & oracle_node_mask(near, CFG.resolution)
        assert overlap.any()
        palette = default_palette()
        r, g = palette.color(7)
        expected = np.array([r, g, round(255 * 0.8)])
        assert np.array_equal(img[overlap], np.tile(expected, (overlap.sum(), 1)))

    def test_occlusion_property_random_frames(self, rng):
        for _ in range(10):
            frame = random_frame(rng, 5)
            img = render_frame(frame, SMALL)
            masks = {n.entity_id: oracle_node_mask(n, SMALL.resolution) for n in frame.nodes}
            covered = np.zeros(SMALL.resolution[::-1], dtype=bool)
            palette = default_palette()
            # winner at each pixel: max (depth, entity_id) among covering nodes
            for y, x in zip(*np.nonzero(sum(m.astype(int) for m in masks.values()) > 0)):
                winners = [n for n in frame.nodes if masks[n.entity_id][y, x]]
                best = max(winners, key=lambda n: (n.depth, n.entity_id))
                r, g = palette.color(best.class_id)
                assert tuple(img[y, x]) == (r, g, round(255 * best.depth))
                covered[y, x] = True
            assert not img[~covered].any()

    def test_depth_tie_breaks_by_entity_id(self):
        a = make_node("a", class_id=1, cx=0.5, cy=0.5, depth=0.5)
        b = make_node("b", class_id=2, cx=0.5, cy=0.5, depth=0.5)
        img = render_frame(SceneFrame(0, (b, a)), SMALL)
        inside = oracle_node_mask(a, SMALL.resolution)
        r, g = default_palette().color(2)  # "b" wins the tie
        assert np.array_equal(img[inside][:, 0], np.full(inside.sum(), r))
        assert np.array_equal(img[inside][:, 1], np.full(inside.sum(), g))

    def test_all_foreground_colors_are_palette_entries(self, rng):
        palette = default_palette()
        valid = set(palette.colors)
        for _ in range(5):
            img = render_frame(random_frame(rng, 6), SMALL)
            fg = img[(img[:, :, 0] > 0) | (img[:, :, 1] > 0)]
            seen = {(int(r), int(g)) for r, g in fg[:, :2]}
            assert seen <= valid


class TestRenderSequence:
    def test_97_frames(self, rng):
        seq = static_sequence(random_frame(rng, 3), 97, SMALL.resolution)
        assert len(render_sequence(seq, SMALL)) == 97

    def test_deterministic(self, rng):
        seq = static_sequence(random_frame(rng, 4), 3, SMALL.resolution)
        h1 = [hashlib.sha256(i.tobytes()).hexdigest() for i in render_sequence(seq, SMALL)]
        h2 = [hashlib.sha256(i.tobytes()).hexdigest() for i in render_sequence(seq, SMALL)]
        assert h1 == h2

    def test_flat_vs_depth_differ_only_in_blue(self, rng):
        seq = static_sequence(random_frame(rng, 4), 3, SMALL.resolution)
        depth = render_sequence(seq, RenderConfig(SMALL.resolution, MODE_ELLIPSE_DEPTH))
        flat = render_sequence(seq, RenderConfig(SMALL.resolution, MODE_ELLIPSE_FLAT))
        for d, f in zip(depth, flat):
            assert np.array_equal(d[:, :, :2], f[:, :, :2])
            assert not f[:, :, 2].any()

    def test_segmask_mode(self):
        labels = np.zeros((192, 256), dtype=np.int64)
        labels[40:120, 30:90] = 1
        masks = MaskBundle(frames=(labels,), mapping={1: ("x", 5)}, resolution=(256, 192))
        seq = SceneSequence(frames=(SceneFrame(0, ()),), resolution=(256, 192))
        cfg = RenderConfig((256, 192), MODE_SEGMASK)
        img = render_sequence(seq, cfg, masks=masks)[0]
        r, g = default_palette().color(5)
        assert tuple(img[50, 50]) == (r, g, 0)
        assert tuple(img[0, 0]) == (0, 0, 0)

    def test_segmask_without_bundle_is_config_error(self, rng):
        seq = static_sequence(random_frame(rng, 1), 1, SMALL.resolution)
        with pytest.raises(ConfigError):
            render_sequence(seq, RenderConfig(SMALL.resolution, MODE_SEGMASK))


def non_overlapping_frame(rng, n_nodes, max_tries=200):
    """Random frame whose node AABBs (with margin) are pairwise disjoint."""
    nodes = []
    boxes = []
    classes = rng.permutation(36)[:n_nodes]
    tries = 0
    while len(nodes) < n_nodes and tries < max_tries:
        tries += 1
        n = make_node(
            entity_id=f"e{len(nodes):02d}",
            class_id=int(classes[len(nodes)]),
            cx=float(rng.uniform(0.15, 0.85)),
            cy=float(rng.uniform(0.15, 0.85)),
            semi_a=float(rng.uniform(0.03, 0.09)),
            semi_b=float(rng.uniform(0.03, 0.09)),
            theta=float(rng.uniform(0, math.pi * 0.99)),
            depth=float(rng.uniform(0, 1)),
        )
        x0, y0, x1, y1 = ellipse_aabb(n, (1024, 768))
        box = (x0 - 4, y0 - 4, x1 + 4, y1 + 4)
        if all(box[2] < b[0] or b[2] < box[0] or box[3] < b[1] or b[3] < box[1] for b in boxes):
            nodes.append(n)
            boxes.append(box)
    return SceneFrame(0, tuple(nodes))


class TestDecodeFrame:
    def test_black_image_is_empty(self):
        img = np.zeros((768, 1024, 3), dtype=np.uint8)
        assert decode_frame(img, default_palette()).nodes == ()

    def test_depth_within_quantization(self):
        node = make_node("a", class_id=3, depth=0.5)
        img = render_frame(SceneFrame(0, (node,)), CFG)
        decoded = decode_frame(img, default_palette())
        assert len(decoded.nodes) == 1
        assert abs(decoded.nodes[0].depth - 0.5) <= 1 / 255

    def test_roundtrip_iou_and_class(self, rng):
        for _ in range(10):
            frame = non_overlapping_frame(rng, 4)
            img = render_frame(frame, CFG)
            decoded = decode_frame(img, default_palette())
            assert len(decoded.nodes) == len(frame.nodes)
            by_class = {n.class_id: n for n in decoded.nodes}
            for orig in frame.nodes:
                assert orig.class_id in by_class
                got = by_class[orig.class_id]
                iou = seg_iou_masks(
                    oracle_node_mask(orig, CFG.resolution),
                    oracle_node_mask(got, CFG.resolution),
                )
                assert iou >= 0.95

    def test_unknown_color_rejected(self):
        img = np.zeros((64, 64, 3), dtype=np.uint8)
        img[10:40, 10:40] = (250, 250, 0)  # far from every palette entry
        with pytest.raises(DecodeError):
            decode_frame(img, default_palette())


class TestEllipseHelpers:
    def test_mask_matches_oracle(self, rng):
        for _ in range(20):
            n = make_node(
                "x",
                cx=float(rng.uniform(0, 1)),
                cy=float(rng.uniform(0, 1)),
                semi_a=float(rng.uniform(0.01, 0.3)),
                semi_b=float(rng.uniform(0.01, 0.3)),
                theta=float(rng.uniform(0, math.pi * 0.99)),
            )
            assert np.array_equal(
                ellipse_mask(n, SMALL.resolution), oracle_node_mask(n, SMALL.resolution)
            )

    def test_aabb_bounds_the_mask(self, rng):
        for _ in range(20):
            n = make_node(
                "x",
                cx=float(rng.uniform(0.2, 0.8)),
                cy=float(rng.uniform(0.2, 0.8)),
                semi_a=float(rng.uniform(0.02, 0.2)),
                semi_b=float(rng.uniform(0.02, 0.2)),
                theta=float(rng.uniform(0, math.pi * 0.99)),
            )
            x0, y0, x1, y1 = ellipse_aabb(n, SMALL.resolution)
            ys, xs = np.nonzero(oracle_node_mask(n, SMALL.resolution))
            if xs.size:
                assert x0 - 1e-9 <= xs.min() and xs.max() <= x1 + 1e-9
                assert y0 - 1e-9 <= ys.min() and ys.max() <= y1 + 1e-9
