import math

import numpy as np
import pytest

from orscene import scene
from orscene.errors import InputError, MissingEntityError
from orscene.scene import SceneFrame, SceneSequence, default_palette, depth_order, pairwise_distance

from conftest import make_node, random_frame


class TestEllipsoidNode:
    def test_rejects_out_of_range_fields(self):
        with pytest.raises(InputError):
            make_node(cx=1.5)
        with pytest.raises(InputError):
            make_node(depth=-0.1)
        with pytest.raises(InputError):
            make_node(semi_a=0.0)
        with pytest.raises(InputError):
            make_node(theta=math.pi)
        with pytest.raises(InputError):
            make_node(class_id=36)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(InputError):
            SceneFrame(frame_index=0, nodes=(make_node("a"), make_node("a")))


class TestPairwiseDistance:
    def test_coincident_centroids(self):
        f = SceneFrame(0, (make_node("a", cx=0.3, cy=0.3), make_node("b", cx=0.3, cy=0.3)))
        assert pairwise_distance(f, "a", "b") == 0.0

    def test_unit_square_diagonal(self):
        f = SceneFrame(0, (make_node("a", cx=0.0, cy=0.0), make_node("b", cx=1.0, cy=1.0)))
        assert pairwise_distance(f, "a", "b") == pytest.approx(math.sqrt(2), abs=1e-15)

    def test_matches_formula_oracle(self, rng):
        for _ in range(100):
            ax, ay, bx, by = rng.uniform(0, 1, size=4)
            f = SceneFrame(0, (make_node("a", cx=ax, cy=ay), make_node("b", cx=bx, cy=by)))
            expected = math.sqrt((ax - bx) ** 2 + (ay - by) ** 2)
            assert abs(pairwise_distance(f, "a", "b") - expected) < 1e-12

    def test_unknown_entity(self):
        f = SceneFrame(0, (make_node("a"),))
        with pytest.raises(MissingEntityError):
            pairwise_distance(f, "a", "ghost")


class TestDepthOrder:
    def test_two_elements(self):
        f = SceneFrame(0, (make_node("A", depth=0.2), make_node("B", depth=0.9)))
        assert depth_order(f) == ["A", "B"]

    def test_tie_breaks_by_id(self):
        f = SceneFrame(0, (make_node("B", depth=0.5), make_node("A", depth=0.5)))
        assert depth_order(f) == ["A", "B"]

    def test_matches_sort_oracle(self, rng):
        for _ in range(50):
            f = random_frame(rng, int(rng.integers(1, 9)))
            expected = [
                n.entity_id
                for n in sorted(f.nodes, key=lambda n: (n.depth, n.entity_id))
            ]
            got = depth_order(f)
            assert got == expected
            assert sorted(got) == sorted(f.entity_ids())

    def test_empty_frame(self):
        assert depth_order(SceneFrame(0, ())) == []

    def test_deterministic(self, rng):
        f = random_frame(rng, 6)
        assert depth_order(f) == depth_order(f)


class TestDefaultPalette:
    def test_formula_endpoints(self):
        p = default_palette()
        assert p.color(0) == (36, 36)
        assert p.color(35) == (216, 216)

    def test_distinct_with_linf_margin(self):
        p = default_palette()
        assert len(set(p.colors)) == 36
        dmin = min(
            max(abs(a[0] - b[0]), abs(a[1] - b[1]))
            for i, a in enumerate(p.colors)
            for b in p.colors[i + 1 :]
        )
        assert dmin == 36

    def test_background_reserved(self):
        assert (0, 0) not in default_palette().colors

    def test_nearest_class_roundtrip(self):
        p = default_palette()
        for cid, (r, g) in enumerate(p.colors):
            assert p.nearest_class(r, g) == (cid, 0)


class TestSceneSequence:
    def test_frame_indices_must_be_contiguous(self):
        frames = (SceneFrame(0, ()), SceneFrame(2, ()))
        with pytest.raises(InputError):
            SceneSequence(frames=frames, resolution=(64, 48))

    def test_silent_gap_rejected(self):
        a = make_node("a")
        frames = (
            SceneFrame(0, (a,)),
            SceneFrame(1, ()),
            SceneFrame(2, (a,)),
        )
        with pytest.raises(InputError):
            SceneSequence(frames=frames, resolution=(64, 48))
        # explicit exit marking allows the gap
        seq = SceneSequence(frames=frames, resolution=(64, 48), exited=frozenset({"a"}))
        assert len(seq) == 3

    def test_roundtrip_field_for_field(self, rng):
        for trial in range(20):
            frames = tuple(
                SceneFrame(t, random_frame(rng, 4, frame_index=t).nodes)
                for t in range(int(rng.integers(1, 6)))
            )
            seq = SceneSequence(frames=frames, resolution=(1024, 768), fps=24.0)
            decoded = scene.loads(scene.dumps(seq))
            assert decoded == seq

    def test_roundtrip_with_exits(self):
        a = make_node("a")
        frames = (SceneFrame(0, (a,)), SceneFrame(1, ()), SceneFrame(2, (a,)))
        seq = SceneSequence(frames=frames, resolution=(64, 48), exited=frozenset({"a"}))
        assert scene.loads(scene.dumps(seq)) == seq

    def test_wire_format_shape(self):
        seq = SceneSequence(
            frames=(SceneFrame(0, (make_node("a", class_id=3),)),),
            resolution=(1024, 768),
            fps=24.0,
        )
        doc = scene.sequence_to_dict(seq)
        assert doc["resolution"] == [1024, 768]
        assert doc["fps"] == 24.0
        node = doc["frames"][0]["nodes"][0]
        assert set(node) == {"id", "class", "cx", "cy", "a", "b", "theta", "depth"}

    def test_serialized_floats_keep_precision(self):
        value = 0.123456789123456789
        seq = SceneSequence(
            frames=(SceneFrame(0, (make_node("a", cx=value),)),),
            resolution=(8, 8),
        )
        text = scene.dumps(seq)
        assert repr(value) in text  # >= 9 significant digits survive

    def test_save_load(self, tmp_path, rng):
        seq = SceneSequence(
            frames=(random_frame(rng, 3),), resolution=(320, 240), fps=24.0
        )
        path = tmp_path / "scene.json"
        scene.save(seq, path)
        assert scene.load(path) == seq
