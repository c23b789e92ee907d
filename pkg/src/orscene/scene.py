"""Domain types for ellipsoid-based abstract scenes and the class palette.

All geometry lives in normalized image coordinates: centroids in [0,1]^2,
semi-axis ``a`` as a fraction of image width, ``b`` as a fraction of image
height. Depth is a normalized relative value in [0,1] with 1 = nearest to
the camera. Types are immutable values; every operation here is a pure
function safe to call concurrently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import InputError, MissingEntityError

NUM_CLASSES = 36


@dataclass(frozen=True)
class EllipsoidNode:
    """One scene entity in one frame: a depth-tagged, class-tagged ellipse."""

    entity_id: str
    class_id: int
    cx: float
    cy: float
    semi_a: float
    semi_b: float
    theta: float
    depth: float

    def __post_init__(self) -> None:
        if not 0 <= self.class_id < NUM_CLASSES:
            raise InputError(f"class_id {self.class_id} outside [0, {NUM_CLASSES - 1}]")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise InputError(f"centroid ({self.cx}, {self.cy}) outside [0,1]^2")
        if not (self.semi_a > 0.0 and self.semi_b > 0.0):
            raise InputError("semi-axes must be positive")
        if not 0.0 <= self.theta < math.pi:
            raise InputError(f"theta {self.theta} outside [0, pi)")
        if not 0.0 <= self.depth <= 1.0:
            raise InputError(f"depth {self.depth} outside [0, 1]")


@dataclass(frozen=True)
class SceneFrame:
    frame_index: int
    nodes: tuple[EllipsoidNode, ...]

    def __post_init__(self) -> None:
        if self.frame_index < 0:
            raise InputError("frame_index must be >= 0")
        object.__setattr__(self, "nodes", tuple(self.nodes))
        ids = [n.entity_id for n in self.nodes]
        if len(ids) != len(set(ids)):
            raise InputError(f"duplicate entity_id in frame {self.frame_index}")

    def entity_ids(self) -> tuple[str, ...]:
        return tuple(n.entity_id for n in self.nodes)

    def node(self, entity_id: str) -> EllipsoidNode:
        for n in self.nodes:
            if n.entity_id == entity_id:
                return n
        raise MissingEntityError(f"entity {entity_id!r} not in frame {self.frame_index}")

    def has(self, entity_id: str) -> bool:
        return any(n.entity_id == entity_id for n in self.nodes)


@dataclass(frozen=True)
class SceneSequence:
    """Ordered frames sharing one resolution; the unit of conditioning.

    ``exited`` lists entity ids that intentionally leave and may re-enter;
    for every other entity the frames it appears in must be contiguous
    (silent tracking gaps are rejected at construction).
    """

    frames: tuple[SceneFrame, ...]
    resolution: tuple[int, int]
    fps: float = 1.0
    exited: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "resolution", tuple(self.resolution))
        object.__setattr__(self, "exited", frozenset(self.exited))
        w, h = self.resolution
        if w <= 0 or h <= 0:
            raise InputError(f"resolution {self.resolution} must be positive")
        for i, fr in enumerate(self.frames):
            if fr.frame_index != i:
                raise InputError(
                    f"frame indices must run 0..{len(self.frames) - 1}; got {fr.frame_index} at {i}"
                )
        appearances: dict[str, list[int]] = {}
        for fr in self.frames:
            for n in fr.nodes:
                appearances.setdefault(n.entity_id, []).append(fr.frame_index)
        for eid, ts in appearances.items():
            if eid in self.exited:
                continue
            if ts[-1] - ts[0] + 1 != len(ts):
                raise InputError(
                    f"entity {eid!r} has a gap in frames {ts[0]}..{ts[-1]}; "
                    "mark it exited or fix the tracking"
                )

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class ClassPalette:
    """class_id -> (R, G) byte pair plus a display name per class.

    (0, 0) is reserved for background; the default grid keeps every pair
    at L-inf distance >= 36 from every other so nearest-neighbor decoding
    has margin.
    """

    colors: tuple[tuple[int, int], ...]
    names: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "colors", tuple(tuple(c) for c in self.colors))
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.colors) != NUM_CLASSES or len(self.names) != NUM_CLASSES:
            raise InputError(f"palette must define exactly {NUM_CLASSES} classes")
        if len(set(self.colors)) != NUM_CLASSES:
            raise InputError("palette colors must be distinct")
        if (0, 0) in self.colors:
            raise InputError("(0, 0) is reserved for background")

    def color(self, class_id: int) -> tuple[int, int]:
        return self.colors[class_id]

    def nearest_class(self, r: int, g: int) -> tuple[int, int]:
        """Return (class_id, L-inf distance) of the closest palette entry."""
        best, best_d = 0, 512
        for cid, (cr, cg) in enumerate(self.colors):
            d = max(abs(r - cr), abs(g - cg))
            if d < best_d:
                best, best_d = cid, d
        return best, best_d


def default_palette(names: tuple[str, ...] | None = None) -> ClassPalette:
    """Deterministic 6x6 palette: class k -> (36*(1 + k//6), 36*(1 + k%6))."""
    colors = tuple((36 * (1 + k // 6), 36 * (1 + k % 6)) for k in range(NUM_CLASSES))
    if names is None:
        names = tuple(f"class_{k:02d}" for k in range(NUM_CLASSES))
    return ClassPalette(colors=colors, names=names)


def pairwise_distance(frame: SceneFrame, a: str, b: str) -> float:
    """Euclidean distance between two entity centroids in normalized space."""
    na, nb = frame.node(a), frame.node(b)
    return math.hypot(na.cx - nb.cx, na.cy - nb.cy)


def depth_order(frame: SceneFrame) -> list[str]:
    """Entity ids sorted farthest first (ascending depth, ties by id)."""
    return [n.entity_id for n in sorted(frame.nodes, key=lambda n: (n.depth, n.entity_id))]


# --- JSON wire format -------------------------------------------------------
#
# {"resolution":[w,h], "fps":n, "frames":[{"index":t, "nodes":[
#   {"id","class","cx","cy","a","b","theta","depth"}...]}...]}
#
# Floats serialize via repr (17 significant digits), so decode(encode(s))
# reproduces every field exactly. "exited" is emitted only when non-empty.


def _node_to_dict(n: EllipsoidNode) -> dict:
    return {
        "id": n.entity_id,
        "class": n.class_id,
        "cx": n.cx,
        "cy": n.cy,
        "a": n.semi_a,
        "b": n.semi_b,
        "theta": n.theta,
        "depth": n.depth,
    }


def _node_from_dict(d: dict) -> EllipsoidNode:
    return EllipsoidNode(
        entity_id=d["id"],
        class_id=d["class"],
        cx=d["cx"],
        cy=d["cy"],
        semi_a=d["a"],
        semi_b=d["b"],
        theta=d["theta"],
        depth=d["depth"],
    )


def sequence_to_dict(seq: SceneSequence) -> dict:
    doc = {
        "resolution": list(seq.resolution),
        "fps": seq.fps,
        "frames": [
            {"index": fr.frame_index, "nodes": [_node_to_dict(n) for n in fr.nodes]}
            for fr in seq.frames
        ],
    }
    if seq.exited:
        doc["exited"] = sorted(seq.exited)
    return doc


def sequence_from_dict(doc: dict) -> SceneSequence:
    try:
        frames = tuple(
            SceneFrame(
                frame_index=f["index"],
                nodes=tuple(_node_from_dict(n) for n in f["nodes"]),
            )
            for f in doc["frames"]
        )
        return SceneSequence(
            frames=frames,
            resolution=tuple(doc["resolution"]),
            fps=doc.get("fps", 1.0),
            exited=frozenset(doc.get("exited", ())),
        )
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed scene document: {exc}") from exc


def dumps(seq: SceneSequence) -> str:
    return json.dumps(sequence_to_dict(seq), indent=1)


def loads(text: str) -> SceneSequence:
    return sequence_from_dict(json.loads(text))


def save(seq: SceneSequence, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(seq))


def load(path) -> SceneSequence:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())
