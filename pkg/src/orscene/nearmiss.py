"""Geometric near-miss labeling and synthetic dataset generation.

A near miss is a subject entity (non-sterile personnel) whose ellipse
boundary comes within tau of the protected entity (sterile field /
instrument table) without the requirement of contact. Distances use a
directional-radius approximation: centroid distance minus each ellipse's
radius along the center line. Exact for circles, cheap and sign-correct
for mild eccentricities.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import render
from .conditioning import MODE_REPLACE, Trajectory, apply_trajectory
from .errors import InputError, MissingEntityError
from .scene import EllipsoidNode, SceneFrame, SceneSequence

LABEL_POSITIVE = "positive"
LABEL_NEGATIVE = "negative"

SCENARIO_KINDS = ("approach_retreat", "pass_by", "circulate")


@dataclass(frozen=True)
class NearMissRule:
    subject_classes: frozenset[int]
    protected_class: int
    tau: float = 0.05
    include_contact: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "subject_classes", frozenset(self.subject_classes))
        if self.tau <= 0:
            raise InputError("tau must be > 0")
        if self.protected_class in self.subject_classes:
            raise InputError("protected class cannot also be a subject class")

    def to_dict(self) -> dict:
        return {
            "subject_classes": sorted(self.subject_classes),
            "protected_class": self.protected_class,
            "tau": self.tau,
            "include_contact": self.include_contact,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NearMissRule":
        return cls(
            subject_classes=frozenset(doc["subject_classes"]),
            protected_class=doc["protected_class"],
            tau=doc.get("tau", 0.05),
            include_contact=doc.get("include_contact", True),
        )


@dataclass(frozen=True)
class LabeledFrame:
    frame_index: int
    label: str
    min_distance: float | None = None
    subject_id: str | None = None
    protected_id: str | None = None

    @property
    def positive(self) -> bool:
        return self.label == LABEL_POSITIVE


def _directional_radius(node: EllipsoidNode, ux: float, uy: float) -> float:
    """Radius of the node's normalized-space ellipse along unit (ux, uy)."""
    c, s = math.cos(node.theta), math.sin(node.theta)
    lx = ux * c + uy * s
    ly = -ux * s + uy * c
    denom = math.hypot(node.semi_b * lx, node.semi_a * ly)
    if denom == 0.0:
        return 0.0
    return node.semi_a * node.semi_b / denom


def ellipse_boundary_distance(a: EllipsoidNode, b: EllipsoidNode) -> float:
    """Approximate signed boundary distance; negative means overlap."""
    dx, dy = b.cx - a.cx, b.cy - a.cy
    d = math.hypot(dx, dy)
    if d == 0.0:
        return -(min(a.semi_a, a.semi_b) + min(b.semi_a, b.semi_b))
    ux, uy = dx / d, dy / d
    return d - _directional_radius(a, ux, uy) - _directional_radius(b, -ux, -uy)


def label_frame(frame: SceneFrame, rule: NearMissRule) -> LabeledFrame:
    """Label one frame: positive iff some subject's boundary distance to
    some protected entity is below tau (contact included by default)."""
    protected = [n for n in frame.nodes if n.class_id == rule.protected_class]
    subjects = [n for n in frame.nodes if n.class_id in rule.subject_classes]
    if not protected or not subjects:
        return LabeledFrame(frame_index=frame.frame_index, label=LABEL_NEGATIVE)

    best = None
    for s in subjects:
        for p in protected:
            d = ellipse_boundary_distance(s, p)
            if best is None or d < best[0]:
                best = (d, s.entity_id, p.entity_id)
    d, sid, pid = best
    is_near = d < rule.tau and (rule.include_contact or d >= 0.0)
    return LabeledFrame(
        frame_index=frame.frame_index,
        label=LABEL_POSITIVE if is_near else LABEL_NEGATIVE,
        min_distance=d,
        subject_id=sid,
        protected_id=pid,
    )


def label_sequence(seq: SceneSequence, rule: NearMissRule) -> list[LabeledFrame]:
    return [label_frame(fr, rule) for fr in seq.frames]


# --- scenario scripting -----------------------------------------------------


@dataclass(frozen=True)
class ScenarioParams:
    rule: NearMissRule
    n_frames: int = 97
    closest_approach: float = 0.02
    far_distance: float | None = None
    subject_id: str | None = None
    resolution: tuple[int, int] = (1024, 768)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_frames < 3:
            raise InputError("scenarios need n_frames >= 3")
        if self.closest_approach < 0:
            raise InputError("closest_approach must be >= 0")
        if self.far_distance is not None and self.far_distance <= self.closest_approach:
            raise InputError("far_distance must exceed closest_approach")


def _pick(base: SceneFrame, params: ScenarioParams) -> tuple[EllipsoidNode, EllipsoidNode]:
    rule = params.rule
    protected = [n for n in base.nodes if n.class_id == rule.protected_class]
    if not protected:
        raise MissingEntityError("base frame has no protected entity")
    if params.subject_id is not None:
        subject = base.node(params.subject_id)
        if subject.class_id not in rule.subject_classes:
            raise InputError(f"{params.subject_id!r} is not a subject-class entity")
    else:
        subjects = [n for n in base.nodes if n.class_id in rule.subject_classes]
        if not subjects:
            raise MissingEntityError("base frame has no subject entity")
        subject = min(subjects, key=lambda n: n.entity_id)
    return subject, min(protected, key=lambda n: n.entity_id)


def _center_at(protected: EllipsoidNode, subject: EllipsoidNode, ux: float, uy: float,
               boundary_dist: float) -> tuple[float, float]:
    # subject center placed so the approximate boundary distance equals
    # boundary_dist along direction (ux, uy) from the protected centroid
    gap = (
        _directional_radius(protected, ux, uy)
        + _directional_radius(subject, -ux, -uy)
        + boundary_dist
    )
    return protected.cx + ux * gap, protected.cy + uy * gap


def _fits(p: tuple[float, float]) -> bool:
    return 0.0 <= p[0] <= 1.0 and 0.0 <= p[1] <= 1.0


def _scenario_waypoints(
    kind: str,
    protected: EllipsoidNode,
    subject: EllipsoidNode,
    params: ScenarioParams,
) -> list[tuple[float, float]]:
    rng = np.random.default_rng(params.seed)
    far = params.far_distance
    if far is None:
        far = max(3.0 * params.rule.tau, 0.2)

    # direction from the protected entity toward the subject's start, or a
    # seeded one if they coincide; fall back to whichever angle keeps both
    # the near and far points inside the frame
    dx, dy = subject.cx - protected.cx, subject.cy - protected.cy
    base_angle = math.atan2(dy, dx) if math.hypot(dx, dy) > 1e-9 else rng.uniform(0, 2 * math.pi)
    candidates = [base_angle + k * (math.pi / 8) for k in range(16)]

    for angle in candidates:
        ux, uy = math.cos(angle), math.sin(angle)
        near_pt = _center_at(protected, subject, ux, uy, params.closest_approach)
        far_pt = _center_at(protected, subject, ux, uy, far)
        if not (_fits(near_pt) and _fits(far_pt)):
            continue
        if kind == "approach_retreat":
            return [far_pt, near_pt, far_pt]
        if kind == "pass_by":
            vx, vy = -uy, ux
            half = min(far, 0.35)
            p0 = (near_pt[0] - vx * half, near_pt[1] - vy * half)
            p1 = (near_pt[0] + vx * half, near_pt[1] + vy * half)
            if _fits(p0) and _fits(p1):
                return [p0, near_pt, p1]
            continue
        if kind == "circulate":
            pts = []
            ok = True
            for k in range(33):  # closed loop
                phi = angle + 2 * math.pi * k / 32
                px, py = math.cos(phi), math.sin(phi)
                pt = _center_at(protected, subject, px, py, params.closest_approach)
                if not _fits(pt):
                    ok = False
                    break
                pts.append(pt)
            if ok:
                return pts
            continue
        raise InputError(f"unknown scenario kind {kind!r}")
    raise InputError(f"cannot fit a {kind} scenario inside the frame")


def generate_scenario(
    kind: str, params: ScenarioParams, base: SceneFrame
) -> tuple[SceneSequence, list[LabeledFrame]]:
    """Script the subject along the scenario shape and label every frame.

    approach_retreat dips to closest_approach and returns; pass_by crosses
    at that distance; circulate orbits at it. Deterministic per seed.
    """
    if kind not in SCENARIO_KINDS:
        raise InputError(f"unknown scenario kind {kind!r}")
    subject, protected = _pick(base, params)
    waypoints = _scenario_waypoints(kind, protected, subject, params)

    frames = tuple(
        SceneFrame(frame_index=t, nodes=base.nodes) for t in range(params.n_frames)
    )
    seq = SceneSequence(frames=frames, resolution=params.resolution)
    traj = Trajectory(target=subject.entity_id, waypoints=tuple(waypoints), mode=MODE_REPLACE)
    scripted = apply_trajectory(seq, traj)
    return scripted, label_sequence(scripted, params.rule)


# --- dataset generation & export ---------------------------------------------


@dataclass(frozen=True)
class DatasetSample:
    frame: SceneFrame
    labeled: LabeledFrame


def generate_dataset(
    base: SceneFrame,
    rule: NearMissRule,
    positives: int,
    negatives: int,
    resolution: tuple[int, int] = (1024, 768),
    n_frames_per_scenario: int = 33,
    seed: int = 0,
) -> list[DatasetSample]:
    """Compose scenarios until the exact requested label counts are met.

    Positive-yielding and negative-yielding scenarios alternate (closest
    approach below/above tau), kinds cycle, and surplus frames are trimmed
    deterministically.
    """
    if positives < 0 or negatives < 0 or positives + negatives == 0:
        raise InputError("need a positive total frame count")
    rng = np.random.default_rng(seed)
    pos_pool: list[DatasetSample] = []
    neg_pool: list[DatasetSample] = []
    round_idx = 0
    while len(pos_pool) < positives or len(neg_pool) < negatives:
        kind = SCENARIO_KINDS[round_idx % len(SCENARIO_KINDS)]
        want_positive = len(pos_pool) < positives
        closest = (
            rule.tau * float(rng.uniform(0.2, 0.8))
            if want_positive
            else rule.tau * float(rng.uniform(1.5, 3.0))
        )
        params = ScenarioParams(
            rule=rule,
            n_frames=n_frames_per_scenario,
            closest_approach=closest,
            resolution=resolution,
            seed=int(rng.integers(0, 2**31)),
        )
        seq, labels = generate_scenario(kind, params, base)
        for fr, lab in zip(seq.frames, labels):
            pool = pos_pool if lab.positive else neg_pool
            pool.append(DatasetSample(frame=fr, labeled=lab))
        round_idx += 1
        if round_idx > 10_000:
            raise InputError("dataset generation is not converging; check the rule")
    return pos_pool[:positives] + neg_pool[:negatives]


def split_by_ratio(
    n: int, ratios: dict[str, float], seed: int = 0
) -> dict[str, list[int]]:
    """Seed-deterministic index split; sizes are the rounded proportions
    with the last split absorbing the remainder."""
    if not ratios or any(r < 0 for r in ratios.values()):
        raise InputError("ratios must be non-negative and non-empty")
    total = sum(ratios.values())
    order = np.random.default_rng(seed).permutation(n)
    out: dict[str, list[int]] = {}
    start = 0
    names = list(ratios)
    for i, name in enumerate(names):
        size = n - start if i == len(names) - 1 else int(round(n * ratios[name] / total))
        out[name] = sorted(int(j) for j in order[start : start + size])
        start += size
    return out


def export_dataset(
    samples: list[DatasetSample],
    out_dir: Path | str,
    cfg: render.RenderConfig,
    rule: NearMissRule,
    split_ratios: dict[str, float] | None = None,
    split_assignment: dict[str, list[int]] | None = None,
    seed: int = 0,
) -> dict:
    """Render every sample and write frames/, labels.csv, per-split list
    files, and summary.json. Returns the summary dict."""
    if not samples:
        raise InputError("nothing to export")
    out_dir = Path(out_dir)
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)

    if split_assignment is None:
        ratios = split_ratios if split_ratios is not None else {"train": 1.0}
        split_assignment = split_by_ratio(len(samples), ratios, seed=seed)

    rows = []
    for i, sample in enumerate(samples):
        img = render.render_frame(
            SceneFrame(frame_index=0, nodes=sample.frame.nodes), cfg
        )
        rel = f"frames/frame_{i:05d}.png"
        Image.fromarray(img, mode="RGB").save(out_dir / rel)
        lab = sample.labeled
        rows.append(
            {
                "frame_path": rel,
                "label": lab.label,
                "min_distance": "" if lab.min_distance is None else f"{lab.min_distance:.9g}",
                "subject_id": lab.subject_id or "",
                "protected_id": lab.protected_id or "",
            }
        )

    with open(out_dir / "labels.csv", "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["frame_path", "label", "min_distance", "subject_id", "protected_id"]
        )
        writer.writeheader()
        writer.writerows(rows)

    counts: dict[str, dict[str, int]] = {}
    for name, indices in split_assignment.items():
        with open(out_dir / f"{name}.txt", "w") as fh:
            fh.write("".join(rows[i]["frame_path"] + "\n" for i in indices))
        counts[name] = {
            LABEL_POSITIVE: sum(1 for i in indices if samples[i].labeled.positive),
            LABEL_NEGATIVE: sum(1 for i in indices if not samples[i].labeled.positive),
        }

    summary = {
        "total": len(samples),
        "counts": counts,
        "tau": rule.tau,
        "rule": rule.to_dict(),
        "resolution": list(cfg.resolution),
        "mode": cfg.mode,
        "seed": seed,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=1))
    return summary
