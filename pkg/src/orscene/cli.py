"""Batch command-line entry points mirroring the service.

Every subcommand is a thin shell over library calls, so CLI artifacts are
byte-identical to the equivalent programmatic path. Exit codes: 0 success,
1 input error, 2 internal error. Seeds default to 0 and are printed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import abstraction, conditioning, metrics, nearmiss, render, scene
from .errors import OrsceneError
from .render import MODE_ELLIPSE_DEPTH, MODES, RenderConfig
from .scene import SceneFrame, default_palette
from .service.app import derive_entity_masks


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses exit code 2 for usage errors; those are input errors
        return 0 if exc.code in (0, None) else 1
    if args.config:
        _apply_config(args, argv)
    try:
        return args.func(args)
    except OrsceneError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


def _apply_config(args: argparse.Namespace, argv: list[str]) -> None:
    """Fill flags not given on the command line from a JSON config file."""
    config = json.loads(Path(args.config).read_text())
    for key, value in config.items():
        if hasattr(args, key) and key not in _explicit_keys(argv):
            setattr(args, key, value)


def _explicit_keys(argv: list[str]) -> set[str]:
    """Dests actually present on the command line, found by re-parsing with
    every default suppressed."""
    probe = build_parser()
    stack = [probe]
    while stack:
        p = stack.pop()
        for action in p._actions:
            action.default = argparse.SUPPRESS
            if isinstance(action, argparse._SubParsersAction):
                stack.extend(action.choices.values())
    ns, _ = probe.parse_known_args(argv)
    return set(vars(ns))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orscene")
    parser.add_argument("--config", help="JSON config file; flags take precedence")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("abstract", help="mask + depth bundles -> scene JSON")
    p.add_argument("--masks", required=True)
    p.add_argument("--depths", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_abstract)

    p = sub.add_parser("render", help="scene JSON -> conditioning frames")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", default=MODE_ELLIPSE_DEPTH, choices=MODES)
    p.add_argument("--masks", help="mask bundle dir (segmask mode)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("edit", help="apply a trajectory JSON to a scene JSON")
    p.add_argument("--scene", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("condition", help="scene JSON -> conditioning bundle")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", default=MODE_ELLIPSE_DEPTH, choices=MODES)
    p.add_argument("--trajectory", action="append", default=[],
                   help="trajectory JSON, repeatable, applied in order")
    p.add_argument("--initial-frame", help="initial scene image to bundle")
    p.add_argument("--masks", help="mask bundle dir (segmask mode)")
    p.add_argument("--backend", choices=["mock"],
                   help="also run this backend on the bundle")
    p.add_argument("--generated-out", help="frame dir for backend output")
    p.set_defaults(func=cmd_condition)

    p = sub.add_parser("nearmiss-gen", help="generate a labeled near-miss dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--positives", type=int, required=True)
    p.add_argument("--negatives", type=int, required=True)
    p.add_argument("--val-positives", type=int, default=0)
    p.add_argument("--val-negatives", type=int, default=0)
    p.add_argument("--base-scene", help="scene JSON; default synthetic base frame")
    p.add_argument("--base-frame", type=int, default=0)
    p.add_argument("--subject-classes", default="4", help="comma-separated class ids")
    p.add_argument("--protected-class", type=int, default=11)
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--width", type=int, default=1024)
    p.add_argument("--height", type=int, default=768)
    p.add_argument("--frames-per-scenario", type=int, default=33)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_nearmiss_gen)

    p = sub.add_parser("nearmiss-label", help="label a scene JSON per frame")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True, help="labels.csv path")
    p.add_argument("--subject-classes", default="4")
    p.add_argument("--protected-class", type=int, default=11)
    p.add_argument("--tau", type=float, default=0.05)
    p.set_defaults(func=cmd_nearmiss_label)

    p = sub.add_parser("metrics", help="bundle + generated frames -> report.json")
    p.add_argument("--bundle", required=True)
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", help="reference frame dir; default: the bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="also write a per-frame CSV summary")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--root", default="./orscene_projects")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def cmd_abstract(args) -> int:
    masks = abstraction.load_mask_bundle(args.masks)
    depths = abstraction.load_depth_bundle(args.depths)
    seq = abstraction.abstract_sequence(masks, depths)
    scene.save(seq, args.out)
    print(f"abstracted {len(seq)} frames -> {args.out}")
    return 0


def _render_cfg(args, resolution) -> RenderConfig:
    return RenderConfig(resolution=resolution, mode=args.mode)


def cmd_render(args) -> int:
    seq = scene.load(args.scene)
    masks = abstraction.load_mask_bundle(args.masks) if args.masks else None
    images = render.render_sequence(seq, _render_cfg(args, seq.resolution), masks=masks)
    render.save_frames(images, args.out)
    print(f"rendered {len(images)} frames ({args.mode}) -> {args.out}")
    return 0


def cmd_edit(args) -> int:
    seq = scene.load(args.scene)
    traj = conditioning.Trajectory.from_dict(json.loads(Path(args.trajectory).read_text()))
    out = conditioning.apply_trajectory(seq, traj)
    scene.save(out, args.out)
    print(f"edited {traj.target!r} ({traj.mode}) -> {args.out}")
    return 0


def cmd_condition(args) -> int:
    seq = scene.load(args.scene)
    edits = [
        conditioning.Trajectory.from_dict(json.loads(Path(t).read_text()))
        for t in args.trajectory
    ]
    masks = abstraction.load_mask_bundle(args.masks) if args.masks else None
    bundle = conditioning.build_conditioning(
        seq,
        edits,
        _render_cfg(args, seq.resolution),
        args.out,
        initial_scene_image=args.initial_frame,
        masks=masks,
    )
    print(f"bundle at {args.out}: {bundle.manifest['frame_count']} frames, "
          f"hash {bundle.manifest['content_hash'][:23]}...")
    if args.backend == "mock":
        gen_dir = args.generated_out or str(Path(args.out) / "generated")
        conditioning.submit_to_backend(bundle, conditioning.MockBackend(), gen_dir)
        print(f"mock backend frames -> {gen_dir}")
    return 0


def default_base_frame() -> SceneFrame:
    """Protected table mid-frame, one subject at the left edge."""
    from .scene import EllipsoidNode

    return SceneFrame(
        0,
        (
            EllipsoidNode("staff_0", 4, 0.15, 0.5, 0.04, 0.09, 0.0, 0.8),
            EllipsoidNode("instrument_table", 11, 0.55, 0.45, 0.12, 0.07, 0.0, 0.4),
        ),
    )


def _rule_from(args) -> nearmiss.NearMissRule:
    return nearmiss.NearMissRule(
        subject_classes=frozenset(int(c) for c in str(args.subject_classes).split(",")),
        protected_class=args.protected_class,
        tau=args.tau,
    )


def cmd_nearmiss_gen(args) -> int:
    print(f"seed: {args.seed}")
    rule = _rule_from(args)
    if args.base_scene:
        seq = scene.load(args.base_scene)
        base = seq.frames[args.base_frame]
        resolution = seq.resolution
    else:
        base = default_base_frame()
        resolution = (args.width, args.height)

    def gen(n_pos, n_neg, seed):
        return nearmiss.generate_dataset(
            base, rule, positives=n_pos, negatives=n_neg, resolution=resolution,
            n_frames_per_scenario=args.frames_per_scenario, seed=seed,
        )

    samples = gen(args.positives, args.negatives, args.seed)
    assignment = {"train": list(range(len(samples)))}
    if args.val_positives or args.val_negatives:
        val = gen(args.val_positives, args.val_negatives, args.seed + 1)
        assignment["val"] = list(range(len(samples), len(samples) + len(val)))
        samples = samples + val

    cfg = RenderConfig(resolution=resolution)
    summary = nearmiss.export_dataset(
        samples, args.out, cfg, rule, split_assignment=assignment, seed=args.seed
    )
    print(json.dumps(summary["counts"], indent=1))
    return 0


def cmd_nearmiss_label(args) -> int:
    seq = scene.load(args.scene)
    labels = nearmiss.label_sequence(seq, _rule_from(args))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        fh.write("frame_path,label,min_distance,subject_id,protected_id\n")
        for lab in labels:
            dist = "" if lab.min_distance is None else f"{lab.min_distance:.9g}"
            fh.write(
                f"frame_{lab.frame_index:05d},{lab.label},{dist},"
                f"{lab.subject_id or ''},{lab.protected_id or ''}\n"
            )
    positives = sum(1 for lab in labels if lab.positive)
    print(f"labeled {len(labels)} frames ({positives} positive) -> {args.out}")
    return 0


def cmd_metrics(args) -> int:
    bundle = conditioning.ConditioningBundle.open(args.bundle)
    bundle.verify()
    cond_seq = scene.load(Path(args.bundle) / bundle.manifest["scene"])
    generated = render.load_frames(args.generated)
    reference = (
        render.load_frames(args.reference) if args.reference else bundle.load_images()
    )
    masks = derive_entity_masks(cond_seq, generated, default_palette())
    report = metrics.compare_sequences(cond_seq, masks, generated, reference)
    metrics.save_report(report, args.out)
    if args.csv:
        Path(args.csv).write_text(metrics.report_to_csv(report))
    agg = report["aggregate"]
    print(
        f"ssim {agg['ssim']:.4f}  seg_iou {agg['seg_iou_micro']:.4f}  "
        f"bb_iou {agg['bb_iou_micro']:.4f} -> {args.out}"
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(args.root), host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
