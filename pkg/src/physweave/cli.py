"""Command-line orchestration: align, camopt, simulate, metrics, preview.

A scene directory supplies everything the neural front-end would have
produced upstream: config.json (objects + forces), meshes/*.obj,
background.png, target.png and masks/*.png. Subcommands consume and
produce files under --out so stages compose and re-run reproducibly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import camopt as co
from . import metrics as me
from . import posealign as pa
from . import render as rd
from . import reporting as rp
from .camera import (CAMERA_MODES, CameraPose, SearchBounds, camera_init,
                     camera_motion_pose, rasterize)
from .errors import PhysweaveError
from .geom import load_obj, save_obj
from .images import FrameBuffer, MaskImage, load_png, resize, save_png
from .sceneconfig import load_scene_config, validate_config
from .simcore import build_sim, run_sim

THREADS_ENV = "PHYSWEAVE_THREADS"


def worker_count() -> int:
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            return max(1, int(cap))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# scene directory access

def _scene_config(scene_dir: Path, override=None):
    cfg_path = Path(override) if override else scene_dir / "config.json"
    if not cfg_path.exists():
        raise FileNotFoundError(f"missing scene config: {cfg_path}")
    cfg = load_scene_config(cfg_path)
    return cfg, cfg_path.read_text(encoding="utf-8")


def _scene_meshes(scene_dir: Path, cfg) -> dict:
    """object index -> raw TriMesh, via mesh_ref or meshes/ directory order."""
    mesh_dir = scene_dir / "meshes"
    fallback = sorted(mesh_dir.glob("*.obj")) if mesh_dir.is_dir() else []
    meshes = {}
    for obj in cfg.objects:
        if obj.mesh_ref:
            ref = Path(obj.mesh_ref)
            if not ref.is_absolute():
                ref = scene_dir / ref
            meshes[obj.index] = load_obj(ref, object_id=obj.index + 2)
        elif obj.index < len(fallback):
            meshes[obj.index] = load_obj(fallback[obj.index],
                                         object_id=obj.index + 2)
        else:
            raise FileNotFoundError(
                f"no mesh for object {obj.index}: set mesh_ref or provide "
                f"meshes/*.obj (looked in {mesh_dir})")
    return meshes


def _aligned_dir(scene_dir: Path, out_dir: Path) -> Path:
    for cand in (out_dir / "aligned", scene_dir / "aligned"):
        if cand.is_dir() and list(cand.glob("obj_*.obj")):
            return cand
    raise FileNotFoundError(
        f"no aligned meshes found; run `physweave align` first "
        f"(looked in {out_dir / 'aligned'} and {scene_dir / 'aligned'})")


def _load_aligned(aligned: Path, cfg) -> dict:
    meshes = {}
    for obj in cfg.objects:
        path = aligned / f"obj_{obj.index:03d}.obj"
        if not path.exists():
            raise FileNotFoundError(f"missing aligned mesh {path}")
        meshes[obj.index] = load_obj(path, object_id=obj.index + 2)
    return meshes


def _union_mask(mask_dir: Path, size=None) -> MaskImage:
    files = sorted(mask_dir.glob("*.png")) if mask_dir.is_dir() else []
    if not files:
        raise FileNotFoundError(
            f"no object masks found; expected PNG masks in {mask_dir}")
    acc = None
    for f in files:
        m = load_png(f)
        if m.ndim == 3:
            m = m.mean(axis=2)
        acc = m if acc is None else np.maximum(acc, m)
    if size is not None:
        acc = resize(acc, size[0], size[1])
    return MaskImage(np.clip(acc, 0.0, 1.0))


def _camera_from_json(path: Path) -> CameraPose:
    data = json.loads(path.read_text())
    return CameraPose(np.array(data["position"]), np.array(data["look_at"]),
                      float(data["fov_deg"]), np.array(data.get("up", [0, 0, 1])))


def _camera_to_json(pose: CameraPose, path: Path) -> None:
    path.write_text(json.dumps({
        "position": pose.position.tolist(),
        "look_at": pose.look_at.tolist(),
        "fov_deg": pose.fov_deg,
        "up": pose.up.tolist(),
    }, indent=2))


def _object_colors(cfg) -> dict:
    return {obj.index + 2: np.asarray(obj.surface_color) for obj in cfg.objects}


# ---------------------------------------------------------------------------
# subcommands

def cmd_align(args) -> int:
    scene_dir = Path(args.scene_dir)
    out = Path(args.out or scene_dir / "out")
    cfg, cfg_text = _scene_config(scene_dir, args.config)
    for warning in cfg.warnings + validate_config(cfg, scene_dir):
        print(f"[align] warning: {warning}")
    meshes = _scene_meshes(scene_dir, cfg)
    report = pa.AlignmentReport()
    ordered = [meshes[obj.index] for obj in cfg.objects]
    if len(ordered) == 1:
        report.mode = "single"
        aligned_mesh, transform = pa.canonical_align(ordered[0])
        aligned = [aligned_mesh]
        report.transform_rotation = transform.rotation.tolist()
        report.transform_translation = transform.translation.tolist()
    else:
        report.mode = "multi"
        plane = pa.adaptive_ground_estimation(
            ordered, pa.RansacParams(), seed=args.seed, report=report)
        aligned, transform = pa.normalize_scene(ordered, plane)
        report.transform_rotation = transform.rotation.tolist()
        report.transform_translation = transform.translation.tolist()
    before = {m.object_id: m.vertices.mean(axis=0) for m in aligned}
    aligned = pa.resolve_penetration(aligned, report=report)
    for m in aligned:
        shift = m.vertices.mean(axis=0) - before[m.object_id]
        report.per_object_translations[str(m.object_id)] = shift.tolist()
    aligned_dir = out / "aligned"
    for obj, mesh in zip(cfg.objects, aligned):
        save_obj(mesh, aligned_dir / f"obj_{obj.index:03d}.obj")
    rp.save_alignment_report(report, out)
    rp.save_manifest(out, "align", args.seed, cfg_text,
                     {"mode": report.mode, "objects": len(aligned)})
    print(f"[align] {report.mode}-object path, {len(aligned)} meshes -> "
          f"{aligned_dir}")
    return 0


def cmd_camopt(args) -> int:
    scene_dir = Path(args.scene_dir)
    out = Path(args.out or scene_dir / "out")
    cfg, cfg_text = _scene_config(scene_dir, args.config)
    meshes = _load_aligned(_aligned_dir(scene_dir, out), cfg)
    target_path = Path(args.target or scene_dir / "target.png")
    if not target_path.exists():
        raise FileNotFoundError(f"missing target image: {target_path}")
    size = args.size
    target_rgb = resize(load_png(target_path), size, size)
    if args.mask:
        mask_img = load_png(Path(args.mask))
        if mask_img.ndim == 3:
            mask_img = mask_img.mean(axis=2)
        target_mask = MaskImage(np.clip(resize(mask_img, size, size), 0, 1))
    else:
        target_mask = _union_mask(scene_dir / "masks", (size, size))
    target_fb = FrameBuffer(target_rgb, np.zeros((size, size), dtype=np.int32))
    ordered = [meshes[obj.index] for obj in cfg.objects]
    init = camera_init(ordered)
    radii = np.array(args.search_radius)
    bounds = SearchBounds(init.position, radii)
    cam_cfg = co.CamOptConfig(n_random=args.samples,
                              powell_max_iter=args.powell_iters)
    pose, trace = co.coarse_to_fine(init, target_fb, target_mask, ordered,
                                    cam_cfg, bounds, seed=args.seed,
                                    colors=_object_colors(cfg))
    _camera_to_json(pose, out / "camera.json")
    rp.save_loss_trace(trace, out)
    rp.save_manifest(out, "camopt", args.seed, cfg_text,
                     {"final_loss": min(ev.loss for ev in trace),
                      "evaluations": len(trace)})
    print(f"[camopt] {len(trace)} evaluations, best loss "
          f"{min(ev.loss for ev in trace):.5f} -> {out / 'camera.json'}")
    return 0


def cmd_simulate(args) -> int:
    scene_dir = Path(args.scene_dir)
    out = Path(args.out or scene_dir / "out")
    cfg, cfg_text = _scene_config(scene_dir, args.config)
    meshes = _load_aligned(_aligned_dir(scene_dir, out), cfg)
    camera_path = out / "camera.json"
    ordered = [meshes[obj.index] for obj in cfg.objects]
    if camera_path.exists():
        base_pose = _camera_from_json(camera_path)
    else:
        print("[simulate] warning: no camera.json, using the heuristic "
              "initial pose")
        base_pose = camera_init(ordered)
    size = args.size
    bg_path = scene_dir / "background.png"
    if bg_path.exists():
        background = resize(load_png(bg_path), size, size)
    else:
        print("[simulate] warning: no background.png, compositing over gray")
        background = np.full((size, size, 3), 0.5)
    steps = args.steps if args.steps is not None else int(cfg.sim["steps"])
    state = build_sim(cfg, meshes, seed=args.seed,
                      particle_size=args.particle_size)
    for note in state.diagnostics.get("material_notes", []):
        print(f"[simulate] note: {note}")
    render_fps = int(cfg.sim["render_fps"])
    keep = set(rd.decimate_indices(steps, render_fps, args.fps))
    frames_dir = out / "frames"
    seg_dir = out / "seg"
    cond_dir = out / "conditions"
    colors = _object_colors(cfg)
    log_path = out / "sim_log.jsonl"
    out.mkdir(parents=True, exist_ok=True)
    pool = ThreadPoolExecutor(max_workers=worker_count())
    pending = []
    exported = 0

    with open(log_path, "w") as log:
        def on_frame(view, report):
            nonlocal exported
            entry = {"frame": view.frame - 1, **report.to_dict()}
            entry["objects"] = [
                {"id": oid, "aabb_lo": box.lo.tolist(),
                 "aabb_hi": box.hi.tolist(), "z_min": z}
                for oid, box, z in view.object_stats]
            idx = view.frame - 1
            if idx in keep:
                pose = camera_motion_pose(args.camera_mode, idx, base_pose) \
                    if args.camera_mode != "static" else base_pose
                res = rasterize(view.meshes, pose, size,
                                point_sets=view.point_sets, colors=colors)
                frame = rd.composite_frame(res.frame, background)
                entry["mask_pixels"] = int((res.seg >= 2).sum())
                entry["image_pixels"] = size * size
                fpath = frames_dir / (rd.FRAME_NAME % idx)
                spath = seg_dir / ("seg_%05d.png" % idx)
                pending.append(pool.submit(rd.export_frame, frame, fpath,
                                           "png", spath))
                if args.export_conditions:
                    depth = res.depth.copy()
                    finite = np.isfinite(depth)
                    inv = np.zeros_like(depth)
                    if finite.any():
                        inv[finite] = 1.0 / depth[finite]
                        peak = inv.max()
                        if peak > 0:
                            inv /= peak
                    pending.append(pool.submit(
                        save_png, inv, cond_dir / ("depth_%05d.png" % idx)))
                exported += 1
            log.write(json.dumps(entry) + "\n")

        run_sim(state, steps, on_frame)
    for fut in pending:
        fut.result()
    pool.shutdown()
    rp.save_manifest(out, "simulate", args.seed, cfg_text, {
        "steps": steps, "exported_frames": exported,
        "camera_mode": args.camera_mode, "resolution": size,
        "output_fps": args.fps})
    print(f"[simulate] {steps} steps simulated, {exported} frames exported "
          f"-> {frames_dir}")
    return 0


def _frame_stats_from_log(log_path: Path) -> list:
    from .geom import Aabb
    stats = []
    with open(log_path) as fh:
        for line in fh:
            entry = json.loads(line)
            boxes, zmins = [], []
            for obj in entry.get("objects", []):
                lo = np.array(obj["aabb_lo"])
                hi = np.array(obj["aabb_hi"])
                boxes.append(Aabb((lo + hi) / 2.0, hi - lo))
                zmins.append(float(obj["z_min"]))
            stats.append(me.FrameStats(
                aabbs=boxes, z_mins=zmins,
                mask_pixels=int(entry.get("mask_pixels", 0)),
                image_pixels=int(entry.get("image_pixels", 0))))
    return stats


def cmd_metrics(args) -> int:
    frames_dir = Path(args.frames_dir)
    frame_files = sorted(frames_dir.glob("frame_*.png"))
    if not frame_files:
        raise FileNotFoundError(f"no frame_*.png files in {frames_dir}")
    out = Path(args.out or frames_dir.parent)
    report = me.MetricsReport()
    first = load_png(frame_files[0])
    reference = None
    if args.reference and Path(args.reference).exists():
        reference = load_png(Path(args.reference))
        if reference.shape != first.shape:
            reference = resize(reference, first.shape[1], first.shape[0])
        report.ssim = me.ssim(first, reference)
        report.lpips_fallback = me.lpips_fallback(first, reference)
    else:
        report.flags.append("reference image absent: ssim/lpips skipped")
    seg_dir = Path(args.seg_dir) if args.seg_dir else frames_dir.parent / "seg"
    gt_mask_path = Path(args.gt_mask) if args.gt_mask else None
    seg_files = sorted(seg_dir.glob("seg_*.png")) if seg_dir.is_dir() else []
    if gt_mask_path and gt_mask_path.exists() and seg_files:
        seg0 = load_png(seg_files[0])
        rendered = me.MaskImage((seg0 * 255.0 >= 2.0).astype(np.float64))
        gt_img = load_png(gt_mask_path)
        if gt_img.ndim == 3:
            gt_img = gt_img.mean(axis=2)
        if gt_img.shape != rendered.values.shape:
            gt_img = resize(gt_img, rendered.values.shape[1],
                            rendered.values.shape[0])
        gt = me.MaskImage(np.clip(gt_img, 0, 1))
        report.mask_iou = me.mask_iou(rendered, gt)
        try:
            report.reproj_error_px = me.reprojection_error(rendered, gt)
        except PhysweaveError:
            report.flags.append("reprojection error skipped: empty mask")
    else:
        report.flags.append("gt mask or seg maps absent: "
                            "mask_iou/reprojection skipped")
    log_path = Path(args.sim_log) if args.sim_log \
        else frames_dir.parent / "sim_log.jsonl"
    if log_path.exists():
        stats = _frame_stats_from_log(log_path)
        pr, svr, isr, flags = me.physics_rates(
            [s for s in stats if s.aabbs] or stats)
        isr_frames = [s for s in stats if s.image_pixels]
        if isr_frames:
            _, _, isr, _ = me.physics_rates(isr_frames)
        report.penetration_rate = pr
        report.support_violation_rate = svr
        report.interaction_success_rate = isr
        report.flags.extend(flags)
    else:
        report.flags.append("sim log absent: physics rates skipped")
    frames = [load_png(f) for f in frame_files]
    sampled = me.sample_eval_frames(frames, k=args.k, max_edge=args.max_edge)
    if len(sampled) >= 2:
        report.motion_amplitude, report.motion_smoothness = \
            me.motion_stats(sampled)
    else:
        report.flags.append("fewer than 2 frames: motion stats skipped")
    report.aesthetic = me.aesthetic_fallback(sampled)
    rp.save_metrics_report(report, out)
    rp.save_manifest(out, "metrics", 0, "", {"frames": len(frame_files)})
    print(f"[metrics] report -> {out / 'metrics.json'}")
    return 0


def cmd_preview(args) -> int:
    from .preview import start_session
    handle = start_session(Path(args.scene_dir), port=args.port,
                           size=args.size, seed=args.seed,
                           fps_target=args.fps, out=args.out)
    print(f"[preview] serving on http://127.0.0.1:{args.port}/scene "
          f"(status: /status); Ctrl+C to stop")
    try:
        handle.wait()
    except KeyboardInterrupt:
        handle.stop()
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="physweave",
        description="Scene alignment, physics simulation, compositing, "
                    "metrics and live preview for single-image scene bundles")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=str, default=None,
                       help="output directory (default: SCENE_DIR/out)")
        p.add_argument("--config", type=str, default=None,
                       help="config path override (default: "
                            "SCENE_DIR/config.json)")

    p = sub.add_parser("align", help="gravity-align meshes and resolve "
                                     "penetrations")
    p.add_argument("scene_dir")
    common(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("camopt", help="recover the camera pose against the "
                                      "target image")
    p.add_argument("scene_dir")
    common(p)
    p.add_argument("--target", type=str, default=None)
    p.add_argument("--mask", type=str, default=None,
                   help="target object mask (default: union of masks/*.png)")
    p.add_argument("--size", type=int, default=256,
                   help="objective resolution")
    p.add_argument("--search-radius", type=float, nargs=3,
                   default=[0.5, 0.5, 0.5])
    p.add_argument("--samples", type=int, default=60)
    p.add_argument("--powell-iters", type=int, default=80)
    p.set_defaults(func=cmd_camopt)

    p = sub.add_parser("simulate", help="run the physics and export "
                                        "composited frames")
    p.add_argument("scene_dir")
    common(p)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--camera-mode", choices=("static",) + CAMERA_MODES,
                   default="static")
    p.add_argument("--size", type=int, default=880)
    p.add_argument("--fps", type=int, default=15, help="output FPS")
    p.add_argument("--particle-size", type=float, default=None)
    p.add_argument("--export-conditions", action="store_true",
                   help="write depth-proxy sidecars for a downstream "
                        "rerenderer")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", help="score a frames directory")
    p.add_argument("frames_dir")
    p.add_argument("--reference", type=str, default=None)
    p.add_argument("--gt-mask", type=str, default=None)
    p.add_argument("--seg-dir", type=str, default=None)
    p.add_argument("--sim-log", type=str, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--max-edge", type=int, default=880)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("preview", help="serve the live steerable preview")
    p.add_argument("scene_dir")
    common(p)
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--fps", type=int, default=15)
    p.set_defaults(func=cmd_preview)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PhysweaveError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
