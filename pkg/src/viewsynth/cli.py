"""Command-line driver: ``viewsynth run --mode MODE [options]``.

Every failure exits nonzero after printing one line to stderr of the form::

    viewsynth: error kind=<kind> path=<path or -> detail=<message>
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import config as C
from . import fileio
from .geometry import CameraModel
from .grad import gradient_suite
from .metrics import evaluate_depth, postprocess_flip_blend
from .optimizer import HISTORY_COLUMNS, OptimizationDiverged, Solution, optimize_joint, optimize_stereo
from .synthscene import RenderedBundle, preset, render

log = logging.getLogger("viewsynth")

EXIT_FAILURE = 1
EXIT_USAGE = 2


class CliError(Exception):
    def __init__(self, kind: str, detail: str, path: str | None = None, code: int = EXIT_FAILURE):
        super().__init__(detail)
        self.kind = kind
        self.detail = detail
        self.path = path
        self.code = code

    def line(self) -> str:
        detail = " ".join(self.detail.split())
        return f"viewsynth: error kind={self.kind} path={self.path or '-'} detail={detail}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viewsynth", description="Direct view-synthesis depth and pose recovery.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one job")
    run.add_argument("--mode", choices=C.MODES)
    run.add_argument("--config", help="key = value config file")
    run.add_argument("--scene", help="synthetic scene preset instead of input files")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output directory")
    run.add_argument("--input", action="append", default=[], metavar="PATH", help="input files in mode order")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    run.add_argument("--iterations", type=int)
    run.add_argument("--lr", type=float)
    run.add_argument("--pose-lr", type=float)
    run.add_argument("--scales", type=int)
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> C.RunConfig:
    overrides = dict(C.parse_assignment(item) for item in args.set)
    for key in ("mode", "scene", "seed", "out", "iterations", "lr", "pose_lr", "scales"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = str(value)
    if args.input:
        mode = overrides.get("mode")
        if mode is None and args.config:
            mode = fileio.read_config(args.config).get("mode")
        order = C.INPUT_ORDER.get(mode or "")
        if order is None:
            raise C.ConfigError(f"--input is not accepted for mode {mode!r}")
        if len(args.input) > len(order):
            raise C.ConfigError(f"mode {mode} takes at most {len(order)} inputs ({', '.join(order)})")
        overrides.update(zip(order, args.input))
    return C.validate(C.load(args.config, overrides))


# --- inputs ------------------------------------------------------------------


def _read_image(path: str) -> np.ndarray:
    try:
        return fileio.read_image(path)
    except FileNotFoundError:
        raise CliError("missing-file", "no such file", path, EXIT_USAGE) from None
    except fileio.ParseError as exc:
        raise CliError("parse", exc.reason + f" (byte {exc.offset})", path) from None


def _read_depth(path: str) -> np.ndarray:
    try:
        return fileio.read_depth(path).astype(np.float64)
    except FileNotFoundError:
        raise CliError("missing-file", "no such file", path, EXIT_USAGE) from None
    except fileio.ParseError as exc:
        raise CliError("parse", exc.reason + f" (byte {exc.offset})", path) from None


def _camera(cfg: C.RunConfig, width: int, height: int, need_baseline: bool) -> CameraModel:
    if cfg.fx is None:
        raise CliError("config", "fx is required with file inputs", code=EXIT_USAGE)
    if need_baseline and cfg.baseline is None:
        raise CliError("config", "baseline is required for stereo inputs", code=EXIT_USAGE)
    return CameraModel(
        cfg.fx,
        cfg.fy if cfg.fy is not None else cfg.fx,
        cfg.cx if cfg.cx is not None else (width - 1) / 2,
        cfg.cy if cfg.cy is not None else (height - 1) / 2,
        cfg.baseline if cfg.baseline is not None else 1.0,
        width,
        height,
    )


class Inputs:
    """Frames, camera and optional ground truth for one optimization job."""

    def __init__(self, frames, right, cam, gt_depth=None, gt_valid=None, gt_poses=None):
        self.frames = frames
        self.right = right
        self.cam = cam
        self.gt_depth = gt_depth
        self.gt_valid = gt_valid
        self.gt_poses = gt_poses


def _scene_bundle(cfg: C.RunConfig) -> RenderedBundle:
    return render(preset(cfg.scene, seed=cfg.seed, width=cfg.width, height=cfg.height))


def load_inputs(cfg: C.RunConfig) -> Inputs:
    stereo = cfg.mode in ("stereo", "joint")
    temporal = cfg.mode in ("temporal", "joint")
    if cfg.scene is not None:
        b = _scene_bundle(cfg)
        if temporal and len(b.sources) != 2:
            raise CliError("config", f"scene {cfg.scene} has no temporal frames", code=EXIT_USAGE)
        valid = b.visible_stereo_left
        if cfg.mode == "temporal":
            valid = np.logical_and.reduce(b.visible_temporal)
        frames = b.frames if temporal else [b.target]
        return Inputs(frames, b.right if stereo else None, b.spec.cam, b.depth, valid, list(b.poses))

    keys = (["left_prev", "left", "left_next"] if temporal else ["left"]) + (["right"] if stereo else [])
    missing = [k for k in keys if getattr(cfg, k) is None]
    if missing:
        raise CliError("config", f"missing inputs: {', '.join(missing)} (or give --scene)", code=EXIT_USAGE)
    images = {k: _read_image(getattr(cfg, k)) for k in keys}
    h, w = images["left"].shape[:2]
    for k, img in images.items():
        if img.shape[:2] != (h, w):
            raise CliError("shape", f"{k} is {img.shape[1]}x{img.shape[0]}, expected {w}x{h}", getattr(cfg, k))
    cam = _camera(cfg, w, h, stereo)
    gt = _read_depth(cfg.gt_depth) if cfg.gt_depth else None
    valid = _read_image(cfg.gt_valid) > 0.5 if cfg.gt_valid else None
    frames = [images[k] for k in ("left_prev", "left", "left_next")] if temporal else [images["left"]]
    return Inputs(frames, images.get("right"), cam, gt, valid)


# --- outputs -----------------------------------------------------------------


def write_history(history: list[dict], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for row in history:
            writer.writerow([row["iteration"]] + [repr(float(row[c])) for c in HISTORY_COLUMNS[1:]])


def write_depth_vis(depth: np.ndarray, path: str) -> None:
    top = float(np.max(depth))
    comment = f"depth visualization: depth = value / 65535 * {top!r}"
    fileio.write_image(depth / top, path, 65535, comment)


def _write_metrics(cfg: C.RunConfig, inputs: Inputs, depth: np.ndarray, out: str, extra: dict | None = None):
    if inputs.gt_depth is None:
        return None
    median = cfg.median_scale if cfg.median_scale is not None else cfg.mode == "temporal"
    m = evaluate_depth(depth, inputs.gt_depth, inputs.gt_valid, median, cfg.depth_cap)
    text = m.to_text() + f"median_scale = {median}\n"
    for k, v in (extra or {}).items():
        text += f"{k} = {v!r}\n"
    with open(os.path.join(out, "metrics.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    return m


def write_solution(cfg: C.RunConfig, inputs: Inputs, sol: Solution, out: str) -> None:
    fileio.write_depth(sol.depth, os.path.join(out, "depth.vsd"), "depth, scene units")
    fileio.write_depth(sol.disp_left, os.path.join(out, "disp_left.vsd"), "left disparity, pixels")
    if sol.disp_right is not None:
        fileio.write_depth(sol.disp_right, os.path.join(out, "disp_right.vsd"), "right disparity, pixels")
    if sol.poses:
        fileio.write_poses(sol.poses, os.path.join(out, "poses.txt"), "recovered poses, target to source")
    for k, mask in enumerate(sol.masks):
        fileio.write_image(mask, os.path.join(out, f"mask_{k}.pgm"), 65535)
    write_history(sol.history, os.path.join(out, "history.csv"))
    write_depth_vis(sol.depth, os.path.join(out, "depth_vis.pgm"))
    extra = {}
    if inputs.gt_poses and sol.poses:
        for k, (p, q) in enumerate(zip(sol.poses, inputs.gt_poses)):
            extra[f"pose_{k}_translation_error"] = float(np.linalg.norm(p.translation - q.translation))
            extra[f"pose_{k}_rotation_error_deg"] = float(np.degrees(np.max(np.abs(p.as_array()[:3] - q.as_array()[:3]))))
    m = _write_metrics(cfg, inputs, sol.depth, out, extra)
    if m is not None:
        print(m.to_text(), end="")


# --- modes -------------------------------------------------------------------


def mode_render(cfg: C.RunConfig, out: str) -> None:
    if cfg.scene is None:
        raise CliError("config", "render needs --scene", code=EXIT_USAGE)
    b = _scene_bundle(cfg)
    cam = b.spec.cam
    names = {"left": "left.pgm", "right": "right.pgm"}
    fileio.write_image(b.target, os.path.join(out, "left.pgm"))
    fileio.write_image(b.right, os.path.join(out, "right.pgm"))
    if len(b.sources) == 2:
        names.update(left_prev="left_prev.pgm", left_next="left_next.pgm")
        fileio.write_image(b.frames[0], os.path.join(out, "left_prev.pgm"))
        fileio.write_image(b.frames[2], os.path.join(out, "left_next.pgm"))
        fileio.write_poses(b.poses, os.path.join(out, "poses.txt"), f"ground truth poses, scene {cfg.scene}")
    fileio.write_depth(b.depth, os.path.join(out, "depth.vsd"), "ground truth depth, scene units")
    fileio.write_depth(b.depth_right, os.path.join(out, "depth_right.vsd"), "ground truth right depth, scene units")
    fileio.write_depth(b.disp_left, os.path.join(out, "disp_left.vsd"), "ground truth left disparity, pixels")
    fileio.write_depth(b.disp_right, os.path.join(out, "disp_right.vsd"), "ground truth right disparity, pixels")
    fileio.write_image(b.visible_stereo_left.astype(float), os.path.join(out, "valid.pgm"), 255)
    scene_cfg = dict(names)
    scene_cfg.update(
        gt_depth="depth.vsd",
        gt_valid="valid.pgm",
        fx=repr(cam.fx),
        fy=repr(cam.fy),
        cx=repr(cam.cx),
        cy=repr(cam.cy),
        baseline=repr(cam.baseline),
    )
    with open(os.path.join(out, "scene.cfg"), "w", encoding="utf-8") as fh:
        fh.write(f"# rendered scene {cfg.scene}, seed {cfg.seed}\n" + fileio.format_config(scene_cfg))


def mode_optimize(cfg: C.RunConfig, out: str) -> None:
    inputs = load_inputs(cfg)
    ocfg = cfg.optimize_config()
    try:
        if cfg.mode == "stereo":
            sol = optimize_stereo(inputs.frames[0], inputs.right, inputs.cam, ocfg)
        else:
            sol = optimize_joint(inputs.frames, inputs.right, inputs.cam, ocfg)
    except OptimizationDiverged as exc:
        write_history(exc.history, os.path.join(out, "history.csv"))
        raise CliError("diverged", str(exc)) from None
    write_solution(cfg, inputs, sol, out)


def mode_evaluate(cfg: C.RunConfig, out: str) -> None:
    if cfg.pred is None or cfg.gt_depth is None:
        raise CliError("config", "evaluate needs pred and gt_depth", code=EXIT_USAGE)
    pred = _read_depth(cfg.pred)
    gt = _read_depth(cfg.gt_depth)
    if pred.shape != gt.shape:
        raise CliError("shape", f"pred is {pred.shape}, gt is {gt.shape}", cfg.pred)
    valid = _read_image(cfg.gt_valid) > 0.5 if cfg.gt_valid else None
    m = evaluate_depth(pred, gt, valid, bool(cfg.median_scale), cfg.depth_cap)
    text = m.to_text() + f"median_scale = {bool(cfg.median_scale)}\n"
    with open(os.path.join(out, "metrics.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    print(text, end="")


def mode_postprocess(cfg: C.RunConfig, out: str) -> None:
    if cfg.pred is None or cfg.flipped is None:
        raise CliError("config", "postprocess needs pred and flipped", code=EXIT_USAGE)
    a = _read_depth(cfg.pred)
    b = _read_depth(cfg.flipped)
    fileio.write_depth(postprocess_flip_blend(a, b), os.path.join(out, "disp_pp.vsd"), "flip-blended disparity, pixels")


def mode_gradcheck(cfg: C.RunConfig, out: str) -> None:
    lines = []
    ok = True
    for scene_seed, term, report in gradient_suite(
        cfg.seed, cfg.gradcheck_scenes, step=cfg.gradcheck_step, tol=cfg.gradcheck_tol
    ):
        ok &= report.passed
        lines += [f"scene={scene_seed} term={term} {line}" for line in report.lines()]
    text = "\n".join(lines) + f"\nresult = {'PASS' if ok else 'FAIL'}\n"
    with open(os.path.join(out, "gradcheck.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    print(text, end="")
    if not ok:
        failed = sum(line.startswith("scene=") and " FAIL " in line for line in lines)
        raise CliError("gradcheck-failed", f"{failed} block checks above tol {cfg.gradcheck_tol}")


MODE_HANDLERS = {
    "render": mode_render,
    "stereo": mode_optimize,
    "temporal": mode_optimize,
    "joint": mode_optimize,
    "evaluate": mode_evaluate,
    "postprocess": mode_postprocess,
    "gradcheck": mode_gradcheck,
}


def run(cfg: C.RunConfig) -> None:
    try:
        out = fileio.ensure_dir(cfg.out)
    except OSError as exc:
        raise CliError("io", exc.strerror or str(exc), cfg.out) from None
    MODE_HANDLERS[cfg.mode](cfg, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        run(cfg)
    except CliError as exc:
        print(exc.line(), file=sys.stderr)
        return exc.code
    except C.ConfigError as exc:
        err = CliError(exc.kind, str(exc), exc.path, EXIT_USAGE)
        print(err.line(), file=sys.stderr)
        return err.code
    except fileio.ParseError as exc:
        print(CliError("parse", f"{exc.reason} (byte {exc.offset})", exc.path).line(), file=sys.stderr)
        return EXIT_FAILURE
    except (ValueError, FloatingPointError, OSError) as exc:
        path = getattr(exc, "filename", None)
        print(CliError(type(exc).__name__, str(exc), path).line(), file=sys.stderr)
        return EXIT_FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
