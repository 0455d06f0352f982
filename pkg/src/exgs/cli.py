"""Command-line entry point: ``exgs <subcommand> ...``.

Exit codes: 0 ok, 2 usage error, 3 I/O or format error, 4 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import codec, ply
from .errors import CapacityError, ExgsError, FormatError, InvalidParameterError
from .imageio import load_png, resize, save_png
from .metrics import evaluate
from .model import Camera, GaussianCloud
from .pruner import PruneConfig, amplify, auto_voxel_size, kept_to_bytes, prune, voxelize
from .rasterizer import RenderConfig, render
from .restore import RestoreRequest, inpaint_baseline
from .significance import MODES, compute_significance, scores_from_bytes, scores_to_bytes, scores_to_csv

EXIT_USAGE, EXIT_IO, EXIT_INVARIANT = 2, 3, 4
METRICS_SCHEMA = 1


class UsageError(Exception):
    pass


def load_rig(path) -> list:
    try:
        doc = json.loads(Path(path).read_text())
        entries = doc["cameras"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"bad camera rig {path}: {exc}") from exc
    return [Camera.from_json(e) for e in entries]


def save_rig(path, cameras) -> None:
    Path(path).write_text(json.dumps({"cameras": [c.to_json() for c in cameras]}, indent=1) + "\n")


def _camera_ref(ref: str) -> Camera:
    path, _, idx = ref.partition("#")
    cams = load_rig(path)
    try:
        i = int(idx) if idx else 0
    except ValueError as exc:
        raise UsageError(f"bad camera index in {ref!r}") from exc
    if not 0 <= i < len(cams):
        raise UsageError(f"camera index {i} out of range (rig has {len(cams)})")
    return cams[i]


def load_scene(path) -> GaussianCloud:
    """Read a PLY or EXGS scene, chosen by magic bytes."""
    data = Path(path).read_bytes()
    if data[:4] == codec.MAGIC:
        return codec.decompress(data)
    return ply.load_ply(data)


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_info(args):
    data = Path(args.scene).read_bytes()
    cloud = codec.decompress(data) if data[:4] == codec.MAGIC else ply.load_ply(data)
    print(f"count: {cloud.count}")
    print(f"sh_degree: {cloud.sh_degree}")
    print(f"raw_size: {len(data)} bytes")


def cmd_score(args):
    cloud = load_scene(args.scene)
    sv = compute_significance(cloud, load_rig(args.cameras), args.mode)
    out = Path(args.output)
    if out.suffix.lower() == ".csv":
        out.write_text(scores_to_csv(sv))
    else:
        out.write_bytes(scores_to_bytes(sv))


def _prune_config(args) -> PruneConfig:
    return PruneConfig(ratio=args.ratio, voxel_size=None if args.voxel_auto else args.voxel_size,
                       min_count=args.min_count, budget_mode=args.budget)


def _prune_and_amplify(cloud, scores, cfg: PruneConfig, lam: float):
    v = cfg.voxel_size if cfg.voxel_size is not None else auto_voxel_size(cloud, cfg.auto_divisions)
    index = voxelize(cloud, v)
    pruned, kept = prune(cloud, scores, cfg, index)
    if lam > 0 and kept.size:
        pruned = amplify(pruned, kept, index, lam)
    return pruned, kept


def cmd_prune(args):
    cloud = load_scene(args.scene)
    sv = scores_from_bytes(Path(args.scores).read_bytes())
    pruned, kept = _prune_and_amplify(cloud, sv, _prune_config(args), args.amplify)
    Path(args.output).write_bytes(ply.save_ply(pruned))
    if args.kept_out:
        Path(args.kept_out).write_bytes(kept_to_bytes(kept))


def cmd_compress(args):
    data = codec.compress(load_scene(args.scene).truncate_sh())
    Path(args.output).write_bytes(data)


def cmd_decompress(args):
    cloud = codec.decompress(Path(args.scene).read_bytes())
    Path(args.output).write_bytes(ply.save_ply(cloud))


def cmd_render(args):
    cloud = load_scene(args.scene)
    out = render(cloud, _camera_ref(args.camera))
    save_png(args.output, out.color)
    if args.mask:
        save_png(args.mask, out.accum_opacity)


def cmd_restore(args):
    img = load_png(args.degraded)
    mask = load_png(args.mask, gray=True)
    req = RestoreRequest(img, mask, args.threshold, args.iters)
    save_png(args.output, inpaint_baseline(req))


def _parse_size(s):
    try:
        w, h = s.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise UsageError(f"bad size {s!r}, expected WxH") from exc


def cmd_eval(args):
    a = load_png(args.a)
    b = load_png(args.b)
    if args.resize:
        w, h = _parse_size(args.resize)
        a, b = resize(a, w, h), resize(b, w, h)
    report = evaluate(a, b)
    _write_json(args.output, {"psnr": report.psnr, "ssim": report.ssim, "width": report.width, "height": report.height})


def run_pipeline(scene_path, rig_path, outdir, ratio, mode="literal", voxel_size=None, min_count=4,
                 budget="exact", lam=1.0, threshold=0.5, iters=200) -> dict:
    """Score, prune, amplify, compress, render, mask, restore and evaluate.

    Outputs land in a temporary sibling directory that is renamed onto
    ``outdir`` only after every step succeeded.
    """
    src = Path(scene_path).read_bytes()
    cloud = ply.load_ply(src)
    cameras = load_rig(rig_path)
    cfg = PruneConfig(ratio=ratio, voxel_size=voxel_size, min_count=min_count, budget_mode=budget)
    outdir = Path(outdir)
    outdir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{outdir.name}.", dir=outdir.parent))
    try:
        sv = compute_significance(cloud, cameras, mode)
        pruned, kept = _prune_and_amplify(cloud, sv, cfg, lam)
        (tmp / "scores.bin").write_bytes(scores_to_bytes(sv))
        (tmp / "kept.bin").write_bytes(kept_to_bytes(kept))
        (tmp / "pruned.ply").write_bytes(ply.save_ply(pruned))
        packed = codec.compress(pruned.truncate_sh())
        (tmp / "scene.exgs").write_bytes(packed)
        decoded = codec.decompress(packed)
        views = []
        for i, cam in enumerate(cameras):
            ref = render(cloud, cam).color
            out = render(decoded, cam)
            restored = inpaint_baseline(RestoreRequest(out.color, out.accum_opacity, threshold, iters))
            save_png(tmp / f"reference_{i:03d}.png", ref)
            save_png(tmp / f"render_{i:03d}.png", out.color)
            save_png(tmp / f"mask_{i:03d}.png", out.accum_opacity)
            save_png(tmp / f"restored_{i:03d}.png", restored)
            deg = evaluate(ref, out.color)
            res = evaluate(ref, restored)
            views.append({"view": i,
                          "degraded": {"psnr": deg.psnr, "ssim": deg.ssim},
                          "restored": {"psnr": res.psnr, "ssim": res.ssim}})
        report = codec.ratio_report(len(src), len(packed))
        metrics = {
            "schema": METRICS_SCHEMA,
            "ratio": report.ratio,
            "source_bytes": len(src),
            "compressed_bytes": len(packed),
            "source_mb": report.original_mb,
            "compressed_mb": report.compressed_mb,
            "pre_entropy_ratio": len(src) / (codec.HEADER_SIZE + codec.BYTES_PER_GAUSSIAN * int(kept.size)),
            "source_count": cloud.count,
            "kept_count": int(kept.size),
            "retention": ratio,
            "scoring_mode": mode,
            "amplify_lambda": lam,
            "views": views,
            "mean": {
                "degraded_psnr": float(np.mean([v["degraded"]["psnr"] for v in views])) if views else None,
                "degraded_ssim": float(np.mean([v["degraded"]["ssim"] for v in views])) if views else None,
                "restored_psnr": float(np.mean([v["restored"]["psnr"] for v in views])) if views else None,
                "restored_ssim": float(np.mean([v["restored"]["ssim"] for v in views])) if views else None,
            },
        }
        _write_json(tmp / "metrics.json", metrics)
        if outdir.exists():
            shutil.rmtree(outdir)
        os.replace(tmp, outdir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return metrics


def cmd_pipeline(args):
    m = run_pipeline(args.scene, args.cameras, args.output, args.ratio, args.mode,
                     None if args.voxel_auto else args.voxel_size, args.min_count, args.budget, args.amplify)
    print(f"ratio {m['ratio']:.2f}x  kept {m['kept_count']}/{m['source_count']}  -> {args.output}")


def cmd_synth(args):
    from .synth import SynthSpec, make_orbit_cameras, make_scene

    cloud = make_scene(SynthSpec(args.kind, args.count, args.seed, args.extent, args.sh_degree))
    Path(args.output).write_bytes(ply.save_ply(cloud))
    if args.rig:
        cams = make_orbit_cameras(args.views, args.radius if args.radius else 0.25 * args.extent,
                                  width=args.width, height=args.height, elevation=args.elevation)
        save_rig(args.rig, cams)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="exgs", description="Gaussian-splat scene compression toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("info", help="print count, SH degree and file size")
    s.add_argument("scene")
    s.set_defaults(func=cmd_info)

    s = sub.add_parser("score", help="compute significance scores")
    s.add_argument("scene")
    s.add_argument("--cameras", required=True)
    s.add_argument("--mode", choices=MODES, default="literal")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_score)

    def prune_flags(s, ratio_required=True):
        s.add_argument("--ratio", type=float, required=ratio_required)
        g = s.add_mutually_exclusive_group()
        g.add_argument("--voxel-size", type=float)
        g.add_argument("--voxel-auto", action="store_true")
        s.add_argument("--min-count", type=int, default=4)
        s.add_argument("--budget", choices=("exact", "guaranteed-over"), default="exact")

    s = sub.add_parser("prune", help="voxel-guaranteed pruning")
    s.add_argument("scene")
    s.add_argument("--scores", required=True)
    prune_flags(s)
    s.add_argument("--amplify", type=float, default=0.0, metavar="LAMBDA")
    s.add_argument("--kept-out")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_prune)

    s = sub.add_parser("compress", help="PLY -> EXGS")
    s.add_argument("scene")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_compress)

    s = sub.add_parser("decompress", help="EXGS -> PLY")
    s.add_argument("scene")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_decompress)

    s = sub.add_parser("render", help="render one view to PNG")
    s.add_argument("scene")
    s.add_argument("--camera", required=True, metavar="RIG.json#I")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--mask")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("restore", help="mask-guided harmonic fill")
    s.add_argument("degraded")
    s.add_argument("--mask", required=True)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--iters", type=int, default=200)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_restore)

    s = sub.add_parser("eval", help="PSNR/SSIM report")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--resize", metavar="WxH")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("pipeline", help="full score->prune->compress->render->restore->eval chain")
    s.add_argument("scene")
    s.add_argument("--cameras", required=True)
    prune_flags(s)
    s.add_argument("--mode", choices=MODES, default="literal")
    s.add_argument("--amplify", type=float, default=1.0, metavar="LAMBDA")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("synth", help="write a deterministic synthetic scene (and optional camera rig)")
    s.add_argument("--kind", choices=("textured-room", "random-blob", "planar-grid"), default="textured-room")
    s.add_argument("--count", type=int, default=50000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--extent", type=float, default=4.0)
    s.add_argument("--sh-degree", type=int, choices=(0, 1, 2, 3), default=3)
    s.add_argument("--rig", help="also write an orbit camera rig JSON here")
    s.add_argument("--views", type=int, default=8)
    s.add_argument("--radius", type=float)
    s.add_argument("--elevation", type=float, default=0.0)
    s.add_argument("--width", type=int, default=256)
    s.add_argument("--height", type=int, default=256)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors this way
        return EXIT_USAGE if exc.code else 0
    try:
        args.func(args)
    except UsageError as exc:
        print(f"exgs: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidParameterError, CapacityError) as exc:
        print(f"exgs: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (FormatError, OSError, ExgsError) as exc:
        print(f"exgs: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
