"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error (bad or missing input,
invalid configuration), 3 internal error or failed self-check.
"""
from __future__ import annotations

import argparse
import base64
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .benchkit import VideoStats, contrast_score, density_score, generate_prompt, laplacian_sharpness, score_corpus
from .config import AppConfig, ConfigError, dump_config, load_config, worker_count
from .flow import CachedProvider, frame_pair_provider
from .metrics import evaluate
from .pipeline import VARIANTS, FrameSource, SequenceRecord, overlay, resize_mask, segment_sequence
from .synth import generate, scenario_suite
from .tmcc import CalibrationError, calibrate

log = logging.getLogger("rsrvos")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
DATA_ERRORS = (FileNotFoundError, NotADirectoryError, io.FormatError, ConfigError, CalibrationError, ValueError, KeyError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _json_dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _frames_and_conf(frames_dir, init_conf):
    paths = io.list_pngs(frames_dir)
    if len(paths) < 2:
        raise ValueError(f"{frames_dir}: need at least 2 frame PNGs, found {len(paths)}")
    conf = io.read_scalar_map(init_conf)
    if conf.min() < 0 or conf.max() > 1:
        raise ValueError(f"{init_conf}: confidence values must lie in [0, 1]")
    return paths, conf


# --- subcommands ---------------------------------------------------------------------


def cmd_calibrate(args, cfg: AppConfig) -> int:
    paths, conf = _frames_and_conf(args.frames, args.init_conf)
    frames = FrameSource(paths)
    if frames[0].shape != conf.shape:
        raise ValueError(f"{args.init_conf}: shape {conf.shape} does not match frame {frames[0].shape}")
    r0 = conf > cfg.pipeline.init_threshold
    mask, report = calibrate(r0, conf, CachedProvider(frame_pair_provider(frames, cfg.block)), cfg.calibration_config())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_mask_png(out / "calibrated.png", mask)
    rep = report.to_dict()
    rep.update(area_r0=int(r0.sum()), area_calibrated=int(mask.sum()))
    _json_dump(out / "calibration.json", rep)
    print(f"calibrated mask: {int(mask.sum())} px (R0 {int(r0.sum())} px), n* = {report.n_star}")
    return EXIT_OK


def cmd_segment(args, cfg: AppConfig) -> int:
    paths, conf = _frames_and_conf(args.frames, args.init_conf)
    native = io.read_frame_png(paths[0]).shape
    if conf.shape != native:
        raise ValueError(f"{args.init_conf}: shape {conf.shape} does not match frame {native}")
    pcfg = cfg.pipeline_config()
    features = None
    if pcfg.feature == "file":
        if not args.features:
            raise ValueError("feature = 'file' needs --features DIR with one .rst1 per frame")
        features = sorted(Path(args.features).glob("*.rst1"))
        if len(features) != len(paths):
            raise ValueError(f"{args.features}: {len(features)} feature files for {len(paths)} frames")
    record = SequenceRecord(Path(args.frames).name, paths, features=features)
    res = segment_sequence(record, conf, pcfg, args.variant)

    out = Path(args.out)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    (out / "overlays").mkdir(parents=True, exist_ok=True)
    size = (native[1], native[0])
    for t, (p, m) in enumerate(zip(paths, res.masks)):
        m = resize_mask(m, size)
        io.write_mask_png(out / "masks" / f"{p.stem}.png", m)
        io.write_rgb_png(out / "overlays" / f"{p.stem}.png", overlay(io.read_frame_png(p), m))
    io.write_jsonl(out / "diagnostics.jsonl", [{**d, "frame": paths[d["t"]].name} for d in res.diagnostics])
    if res.calibration is not None:
        _json_dump(out / "calibration.json", res.calibration)
    if hasattr(res.bank, "snapshot"):
        _json_dump(out / "memory.json", res.bank.snapshot())
    print(f"segmented {len(res.masks)} frames ({args.variant}) in {res.seconds:.1f}s -> {out}")
    return EXIT_OK


def cmd_eval(args, cfg: AppConfig) -> int:
    preds, gts = io.list_pngs(args.pred), io.list_pngs(args.gt)
    names_p, names_g = [p.name for p in preds], [g.name for g in gts]
    if names_p != names_g:
        only_p = sorted(set(names_p) - set(names_g))
        only_g = sorted(set(names_g) - set(names_p))
        lines = [f"frame mismatch: {len(preds)} predictions in {args.pred}, {len(gts)} ground-truth masks in {args.gt}"]
        lines += [f"  no ground truth for {Path(args.pred) / n}" for n in only_p]
        lines += [f"  no prediction for {Path(args.gt) / n}" for n in only_g]
        print("\n".join(lines), file=sys.stderr)
        return EXIT_DATA
    report = evaluate([io.read_mask_png(p) for p in preds], [io.read_mask_png(g) for g in gts], cfg.metrics)
    d = report.to_dict()
    cols = ("J&F", "J", "J-Recall", "F", "F-Recall")
    print("  ".join(f"{c:>9}" for c in cols))
    print("  ".join(f"{d[c]:9.4f}" for c in cols))
    if args.out:
        _json_dump(Path(args.out), d)
    return EXIT_OK


def _video_stats(video_id: str, rows: list[dict], base: Path, band: int) -> VideoStats:
    per_frame: dict[int, list[dict]] = {}
    for r in rows:
        per_frame.setdefault(int(r["frame_index"]), []).append(r)
    frames = sorted(per_frame)
    frame_paths = {}
    for t in frames:
        fp = {r.get("frame_path") for r in per_frame[t]} - {None}
        if len(fp) != 1:
            raise ValueError(f"{video_id}: frame {t} needs exactly one frame_path, got {sorted(fp)}")
        frame_paths[t] = base / fp.pop()
    first = min(per_frame[frames[0]], key=lambda r: r["object_id"])
    frame0 = io.read_frame_png(frame_paths[frames[0]])
    target = io.read_mask_png(base / first["mask_path"])
    counts = [sum(1 for r in per_frame[t] if r.get("mask_path")) for t in frames]
    sharp = laplacian_sharpness(io.read_frame_png(frame_paths[t]) for t in frames)
    return VideoStats(video_id, contrast_score(frame0, target, band), density_score(counts), sharp)


def cmd_vds(args, cfg: AppConfig) -> int:
    manifest = Path(args.corpus)
    rows = io.read_jsonl(manifest)
    videos: dict[str, list[dict]] = {}
    for i, r in enumerate(rows):
        for key in ("video_id", "frame_index", "object_id", "mask_path"):
            if key not in r:
                raise ValueError(f"{manifest}:{i + 1}: missing field {key!r}")
        videos.setdefault(str(r["video_id"]), []).append(r)
    if not videos:
        raise ValueError(f"{manifest}: empty corpus")
    base = manifest.parent
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        stats = list(pool.map(lambda kv: _video_stats(kv[0], kv[1], base, cfg.vds.band), sorted(videos.items())))
    ranked = score_corpus(stats, cfg.vds.weights)
    print(f"{'rank':>4}  {'video_id':<24} {'VDS':>8} {'C':>6} {'D':>6} {'B':>6}")
    for i, r in enumerate(ranked, 1):
        print(f"{i:>4}  {r['video_id']:<24} {r['vds']:8.4f} {r['contrast']:6.3f} {r['density']:6.3f} {r['blur']:6.3f}")
    if args.out:
        _json_dump(Path(args.out), ranked)
    return EXIT_OK


def cmd_prompt(args, cfg: AppConfig) -> int:
    path = Path(args.annotation)
    category = args.category
    if path.suffix.lower() == ".png":
        mask = io.read_mask_png(path)
    else:
        rows = [r for r in io.read_jsonl(path) if int(r.get("frame_index", -1)) == 0]
        if args.object_id is not None:
            rows = [r for r in rows if str(r.get("object_id")) == args.object_id]
        if len(rows) != 1:
            raise ValueError(f"{path}: expected one frame-0 annotation, found {len(rows)} (use --object-id)")
        mask = io.read_mask_png(path.parent / rows[0]["mask_path"])
        category = category or rows[0].get("category", "")
    if not category:
        raise ValueError("no category given (--category)")
    print(generate_prompt(None, [mask], category))
    return EXIT_OK


def cmd_synth(args, cfg: AppConfig) -> int:
    seq = generate(scenario_suite(args.scenario, [args.seed])[0])
    out = Path(args.out)
    for sub in ("frames", "masks"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    rows = []
    for t, (f, m) in enumerate(zip(seq.frames, seq.masks)):
        io.write_frame_png(out / "frames" / f"{t:04d}.png", f)
        io.write_mask_png(out / "masks" / f"{t:04d}.png", m)
        rows.append({
            "video_id": f"{args.scenario}-{args.seed}",
            "frame_index": t,
            "object_id": 1,
            "mask_path": f"masks/{t:04d}.png",
            "frame_path": f"frames/{t:04d}.png",
            "category": "target",
        })
    io.write_rst1(out / "confidence.rst1", seq.confidence.astype(np.float32))
    io.write_rst1(out / "gt_confidence.rst1", seq.gt_confidence.astype(np.float32))
    io.write_jsonl(out / "manifest.jsonl", rows)
    print(f"wrote {len(seq.frames)} frames of {args.scenario} (seed {args.seed}) to {out}")
    return EXIT_OK


def cmd_inspect_memory(args, cfg: AppConfig) -> int:
    snap = json.loads(Path(args.snapshot).read_text(encoding="utf-8"))
    try:
        entries = snap["entries"]
        omega = snap["omega"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{args.snapshot}: not a memory snapshot") from exc
    print(f"omega = {omega}, capacity = {snap.get('n_max')}, entries = {len(entries)}")
    print(f"{'kind':<15} {'t':>5} {'quality':>8} {'norm':>8}  dim")
    for e in entries:
        v = io.decode_rst1(base64.b64decode(e["vector"]))
        q = "-" if e.get("quality") is None else f"{e['quality']:.3f}"
        print(f"{e['kind']:<15} {e['timestamp']:>5} {q:>8} {float(np.linalg.norm(v)):8.4f}  {v.size}")
    return EXIT_OK


def cmd_selfcheck(args, cfg: AppConfig) -> int:
    from .checks import run_all

    results = run_all()
    return EXIT_OK if all(r.ok for r in results) else EXIT_INTERNAL


# --- dispatch ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rsrvos", description="Referring video object segmentation toolkit for remote-sensing sequences.")
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--dump-config", action="store_true", help="print the effective configuration and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", dest="sub_config", help="TOML configuration file")
        sp.set_defaults(func=fn)
        return sp

    sp = add("calibrate", cmd_calibrate, "refine an initial mask with motion evidence")
    sp.add_argument("--frames", required=True, help="directory of frame PNGs (sorted by name)")
    sp.add_argument("--init-conf", required=True, help="initial confidence (.rst1, or mask .png)")
    sp.add_argument("--out", required=True, help="output directory")

    sp = add("segment", cmd_segment, "segment a sequence")
    sp.add_argument("--frames", required=True)
    sp.add_argument("--init-conf", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--variant", choices=VARIANTS, default="full")
    sp.add_argument("--features", help="directory of per-frame .rst1 features (feature = 'file')")

    sp = add("eval", cmd_eval, "score predicted masks against ground truth")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--out", help="write the report JSON here")

    sp = add("vds", cmd_vds, "rank a corpus by visual discriminability")
    sp.add_argument("--corpus", required=True, help="annotation manifest (.jsonl) with frame_path fields")
    sp.add_argument("--out", help="write the per-video breakdown JSON here")

    sp = add("prompt", cmd_prompt, "referring expression from the first-frame annotation")
    sp.add_argument("--annotation", required=True, help="mask PNG or annotation .jsonl")
    sp.add_argument("--category", help="category phrase (defaults to the annotation's)")
    sp.add_argument("--object-id")

    sp = add("synth", cmd_synth, "write a synthetic sequence")
    sp.add_argument("--scenario", required=True, choices=("weak_saliency", "distractors", "occlusion", "slow_motion"))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = add("inspect-memory", cmd_inspect_memory, "print a memory snapshot")
    sp.add_argument("--snapshot", required=True, help="memory.json written by segment")

    add("selfcheck", cmd_selfcheck, "run the bundled acceptance checks")
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(getattr(args, "sub_config", None) or args.config)
        worker_count()
        if args.dump_config:
            sys.stdout.write(dump_config(cfg))
            return EXIT_OK
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return args.func(args, cfg)
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
