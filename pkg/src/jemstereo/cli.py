"""Command-line driver: ``match``, ``eval`` and ``bench``."""
from __future__ import annotations

import argparse
import logging
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from .evaluation import avg_err, report, upsample_disparity, write_csv
from .image_io import (ImageIOError, downsample_image, effective_levels, parse_calib, read_image,
                       read_mask, read_pfm, write_image, write_pfm)
from .inference import NumericalError
from .pipeline import (POST_MODES, ConfigError, RunConfig, StageError, StageTimer,
                       disparity_pair, match, refine)

log = logging.getLogger("jemstereo")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2
STAGES = ("downsample", "cost", "inference", "post", "upsample")


class InputError(Exception):
    pass


def _add_common(p, out_default=None):
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--ndisp", type=int, help="disparity levels at full resolution")
    p.add_argument("--mode", choices=("lcm", "fcm", "jem"))
    p.add_argument("--scale", type=int, help="downsampling factor (default 4)")
    p.add_argument("--iters", type=int, dest="iterations", help="mean-field iterations")
    p.add_argument("--out", default=out_default, help="output path")
    p.add_argument("--debug-dumps", metavar="DIR",
                   help="write cost slices, belief trace and LRC mask here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jemstereo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    m = sub.add_parser("match", help="compute a disparity map for one pair")
    m.add_argument("left")
    m.add_argument("right")
    m.add_argument("--calib", help="calib.txt (default: next to the left image)")
    m.add_argument("--post", choices=POST_MODES)
    _add_common(m)

    e = sub.add_parser("eval", help="evaluate against Middlebury-layout ground truth")
    e.add_argument("dataset_dir", help="one dataset folder or a folder of datasets")
    e.add_argument("--post", choices=POST_MODES, action="append",
                   help="post-processing mode; repeat for several report columns")
    e.add_argument("--csv", help="also write per-dataset results as CSV")
    e.add_argument("--predictions", metavar="DIR",
                   help="score existing <dataset>.pfm files instead of running the matcher")
    e.add_argument("--figures", action="store_true",
                   help="write disparity and error figures next to the report")
    _add_common(e, out_default=None)

    b = sub.add_parser("bench", help="median stage timings over repeated runs")
    b.add_argument("left")
    b.add_argument("right")
    b.add_argument("--calib")
    b.add_argument("--post", choices=POST_MODES)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--figures", action="store_true",
                   help="write a stage-timing chart next to --out")
    _add_common(b)
    return parser


def load_config(args) -> RunConfig:
    overrides = {k: getattr(args, k, None) for k in ("ndisp", "mode", "scale", "iterations")}
    post = getattr(args, "post", None)
    if isinstance(post, str):
        overrides["post"] = post
    if args.command == "match" and args.out:
        overrides["out"] = args.out
    try:
        if args.config:
            return RunConfig.from_file(args.config, **overrides)
        return RunConfig(**{k: v for k, v in overrides.items() if v is not None})
    except OSError as exc:
        raise InputError(f"cannot read config {args.config}: {exc}") from exc
    except (ConfigError, TypeError) as exc:
        raise InputError(f"config: {exc}") from exc


def resolve_ndisp(cfg: RunConfig, calib_path, left_path) -> int:
    if cfg.ndisp is not None:
        return cfg.ndisp
    path = Path(calib_path) if calib_path else Path(left_path).parent / "calib.txt"
    if not path.exists():
        raise InputError(f"ndisp is required: pass --ndisp or provide a calib file (looked for {path})")
    return parse_calib(path).ndisp


def preview(disp: np.ndarray, ndisp: int) -> np.ndarray:
    """Fixed grayscale display mapping d / (M - 1) * 255; invalid is black."""
    scaled = np.where(np.isfinite(disp), disp, 0.0) / max(ndisp - 1, 1) * 255.0
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def _print_timings(timings, out=None):
    out = out or sys.stdout
    for stage in STAGES:
        if stage in timings:
            print(f"  {stage:<11}{timings[stage]:8.3f} s", file=out)
    print(f"  {'total':<11}{sum(timings.values()):8.3f} s", file=out)


def cmd_match(args) -> int:
    cfg = load_config(args)
    left, right = read_image(args.left), read_image(args.right)
    ndisp = resolve_ndisp(cfg, args.calib, args.left)
    result = match(left, right, ndisp, cfg, debug_dir=args.debug_dumps)
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_pfm(out, result.disparity)
    png = out.with_suffix(".png")
    write_image(png, preview(result.disparity, ndisp))
    print(f"wrote {out} and {png} ({result.levels} levels at scale 1/{cfg.scale})")
    _print_timings(result.timings)
    return EXIT_OK


def _datasets(root: Path):
    if (root / "im0.png").exists():
        return [root]
    found = sorted(p for p in root.iterdir() if p.is_dir() and (p / "im0.png").exists())
    if not found:
        raise InputError(f"no Middlebury datasets (im0.png) under {root}")
    return found


def cmd_eval(args) -> int:
    cfg = load_config(args)
    posts = args.post or [cfg.post]
    root = Path(args.dataset_dir)
    if not root.is_dir():
        raise InputError(f"dataset folder not found: {root}")
    out_dir = Path(args.out) if args.out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    rows, all_nocc, panels = [], True, {}
    for ds in _datasets(root):
        gt_path = ds / "disp0GT.pfm"
        if not gt_path.exists():
            log.warning("skipping %s: missing ground truth %s", ds.name, gt_path.name)
            continue
        gt = read_pfm(gt_path)
        mask = read_mask(ds / "mask0nocc.png") if (ds / "mask0nocc.png").exists() else None
        all_nocc &= mask is not None
        ndisp = cfg.ndisp or parse_calib(ds / "calib.txt").ndisp
        preds = _predict(ds, gt.shape, ndisp, cfg, posts, args)
        row = {}
        for post, (disp, seconds) in preds.items():
            row[post] = avg_err(disp, gt, mask, invalid_penalty=float(ndisp), runtime_s=seconds)
            if out_dir and not args.predictions:
                write_pfm(out_dir / f"{ds.name}_{post.replace('+', '_')}.pfm", disp)
        rows.append((ds.name, row))
        panels[ds.name] = {"ground truth": gt, **{p: d for p, (d, _) in preds.items()}}
    if not rows:
        raise InputError(f"no dataset under {root} has ground truth")

    metric = "nocc" if all_nocc else "all"
    text = report(rows, metric)
    print(text, end="")
    if out_dir:
        (out_dir / "report.txt").write_text(text)
    if args.csv:
        write_csv(args.csv, rows)
    if args.figures:
        from .figures import disparity_panel, error_chart
        fig_dir = out_dir or (Path(args.csv).parent if args.csv else Path("."))
        error_chart(fig_dir / "avgerr.png", rows, metric)
        for name, maps in panels.items():
            disparity_panel(fig_dir / f"{name}_disparity.png", maps)
    return EXIT_OK


def _predict(ds, shape, ndisp, cfg, posts, args):
    """``{post: (full-res disparity, seconds)}`` for one dataset."""
    if args.predictions:
        path = Path(args.predictions) / f"{ds.name}.pfm"
        if not path.exists():
            path = Path(args.predictions) / ds.name / "disp0.pfm"
        disp = read_pfm(path)
        return {posts[0]: (disp, 0.0)}
    left, right = read_image(ds / "im0.png"), read_image(ds / "im1.png")
    levels = effective_levels(ndisp, cfg.scale)
    timer = StageTimer()
    t0 = time.perf_counter()
    sl = downsample_image(left, cfg.scale)
    sr = downsample_image(right, cfg.scale)
    # one inference run shared by every post-processing column
    need_right = any(p != "none" for p in posts)
    dl, dr = disparity_pair(sl, sr, levels, cfg.replace(post="lrc" if need_right else "none"),
                            timer, args.debug_dumps)
    shared = time.perf_counter() - t0
    out = {}
    for post in posts:
        t1 = time.perf_counter()
        refined, _ = refine(dl, dr, sl, post, cfg, timer)
        full = upsample_disparity(refined, cfg.scale, shape)
        out[post] = (full, shared + time.perf_counter() - t1)
    return out


def cmd_bench(args) -> int:
    if args.repeats < 1:
        raise InputError(f"repeats must be >= 1, got {args.repeats}")
    cfg = load_config(args)
    left, right = read_image(args.left), read_image(args.right)
    ndisp = resolve_ndisp(cfg, args.calib, args.left)
    runs = []
    for _ in range(args.repeats):
        runs.append(match(left, right, ndisp, cfg).timings)
    medians = {s: statistics.median(r.get(s, 0.0) for r in runs) for s in STAGES if s in runs[0]}
    print(f"median over {args.repeats} run(s), {left.shape[1]}x{left.shape[0]}, scale 1/{cfg.scale}")
    _print_timings(medians)
    if args.figures:
        from .figures import stage_chart
        target = Path(args.out).with_suffix(".png") if args.out else Path("bench_stages.png")
        stage_chart(target, medians)
        print(f"wrote {target}")
    return EXIT_OK


COMMANDS = {"match": cmd_match, "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except StageError as exc:
        code = EXIT_NUMERICAL if isinstance(exc.original, (NumericalError, FloatingPointError)) else EXIT_INPUT
        print(f"error: {exc}", file=sys.stderr)
        return code
    except NumericalError as exc:
        print(f"error: [inference] {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, ImageIOError, ConfigError, OSError, ValueError) as exc:
        print(f"error: [input] {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
