"""Command-line entry point.

Commands::

    otsu          optimal thresholds and sigma for one m or every m up to --m-max
    curve         sigma-versus-m curves as CSV for one or all solvers
    segment       merge/correct segmentation to --m sets; writes a label map
    stable-check  test a partition for stability and print the first violation
    render        piecewise-constant approximation image
    color         componentwise RGB approximation plus its gray average

Exit codes: 0 success, 1 usage error, 2 data or format error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import engine, pipelines, pnm
from .engine import Mode, PixelPartition, SubsetPolicy
from .errors import DomainError, FormatError, StableSegError
from .otsu import build_sequence, class_labels, dp_optimal_thresholds, dp_sequence

log = logging.getLogger("stableseg")

COMMANDS = ("otsu", "curve", "segment", "stable-check", "render", "color")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stableseg", description="Optimal piecewise-constant image approximation.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--input", required=True, help="binary PGM (P5) or, for color, PPM (P6)")
    p.add_argument("--out", help="output path (stdout for text outputs when omitted)")
    p.add_argument("--m", type=int, help="number of classes or sets")
    p.add_argument("--m-max", type=int, help="largest m reported")
    p.add_argument("--l", type=int, default=3, help="window size of the by-parts optimiser")
    p.add_argument("--mode", choices=[m.value for m in Mode], default="connected")
    p.add_argument("--start", choices=["singletons", "brightness"], default="singletons")
    p.add_argument("--subset", choices=[s.value for s in SubsetPolicy], default="class")
    p.add_argument("--merge", choices=["exact", "absorb"], default="absorb")
    p.add_argument("--boundary-term", action="store_true", help="order merges by FLSA ratio")
    p.add_argument("--method", choices=["otsu", "merge", "merge-correct", "all"])
    return p


def _validate(args: argparse.Namespace) -> None:
    if args.m is not None and args.m < 1:
        raise UsageError(f"--m must be >= 1, got {args.m}")
    if args.m_max is not None and args.m_max < 1:
        raise UsageError(f"--m-max must be >= 1, got {args.m_max}")
    if args.l < 2:
        raise UsageError(f"--l must be >= 2, got {args.l}")
    if not args.input:
        raise UsageError("--input must not be empty")
    if args.out == "":
        raise UsageError("--out must not be empty")
    if args.command in ("segment", "render", "color") and args.m is None:
        raise UsageError(f"{args.command} requires --m")
    if args.command in ("segment", "render", "color") and not args.out:
        raise UsageError(f"{args.command} requires --out")


def _load_gray(path: str) -> np.ndarray:
    img = pnm.load(path)
    if img.channels != 1:
        raise FormatError("expected a graymap (P5); color input is only accepted by 'color'")
    return img.samples


def _emit_text(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="ascii")
    else:
        sys.stdout.write(text)


def _cmd_otsu(args) -> None:
    image = _load_gray(args.input)
    h = pipelines.image_histogram(image)
    if args.m is not None:
        if args.m > h.distinct:
            raise DomainError(f"image has only {h.distinct} gray levels, cannot use m={args.m}")
        parts = [dp_optimal_thresholds(h, args.m)]
    else:
        m_max = min(args.m_max or h.distinct, h.distinct)
        parts = []
        for fast, exact in zip(build_sequence(h, args.l), dp_sequence(h, m_max)):
            if fast.sse > exact.sse + 1e-9 * max(exact.sse, 1.0):
                log.warning("by-parts result at m=%d above exact optimum; using the exact one", fast.m)
                fast = exact
            parts.append(fast)
    lines = ["m,thresholds,sigma,E"]
    for part in parts:
        ts = " ".join(str(t) for t in part.thresholds)
        lines.append(f"{part.m},{ts},{part.sigma:.6f},{part.sse:.6f}")
    _emit_text("\n".join(lines) + "\n", args.out)


def _cmd_curve(args) -> None:
    image = _load_gray(args.input)
    method = args.method or "all"
    points: list[pipelines.CurvePoint] = []
    if method in ("otsu", "all"):
        points += pipelines.curve_otsu(image, args.l)
    if method in ("merge", "all"):
        flags = [False, True] if method == "all" else [args.boundary_term]
        for flag in flags:
            points += pipelines.curve_merge_only(image, flag, args.merge)
    if method in ("merge-correct", "all"):
        points += pipelines.curve_merge_correct(
            image, args.mode, args.start, args.subset, args.merge
        )
    if args.m_max is not None:
        points = [pt for pt in points if pt.m <= args.m_max]
    # ascending m within each method block
    order = {name: i for i, name in enumerate(dict.fromkeys(pt.method for pt in points))}
    points.sort(key=lambda pt: (order[pt.method], pt.m))
    _emit_text(pipelines.curve_csv(points), args.out)


def _segment(args, image: np.ndarray) -> PixelPartition:
    return pipelines.segment(image, args.m, args.mode, args.start, args.subset, args.merge)


def _cmd_segment(args) -> None:
    image = _load_gray(args.input)
    p = _segment(args, image)
    pnm.save(args.out, pnm.label_map(p.labels))
    rows = []
    for new_id, old_id in enumerate(sorted(p.set_ids())):
        st = p.stats(old_id)
        rows.append((new_id, st.n, st.mean))
    sys.stdout.write(pnm.stats_csv(rows))
    sys.stdout.write(f"# m={p.n_sets} sigma={p.sigma:.6f} E={p.energy:.6f}\n")


def _threshold_labels(image: np.ndarray, m: int, mode: Mode) -> np.ndarray:
    h = pipelines.image_histogram(image)
    if m > h.distinct:
        raise DomainError(f"image has only {h.distinct} gray levels, cannot use m={m}")
    labels = class_labels(image, dp_optimal_thresholds(h, m).thresholds)
    if mode is Mode.RELAXED:
        return labels
    from scipy import ndimage

    out = np.zeros(image.shape, dtype=np.int64)
    offset = 0
    for c in np.unique(labels):
        comp, count = ndimage.label(labels == c)
        out[comp > 0] = comp[comp > 0] + offset
        offset += count
    return out


def _cmd_stable_check(args) -> None:
    image = _load_gray(args.input)
    mode = Mode(args.mode)
    if args.m is not None:
        labels = _threshold_labels(image, args.m, mode)
        p = PixelPartition(image, labels, mode=mode, subset=args.subset)
    else:
        p = pipelines.start_partition(image, args.start, mode, args.subset)
    move = engine.find_violation(p)
    lines = [f"sets={p.n_sets} sigma={p.sigma:.6f} E={p.energy:.6f}"]
    if move is None:
        lines.append("stable")
    else:
        d = move.delta
        lines.append(
            f"unstable: donor={move.donor} recipient={move.recipient} gray={move.gray} "
            f"k={d.k} dE={d.delta_e:.6f}"
        )
    _emit_text("\n".join(lines) + "\n", args.out)


def _cmd_render(args) -> None:
    image = _load_gray(args.input)
    method = args.method or "otsu"
    if method == "otsu":
        h = pipelines.image_histogram(image)
        if args.m > h.distinct:
            raise DomainError(f"image has only {h.distinct} gray levels, cannot use m={args.m}")
        partition = dp_optimal_thresholds(h, args.m)
    elif method == "merge":
        p = PixelPartition.singletons(image, mode=Mode.CONNECTED)
        if args.m > p.n_sets:
            raise DomainError(f"image has only {p.n_sets} pixels, cannot use m={args.m}")
        while p.n_sets > args.m:
            engine.merge_step(p, args.merge, args.boundary_term, limit=p.n_sets - args.m)
        partition = p
    elif method == "merge-correct":
        partition = _segment(args, image)
    else:
        raise UsageError("render needs a single --method")
    rendered = pipelines.render_approximation(image, partition)
    maxval = max(255, int(rendered.max()))
    pnm.save(args.out, pnm.RasterImage(rendered, 255 if maxval <= 255 else 65535))
    sys.stdout.write(f"sigma={pipelines.sigma_between(image, rendered):.6f}\n")


def _cmd_color(args) -> None:
    img = pnm.load(args.input)
    if img.channels != 3:
        raise FormatError("color expects a pixmap (P6)")
    rgb, gray = pipelines.color_componentwise(img.samples, args.m)
    out = Path(args.out)
    pnm.save(out, pnm.RasterImage(rgb, img.maxval))
    gray_path = out.with_name(out.stem + ".gray.pgm")
    pnm.save(gray_path, pnm.RasterImage(gray, img.maxval))
    sys.stdout.write(f"gray={gray_path}\n")
    sys.stdout.write(f"sigma={pipelines.sigma_between(img.samples, rgb):.6f}\n")


_HANDLERS = {
    "otsu": _cmd_otsu,
    "curve": _cmd_curve,
    "segment": _cmd_segment,
    "stable-check": _cmd_stable_check,
    "render": _cmd_render,
    "color": _cmd_color,
}


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = _parser().parse_args(argv)
        _validate(args)
    except UsageError as exc:
        print(f"stableseg: usage error: {exc}", file=sys.stderr)
        return 1
    try:
        _HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"stableseg: usage error: {exc}", file=sys.stderr)
        return 1
    except (StableSegError, ValueError, OSError) as exc:
        print(f"stableseg: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
