"""Command-line front end: ``sgraph compute | exact | sample | feedback | invert | render``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import exact as exact_mod
from . import feedback as fb
from .model import ModelError, StateSpace, SweepConfig, load_system, system_kind
from .presets import PRESETS, get_preset
from .regions import (MEMBERSHIP_EPS, SGApproximation, invert_region, load_regions, rasterize, save_regions)
from .render import Figure, boundary_csv, cloud_csv, raster_csv
from .sim import SimulationError, sample_cloud
from .solve import SweepError, sweep

log = logging.getLogger("sgraph")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def parse_range(text: str) -> tuple:
    """``a:b:n`` -> n evenly spaced values from a to b inclusive."""
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b:n, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("count must be positive")
    return tuple(float(v) for v in np.round(np.linspace(a, b, n), 12))


def parse_window(text: str) -> tuple:
    parts = text.replace(":", ",").split(",")
    try:
        w = tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad window {text!r}") from None
    if len(w) != 4:
        raise argparse.ArgumentTypeError("window needs xmin,xmax,ymin,ymax")
    if not (w[1] > w[0] and w[3] > w[2]):
        raise argparse.ArgumentTypeError(f"empty window {text!r}")
    return w


def parse_taus(text: str) -> np.ndarray:
    """``a:b:n`` -> n log-spaced values in [a, b]; or a comma list."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            return np.logspace(np.log10(float(a)), np.log10(float(b)), int(n))
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad tau grid {text!r}") from None


def config_hash(args: argparse.Namespace) -> str:
    d = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
         if k not in ("out", "func")}
    blob = json.dumps(d, sort_keys=True, default=lambda o: np.asarray(o).tolist())
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _system(args):
    if args.system is not None:
        if not Path(args.system).exists():
            raise UsageError(f"system file not found: {args.system}")
        return load_system(args.system)
    if args.preset is not None:
        return get_preset(args.preset).system()
    raise UsageError("give --system or --preset")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _default_window(approx: SGApproximation, pad: float = 0.1) -> tuple:
    box = approx.bounding_box()
    if box is None:
        raise UsageError("region set is unbounded; pass --window")
    g = max(abs(v) for v in box)
    return (-g - pad, g + pad, -g - pad, g + pad)


def _write_json(path: Path, obj, chash: str) -> None:
    obj = {"config_hash": chash, **obj}
    path.write_text(json.dumps(obj, indent=1), encoding="utf-8")


def cmd_compute(args) -> int:
    sysm = _system(args)
    preset = get_preset(args.preset) if args.preset else None
    cfg = preset.config(args.hard) if preset else None
    if args.lambda_i or args.lambda_e:
        li = args.lambda_i or (cfg.lambda_interior if cfg else (0.0,))
        le = args.lambda_e or (cfg.lambda_exterior if cfg else ())
        cfg = SweepConfig(li, le, args.hard)
    res = sweep(sysm, cfg, hard=args.hard, workers=args.workers)
    approx = res.approximation
    window = args.window or (preset.window if preset and not args.hard else None)
    window = window or (-res.gamma0 - 0.1, res.gamma0 + 0.1, -res.gamma0 - 0.1, res.gamma0 + 0.1)
    out, chash = _outdir(args), config_hash(args)
    _write_json(out / "sweep.json", {**res.report(), "regions_file": "regions.json"}, chash)
    save_regions(approx, out / "regions.json")
    ras = rasterize(approx, window, args.resolution)
    raster_csv(ras, out / "raster.csv", chash)
    fig = Figure(window)
    fig.region(ras.boundaries)
    fig.save(out / "region.svg", chash)
    print(f"{len(approx.regions)} regions, gain bound {res.gamma0:.6g}, "
          f"statuses {res.counts()}; wrote {out}")
    return EXIT_OK


def cmd_exact(args) -> int:
    sysm = _system(args)
    if system_kind(sysm) != "lti":
        raise UsageError("exact scaled graphs are available for LTI systems only")
    ex = exact_mod.exact_sg(sysm)
    out, chash = _outdir(args), config_hash(args)
    boundary_csv(ex.boundary, out / "exact_boundary.csv", chash)
    pts = ex.boundary_points()
    g = float(np.max(np.abs(pts))) if pts.size else 1.0
    window = args.window or (-g - 0.1, g + 0.1, -g - 0.1, g + 0.1)
    fig = Figure(window)
    fig.curve(ex.boundary)
    fig.save(out / "exact.svg", chash)
    print(f"exact boundary with {ex.hull.size} hull vertices; wrote {out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be at least 1")
    sysm = _system(args)
    cloud = sample_cloud(sysm, args.count, args.seed)
    out, chash = _outdir(args), config_hash(args)
    cloud_csv(cloud.samples, out / "samples.csv", chash)
    summary = {"count": args.count, "seed": args.seed, "untrusted": cloud.untrusted}
    if args.regions:
        approx = load_regions(args.regions)
        zs = cloud.points()
        inside = approx.contains(zs, eps=args.tolerance)
        summary["tolerance"] = args.tolerance
        summary["containment"] = float(inside.mean()) if zs.size else 1.0
        summary["violations"] = int((~inside).sum())
    _write_json(out / "sample_summary.json", summary, chash)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_feedback(args) -> int:
    a1, a2 = load_regions(args.regions1), load_regions(args.regions2)
    taus = args.tau_grid if args.tau_grid is not None else None
    if args.window is not None:
        try:
            rep = fb.check_feedback(a1, a2, taus, args.window, args.resolution)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    else:
        rep = fb.check_feedback(a1, a2, taus, None, args.resolution)
    out, chash = _outdir(args), config_hash(args)
    _write_json(out / "feedback.json", rep.to_dict(), chash)
    fig = Figure(rep.window)
    fig.region(rasterize(fb.negate_then_invert(a1), rep.window, 400).boundaries, fill="#999999")
    fig.region(rasterize(a2, rep.window, 400).boundaries)
    k = int(np.argmin(rep.distances))
    if rep.witnesses[k]:
        fig.segment(*rep.witnesses[k])
    fig.save(out / "feedback.svg", chash)
    gain = "none" if rep.gain_bound is None else f"{rep.gain_bound:.4g}"
    print(f"{rep.verdict}: r_min={rep.r_min:.4g} +- {rep.uncertainty:.2g}, gain bound {gain}")
    return EXIT_OK


def cmd_invert(args) -> int:
    approx = load_regions(args.regions)
    if args.negate:
        res = fb.negate_then_invert(approx)
    else:
        res = approx.map_regions(invert_region)
    out = _outdir(args)
    save_regions(res, out / "inverted.json")
    print(f"{len(res.regions)} regions written to {out / 'inverted.json'}")
    return EXIT_OK


def cmd_render(args) -> int:
    approx = load_regions(args.regions)
    window = args.window or _default_window(approx)
    ras = rasterize(approx, window, args.resolution)
    out, chash = _outdir(args), config_hash(args)
    raster_csv(ras, out / "raster.csv", chash)
    fig = Figure(window)
    fig.region(ras.boundaries)
    if args.samples:
        from .render import read_csv
        cols, rows = read_csv(args.samples)
        if rows.size:
            z = rows[:, cols.index("re")] + 1j * rows[:, cols.index("im")]
            fig.dots(np.concatenate([z, np.conj(z)]))
    fig.save(out / "render.svg", chash)
    print(f"filled fraction {ras.filled_fraction():.4f}; wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sgraph", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, system=True):
        if system:
            sp.add_argument("--system", type=Path, help="JSON system file")
            sp.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--window", type=parse_window, help="xmin,xmax,ymin,ymax")
        sp.add_argument("--resolution", type=int, default=512)
        sp.add_argument("--out", type=Path, default=Path("sgraph-out"))

    sp = sub.add_parser("compute", help="LMI sweep and region set")
    common(sp)
    sp.add_argument("--hard", action="store_true", help="hard scaled graph (P >= 0)")
    sp.add_argument("--lambda-i", type=parse_range, help="interior centres a:b:n")
    sp.add_argument("--lambda-e", type=parse_range, help="exterior centres a:b:n")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_compute)

    sp = sub.add_parser("exact", help="exact scaled graph of a normal LTI system")
    common(sp)
    sp.set_defaults(func=cmd_exact)

    sp = sub.add_parser("sample", help="multi-sine samples of the scaled graph")
    common(sp)
    sp.add_argument("--count", type=int, default=500)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--regions", type=Path, help="region set to test containment against")
    sp.add_argument("--tolerance", type=float, default=MEMBERSHIP_EPS,
                    help="slack on the quadratic form for containment")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("feedback", help="separation check of two region sets")
    common(sp, system=False)
    sp.add_argument("regions1", type=Path)
    sp.add_argument("regions2", type=Path)
    sp.add_argument("--tau-grid", type=parse_taus)
    sp.set_defaults(func=cmd_feedback, resolution=1024)

    sp = sub.add_parser("invert", help="invert a region set")
    common(sp, system=False)
    sp.add_argument("regions", type=Path)
    sp.add_argument("--negate", action="store_true", help="negate before inverting")
    sp.set_defaults(func=cmd_invert)

    sp = sub.add_parser("render", help="rasterize and draw a region set")
    common(sp, system=False)
    sp.add_argument("regions", type=Path)
    sp.add_argument("--samples", type=Path, help="sample CSV to overlay")
    sp.set_defaults(func=cmd_render)
    return p


VALUE_FLAGS = ("--lambda-i", "--lambda-e", "--window", "--tau-grid")


def _attach_negative_values(argv: list) -> list:
    """``--lambda-i -2:2:81`` -> ``--lambda-i=-2:2:81`` so argparse keeps the value."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_attach_negative_values(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", RuntimeWarning)
    try:
        return args.func(args)
    except (UsageError, ModelError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"sgraph: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SweepError, exact_mod.ExactError, SimulationError, ValueError) as exc:
        print(f"sgraph: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
