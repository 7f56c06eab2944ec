"""Command-line front end.

Exit codes: 0 ok, 2 input/format error, 3 configuration/selection error,
4 capacity error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import (
    CapacityError,
    DegenerateInputError,
    EmptySelectionError,
    PlyFormatError,
    ShapeError,
    TruncatedPayloadError,
)
from .graph import DEFAULT_EDGE_CAP, build_graph, save_graph
from .metrics import metric_record
from .pruner import CONTINUOUS, ONE_SHOT, PruneConfig, field_bytes, payload_bytes, prune_once, prune_schedule
from .rasterizer import load_camera, load_image, render, save_camera, save_png, save_raw
from .spectral import save_response, save_selection
from .splat_model import load_field, save_field
from .synth import SynthSpec, default_camera, synth_field

log = logging.getLogger("splatprune")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG, EXIT_CAPACITY = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def read_config(path) -> dict:
    """Plain ``key = value`` lines; keys are flag names with or without dashes."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected 'key = value'", EXIT_CONFIG)
            key, value = (part.strip() for part in line.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = value
    return out


def parse_size(text: str):
    try:
        w, h = text.lower().split("x")
        w, h = int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 256x256, got {text!r}")
    if w <= 0 or h <= 0:
        raise argparse.ArgumentTypeError("size must be positive")
    return w, h


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    print(text)


# --- subcommands ----------------------------------------------------------------

def cmd_inspect(args):
    field = load_field(args.input)
    bbox = field.bbox()
    _write_json({
        "count": len(field),
        "sh_degree": field.sh_degree,
        "bbox": None if bbox is None else {"min": bbox[0], "max": bbox[1]},
        "bytes": field_bytes(len(field)),
        "payload_bytes": payload_bytes(len(field)),
    }, args.report)


def _prune_config(args) -> PruneConfig:
    try:
        return PruneConfig(
            k=args.k, gamma=args.gamma, tau=args.tau, sigma=args.sigma, mode=args.mode,
            interval=args.interval, per_step_keep=args.per_step_keep, max_steps=args.max_steps,
            primitive_cap=args.cap, threshold=args.threshold, edge_cap=args.edge_cap,
        )
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG)


def cmd_prune(args):
    cfg = _prune_config(args)
    if cfg.mode == ONE_SHOT:
        if len(args.input) != 1:
            raise CliError("one_shot mode takes exactly one input checkpoint", EXIT_CONFIG)
        field = load_field(args.input[0])
        out, report = prune_once(field, cfg)
        sel = report.selection
        if args.dump_response:
            save_response(report.response, args.dump_response)
        if args.dump_selection:
            save_selection(sel, args.dump_selection)
    else:
        snapshots = [load_field(p) for p in args.input]
        out, report = prune_schedule(snapshots, cfg)
    save_field(out, args.output)
    rec = report.to_json()
    rec["config"] = {key: getattr(args, key) for key in (
        "k", "gamma", "tau", "sigma", "mode", "interval", "per_step_keep", "max_steps", "cap",
        "threshold", "edge_cap", "seed", "threads")}
    if rec["mode"] == ONE_SHOT:
        rec["k"] = cfg.k
    _write_json(rec, args.report)


def cmd_render(args):
    try:
        cam = load_camera(args.camera)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CliError(f"cannot read camera {args.camera}: {exc}", EXIT_INPUT)
    if args.size:
        cam = cam.resized(*args.size)
    field = load_field(args.input)
    target = render(field, cam)
    stem = os.path.splitext(args.output)[0]
    save_png(target.rgb, args.output)
    save_raw(target.rgb, stem + ".rgbf32")
    _write_json({"png": args.output, "raw": stem + ".rgbf32", "width": cam.width, "height": cam.height,
                 **target.diagnostics}, args.report)


def cmd_eval(args):
    try:
        ref = load_image(args.reference)
        cand = load_image(args.candidate)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read image: {exc}", EXIT_INPUT)
    _write_json(metric_record(ref, cand), args.report)


def cmd_synth(args):
    spec = SynthSpec(plane=args.plane, cluster=args.cluster, seed=args.seed)
    field = synth_field(spec)
    save_field(field, args.output)
    if args.camera_out:
        w, h = args.size or (256, 256)
        save_camera(default_camera(spec, w, h), args.camera_out)
    _write_json({"output": args.output, "count": len(field), "spec": spec.to_json()}, args.report)


def cmd_graph(args):
    field = load_field(args.input)
    g = build_graph(field, tau=args.tau, sigma=args.sigma, threshold=args.threshold,
                    edge_cap=args.edge_cap)
    save_graph(g, args.output)
    _write_json(g.metadata(), args.report)


# --- parser ---------------------------------------------------------------------

def _add_graph_flags(p):
    p.add_argument("--tau", type=float, default=None, help="edge distance threshold (default: 10x min NN distance)")
    p.add_argument("--sigma", type=float, default=None, help="edge weight scale (default: std of edge lengths)")
    p.add_argument("--threshold", choices=["distance", "squared"], default="distance",
                   help="compare |d| < tau (distance) or |d|^2 < tau (squared)")
    p.add_argument("--edge-cap", type=int, default=DEFAULT_EDGE_CAP)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags given on the command line win")
    common.add_argument("--report", help="also write the JSON result here")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="splatprune", description="Spectral pruning of Gaussian-splat fields.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", parents=[common], help="summarize a checkpoint")
    p.add_argument("input")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("prune", parents=[common], help="spectrally prune a checkpoint")
    p.add_argument("input", nargs="+", help="checkpoint (one_shot) or ordered snapshots (continuous)")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--k", type=float, default=0.1, help="keep fraction (e.g. 0.01, 0.1, 0.3, 0.5)")
    p.add_argument("--gamma", type=float, default=0.5, help="high-band share of the kept set")
    p.add_argument("--mode", choices=[ONE_SHOT, CONTINUOUS], default=ONE_SHOT)
    p.add_argument("--interval", type=int, default=1)
    p.add_argument("--per-step-keep", type=float, default=0.7)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--cap", type=int, default=None, help="hard primitive cap after each continuous prune")
    p.add_argument("--dump-response", help="write float32 response vector (+ .json summary)")
    p.add_argument("--dump-selection", help="write uint32 kept indices (+ .json header)")
    _add_graph_flags(p)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("render", parents=[common], help="render a checkpoint to PNG + raw float dump")
    p.add_argument("input")
    p.add_argument("--camera", required=True)
    p.add_argument("--size", type=parse_size, default=None, help="WxH; rescales the camera intrinsics")
    p.add_argument("-o", "--output", required=True, help="PNG path; raw dump goes next to it")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", parents=[common], help="PSNR/SSIM between two images")
    p.add_argument("reference")
    p.add_argument("candidate")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic backdrop + detail scene")
    p.add_argument("output")
    p.add_argument("--plane", type=int, default=18_000)
    p.add_argument("--cluster", type=int, default=2_000)
    p.add_argument("--camera-out", help="also write the matching held-out camera JSON")
    p.add_argument("--size", type=parse_size, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("graph", parents=[common], help="dump the primitive graph sidecar")
    p.add_argument("input")
    p.add_argument("output")
    _add_graph_flags(p)
    p.set_defaults(func=cmd_graph)
    return ap


def _apply_config(ap, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config(known.config)
    sub = next(a for a in ap._actions if isinstance(a, argparse._SubParsersAction))
    for parser in sub.choices.values():
        defaults = {}
        for action in parser._actions:
            if action.dest in values:
                raw = values[action.dest]
                if action.type is not None and raw.lower() not in ("none", ""):
                    try:
                        raw = action.type(raw)
                    except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                        raise CliError(f"config key {action.dest}: {exc}", EXIT_CONFIG)
                elif raw.lower() in ("none", ""):
                    raw = None
                defaults[action.dest] = raw
        parser.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    ap = build_parser()
    try:
        _apply_config(ap, argv)
        args = ap.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except EmptySelectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PlyFormatError, TruncatedPayloadError, DegenerateInputError, ShapeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
