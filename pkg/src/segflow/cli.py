"""Command-line front end: ``segflow segment``, ``segflow noise`` and ``segflow compare``.

Exit status: 0 success, 2 usage error, 3 unreadable or invalid input,
4 no convergence within ``max_iters`` (artifacts are still written),
5 internal error.
"""

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .adapt.driver import run_split_adapt_bregman
from .bregman import circle_phi, dice, mask_phi, rect_phi, run_split_bregman
from .config import ConfigError, config_snapshot, load_config
from .energy import classify_pixels
from .export import (report_row, timing_summary, write_log_csv, write_metric_csv, write_pdf_csv,
                     write_report_csv, write_svg, write_vtk)
from .imageio import NOISE_KINDS, ImageFormatError, NoiseSpec, add_noise, load_image, save_image, save_mask
from .mesh import build_uniform_mesh, mesh_stats

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_NONCONVERGED = 4
EXIT_INTERNAL = 5

THREADS_ENV = "SEGFLOW_THREADS"


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def threads_from_env(environ=None):
    """Worker bound from ``SEGFLOW_THREADS`` (default 1); the solver itself runs on one thread."""
    raw = (os.environ if environ is None else environ).get(THREADS_ENV)
    if raw is None or raw == "":
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _load_image(path):
    try:
        return load_image(path)
    except FileNotFoundError:
        raise InputError(f"cannot read {path}: no such file") from None
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except ImageFormatError as exc:
        raise InputError(f"{path}: {exc}") from None


def _load_mask(path, shape):
    img = _load_image(path)
    if img.shape != tuple(shape):
        raise InputError(f"{path}: mask is {img.width}x{img.height}, image is {shape[1]}x{shape[0]}")
    return img.intensity > 127.5


# --------------------------------------------------------------------------
# initial level set

def parse_init(tokens, shape):
    """``(kind, params)`` from ``--init`` tokens; default is a centred circle."""
    h, w = shape
    if not tokens:
        return "circle", [w / 2.0, h / 2.0, 5.0 * min(w, h) / 16.0]
    kind, args = tokens[0], tokens[1:]
    counts = {"circle": 3, "rect": 4, "mask": 1}
    if kind not in counts:
        raise UsageError(f"--init: unknown shape {kind!r}; expected circle, rect or mask")
    if len(args) != counts[kind]:
        raise UsageError(f"--init {kind}: expected {counts[kind]} argument(s), got {len(args)}")
    if kind == "mask":
        return kind, [args[0]]
    try:
        vals = [float(a) for a in args]
    except ValueError:
        raise UsageError(f"--init {kind}: arguments must be numbers") from None
    if not all(np.isfinite(vals)):
        raise UsageError(f"--init {kind}: arguments must be finite")
    if kind == "circle" and not vals[2] > 0:
        raise UsageError("--init circle: radius must be > 0")
    if kind == "rect" and not (vals[2] > vals[0] and vals[3] > vals[1]):
        raise UsageError("--init rect: expected x0 < x1 and y0 < y1")
    return kind, vals


def initial_phi(mesh, kind, params, shape, alpha):
    if kind == "circle":
        phi = circle_phi(mesh, *params, alpha=alpha)
    elif kind == "rect":
        phi = rect_phi(mesh, *params, alpha=alpha)
    else:
        phi = mask_phi(mesh, _load_mask(params[0], shape), alpha=alpha)
    if not (phi.max() > 0 and phi.min() < 0):
        raise InputError("--init: the initial contour does not split the image into two regions")
    return phi


# --------------------------------------------------------------------------
# runs

def _run(method, solver, acfg, img, mesh, phi0):
    t0 = time.perf_counter()
    if method == "split-adapt":
        state = run_split_adapt_bregman(solver, acfg, img, mesh, phi0)
    else:
        state = run_split_bregman(solver, img, mesh, phi0)
    return state, time.perf_counter() - t0


def _run_record(method, solver, acfg, init, phi0, state, wall, dice_value):
    n_opt, n_adapt, t_opt, t_adapt = timing_summary(state)
    st = mesh_stats(state.mesh)
    cfg = config_snapshot(solver, acfg)
    return {
        "method": method,
        "config": cfg,
        "init": {"kind": init[0], "params": list(init[1]),
                 "phi0_sha256": hashlib.sha256(np.ascontiguousarray(phi0).tobytes()).hexdigest()},
        "iterations": [{"k": r.k, "residual": float(r.residual), "energy": float(r.energy),
                        "n_el": int(r.n_el), "seconds": float(r.seconds), "adapted": bool(r.adapted)}
                       for r in state.history],
        "metrics": {"converged": bool(state.converged), "iterations": n_opt, "n_adapt": n_adapt,
                    "n_el": st.n_el, "h_min": st.h_min, "h_max": st.h_max, "s_K": st.max_stretching,
                    "dice": dice_value, "t_opt_mean": t_opt, "t_adapt_mean": t_adapt,
                    "wall_seconds": wall},
    }


def _finite_json(obj):
    """Replace non-finite floats (JSON has no inf/nan) by ``None``."""
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite_json(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite_json(v) for v in obj]
    return obj


def _write_manifest(out_dir, manifest):
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_finite_json(manifest), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _prepare(args, model):
    threads = threads_from_env()
    if args.seed < 0:
        raise UsageError("--seed must be >= 0")
    img = _load_image(args.image)
    try:
        solver, acfg = load_config(args.config, model=model)
    except ConfigError as exc:
        raise InputError(f"config {exc}") from None
    init = parse_init(args.init, img.shape)
    ref = _load_mask(args.reference_mask, img.shape) if args.reference_mask else None
    mesh = build_uniform_mesh(img.width, img.height, 1.0)
    phi0 = initial_phi(mesh, init[0], init[1], img.shape, solver.alpha)
    os.makedirs(args.out_dir, exist_ok=True)
    manifest = {
        "tool": "segflow", "version": __version__,
        "input": {"path": args.image, "sha256": _sha256(args.image),
                  "width": img.width, "height": img.height},
        "reference_mask": ({"path": args.reference_mask, "sha256": _sha256(args.reference_mask)}
                           if args.reference_mask else None),
        "seed": args.seed, "threads": threads, "outputs": {}, "warnings": [],
    }
    return img, solver, acfg, init, ref, mesh, phi0, manifest


def cmd_segment(args):
    img, solver, acfg, init, ref, mesh, phi0, manifest = _prepare(args, args.model)
    method = "split-adapt" if args.adapt == "on" else "split"
    state, wall = _run(method, solver, acfg, img, mesh, phi0)
    labels = classify_pixels(state.mesh, state.phi, img)
    dice_value = dice(labels, ref) if ref is not None else None

    out = args.out_dir
    outputs = {"mask": "mask.pgm", "contour": "contour.svg", "mesh": "mesh.vtk", "log": "log.csv"}
    save_mask(labels, os.path.join(out, "mask.pgm"))
    write_svg(os.path.join(out, "contour.svg"), state.mesh, state.phi)
    write_vtk(os.path.join(out, "mesh.vtk"), state.mesh, state.phi)
    write_log_csv(os.path.join(out, "log.csv"), state.history)
    if state.pdfs is not None:
        write_pdf_csv(os.path.join(out, "pdf.csv"), *state.pdfs)
        outputs["pdf"] = "pdf.csv"
    adapter = getattr(state, "adapter", None)
    if adapter is not None and adapter.last_element_metric is not None:
        write_metric_csv(os.path.join(out, "metric.csv"), adapter.last_element_metric)
        outputs["metric"] = "metric.csv"
        manifest["warnings"] += adapter.warnings

    manifest["command"] = "segment"
    manifest["outputs"] = outputs
    manifest["runs"] = [_run_record(method, solver, acfg, init, phi0, state, wall, dice_value)]
    if not state.converged:
        manifest["warnings"].append(f"{method}: not converged after {solver.max_iters} iterations")
    _write_manifest(out, manifest)
    return EXIT_OK if state.converged else EXIT_NONCONVERGED


def cmd_compare(args):
    img, solver, acfg, init, ref, mesh, phi0, manifest = _prepare(args, args.model)
    rows, runs = [], []
    converged = True
    for method in ("split", "split-adapt"):
        state, wall = _run(method, solver, acfg, img, mesh, phi0.copy())
        dice_value = None
        if ref is not None:
            dice_value = dice(classify_pixels(state.mesh, state.phi, img), ref)
        rows.append(report_row(method, state, dice_value))
        runs.append(_run_record(method, solver, acfg, init, phi0, state, wall, dice_value))
        adapter = getattr(state, "adapter", None)
        if adapter is not None:
            manifest["warnings"] += adapter.warnings
        if not state.converged:
            converged = False
            manifest["warnings"].append(f"{method}: not converged after {solver.max_iters} iterations")
    write_report_csv(os.path.join(args.out_dir, "report.csv"), rows)
    manifest["command"] = "compare"
    manifest["outputs"] = {"report": "report.csv"}
    manifest["runs"] = runs
    _write_manifest(args.out_dir, manifest)
    return EXIT_OK if converged else EXIT_NONCONVERGED


def cmd_noise(args):
    threads_from_env()
    try:
        spec = NoiseSpec(args.kind, args.level, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    img = _load_image(args.image)
    save_image(add_noise(img, spec), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser():
    p = _Parser(prog="segflow", description="Split and split-adapt Bregman image segmentation.")
    p.add_argument("--version", action="version", version=f"segflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def run_flags(sp):
        sp.add_argument("--image", required=True, help="input PGM/PPM image")
        sp.add_argument("--model", choices=("bayes", "rsfe"), default=None,
                        help="data model (default: config file, else bayes)")
        sp.add_argument("--config", help="JSON parameter file")
        sp.add_argument("--init", nargs="+", metavar="ARG",
                        help="circle CX CY R | rect X0 Y0 X1 Y1 | mask PATH")
        sp.add_argument("--out-dir", required=True)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--reference-mask", help="PGM mask (interior > 127) for the Dice score")

    seg = sub.add_parser("segment", help="segment one image")
    run_flags(seg)
    seg.add_argument("--adapt", choices=("on", "off"), default="off")
    seg.set_defaults(func=cmd_segment)

    cmp_ = sub.add_parser("compare", help="run split and split-adapt on the same input")
    run_flags(cmp_)
    cmp_.set_defaults(func=cmd_compare)

    noise = sub.add_parser("noise", help="write a noisy copy of an image")
    noise.add_argument("--image", required=True)
    noise.add_argument("--kind", required=True, help=", ".join(NOISE_KINDS))
    noise.add_argument("--level", required=True, type=float)
    noise.add_argument("--seed", type=int, default=0)
    noise.add_argument("--out", required=True)
    noise.set_defaults(func=cmd_noise)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - reported as an internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
