"""Command-line front end: map-spec files in, deterministic JSON reports out.

Exit codes: 0 when the checked property holds, 1 when the analysis ran and
the property fails, 2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import re
import sys
import tempfile
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import __version__
from . import expr as E
from .equations import (
    DEFAULT_SAMPLES,
    DEFAULT_SEED,
    DEFAULT_TOL,
    check_pair,
    detect_minimal_pair,
    label_for,
)
from .interval import Interval1, image_chain, verify_1d_equation
from .linearize import (
    ConjugacyError,
    HypothesisError,
    hw_conjugacy,
    involution_conjugacy,
    normal_form_residual,
    projection_conjugacy,
    strip_to_plane,
)
from .maps import MapError, MapSpec, builtin_map, default_vars
from .obstruction import (
    GridWindow,
    fixed_point_sample,
    gradient_vanish_scan,
    local_branch_count,
    preimage_components,
    write_marked_csv,
)

SPEC_VERSION = 1
SPEC_FIELDS = {"version", "dim", "vars", "components", "builtin", "window", "tol", "samples", "seed"}
EXIT_HOLDS, EXIT_FAILS, EXIT_ERROR = 0, 1, 2

# options whose values may legitimately start with "-"
VALUE_OPTIONS = ("--window", "--target", "--point", "--interval", "--expr", "--h")
_NEGATIVE_VALUE = re.compile(r"^-[\d.]")


class UsageError(Exception):
    """Bad input; reported on one line with exit code 2."""


# ---------------------------------------------------------------------------
# map-spec files


@dataclass
class LoadedSpec:
    f: MapSpec
    digest: str
    tol: float | None = None
    samples: int | None = None
    seed: int | None = None
    source: str = ""


def _position(raw: str, literal: str, pos: int | None) -> str:
    """Line/column of character ``pos`` of a component string inside the file text."""
    encoded = json.dumps(literal)[1:-1]
    at = raw.find(encoded)
    if at < 0 or pos is None:
        return ""
    offset = at + len(json.dumps(literal[:pos])[1:-1])
    line = raw.count("\n", 0, offset) + 1
    col = offset - (raw.rfind("\n", 0, offset) + 1) + 1
    return f" (line {line}, column {col})"


def parse_window(text) -> list[tuple[float, float]]:
    """``a:b[,c:d,...]`` or a list of pairs; rationals like ``1/3`` are accepted."""
    if isinstance(text, str):
        axes = []
        for part in text.split(","):
            lo, sep, hi = part.strip().partition(":")
            if not sep:
                raise UsageError(f"window axis {part!r} is not of the form a:b")
            axes.append((_number(lo), _number(hi)))
        return axes
    try:
        return [(float(a), float(b)) for a, b in text]
    except (TypeError, ValueError):
        raise UsageError(f"window must be a list of [lo, hi] pairs, got {text!r}") from None


def _number(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"not a number: {text!r}") from None


def _numbers(text: str) -> list[float]:
    return [_number(t) for t in text.split(",") if t.strip()]


def parse_mapspec_text(raw: str, source: str = "<string>") -> LoadedSpec:
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{source}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{source}: top level must be an object")
    unknown = set(data) - SPEC_FIELDS
    if unknown:
        raise UsageError(f"{source}: unknown field(s) {', '.join(sorted(unknown))}")
    if data.get("version") != SPEC_VERSION:
        raise UsageError(f"{source}: unsupported version {data.get('version')!r}, expected {SPEC_VERSION}")
    has_comp, has_builtin = "components" in data, "builtin" in data
    if has_comp == has_builtin:
        raise UsageError(f"{source}: give exactly one of 'components' or 'builtin'")
    window = parse_window(data["window"]) if "window" in data else None
    try:
        if has_builtin:
            f = builtin_map(str(data["builtin"]))
            if "dim" in data and data["dim"] != f.dim:
                raise UsageError(f"{source}: dim {data['dim']} does not match builtin dimension {f.dim}")
        else:
            comps = data["components"]
            if not isinstance(comps, list) or not all(isinstance(c, str) for c in comps):
                raise UsageError(f"{source}: components must be a list of expression strings")
            dim = data.get("dim", len(comps))
            if not isinstance(dim, int) or dim < 1:
                raise UsageError(f"{source}: dim must be a positive integer")
            if len(comps) != dim:
                raise UsageError(f"{source}: component count {len(comps)} does not match dim {dim}")
            names = tuple(data.get("vars") or default_vars(dim))
            if len(names) != dim:
                raise UsageError(f"{source}: {len(names)} variable names for dim {dim}")
            exprs = []
            for i, text in enumerate(comps):
                try:
                    exprs.append(E.parse_expression(text, names))
                except E.ParseError as exc:
                    where = _position(raw, text, exc.pos)
                    raise UsageError(f"{source}: component {i + 1}{where}: {exc}") from None
            f = MapSpec(names, tuple(exprs))
        if window is not None:
            f = f.with_window(window)
    except (MapError, E.ExpressionError, ValueError) as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"{source}: {exc}") from None
    digest = "sha256:" + hashlib.sha256(raw.encode("utf-8")).hexdigest()
    return LoadedSpec(f, digest, data.get("tol"), data.get("samples"), data.get("seed"), source)


def parse_mapspec(path: str) -> MapSpec:
    return load_mapspec(path).f


def load_mapspec(path: str) -> LoadedSpec:
    """Read a map-spec file, or accept a ``builtin:...`` reference directly."""
    if path.startswith("builtin:"):
        try:
            f = builtin_map(path)
        except (MapError, ValueError) as exc:
            raise UsageError(str(exc)) from None
        return LoadedSpec(f, "sha256:" + hashlib.sha256(path.encode("utf-8")).hexdigest(), source=path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read map-spec {path!r}: {exc.strerror}") from None
    return parse_mapspec_text(raw, path)


# ---------------------------------------------------------------------------
# reports


def _clean(obj):
    """Make a payload JSON-safe: numpy scalars, tuples, fractions, non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def render(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def emit(text: str, output: str | None) -> None:
    """Write the finished report once: to stdout, or atomically to ``output``."""
    if output is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    folder = os.path.dirname(os.path.abspath(output))
    fd, tmp = tempfile.mkstemp(prefix=".report-", dir=folder)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, output)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# argument handling


def _common(p: argparse.ArgumentParser, needs_map: bool = True) -> None:
    if needs_map:
        p.add_argument("--map", required=True, help="map-spec JSON file or builtin:<family>?... reference")
    p.add_argument("--window", help="per-axis box a:b[,c:d,...]")
    p.add_argument("--tol", type=float, help=f"tolerance (default {DEFAULT_TOL})")
    p.add_argument("--samples", type=int, help=f"sample count (default {DEFAULT_SAMPLES})")
    p.add_argument("--seed", type=int, help=f"sampling seed (default {DEFAULT_SEED})")
    p.add_argument("--exact", action="store_true", help="force exact polynomial mode")
    p.add_argument("--output", "-o", help="write the report to this file instead of stdout")
    p.add_argument("--omit-duration", action="store_true", help="leave the wall-clock duration out of the report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="babbage", description="Analyse self-maps satisfying f^n = f^k.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="check f^n = f^k or detect the first pair that holds")
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--detect", action="store_true")
    p.add_argument("--nmax", type=int, default=4)

    p = sub.add_parser("image-chain", help="enclosures of I, f(I), ..., f^k(I) for a 1D map")
    _common(p)
    p.add_argument("--interval", help="a:b (defaults to the window)")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, help="also verify f^n = f^k through the parity reduction")
    p.add_argument("--resolution", type=int, default=4096)

    p = sub.add_parser("linearize", help="build and verify explicit conjugacies")
    modes = p.add_subparsers(dest="mode", required=True)
    for name in ("involution", "normal-form", "projection"):
        _common(modes.add_parser(name))
    q = modes.add_parser("strip", help="strip-to-plane map for a positive width function h(x)")
    _common(q, needs_map=False)
    q.add_argument("--h", required=True, help="expression in x")
    q = modes.add_parser("hw", help="Hardy-Weinberg conjugacy to a linear projection")
    _common(q, needs_map=False)
    q.add_argument("--k", type=int, required=True)
    q.add_argument("--variant", choices=("simple", "sexed"), default="simple")

    p = sub.add_parser("obstruct", help="grid-based obstructions to linearizability")
    modes = p.add_subparsers(dest="mode", required=True)
    for name in ("components", "fixed"):
        q = modes.add_parser(name)
        _common(q)
        if name == "components":
            q.add_argument("--target", required=True, help="comma-separated point")
        q.add_argument("--cells", default="200", help="n[,m,...] cells per axis")
        q.add_argument("--factor", type=float, default=1.0)
        q.add_argument("--no-stability", action="store_true", help="skip the doubled-resolution recount")
        q.add_argument("--expect", type=int, help="exit 1 unless the count equals this")
        q.add_argument("--csv", help="dump marked cell centers and labels to this CSV file")
    q = modes.add_parser("branches", help="branches of a plane level set through a point")
    _common(q, needs_map=False)
    q.add_argument("--map")
    q.add_argument("--expr", help="scalar g(x, y); defaults to the map's first component")
    q.add_argument("--point", required=True)
    q.add_argument("--radius", type=float, default=0.1)
    q.add_argument("--expect", type=int, help="exit 1 unless the branch count equals this")
    q = modes.add_parser("gradzero", help="cells where the gradient of g vanishes")
    _common(q, needs_map=False)
    q.add_argument("--map")
    q.add_argument("--expr", help="scalar g(x, y); defaults to the map's first component")
    q.add_argument("--cells", default="200")

    p = sub.add_parser("report", help="pretty-print a stored report")
    p.add_argument("path")
    return parser


def preprocess_argv(argv: list[str]) -> list[str]:
    """Glue negative-looking values to their option so argparse accepts ``--window -1:2``."""
    out: list[str] = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in VALUE_OPTIONS and i + 1 < len(argv) and _NEGATIVE_VALUE.match(argv[i + 1]):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


@dataclass
class Settings:
    tol: float
    samples: int
    seed: int
    window: list | None


def _settings(args, spec: LoadedSpec | None, tol_default: float = DEFAULT_TOL) -> Settings:
    def pick(flag, from_file, default):
        if flag is not None:
            return flag
        if from_file is not None:
            return from_file
        return default

    tol = float(pick(args.tol, spec.tol if spec else None, tol_default))
    samples = int(pick(args.samples, spec.samples if spec else None, DEFAULT_SAMPLES))
    seed = int(pick(args.seed, spec.seed if spec else None, DEFAULT_SEED))
    if samples < 1:
        raise UsageError("--samples must be positive")
    if not tol >= 0:
        raise UsageError("--tol must be non-negative")
    window = parse_window(args.window) if args.window else None
    if window is None and spec is not None and spec.f.window is not None:
        window = [list(a) for a in spec.f.window]
    return Settings(tol, samples, seed, window)


def _grid(settings: Settings, cells: str, dim: int) -> GridWindow:
    if settings.window is None:
        raise UsageError("a --window is required (the map declares none)")
    counts = [int(c) for c in cells.split(",") if c.strip()]
    bounds = settings.window
    if len(bounds) == 1 and dim > 1:
        bounds = bounds * dim
    if len(bounds) != dim:
        raise UsageError(f"window has {len(bounds)} axes for a {dim}-dimensional map")
    try:
        return GridWindow(tuple(tuple(b) for b in bounds), tuple(counts))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _scalar(args, spec: LoadedSpec | None) -> tuple[E.Expr, tuple[str, ...]]:
    if args.expr:
        names = spec.f.vars if spec is not None and spec.f.dim == 2 else ("x", "y")
        return E.parse_expression(args.expr, names), names
    if spec is None:
        raise UsageError("give --expr or --map")
    if spec.f.dim != 2:
        raise UsageError("level-set analyses need a two-dimensional map")
    return spec.f.components[0], spec.f.vars


def _window_for(settings: Settings, f: MapSpec) -> list | None:
    w = settings.window
    if w is not None and len(w) == 1 and f.dim > 1:
        w = w * f.dim
    return w


# ---------------------------------------------------------------------------
# subcommands; each returns (holds, payload, inputs)


def cmd_check(args, spec: LoadedSpec):
    s = _settings(args, spec)
    mode = "exact" if args.exact else "auto"
    win = _window_for(s, spec.f)
    inputs = {"tol": s.tol, "samples": s.samples, "seed": s.seed, "window": win, "mode": mode}
    if args.detect:
        if args.n is not None or args.k is not None:
            raise UsageError("--detect cannot be combined with --n/--k")
        rep = detect_minimal_pair(spec.f, args.nmax, win, s.samples, s.tol, s.seed, mode)
        for w in rep.warnings:
            print(f"warning: {w}", file=sys.stderr)
        inputs["nmax"] = args.nmax
        return rep.pair is not None, rep.to_dict(), inputs
    if args.n is None or args.k is None:
        raise UsageError("check needs --n and --k, or --detect")
    if not args.n > args.k >= 0:
        raise UsageError("need n > k >= 0")
    res = check_pair(spec.f, args.n, args.k, win, s.samples, s.tol, s.seed, mode)
    inputs.update(n=args.n, k=args.k)
    payload = res.to_dict()
    payload["label"] = label_for(args.n, args.k) if res.holds else "none"
    return res.holds, payload, inputs


def cmd_image_chain(args, spec: LoadedSpec):
    s = _settings(args, spec)
    if spec.f.dim != 1:
        raise UsageError("image-chain needs a one-dimensional map")
    if args.interval:
        (lo, hi), = parse_window(args.interval)
    elif s.window is not None:
        lo, hi = s.window[0]
    else:
        raise UsageError("image-chain needs --interval or a window")
    I = Interval1(lo, hi)
    inputs = {"interval": [lo, hi], "k": args.k, "resolution": args.resolution, "tol": s.tol}
    if args.n is not None:
        v = verify_1d_equation(spec.f, I, args.n, args.k, args.resolution, s.tol)
        inputs["n"] = args.n
        return v.verified, v.to_dict(), inputs
    chain = image_chain(spec.f, I, args.k, args.resolution)
    return True, chain.to_dict(), inputs


def cmd_linearize(args, spec: LoadedSpec | None):
    s = _settings(args, spec)
    inputs = {"mode": args.mode, "tol": s.tol, "samples": s.samples, "seed": s.seed, "window": s.window}
    if args.mode == "involution":
        try:
            rep = involution_conjugacy(spec.f, _window_for(s, spec.f), s.samples, s.tol, s.seed)
        except ConjugacyError as exc:
            # a failed precondition is a refutation, not a usage error
            return False, {"verified": False, "precondition": str(exc)}, inputs
        return rep.verified, rep.to_dict(), inputs
    if args.mode == "normal-form":
        rep = normal_form_residual(spec.f, _window_for(s, spec.f), s.samples, s.tol, s.seed)
        ok = rep.passed and rep.residual <= s.tol
        return ok, rep.to_dict(), inputs
    if args.mode == "projection":
        try:
            rep = projection_conjugacy(spec.f, _window_for(s, spec.f), s.samples, s.tol, s.seed)
        except HypothesisError as exc:
            payload = {"verified": False, "hypothesis": str(exc), "witness": exc.witness, "value": exc.value}
            return False, payload, inputs
        return rep.verified, rep.to_dict(), inputs
    if args.mode == "strip":
        if s.window is None:
            raise UsageError("strip needs --window for x")
        h = E.parse_expression(args.h, ("x",))
        inputs["h"] = args.h
        rep = strip_to_plane(h, s.window[0], tol=args.tol if args.tol is not None else 1e-12)
        return rep.verified, rep.to_dict(), inputs
    # hw: sampled checks use the tighter conjugacy tolerance unless overridden
    tol = args.tol if args.tol is not None else 1e-12
    samples = args.samples if args.samples is not None else 1000
    exact = "exact" if args.exact else None
    inputs.update(k=args.k, variant=args.variant, tol=tol, samples=samples)
    if args.k < 2:
        raise UsageError("hw needs k >= 2")
    rep = hw_conjugacy(args.k, args.variant, samples, tol, s.seed, exact)
    return rep.verified, rep.to_dict(), inputs


def cmd_obstruct(args, spec: LoadedSpec | None):
    s = _settings(args, spec)
    inputs = {"mode": args.mode, "window": s.window}
    if args.mode in ("components", "fixed"):
        grid = _grid(s, args.cells, spec.f.dim)
        inputs.update(cells=list(grid.cells), factor=args.factor, stability=not args.no_stability)
        if args.mode == "components":
            target = _numbers(args.target)
            if len(target) != spec.f.dim:
                raise UsageError(f"target has {len(target)} coordinates for a {spec.f.dim}-dimensional map")
            inputs["target"] = target
            rep = preimage_components(spec.f, target, grid, args.factor, not args.no_stability)
            comps = spec.f.components
        else:
            target = [0.0] * spec.f.dim
            rep = fixed_point_sample(spec.f, grid, args.factor, not args.no_stability)
            comps = [c - v for c, v in zip(spec.f.components, E.variables(spec.f.vars))]
        payload = rep.to_dict()
        if args.csv:
            payload["csv_rows"] = write_marked_csv(args.csv, comps, target, grid, args.factor)
        ok = rep.stable is not False
        if args.expect is not None:
            inputs["expect"] = args.expect
            ok = ok and rep.count == args.expect
        return ok, payload, inputs
    g, names = _scalar(args, spec)
    inputs["expr"] = E.to_string(g)
    if args.mode == "branches":
        point = _numbers(args.point)
        if len(point) != 2:
            raise UsageError("--point needs two coordinates")
        tol = s.tol
        count = local_branch_count(g, point, args.radius, tol=tol)
        inputs.update(point=point, radius=args.radius, tol=tol)
        ok = True if args.expect is None else count == args.expect
        if args.expect is not None:
            inputs["expect"] = args.expect
        return ok, {"branches": count, "point": point, "vars": list(names)}, inputs
    grid = _grid(s, args.cells, 2)
    tol = args.tol if args.tol is not None else 1e-6
    inputs.update(cells=list(grid.cells), tol=tol)
    cells = gradient_vanish_scan(g, grid, tol)
    return not cells, {"count": len(cells), "cells": [c.to_dict() for c in cells]}, inputs


def cmd_report(args) -> int:
    try:
        with open(args.path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read report {args.path!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from None
    if not isinstance(data, dict) or "result" not in data or "command" not in data:
        raise UsageError(f"{args.path}: not a babbage report")
    cmd = data["command"]
    print(f"command   : {' '.join(cmd.get('argv', []))}")
    print(f"verdict   : {data.get('verdict')}")
    print(f"input     : {data.get('input_digest')}")
    print(f"version   : {data.get('tool', {}).get('version')}")
    if "duration_seconds" in data:
        print(f"duration  : {data['duration_seconds']:.3f} s")
    print("result    :")
    for line in _pretty(data["result"], 1):
        print(line)
    return EXIT_HOLDS


def _pretty(obj, depth: int):
    pad = "  " * depth
    if isinstance(obj, dict):
        for key in sorted(obj):
            val = obj[key]
            if isinstance(val, (dict, list)) and val and not _flat(val):
                yield f"{pad}{key}:"
                yield from _pretty(val, depth + 1)
            else:
                yield f"{pad}{key}: {json.dumps(val)}"
    elif isinstance(obj, list):
        for item in obj:
            if isinstance(item, (dict, list)) and not _flat(item):
                yield f"{pad}-"
                yield from _pretty(item, depth + 1)
            else:
                yield f"{pad}- {json.dumps(item)}"
    else:
        yield f"{pad}{json.dumps(obj)}"


def _flat(obj) -> bool:
    return isinstance(obj, list) and all(not isinstance(v, (dict, list)) for v in obj)


# ---------------------------------------------------------------------------


def run_command(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(preprocess_argv(argv))
    except SystemExit as exc:
        return EXIT_HOLDS if exc.code == 0 else EXIT_ERROR
    start = time.perf_counter()
    try:
        if args.command == "report":
            return cmd_report(args)
        spec = load_mapspec(args.map) if getattr(args, "map", None) else None
        handler = {"check": cmd_check, "image-chain": cmd_image_chain, "linearize": cmd_linearize, "obstruct": cmd_obstruct}
        with np.errstate(all="ignore"):
            holds, payload, inputs = handler[args.command](args, spec)
    except UsageError as exc:
        print(f"babbage: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (MapError, E.ExpressionError, ValueError, OverflowError, ZeroDivisionError) as exc:
        print(f"babbage: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if spec is not None:
        digest = spec.digest
    else:
        blob = json.dumps(_clean(inputs), sort_keys=True).encode("utf-8")
        digest = "sha256:" + hashlib.sha256(blob).hexdigest()
    command = {"argv": argv, "subcommand": args.command, "inputs": inputs}
    if getattr(args, "mode", None):
        command["mode"] = args.mode
    report = {
        "command": command,
        "defaults": {"tol": DEFAULT_TOL, "samples": DEFAULT_SAMPLES, "seed": DEFAULT_SEED},
        "input_digest": digest,
        "tool": {"name": "babbage", "version": __version__},
        "verdict": "holds" if holds else "fails",
        "result": payload,
    }
    if not args.omit_duration:
        report["duration_seconds"] = round(time.perf_counter() - start, 6)
    try:
        emit(render(report), args.output)
    except OSError as exc:
        print(f"babbage: error: cannot write report: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_HOLDS if holds else EXIT_FAILS


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
