"""Command line entry point.

    czdg run <config> [--out DIR]
    czdg mesh gen (--rect W H NX NY [--crossed] | --sen [--nx N]) -o FILE
    czdg mesh info FILE
    czdg verify <suite>

``CZDG_THREADS`` caps the number of assembly threads.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .mesh import INTERIOR, MeshError, generate_rect, read_mesh, write_mesh
from .scenarios import SenSpec
from .verification import SUITES, run_suite

EXIT_OK, EXIT_IO, EXIT_ABORTED, EXIT_VERIFY = 0, 1, 2, 3


def _threads() -> int | None:
    raw = os.environ.get("CZDG_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise SystemExit(f"czdg: CZDG_THREADS must be a positive integer, got {raw!r}")
    if n < 1:
        raise SystemExit(f"czdg: CZDG_THREADS must be a positive integer, got {raw!r}")
    return n


def cmd_run(args) -> int:
    from .run import run_scenario

    path = Path(args.config)
    try:
        sc = load_config(path)
    except OSError as err:
        print(f"czdg: cannot read {path}: {err.strerror}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as err:
        print(f"czdg: {path}: {err}", file=sys.stderr)
        return EXIT_IO
    out = Path(args.out) if args.out else path.parent / sc.output.dir
    try:
        outcome = run_scenario(sc, out, base=path.parent, threads=_threads())
    except (OSError, MeshError, ConfigError, ValueError) as err:
        print(f"czdg: {err}", file=sys.stderr)
        return EXIT_IO
    print((out / "summary.txt").read_text(), end="")
    return EXIT_ABORTED if outcome.aborted else EXIT_OK


def cmd_mesh_gen(args) -> int:
    if args.sen:
        spec = SenSpec(nx=args.nx, ny=args.ny or 2 * args.nx)
        mesh = spec.mesh()
    else:
        w, h, nx, ny = args.rect
        try:
            mesh = generate_rect(float(w), float(h), int(nx), int(ny), crossed=args.crossed)
        except ValueError as err:
            print(f"czdg: {err}", file=sys.stderr)
            return EXIT_IO
    try:
        Path(args.output).write_text(write_mesh(mesh))
    except OSError as err:
        print(f"czdg: cannot write {args.output}: {err.strerror}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {args.output}: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles")
    return EXIT_OK


def mesh_info(mesh) -> dict:
    interior = mesh.faces_of_kind(INTERIOR)
    h = mesh.h_F[interior] if len(interior) else np.zeros(1)
    regions, counts = np.unique(mesh.region, return_counts=True)
    return {
        "nodes": mesh.n_nodes,
        "triangles": mesh.n_triangles,
        "faces": mesh.n_faces,
        "interior_faces": int(len(interior)),
        "boundary_faces": int(mesh.n_faces - len(interior)),
        "regions": {int(r): int(c) for r, c in zip(regions, counts)},
        "boundary_tags": sorted(int(t) for t in mesh.boundary_tags),
        "h_F_min": float(h.min()),
        "h_F_max": float(h.max()),
    }


def cmd_mesh_info(args) -> int:
    try:
        mesh = read_mesh(Path(args.file).read_text())
    except OSError as err:
        print(f"czdg: cannot read {args.file}: {err.strerror}", file=sys.stderr)
        return EXIT_IO
    except MeshError as err:
        print(f"czdg: {args.file}: {err}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps(mesh_info(mesh), indent=2))
    return EXIT_OK


def cmd_verify(args) -> int:
    report = run_suite(args.suite)
    print(json.dumps(report, indent=2))
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="czdg", description="DG elasticity with cohesive interfaces")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a configured scenario")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: [output] dir next to the config)")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("mesh", help="generate or inspect meshes")
    msub = m.add_subparsers(dest="mesh_command", required=True)
    g = msub.add_parser("gen", help="write a generated mesh")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--rect", nargs=4, metavar=("W", "H", "NX", "NY"))
    src.add_argument("--sen", action="store_true", help="notched specimen with inclusions")
    g.add_argument("--crossed", action="store_true", help="four triangles per cell")
    g.add_argument("--nx", type=int, default=25)
    g.add_argument("--ny", type=int, default=None)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_mesh_gen)
    i = msub.add_parser("info", help="print mesh statistics as JSON")
    i.add_argument("file")
    i.set_defaults(func=cmd_mesh_info)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", choices=SUITES)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
