"""Notched plate with two inclusions: compare the crack paths.

Runs the homogeneous specimen and the one with stiff inclusions, then
reports where each crack went. Result files land in ``demo_out/``;
open the ``step_*.vtk`` and ``failed_faces_*.vtk`` files in ParaView to
see the paths. Pass ``--nx 12`` for a quick coarse look; the default
``25`` gives about five thousand elements and takes a few minutes.

    python3 demos/crack_paths.py [--nx N]
"""

import argparse
from pathlib import Path

import numpy as np

from czdg.config import load_config
from czdg.run import run_scenario
from czdg.scenarios import faces_inside, reaches_edge

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

ap = argparse.ArgumentParser()
ap.add_argument("--nx", type=int, default=25)
ap.add_argument("--out", default="demo_out")
args = ap.parse_args()

paths = {}
for setup in (1, 2):
    text = (CONFIGS / f"sen{setup}.cfg").read_text()
    text = text.replace("nx = 25", f"nx = {args.nx}").replace("ny = 50", f"ny = {2 * args.nx}")
    cfg = Path(args.out) / f"sen{setup}.cfg"
    cfg.parent.mkdir(parents=True, exist_ok=True)
    cfg.write_text(text)
    out = run_scenario(load_config(cfg), Path(args.out) / f"sen{setup}")
    new = np.setdiff1d(out.failed_faces, out.crack)
    paths[setup] = new
    R = [r.reaction[1] for r in out.results]
    mid = out.mesh.face_midpoints()[new]
    print(f"set-up {setup}: {out.mesh.n_triangles} elements, peak reaction {max(R):.4f}")
    print(f"  {len(new)} new failed faces, reaches a side: "
          f"{reaches_edge(out.mesh, out.failed_faces, out.crack)}")
    print(f"  faces inside an inclusion: {len(faces_inside(out.mesh, new, [1, 2]))}")
    if len(new):
        print(f"  path spans x in [{mid[:, 0].min():.2f}, {mid[:, 0].max():.2f}], "
              f"y in [{mid[:, 1].min():.2f}, {mid[:, 1].max():.2f}]")

print(f"faces on only one path: {len(np.setxor1d(paths[1], paths[2]))}")
