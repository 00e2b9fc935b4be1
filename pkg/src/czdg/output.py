"""Result files: per-step CSV table, legacy VTK fields and failed-face lists.

All numbers are written with fixed formats so that repeated runs produce
byte-identical files.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .mesh import Mesh

STEPS_HEADER = "step,delta_mm,reaction_N_per_mm,failed_faces,iterations,converged"
FAILED_HEADER = "face_id,x_mm,y_mm,lambda_max"
_F = "%.9e"


def step_row(step: int, delta: float, reaction: float, n_failed: int, iterations: int,
             converged: bool) -> str:
    return (f"{step},{delta:.9e},{reaction:.9e},{n_failed},{iterations},"
            f"{'true' if converged else 'false'}")


class StepsTable:
    """Appends rows to ``steps.csv``, flushing after each one."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self.path.write_text(STEPS_HEADER + "\n")

    def add(self, *row) -> None:
        with self.path.open("a") as fh:
            fh.write(step_row(*row) + "\n")


def _block(arr, fmt) -> str:
    buf = io.StringIO()
    np.savetxt(buf, arr, fmt=fmt)
    return buf.getvalue()


def vtk_text(mesh: Mesh, u: np.ndarray, von_mises: np.ndarray, title: str = "czdg") -> str:
    """Legacy ASCII unstructured grid with one private point per element corner.

    Points are not shared, so displacement jumps across faces stay visible.
    """
    nt = mesh.n_triangles
    pts = mesh.nodes[mesh.triangles].reshape(-1, 2)
    pts3 = np.column_stack([pts, np.zeros(len(pts))])
    cells = np.column_stack([np.full(nt, 3), np.arange(3 * nt).reshape(nt, 3)])
    disp = np.column_stack([np.asarray(u).reshape(-1, 2), np.zeros(3 * nt)])
    parts = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {3 * nt} double",
        _block(pts3, _F).rstrip("\n"),
        f"CELLS {nt} {4 * nt}",
        _block(cells, "%d").rstrip("\n"),
        f"CELL_TYPES {nt}",
        _block(np.full(nt, 5), "%d").rstrip("\n"),
        f"CELL_DATA {nt}",
        "SCALARS region int 1",
        "LOOKUP_TABLE default",
        _block(mesh.region, "%d").rstrip("\n"),
        "SCALARS von_mises double 1",
        "LOOKUP_TABLE default",
        _block(von_mises, _F).rstrip("\n"),
        f"POINT_DATA {3 * nt}",
        "VECTORS displacement double",
        _block(disp, _F).rstrip("\n"),
    ]
    return "\n".join(parts) + "\n"


def failed_faces_csv(mesh: Mesh, face_ids, lam_max) -> str:
    face_ids = np.asarray(face_ids, dtype=np.int64)
    mid = mesh.face_midpoints()[face_ids]
    lines = [FAILED_HEADER]
    lines += [f"{i},{x:.9e},{y:.9e},{lam:.9e}"
              for i, (x, y), lam in zip(face_ids.tolist(), mid.tolist(), np.asarray(lam_max).tolist())]
    return "\n".join(lines) + "\n"


def failed_faces_vtk(mesh: Mesh, face_ids, lam_max, title: str = "czdg failed faces") -> str:
    """Polyline companion file: one line cell per failed face."""
    face_ids = np.asarray(face_ids, dtype=np.int64)
    n = len(face_ids)
    pts = mesh.nodes[mesh.face_nodes[face_ids]].reshape(-1, 2)
    pts3 = np.column_stack([pts, np.zeros(len(pts))])
    parts = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {2 * n} double",
    ]
    if n:
        parts.append(_block(pts3, _F).rstrip("\n"))
    parts.append(f"CELLS {n} {3 * n}")
    if n:
        parts.append(_block(np.column_stack([np.full(n, 2), np.arange(2 * n).reshape(n, 2)]),
                            "%d").rstrip("\n"))
    parts.append(f"CELL_TYPES {n}")
    if n:
        parts.append(_block(np.full(n, 3), "%d").rstrip("\n"))
        parts += [f"CELL_DATA {n}", "SCALARS face_id int 1", "LOOKUP_TABLE default",
                  _block(face_ids, "%d").rstrip("\n"),
                  "SCALARS lambda_max double 1", "LOOKUP_TABLE default",
                  _block(np.asarray(lam_max, dtype=float), _F).rstrip("\n")]
    return "\n".join(parts) + "\n"


def read_steps(path: Path | str) -> list[dict]:
    """Rows of a ``steps.csv`` as dicts with typed values."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != STEPS_HEADER:
        raise ValueError(f"{path}: not a steps table")
    out = []
    for ln in lines[1:]:
        s, d, r, f, it, c = ln.split(",")
        out.append(dict(step=int(s), delta=float(d), reaction=float(r), failed_faces=int(f),
                        iterations=int(it), converged=(c == "true")))
    return out
