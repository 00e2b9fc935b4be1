"""Single-edge-notched specimen with two circular inclusions and an inclined crack."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .material import IsotropicElastic, MaterialField
from .mesh import BOTTOM, DIRICHLET, LEFT, RIGHT, TOP, Mesh, circle, generate_rect, mark_initial_crack

MATRIX, INCLUSION1, INCLUSION2 = 0, 1, 2


@dataclass(frozen=True)
class SenSpec:
    """Specimen geometry in mm. The plate is ``W`` wide and ``2H`` tall."""

    W: float = 1.0
    H: float = 1.0
    D: float = 0.2  # inclusion diameter
    a: float = 0.2  # crack length
    inclusion1: tuple[float, float] = (0.75, 1.00)  # lower right
    inclusion2: tuple[float, float] = (0.45, 1.10)  # upper left
    crack_center: tuple[float, float] = (0.40, 0.90)
    crack_angle: float = 33.0  # degrees from the horizontal
    nx: int = 25
    ny: int = 50

    def mesh(self) -> Mesh:
        r = 0.5 * self.D
        preds = [(circle(*self.inclusion1, r), INCLUSION1), (circle(*self.inclusion2, r), INCLUSION2)]
        return generate_rect(self.W, 2.0 * self.H, self.nx, self.ny, preds, crossed=True,
                             boundary_kinds={BOTTOM: DIRICHLET, TOP: DIRICHLET})

    def crack_faces(self, mesh: Mesh) -> np.ndarray:
        return mark_initial_crack(mesh, self.crack_center, self.a, self.crack_angle)


def sen_materials(setup: int, E: float = 10.0, nu: float = 0.45, contrast: float = 100.0
                  ) -> MaterialField:
    """Set-up 1: homogeneous. Set-up 2: inclusions ``contrast`` times stiffer."""
    if setup not in (1, 2):
        raise ValueError("setup must be 1 or 2")
    matrix = IsotropicElastic(E, nu)
    inc = matrix if setup == 1 else IsotropicElastic(contrast * E, nu)
    return MaterialField({MATRIX: matrix, INCLUSION1: inc, INCLUSION2: inc})


def crack_component(mesh: Mesh, failed, seed) -> np.ndarray:
    """Failed faces node-connected to any face in ``seed``."""
    failed = np.unique(np.asarray(failed, dtype=np.int64))
    seed = np.asarray(seed, dtype=np.int64)
    if len(failed) == 0:
        return failed
    fn = mesh.face_nodes[failed]
    n = mesh.n_nodes
    g = sp.coo_matrix((np.ones(len(fn)), (fn[:, 0], fn[:, 1])), shape=(n, n))
    _, labels = connected_components(g, directed=False)
    roots = np.unique(labels[mesh.face_nodes[seed].ravel()])
    return failed[np.isin(labels[fn[:, 0]], roots)]


def reaches_edge(mesh: Mesh, failed, seed, edge_tags=(LEFT, RIGHT)) -> bool:
    """Does the failed set connect the seed crack to a boundary with one of ``edge_tags``?"""
    comp = crack_component(mesh, failed, seed)
    if len(comp) == 0:
        return False
    nodes = np.unique(mesh.face_nodes[comp])
    edge_nodes = np.unique(mesh.boundary_edges[np.isin(mesh.boundary_edge_tags, edge_tags)])
    return bool(np.intersect1d(nodes, edge_nodes).size)


def faces_inside(mesh: Mesh, faces, tags) -> np.ndarray:
    """Interior faces among ``faces`` whose two elements both carry a tag in ``tags``."""
    faces = np.asarray(faces, dtype=np.int64)
    plus, minus = mesh.plus_elem[faces], mesh.minus_elem[faces]
    ok = (minus >= 0) & np.isin(mesh.region[plus], tags) & np.isin(mesh.region[np.maximum(minus, 0)], tags)
    return faces[ok]
