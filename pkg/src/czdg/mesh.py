"""Conforming triangular meshes with classified, oriented element faces.

Every triangle edge becomes exactly one face. Edges shared by two triangles
are interior faces; the remaining edges are boundary faces whose kind
(Dirichlet or Neumann) follows from their boundary tag.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

log = logging.getLogger(__name__)

INTERIOR, DIRICHLET, NEUMANN = 0, 1, 2
KIND_NAMES = {INTERIOR: "interior", DIRICHLET: "dirichlet", NEUMANN: "neumann"}

# boundary tags used by generate_rect
BOTTOM, RIGHT, TOP, LEFT = 1, 2, 3, 4
SIDE_TAGS = {"bottom": BOTTOM, "right": RIGHT, "top": TOP, "left": LEFT}


class MeshError(ValueError):
    """Raised for malformed, degenerate or non-manifold meshes."""


@dataclass(frozen=True)
class Face:
    """Single-face view; the mesh stores faces as parallel arrays."""

    id: int
    nodes: tuple[int, int]
    plus_elem: int
    minus_elem: int | None
    kind: int
    normal: np.ndarray
    tangent: np.ndarray
    length: float
    h_F: float
    boundary_tag: int | None


@dataclass(eq=False)
class Mesh:
    """Nodes, counter-clockwise triangles with region tags, and faces.

    Face arrays (all of length ``n_faces``):

    ``face_nodes``   (nf, 2) ordered so that plus_elem sees them counter-clockwise
    ``plus_elem``    adjacent triangle with the smaller id
    ``minus_elem``   other triangle, -1 on the boundary
    ``kind``         INTERIOR, DIRICHLET or NEUMANN
    ``normal``       unit normal pointing out of plus_elem
    ``tangent``      unit tangent with (normal, tangent) right-handed
    ``length``, ``h_F``, ``boundary_tag`` (-1 for interior faces)
    """

    nodes: np.ndarray
    triangles: np.ndarray
    region: np.ndarray
    boundary_edges: np.ndarray  # (B, 2) node pairs
    boundary_edge_tags: np.ndarray  # (B,)
    boundary_kinds: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float).reshape(-1, 2)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.region = np.asarray(self.region, dtype=np.int64).reshape(-1)
        self.boundary_edges = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        self.boundary_edge_tags = np.asarray(self.boundary_edge_tags, dtype=np.int64).reshape(-1)
        self._validate_cells()
        self._build_faces()

    # -- construction -------------------------------------------------------

    def _validate_cells(self):
        if not np.all(np.isfinite(self.nodes)):
            raise MeshError("non-finite node coordinates")
        n = len(self.nodes)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= n):
            raise MeshError("triangle node index out of range")
        if self.boundary_edges.size and (
            self.boundary_edges.min() < 0 or self.boundary_edges.max() >= n
        ):
            raise MeshError("boundary edge node index out of range")
        if len(self.region) != len(self.triangles):
            raise MeshError("one region tag per triangle required")
        if len(self.boundary_edge_tags) != len(self.boundary_edges):
            raise MeshError("one tag per boundary edge required")
        area = signed_areas(self.nodes, self.triangles)
        flip = area < 0
        if np.any(flip):
            log.warning("reordered %d clockwise triangle(s)", int(flip.sum()))
            self.triangles[flip] = self.triangles[flip][:, [0, 2, 1]]
            area = np.abs(area)
        if np.any(area <= 1e-14 * max(1.0, float(np.ptp(self.nodes)) ** 2)):
            raise MeshError("degenerate triangle (zero area)")
        self.area = area

    def _build_faces(self):
        tri = self.triangles
        nt = len(tri)
        # local edge k runs from vertex k to vertex k+1
        a = tri[:, [0, 1, 2]].reshape(-1)
        b = tri[:, [1, 2, 0]].reshape(-1)
        owner = np.repeat(np.arange(nt), 3)
        key = np.sort(np.stack([a, b], axis=1), axis=1)
        uniq, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge shared by more than two triangles")

        order = np.lexsort((owner, inverse))  # group by edge, smaller owner first
        starts = np.searchsorted(inverse[order], np.arange(len(uniq)))
        first = order[starts]
        plus = owner[first]
        minus = np.full(len(uniq), -1, dtype=np.int64)
        shared = counts == 2
        minus[shared] = owner[order[starts[shared] + 1]]

        fn = np.stack([a[first], b[first]], axis=1)
        self.face_nodes = fn
        self.plus_elem = plus
        self.minus_elem = minus
        self.elem_faces = inverse.reshape(nt, 3)

        d = self.nodes[fn[:, 1]] - self.nodes[fn[:, 0]]
        length = np.hypot(d[:, 0], d[:, 1])
        if np.any(length <= 0):
            raise MeshError("zero-length face")
        self.length = length
        self.tangent = d / length[:, None]
        self.normal = np.stack([self.tangent[:, 1], -self.tangent[:, 0]], axis=1)

        interior = minus >= 0
        tag = np.full(len(uniq), -1, dtype=np.int64)
        if len(self.boundary_edges):
            bkey = np.sort(self.boundary_edges, axis=1)
            lookup = {tuple(k): i for i, k in enumerate(uniq[~interior].tolist())}
            bidx = np.flatnonzero(~interior)
            for (n1, n2), t in zip(bkey.tolist(), self.boundary_edge_tags.tolist()):
                j = lookup.get((n1, n2))
                if j is None:
                    raise MeshError(f"boundary edge ({n1}, {n2}) is not on the mesh boundary")
                tag[bidx[j]] = t
        untagged = (~interior) & (tag < 0)
        if np.any(untagged):
            raise MeshError(f"{int(untagged.sum())} boundary face(s) without a boundary tag")
        self.boundary_tag = tag

        kind = np.full(len(uniq), INTERIOR, dtype=np.int64)
        for t in np.unique(tag[~interior]).tolist():
            k = self.boundary_kinds.get(t, NEUMANN)
            if k not in (DIRICHLET, NEUMANN):
                raise MeshError(f"boundary tag {t} mapped to invalid kind {k!r}")
            kind[tag == t] = k
        unknown = set(self.boundary_kinds) - set(np.unique(tag[~interior]).tolist())
        if unknown:
            log.debug("boundary kinds given for absent tags %s", sorted(unknown))
        self.kind = kind
        self.h_F = compute_h_F(self.area, plus, minus, length)

        n_int = int(interior.sum())
        n_dir = int((kind == DIRICHLET).sum())
        n_neu = int((kind == NEUMANN).sum())
        assert n_int + n_dir + n_neu == len(kind)
        assert 2 * n_int + (len(kind) - n_int) == 3 * nt

    # -- accessors ----------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_faces(self) -> int:
        return len(self.kind)

    @property
    def region_tags(self) -> set[int]:
        return set(np.unique(self.region).tolist())

    @property
    def boundary_tags(self) -> set[int]:
        return set(np.unique(self.boundary_edge_tags).tolist())

    def faces_of_kind(self, kind: int) -> np.ndarray:
        return np.flatnonzero(self.kind == kind)

    def face(self, i: int) -> Face:
        m = int(self.minus_elem[i])
        t = int(self.boundary_tag[i])
        return Face(
            id=i,
            nodes=(int(self.face_nodes[i, 0]), int(self.face_nodes[i, 1])),
            plus_elem=int(self.plus_elem[i]),
            minus_elem=None if m < 0 else m,
            kind=int(self.kind[i]),
            normal=self.normal[i].copy(),
            tangent=self.tangent[i].copy(),
            length=float(self.length[i]),
            h_F=float(self.h_F[i]),
            boundary_tag=None if t < 0 else t,
        )

    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def face_midpoints(self) -> np.ndarray:
        return self.nodes[self.face_nodes].mean(axis=1)

    def with_boundary_kinds(self, kinds: Mapping[int, int]) -> "Mesh":
        """Same geometry with boundary faces reclassified."""
        return Mesh(
            self.nodes, self.triangles.copy(), self.region,
            self.boundary_edges, self.boundary_edge_tags, dict(kinds),
        )

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (
            np.allclose(self.nodes, other.nodes, rtol=1e-12, atol=1e-12)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.region, other.region)
            and _edge_set(self) == _edge_set(other)
        )


def _edge_set(m: Mesh) -> set:
    return {
        (min(a, b), max(a, b), t)
        for (a, b), t in zip(m.boundary_edges.tolist(), m.boundary_edge_tags.tolist())
    }


def signed_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = nodes[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def compute_h_F(area, plus, minus, length) -> np.ndarray:
    """Face mesh parameter.

    Interior faces use the mean area of both neighbours over the face length,
    boundary faces the single neighbour's area over the face length.
    """
    area = np.asarray(area, dtype=float)
    length = np.asarray(length, dtype=float)
    if np.any(length <= 0):
        raise MeshError("zero-length face")
    minus = np.asarray(minus)
    interior = minus >= 0
    h = area[plus] / length
    h[interior] = (area[plus[interior]] + area[minus[interior]]) / (2.0 * length[interior])
    return h


def build_faces(nodes, triangles, boundary_edges=(), boundary_tags=(), boundary_kinds=None,
                region=None) -> Mesh:
    """Build a :class:`Mesh` and classify its faces.

    ``boundary_kinds`` maps boundary tag -> DIRICHLET / NEUMANN; tags that are
    not listed default to NEUMANN.
    """
    triangles = np.asarray(triangles)
    if region is None:
        region = np.zeros(len(triangles), dtype=np.int64)
    return Mesh(nodes, triangles, region, boundary_edges, boundary_tags, dict(boundary_kinds or {}))


# ---------------------------------------------------------------------------
# generators


Predicate = Callable[[np.ndarray], np.ndarray]


def circle(cx: float, cy: float, r: float) -> Predicate:
    """Vectorised point-in-disc predicate."""
    def inside(p):
        p = np.atleast_2d(p)
        return (p[:, 0] - cx) ** 2 + (p[:, 1] - cy) ** 2 <= r * r
    return inside


def generate_rect(width: float, height: float, nx: int, ny: int,
                  region_predicates: Sequence[tuple[Predicate, int]] = (),
                  crossed: bool = False, boundary_kinds: Mapping[int, int] | None = None) -> Mesh:
    """Structured triangulation of ``[0, width] x [0, height]``.

    Each cell is split along its diagonal, or into four triangles about its
    centre when ``crossed``. Boundary edges are tagged BOTTOM, RIGHT, TOP and
    LEFT. A triangle gets the tag of the first predicate containing its
    centroid, 0 otherwise.
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be >= 1")
    if not (width > 0 and height > 0):
        raise ValueError("width and height must be positive")
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # (ny+1, nx+1)
    nodes = [np.stack([X.ravel(), Y.ravel()], axis=1)]

    def vid(i, j):
        return j * (nx + 1) + i

    I, J = np.meshgrid(np.arange(nx), np.arange(ny))
    I, J = I.ravel(), J.ravel()
    v00, v10, v11, v01 = vid(I, J), vid(I + 1, J), vid(I + 1, J + 1), vid(I, J + 1)
    if crossed:
        c = (nx + 1) * (ny + 1) + np.arange(nx * ny)
        nodes.append(np.stack([(xs[I] + xs[I + 1]) / 2, (ys[J] + ys[J + 1]) / 2], axis=1))
        tris = np.stack([
            np.stack([v00, v10, c], 1), np.stack([v10, v11, c], 1),
            np.stack([v11, v01, c], 1), np.stack([v01, v00, c], 1),
        ], axis=1).reshape(-1, 3)
    else:
        tris = np.stack([np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)],
                        axis=1).reshape(-1, 3)
    nodes = np.concatenate(nodes)

    i = np.arange(nx)
    j = np.arange(ny)
    edges = [
        (np.stack([vid(i, 0), vid(i + 1, 0)], 1), BOTTOM),
        (np.stack([vid(nx, j), vid(nx, j + 1)], 1), RIGHT),
        (np.stack([vid(i + 1, ny), vid(i, ny)], 1), TOP),
        (np.stack([vid(0, j + 1), vid(0, j)], 1), LEFT),
    ]
    bedges = np.concatenate([e for e, _ in edges])
    btags = np.concatenate([np.full(len(e), t) for e, t in edges])

    region = np.zeros(len(tris), dtype=np.int64)
    if region_predicates:
        cen = nodes[tris].mean(axis=1)
        unassigned = np.ones(len(tris), dtype=bool)
        for pred, tag in region_predicates:
            hit = unassigned & np.asarray(pred(cen), dtype=bool)
            region[hit] = tag
            unassigned &= ~hit
    return Mesh(nodes, tris, region, bedges, btags, dict(boundary_kinds or {}))


# ---------------------------------------------------------------------------
# initial cracks


def _segment_ends(center, length, angle_deg):
    c = np.asarray(center, dtype=float)
    th = math.radians(angle_deg)
    d = 0.5 * length * np.array([math.cos(th), math.sin(th)])
    return c - d, c + d


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    p = np.atleast_2d(p)
    ab = b - a
    L2 = float(ab @ ab)
    s = np.zeros(len(p)) if L2 == 0 else np.clip((p - a) @ ab / L2, 0.0, 1.0)
    q = a + s[:, None] * ab
    return np.hypot(*(p - q).T)


def mark_initial_crack(mesh: Mesh, center, length: float, angle_deg: float,
                       tol: float | None = None) -> np.ndarray:
    """Interior faces representing a straight crack segment.

    With ``tol`` given, returns every interior face whose two end nodes lie
    within ``tol`` of the segment. With ``tol=None`` the crack is traced as a
    connected chain of faces: a shortest path through the interior edge graph
    between the nodes closest to the segment ends, weighted to hug the segment.
    """
    a, b = _segment_ends(center, length, angle_deg)
    dist = point_segment_distance(mesh.nodes, a, b)
    interior = mesh.kind == INTERIOR
    if tol is not None:
        if tol < 0:
            raise ValueError("tol must be >= 0")
        fn = mesh.face_nodes
        hit = interior & (dist[fn[:, 0]] <= tol) & (dist[fn[:, 1]] <= tol)
        ids = np.flatnonzero(hit)
        if len(ids) == 0:
            log.warning("initial crack matched no faces (tol=%g)", tol)
        return ids

    ids = np.flatnonzero(interior)
    fn = mesh.face_nodes[ids]
    hbar = float(np.mean(mesh.length[ids]))
    davg = 0.5 * (dist[fn[:, 0]] + dist[fn[:, 1]])
    w = mesh.length[ids] * (1.0 + 20.0 * (davg / hbar) ** 2)
    n = mesh.n_nodes
    g = sp.coo_matrix((np.r_[w, w], (np.r_[fn[:, 0], fn[:, 1]], np.r_[fn[:, 1], fn[:, 0]])),
                      shape=(n, n)).tocsr()
    # path end nodes must be reachable through interior edges
    on_interior = np.zeros(n, dtype=bool)
    on_interior[fn.ravel()] = True
    cand = np.flatnonzero(on_interior)
    start = cand[np.argmin(np.hypot(*(mesh.nodes[cand] - a).T))]
    stop = cand[np.argmin(np.hypot(*(mesh.nodes[cand] - b).T))]
    if start == stop:
        log.warning("initial crack shorter than the local mesh size; no faces marked")
        return np.array([], dtype=np.int64)
    _, pred = dijkstra(g, indices=start, return_predecessors=True)
    path = [stop]
    while path[-1] != start:
        p = pred[path[-1]]
        if p < 0:
            raise MeshError("crack end points are not connected through interior faces")
        path.append(p)
    lookup = {(min(x, y), max(x, y)): f for f, (x, y) in zip(ids.tolist(), fn.tolist())}
    return np.array(sorted(lookup[(min(x, y), max(x, y))] for x, y in zip(path[:-1], path[1:])),
                    dtype=np.int64)


def faces_connected(mesh: Mesh, face_ids: Iterable[int]) -> bool:
    """True if the faces form one node-connected set."""
    face_ids = list(face_ids)
    if not face_ids:
        return False
    fn = mesh.face_nodes[face_ids]
    n = mesh.n_nodes
    g = sp.coo_matrix((np.ones(len(fn)), (fn[:, 0], fn[:, 1])), shape=(n, n))
    ncomp, labels = sp.csgraph.connected_components(g, directed=False)
    return len(np.unique(labels[np.unique(fn)])) == 1


# ---------------------------------------------------------------------------
# text format


def write_mesh(mesh: Mesh) -> str:
    out = ["$Nodes", str(mesh.n_nodes)]
    out += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(mesh.nodes.tolist())]
    out += ["$Triangles", str(mesh.n_triangles)]
    out += [f"{i} {t} {a} {b} {c}"
            for i, (t, (a, b, c)) in enumerate(zip(mesh.region.tolist(), mesh.triangles.tolist()))]
    out += ["$BoundaryEdges", str(len(mesh.boundary_edges))]
    out += [f"{i} {t} {a} {b}"
            for i, (t, (a, b)) in enumerate(zip(mesh.boundary_edge_tags.tolist(),
                                                 mesh.boundary_edges.tolist()))]
    return "\n".join(out) + "\n"


_SECTIONS = (("$Nodes", 3), ("$Triangles", 5), ("$BoundaryEdges", 4))


def read_mesh(text: str, boundary_kinds: Mapping[int, int] | None = None) -> Mesh:
    """Parse the line-oriented mesh format produced by :func:`write_mesh`."""
    lines = []
    for no, raw in enumerate(text.splitlines(), 1):
        s = raw.split("#", 1)[0].strip()
        if s:
            lines.append((no, s))
    pos = 0
    data = {}
    for header, ncol in _SECTIONS:
        if pos >= len(lines) or lines[pos][1] != header:
            no = lines[pos][0] if pos < len(lines) else len(text.splitlines())
            raise MeshError(f"line {no}: expected section header {header}")
        pos += 1
        try:
            count = int(lines[pos][1])
        except (IndexError, ValueError):
            raise MeshError(f"{header}: missing or invalid entry count") from None
        pos += 1
        rows = lines[pos:pos + count]
        if len(rows) != count:
            raise MeshError(f"{header}: expected {count} entries, found {len(rows)}")
        table = []
        for no, s in rows:
            parts = s.split()
            if len(parts) != ncol or parts[0].startswith("$"):
                raise MeshError(f"line {no}: expected {ncol} fields in {header}")
            try:
                table.append([float(p) if header == "$Nodes" and k else int(p)
                              for k, p in enumerate(parts)])
            except ValueError:
                raise MeshError(f"line {no}: malformed number") from None
        ids = [r[0] for r in table]
        if ids != list(range(count)):
            raise MeshError(f"{header}: ids must be 0..{count - 1} in order")
        data[header] = table
        pos += count
    if pos != len(lines):
        raise MeshError(f"line {lines[pos][0]}: unexpected trailing content")

    nodes = np.array([r[1:] for r in data["$Nodes"]], dtype=float).reshape(-1, 2)
    tris = np.array([r[2:] for r in data["$Triangles"]], dtype=np.int64).reshape(-1, 3)
    region = np.array([r[1] for r in data["$Triangles"]], dtype=np.int64)
    bedges = np.array([r[2:] for r in data["$BoundaryEdges"]], dtype=np.int64).reshape(-1, 2)
    btags = np.array([r[1] for r in data["$BoundaryEdges"]], dtype=np.int64)
    if np.any(region < 0) or np.any(btags < 0):
        raise MeshError("tags must be non-negative integers")
    return Mesh(nodes, tris, region, bedges, btags, dict(boundary_kinds or {}))
