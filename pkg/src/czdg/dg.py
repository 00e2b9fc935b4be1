"""Discontinuous Galerkin assembly for P1 elasticity with Nitsche-cohesive faces.

Every triangle owns six degrees of freedom (vertex-major, component-minor),
so the global vector has ``6 * n_triangles`` entries and nothing is shared
between elements. On interior faces the jump is ``v+ - v-`` with the normal
pointing out of the plus element; on Dirichlet faces it is ``v+``.

Per face, with ``J`` the jump operator, ``Sig`` the average normal traction
operator, ``K`` the face compliance and ``S = (eps I + K)^-1``,
``eps = h_F / gamma``, the bilinear form contributes::

    int_F (J + K Sig)^T S (J + K Sig) - (J + K Sig)^T Sig - Sig^T (J + K Sig) + Sig^T K Sig

which simplifies exactly to ``int_F (J - eps Sig)^T S (J - eps Sig) - eps Sig^T Sig``.
The simplified form only needs ``S``, stays well conditioned as ``K`` grows and
is what the assembler evaluates. Directions with infinite compliance are
dropped through the projector ``P``: the face term becomes
``(J - eps Sig)^T S (J - eps Sig) - eps Sig^T P Sig`` with ``S = P S P``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .material import MaterialField, as_material_field, face_gamma
from .mesh import DIRICHLET, INTERIOR, NEUMANN, Mesh

# Gauss-Legendre on [0, 1]
GAUSS2 = (np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]), np.array([0.5, 0.5]))
_g3 = np.sqrt(0.6) / 2
GAUSS3 = (np.array([0.5 - _g3, 0.5, 0.5 + _g3]), np.array([5.0, 8.0, 5.0]) / 18.0)

# degree-5 Dunavant rule on the reference triangle (barycentric, weights sum to 1)
_a1, _b1 = 0.059715871789770, 0.470142064105115
_a2, _b2 = 0.797426985353087, 0.101286507323456
TRI7_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_a1, _b1, _b1], [_b1, _a1, _b1], [_b1, _b1, _a1],
    [_a2, _b2, _b2], [_b2, _a2, _b2], [_b2, _b2, _a2],
])
TRI7_W = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


def element_gradients(mesh: Mesh) -> np.ndarray:
    """Constant P1 basis gradients, shape (nt, 3, 2)."""
    p = mesh.nodes[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    return np.stack([b, c], axis=2) / (2.0 * mesh.area)[:, None, None]


def strain_matrices(grad: np.ndarray) -> np.ndarray:
    """Voigt strain-displacement matrices (nt, 3, 6) for (e_xx, e_yy, 2 e_xy)."""
    nt = len(grad)
    B = np.zeros((nt, 3, 6))
    B[:, 0, 0::2] = grad[:, :, 0]
    B[:, 1, 1::2] = grad[:, :, 1]
    B[:, 2, 0::2] = grad[:, :, 1]
    B[:, 2, 1::2] = grad[:, :, 0]
    return B


def traction_operator(DB: np.ndarray, n: np.ndarray) -> np.ndarray:
    """``sigma(v) . n`` as (..., 2, 6) from stress operators ``D B`` and normals."""
    nx, ny = n[..., 0, None], n[..., 1, None]
    sxx, syy, sxy = DB[..., 0, :], DB[..., 1, :], DB[..., 2, :]
    return np.stack([sxx * nx + sxy * ny, sxy * nx + syy * ny], axis=-2)


def shape_values(bary: np.ndarray) -> np.ndarray:
    """Vector P1 basis at points with barycentric coords (..., 3) -> (..., 2, 6)."""
    N = np.zeros(bary.shape[:-1] + (2, 6))
    N[..., 0, 0::2] = bary
    N[..., 1, 1::2] = bary
    return N


def element_dofs(elem: np.ndarray) -> np.ndarray:
    return 6 * np.asarray(elem)[..., None] + np.arange(6)


def _face_bary(mesh: Mesh, elem: np.ndarray, faces: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Barycentric coords in ``elem`` of points at parameter ``xi`` along faces."""
    tri = mesh.triangles[elem]
    fn = mesh.face_nodes[faces]
    bary = np.zeros((len(faces), len(xi), 3))
    for end, wgt in ((0, 1.0 - xi), (1, xi)):
        loc = np.argmax(tri == fn[:, end, None], axis=1)
        bary[np.arange(len(faces)), :, loc] = wgt[None, :]
    return bary


@dataclass
class FaceBlock:
    """Precomputed operators for a set of faces sharing one dof layout."""

    ids: np.ndarray
    dofs: np.ndarray  # (nf, m)
    J: np.ndarray  # (nf, nq, 2, m) jump at matrix quadrature points
    Sig: np.ndarray  # (nf, 2, m) average normal traction
    w: np.ndarray  # (nf, nq) quadrature weights including face length
    J3: np.ndarray  # (nf, 3, 2, m) jump at load quadrature points
    x3: np.ndarray  # (nf, 3, 2)
    w3: np.ndarray  # (nf, 3)
    eps: np.ndarray  # (nf,) h_F / gamma
    gamma: np.ndarray


@dataclass
class Dirichlet:
    """Prescribed displacement on a boundary tag.

    ``value`` is a constant 2-vector or a callable ``g(points) -> (n, 2)``;
    ``mask`` selects the constrained components (a roller fixes one).
    """

    value: object = (0.0, 0.0)
    mask: tuple[bool, bool] = (True, True)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        if callable(self.value):
            return np.asarray(self.value(x), dtype=float).reshape(x.shape)
        return np.broadcast_to(np.asarray(self.value, dtype=float), x.shape)


@dataclass
class Loads:
    """Body force, Neumann tractions and Dirichlet data for one load level."""

    body: object = None  # None, constant 2-vector, or callable f(points) -> (n, 2)
    traction: Mapping[int, object] = field(default_factory=dict)
    dirichlet: Mapping[int, Dirichlet] = field(default_factory=dict)


def _evaluate(field_, x):
    if field_ is None:
        return np.zeros_like(x)
    if callable(field_):
        return np.asarray(field_(x), dtype=float).reshape(x.shape)
    return np.broadcast_to(np.asarray(field_, dtype=float), x.shape)


class DGOperator:
    """Assembler for one mesh, material field and penalty parameter.

    Geometry-dependent operators are computed once; :meth:`matrix` only
    recombines them with the current face stiffnesses.
    """

    def __init__(self, mesh: Mesh, materials, gamma0: float = 10.0,
                 dirichlet_masks: Mapping[int, tuple[bool, bool]] | None = None,
                 threads: int | None = None):
        if not gamma0 > 0:
            raise ValueError(f"gamma0 must be positive, got {gamma0}")
        self.mesh = mesh
        self.materials = as_material_field(materials)
        self.gamma0 = gamma0
        self.threads = threads or int(os.environ.get("CZDG_THREADS", "1") or 1)
        self.ndof = 6 * mesh.n_triangles

        D, scale = self.materials.arrays(mesh.region)
        self.D = D
        self.grad = element_gradients(mesh)
        self.B = strain_matrices(self.grad)
        self.DB = np.einsum("eij,ejk->eik", D, self.B)
        Ke = mesh.area[:, None, None] * np.einsum("eji,ejk->eik", self.B, self.DB)
        self.Ke = 0.5 * (Ke + Ke.transpose(0, 2, 1))
        gam = face_gamma(scale, mesh.plus_elem, mesh.minus_elem, gamma0)

        self.interior = self._face_block(mesh.faces_of_kind(INTERIOR), gam)
        self.dirichlet = self._face_block(mesh.faces_of_kind(DIRICHLET), gam)
        self.neumann_ids = mesh.faces_of_kind(NEUMANN)

        masks = dirichlet_masks or {}
        P = np.zeros((len(self.dirichlet.ids), 2, 2))
        tags = mesh.boundary_tag[self.dirichlet.ids]
        for i, t in enumerate(tags.tolist()):
            mx, my = masks.get(t, (True, True))
            P[i] = np.diag([float(mx), float(my)])
        self.dirichlet_P = P
        self.dirichlet_S = P / self.dirichlet.eps[:, None, None]
        self._build_pattern()

    # -- geometry ---------------------------------------------------------

    def _face_block(self, ids: np.ndarray, gam: np.ndarray) -> FaceBlock:
        mesh = self.mesh
        plus = mesh.plus_elem[ids]
        minus = mesh.minus_elem[ids]
        interior = len(ids) > 0 and bool(np.all(minus >= 0))
        n = mesh.normal[ids]
        T_plus = traction_operator(self.DB[plus], n)
        x0 = mesh.nodes[mesh.face_nodes[ids, 0]]
        x1 = mesh.nodes[mesh.face_nodes[ids, 1]]
        L = mesh.length[ids]

        def jump_at(xi):
            Np = shape_values(_face_bary(mesh, plus, ids, xi))
            if interior:
                Nm = shape_values(_face_bary(mesh, minus, ids, xi))
                return np.concatenate([Np, -Nm], axis=-1)
            return Np

        if interior:
            T_minus = traction_operator(self.DB[minus], n)
            Sig = 0.5 * np.concatenate([T_plus, T_minus], axis=-1)
            dofs = np.concatenate([element_dofs(plus), element_dofs(minus)], axis=1)
        else:
            Sig = T_plus
            dofs = element_dofs(plus)
        xi2, w2 = GAUSS2
        xi3, w3 = GAUSS3
        x3 = x0[:, None, :] + xi3[None, :, None] * (x1 - x0)[:, None, :]
        return FaceBlock(
            ids=ids, dofs=dofs, J=jump_at(xi2), Sig=Sig, w=L[:, None] * w2[None, :],
            J3=jump_at(xi3), x3=x3, w3=L[:, None] * w3[None, :],
            eps=mesh.h_F[ids] / gam[ids], gamma=gam[ids],
        )

    def _build_pattern(self):
        nt = self.mesh.n_triangles
        ed = element_dofs(np.arange(nt))
        rows = [np.repeat(ed, 6, axis=1).ravel()]
        cols = [np.tile(ed, (1, 6)).ravel()]
        for blk in (self.interior, self.dirichlet):
            m = blk.dofs.shape[1]
            rows.append(np.repeat(blk.dofs, m, axis=1).ravel())
            cols.append(np.tile(blk.dofs, (1, m)).ravel())
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        key = rows.astype(np.int64) * self.ndof + cols
        uniq, inv = np.unique(key, return_inverse=True)
        self._slot = inv.reshape(-1)
        self._nnz = len(uniq)
        r = uniq // self.ndof
        self._indices = (uniq % self.ndof).astype(np.int32)
        self._indptr = np.searchsorted(r, np.arange(self.ndof + 1)).astype(np.int32)
        nv = 36 * nt
        ni = self.interior.dofs.shape[1] ** 2 * len(self.interior.ids)
        self._slices = (slice(0, nv), slice(nv, nv + ni), slice(nv + ni, len(self._slot)))

    # -- face stiffness ---------------------------------------------------

    def face_frames(self) -> np.ndarray:
        """Rotation (nf, 2, 2) with columns (n, t) for interior faces."""
        ids = self.interior.ids
        return np.stack([self.mesh.normal[ids], self.mesh.tangent[ids]], axis=2)

    def stiffness_from_compliance(self, K: np.ndarray):
        """``(S, P)`` for finite global-frame compliances (nf, 2, 2)."""
        eps = self.interior.eps[:, None, None]
        S = np.linalg.inv(eps * np.eye(2) + np.asarray(K, dtype=float))
        P = np.broadcast_to(np.eye(2), S.shape).copy()
        return 0.5 * (S + S.transpose(0, 2, 1)), P

    def stiffness_from_frame(self, s_n: np.ndarray, s_t: np.ndarray,
                             active_n: np.ndarray, active_t: np.ndarray):
        """``(S, P)`` from face-frame stiffness entries and active directions."""
        R = self.face_frames()
        n, t = R[:, :, 0], R[:, :, 1]
        nn = n[:, :, None] * n[:, None, :]
        tt = t[:, :, None] * t[:, None, :]
        an = np.asarray(active_n, dtype=float)[:, None, None]
        at = np.asarray(active_t, dtype=float)[:, None, None]
        S = an * np.asarray(s_n)[:, None, None] * nn + at * np.asarray(s_t)[:, None, None] * tt
        return S, an * nn + at * tt

    def rigid_faces(self):
        """Zero compliance on every interior face (symmetric interior penalty)."""
        return self.stiffness_from_compliance(np.zeros((len(self.interior.ids), 2, 2)))

    # -- assembly ---------------------------------------------------------

    @staticmethod
    def _face_values(blk: FaceBlock, S: np.ndarray, P: np.ndarray, active=None) -> np.ndarray:
        if active is None:
            active = slice(None)
        eps = blk.eps[active]
        Sig = blk.Sig[active]
        A = blk.J[active] - eps[:, None, None, None] * Sig[:, None]
        SA = np.einsum("fij,fqjm->fqim", S[active], A)
        M = np.einsum("fq,fqil,fqim->flm", blk.w[active], A, SA)
        L = blk.w[active].sum(axis=1)
        M -= (eps * L)[:, None, None] * np.einsum("fil,fij,fjm->flm", Sig, P[active], Sig)
        return 0.5 * (M + M.transpose(0, 2, 1))

    def _interior_values(self, S, P):
        blk = self.interior
        m = blk.dofs.shape[1]
        out = np.zeros((len(blk.ids), m, m))
        live = np.flatnonzero(np.abs(P).reshape(len(P), -1).max(axis=1) > 0)
        if self.threads > 1 and len(live) > 2000:
            chunks = np.array_split(live, self.threads)
            with ThreadPoolExecutor(self.threads) as ex:
                parts = list(ex.map(lambda c: self._face_values(blk, S, P, c), chunks))
            for c, v in zip(chunks, parts):
                out[c] = v
        elif len(live):
            out[live] = self._face_values(blk, S, P, live)
        return out

    def matrix(self, S: np.ndarray | None = None, P: np.ndarray | None = None) -> sp.csr_matrix:
        """Global matrix for interior face stiffnesses ``S`` and projectors ``P``.

        Defaults to rigid faces (compliance zero everywhere).
        """
        if S is None:
            S, P = self.rigid_faces()
        vals = np.empty(len(self._slot))
        sv, si, sd = self._slices
        vals[sv] = self.Ke.ravel()
        vals[si] = self._interior_values(S, P).ravel()
        if len(self.dirichlet.ids):
            vals[sd] = self._face_values(self.dirichlet, self.dirichlet_S, self.dirichlet_P).ravel()
        data = np.bincount(self._slot, weights=vals, minlength=self._nnz)
        return sp.csr_matrix((data, self._indices, self._indptr), shape=(self.ndof, self.ndof))

    def volume_matrix(self) -> sp.csr_matrix:
        nt = self.mesh.n_triangles
        ed = element_dofs(np.arange(nt))
        return sp.coo_matrix((self.Ke.ravel(), (np.repeat(ed, 6, axis=1).ravel(),
                                                np.tile(ed, (1, 6)).ravel())),
                             shape=(self.ndof, self.ndof)).tocsr()

    def rhs(self, loads: Loads) -> np.ndarray:
        mesh = self.mesh
        b = np.zeros(self.ndof)
        if loads.body is not None:
            p = mesh.nodes[mesh.triangles]
            xq = np.einsum("qk,ekd->eqd", TRI7_BARY, p)
            f = _evaluate(loads.body, xq.reshape(-1, 2)).reshape(xq.shape)
            N = shape_values(TRI7_BARY)  # (q, 2, 6)
            fe = np.einsum("q,e,eqi,qim->em", TRI7_W, mesh.area, f, N)
            np.add.at(b, element_dofs(np.arange(mesh.n_triangles)), fe)

        if loads.traction:
            ids = self.neumann_ids
            tags = mesh.boundary_tag[ids]
            xi, wq = GAUSS3
            for tag, h in loads.traction.items():
                sel = ids[tags == tag]
                if not len(sel):
                    continue
                x0 = mesh.nodes[mesh.face_nodes[sel, 0]]
                x1 = mesh.nodes[mesh.face_nodes[sel, 1]]
                xq = x0[:, None] + xi[None, :, None] * (x1 - x0)[:, None]
                hv = _evaluate(h, xq.reshape(-1, 2)).reshape(xq.shape)
                N = shape_values(_face_bary(mesh, mesh.plus_elem[sel], sel, xi))
                fe = np.einsum("fq,fqi,fqim->fm", mesh.length[sel, None] * wq[None], hv, N)
                np.add.at(b, element_dofs(mesh.plus_elem[sel]), fe)

        blk = self.dirichlet
        if len(blk.ids):
            g = self.dirichlet_values(loads)
            A = blk.J3 - blk.eps[:, None, None, None] * blk.Sig[:, None]
            fe = np.einsum("fq,fqim,fij,fqj->fm", blk.w3, A, self.dirichlet_S, g)
            np.add.at(b, blk.dofs, fe)
        return b

    def dirichlet_values(self, loads: Loads) -> np.ndarray:
        blk = self.dirichlet
        tags = self.mesh.boundary_tag[blk.ids]
        g = np.zeros(blk.x3.shape)
        missing = set(np.unique(tags).tolist()) - set(loads.dirichlet)
        if missing:
            raise KeyError(f"no Dirichlet data for boundary tag(s) {sorted(missing)}")
        for tag, bc in loads.dirichlet.items():
            sel = tags == tag
            if np.any(sel):
                g[sel] = bc.evaluate(blk.x3[sel].reshape(-1, 2)).reshape(-1, 3, 2)
        return g

    # -- post-processing --------------------------------------------------

    def midpoint_jumps(self, u: np.ndarray) -> np.ndarray:
        """Jump ``u+ - u-`` at interior face midpoints, global frame (nf, 2)."""
        blk = self.interior
        Jmid = 0.5 * (blk.J[:, 0] + blk.J[:, 1])
        return np.einsum("fim,fm->fi", Jmid, u[blk.dofs])

    def separations(self, u: np.ndarray):
        """Opening ``u_n`` and sliding ``u_t`` at face midpoints.

        The separation is ``u- - u+``: the minus side lies across the normal,
        so positive ``u_n`` opens the face.
        """
        d = -self.midpoint_jumps(u)
        ids = self.interior.ids
        return (np.einsum("fi,fi->f", d, self.mesh.normal[ids]),
                np.einsum("fi,fi->f", d, self.mesh.tangent[ids]))

    def average_normal_traction(self, u: np.ndarray) -> np.ndarray:
        """``<sigma(u) n> . n`` on interior faces."""
        blk = self.interior
        tr = np.einsum("fim,fm->fi", blk.Sig, u[blk.dofs])
        return np.einsum("fi,fi->f", tr, self.mesh.normal[blk.ids])

    def reaction(self, u: np.ndarray, loads: Loads, tag: int) -> np.ndarray:
        """Force (per unit thickness) the support on ``tag`` exerts on the body."""
        blk = self.dirichlet
        sel = self.mesh.boundary_tag[blk.ids] == tag
        if not np.any(sel):
            raise KeyError(f"boundary tag {tag} has no Dirichlet faces")
        g = self.dirichlet_values(loads)[sel]
        ue = u[blk.dofs[sel]]
        A = blk.J3[sel] - blk.eps[sel, None, None, None] * blk.Sig[sel, None]
        r = np.einsum("fqim,fm->fqi", A, ue) - g
        return -np.einsum("fq,fij,fqj->i", blk.w3[sel], self.dirichlet_S[sel], r)

    def element_strain(self, u: np.ndarray) -> np.ndarray:
        """Voigt strain per element (nt, 3)."""
        ue = u.reshape(-1, 6)
        return np.einsum("eij,ej->ei", self.B, ue)

    def element_stress(self, u: np.ndarray) -> np.ndarray:
        """Stress per element as (sxx, syy, sxy, szz); plane strain."""
        eps = self.element_strain(u)
        s = np.einsum("eij,ej->ei", self.D, eps)
        lam = self.D[:, 0, 1]
        szz = lam * (eps[:, 0] + eps[:, 1])
        return np.column_stack([s, szz])

    def von_mises(self, u: np.ndarray) -> np.ndarray:
        sxx, syy, sxy, szz = self.element_stress(u).T
        return np.sqrt(0.5 * ((sxx - syy) ** 2 + (syy - szz) ** 2 + (szz - sxx) ** 2) + 3 * sxy ** 2)

    def energy(self, u: np.ndarray) -> float:
        ue = u.reshape(-1, 6)
        return 0.5 * float(np.einsum("ei,eij,ej->", ue, self.Ke, ue))


def reference_face_matrix(J, Sig, K, S, w):
    """Face block evaluated term by term from the unsimplified form.

    ``J`` (nq, 2, m) jumps at quadrature points, ``Sig`` (2, m), ``K`` and
    ``S`` 2x2, ``w`` (nq,) weights. Used to check the simplified assembly.
    """
    M = np.zeros((J.shape[-1], J.shape[-1]))
    for Jq, wq in zip(J, w):
        W = Jq + K @ Sig
        M += wq * (W.T @ S @ W - W.T @ Sig - Sig.T @ W + Sig.T @ K @ Sig)
    return M


def element_values_at(mesh: Mesh, u: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Discrete field at barycentric points of every element: (nt, q, 2)."""
    N = shape_values(bary)
    return np.einsum("qim,em->eqi", N, u.reshape(-1, 6))


def l2_error(mesh: Mesh, u: np.ndarray, exact: Callable) -> float:
    p = mesh.nodes[mesh.triangles]
    xq = np.einsum("qk,ekd->eqd", TRI7_BARY, p)
    uh = element_values_at(mesh, u, TRI7_BARY)
    ue = np.asarray(exact(xq.reshape(-1, 2))).reshape(uh.shape)
    return float(np.sqrt(np.einsum("q,e,eqi->", TRI7_W, mesh.area, (uh - ue) ** 2)))


def energy_error(op: DGOperator, u: np.ndarray, exact_grad: Callable) -> float:
    """Broken energy norm ``sqrt(sum_T int sigma(e):eps(e))`` of the error.

    ``exact_grad(points) -> (n, 2, 2)`` with entries ``d u_i / d x_j``.
    """
    mesh = op.mesh
    p = mesh.nodes[mesh.triangles]
    xq = np.einsum("qk,ekd->eqd", TRI7_BARY, p)
    G = np.asarray(exact_grad(xq.reshape(-1, 2))).reshape(xq.shape[:2] + (2, 2))
    ex = np.stack([G[..., 0, 0], G[..., 1, 1], G[..., 0, 1] + G[..., 1, 0]], axis=-1)
    eh = op.element_strain(u)[:, None, :]
    e = eh - ex
    return float(np.sqrt(np.einsum("q,e,eqi,eij,eqj->", TRI7_W, mesh.area, e, op.D, e)))
