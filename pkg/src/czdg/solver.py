"""Linear solves and displacement-controlled quasi-static load stepping.

Each load step iterates on the secant interface stiffness: solve with the
current face stiffnesses, balance every face against its law for the new
displacement, re-evaluate the secants, repeat. With the history frozen the
secant model lies above the cohesive energy and touches it at the current
iterate, so the plain update descends and does not cycle. Between iterations
only process-zone faces change, and the solves are low-rank updates of one
factorisation. The damage history is committed once per converged step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from . import cohesive as coh
from .dg import DGOperator, Loads

log = logging.getLogger(__name__)

# compression below this fraction of u_nc counts as no contact
CLOSED_TOL = 1e-9
# couplings this close to 1 are rigid faces whose eps * (1 / eps) missed 1 by roundoff
RIGID_Y = 1.0 - 1e-12


class IndefiniteSystemError(np.linalg.LinAlgError):
    """The assembled matrix is not positive definite (gamma0 too small?)."""


class StepFailure(RuntimeError):
    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


class _Anderson:
    """Anderson mixing for the fixed point ``x = G(x)``; depth 0 is relaxed Picard."""

    def __init__(self, depth: int, beta: float):
        self.depth = depth
        self.beta = beta
        self.reset()

    def reset(self):
        self.dx, self.df = [], []
        self.last = None

    def update(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        f = g - x
        if self.depth == 0:
            return x + self.beta * f
        if self.last is not None:
            self.dx.append(x - self.last[0])
            self.df.append(f - self.last[1])
            if len(self.dx) > self.depth:
                self.dx.pop(0)
                self.df.pop(0)
        self.last = (x, f)
        if not self.dx:
            return x + self.beta * f
        dF = np.stack(self.df, axis=1)
        dX = np.stack(self.dx, axis=1)
        gam, *_ = np.linalg.lstsq(dF, f, rcond=1e-10)
        return x + self.beta * f - (dX + self.beta * dF) @ gam


def factorize(A):
    """Sparse LDL-like factorisation of a symmetric matrix.

    SuperLU in symmetric mode without pivoting; a non-positive pivot means
    ``A`` is not SPD and raises :class:`IndefiniteSystemError`.
    """
    A = sp.csc_matrix(A)
    try:
        lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options=dict(SymmetricMode=True))
    except RuntimeError as err:  # exactly singular pivot
        raise IndefiniteSystemError(f"factorisation broke down: {err}; increase gamma0") from err
    if np.array_equal(lu.perm_r, lu.perm_c):
        npos = int(np.sum(lu.U.diagonal() <= 0))
        if npos:
            raise IndefiniteSystemError(
                f"matrix has {npos} non-positive pivot(s); increase gamma0")
    return lu


def linear_solve(A, b, rtol: float = 1e-10, lu=None) -> np.ndarray:
    """Solve the symmetric system ``A x = b``.

    Factorises ``A`` unless a factor ``lu`` is given. Falls back to
    Jacobi-preconditioned conjugate gradients if the direct solve misses
    ``rtol``.
    """
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    A = sp.csc_matrix(A)
    x = (lu or factorize(A)).solve(b)
    res = np.linalg.norm(A @ x - b) / bnorm
    if res <= rtol:
        return x
    log.warning("direct solve residual %.2e above %.0e, refining with CG", res, rtol)
    M = sp.diags(1.0 / A.diagonal())
    y, info = spla.cg(A, b, x0=x, rtol=rtol, maxiter=10 * A.shape[0], M=M)
    res = np.linalg.norm(A @ y - b) / bnorm
    if res > rtol:
        raise np.linalg.LinAlgError(f"linear solve residual {res:.2e} > {rtol:.0e} (cg info {info})")
    return y


class _FaceUpdateSolver:
    """Solves ``A(c) u = b`` by low-rank updates of a factorised base matrix.

    Between secant iterations only the faces of the process zone change.
    Per face the interior-penalty block is

        sum_q w_q sum_d s_d (d A_q)^T (d A_q) - eps L sum_d P_d (d Sig)^T (d Sig)

    over the face directions ``d in (n, t)`` and two quadrature points, with
    ``A_q = J_q - eps Sig``. A change of ``s_d`` or of the active flags ``P_d``
    is therefore a rank-six update ``U a U^T``, and

        A^-1 b = x_b - A_b^-1 U (I + a C)^-1 a U^T x_b,   C = U^T A_b^-1 U.

    The base is refactorised (with the definiteness check) when the soft
    pins change, when too many faces differ from it, or on request.
    """

    def __init__(self, op: DGOperator, assemble, pins, max_faces: int = 200):
        self.op = op
        self.assemble = assemble
        self.pins = pins
        self.max_faces = max_faces
        blk = op.interior
        R = op.face_frames()
        dirs = np.stack([R[:, :, 0], R[:, :, 1]], axis=1)  # (nf, d, 2)
        A = blk.J - blk.eps[:, None, None, None] * blk.Sig[:, None]
        # per face: columns (n q0, n q1, t q0, t q1) for s, then (n, t) for P
        cs = np.sqrt(blk.w)[:, None, :, None] * np.einsum("fdi,fqim->fdqm", dirs, A)
        cp = (np.sqrt(blk.eps * blk.w.sum(axis=1))[:, None, None]
              * np.einsum("fdi,fim->fdm", dirs, blk.Sig))
        self._cols = np.concatenate([cs.reshape(len(A), 4, -1), cp], axis=1)  # (nf, 6, m)
        self._base = None

    def _coefficients(self, c, faces):
        b = self._base["c"]
        sn = np.where(c.act_n, c.s_n, 0.0)[faces] - np.where(b.act_n, b.s_n, 0.0)[faces]
        st = np.where(c.act_t, c.s_t, 0.0)[faces] - np.where(b.act_t, b.s_t, 0.0)[faces]
        pn = b.act_n[faces].astype(float) - c.act_n[faces]
        pt = b.act_t[faces].astype(float) - c.act_t[faces]
        return np.stack([sn, sn, st, st, pn, pt], axis=1).ravel()

    def _rebuild(self, c, pins):
        self._base = dict(c=c, pins=pins, lu=factorize(self.assemble(c)), faces=np.zeros(0, int),
                          U=sp.csc_matrix((self.op.ndof, 0)), C=np.zeros((0, 0)), b=None)

    def _add_faces(self, new):
        base = self._base
        m = self._cols.shape[2]
        dofs = self.op.interior.dofs[new]
        rows = np.repeat(dofs[:, None, :], 6, axis=1).reshape(-1, m)
        U_new = sp.csc_matrix((self._cols[new].reshape(-1, m).ravel(),
                               (rows.ravel(), np.repeat(np.arange(6 * len(new)), m))),
                              shape=(self.op.ndof, 6 * len(new)))
        Z = base["lu"].solve(U_new.toarray())
        k = base["C"].shape[0]
        C = np.empty((k + Z.shape[1],) * 2)
        C[:k, :k] = base["C"]
        C[:, k:] = sp.hstack([base["U"], U_new]).T @ Z
        C[k:, :k] = C[:k, k:].T
        C[k:, k:] = 0.5 * (C[k:, k:] + C[k:, k:].T)
        base.update(faces=np.concatenate([base["faces"], new]), U=sp.hstack([base["U"], U_new]).tocsc(),
                    C=C, b=None)

    def solve(self, c, b, exact: bool = False) -> np.ndarray:
        pins = self.pins(c)
        base = self._base
        if exact or base is None or not np.array_equal(pins, base["pins"]):
            self._rebuild(c, pins)
            return linear_solve(self.assemble(c), b, lu=self._base["lu"])
        bc = base["c"]
        changed = np.flatnonzero((c.act_n != bc.act_n) | (c.act_t != bc.act_t)
                                 | (c.s_n != bc.s_n) | (c.s_t != bc.s_t))
        new = np.setdiff1d(changed, base["faces"])
        if len(base["faces"]) + len(new) > self.max_faces:
            self._rebuild(c, pins)
            return linear_solve(self.assemble(c), b, lu=self._base["lu"])
        if len(new):
            self._add_faces(new)
        if base["b"] is None or not np.array_equal(base["b"], b):
            x = base["lu"].solve(b)
            base.update(b=b.copy(), x=x, r=base["U"].T @ x)
        a = self._coefficients(c, base["faces"])
        if not np.any(a):
            return base["x"].copy()
        w = np.linalg.solve(np.eye(len(a)) + a[:, None] * base["C"], a * base["r"])
        return base["x"] - base["lu"].solve(base["U"] @ w)


@dataclass(frozen=True)
class NonlinearSettings:
    tol_rel: float = 1e-6
    tol_coupling: float = 1e-4
    max_iter: int = 2000
    relaxation: float = 1.0
    max_bisections: int = 5
    anderson_depth: int = 0
    separation: str = "cohesive"
    failure: str = "equilibrium"

    def __post_init__(self):
        if self.separation not in ("cohesive", "jump"):
            raise ValueError("separation must be 'cohesive' or 'jump'")
        if self.failure not in ("equilibrium", "immediate"):
            raise ValueError("failure must be 'equilibrium' or 'immediate'")
        if not self.tol_rel > 0:
            raise ValueError("tol_rel must be positive")
        if not self.tol_coupling > 0:
            raise ValueError("tol_coupling must be positive")
        if not 0 < self.relaxation <= 1:
            raise ValueError("relaxation must be in (0, 1]")
        if self.anderson_depth < 0:
            raise ValueError("anderson_depth must be >= 0")
        if self.max_iter < 1 or self.max_bisections < 0:
            raise ValueError("max_iter >= 1 and max_bisections >= 0 required")


@dataclass
class StepResult:
    step: int
    delta: float
    u: np.ndarray
    reaction: np.ndarray
    failed_faces: np.ndarray
    iterations: int
    converged: bool
    lam_max: np.ndarray | None = None
    dissipated: float = 0.0


@dataclass
class _Coupling:
    """Face-frame interface stiffness used in the last solve."""

    s_n: np.ndarray
    s_t: np.ndarray
    act_n: np.ndarray
    act_t: np.ndarray

    def same_as(self, other: "_Coupling", rtol: float = 0.0) -> bool:
        return (np.array_equal(self.act_n, other.act_n) and np.array_equal(self.act_t, other.act_t)
                and np.allclose(self.s_n, other.s_n, rtol=rtol, atol=0)
                and np.allclose(self.s_t, other.s_t, rtol=rtol, atol=0))


class QuasiStaticSolver:
    """Drives one scenario through a displacement schedule.

    ``loads_at(delta)`` returns the :class:`Loads` for a prescribed
    displacement level. ``params=None`` keeps every face rigid, which gives
    the linear DG elasticity response.
    """

    def __init__(self, op: DGOperator, loads_at: Callable[[float], Loads],
                 params: coh.CohesiveParams | None = None, reaction_tag: int | None = None,
                 prefailed: Sequence[int] = (), settings: NonlinearSettings = NonlinearSettings()):
        if params is not None and params.secant_variant != "diagonal":
            raise ValueError("only the diagonal secant keeps the system symmetric; "
                             "cross_terms is available for law comparison only")
        self.op = op
        self.loads_at = loads_at
        self.params = params
        self.reaction_tag = reaction_tag
        self.settings = settings
        nf = len(op.interior.ids)
        # pre-failed faces are addressed by mesh face id
        pos = np.searchsorted(op.interior.ids, np.asarray(list(prefailed), dtype=np.int64))
        if len(pos) and not np.array_equal(op.interior.ids[np.minimum(pos, nf - 1)],
                                           np.asarray(list(prefailed))):
            raise ValueError("pre-failed faces must be interior faces")
        self.state = coh.FaceState.fresh(nf, pos)
        self.dissipation = np.zeros(nf)
        self.delta = 0.0
        self.u = np.zeros(op.ndof)
        self.coupling = self._rigid_coupling()
        self._pin = 1e-10 * float(np.abs(op.Ke).max())
        self.step_count = 0
        self._linear = _FaceUpdateSolver(op, self._assemble, self._pins)

    # -- face coupling ------------------------------------------------------

    def _rigid_coupling(self) -> _Coupling:
        eps = self.op.interior.eps
        ones = np.ones(len(eps), dtype=bool)
        return _Coupling(1.0 / eps, 1.0 / eps, ones, ones.copy())

    def _augmented(self, u):
        """Face jumps ``(d_n, d_t)`` and ``p = delta + eps <sigma n>`` in the face frame."""
        op = self.op
        eps = op.interior.eps
        ids = op.interior.ids
        d_n, d_t = op.separations(u)
        sig = np.einsum("fim,fm->fi", op.interior.Sig, u[op.interior.dofs])
        p_n = d_n + eps * np.einsum("fi,fi->f", sig, op.mesh.normal[ids])
        p_t = d_t + eps * np.einsum("fi,fi->f", sig, op.mesh.tangent[ids])
        return d_n, d_t, p_n, p_t

    def _separations(self, u, c: _Coupling):
        """Face-frame separations fed to the law, closed-normal flags and tractions.

        ``p = delta + eps <sigma n>`` is ``eps`` times the numerical traction
        a rigid face would carry. With ``y = eps s`` the numerical traction
        is ``s p`` and the compliant part of the jump is ``(1 - y) p``; the
        remainder of the jump is the Nitsche penalty residual, which vanishes
        under refinement and is not a crack opening.
        """
        eps = self.op.interior.eps
        d_n, d_t, p_n, p_t = self._augmented(u)
        y_n = np.where(c.act_n, eps * c.s_n, 0.0)
        y_t = np.where(c.act_t, eps * c.s_t, 0.0)
        y_n, y_t = np.where(y_n >= RIGID_Y, 1.0, y_n), np.where(y_t >= RIGID_Y, 1.0, y_t)
        # a face is closed when the Nitsche-augmented pressure is compressive;
        # this is far less jittery than the sign of the jump alone. The small
        # offset keeps unloaded faces from flipping with the sign of roundoff.
        closed = p_n < (0.0 if self.params is None else -CLOSED_TOL * self.params.u_nc)
        trac = (y_n * p_n / eps, y_t * p_t / eps)
        if self.settings.separation == "jump":
            return d_n, d_t, closed, trac
        return (1.0 - y_n) * p_n, (1.0 - y_t) * p_t, closed, trac

    def _initiation(self, u_n, u_t, closed, trac, state):
        """Seed separations on rigid faces whose traction reaches the strength.

        A rigid face has no compliant jump, so the law alone would keep it
        rigid for ever. Where the quadratic traction criterion is exceeded by
        a factor ``f``, the face starts from the compliance ``(f - 1) a``
        that brings the traction back to the strength if the surroundings
        have compliance ``a``; ``a = gamma0 eps = h_F / (2 mu + 3 lam)`` is
        the compliance of the neighbouring elements. The secant iteration
        corrects the guess.
        """
        params = self.params
        eps = self.op.interior.eps
        lam = coh.effective_separation(np.where(closed, 0.0, u_n), u_t, params)
        rigid = ~state.failed & (state.lam_max <= coh.RIGID_LAMBDA) & (lam <= coh.RIGID_LAMBDA)
        T_n = np.maximum(trac[0], 0.0)
        T_t = trac[1]
        f = np.hypot(T_n / params.normal.sigma_max, T_t / params.tangential.sigma_max)
        go = rigid & (f >= 1.0)
        if not go.any():
            return u_n, u_t
        k = self.op.gamma0 * eps * (f - 1.0)
        seed_n, seed_t = k * T_n, k * T_t
        # keep the seed clear of the rigid threshold
        floor = 10 * coh.RIGID_LAMBDA
        scale = np.maximum(1.0, floor / np.maximum(
            coh.effective_separation(seed_n, seed_t, params), 1e-300))
        scale = np.where(coh.effective_separation(seed_n, seed_t, params) > 0, scale, 1.0)
        seed_n = seed_n * scale
        seed_t = seed_t * scale
        return np.where(go, seed_n, u_n), np.where(go, seed_t, u_t)

    def _local_equilibrium(self, p_n, p_t, closed, state):
        """Separations that balance each face on its own, for equal pure modes.

        The face equilibrium ``delta + eps t(delta) = p`` has a unique root
        because ``eps sigma_max < u_c``. Equal pure-mode laws make the law
        isotropic in ``(u_n, u_t)``, so the root lies along ``p`` and its
        length solves a piecewise-linear scalar equation. A rigid face stays
        rigid while ``|p| <= eps sigma_max``, which is the traction criterion.
        At a fixed point this is the same separation as ``(1 - y) p``; away
        from one it avoids the slow creep of the plain secant update near
        initiation.
        """
        eps = self.op.interior.eps
        sig, uc = self.params.normal.sigma_max, self.params.normal.u_c
        p_n = np.where(closed, 0.0, p_n)
        q = np.hypot(p_n, p_t)
        # the law's rigid threshold also marks a face without history
        r_max = np.where(state.lam_max > coh.RIGID_LAMBDA, state.lam_max * uc, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            k_un = sig * (1.0 - state.lam_max) / r_max
            r = q / (1.0 + eps * k_un)
        loading = ~((r_max > 0) & (r <= r_max))
        r_load = (q - eps * sig) / (1.0 - eps * sig / uc)
        r = np.where(loading, np.clip(r_load, 0.0, None), r)
        r = np.where(loading & (r_load >= uc), q, r)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(q > 0, r / q, 0.0)
        return scale * p_n, scale * p_t

    def _coupling_for(self, u, state, c: _Coupling) -> _Coupling:
        eps = self.op.interior.eps
        if self.params is None:
            return self._rigid_coupling()
        u_n, u_t, closed, trac = self._separations(u, c)
        if self.settings.separation == "cohesive":
            if self.params.normal == self.params.tangential:
                _, _, p_n, p_t = self._augmented(u)
                u_n, u_t = self._local_equilibrium(p_n, p_t, closed, state)
            else:
                u_n, u_t = self._initiation(u_n, u_t, closed, trac, state)
        contact = closed & state.failed
        k_n, k_t = coh.secant_compliance_diag(u_n, u_t, state.lam_max, state.failed, self.params,
                                              compress=closed)
        k_n = np.where(contact, 0.0, k_n)
        s_n, s_t = coh.interface_stiffness_diag(k_n, k_t, eps)
        act_n = ~state.failed | contact
        act_t = ~state.failed
        return _Coupling(s_n, s_t, act_n, act_t)

    def _assemble(self, c: _Coupling):
        S, P = self.op.stiffness_from_frame(c.s_n, c.s_t, c.act_n, c.act_t)
        A = self.op.matrix(S, P)
        loose = self._pins(c)
        if len(loose):
            # fragments cut free by the crack carry no load; pin them softly
            A = A + sp.csr_matrix((np.full(len(loose), self._pin), (loose, loose)), shape=A.shape)
        return A

    def _pins(self, c: _Coupling) -> np.ndarray:
        # contact-only or vanishing coupling leaves sliding and rotation free
        eps = self.op.interior.eps
        holds = c.act_n & c.act_t & (eps * c.s_n > 1e-9) & (eps * c.s_t > 1e-9)
        return self._floating_dofs(holds)

    def _floating_dofs(self, coupled: np.ndarray) -> np.ndarray:
        """Dofs of element groups with no coupled path to a Dirichlet face."""
        key = coupled.tobytes()
        if getattr(self, "_float_key", None) == key:
            return self._float_dofs
        mesh = self.op.mesh
        nt = mesh.n_triangles
        ids = self.op.interior.ids[coupled]
        g = sp.coo_matrix((np.ones(len(ids)), (mesh.plus_elem[ids], mesh.minus_elem[ids])),
                          shape=(nt, nt))
        _, labels = connected_components(g, directed=False)
        held = np.unique(labels[mesh.plus_elem[self.op.dirichlet.ids]])
        loose = np.flatnonzero(~np.isin(labels, held))
        self._float_key = key
        self._float_dofs = (6 * loose[:, None] + np.arange(6)).ravel()
        if len(loose):
            log.info("%d element(s) detached from the supports", len(loose))
        return self._float_dofs

    # -- stepping -----------------------------------------------------------

    def load_step(self, delta: float) -> StepResult:
        """Advance to ``delta``; bisects the increment on non-convergence."""
        start = self.delta
        res = self._attempt(delta)
        if res.converged:
            return self._commit(res)
        for level in range(1, self.settings.max_bisections + 1):
            n = 2 ** level
            log.info("step to %.6g did not converge; bisecting into %d sub-steps", delta, n)
            saved = (self.delta, self.u, self.coupling, self.state, self.dissipation)
            ok = True
            for k in range(1, n + 1):
                sub = start + (delta - start) * k / n
                r = self._attempt(sub)
                if not r.converged:
                    ok = False
                    break
                self._commit(r, final=(k == n))
            if ok:
                return r
            self.delta, self.u, self.coupling, self.state, self.dissipation = saved
        raise StepFailure(
            f"load step to delta={delta:.6g} failed after {self.settings.max_bisections} "
            f"bisections ({res.iterations} iterations at full increment)", res)

    def _attempt(self, delta: float) -> StepResult:
        s = self.settings
        loads = self.loads_at(delta)
        b = self.op.rhs(loads)
        c = self.coupling
        state = self.state
        mixer = _Anderson(s.anderson_depth, s.relaxation)
        u = self.u
        u_prev = older = None
        du_prev = 0.0
        converged = False
        it = budget = 0
        while budget < s.max_iter:
            it += 1
            budget += 1
            u = self._linear.solve(c, b)
            if self.params is None:
                converged = True
                break
            u_n, u_t, closed, _ = self._separations(u, c)
            lam = coh.trial_lambda(np.where(closed, 0.0, u_n), u_t, self.params)
            over = np.where(state.failed, -np.inf, lam)
            worst = int(np.argmax(over)) if len(over) else -1
            breaking = worst >= 0 and over[worst] >= 1.0
            if breaking and s.failure == "immediate":
                state, c = self._fail(worst, lam, u, state, c, delta, it)
                mixer.reset()
                u_prev = older = None
                du_prev = 0.0
                budget = 0
                continue
            new = self._coupling_for(u, state, c)
            eps = self.op.interior.eps
            res_y = max(np.abs(eps * (new.s_n - c.s_n)).max(initial=0.0),
                        np.abs(eps * (new.s_t - c.s_t)).max(initial=0.0))
            log.debug("delta=%.6g iteration %d: coupling residual %.3e", delta, it, res_y)
            done = new.same_as(c, rtol=1e-12)
            if u_prev is not None:
                du = np.linalg.norm(u - u_prev)
                # a slowly contracting iteration takes small steps long before
                # it is done; scale by the observed rate
                rho = min(du / du_prev, 0.99) if du_prev else 0.0
                du_prev = du
                # a stalled iterate also stops moving, so the coupling must agree too
                done = done or (res_y <= s.tol_coupling and du / (1.0 - rho)
                                <= s.tol_rel * max(np.linalg.norm(u), 1e-300))
            if done and breaking:
                # failure is irreversible within the step too, so unstable growth
                # under displacement control runs through to the cracked state;
                # one face at a time, each from an equilibrium
                state, c = self._fail(worst, lam, u, state, c, delta, it)
                mixer.reset()
                u_prev = older = None
                du_prev = 0.0
                budget = 0
                continue
            if done:
                converged = True
                break
            if older is not None and new.same_as(older):
                # a plain update that returns to the iterate before last is
                # stuck on a switch; leave it to bisection
                log.info("delta=%.6g iteration %d: update cycles, giving up", delta, it)
                break
            older = c
            c = self._mix(mixer, c, new)
            u_prev = u
        if converged:
            # report a direct solve of the final system, not the updated one
            u = self._linear.solve(c, b, exact=True)
        self._trial = (u, c, state)
        return StepResult(self.step_count + 1, delta, u, self._reaction(u, loads),
                          self.op.interior.ids[np.flatnonzero(state.failed)], it, converged)

    def _fail(self, k, lam, u, state, c, delta, it):
        broke = np.zeros(len(lam), dtype=bool)
        broke[k] = True
        state = coh.FaceState(np.where(broke, lam, state.lam_max), state.failed | broke, state.prefailed)
        log.debug("delta=%.6g iteration %d: face %d failed", delta, it, self.op.interior.ids[k])
        return state, self._coupling_for(u, state, c)

    def _mix(self, mixer: "_Anderson", old: _Coupling, new: _Coupling) -> _Coupling:
        """Next face stiffness from the Picard update ``new`` of ``old``.

        Works on ``y = eps * s`` in [0, 1]. A change of active directions
        (contact, failure) or of the set of rigid faces restarts the mixing
        history. Components the mixed step would push out of [0, 1] take
        the plain Picard value instead.
        """
        eps = self.op.interior.eps
        x = np.concatenate([old.s_n * eps, old.s_t * eps])
        g = np.concatenate([new.s_n * eps, new.s_t * eps])
        rigid_x, rigid_g = x >= RIGID_Y, g >= RIGID_Y
        if not (np.array_equal(old.act_n, new.act_n) and np.array_equal(old.act_t, new.act_t)
                and np.array_equal(rigid_x, rigid_g)):
            mixer.reset()
        y = mixer.update(x, g)
        out = (y < 0.0) | (y > 1.0) | rigid_g
        y[out] = g[out]
        if np.array_equal(y, x):
            mixer.reset()
            y = g
        nf = len(eps)
        return _Coupling(y[:nf] / eps, y[nf:] / eps, new.act_n, new.act_t)

    def _reaction(self, u, loads):
        if self.reaction_tag is None:
            return np.zeros(2)
        return self.op.reaction(u, loads, self.reaction_tag)

    def _commit(self, res: StepResult, final: bool = True) -> StepResult:
        u, c, state = self._trial
        if self.params is not None:
            u_n, u_t, closed, _ = self._separations(u, c)
            u_n = np.where(closed, 0.0, u_n)
            lam = coh.trial_lambda(u_n, u_t, self.params)
            grown = (lam > self.state.lam_max) | (state.failed & ~self.state.failed)
            self.state = coh.update_state(state, lam)
            phi = np.nan_to_num(coh.mode_mix(u_n, u_t, self.params), nan=np.pi / 2)
            d = coh.dissipated_energy(self.state.lam_max, phi, self.params) * self.op.mesh.length[
                self.op.interior.ids]
            self.dissipation = np.where(grown, np.maximum(self.dissipation, d), self.dissipation)
            c = self._coupling_for(u, self.state, c)
        self.coupling = c
        self.u = u
        self.delta = res.delta
        if final:
            self.step_count += 1
        res.step = self.step_count
        res.failed_faces = self.op.interior.ids[np.flatnonzero(self.state.failed)]
        res.lam_max = self.state.lam_max.copy()
        res.dissipated = float(self.dissipation.sum())
        return res

    def run(self, schedule: Sequence[float], on_step: Callable[[StepResult], None] | None = None
            ) -> list[StepResult]:
        """Run every level of ``schedule``; stops at the first failed step.

        The failed step, if any, is appended with ``converged=False``.
        """
        sched = list(schedule)
        if any(b < a for a, b in zip(sched, sched[1:])):
            raise ValueError("load schedule must be non-decreasing")
        out = []
        for d in sched:
            try:
                r = self.load_step(d)
            except StepFailure as err:
                log.error("%s", err)
                r = err.result
                r.step = self.step_count + 1
                out.append(r)
                if on_step:
                    on_step(r)
                break
            out.append(r)
            if on_step:
                on_step(r)
        return out
