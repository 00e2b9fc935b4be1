"""Verification suites with machine-readable reports.

Each suite returns a dict ``{"suite", "passed", "checks": [...]}`` where every
check records the measured value, its threshold and whether it passed.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import cohesive as coh
from .dg import DGOperator, Dirichlet, Loads, element_dofs, energy_error, l2_error
from .material import IsotropicElastic
from .mesh import BOTTOM, DIRICHLET, INTERIOR, LEFT, NEUMANN, RIGHT, TOP, Mesh, generate_rect
from .solver import NonlinearSettings, QuasiStaticSolver, linear_solve

SUITES = ("patch", "convergence", "limits", "cohesive-grad")


def _check(name: str, value: float, threshold: float, passed: bool, **extra) -> dict:
    return {"name": name, "value": float(value), "threshold": float(threshold),
            "passed": bool(passed), **extra}


def _report(suite: str, checks: list[dict]) -> dict:
    return {"suite": suite, "passed": all(c["passed"] for c in checks), "checks": checks}


# ---------------------------------------------------------------------------
# patch test


def interface_patch(beta: float = 0.01, sigma0: float = 1.0, E: float = 1.0, nu: float = 0.3,
                    n: int = 4, gamma0: float = 10.0) -> dict:
    """Bar in uniaxial tension cut by a vertical interface column at x = 1/2.

    Left edge is a roller in x, bottom a roller in y, the right edge carries
    ``sigma0``. Faces on x = 1/2 get the constant compliance ``beta * I``,
    so the exact field is affine on both halves with an opening of
    ``beta * sigma0`` between them.
    """
    if n % 2:
        raise ValueError("n must be even so that x = 1/2 is a mesh line")
    kinds = {LEFT: DIRICHLET, BOTTOM: DIRICHLET, RIGHT: NEUMANN, TOP: NEUMANN}
    mesh = generate_rect(1.0, 1.0, n, n, crossed=True, boundary_kinds=kinds)
    mat = IsotropicElastic(E, nu)
    op = DGOperator(mesh, mat, gamma0, dirichlet_masks={LEFT: (True, False), BOTTOM: (False, True)})
    ids = op.interior.ids
    mid = mesh.face_midpoints()[ids]
    on_line = (np.abs(mid[:, 0] - 0.5) < 1e-12) & (np.abs(mesh.normal[ids, 0]) > 1 - 1e-12)
    K = np.zeros((len(ids), 2, 2))
    K[on_line] = beta * np.eye(2)
    S, P = op.stiffness_from_compliance(K)
    A = op.matrix(S, P)
    loads = Loads(traction={RIGHT: (sigma0, 0.0)},
                  dirichlet={LEFT: Dirichlet((0.0, 0.0), (True, False)),
                             BOTTOM: Dirichlet((0.0, 0.0), (False, True))})
    u = linear_solve(A, op.rhs(loads))

    u_n, u_t = op.separations(u)
    # opening measured left to right whichever side owns the normal
    opening = u_n[on_line]
    e_xx = (1 - nu ** 2) / E * sigma0
    e_yy = -nu * (1 + nu) / E * sigma0
    x = mesh.nodes[mesh.triangles]
    right = x[:, :, 0].mean(axis=1) > 0.5
    exact = np.stack([e_xx * x[..., 0] + beta * sigma0 * right[:, None], e_yy * x[..., 1]], axis=-1)
    disp_err = np.abs(u.reshape(-1, 3, 2) - exact).max() / np.abs(exact).max()
    jump_err = np.abs(opening - beta * sigma0).max() / (beta * sigma0)
    asym = abs(A - A.T).max() / abs(A).max()
    return dict(mesh=mesh, op=op, u=u, opening=opening, jump_rel_err=float(jump_err),
                sliding=float(np.abs(u_t[on_line]).max()), disp_rel_err=float(disp_err),
                reaction_left=op.reaction(u, loads, LEFT), asymmetry=float(asym))


def suite_patch(tol: float = 1e-10) -> dict:
    r = interface_patch()
    return _report("patch", [
        _check("interface_opening_rel_err", r["jump_rel_err"], tol, r["jump_rel_err"] <= tol),
        _check("affine_field_rel_err", r["disp_rel_err"], 1e-8, r["disp_rel_err"] <= 1e-8),
        _check("left_reaction_x", r["reaction_left"][0], -1.0,
               abs(r["reaction_left"][0] + 1.0) <= 1e-8),
    ])


# ---------------------------------------------------------------------------
# manufactured solution


def manufactured(mat: IsotropicElastic):
    """``u = (1, 1) sin(pi x) sin(pi y)`` on the unit square and its body force."""
    lam, mu = mat.lam, mat.mu
    pi = math.pi

    def u(p):
        s = np.sin(pi * p[:, 0]) * np.sin(pi * p[:, 1])
        return np.column_stack([s, s])

    def grad(p):
        x, y = p[:, 0], p[:, 1]
        gx = pi * np.cos(pi * x) * np.sin(pi * y)
        gy = pi * np.sin(pi * x) * np.cos(pi * y)
        return np.stack([np.column_stack([gx, gy]), np.column_stack([gx, gy])], axis=1)

    def body(p):
        x, y = p[:, 0], p[:, 1]
        ss = np.sin(pi * x) * np.sin(pi * y)
        cc = np.cos(pi * x) * np.cos(pi * y)
        # div sigma = (lam + mu) grad div u + mu lap u
        gdiv = pi ** 2 * (cc - ss)
        lap = -2 * pi ** 2 * ss
        f = -((lam + mu) * gdiv + mu * lap)
        return np.column_stack([f, f])

    return u, grad, body


def convergence_study(levels=(4, 8, 16, 32), E: float = 1.0, nu: float = 0.3,
                      gamma0: float = 10.0) -> dict:
    """Errors and observed rates for the manufactured solution with rigid faces."""
    mat = IsotropicElastic(E, nu)
    u_ex, grad_ex, body = manufactured(mat)
    kinds = {t: DIRICHLET for t in (BOTTOM, RIGHT, TOP, LEFT)}
    h, eL2, eE = [], [], []
    for n in levels:
        mesh = generate_rect(1.0, 1.0, n, n, crossed=False, boundary_kinds=kinds)
        op = DGOperator(mesh, mat, gamma0)
        loads = Loads(body=body, dirichlet={t: Dirichlet((0.0, 0.0)) for t in kinds})
        u = linear_solve(op.matrix(), op.rhs(loads))
        h.append(1.0 / n)
        eL2.append(l2_error(mesh, u, u_ex))
        eE.append(energy_error(op, u, grad_ex))
    h, eL2, eE = map(np.asarray, (h, eL2, eE))
    rate = lambda e: np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])
    return dict(h=h, l2=eL2, energy=eE, l2_rates=rate(eL2), energy_rates=rate(eE))


def suite_convergence() -> dict:
    r = convergence_study()
    l2, en = r["l2_rates"][-1], r["energy_rates"][-1]
    return _report("convergence", [
        _check("l2_rate", l2, 1.9, l2 >= 1.9, rates=r["l2_rates"].tolist(),
               errors=r["l2"].tolist()),
        _check("energy_rate", en, 0.9, en >= 0.9, rates=r["energy_rates"].tolist(),
               errors=r["energy"].tolist()),
    ])


# ---------------------------------------------------------------------------
# limits


def sipg_reference_matrix(mesh: Mesh, mat: IsotropicElastic, gamma0: float) -> np.ndarray:
    """Dense symmetric interior-penalty matrix assembled face by face.

    Written independently of :class:`DGOperator`: textbook SIPG with
    two-point Gauss quadrature, penalty ``gamma / h_F`` and Dirichlet faces
    treated as faces with a zero exterior.
    """
    D = mat.voigt()
    gamma = gamma0 * mat.penalty_scale()
    nt = mesh.n_triangles
    A = np.zeros((6 * nt, 6 * nt))

    def basis(e):
        X = mesh.nodes[mesh.triangles[e]]
        M = np.column_stack([np.ones(3), X])
        C = np.linalg.inv(M)  # phi_k = C[0,k] + C[1,k] x + C[2,k] y
        B = np.zeros((3, 6))
        for k in range(3):
            dx, dy = C[1, k], C[2, k]
            B[:, 2 * k:2 * k + 2] = [[dx, 0], [0, dy], [dy, dx]]
        return C, B

    def values(e, p):
        C, _ = basis(e)
        phi = C[0] + C[1] * p[0] + C[2] * p[1]
        N = np.zeros((2, 6))
        N[0, 0::2] = phi
        N[1, 1::2] = phi
        return N

    for e in range(nt):
        _, B = basis(e)
        dofs = element_dofs(e)
        A[np.ix_(dofs, dofs)] += mesh.area[e] * B.T @ D @ B

    g = 0.5 / math.sqrt(3.0)
    for f in range(mesh.n_faces):
        kind = mesh.kind[f]
        if kind == NEUMANN:
            continue
        a, b = mesh.nodes[mesh.face_nodes[f]]
        n = mesh.normal[f]
        L = mesh.length[f]
        Nn = np.array([[n[0], 0, n[1]], [0, n[1], n[0]]])
        elems = [mesh.plus_elem[f]] + ([mesh.minus_elem[f]] if kind == INTERIOR else [])
        signs = [1.0, -1.0]
        avg = 0.5 if kind == INTERIOR else 1.0
        dofs = np.concatenate([element_dofs(e) for e in elems])
        T = np.hstack([avg * Nn @ D @ basis(e)[1] for e in elems])
        pen = gamma / mesh.h_F[f]
        Af = np.zeros((len(dofs), len(dofs)))
        for xi in (0.5 - g, 0.5 + g):
            p = a + xi * (b - a)
            Jq = np.hstack([s * values(e, p) for e, s in zip(elems, signs)])
            Af += 0.5 * L * (pen * Jq.T @ Jq - Jq.T @ T - T.T @ Jq)
        A[np.ix_(dofs, dofs)] += Af
    return A


def cohesive_limit_sweep(K=((0.02, 0.005), (0.005, 0.01)), gamma: float = 100.0,
                         h=(0.1, 0.05, 0.025, 0.0125, 0.00625)) -> dict:
    """Relative distance of ``S_h = (h/gamma I + K)^-1`` from ``K^-1``."""
    K = np.asarray(K, dtype=float)
    Kinv = np.linalg.inv(K)
    h = np.asarray(h, dtype=float)
    err = np.array([np.linalg.norm(coh.interface_stiffness(K, hf, gamma) - Kinv) for hf in h])
    err /= np.linalg.norm(Kinv)
    slope = np.polyfit(np.log(h), np.log(err), 1)[0]
    return dict(h=h, err=err, slope=float(slope))


def sipg_difference(n: int = 5, gamma0: float = 10.0) -> float:
    kinds = {t: DIRICHLET for t in (BOTTOM, RIGHT, TOP, LEFT)}
    kinds[RIGHT] = NEUMANN
    mesh = generate_rect(1.0, 1.0, n, n, boundary_kinds=kinds)
    mat = IsotropicElastic(3.0, 0.25)
    A = DGOperator(mesh, mat, gamma0).matrix().toarray()
    R = sipg_reference_matrix(mesh, mat, gamma0)
    return float(np.abs(A - R).max())


def suite_limits() -> dict:
    sweep = cohesive_limit_sweep()
    d = sipg_difference()
    return _report("limits", [
        _check("sipg_max_abs_diff", d, 1e-12, d <= 1e-12),
        _check("cohesive_limit_slope", sweep["slope"], 1.0, abs(sweep["slope"] - 1.0) <= 0.1,
               errors=sweep["err"].tolist()),
    ])


# ---------------------------------------------------------------------------
# cohesive gradient


def cohesive_gradient_error(params: coh.CohesiveParams | None = None, n: int = 20,
                            rel_step: float = 1e-6) -> float:
    """Largest relative gap between analytic tractions and central differences of Gamma."""
    params = params or coh.CohesiveParams.symmetric(1.0, 0.02)
    lam = np.linspace(0.0, 1.0, n + 2)[1:-1]
    phi = np.linspace(0.0, math.pi / 2, n + 2)[1:-1]
    L, F = np.meshgrid(lam, phi, indexing="ij")
    u_n, u_t = coh.separation_from_polar(L.ravel(), F.ravel(), params)
    t_n, t_t = coh.tractions(u_n, u_t, params=params)
    hn = rel_step * params.u_nc
    ht = rel_step * params.u_tc
    G = lambda a, b: coh.gamma_surface(coh.effective_separation(a, b, params),
                                       coh.mode_mix(a, b, params), params)
    fd_n = (G(u_n + hn, u_t) - G(u_n - hn, u_t)) / (2 * hn)
    fd_t = (G(u_n, u_t + ht) - G(u_n, u_t - ht)) / (2 * ht)
    err = np.hypot(t_n - fd_n, t_t - fd_t) / np.hypot(t_n, t_t)
    return float(err.max())


def suite_cohesive_grad(tol: float = 1e-6) -> dict:
    checks = []
    for label, p in (("symmetric", coh.CohesiveParams.symmetric(1.0, 0.02)),
                     ("unequal", coh.CohesiveParams(coh.PureModeLaw(1.0, 0.02),
                                                    coh.PureModeLaw(1.5, 0.05)))):
        e = cohesive_gradient_error(p)
        checks.append(_check(f"max_rel_err_{label}", e, tol, e <= tol))
    return _report("cohesive-grad", checks)


# ---------------------------------------------------------------------------
# single face driven to failure


def single_face_dissipation(sigma_max: float = 1.0, u_c: float = 0.02, L: float = 1.0,
                            E: float = 1000.0, steps: int = 300, gamma0: float = 10.0) -> dict:
    """Two triangles sharing one vertical face of length ``L``, pulled apart.

    The outer edges of both triangles are Dirichlet boundaries, so each
    element moves almost rigidly and the face opens in pure mode I. Returns
    the external work (trapezoid rule on reaction versus imposed
    displacement, less the elastic energy left at the end) and the solver's
    own dissipation tally.
    """
    nodes = np.array([[-L, 0.5 * L], [0.0, 0.0], [0.0, L], [L, 0.5 * L]])
    tris = np.array([[0, 1, 2], [1, 3, 2]])
    edges = np.array([[0, 1], [2, 0], [1, 3], [3, 2]])
    tags = np.array([LEFT, LEFT, RIGHT, RIGHT])
    mesh = Mesh(nodes, tris, np.zeros(2, dtype=np.int64), edges, tags,
                {LEFT: DIRICHLET, RIGHT: DIRICHLET})
    op = DGOperator(mesh, IsotropicElastic(E, 0.0), gamma0)
    params = coh.CohesiveParams.symmetric(sigma_max, u_c)

    def loads_at(d):
        return Loads(dirichlet={LEFT: Dirichlet((0.0, 0.0)), RIGHT: Dirichlet((d, 0.0))})

    solver = QuasiStaticSolver(op, loads_at, params, RIGHT,
                               settings=NonlinearSettings(max_iter=200, tol_rel=1e-10))
    deltas = np.linspace(0.0, 1.5 * u_c, steps + 1)[1:]
    R = [0.0]
    for d in deltas:
        R.append(solver.load_step(d).reaction[0])
    R = np.asarray(R)
    d = np.concatenate([[0.0], deltas])
    work = float(np.sum(0.5 * (R[1:] + R[:-1]) * np.diff(d)))
    return dict(work=work - op.energy(solver.u), tally=float(solver.dissipation.sum()),
                expected=0.5 * sigma_max * u_c * L, reaction=R, delta=d,
                failed=bool(solver.state.failed.all()))


def run_suite(name: str) -> dict:
    fn: dict[str, Callable[[], dict]] = {
        "patch": suite_patch, "convergence": suite_convergence,
        "limits": suite_limits, "cohesive-grad": suite_cohesive_grad,
    }
    if name not in fn:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return fn[name]()
