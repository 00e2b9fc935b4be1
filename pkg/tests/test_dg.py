import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from czdg.dg import DGOperator, Dirichlet, Loads, element_dofs, reference_face_matrix
from czdg.material import IsotropicElastic, MaterialField
from czdg.mesh import (BOTTOM, DIRICHLET, LEFT, NEUMANN, RIGHT, TOP, Mesh, build_faces,
                       generate_rect)
from czdg.solver import linear_solve
from czdg.verification import interface_patch, sipg_reference_matrix

ALL_DIRICHLET = {t: DIRICHLET for t in (BOTTOM, RIGHT, TOP, LEFT)}
MAT = IsotropicElastic(10.0, 0.3)


def asym(A):
    A = sp.csr_matrix(A)
    return abs(A - A.T).max() / abs(A).max()


def right_triangle():
    return build_faces([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]], [1, 1, 1])


def test_dof_layout():
    np.testing.assert_array_equal(element_dofs(np.array([2])), [[12, 13, 14, 15, 16, 17]])
    op = DGOperator(generate_rect(1, 1, 2, 2), MAT)
    assert op.ndof == 6 * 8


def test_single_element_rigid_modes():
    op = DGOperator(right_triangle(), MAT)
    K = op.Ke[0]
    x = op.mesh.nodes[op.mesh.triangles[0]]
    tx = np.tile([1.0, 0.0], 3)
    ty = np.tile([0.0, 1.0], 3)
    rot = np.column_stack([-x[:, 1], x[:, 0]]).ravel()
    for v in (tx, ty, rot):
        assert abs(v @ K @ v) < 1e-12
    ev = np.linalg.eigvalsh(K)
    assert np.sum(np.abs(ev) < 1e-10 * ev.max()) == 3
    assert ev.min() > -1e-12


def test_unit_right_triangle_block_trace():
    # E=1, nu=0: lam=0, mu=1/2; trace = A * 1.5 * sum |grad N|^2 = 0.5 * 1.5 * 4
    op = DGOperator(right_triangle(), IsotropicElastic(1.0, 0.0))
    assert np.trace(op.Ke[0]) == pytest.approx(3.0, rel=1e-14)


@pytest.mark.parametrize("crossed", [False, True])
@pytest.mark.parametrize("n", [2, 4, 6])
def test_dirichlet_system_symmetric_and_spd(n, crossed):
    m = generate_rect(1.0, 1.0, n, n, crossed=crossed, boundary_kinds=ALL_DIRICHLET)
    A = DGOperator(m, MAT, 10.0).matrix()
    assert asym(A) <= 1e-12
    if A.shape[0] <= 300:
        assert np.linalg.eigvalsh(A.toarray()).min() > 0
    np.linalg.cholesky(A.toarray())


def test_simplified_face_form_matches_term_by_term_form():
    m = generate_rect(1.0, 1.0, 2, 2, crossed=True, boundary_kinds=ALL_DIRICHLET)
    op = DGOperator(m, MAT, 10.0)
    blk = op.interior
    rng = np.random.default_rng(4)
    L = rng.normal(size=(len(blk.ids), 2, 2)) * 0.01
    K = L @ L.transpose(0, 2, 1)
    S, P = op.stiffness_from_compliance(K)
    M = op._face_values(blk, S, P)
    for f in range(len(blk.ids)):
        R = reference_face_matrix(blk.J[f], blk.Sig[f], K[f], S[f], blk.w[f])
        np.testing.assert_allclose(M[f], 0.5 * (R + R.T), atol=1e-10 * np.abs(R).max())


def test_sipg_equivalence():
    kinds = dict(ALL_DIRICHLET)
    kinds[RIGHT] = NEUMANN
    m = generate_rect(1.0, 1.0, 5, 5, boundary_kinds=kinds)
    assert m.n_triangles <= 100
    A = DGOperator(m, MAT, 10.0).matrix().toarray()
    assert np.abs(A - sipg_reference_matrix(m, MAT, 10.0)).max() <= 1e-12


def test_all_faces_failed_gives_volume_matrix():
    m = generate_rect(1.0, 1.0, 3, 3)  # all Neumann, no Dirichlet faces
    op = DGOperator(m, MAT)
    nf = len(op.interior.ids)
    S, P = op.stiffness_from_frame(np.zeros(nf), np.zeros(nf), np.zeros(nf, bool), np.zeros(nf, bool))
    diff = op.matrix(S, P) - op.volume_matrix()
    assert abs(diff).max() <= 1e-12 * abs(op.volume_matrix()).max()


def relabel(mesh: Mesh) -> tuple[Mesh, np.ndarray]:
    """Reverse triangle numbering so every interior face swaps plus and minus."""
    perm = np.arange(mesh.n_triangles)[::-1]
    m2 = Mesh(mesh.nodes, mesh.triangles[perm], mesh.region[perm], mesh.boundary_edges,
              mesh.boundary_edge_tags, mesh.boundary_kinds)
    return m2, element_dofs(perm).ravel()


def test_normal_flip_invariance():
    m = generate_rect(1.0, 1.0, 3, 3, [(lambda p: p[:, 0] > 0.5, 1)], crossed=True,
                      boundary_kinds={BOTTOM: DIRICHLET, TOP: DIRICHLET})
    mats = MaterialField({0: MAT, 1: IsotropicElastic(100.0, 0.2)})
    m2, dofs = relabel(m)
    op1, op2 = DGOperator(m, mats), DGOperator(m2, mats)
    # a constant global-frame compliance is invariant under n -> -n
    K = np.array([[0.003, 0.001], [0.001, 0.002]])
    A1 = op1.matrix(*op1.stiffness_from_compliance(np.broadcast_to(K, (len(op1.interior.ids), 2, 2))))
    A2 = op2.matrix(*op2.stiffness_from_compliance(np.broadcast_to(K, (len(op2.interior.ids), 2, 2))))
    A1 = A1.toarray()[np.ix_(dofs, dofs)]
    assert np.abs(A1 - A2.toarray()).max() <= 1e-12 * np.abs(A1).max()
    # and the plus/minus roles really did swap
    f1 = op1.interior.ids[0]
    c1 = m.face_midpoints()[f1]
    f2 = np.flatnonzero(np.all(np.isclose(m2.face_midpoints(), c1), axis=1))[0]
    np.testing.assert_allclose(m.normal[f1], -m2.normal[f2])


def test_rhs_zero_data():
    m = generate_rect(1.0, 1.0, 2, 2, boundary_kinds=ALL_DIRICHLET)
    op = DGOperator(m, MAT)
    loads = Loads(dirichlet={t: Dirichlet((0.0, 0.0)) for t in ALL_DIRICHLET})
    assert not np.any(op.rhs(loads))


def test_uniform_edge_traction_splits_equally():
    m = build_faces([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]], [1, 2, 3])
    op = DGOperator(m, MAT)
    b = op.rhs(Loads(traction={1: (0.3, -0.7)}))
    np.testing.assert_allclose(b, [0.15, -0.35, 0.15, -0.35, 0, 0], atol=1e-15)


def test_missing_dirichlet_data_rejected():
    m = generate_rect(1.0, 1.0, 2, 2, boundary_kinds=ALL_DIRICHLET)
    with pytest.raises(KeyError, match="no Dirichlet data"):
        DGOperator(m, MAT).rhs(Loads(dirichlet={BOTTOM: Dirichlet()}))


@settings(max_examples=15, deadline=None)
@given(g=st.lists(st.floats(-1, 1), min_size=6, max_size=6), crossed=st.booleans())
def test_affine_boundary_data_reproduced(g, crossed):
    G = np.array(g[:4]).reshape(2, 2)
    c = np.array(g[4:])
    exact = lambda x: x @ G.T + c
    m = generate_rect(1.0, 1.0, 3, 3, crossed=crossed, boundary_kinds=ALL_DIRICHLET)
    op = DGOperator(m, MAT)
    loads = Loads(dirichlet={t: Dirichlet(exact) for t in ALL_DIRICHLET})
    u = linear_solve(op.matrix(), op.rhs(loads))
    ue = exact(m.nodes[m.triangles].reshape(-1, 2)).ravel()
    assert np.abs(u - ue).max() <= 1e-10 * max(1.0, np.abs(ue).max())


def test_interface_patch_jump_and_reaction():
    r = interface_patch()
    assert r["jump_rel_err"] <= 1e-8
    assert r["disp_rel_err"] <= 1e-10
    assert r["sliding"] <= 1e-12
    assert r["reaction_left"][0] == pytest.approx(-1.0, abs=1e-10)
    assert r["asymmetry"] <= 1e-12


def test_reaction_zero_and_sign():
    m = generate_rect(1.0, 1.0, 2, 2, boundary_kinds={BOTTOM: DIRICHLET, TOP: DIRICHLET})
    op = DGOperator(m, MAT)
    loads = lambda d: Loads(dirichlet={BOTTOM: Dirichlet((0.0, 0.0)), TOP: Dirichlet((0.0, d))})
    u0 = linear_solve(op.matrix(), op.rhs(loads(0.0)))
    np.testing.assert_array_equal(op.reaction(u0, loads(0.0), TOP), 0)
    u = linear_solve(op.matrix(), op.rhs(loads(0.01)))
    assert op.reaction(u, loads(0.01), TOP)[1] > 0
    # equilibrium: the two supports balance
    np.testing.assert_allclose(op.reaction(u, loads(0.01), TOP),
                               -op.reaction(u, loads(0.01), BOTTOM), atol=1e-12)
    with pytest.raises(KeyError):
        op.reaction(u, loads(0.01), LEFT)


def test_separation_sign_convention():
    m = generate_rect(2.0, 1.0, 2, 1)
    op = DGOperator(m, MAT)
    # pull the right column of elements away by 0.1 in x
    right = m.centroids()[:, 0] > 1.0
    u = np.zeros(op.ndof).reshape(-1, 3, 2)
    u[right, :, 0] = 0.1
    u_n, u_t = op.separations(u.ravel())
    mid = m.face_midpoints()[op.interior.ids]
    on = np.isclose(mid[:, 0], 1.0)
    np.testing.assert_allclose(u_n[on], 0.1)
    np.testing.assert_allclose(u_t[on], 0.0, atol=1e-15)
    np.testing.assert_allclose(u_n[~on], 0.0, atol=1e-15)


def test_threaded_assembly_matches_serial():
    m = generate_rect(1.0, 2.0, 16, 32, crossed=True, boundary_kinds=ALL_DIRICHLET)
    a = DGOperator(m, MAT, threads=1).matrix()
    b = DGOperator(m, MAT, threads=3).matrix()
    assert abs(a - b).max() == 0.0


def test_von_mises_uniaxial():
    m = generate_rect(1.0, 1.0, 1, 1)
    op = DGOperator(m, IsotropicElastic(1.0, 0.0))
    x = m.nodes[m.triangles].reshape(-1, 2)
    u = np.column_stack([0.01 * x[:, 0], 0 * x[:, 1]]).ravel()
    # nu = 0: sigma_xx = E eps, everything else zero
    np.testing.assert_allclose(op.von_mises(u), 0.01, rtol=1e-12)
    assert op.energy(u) == pytest.approx(0.5 * 0.01 ** 2, rel=1e-12)


def test_gamma0_must_be_positive():
    with pytest.raises(ValueError):
        DGOperator(generate_rect(1, 1, 1, 1), MAT, 0.0)
