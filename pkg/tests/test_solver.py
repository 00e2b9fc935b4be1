import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from czdg.cohesive import RIGID_LAMBDA, CohesiveParams
from czdg.dg import DGOperator, Dirichlet, Loads
from czdg.material import IsotropicElastic
from czdg.mesh import BOTTOM, DIRICHLET, LEFT, RIGHT, TOP, Mesh, generate_rect
from czdg.scenarios import SenSpec, sen_materials
from czdg.solver import (IndefiniteSystemError, NonlinearSettings, QuasiStaticSolver, StepFailure,
                         linear_solve)

PARAMS = CohesiveParams.symmetric(1.0, 0.02)


def two_element_bar(E=1000.0):
    nodes = np.array([[-1.0, 0.5], [0.0, 0.0], [0.0, 1.0], [1.0, 0.5]])
    mesh = Mesh(nodes, [[0, 1, 2], [1, 3, 2]], [0, 0], [[0, 1], [2, 0], [1, 3], [3, 2]],
                [LEFT, LEFT, RIGHT, RIGHT], {LEFT: DIRICHLET, RIGHT: DIRICHLET})
    op = DGOperator(mesh, IsotropicElastic(E, 0.0), 10.0)
    loads = lambda d: Loads(dirichlet={LEFT: Dirichlet((0.0, 0.0)), RIGHT: Dirichlet((d, 0.0))})
    return op, loads


def tension_plate(n=4):
    m = generate_rect(1.0, 1.0, n, n, crossed=True, boundary_kinds={BOTTOM: DIRICHLET, TOP: DIRICHLET})
    op = DGOperator(m, IsotropicElastic(10.0, 0.3), 10.0)
    loads = lambda d: Loads(dirichlet={BOTTOM: Dirichlet((0.0, 0.0)), TOP: Dirichlet((0.0, d))})
    return op, loads


def test_linear_solve_examples():
    I = sp.identity(5, format="csr")
    b = np.arange(5.0)
    np.testing.assert_allclose(linear_solve(I, b), b)
    np.testing.assert_array_equal(linear_solve(I, np.zeros(5)), 0)
    A = sp.csr_matrix(np.array([[4.0, 1.0], [1.0, 3.0]]))
    x = linear_solve(A, np.array([1.0, 2.0]))
    np.testing.assert_allclose(A @ x, [1.0, 2.0], rtol=1e-12)


def test_linear_solve_flags_indefinite():
    A = sp.csr_matrix(np.diag([1.0, -2.0, 3.0]))
    with pytest.raises(IndefiniteSystemError):
        linear_solve(A, np.ones(3))


def test_settings_validation():
    with pytest.raises(ValueError):
        NonlinearSettings(tol_rel=0.0)
    with pytest.raises(ValueError):
        NonlinearSettings(relaxation=1.5)
    with pytest.raises(ValueError):
        NonlinearSettings(separation="raw")
    with pytest.raises(ValueError):
        NonlinearSettings(max_iter=0)
    with pytest.raises(ValueError):
        NonlinearSettings(tol_coupling=0.0)
    with pytest.raises(ValueError):
        NonlinearSettings(failure="all")


def test_elastic_run_is_linear():
    op, loads = tension_plate()
    s = QuasiStaticSolver(op, loads, None, TOP)
    res = s.run(np.linspace(0.002, 0.02, 10))
    k = np.array([r.reaction[1] / r.delta for r in res])
    assert np.all(np.abs(k / k[0] - 1) <= 1e-8)
    assert all(r.iterations == 1 and r.converged for r in res)


def test_zero_step_schedule():
    op, loads = tension_plate(2)
    assert QuasiStaticSolver(op, loads, PARAMS, TOP).run([]) == []


def test_decreasing_schedule_rejected():
    op, loads = tension_plate(2)
    with pytest.raises(ValueError):
        QuasiStaticSolver(op, loads, PARAMS, TOP).run([0.01, 0.005])


def test_below_initiation_single_iteration_rigid():
    op, loads = tension_plate()
    lin = QuasiStaticSolver(op, loads, None, TOP).load_step(0.01)
    r = QuasiStaticSolver(op, loads, PARAMS, TOP).load_step(0.01)
    assert r.iterations == 1
    assert not np.any(r.lam_max)
    np.testing.assert_allclose(r.reaction, lin.reaction, rtol=1e-12)


def test_cross_term_secant_rejected_by_solver():
    op, loads = tension_plate(2)
    p = CohesiveParams(PARAMS.normal, PARAMS.tangential, secant_variant="cross_terms")
    with pytest.raises(ValueError):
        QuasiStaticSolver(op, loads, p, TOP)


@pytest.mark.parametrize("failure", ["equilibrium", "immediate"])
def test_single_face_bar_follows_sawtooth(failure):
    op, loads = two_element_bar()
    # elastic compliance of the two elements with the face held rigid
    c = 0.001 / QuasiStaticSolver(op, loads, None, RIGHT).load_step(0.001).reaction[0]
    s = QuasiStaticSolver(op, loads, PARAMS, RIGHT,
                          settings=NonlinearSettings(tol_rel=1e-10, failure=failure))
    lam_prev = 0.0
    for d in np.linspace(0.002, 0.03, 15):
        r = s.load_step(d)
        R = r.reaction[0]
        if d <= 0.02:
            expected = (1.0 - d / 0.02) / (1.0 - c / 0.02)
            assert R == pytest.approx(expected, rel=1e-6, abs=1e-9)
        else:
            assert abs(R) < 1e-9
        assert r.lam_max[0] >= lam_prev
        lam_prev = r.lam_max[0]
    assert len(r.failed_faces) == 1


def test_unload_reload_retraces_secant():
    op, loads = two_element_bar()
    s = QuasiStaticSolver(op, loads, PARAMS, RIGHT, settings=NonlinearSettings(tol_rel=1e-12))
    peak = s.load_step(0.01)
    lam_peak = peak.lam_max.copy()
    k = peak.reaction[0] / 0.01
    for d in (0.008, 0.004, 0.002, 0.006, 0.01):
        r = s.load_step(d)
        if d < 0.01:
            np.testing.assert_array_equal(r.lam_max, lam_peak)
        else:
            # back at the peak the face sits on its history; roundoff may nudge it
            np.testing.assert_allclose(r.lam_max, lam_peak, rtol=1e-13)
        assert r.reaction[0] == pytest.approx(k * d, rel=1e-8)
        assert r.dissipated == pytest.approx(peak.dissipated, rel=1e-14)


def test_prefailed_faces_validated():
    op, loads = tension_plate(2)
    bnd = int(np.flatnonzero(op.mesh.kind != 0)[0])
    with pytest.raises(ValueError, match="interior"):
        QuasiStaticSolver(op, loads, PARAMS, TOP, prefailed=[bnd])


def test_step_failure_reports_result():
    op, loads = two_element_bar()
    s = QuasiStaticSolver(op, loads, PARAMS, RIGHT,
                          settings=NonlinearSettings(max_iter=1, max_bisections=1))
    with pytest.raises(StepFailure) as info:
        s.load_step(0.01)
    assert info.value.result is not None
    assert not info.value.result.converged
    assert s.delta == 0.0


def sen_small(setup=1, nx=8):
    spec = SenSpec(nx=nx, ny=2 * nx)
    m = spec.mesh()
    op = DGOperator(m, sen_materials(setup), 10.0)
    loads = lambda d: Loads(dirichlet={BOTTOM: Dirichlet((0, 0)), TOP: Dirichlet((0, d))})
    return QuasiStaticSolver(op, loads, PARAMS, TOP, spec.crack_faces(m),
                             NonlinearSettings(max_iter=200))


def test_specimen_stays_undamaged_below_strength():
    r = sen_small(nx=12).load_step(0.01)
    assert r.iterations <= 2
    # the pre-cracked faces sit at lambda = 1; every other face is untouched
    assert not np.any(r.lam_max[r.lam_max < 1])


def coupling_residual(s):
    """Largest change in ``eps * s`` one more fixed-point update would make."""
    u, c, state = s._trial
    new = s._coupling_for(u, state, c)
    eps = s.op.interior.eps
    return max(np.abs(eps * (new.s_n - c.s_n)).max(), np.abs(eps * (new.s_t - c.s_t)).max())


@pytest.fixture(scope="module")
def sen_history():
    s = sen_small()
    residuals = []
    res = s.run(np.arange(1, 31) * 0.01, on_step=lambda r: residuals.append(coupling_residual(s)))
    s.residuals = residuals
    return s, res


def test_history_invariants_on_specimen(sen_history):
    s, res = sen_history
    assert all(r.converged for r in res)
    prev_lam = np.zeros_like(res[0].lam_max)
    prev_failed = set()
    prev_d = 0.0
    for r in res:
        assert np.all(r.lam_max >= prev_lam)
        assert prev_failed <= set(r.failed_faces.tolist())
        assert r.dissipated >= prev_d - 1e-15
        prev_lam, prev_failed, prev_d = r.lam_max, set(r.failed_faces.tolist()), r.dissipated
    assert len(res[-1].failed_faces) > len(res[0].failed_faces)


def test_converged_steps_are_fixed_points(sen_history):
    s, res = sen_history
    assert len(s.residuals) == len(res)
    assert max(s.residuals) <= s.settings.tol_coupling


def test_specimen_run_is_deterministic(sen_history):
    _, res = sen_history
    s2 = sen_small()
    res2 = s2.run([r.delta for r in res[:12]])
    for a, b in zip(res, res2):
        assert a.reaction.tobytes() == b.reaction.tobytes()
        assert a.iterations == b.iterations


@settings(max_examples=8, deadline=None)
@given(st.lists(st.floats(0.0, 0.04), min_size=2, max_size=6))
def test_bar_irreversibility_any_path(path):
    op, loads = two_element_bar()
    s = QuasiStaticSolver(op, loads, PARAMS, RIGHT, settings=NonlinearSettings(max_iter=200))
    lam, failed, diss = 0.0, False, 0.0
    for d in path:
        r = s.load_step(d)
        assert r.lam_max[0] >= lam
        assert r.dissipated >= diss - 1e-15
        assert r.dissipated <= 0.01 * (1 + 1e-9)
        assert failed <= (len(r.failed_faces) == 1)
        lam, failed, diss = r.lam_max[0], len(r.failed_faces) == 1, r.dissipated


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 0.04), st.floats(0.0, 2 * np.pi), st.floats(0.0, 0.99))
def test_local_equilibrium_balances_the_face(q, angle, lam_max):
    from czdg.cohesive import FaceState, tractions
    op, loads = two_element_bar()
    s = QuasiStaticSolver(op, loads, PARAMS)
    eps = op.interior.eps
    state = FaceState(np.array([lam_max]), np.array([False]), np.array([False]))
    p_n, p_t = np.array([q * np.cos(angle)]), np.array([q * np.sin(angle)])
    closed = p_n < 0
    u_n, u_t = s._local_equilibrium(p_n, p_t, closed, state)
    if np.hypot(u_n, u_t)[0] == 0.0:
        # rigid: only allowed below the strength
        assert lam_max <= RIGID_LAMBDA
        assert np.hypot(np.where(closed, 0.0, p_n), p_t)[0] <= eps[0] * PARAMS.normal.sigma_max * (1 + 1e-12)
        return
    assert not closed[0] or u_n[0] == 0.0
    t_n, t_t = tractions(u_n, u_t, lam_max, False, params=PARAMS)
    t_n = np.where(closed, 0.0, t_n)
    np.testing.assert_allclose(u_t + eps * t_t, p_t, rtol=1e-9, atol=1e-15)
    if not closed[0]:
        np.testing.assert_allclose(u_n + eps * t_n, p_n, rtol=1e-9, atol=1e-15)


@pytest.mark.parametrize("max_faces", [200, 5])
def test_face_updates_match_direct_solve(max_faces):
    from czdg.solver import _Coupling, _FaceUpdateSolver
    op, loads = tension_plate(n=6)
    s = QuasiStaticSolver(op, loads, PARAMS, TOP)
    solver = _FaceUpdateSolver(op, s._assemble, s._pins, max_faces=max_faces)
    b = op.rhs(loads(0.01))
    eps = op.interior.eps
    rng = np.random.default_rng(7)
    c = s._rigid_coupling()
    for _ in range(6):
        pick = rng.choice(len(eps), 4, replace=False)
        y_n, y_t = eps * c.s_n, eps * c.s_t
        y_n[pick] = rng.uniform(0.05, 1.0, 4)
        y_t[pick] = rng.uniform(0.05, 1.0, 4)
        act_t = c.act_t.copy()
        act_t[pick[0]] = False
        c = _Coupling(y_n / eps, y_t / eps, c.act_n.copy(), act_t)
        u = solver.solve(c, b)
        np.testing.assert_allclose(u, linear_solve(s._assemble(c), b), rtol=1e-9,
                                   atol=1e-12 * np.abs(u).max())
