import numpy as np
import pytest

from confit.constraints import (build_box, build_didi_constraints,
                                from_inequalities, intersect, is_member)
from confit.data import ProtectedSpec
from confit.losses import LossSpec, MSE, MAE, loss_value, pointwise
from confit.solver import (ProjectionProblem, SolverOptions, lipschitz_probe,
                           project, project_ball_intersection, project_blend)
from oracles import grid_search_2d, grid_search_3d, mse_ball_box_oracle

HUBER = LossSpec("huber", huber_m=0.1)
ALL = (MSE, MAE, HUBER)
TIGHT = SolverOptions(tolerance=1e-9, max_iterations=100000)


def random_polytope(rng, n, m, margin=(0.05, 0.45)):
    a = rng.standard_normal((m, n))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b = a @ np.full(n, 0.5) + rng.uniform(*margin, size=m)
    return from_inequalities(a, b, n, lower=np.zeros(n), upper=np.ones(n))


def box2(lo=0.0, hi=1.0):
    return build_box(lo, hi, 2)


def test_halfspace_projection_analytic():
    cs = from_inequalities(np.array([[1.0, 0.0]]), np.array([0.5]), 2)
    rep = project(ProjectionProblem(MSE, np.array([1.0, 0.0]), cs), TIGHT)
    assert rep.converged
    assert np.allclose(rep.solution, [0.5, 0.0], atol=1e-9)


def test_already_feasible_returns_anchor():
    cs = box2()
    anchor = np.array([0.25, 0.75])
    rep = project(ProjectionProblem(MAE, anchor, cs), TIGHT)
    assert rep.converged and rep.iterations == 0
    assert np.array_equal(rep.solution, anchor)
    assert loss_value(MAE, rep.solution, anchor) == 0.0


def test_hyperplane_equality_projection():
    cs = from_inequalities(np.zeros((0, 2)), np.zeros(0), 2,
                           a_eq=np.array([[1.0, 1.0]]), b_eq=np.array([1.0]))
    rep = project(ProjectionProblem(MSE, np.array([1.0, 1.0]), cs), TIGHT)
    assert np.allclose(rep.solution, [0.5, 0.5], atol=1e-9)


@pytest.mark.parametrize("spec", ALL, ids=lambda s: s.kind)
def test_projection_idempotent(spec):
    rng = np.random.default_rng(0)
    for trial in range(5):
        cs = random_polytope(rng, 6, 8)
        anchor = rng.uniform(-0.5, 1.5, 6)
        first = project(ProjectionProblem(spec, anchor, cs), TIGHT)
        again = project(ProjectionProblem(spec, first.solution, cs), TIGHT)
        assert np.allclose(again.solution, first.solution, atol=2e-9 * 10)


@pytest.mark.parametrize("spec", ALL, ids=lambda s: s.kind)
def test_solution_is_member(spec):
    rng = np.random.default_rng(1)
    for trial in range(5):
        cs = random_polytope(rng, 8, 10)
        anchor = rng.uniform(-0.5, 1.5, 8)
        rep = project(ProjectionProblem(spec, anchor, cs), TIGHT)
        assert rep.converged
        assert is_member(cs, rep.solution, tol=1e-6)


def test_pdhg_and_dykstra_routes_agree_on_mse():
    # mse with no auxiliaries goes through Dykstra; forcing the generic route
    # via a blend with weight 0 must land on the same point
    rng = np.random.default_rng(2)
    for _ in range(5):
        cs = random_polytope(rng, 7, 9)
        anchor = rng.uniform(-0.5, 1.5, 7)
        d = project(ProjectionProblem(MSE, anchor, cs), TIGHT)
        p = project_blend(MSE, anchor, np.zeros(7), 0.0, cs, TIGHT)
        assert d.method == "dykstra" and p.method == "pdhg-blend"
        assert np.allclose(d.solution, p.solution, atol=1e-7)


def grid_oracle_check(spec, anchor, cs, ball=None, step=1e-3, tol=2e-3):
    def objective(pts):
        return pointwise(spec, pts - anchor[None, :]).sum(axis=1)

    def feasible(pts):
        # the 2-D oracle sets carry no auxiliaries: evaluate rows in bulk
        ok = np.all((pts >= cs.lower[None, :] - 1e-12)
                    & (pts <= cs.upper[None, :] + 1e-12), axis=1)
        if cs.m_ineq:
            ok &= np.all(pts @ cs.a_ineq.T <= cs.b_ineq[None, :] + 1e-12, axis=1)
        if ball is not None:
            center, beta = ball
            ok &= pointwise(spec, pts - center[None, :]).mean(axis=1) <= beta + 1e-12
        return ok

    _, optimal = grid_search_2d(objective, feasible, step=step)
    if ball is None:
        rep = project(ProjectionProblem(spec, anchor, cs), TIGHT)
    else:
        rep = project_ball_intersection(spec, anchor, ball[0], ball[1], cs, TIGHT)
    gaps = np.abs(optimal - rep.solution[None, :]).max(axis=1)
    assert gaps.min() <= tol, f"solution {rep.solution} not within {tol} of the optimal face"
    return rep, optimal


def test_grid_oracle_mse_box_halfspace():
    cs = intersect(box2(), from_inequalities(np.array([[1.0, 1.0]]), np.array([0.8]), 2))
    grid_oracle_check(MSE, np.array([0.9, 0.7]), cs)


def test_grid_oracle_mae_degenerate_face():
    # every point of the segment z1+z2 = 0.5 inside the box is optimal here;
    # the solver may return any point of that face
    cs = intersect(box2(), from_inequalities(np.array([[1.0, 1.0]]), np.array([0.5]), 2))
    rep, optimal = grid_oracle_check(MAE, np.array([1.0, 1.0]), cs)
    assert len(optimal) > 10  # non-singleton argmin face reported by the oracle
    assert rep.solution.sum() == pytest.approx(0.5, abs=1e-6)


def test_grid_oracle_huber_box():
    grid_oracle_check(HUBER, np.array([1.4, -0.2]), box2())


def test_grid_oracle_three_dimensional():
    rng = np.random.default_rng(11)
    a = rng.standard_normal((3, 3))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b = a @ np.full(3, 0.5) + rng.uniform(0.05, 0.3, 3)
    cs = intersect(build_box(0.0, 1.0, 3), from_inequalities(a, b, 3))
    for spec in ALL:
        anchor = rng.uniform(-0.3, 1.3, 3)

        def objective(pts):
            return pointwise(spec, pts - anchor[None, :]).sum(axis=1)

        def feasible(pts):
            ok = np.all((pts >= -1e-12) & (pts <= 1 + 1e-12), axis=1)
            ok &= np.all(pts @ a.T <= b[None, :] + 1e-12, axis=1)
            return ok

        _, optimal = grid_search_3d(objective, feasible, step=1e-2)
        rep = project(ProjectionProblem(spec, anchor, cs), TIGHT)
        gap = np.abs(optimal - rep.solution[None, :]).max(axis=1).min()
        assert gap <= 2e-2, f"{spec.kind}: gap {gap:.3e}"


def test_grid_oracle_with_ball():
    cs = box2()
    center = np.array([0.2, 0.2])
    grid_oracle_check(MSE, np.array([1.0, 1.0]), cs, ball=(center, 0.05))
    grid_oracle_check(MAE, np.array([1.0, 1.0]), cs, ball=(center, 0.1))


def test_ball_beta_zero_returns_center():
    cs = box2()
    center = np.array([0.3, 0.4])
    rep = project_ball_intersection(MSE, np.array([1.0, 1.0]), center, 0.0, cs, TIGHT)
    assert np.array_equal(rep.solution, center)
    assert rep.converged and rep.method == "degenerate-ball"


@pytest.mark.parametrize("spec", ALL, ids=lambda s: s.kind)
def test_ball_inactive_matches_plain_projection(spec):
    rng = np.random.default_rng(3)
    cs = random_polytope(rng, 5, 6)
    anchor = rng.uniform(-0.5, 1.5, 5)
    plain = project(ProjectionProblem(spec, anchor, cs), TIGHT)
    center = cs.feasible_point
    beta = loss_value(spec, plain.solution, center) + 0.05
    balled = project_ball_intersection(spec, anchor, center, beta, cs, TIGHT)
    assert np.allclose(balled.solution, plain.solution, atol=1e-6)
    infinite = project_ball_intersection(spec, anchor, center, np.inf, cs, TIGHT)
    assert np.allclose(infinite.solution, plain.solution, atol=1e-9)


def test_mse_ball_matches_bisection_oracle():
    rng = np.random.default_rng(4)
    cs = box2()
    for _ in range(5):
        anchor = rng.uniform(0.5, 1.5, 2)
        center = rng.uniform(0.1, 0.4, 2)
        beta = float(rng.uniform(0.01, 0.08))
        rep = project_ball_intersection(MSE, anchor, center, beta, cs, TIGHT)
        want = mse_ball_box_oracle(anchor, center, beta)
        assert np.allclose(rep.solution, want, atol=1e-6)
        if loss_value(MSE, project(ProjectionProblem(MSE, anchor, cs), TIGHT).solution,
                      center) > beta:
            assert loss_value(MSE, rep.solution, center) == pytest.approx(beta, abs=1e-8)


def test_projection_with_aux_feasible_anchor_shortcut():
    protected = (ProtectedSpec(0, {0: np.array([0]), 1: np.array([1])}),)
    cs = build_didi_constraints(protected, 0.5, 2)
    anchor = np.array([0.6, 0.4])  # |z0 - z1| = 0.2 <= 0.5: already feasible
    rep = project(ProjectionProblem(MSE, anchor, cs), TIGHT)
    assert rep.method == "already-feasible"
    assert np.array_equal(rep.solution, anchor)


def test_didi_aux_projection_analytic():
    # groups {0} and {1}: the index is |z0 - z1|, so projecting (1, 0) onto
    # {index <= eps} lands at (0.5 + eps/2, 0.5 - eps/2)
    protected = (ProtectedSpec(0, {0: np.array([0]), 1: np.array([1])}),)
    eps = 0.2
    cs = build_didi_constraints(protected, eps, 2)
    rep = project(ProjectionProblem(MSE, np.array([1.0, 0.0]), cs),
                  SolverOptions(tolerance=1e-10, max_iterations=200000))
    assert rep.converged
    assert np.allclose(rep.solution, [0.5 + eps / 2, 0.5 - eps / 2], atol=1e-6)


def test_mse_projection_nonexpansive_sampled():
    rng = np.random.default_rng(5)
    for _ in range(3):
        cs = random_polytope(rng, 8, 10)
        k = lipschitz_probe(MSE, cs, samples=10, seed=int(rng.integers(1 << 31)), opts=TIGHT)
        assert k <= 1.0 + 1e-6


def test_lipschitz_probe_validates_samples():
    cs = box2()
    with pytest.raises(ValueError):
        lipschitz_probe(MSE, cs, samples=0, seed=0)


def test_nonconvergence_reported_not_raised():
    rng = np.random.default_rng(6)
    cs = random_polytope(rng, 10, 12)
    rep = project(ProjectionProblem(MAE, rng.uniform(-0.5, 1.5, 10), cs),
                  SolverOptions(tolerance=1e-12, max_iterations=3))
    assert not rep.converged


def test_warm_start_reaches_same_solution():
    rng = np.random.default_rng(7)
    protected = (ProtectedSpec(0, {0: np.arange(5), 1: np.arange(5, 10)}),)
    cs = intersect(build_didi_constraints(protected, 0.05, 10), build_box(0.0, 1.0, 10))
    anchor = rng.uniform(0, 1, 10)
    anchor[:5] += 0.4
    anchor = np.clip(anchor, 0, 1)
    cold = project(ProjectionProblem(MAE, anchor, cs), TIGHT)
    drift = np.clip(anchor + 0.01, 0, 1)
    warm = project(ProjectionProblem(MAE, drift, cs), TIGHT, warm=cold.state)
    cold2 = project(ProjectionProblem(MAE, drift, cs), TIGHT)
    # the mae argmin can be a face, so compare objective value, not the point
    assert warm.converged and cold2.converged
    assert is_member(cs, warm.solution, tol=1e-6)
    obj_warm = loss_value(MAE, warm.solution, drift)
    obj_cold = loss_value(MAE, cold2.solution, drift)
    assert obj_warm == pytest.approx(obj_cold, abs=1e-7)
    assert warm.iterations <= cold2.iterations


def test_dimension_checks():
    cs = box2()
    with pytest.raises(ValueError):
        ProjectionProblem(MSE, np.zeros(3), cs)
    with pytest.raises(ValueError):
        ProjectionProblem(MSE, np.zeros(2), cs, trust=(np.zeros(3), 0.1))
    with pytest.raises(ValueError):
        ProjectionProblem(MSE, np.zeros(2), cs, trust=(np.zeros(2), -0.1))
