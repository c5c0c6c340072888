import numpy as np
import pytest

from chowfilter.cvxsub import (
    ConstraintSet,
    WitnessSolveError,
    build_constraint_set,
    max_abs_at_point,
    solve_witness,
)
from chowfilter.polycore import Sample, enumerate_basis

OPT_TOL = 1e-6
FEAS_TOL = 1e-8


def random_constraint_set(rng, d=2, degree=1, n=30, beta=2.0, eps=0.3, slack=2.0):
    pts = rng.choice([-1.0, 1.0], size=(n, d)) if rng.random() < 0.5 else rng.normal(size=(n, d))
    basis = enumerate_basis(d, degree)
    fx = (pts[:, 0] > rng.uniform(-1, 1)).astype(int)
    return build_constraint_set(lambda p: fx, Sample(pts), basis, beta, eps, slack)


def grid_search_max(cs: ConstraintSet, objective: np.ndarray, steps: int = 41):
    """Max objective over grid directions scaled exactly to the feasible
    boundary; valid because the feasible set is star-shaped around 0."""
    if cs.rank == 0:
        return 0.0, 0.0
    evals = np.linalg.eigvalsh(cs._gram_reduced)
    pos = evals[evals > 1e-12]
    radius = np.sqrt(cs.quad_bound / pos.min()) if pos.size else 0.0
    axes = [np.linspace(-radius, radius, steps)] * cs.rank
    grids = np.meshgrid(*axes, indexing="ij")
    ys = np.stack([g.ravel() for g in grids], axis=1)
    cands = ys @ cs.projector_basis.T
    quad = np.einsum("ij,jk,ik->i", cands, cs.gram, cands)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.sqrt(np.where(quad > 0, cs.quad_bound / np.maximum(quad, 1e-300), 0.0))
        if cs.abs_rows.shape[0]:
            absv = cs.row_weight * np.abs(cands @ cs.abs_rows.T).sum(axis=1)
            scale = np.minimum(
                scale, np.where(absv > 0, cs.abs_bound / np.maximum(absv, 1e-300), np.inf)
            )
    vals = scale * (cands @ objective)
    best = float(np.nanmax(vals, initial=0.0))
    spacing = 2 * radius / (steps - 1) if steps > 1 else radius
    return best, spacing


def test_solver_matches_grid_search():
    rng = np.random.default_rng(0)
    for trial in range(100):
        d = int(rng.integers(1, 3))
        degree = 1 if d == 2 else int(rng.integers(1, 3))
        cs = random_constraint_set(rng, d=d, degree=degree, n=int(rng.integers(10, 40)))
        assert len(cs.basis) <= 3
        a = rng.normal(size=len(cs.basis))
        sol = solve_witness(a, cs, OPT_TOL, FEAS_TOL)
        grid_best, spacing = grid_search_max(cs, a)
        lipschitz = np.linalg.norm(a) * np.sqrt(cs.rank)
        tol = 2 * OPT_TOL + lipschitz * spacing
        # grid points are feasible, so the solver can't be beaten by more
        # than its tolerance; the grid can't be beaten by more than one cell
        assert sol.objective >= grid_best - 2 * OPT_TOL, f"trial {trial}"
        assert sol.objective <= grid_best + tol, f"trial {trial}"


def test_feasibility_residuals_always_within_tolerance():
    rng = np.random.default_rng(1)
    for _ in range(50):
        cs = random_constraint_set(rng, d=int(rng.integers(1, 4)), degree=2)
        a = rng.normal(size=len(cs.basis))
        sol = solve_witness(a, cs, OPT_TOL, FEAS_TOL)
        assert sol.quad_residual <= FEAS_TOL
        assert sol.abs_residual <= FEAS_TOL
        q, ab = cs.residuals(sol.coefficients)
        assert q <= FEAS_TOL and ab <= FEAS_TOL


def test_negation_symmetry():
    rng = np.random.default_rng(2)
    for _ in range(25):
        cs = random_constraint_set(rng, d=2, degree=2, n=40)
        a = rng.normal(size=len(cs.basis))
        plus = solve_witness(a, cs, OPT_TOL, FEAS_TOL).objective
        minus = solve_witness(-a, cs, OPT_TOL, FEAS_TOL).objective
        assert plus == pytest.approx(minus, abs=4 * OPT_TOL)


def test_max_abs_at_point_equals_witness_solve():
    rng = np.random.default_rng(3)
    cs = random_constraint_set(rng, d=2, degree=2, n=50)
    x = rng.normal(size=2)
    row = cs.basis.feature_matrix(x[None, :])[0]
    direct = solve_witness(row, cs, OPT_TOL, FEAS_TOL).objective
    assert max_abs_at_point(x, cs, OPT_TOL, FEAS_TOL) == pytest.approx(
        max(direct, 0.0), abs=OPT_TOL
    )


def test_max_abs_at_point_cached():
    rng = np.random.default_rng(4)
    cs = random_constraint_set(rng)
    x = rng.normal(size=2)
    v1 = max_abs_at_point(x, cs)
    v2 = max_abs_at_point(x, cs)
    assert v1 == v2
    assert len(cs._solve_cache) == 1


def test_quad_only_bound_is_upper_bound():
    rng = np.random.default_rng(5)
    for _ in range(20):
        cs = random_constraint_set(rng, d=2, degree=2, n=40)
        a = rng.normal(size=(3, len(cs.basis)))
        screen = cs.quad_only_bound(a)
        for i in range(3):
            sol = solve_witness(a[i], cs, OPT_TOL, FEAS_TOL)
            assert sol.objective <= screen[i] + OPT_TOL


def test_monotone_in_bounds():
    # enlarging either bound can only increase the optimum
    rng = np.random.default_rng(6)
    pts = rng.normal(size=(40, 2))
    basis = enumerate_basis(2, 2)
    fx = (pts[:, 0] > 0).astype(int)
    sample = Sample(pts)
    a = rng.normal(size=len(basis))
    small = build_constraint_set(lambda p: fx, sample, basis, beta=1.0, eps=0.1, slack=2.0)
    large = build_constraint_set(lambda p: fx, sample, basis, beta=4.0, eps=0.4, slack=2.0)
    v_small = solve_witness(a, small, OPT_TOL, FEAS_TOL).objective
    v_large = solve_witness(a, large, OPT_TOL, FEAS_TOL).objective
    assert v_large >= v_small - 2 * OPT_TOL


def test_deterministic_solves():
    rng = np.random.default_rng(7)
    cs = random_constraint_set(rng)
    a = rng.normal(size=len(cs.basis))
    s1 = solve_witness(a, cs, OPT_TOL, FEAS_TOL)
    s2 = solve_witness(a, cs, OPT_TOL, FEAS_TOL)
    assert s1.objective == s2.objective
    np.testing.assert_array_equal(s1.coefficients, s2.coefficients)


def test_trivial_paths():
    basis = enumerate_basis(2, 1)
    pts = np.array([[1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]])
    cs = build_constraint_set(
        lambda p: np.ones(len(p), dtype=int), Sample(pts), basis, 1.0, 0.2, 2.0
    )
    zero = solve_witness(np.zeros(len(basis)), cs)
    assert zero.objective == 0.0
    assert zero.status == "trivial"

    # zero L1 budget with active rows pins the solution to zero
    pinned = build_constraint_set(
        lambda p: np.ones(len(p), dtype=int), Sample(pts), basis, 1.0, 0.0, 2.0
    )
    sol = solve_witness(np.ones(len(basis)), pinned)
    assert sol.objective == 0.0


def test_objective_shape_checked():
    rng = np.random.default_rng(8)
    cs = random_constraint_set(rng)
    with pytest.raises(ValueError):
        solve_witness(np.ones(len(cs.basis) + 1), cs)
