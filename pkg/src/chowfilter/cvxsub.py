"""Convex witness subproblems.

Maximize a linear functional of polynomial coefficients subject to one
empirical quadratic (Gram) constraint and one empirical weighted-L1
constraint, restricted to the row space of the training feature matrix.
The restriction makes the problem bounded: on that subspace the Gram
constraint bounds the coefficient norm.

Solves go through cvxpy/Clarabel on the reduced coordinates; the returned
point is shrunk toward zero if needed so that both constraint residuals are
nonpositive (the feasible set is star-shaped around the origin, so shrinking
preserves feasibility and costs at most the shrink factor in objective).
"""

from __future__ import annotations

from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from .polycore import EmptySampleError, MonomialBasis, Sample

DEFAULT_OPT_TOL = 1e-6
DEFAULT_FEAS_TOL = 1e-8

_RANK_CUTOFF = 1e-10


class WitnessSolveError(RuntimeError):
    """Solver failed to converge; no feasible point is returned."""


@dataclass
class WitnessSolution:
    classifier_index: int | None
    coefficients: np.ndarray
    objective: float
    quad_residual: float
    abs_residual: float
    status: str


class ConstraintSet:
    """Feasible polynomials for one classifier over a fixed training sample.

    Membership: c^T gram c <= quad_bound and
    row_weight * sum_rows |m(x) . c| <= abs_bound.
    """

    def __init__(
        self,
        basis: MonomialBasis,
        gram: np.ndarray,
        quad_bound: float,
        abs_rows: np.ndarray,
        abs_bound: float,
        row_weight: float,
        projector_basis: np.ndarray,
    ):
        self.basis = basis
        self.gram = gram
        self.quad_bound = float(quad_bound)
        self.abs_rows = abs_rows
        self.abs_bound = float(abs_bound)
        self.row_weight = float(row_weight)
        # orthonormal columns spanning the training feature row space
        self.projector_basis = projector_basis
        self.rank = projector_basis.shape[1]

        g_r = projector_basis.T @ gram @ projector_basis
        g_r = (g_r + g_r.T) / 2.0
        evals, evecs = np.linalg.eigh(g_r)
        if (evals < -1e-10).any():
            raise ValueError("Gram matrix is not PSD within tolerance")
        evals = np.clip(evals, 0.0, None)
        self._gram_reduced = g_r
        self._sqrt_factor = np.sqrt(evals)[:, None] * evecs.T  # L with L^T L = g_r
        floor = max(evals.max(initial=0.0) * 1e-300, 1e-300)
        self._inv_evals = 1.0 / np.maximum(evals, floor)
        self._inv_evecs = evecs
        self._abs_reduced = abs_rows @ projector_basis if abs_rows.size else np.zeros((0, self.rank))
        self._problem = None
        self._solve_cache: dict[bytes, float] = {}
        self._witness_cache: dict[bytes, "WitnessSolution"] = {}

    # -- membership helpers -------------------------------------------------

    def quad_value(self, c: np.ndarray) -> float:
        return float(c @ self.gram @ c)

    def abs_value(self, c: np.ndarray) -> float:
        if self.abs_rows.shape[0] == 0:
            return 0.0
        return float(self.row_weight * np.abs(self.abs_rows @ c).sum())

    def residuals(self, c: np.ndarray) -> tuple[float, float]:
        return (self.quad_value(c) - self.quad_bound, self.abs_value(c) - self.abs_bound)

    # -- fast screening -----------------------------------------------------

    def quad_only_bound(self, objectives: np.ndarray) -> np.ndarray:
        """Upper bound on the witness value ignoring the L1 constraint.

        max a.c subject to the quadratic constraint alone has the closed form
        sqrt(quad_bound * a^T G^+ a) on the projected subspace. Valid as an
        upper bound because dropping a constraint enlarges the feasible set.
        """
        objectives = np.atleast_2d(objectives)
        a_r = objectives @ self.projector_basis
        w = a_r @ self._inv_evecs
        quad_forms = (w * w * self._inv_evals[None, :]).sum(axis=1)
        return np.sqrt(np.maximum(self.quad_bound * quad_forms, 0.0))

    # -- compiled problem ---------------------------------------------------

    def _ensure_problem(self):
        if self._problem is not None or self.rank == 0:
            return
        y = cp.Variable(self.rank)
        a = cp.Parameter(self.rank)
        constraints = [cp.sum_squares(self._sqrt_factor @ y) <= self.quad_bound]
        if self._abs_reduced.shape[0] > 0:
            constraints.append(
                self.row_weight * cp.sum(cp.abs(self._abs_reduced @ y)) <= self.abs_bound
            )
        self._problem = cp.Problem(cp.Maximize(a @ y), constraints)
        self._param_a = a
        self._var_y = y


def build_constraint_set(
    f,
    sample: Sample,
    basis: MonomialBasis,
    beta: float,
    eps: float,
    slack: float,
) -> ConstraintSet:
    """Constraint set with quad bound 2*beta and L1 bound 2*eps/(2*slack+eps)."""
    if len(sample) == 0:
        raise EmptySampleError("constraint set needs a nonempty sample")
    feats = sample.features(basis)
    gram = feats.T @ feats / len(sample)
    gram = (gram + gram.T) / 2.0
    _, svals, vt = np.linalg.svd(feats, full_matrices=False)
    rank = int((svals > _RANK_CUTOFF * svals[0]).sum()) if svals.size and svals[0] > 0 else 0
    projector_basis = vt[:rank].T
    fx = np.asarray(f(sample.points), dtype=bool)
    abs_rows = feats[fx]
    return ConstraintSet(
        basis=basis,
        gram=gram,
        quad_bound=2.0 * beta,
        abs_rows=abs_rows,
        abs_bound=2.0 * eps / (2.0 * slack + eps),
        row_weight=1.0 / len(sample),
        projector_basis=projector_basis,
    )


def solve_witness(
    objective: np.ndarray,
    cs: ConstraintSet,
    opt_tol: float = DEFAULT_OPT_TOL,
    feas_tol: float = DEFAULT_FEAS_TOL,
    classifier_index: int | None = None,
) -> WitnessSolution:
    objective = np.asarray(objective, dtype=float)
    if objective.shape != (len(cs.basis),):
        raise ValueError(f"objective has shape {objective.shape}, expected ({len(cs.basis)},)")

    zero = np.zeros(len(cs.basis))
    if cs.rank == 0 or cs.quad_bound == 0.0 or not objective.any():
        # only the zero polynomial is feasible / optimal
        return WitnessSolution(classifier_index, zero, 0.0, *cs.residuals(zero), "trivial")
    if cs.abs_rows.shape[0] > 0 and cs.abs_bound == 0.0:
        # L1 constraint pins every active row to zero; conservatively return 0
        return WitnessSolution(classifier_index, zero, 0.0, *cs.residuals(zero), "trivial")

    cache_key = objective.tobytes()
    cached = cs._witness_cache.get(cache_key)
    if cached is not None:
        return WitnessSolution(
            classifier_index, cached.coefficients, cached.objective,
            cached.quad_residual, cached.abs_residual, cached.status,
        )

    cs._ensure_problem()
    cs._param_a.value = objective @ cs.projector_basis
    try:
        cs._problem.solve(solver=cp.CLARABEL)
    except cp.error.SolverError as exc:  # pragma: no cover - solver-dependent
        raise WitnessSolveError(str(exc)) from exc
    status = cs._problem.status
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise WitnessSolveError(f"witness solve ended with status {status}")

    c = cs.projector_basis @ np.asarray(cs._var_y.value, dtype=float)
    # shrink to exact feasibility; both constraint values scale monotonically
    shrink = 1.0
    qval = cs.quad_value(c)
    if qval > cs.quad_bound:
        shrink = min(shrink, np.sqrt(cs.quad_bound / qval))
    aval = cs.abs_value(c)
    if aval > cs.abs_bound:
        shrink = min(shrink, cs.abs_bound / aval)
    if shrink < 1.0:
        c = c * shrink
    quad_res, abs_res = cs.residuals(c)
    if quad_res > feas_tol or abs_res > feas_tol:
        raise WitnessSolveError(
            f"infeasible after shrink: quad residual {quad_res}, abs residual {abs_res}"
        )
    solution = WitnessSolution(
        classifier_index, c, float(objective @ c), quad_res, abs_res, status
    )
    cs._witness_cache[cache_key] = solution
    return solution


def max_abs_at_point(
    x: np.ndarray,
    cs: ConstraintSet,
    opt_tol: float = DEFAULT_OPT_TOL,
    feas_tol: float = DEFAULT_FEAS_TOL,
) -> float:
    """max over feasible p of |p(x)|.

    The feasible set is symmetric under coefficient negation, so this equals
    the maximum of p(x) and one linear-objective solve suffices.
    """
    row = cs.basis.feature_matrix(np.atleast_2d(x))[0]
    key = row.tobytes()
    cached = cs._solve_cache.get(key)
    if cached is not None:
        return cached
    value = max(solve_witness(row, cs, opt_tol, feas_tol).objective, 0.0)
    cs._solve_cache[key] = value
    return value
