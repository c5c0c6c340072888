"""L1 polynomial regression and threshold rounding.

fit_l1 minimizes the empirical mean absolute residual over the polynomial
space by linear programming (residual epigraph variables, HiGHS backend).
threshold_round converts the fitted polynomial into a {0,1} classifier by
an exhaustive scan over candidate thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import eye as speye
from scipy.sparse import csr_matrix, hstack, vstack

from .polycore import MonomialBasis, Polynomial, Sample, enumerate_basis


class RegressionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Classifier:
    """Thresholded-polynomial Boolean function (or one of the degenerate kinds)."""

    kind: str  # poly_threshold | complement | constant | external
    polynomial: Polynomial | None = None
    threshold: float = 0.5
    base: "Classifier | None" = None
    constant_value: int = 0
    func: object = None
    train_error: float | None = field(default=None, compare=False)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "poly_threshold":
            return (self.polynomial(points) >= self.threshold).astype(int)
        if self.kind == "complement":
            return 1 - self.base(points)
        if self.kind == "constant":
            return np.full(points.shape[0], self.constant_value, dtype=int)
        if self.kind == "external":
            return np.asarray(self.func(points), dtype=int)
        raise ValueError(f"unknown classifier kind {self.kind!r}")


def complement(f: Classifier) -> Classifier:
    """1 - f, exactly."""
    if f.kind == "complement":
        return f.base
    if f.kind == "constant":
        return Classifier(kind="constant", constant_value=1 - f.constant_value)
    return Classifier(kind="complement", base=f)


def constant_classifier(value: int) -> Classifier:
    return Classifier(kind="constant", constant_value=int(value))


def fit_l1(basis: MonomialBasis, sample: Sample, opt_tol: float = 1e-9):
    """L1-optimal polynomial fit to {0,1} labels.

    Returns (polynomial, objective) with objective = (1/n) sum |p(x_i) - y_i|,
    optimal up to opt_tol.
    """
    if sample.labels is None:
        raise ValueError("fit_l1 needs a labeled sample")
    n = len(sample)
    if n == 0:
        raise RegressionError("empty sample")
    feats = sample.features(basis)
    k = feats.shape[1]
    y = sample.labels.astype(float)
    if not y.any():
        return Polynomial(basis, np.zeros(k)), 0.0

    m = csr_matrix(feats)
    ident = speye(n, format="csr")
    a_ub = vstack([hstack([m, -ident]), hstack([-m, -ident])], format="csr")
    b_ub = np.concatenate([y, -y])
    cost = np.concatenate([np.zeros(k), np.full(n, 1.0 / n)])
    bounds = [(None, None)] * k + [(0.0, None)] * n
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not res.success:
        raise RegressionError(f"L1 regression LP failed: {res.message}")
    coeffs = res.x[:k]
    poly = Polynomial(basis, coeffs)
    objective = float(np.mean(np.abs(feats @ coeffs - y)))
    return poly, objective


def threshold_round(p: Polynomial, sample: Sample) -> Classifier:
    """1{p(x) >= theta*} with theta* minimizing empirical 0/1 error.

    Candidates are {1/2} plus midpoints of consecutive sorted fitted values;
    ties break toward theta = 1/2, then toward smaller theta.
    """
    if sample.labels is None:
        raise ValueError("threshold_round needs a labeled sample")
    vals = sample.features(p.basis) @ p.coefficients
    y = sample.labels
    n = len(y)
    distinct = np.unique(vals)
    mids = (distinct[:-1] + distinct[1:]) / 2.0 if distinct.size > 1 else np.array([])
    # sentinels reach the all-ones and all-zeros predictions
    low = distinct[0] - 1.0
    high = distinct[-1] + 1.0
    candidates = np.concatenate([[0.5, low], mids, [high]])

    order = np.argsort(vals, kind="stable")
    sorted_vals = vals[order]
    ones_prefix = np.concatenate([[0], np.cumsum(y[order])])
    total_ones = int(y.sum())
    ks = np.searchsorted(sorted_vals, candidates, side="left")
    # err(theta) = #(y=1, v<theta) + #(y=0, v>=theta)
    errs = ones_prefix[ks] + (n - ks) - (total_ones - ones_prefix[ks])
    best_err = errs.min()
    if errs[0] == best_err:
        theta = 0.5
    else:
        theta = float(candidates[1:][errs[1:] == best_err].min())
    return Classifier(
        kind="poly_threshold",
        polynomial=p,
        threshold=theta,
        train_error=float(best_err) / n,
    )


def fit_classifier(degree: int, sample: Sample, multilinear: bool = False) -> Classifier:
    """Convenience pipeline: enumerate basis, L1 fit, threshold rounding."""
    basis = enumerate_basis(sample.dimension, degree, multilinear)
    poly, _ = fit_l1(basis, sample)
    return threshold_round(poly, sample)


# -- serialization ----------------------------------------------------------


def classifier_to_text(f: Classifier) -> str:
    """Structured text record; floats at 17 significant digits (round-trip exact)."""
    lines = ["classifier-record v1", f"kind {f.kind}"]
    if f.kind == "poly_threshold":
        b = f.polynomial.basis
        lines.append(f"basis d={b.dimension} degree={b.degree} multilinear={int(b.multilinear)}")
        lines.append(f"threshold {f.threshold:.17g}")
        lines.append(f"coefficients {len(f.polynomial.coefficients)}")
        lines.extend(f"{c:.17g}" for c in f.polynomial.coefficients)
    elif f.kind == "constant":
        lines.append(f"value {f.constant_value}")
    elif f.kind == "complement":
        lines.append("base-begin")
        lines.append(classifier_to_text(f.base))
        lines.append("base-end")
    else:
        raise ValueError(f"cannot serialize classifier of kind {f.kind!r}")
    lines.append("end")
    return "\n".join(lines)


def classifier_from_text(text: str) -> Classifier:
    lines = text.strip().splitlines()
    if lines[0] != "classifier-record v1":
        raise ValueError("not a classifier record")
    kind = lines[1].split(" ", 1)[1]
    if kind == "poly_threshold":
        spec = dict(item.split("=") for item in lines[2].split(" ")[1:])
        basis = enumerate_basis(int(spec["d"]), int(spec["degree"]), bool(int(spec["multilinear"])))
        theta = float(lines[3].split(" ", 1)[1])
        count = int(lines[4].split(" ", 1)[1])
        coeffs = np.array([float(v) for v in lines[5 : 5 + count]])
        return Classifier(kind="poly_threshold", polynomial=Polynomial(basis, coeffs), threshold=theta)
    if kind == "constant":
        return constant_classifier(int(lines[2].split(" ", 1)[1]))
    if kind == "complement":
        inner = "\n".join(lines[3:-2])
        return Classifier(kind="complement", base=classifier_from_text(inner))
    raise ValueError(f"unknown classifier kind {kind!r}")
