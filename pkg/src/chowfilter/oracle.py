"""Brute-force ground truth for small instances.

Exact expectations over the full hypercube, exact Chow parameters, and the
joint-optimal-error benchmark over finite-support labeled distributions with
enumerable concept classes. Everything here is exhaustive enumeration; the
test suite uses these as independent oracles for the sampled estimators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .polycore import MonomialBasis

MAX_ENUM_DIM = 20
MAX_CONCEPTS = 10**6


class EnumerationTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class FiniteDistribution:
    """Finite-support distribution, optionally labeled (a joint over X x {0,1})."""

    support: np.ndarray
    weights: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float)
        if support.ndim == 1:
            support = support[:, None]
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape[0] != support.shape[0]:
            raise ValueError("weights and support have different lengths")
        if (weights < 0).any():
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {weights.sum()}, expected 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=int)
            if labels.shape[0] != support.shape[0]:
                raise ValueError("labels and support have different lengths")
            object.__setattr__(self, "labels", labels)

    def expectation(self, g) -> float:
        return float(np.dot(self.weights, np.asarray(g(self.support), dtype=float)))

    def error_of(self, f) -> float:
        """Pr[f(x) != y] under this labeled distribution."""
        if self.labels is None:
            raise ValueError("distribution has no labels")
        fx = np.asarray(f(self.support), dtype=int)
        return float(np.dot(self.weights, (fx != self.labels).astype(float)))


def hypercube_points(d: int) -> np.ndarray:
    """All 2^d points of {+-1}^d in a fixed order."""
    if d > MAX_ENUM_DIM:
        raise EnumerationTooLarge(f"d={d} exceeds enumeration limit {MAX_ENUM_DIM}")
    # row i encodes the binary expansion of i, bit 0 -> coordinate 0
    idx = np.arange(2**d, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(d)[None, :]) & 1
    return (2 * bits - 1).astype(float)


def exact_expectation_hypercube(d: int, g) -> float:
    """E_{x ~ U({+-1}^d)} [g(x)] by full enumeration."""
    pts = hypercube_points(d)
    return float(np.mean(np.asarray(g(pts), dtype=float)))


def exact_chow(f, basis: MonomialBasis, d: int) -> np.ndarray:
    """Vector of E_{U({+-1}^d)} [f(x) chi_alpha(x)] over the basis elements."""
    if not basis.multilinear:
        raise ValueError("Chow parameters are defined over the multilinear basis")
    pts = hypercube_points(d)
    fx = np.asarray(f(pts), dtype=float)
    feats = basis.feature_matrix(pts)
    return feats.T @ fx / len(pts)


def exact_lambda(concepts, train: FiniteDistribution, test: FiniteDistribution):
    """Joint optimal error over a finite concept class.

    Returns (lam, lam_train, lam_test, argmin_concept). Among joint minimizers,
    ties are broken toward smaller training error, then toward the earliest
    concept in enumeration order.
    """
    concepts = list(concepts)
    if not concepts:
        raise ValueError("empty concept class")
    if len(concepts) > MAX_CONCEPTS:
        raise EnumerationTooLarge(f"{len(concepts)} concepts exceed {MAX_CONCEPTS}")
    errs = [(train.error_of(f), test.error_of(f)) for f in concepts]
    joint = [et + ev for et, ev in errs]
    lam = min(joint)
    tol = 1e-12
    minimizers = [i for i, j in enumerate(joint) if j <= lam + tol]
    lam_train = min(errs[i][0] for i in minimizers)
    best = next(i for i in minimizers if errs[i][0] <= lam_train + tol)
    return lam, lam_train, lam - lam_train, concepts[best]
