"""Monomial bases, polynomials, samples, and empirical moments.

All types are immutable after construction. The canonical monomial order is
graded-lexicographic (by total degree, then lexicographic on the exponent
tuple), so a basis enumerates identically across runs and processes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np

DEFAULT_BASIS_CAP = 200_000


class BasisSizeError(ValueError):
    """Requested basis would exceed the configured monomial cap."""


class DimensionMismatchError(ValueError):
    pass


class EmptySampleError(ValueError):
    pass


def _basis_size(d: int, degree: int, multilinear: bool) -> int:
    if multilinear:
        return sum(comb(d, k) for k in range(0, min(degree, d) + 1))
    return comb(d + degree, degree)


@dataclass(frozen=True)
class MonomialBasis:
    """Canonical enumeration of multi-indices alpha with |alpha| <= degree."""

    dimension: int
    degree: int
    multilinear: bool
    exponents: np.ndarray  # shape (size, dimension), int

    def __len__(self) -> int:
        return self.exponents.shape[0]

    def key(self) -> tuple:
        return (self.dimension, self.degree, self.multilinear)

    def feature_matrix(self, points: np.ndarray) -> np.ndarray:
        """Feature rows m(x) for each point: product of x_j ** alpha_j."""
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[None, :]
        if points.shape[1] != self.dimension:
            raise DimensionMismatchError(
                f"points have dimension {points.shape[1]}, basis expects {self.dimension}"
            )
        n = points.shape[0]
        out = np.ones((n, len(self)))
        for j in range(self.dimension):
            col = points[:, j]
            exps = self.exponents[:, j]
            maxe = int(exps.max()) if len(exps) else 0
            if maxe == 0:
                continue
            # powers[e] = col ** e, computed once per coordinate
            powers = np.ones((maxe + 1, n))
            for e in range(1, maxe + 1):
                powers[e] = powers[e - 1] * col
            out *= powers[exps].T
        return out


def enumerate_basis(
    d: int,
    degree: int,
    multilinear: bool = False,
    cap: int = DEFAULT_BASIS_CAP,
) -> MonomialBasis:
    """Graded-lex enumeration of the monomial basis of degree <= `degree`."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    size = _basis_size(d, degree, multilinear)
    if size > cap:
        raise BasisSizeError(
            f"basis size {size} exceeds cap {cap} (d={d}, degree={degree})"
        )
    rows = []
    for total in range(degree + 1):
        grade = []
        if multilinear:
            if total > d:
                break
            for idx in itertools.combinations(range(d), total):
                alpha = [0] * d
                for j in idx:
                    alpha[j] = 1
                grade.append(alpha)
        else:
            for alpha in _compositions(total, d):
                grade.append(alpha)
        grade.sort()
        rows.extend(grade)
    exponents = np.array(rows, dtype=int).reshape(len(rows), d)
    exponents.setflags(write=False)
    basis = MonomialBasis(d, degree, multilinear, exponents)
    assert len(basis) == size
    return basis


def _compositions(total: int, d: int):
    """All alpha in N^d with sum(alpha) == total."""
    if d == 1:
        yield [total]
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, d - 1):
            yield [first] + rest


@dataclass(frozen=True)
class Polynomial:
    """Coefficient vector over a monomial basis."""

    basis: MonomialBasis
    coefficients: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=float)
        if coeffs.shape != (len(self.basis),):
            raise DimensionMismatchError(
                f"expected {len(self.basis)} coefficients, got {coeffs.shape}"
            )
        object.__setattr__(self, "coefficients", coeffs)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.basis.feature_matrix(points) @ self.coefficients


def eval_poly(p: Polynomial, x: np.ndarray) -> float | np.ndarray:
    """Evaluate p at a single point or a batch of points."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return float(p(x[None, :])[0])
    return p(x)


@dataclass
class Sample:
    """Point set with optional {0,1} labels and a provenance tag."""

    points: np.ndarray
    labels: np.ndarray | None = None
    tag: str = ""
    seed: int | None = None
    _feature_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if self.labels.shape[0] != self.points.shape[0]:
                raise ValueError("labels and points have different lengths")
            if not np.isin(self.labels, (0, 1)).all():
                raise ValueError("labels must be in {0, 1}")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def features(self, basis: MonomialBasis) -> np.ndarray:
        """Feature matrix for this sample, cached per basis."""
        key = basis.key()
        if key not in self._feature_cache:
            self._feature_cache[key] = basis.feature_matrix(self.points)
        return self._feature_cache[key]

    def unlabeled(self, tag: str | None = None) -> "Sample":
        return Sample(self.points, None, self.tag if tag is None else tag, self.seed)


def empirical_gram(basis: MonomialBasis, sample: Sample) -> np.ndarray:
    """G = (1/n) sum m(x) m(x)^T, so c^T G c is the empirical mean of p_c(x)^2."""
    if len(sample) == 0:
        raise EmptySampleError("empirical_gram needs at least one point")
    m = sample.features(basis)
    gram = (m.T @ m) / len(sample)
    return (gram + gram.T) / 2.0


def empirical_weighted_abs_mean(f, p: Polynomial, sample: Sample) -> float:
    """(1/n) sum f(x) |p(x)| for a {0,1}-valued classifier f."""
    if len(sample) == 0:
        raise EmptySampleError("empirical_weighted_abs_mean needs at least one point")
    fx = np.asarray(f(sample.points), dtype=float)
    vals = sample.features(p.basis) @ p.coefficients
    return float(np.mean(fx * np.abs(vals)))
