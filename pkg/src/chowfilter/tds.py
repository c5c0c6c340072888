"""Tolerant shift-detecting learner.

Same pipeline as the PQ learner, plus an accept/reject decision from the
selector's empirical rejection rate on a held-out slice of the test points.
Accepts when the rejection rate stays below R*theta/(R-1) + eps/4, which is
guaranteed when the train and test marginals are within total variation
distance theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import cvxsub
from .icf import ICFConfig, RunRecord, Selector, run_icf
from .l1reg import Classifier, complement, fit_l1, threshold_round
from .pq import split_indices
from .polycore import Sample, enumerate_basis

MIN_HOLDOUT = 100


class InsufficientTestData(ValueError):
    pass


def default_R(theta: float, eps: float) -> float:
    """1 + max(sqrt(theta/2), eps/9)."""
    if not 0 <= theta < 1:
        raise ValueError(f"theta must be in [0, 1), got {theta}")
    if not 0 < eps < 1:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    return 1.0 + max(math.sqrt(theta / 2.0), eps / 9.0)


def holdout_size(eps: float, delta: float) -> int:
    return max(math.ceil(math.log(1.0 / delta) / eps**2), MIN_HOLDOUT)


def accept_threshold(slack: float, theta: float, eps: float) -> float:
    return slack * theta / (slack - 1.0) + eps / 4.0


@dataclass
class TDSVerdict:
    decision: str  # ACCEPT | REJECT
    classifier: Classifier | None
    empirical_rejection: float
    threshold: float
    record: RunRecord
    selector: Selector
    slack: float
    inner_eps: float


def tds_learn(
    train: Sample,
    test_points: Sample,
    eps: float,
    delta: float,
    theta: float,
    slack: float | None = None,
    degree: int = 2,
    hyper_a: float = 1.0,
    seed: int = 0,
    opt_tol: float = cvxsub.DEFAULT_OPT_TOL,
    feas_tol: float = cvxsub.DEFAULT_FEAS_TOL,
    strict_tau: bool = True,
    multilinear: bool = False,
) -> TDSVerdict:
    if train.labels is None:
        raise ValueError("training sample must be labeled")
    if not 0 <= theta < 1:
        raise ValueError(f"theta must be in [0, 1), got {theta}")
    if slack is None:
        slack = default_R(theta, eps)
    if slack <= 1:
        raise ValueError(f"slack must be > 1, got {slack}")

    m = holdout_size(eps, delta)
    if len(test_points) <= m:
        raise InsufficientTestData(
            f"need more than {m} test points for the accept/reject holdout, got {len(test_points)}"
        )
    # the holdout comes off the test points before the filtering split
    perm = np.random.default_rng(seed).permutation(len(test_points))
    x_test = Sample(test_points.points[perm[:m]], None, "tds-holdout", seed)
    s_prime = Sample(test_points.points[perm[m:]], None, "tds-filter", seed)

    reg_idx, ref_idx = split_indices(len(train), seed)
    reg = Sample(train.points[reg_idx], train.labels[reg_idx], "train-regression", seed)
    ref = Sample(train.points[ref_idx], None, "train-reference", seed)

    basis = enumerate_basis(train.dimension, degree, multilinear)
    poly, _ = fit_l1(basis, reg)
    f_hat = threshold_round(poly, reg)

    inner_eps = (slack - 1.0) * eps / (128.0 * slack**2)
    icf_cfg = ICFConfig(
        degree=degree,
        slack=slack,
        beta=4.0 * (2.0 * hyper_a) ** (2 * degree),
        eps=inner_eps,
        hyper_a=hyper_a,
        opt_tol=opt_tol,
        feas_tol=feas_tol,
        strict_tau=strict_tau,
        multilinear=multilinear,
    )
    selector, record = run_icf([f_hat, complement(f_hat)], ref, s_prime, icf_cfg)

    rejection = float(np.mean(selector.evaluate_batch(x_test.points) == 0))
    threshold = accept_threshold(slack, theta, eps)
    accept = rejection < threshold
    return TDSVerdict(
        decision="ACCEPT" if accept else "REJECT",
        classifier=f_hat if accept else None,
        empirical_rejection=rejection,
        threshold=threshold,
        record=record,
        selector=selector,
        slack=slack,
        inner_eps=inner_eps,
    )


def verdict_to_text(verdict: TDSVerdict) -> str:
    rec = verdict.record
    lines = [
        "tds-run-record v1",
        f"decision {verdict.decision}",
        f"empirical-rejection {verdict.empirical_rejection:.17g}",
        f"threshold {verdict.threshold:.17g}",
        f"derived slack={verdict.slack:.17g} inner_eps={verdict.inner_eps:.17g}",
        f"icf bound={rec.bound:.17g} delta={rec.delta:.17g} t={rec.t} "
        f"n_s0={rec.n_s0} n_sprime={rec.n_sprime} termination={rec.termination}",
        "end",
    ]
    return "\n".join(lines)
