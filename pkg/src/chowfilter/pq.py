"""PQ learner: L1 regression for the classifier, then filtering for the selector.

The training data is split deterministically 50/50: one half (labeled) feeds
the regression, the other half (unlabeled) is the filtering reference sample.
The filtering hyperparameters are wired from (eps, eta, A, degree) as
slack = 1/eta + eps/96, variance bound = 4 (2A)^(2 degree), additive error
= eps * eta / 96.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cvxsub
from .icf import ICFConfig, RunRecord, Selector, run_icf, selector_to_text
from .l1reg import Classifier, complement, fit_l1, threshold_round
from .polycore import Sample, enumerate_basis


@dataclass(frozen=True)
class PQConfig:
    eps: float
    delta: float
    eta: float
    degree: int
    hyper_a: float = 1.0
    seed: int = 0
    n_train: int | None = None
    n_reference: int | None = None
    n_test: int | None = None
    opt_tol: float = cvxsub.DEFAULT_OPT_TOL
    feas_tol: float = cvxsub.DEFAULT_FEAS_TOL
    strict_tau: bool = True
    multilinear: bool = False

    def __post_init__(self):
        for name in ("eps", "delta", "eta"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must be in (0, 1), got {v}")
        if self.hyper_a < 1:
            raise ValueError(f"hyper_a must be >= 1, got {self.hyper_a}")

    @property
    def derived_slack(self) -> float:
        return 1.0 / self.eta + self.eps / 96.0

    @property
    def derived_beta(self) -> float:
        return 4.0 * (2.0 * self.hyper_a) ** (2 * self.degree)

    @property
    def derived_eps(self) -> float:
        return self.eps * self.eta / 96.0


@dataclass
class PQOutput:
    classifier: Classifier
    selector: Selector
    record: RunRecord
    slack: float
    beta: float
    inner_eps: float
    config: PQConfig
    regression_objective: float = 0.0
    train_error: float | None = None


def split_indices(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic 50/50 split; a pure function of (n, seed)."""
    perm = np.random.default_rng(seed).permutation(n)
    half = n // 2
    return perm[:half], perm[half:]


def pq_learn(train: Sample, test_points: Sample, cfg: PQConfig) -> PQOutput:
    if train.labels is None:
        raise ValueError("training sample must be labeled")
    if len(train) == 0 or len(test_points) == 0:
        raise ValueError("samples must be nonempty")
    reg_idx, ref_idx = split_indices(len(train), cfg.seed)
    reg = Sample(train.points[reg_idx], train.labels[reg_idx], "train-regression", cfg.seed)
    ref = Sample(train.points[ref_idx], None, "train-reference", cfg.seed)

    basis = enumerate_basis(train.dimension, cfg.degree, cfg.multilinear)
    poly, objective = fit_l1(basis, reg)
    f_hat = threshold_round(poly, reg)
    family = [f_hat, complement(f_hat)]

    icf_cfg = ICFConfig(
        degree=cfg.degree,
        slack=cfg.derived_slack,
        beta=cfg.derived_beta,
        eps=cfg.derived_eps,
        hyper_a=cfg.hyper_a,
        opt_tol=cfg.opt_tol,
        feas_tol=cfg.feas_tol,
        strict_tau=cfg.strict_tau,
        multilinear=cfg.multilinear,
    )
    selector, record = run_icf(family, ref, test_points.unlabeled(), icf_cfg)
    return PQOutput(
        classifier=f_hat,
        selector=selector,
        record=record,
        slack=cfg.derived_slack,
        beta=cfg.derived_beta,
        inner_eps=cfg.derived_eps,
        config=cfg,
        regression_objective=objective,
        train_error=f_hat.train_error,
    )


def selective_error(h: Classifier, s: Selector, labeled_test: Sample) -> float:
    """Fraction of test points with h(x) != y and s(x) = 1."""
    if labeled_test.labels is None:
        raise ValueError("selective_error needs a labeled sample")
    preds = np.asarray(h(labeled_test.points), dtype=int)
    accepted = s.evaluate_batch(labeled_test.points)
    return float(np.mean((preds != labeled_test.labels) & (accepted == 1)))


def rejection_rate(s: Selector, points: Sample) -> float:
    if len(points) == 0:
        raise ValueError("rejection_rate needs a nonempty sample")
    return float(np.mean(s.evaluate_batch(points.points) == 0))


def run_record_to_text(output: PQOutput, metrics: dict | None = None) -> str:
    """Structured text record for one PQ run."""
    import hashlib

    cfg = output.config
    rec = output.record
    lines = [
        "pq-run-record v1",
        f"config eps={cfg.eps:.17g} delta={cfg.delta:.17g} eta={cfg.eta:.17g} "
        f"degree={cfg.degree} hyper_a={cfg.hyper_a:.17g} seed={cfg.seed} "
        f"multilinear={int(cfg.multilinear)}",
        f"derived slack={output.slack:.17g} beta={output.beta:.17g} "
        f"inner_eps={output.inner_eps:.17g}",
        f"regression objective={output.regression_objective:.17g} "
        f"train_error={output.train_error:.17g}",
        f"icf bound={rec.bound:.17g} delta={rec.delta:.17g} t={rec.t} "
        f"n_s0={rec.n_s0} n_sprime={rec.n_sprime} termination={rec.termination}",
    ]
    for i, it in enumerate(rec.iterations, 1):
        lines.append(
            f"iteration {i} objective={it.objective:.17g} "
            f"classifier={it.classifier_index} tau={it.tau:.17g} "
            f"removed={it.removed} surviving={it.surviving}"
        )
    for key, value in (metrics or {}).items():
        lines.append(f"metric {key}={value}")
    digest = hashlib.sha256(selector_to_text(output.selector).encode()).hexdigest()
    lines.append(f"selector-fingerprint {digest}")
    lines.append("end")
    return "\n".join(lines)
