"""Iterative Chow filtering.

Builds a selector over test points by repeatedly finding a witness polynomial
whose classifier-weighted expectation over the surviving test points is too
large relative to the training-side constraint set, then filtering the points
above a threshold chosen so that disproportionately more test mass than
training mass is removed.

The selector is the conjunction of a boundedness indicator (the witness value
at the point stays below a radius fixed by the schedule) and one threshold
rule per filtering iteration.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import cvxsub
from .cvxsub import ConstraintSet, WitnessSolution, build_constraint_set, solve_witness
from .l1reg import Classifier
from .polycore import MonomialBasis, Polynomial, Sample, enumerate_basis


class NoValidThreshold(RuntimeError):
    """No candidate threshold satisfies the mass-discrepancy condition.

    Possible only when the witness optimization is solved approximately; the
    exactness argument guarantees a valid threshold for an exact maximizer.
    """


@dataclass(frozen=True)
class ICFConfig:
    degree: int
    slack: float  # multiplicative slack, > 1
    beta: float  # polynomial variance bound, > 0
    eps: float  # additive error, in (0, 1)
    hyper_a: float = 1.0  # hypercontractivity constant (documentation/defaults)
    opt_tol: float = cvxsub.DEFAULT_OPT_TOL
    feas_tol: float = cvxsub.DEFAULT_FEAS_TOL
    strict_tau: bool = True
    max_iterations: int | None = None
    multilinear: bool = False

    def __post_init__(self):
        if self.slack <= 1:
            raise ValueError(f"slack must be > 1, got {self.slack}")
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must be in (0, 1), got {self.eps}")
        if self.hyper_a < 1:
            raise ValueError(f"hyper_a must be >= 1, got {self.hyper_a}")


def compute_schedule(cfg: ICFConfig, d: int) -> tuple[float, float]:
    """Boundedness radius B and minimum removal fraction Delta.

    B = 2 sqrt(2 R (d+1)^degree beta / eps), Delta = eps^2 / (B (2R + eps)).
    """
    bound = 2.0 * math.sqrt(2.0 * cfg.slack * (d + 1) ** cfg.degree * cfg.beta / cfg.eps)
    if not math.isfinite(bound) or bound == 0.0:
        raise OverflowError(f"schedule overflow: B={bound}")
    delta = cfg.eps**2 / (bound * (2.0 * cfg.slack + cfg.eps))
    return bound, delta


@dataclass(frozen=True)
class FilterRule:
    classifier_index: int
    witness: Polynomial
    tau: float


@dataclass
class IterationRecord:
    objective: float
    classifier_index: int
    tau: float | None
    removed: int
    surviving: int


@dataclass
class RunRecord:
    n_sprime: int
    n_s0: int
    bound: float
    delta: float
    iterations: list = field(default_factory=list)
    termination: str = ""
    projector_ranks: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    degenerate_s0: bool = False
    surviving_indices: np.ndarray | None = None

    @property
    def t(self) -> int:
        return len(self.iterations)

    @property
    def total_removed(self) -> int:
        return sum(rec.removed for rec in self.iterations)


class Selector:
    """Succinct filter description: radius, constraint sets, threshold rules."""

    def __init__(
        self,
        bound: float,
        classifiers: list[Classifier],
        constraint_sets: list[ConstraintSet],
        rules: list[FilterRule],
        config: ICFConfig,
    ):
        self.bound = float(bound)
        self.classifiers = classifiers
        self.constraint_sets = constraint_sets
        self.rules = rules
        self.config = config
        self._decision_cache: dict[bytes, int] = {}

    def evaluate(self, x: np.ndarray) -> int:
        return int(self.evaluate_batch(np.atleast_2d(np.asarray(x, dtype=float)))[0])

    def evaluate_batch(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = points.shape[0]
        out = np.full(n, -1, dtype=int)
        fresh = []
        for i in range(n):
            cached = self._decision_cache.get(points[i].tobytes())
            if cached is None:
                fresh.append(i)
            else:
                out[i] = cached
        if fresh:
            sub = points[fresh]
            accept = bounded_mask(
                sub,
                self.classifiers,
                self.constraint_sets,
                self.bound,
                self.config.opt_tol,
                self.config.feas_tol,
            )
            for rule in self.rules:
                f_vals = np.asarray(self.classifiers[rule.classifier_index](sub), dtype=float)
                vals = f_vals * np.abs(rule.witness(sub))
                accept &= vals <= rule.tau
            for j, i in enumerate(fresh):
                out[i] = int(accept[j])
        return out

    def cache_decisions(self, points: np.ndarray, decisions: np.ndarray):
        for x, dec in zip(points, decisions):
            self._decision_cache[x.tobytes()] = int(dec)


def evaluate_selector(sel: Selector, x: np.ndarray) -> int:
    return sel.evaluate(x)


def bounded_mask(
    points: np.ndarray,
    classifiers: list[Classifier],
    constraint_sets: list[ConstraintSet],
    bound: float,
    opt_tol: float,
    feas_tol: float,
) -> np.ndarray:
    """Boundedness factor: max over active classifiers of the witness value <= B.

    A cheap quadratic-only upper bound screens points first; the convex solve
    runs only where the screen exceeds the radius. Per-point solve results are
    memoized in each constraint set.
    """
    points = np.atleast_2d(points)
    n = points.shape[0]
    ok = np.ones(n, dtype=bool)
    for f, cs in zip(classifiers, constraint_sets):
        active = np.asarray(f(points), dtype=bool)
        if not active.any():
            continue
        idx = np.flatnonzero(active)
        feats = cs.basis.feature_matrix(points[idx])
        screen = cs.quad_only_bound(feats)
        for j in np.flatnonzero(screen > bound):
            value = cvxsub.max_abs_at_point(points[idx[j]], cs, opt_tol, feas_tol)
            if value > bound:
                ok[idx[j]] = False
    return ok


def initial_filter(
    sprime: Sample,
    classifiers: list[Classifier],
    constraint_sets: list[ConstraintSet],
    bound: float,
    opt_tol: float = cvxsub.DEFAULT_OPT_TOL,
    feas_tol: float = cvxsub.DEFAULT_FEAS_TOL,
) -> np.ndarray:
    """Indices of test points surviving the preliminary boundedness step."""
    mask = bounded_mask(sprime.points, classifiers, constraint_sets, bound, opt_tol, feas_tol)
    return np.flatnonzero(mask)


def find_tau(
    surviving_values: np.ndarray,
    train_values: np.ndarray,
    n_prime: int,
    slack: float,
    delta: float,
) -> float:
    """Smallest candidate threshold with the required mass discrepancy.

    Both sides of the condition are right-continuous step functions that are
    constant between candidate values {0} union the observed values, so the
    ascending scan over candidates is exact.
    """
    surviving_values = np.sort(np.asarray(surviving_values, dtype=float))
    train_values = np.sort(np.asarray(train_values, dtype=float))
    n_train = len(train_values)
    candidates = np.unique(np.concatenate([[0.0], surviving_values, train_values]))
    lhs = (len(surviving_values) - np.searchsorted(surviving_values, candidates, side="right")) / n_prime
    rhs = slack * (n_train - np.searchsorted(train_values, candidates, side="right")) / n_train + delta
    hits = np.flatnonzero(lhs >= rhs)
    if hits.size == 0:
        raise NoValidThreshold(
            "no candidate threshold satisfies the mass-discrepancy condition"
        )
    return float(candidates[hits[0]])


def run_icf(
    classifiers: list[Classifier],
    s_train: Sample,
    s_test: Sample,
    cfg: ICFConfig,
) -> tuple[Selector, RunRecord]:
    """Full filtering loop; returns the selector and the run diagnostics."""
    if len(s_train) == 0 or len(s_test) == 0:
        raise ValueError("both samples must be nonempty")
    if not classifiers:
        raise ValueError("classifier list must be nonempty")
    t0 = time.perf_counter()
    d = s_train.dimension
    basis = enumerate_basis(d, cfg.degree, cfg.multilinear)
    bound, delta = compute_schedule(cfg, d)
    css = [
        build_constraint_set(f, s_train, basis, cfg.beta, cfg.eps, cfg.slack)
        for f in classifiers
    ]
    record = RunRecord(
        n_sprime=len(s_test),
        n_s0=0,
        bound=bound,
        delta=delta,
        projector_ranks=[cs.rank for cs in css],
    )
    t1 = time.perf_counter()

    surviving = initial_filter(s_test, classifiers, css, bound, cfg.opt_tol, cfg.feas_tol)
    record.n_s0 = len(surviving)
    t2 = time.perf_counter()

    n_prime = len(s_test)
    feats_test = s_test.features(basis)
    f_test = [np.asarray(f(s_test.points), dtype=float) for f in classifiers]
    f_train = [np.asarray(f(s_train.points), dtype=float) for f in classifiers]
    feats_train = s_train.features(basis)

    rules: list[FilterRule] = []
    budget = cfg.max_iterations if cfg.max_iterations is not None else math.floor(1.0 / delta) + 1

    if len(surviving) == 0:
        record.degenerate_s0 = True
        record.termination = "degenerate_empty_s0"
    else:
        for _ in range(budget + 1):
            best: WitnessSolution | None = None
            for idx, cs in enumerate(css):
                a = f_test[idx][surviving] @ feats_test[surviving] / n_prime
                sol = solve_witness(a, cs, cfg.opt_tol, cfg.feas_tol, classifier_index=idx)
                if best is None or sol.objective > best.objective:
                    best = sol
            if best.objective <= cfg.eps:
                record.termination = "converged"
                break
            i = best.classifier_index
            vals_test = f_test[i] * np.abs(feats_test @ best.coefficients)
            vals_train = f_train[i] * np.abs(feats_train @ best.coefficients)
            try:
                tau = find_tau(vals_test[surviving], vals_train, n_prime, cfg.slack, delta)
            except NoValidThreshold:
                if cfg.strict_tau:
                    raise
                record.termination = "terminated_inconsistent"
                break
            keep = vals_test[surviving] <= tau
            removed = int((~keep).sum())
            surviving = surviving[keep]
            rules.append(FilterRule(i, Polynomial(basis, best.coefficients), tau))
            record.iterations.append(
                IterationRecord(best.objective, i, tau, removed, len(surviving))
            )
        else:
            raise RuntimeError("iteration budget exhausted; this contradicts the removal bound")

    selector = Selector(bound, classifiers, css, rules, cfg)
    record.surviving_indices = np.array(surviving, dtype=int, copy=True)
    decisions = np.zeros(n_prime, dtype=int)
    decisions[surviving] = 1
    selector.cache_decisions(s_test.points, decisions)
    t3 = time.perf_counter()
    record.timings = {
        "setup": t1 - t0,
        "initial_filter": t2 - t1,
        "loop": t3 - t2,
        "total": t3 - t0,
    }
    return selector, record


# -- serialization ----------------------------------------------------------


def constraint_set_fingerprint(cs: ConstraintSet) -> str:
    h = hashlib.sha256()
    h.update(cs.gram.tobytes())
    h.update(np.ascontiguousarray(cs.abs_rows).tobytes())
    h.update(f"{cs.quad_bound:.17g} {cs.abs_bound:.17g} {cs.row_weight:.17g}".encode())
    return h.hexdigest()


def selector_to_text(sel: Selector) -> str:
    cfg = sel.config
    lines = [
        "selector-record v1",
        f"bound {sel.bound:.17g}",
        f"config degree={cfg.degree} slack={cfg.slack:.17g} beta={cfg.beta:.17g} "
        f"eps={cfg.eps:.17g} hyper_a={cfg.hyper_a:.17g} multilinear={int(cfg.multilinear)}",
        f"constraint-sets {len(sel.constraint_sets)}",
    ]
    lines.extend(constraint_set_fingerprint(cs) for cs in sel.constraint_sets)
    lines.append(f"rules {len(sel.rules)}")
    for rule in sel.rules:
        lines.append(f"rule classifier={rule.classifier_index} tau={rule.tau:.17g}")
        lines.append(f"coefficients {len(rule.witness.coefficients)}")
        lines.extend(f"{c:.17g}" for c in rule.witness.coefficients)
    lines.append("end")
    return "\n".join(lines)


def selector_from_text(
    text: str,
    classifiers: list[Classifier],
    constraint_sets: list[ConstraintSet],
) -> Selector:
    """Rebuild a selector from its record, re-attaching live constraint sets.

    The record stores only fingerprints of the constraint sets; the caller
    supplies the live objects, which are checked against those fingerprints.
    """
    lines = text.strip().splitlines()
    if lines[0] != "selector-record v1":
        raise ValueError("not a selector record")
    bound = float(lines[1].split(" ", 1)[1])
    spec = dict(item.split("=") for item in lines[2].split(" ")[1:])
    cfg = ICFConfig(
        degree=int(spec["degree"]),
        slack=float(spec["slack"]),
        beta=float(spec["beta"]),
        eps=float(spec["eps"]),
        hyper_a=float(spec["hyper_a"]),
        multilinear=bool(int(spec["multilinear"])),
    )
    pos = 3
    n_cs = int(lines[pos].split(" ", 1)[1])
    pos += 1
    fingerprints = lines[pos : pos + n_cs]
    pos += n_cs
    if len(constraint_sets) != n_cs:
        raise ValueError("constraint set count mismatch")
    for cs, fp in zip(constraint_sets, fingerprints):
        if constraint_set_fingerprint(cs) != fp:
            raise ValueError("constraint set fingerprint mismatch")
    basis = enumerate_basis(
        constraint_sets[0].basis.dimension, cfg.degree, cfg.multilinear
    )
    n_rules = int(lines[pos].split(" ", 1)[1])
    pos += 1
    rules = []
    for _ in range(n_rules):
        head = dict(item.split("=") for item in lines[pos].split(" ")[1:])
        count = int(lines[pos + 1].split(" ", 1)[1])
        coeffs = np.array([float(v) for v in lines[pos + 2 : pos + 2 + count]])
        rules.append(
            FilterRule(int(head["classifier"]), Polynomial(basis, coeffs), float(head["tau"]))
        )
        pos += 2 + count
    return Selector(bound, classifiers, constraint_sets, rules, cfg)
