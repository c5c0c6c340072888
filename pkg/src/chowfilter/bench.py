"""Synthetic distribution-shift scenarios and benchmark utilities.

Scenarios pair a training marginal (uniform hypercube, standard Gaussian, or
explicit finite support) with a shift (none, subcube conditioning, mixture
with an out-of-support cloud, Gaussian mean shift), a planted target concept,
and label-noise rates. Generation is a pure function of the scenario and its
seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .l1reg import Classifier
from .oracle import FiniteDistribution, exact_lambda, hypercube_points
from .polycore import Sample


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    train_marginal: dict
    concept: dict
    shift: dict = field(default_factory=lambda: {"kind": "none"})
    test_concept: dict | None = None
    noise_train: float = 0.0
    noise_test: float = 0.0
    n_train: int = 1000
    n_test: int = 1000
    seed: int = 0

    def __post_init__(self):
        for name in ("noise_train", "noise_test"):
            v = getattr(self, name)
            if not 0 <= v < 0.5:
                raise ScenarioError(f"{name} must be in [0, 1/2), got {v}")
        w = self.shift.get("weight")
        if w is not None and not 0 <= w <= 1:
            raise ScenarioError(f"mixture weight must be in [0, 1], got {w}")

    @property
    def dimension(self) -> int:
        return int(self.train_marginal["d"])

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)


# -- concepts ---------------------------------------------------------------


def concept_classifier(spec: dict) -> Classifier:
    kind = spec["kind"]
    if kind == "conjunction":
        literals = [(int(i), int(s)) for i, s in spec["literals"]]

        def conj(points):
            out = np.ones(points.shape[0], dtype=int)
            for i, s in literals:
                out &= (s * points[:, i] > 0).astype(int)
            return out

        return Classifier(kind="external", func=conj)
    if kind == "halfspace":
        w = np.asarray(spec["weights"], dtype=float)
        b = float(spec.get("bias", 0.0))
        return Classifier(kind="external", func=lambda pts: (pts @ w + b >= 0).astype(int))
    if kind == "dnf":
        terms = [concept_classifier({"kind": "conjunction", "literals": t}) for t in spec["terms"]]

        def dnf(points):
            out = np.zeros(points.shape[0], dtype=int)
            for term in terms:
                out |= term(points)
            return out

        return Classifier(kind="external", func=dnf)
    if kind == "patched":
        base = concept_classifier(spec["base"])
        center = np.asarray(spec["center"], dtype=float)
        radius = float(spec.get("radius", 1.0))

        def patched(points):
            out = np.asarray(base(points), dtype=int)
            inside = np.linalg.norm(points - center[None, :], axis=1) <= radius
            return np.where(inside, 1 - out, out)

        return Classifier(kind="external", func=patched)
    if kind == "degree2_ptf":
        quad = np.asarray(spec["quadratic"], dtype=float)
        lin = np.asarray(spec.get("linear", np.zeros(quad.shape[0])), dtype=float)
        b = float(spec.get("bias", 0.0))

        def ptf(points):
            vals = np.einsum("ni,ij,nj->n", points, quad, points) + points @ lin + b
            return (vals >= 0).astype(int)

        return Classifier(kind="external", func=ptf)
    raise ScenarioError(f"unknown concept kind {kind!r}")


def enumerate_conjunctions(d: int, max_literals: int = 3):
    """All conjunctions over at most max_literals literals (incl. constants)."""
    import itertools

    concepts = [concept_classifier({"kind": "conjunction", "literals": []})]
    concepts.append(Classifier(kind="constant", constant_value=0))
    for k in range(1, max_literals + 1):
        for idx in itertools.combinations(range(d), k):
            for signs in itertools.product((-1, 1), repeat=k):
                literals = list(zip(idx, signs))
                concepts.append(concept_classifier({"kind": "conjunction", "literals": literals}))
    return concepts


def enumerate_halfspaces(d: int, weight_bound: int = 2):
    """All halfspaces with integer weights and bias in [-bound, bound]."""
    import itertools

    rng = range(-weight_bound, weight_bound + 1)
    concepts = []
    for weights in itertools.product(rng, repeat=d):
        for bias in rng:
            concepts.append(
                concept_classifier({"kind": "halfspace", "weights": list(weights), "bias": bias})
            )
    return concepts


# -- generation -------------------------------------------------------------


def _sample_marginal(spec: dict, n: int, rng: np.random.Generator) -> np.ndarray:
    kind = spec["kind"]
    d = int(spec["d"])
    if kind == "hypercube":
        return (2 * rng.integers(0, 2, size=(n, d)) - 1).astype(float)
    if kind == "gaussian":
        return rng.standard_normal((n, d))
    if kind == "finite":
        support = np.asarray(spec["support"], dtype=float)
        weights = np.asarray(spec["weights"], dtype=float)
        idx = rng.choice(len(support), size=n, p=weights / weights.sum())
        return support[idx]
    raise ScenarioError(f"unknown marginal kind {kind!r}")


def _apply_subcube(points: np.ndarray, pattern: dict) -> np.ndarray:
    out = points.copy()
    for coord, value in pattern.items():
        out[:, int(coord)] = float(value)
    return out


def _sample_cloud(spec: dict, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    if "points" in spec:
        pts = np.asarray(spec["points"], dtype=float)
        return pts[rng.integers(0, len(pts), size=n)]
    center = np.broadcast_to(np.asarray(spec.get("center", 3.0), dtype=float), (d,))
    scale = float(spec.get("scale", 0.0))
    return center[None, :] + scale * rng.standard_normal((n, d))


def _sample_test_marginal(scn: Scenario, n: int, rng: np.random.Generator) -> np.ndarray:
    shift = scn.shift
    kind = shift["kind"]
    base = _sample_marginal(scn.train_marginal, n, rng)
    if kind == "none":
        return base
    if kind == "subcube":
        return _apply_subcube(base, shift["pattern"])
    if kind == "mixture":
        w = float(shift["weight"])
        if "pattern" in shift:
            base = _apply_subcube(base, shift["pattern"])
        cloud = _sample_cloud(shift.get("cloud", {}), n, scn.dimension, rng)
        use_cloud = rng.random(n) < w
        return np.where(use_cloud[:, None], cloud, base)
    if kind == "mean_shift":
        mu = np.broadcast_to(np.asarray(shift["mu"], dtype=float), (scn.dimension,))
        return base + mu[None, :]
    raise ScenarioError(f"unknown shift kind {kind!r}")


def _label(points: np.ndarray, concept: Classifier, noise: float, rng: np.random.Generator):
    labels = np.asarray(concept(points), dtype=int)
    if noise > 0:
        flip = rng.random(len(labels)) < noise
        labels = np.where(flip, 1 - labels, labels)
    return labels


def generate(scn: Scenario) -> tuple[Sample, Sample]:
    """Labeled (train, test) samples; bit-identical for identical scenario+seed."""
    rng = np.random.default_rng(scn.seed)
    concept = concept_classifier(scn.concept)
    test_concept = (
        concept_classifier(scn.test_concept) if scn.test_concept is not None else concept
    )
    train_pts = _sample_marginal(scn.train_marginal, scn.n_train, rng)
    train_labels = _label(train_pts, concept, scn.noise_train, rng)
    test_pts = _sample_test_marginal(scn, scn.n_test, rng)
    test_labels = _label(test_pts, test_concept, scn.noise_test, rng)
    return (
        Sample(train_pts, train_labels, "train", scn.seed),
        Sample(test_pts, test_labels, "test", scn.seed),
    )


def fresh_train_points(scn: Scenario, n: int, seed: int) -> Sample:
    rng = np.random.default_rng(seed)
    return Sample(_sample_marginal(scn.train_marginal, n, rng), None, "train-fresh", seed)


def fresh_test_sample(scn: Scenario, n: int, seed: int) -> Sample:
    rng = np.random.default_rng(seed)
    pts = _sample_test_marginal(scn, n, rng)
    concept = concept_classifier(scn.test_concept or scn.concept)
    labels = _label(pts, concept, scn.noise_test, rng)
    return Sample(pts, labels, "test-fresh", seed)


# -- exact marginals for the oracle ----------------------------------------


def _finite_marginal(scn: Scenario, which: str):
    """(support, weights) of the train or test marginal, when finite."""
    tm = scn.train_marginal
    if tm["kind"] == "hypercube":
        base = hypercube_points(tm["d"])
        base_w = np.full(len(base), 1.0 / len(base))
    elif tm["kind"] == "finite":
        base = np.asarray(tm["support"], dtype=float)
        base_w = np.asarray(tm["weights"], dtype=float)
        base_w = base_w / base_w.sum()
    else:
        raise ScenarioError(f"marginal kind {tm['kind']!r} has no finite enumeration")
    if which == "train":
        return base, base_w
    shift = scn.shift
    kind = shift["kind"]
    if kind == "none":
        return base, base_w
    if kind == "subcube":
        shifted = _apply_subcube(base, shift["pattern"])
        return _dedupe(shifted, base_w)
    if kind == "mixture":
        w = float(shift["weight"])
        cloud = shift.get("cloud", {})
        if "points" in cloud:
            cloud_pts = np.asarray(cloud["points"], dtype=float)
        elif float(cloud.get("scale", 0.0)) == 0.0:
            center = np.broadcast_to(
                np.asarray(cloud.get("center", 3.0), dtype=float), (scn.dimension,)
            )
            cloud_pts = center[None, :]
        else:
            raise ScenarioError("continuous cloud has no finite enumeration")
        sub = _apply_subcube(base, shift["pattern"]) if "pattern" in shift else base
        pts = np.vstack([sub, cloud_pts])
        wts = np.concatenate(
            [(1 - w) * base_w, np.full(len(cloud_pts), w / len(cloud_pts))]
        )
        return _dedupe(pts, wts)
    raise ScenarioError(f"shift kind {kind!r} has no finite enumeration")


def _dedupe(points: np.ndarray, weights: np.ndarray):
    uniq, inverse = np.unique(points, axis=0, return_inverse=True)
    agg = np.zeros(len(uniq))
    np.add.at(agg, inverse, weights)
    return uniq, agg


def exact_marginals(scn: Scenario) -> tuple[FiniteDistribution, FiniteDistribution]:
    """Labeled finite-support train/test distributions, noise expanded exactly."""
    out = []
    for which, concept_spec, noise in (
        ("train", scn.concept, scn.noise_train),
        ("test", scn.test_concept or scn.concept, scn.noise_test),
    ):
        support, weights = _finite_marginal(scn, which)
        concept = concept_classifier(concept_spec)
        labels = np.asarray(concept(support), dtype=int)
        if noise > 0:
            support = np.vstack([support, support])
            weights = np.concatenate([(1 - noise) * weights, noise * weights])
            labels = np.concatenate([labels, 1 - labels])
        out.append(FiniteDistribution(support, weights, labels))
    return out[0], out[1]


def oracle_lambda(scn: Scenario, concepts=None):
    """(lambda, lambda_train, lambda_test, opt_train) for an enumerable class."""
    train, test = exact_marginals(scn)
    if concepts is None:
        concepts = enumerate_conjunctions(scn.dimension)
    lam, lam_train, lam_test, _ = exact_lambda(concepts, train, test)
    opt_train = min(train.error_of(f) for f in concepts)
    return lam, lam_train, lam_test, opt_train


# -- scenario files ---------------------------------------------------------
#
# INI layout: a [scenario] section for sizes/noise/seed, plus [train_marginal],
# [shift], [concept] and optional [test_concept] sections. Vectors are
# space-separated, point lists use ';' between rows, literal/pattern lists use
# "index:value" pairs separated by commas.


def _parse_vector(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _parse_points(text: str) -> list[list[float]]:
    return [_parse_vector(row) for row in text.split(";") if row.strip()]


def _parse_pairs(text: str) -> list[tuple[int, float]]:
    pairs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        idx, val = item.split(":")
        pairs.append((int(idx), float(val)))
    return pairs


def _concept_from_section(sec) -> dict:
    kind = sec["kind"]
    if kind == "conjunction":
        return {"kind": kind, "literals": [(i, int(s)) for i, s in _parse_pairs(sec.get("literals", ""))]}
    if kind == "halfspace":
        return {"kind": kind, "weights": _parse_vector(sec["weights"]), "bias": sec.getfloat("bias", 0.0)}
    if kind == "dnf":
        terms = [
            [(i, int(s)) for i, s in _parse_pairs(term)]
            for term in sec["terms"].split("|")
        ]
        return {"kind": kind, "terms": terms}
    if kind == "patched":
        return {
            "kind": kind,
            "base": {"kind": "conjunction",
                     "literals": [(i, int(s)) for i, s in _parse_pairs(sec.get("base_literals", ""))]},
            "center": _parse_vector(sec["center"]),
            "radius": sec.getfloat("radius", 1.0),
        }
    if kind == "degree2_ptf":
        quad = _parse_points(sec["quadratic"])
        spec = {"kind": kind, "quadratic": quad, "bias": sec.getfloat("bias", 0.0)}
        if "linear" in sec:
            spec["linear"] = _parse_vector(sec["linear"])
        return spec
    raise ScenarioError(f"unknown concept kind {kind!r}")


def scenario_from_file(path: str) -> Scenario:
    import configparser

    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    if "train_marginal" not in parser or "concept" not in parser:
        raise ScenarioError("scenario file needs [train_marginal] and [concept] sections")

    tm_sec = parser["train_marginal"]
    marginal: dict = {"kind": tm_sec["kind"], "d": tm_sec.getint("d")}
    if marginal["kind"] == "finite":
        marginal["support"] = _parse_points(tm_sec["support"])
        marginal["weights"] = _parse_vector(tm_sec["weights"])

    shift: dict = {"kind": "none"}
    if "shift" in parser:
        sh = parser["shift"]
        shift = {"kind": sh.get("kind", "none")}
        if "weight" in sh:
            shift["weight"] = sh.getfloat("weight")
        if "pattern" in sh:
            shift["pattern"] = {i: v for i, v in _parse_pairs(sh["pattern"])}
        if "mu" in sh:
            shift["mu"] = _parse_vector(sh["mu"])
        cloud = {}
        if "cloud_points" in sh:
            cloud["points"] = _parse_points(sh["cloud_points"])
        if "cloud_center" in sh:
            center = _parse_vector(sh["cloud_center"])
            cloud["center"] = center[0] if len(center) == 1 else center
        if "cloud_scale" in sh:
            cloud["scale"] = sh.getfloat("cloud_scale")
        if cloud:
            shift["cloud"] = cloud

    meta = parser["scenario"] if "scenario" in parser else {}

    def geti(key, default):
        return int(meta.get(key, default))

    def getf(key, default):
        return float(meta.get(key, default))

    return Scenario(
        name=meta.get("name", "unnamed"),
        train_marginal=marginal,
        concept=_concept_from_section(parser["concept"]),
        shift=shift,
        test_concept=_concept_from_section(parser["test_concept"]) if "test_concept" in parser else None,
        noise_train=getf("noise_train", 0.0),
        noise_test=getf("noise_test", 0.0),
        n_train=geti("n_train", 1000),
        n_test=geti("n_test", 1000),
        seed=geti("seed", 0),
    )


# -- degree recommendation --------------------------------------------------


def recommend_degree(class_spec: str, eps: float, **params) -> tuple[int, str]:
    """Degree formula for a known class with all hidden constants set to 1.

    The returned value is a heuristic: the underlying bounds are asymptotic,
    so the formulas are evaluated with every hidden constant replaced by 1.
    """
    if not 0 < eps <= 1:
        raise ValueError(f"eps must be in (0, 1], got {eps}")
    if class_spec == "ac0":
        s, t = params["size"], params["depth"]
        value = math.log(max(s, 2)) ** t * math.log(math.e / eps)
    elif class_spec == "decision_tree_halfspaces":
        s, t = params["size"], params["depth"]
        value = t**4 * s**2 / eps**2
    elif class_spec == "degree2_ptf":
        marginal = params.get("marginal", "gaussian")
        value = eps**-8 if marginal == "gaussian" else eps**-9
    elif class_spec == "degreek_ptf":
        k = params["k"]
        value = eps ** (-4 * k * 7**k)
    elif class_spec == "functions_of_halfspaces":
        k = params["k"]
        value = math.exp(math.log(max(math.log(max(k, 2)), 1.0) / eps) ** k / eps**4)
    else:
        raise ScenarioError(f"unknown class {class_spec!r}")
    return max(1, math.ceil(value)), "heuristic"


# -- metrics ----------------------------------------------------------------


def evaluate_run(output, labeled_test: Sample, scn: Scenario | None = None, concepts=None, n_fresh: int = 2000) -> dict:
    """Metric record for a PQ output or TDS verdict."""
    from .pq import PQOutput, rejection_rate, selective_error
    from .tds import TDSVerdict

    record: dict = {}
    if isinstance(output, TDSVerdict):
        record["decision"] = output.decision
        record["empirical_rejection"] = output.empirical_rejection
        record["accept_threshold"] = output.threshold
        if output.decision == "REJECT":
            return record
        classifier, selector = output.classifier, output.selector
    else:
        assert isinstance(output, PQOutput)
        classifier, selector = output.classifier, output.selector

    if labeled_test.labels is None:
        raise ValueError("evaluate_run needs a labeled test sample")
    preds = np.asarray(classifier(labeled_test.points), dtype=int)
    record["test_error"] = float(np.mean(preds != labeled_test.labels))
    record["selective_error"] = selective_error(classifier, selector, labeled_test)
    record["rejection_test"] = rejection_rate(selector, labeled_test)
    if scn is not None:
        fresh = fresh_train_points(scn, n_fresh, scn.seed + 10_000_019)
        record["rejection_train_fresh"] = rejection_rate(selector, fresh)
        try:
            lam, lam_train, lam_test, opt_train = oracle_lambda(scn, concepts)
            record.update(
                oracle_lambda_joint=lam,
                oracle_lambda_train=lam_train,
                oracle_lambda_test=lam_test,
                oracle_opt_train=opt_train,
            )
            if isinstance(output, PQOutput):
                bound = lam_test + (lam_train + opt_train) / output.config.eta + output.config.eps
                record["pq_bound"] = bound
                record["bound_slack"] = bound - record["selective_error"]
        except ScenarioError:
            pass
    return record
