"""Command-line entry point.

Subcommands:
  pq-run       classifier + selector from a scenario file, metrics, selector file
  tds-run      accept/reject run with the same pipeline plus a holdout decision
  icf-run      filtering loop alone, with explicit slack/eps/beta overrides
  bench-sweep  grid of overrides x seeds, worker pool, aggregated table
  oracle-check sampled-estimator vs brute-force consistency suite

Exit codes: 0 success, 2 validation error, 3 solver failure. Output files are
written to a temp path and renamed, so no partial file is ever left behind.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys
import time

import numpy as np

from . import bench, report
from .bench import Scenario, ScenarioError, evaluate_run, generate, scenario_from_file
from .cvxsub import DEFAULT_FEAS_TOL, DEFAULT_OPT_TOL, WitnessSolveError
from .icf import ICFConfig, NoValidThreshold, run_icf
from .l1reg import RegressionError, classifier_to_text, complement, fit_classifier
from .oracle import exact_chow, exact_expectation_hypercube, hypercube_points
from .polycore import Polynomial, Sample, enumerate_basis
from .pq import PQConfig, pq_learn, rejection_rate, run_record_to_text
from .tds import tds_learn, verdict_to_text

PQ_COLUMNS = [
    "scenario", "seed", "eps", "eta", "degree", "status", "t", "n_s0",
    "termination", "test_error", "selective_error", "rejection_test",
    "rejection_train_fresh", "oracle_lambda_joint", "oracle_lambda_train",
    "oracle_lambda_test", "oracle_opt_train", "pq_bound", "bound_slack",
    "time_total",
]
TDS_COLUMNS = [
    "scenario", "seed", "eps", "theta", "slack", "degree", "status",
    "decision", "empirical_rejection", "accept_threshold", "t", "n_s0",
    "termination", "test_error", "selective_error", "rejection_test",
    "time_total",
]
ICF_COLUMNS = [
    "scenario", "seed", "slack", "eps", "beta", "degree", "status", "t",
    "n_s0", "n_sprime", "bound", "delta", "termination", "rejection_test",
    "rejection_train_fresh", "time_total",
]


def _positive(kind):
    def convert(text):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value

    return convert


def _add_common(sub, need_scenario=True):
    if need_scenario:
        sub.add_argument("--scenario", required=True, help="scenario file (INI)")
    sub.add_argument("--out", default="runs", help="output directory")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--degree", type=_positive(int), default=2)
    sub.add_argument("--hyper-A", dest="hyper_a", type=float, default=1.0)
    sub.add_argument("--opt-tol", type=_positive(float), default=DEFAULT_OPT_TOL)
    sub.add_argument("--feas-tol", type=_positive(float), default=DEFAULT_FEAS_TOL)
    sub.add_argument("--n-train", type=_positive(int), default=None)
    sub.add_argument("--n-test", type=_positive(int), default=None)
    mode = sub.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strict_tau", action="store_true")
    mode.add_argument("--lenient", dest="strict_tau", action="store_false")
    sub.set_defaults(strict_tau=False)  # batch default; tests opt into strict
    sub.add_argument("--multilinear", action="store_true")
    sub.add_argument("--plots", action="store_true", help="render figures next to the table")
    sub.add_argument("--emit-plot-data", action="store_true", help="write (x,y) series files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chowfilter")
    subs = parser.add_subparsers(dest="command", required=True)

    pq = subs.add_parser("pq-run", help="train classifier+selector, report metrics")
    _add_common(pq)
    pq.add_argument("--eps", type=float, default=0.2)
    pq.add_argument("--eta", type=float, default=0.3)
    pq.add_argument("--delta", type=float, default=0.05)
    pq.set_defaults(handler=cmd_pq_run)

    tds = subs.add_parser("tds-run", help="accept/reject under distribution shift")
    _add_common(tds)
    tds.add_argument("--eps", type=float, default=0.2)
    tds.add_argument("--delta", type=float, default=0.05)
    tds.add_argument("--theta", type=float, default=0.05)
    tds.add_argument("--slack-R", dest="slack_r", type=float, default=None)
    tds.set_defaults(handler=cmd_tds_run)

    icf = subs.add_parser("icf-run", help="filtering loop with explicit parameters")
    _add_common(icf)
    icf.add_argument("--eps", type=float, default=0.2)
    icf.add_argument("--slack-R", dest="slack_r", type=float, default=2.0)
    icf.add_argument("--beta", type=float, default=None)
    icf.set_defaults(handler=cmd_icf_run)

    sweep = subs.add_parser("bench-sweep", help="grid of overrides x seeds")
    _add_common(sweep)
    sweep.add_argument("--mode", choices=["pq", "tds"], default="pq")
    sweep.add_argument("--eps", type=float, default=0.2)
    sweep.add_argument("--eta", type=float, default=0.3)
    sweep.add_argument("--delta", type=float, default=0.05)
    sweep.add_argument("--theta", type=float, default=0.05)
    sweep.add_argument("--slack-R", dest="slack_r", type=float, default=None)
    sweep.add_argument(
        "--grid", action="append", default=[],
        help="key=v1,v2,... (repeatable); keys: eps, eta, theta, slack_r, degree, n_train, n_test",
    )
    sweep.add_argument("--seeds", default="0:5", help="'a:b' half-open range or comma list")
    sweep.add_argument("--jobs", type=_positive(int), default=os.cpu_count() or 1)
    sweep.add_argument("--fail-fast", action="store_true",
                       help="abort the sweep on the first trial failure")
    sweep.set_defaults(handler=cmd_sweep)

    oc = subs.add_parser("oracle-check", help="sampled estimators vs brute force")
    oc.add_argument("--d", type=_positive(int), default=10)
    oc.add_argument("--degree", type=_positive(int), default=2)
    oc.add_argument("--n", default="1000,10000", help="comma list of sample sizes")
    oc.add_argument("--seed", type=int, default=0)
    oc.set_defaults(handler=cmd_oracle_check)
    return parser


def _parse_seeds(text: str) -> list[int]:
    if ":" in text:
        a, b = text.split(":")
        return list(range(int(a), int(b)))
    return [int(v) for v in text.split(",") if v.strip()]


def _load_scenario(args) -> Scenario:
    scn = scenario_from_file(args.scenario)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.n_train is not None:
        updates["n_train"] = args.n_train
    if args.n_test is not None:
        updates["n_test"] = args.n_test
    if updates:
        from dataclasses import replace

        scn = replace(scn, **updates)
    return scn


def _echo(args, extra: dict):
    items = {k: v for k, v in sorted(vars(args).items()) if k != "handler"}
    items.update(extra)
    print("config " + " ".join(f"{k}={v}" for k, v in items.items()))


def _finish_row(args, scn, row, record, selector, extra_files: dict):
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    tag = f"{scn.name}-seed{scn.seed}"
    for name, text in extra_files.items():
        report.atomic_write(os.path.join(outdir, f"{name}-{tag}.txt"), text)
    if args.emit_plot_data and record is not None:
        xs, ys = report.survival_series(record)
        report.write_series(os.path.join(outdir, f"survival-{tag}.dat"), xs, ys)
    if args.plots and record is not None:
        report.plot_survival(record, os.path.join(outdir, f"survival-{tag}.png"))


def _row_base(scn, record, elapsed):
    return {
        "scenario": scn.name,
        "seed": scn.seed,
        "status": "ok",
        "t": record.t,
        "n_s0": record.n_s0,
        "termination": record.termination,
        "time_total": elapsed,
    }


def cmd_pq_run(args) -> int:
    scn = _load_scenario(args)
    _echo(args, {"scenario_name": scn.name})
    t0 = time.perf_counter()
    train, test = generate(scn)
    cfg = PQConfig(
        eps=args.eps, delta=args.delta, eta=args.eta, degree=args.degree,
        hyper_a=args.hyper_a, seed=scn.seed, opt_tol=args.opt_tol,
        feas_tol=args.feas_tol, strict_tau=args.strict_tau,
        multilinear=args.multilinear,
    )
    output = pq_learn(train, test, cfg)
    metrics = evaluate_run(output, test, scn)
    elapsed = time.perf_counter() - t0
    row = _row_base(scn, output.record, elapsed)
    row.update(eps=args.eps, eta=args.eta, degree=args.degree, **metrics)

    from .icf import selector_to_text

    _finish_row(args, scn, row, output.record, output.selector, {
        "selector": selector_to_text(output.selector),
        "classifier": classifier_to_text(output.classifier),
        "pq-record": run_record_to_text(output, metrics),
    })
    report.write_table(os.path.join(args.out, "results.tsv"), PQ_COLUMNS, [row])
    for stage, sec in output.record.timings.items():
        print(f"timing {stage} {sec:.3f}s")
    print(
        f"trial scenario={scn.name} seed={scn.seed} "
        f"selective_error={metrics['selective_error']:.4f} "
        f"rejection_test={metrics['rejection_test']:.4f} t={output.record.t}"
    )
    return 0


def cmd_tds_run(args) -> int:
    scn = _load_scenario(args)
    _echo(args, {"scenario_name": scn.name})
    t0 = time.perf_counter()
    train, test = generate(scn)
    verdict = tds_learn(
        train, test.unlabeled(), eps=args.eps, delta=args.delta,
        theta=args.theta, slack=args.slack_r, degree=args.degree,
        hyper_a=args.hyper_a, seed=scn.seed, opt_tol=args.opt_tol,
        feas_tol=args.feas_tol, strict_tau=args.strict_tau,
        multilinear=args.multilinear,
    )
    metrics = evaluate_run(verdict, test)
    elapsed = time.perf_counter() - t0
    row = _row_base(scn, verdict.record, elapsed)
    row.update(eps=args.eps, theta=args.theta, slack=verdict.slack, degree=args.degree)
    row.update(metrics)
    files = {"tds-record": verdict_to_text(verdict)}
    if verdict.classifier is not None:
        files["classifier"] = classifier_to_text(verdict.classifier)
    _finish_row(args, scn, row, verdict.record, verdict.selector, files)
    report.write_table(os.path.join(args.out, "results.tsv"), TDS_COLUMNS, [row])
    print(
        f"trial scenario={scn.name} seed={scn.seed} decision={verdict.decision} "
        f"rejection={verdict.empirical_rejection:.4f} threshold={verdict.threshold:.4f}"
    )
    return 0


def cmd_icf_run(args) -> int:
    scn = _load_scenario(args)
    _echo(args, {"scenario_name": scn.name})
    t0 = time.perf_counter()
    train, test = generate(scn)
    from .pq import split_indices

    reg_idx, ref_idx = split_indices(len(train), scn.seed)
    reg = Sample(train.points[reg_idx], train.labels[reg_idx], "train-regression", scn.seed)
    ref = Sample(train.points[ref_idx], None, "train-reference", scn.seed)
    f_hat = fit_classifier(args.degree, reg, args.multilinear)
    beta = args.beta if args.beta is not None else 4.0 * (2.0 * args.hyper_a) ** (2 * args.degree)
    cfg = ICFConfig(
        degree=args.degree, slack=args.slack_r, beta=beta, eps=args.eps,
        hyper_a=args.hyper_a, opt_tol=args.opt_tol, feas_tol=args.feas_tol,
        strict_tau=args.strict_tau, multilinear=args.multilinear,
    )
    selector, record = run_icf([f_hat, complement(f_hat)], ref, test.unlabeled(), cfg)
    fresh = bench.fresh_train_points(scn, 2000, scn.seed + 10_000_019)
    elapsed = time.perf_counter() - t0
    row = _row_base(scn, record, elapsed)
    row.update(
        slack=args.slack_r, eps=args.eps, beta=beta, degree=args.degree,
        n_sprime=record.n_sprime, bound=record.bound, delta=record.delta,
        rejection_test=rejection_rate(selector, test),
        rejection_train_fresh=rejection_rate(selector, fresh),
    )
    from .icf import selector_to_text

    _finish_row(args, scn, row, record, selector, {
        "selector": selector_to_text(selector),
        "classifier": classifier_to_text(f_hat),
    })
    report.write_table(os.path.join(args.out, "results.tsv"), ICF_COLUMNS, [row])
    print(
        f"trial scenario={scn.name} seed={scn.seed} t={record.t} "
        f"rejection_test={row['rejection_test']:.4f} termination={record.termination}"
    )
    return 0


# -- sweep -------------------------------------------------------------------

_GRID_TYPES = {
    "eps": float, "eta": float, "theta": float, "slack_r": float,
    "degree": int, "n_train": int, "n_test": int,
}


def _parse_grid(specs: list[str]) -> list[dict]:
    """Cross product of key=v1,v2 specs; one empty cell when no grid given."""
    axes = []
    for spec in specs:
        key, _, values = spec.partition("=")
        key = key.replace("-", "_")
        if key not in _GRID_TYPES or not values:
            raise ScenarioError(f"bad grid spec {spec!r}")
        conv = _GRID_TYPES[key]
        axes.append([(key, conv(v)) for v in values.split(",")])
    cells = [{}]
    for axis in axes:
        cells = [dict(cell, **{k: v}) for cell in cells for k, v in axis]
    return cells


def _sweep_trial(payload):
    """One (cell, seed) trial; returns a plain row dict (runs in a worker)."""
    scn_base, mode, base, cell, seed = payload
    from dataclasses import replace

    params = dict(base)
    params.update(cell)
    scn = replace(
        scn_base,
        seed=seed,
        n_train=int(params.get("n_train", scn_base.n_train)),
        n_test=int(params.get("n_test", scn_base.n_test)),
    )
    row = {"scenario": scn.name, "seed": seed, "status": "ok"}
    row.update(cell)
    try:
        train, test = generate(scn)
        if mode == "pq":
            cfg = PQConfig(
                eps=params["eps"], delta=params["delta"], eta=params["eta"],
                degree=int(params["degree"]), hyper_a=params["hyper_a"],
                seed=seed, opt_tol=params["opt_tol"], feas_tol=params["feas_tol"],
                strict_tau=params["strict_tau"], multilinear=params["multilinear"],
            )
            output = pq_learn(train, test, cfg)
            metrics = evaluate_run(output, test, scn)
            row.update(t=output.record.t, termination=output.record.termination)
        else:
            verdict = tds_learn(
                train, test.unlabeled(), eps=params["eps"], delta=params["delta"],
                theta=params["theta"], slack=params.get("slack_r"),
                degree=int(params["degree"]), hyper_a=params["hyper_a"], seed=seed,
                opt_tol=params["opt_tol"], feas_tol=params["feas_tol"],
                strict_tau=params["strict_tau"], multilinear=params["multilinear"],
            )
            metrics = evaluate_run(verdict, test)
            row.update(
                decision=verdict.decision, t=verdict.record.t,
                empirical_rejection=verdict.empirical_rejection,
            )
        row.update(metrics)
    except (WitnessSolveError, RegressionError, NoValidThreshold) as exc:
        row["status"] = f"solver: {exc}"
    except (ValueError, ScenarioError) as exc:
        row["status"] = f"invalid: {exc}"
    return row


SWEEP_METRICS = [
    "selective_error", "rejection_test", "rejection_train_fresh", "test_error",
    "empirical_rejection",
]


def cmd_sweep(args) -> int:
    scn = _load_scenario(args)
    cells = _parse_grid(args.grid)
    seeds = _parse_seeds(args.seeds)
    _echo(args, {"scenario_name": scn.name, "cells": len(cells), "n_seeds": len(seeds)})
    base = {
        "eps": args.eps, "eta": args.eta, "delta": args.delta,
        "theta": args.theta, "slack_r": args.slack_r, "degree": args.degree,
        "hyper_a": args.hyper_a, "opt_tol": args.opt_tol,
        "feas_tol": args.feas_tol, "strict_tau": args.strict_tau,
        "multilinear": args.multilinear,
    }
    payloads = [(scn, args.mode, base, cell, seed) for cell in cells for seed in seeds]
    t0 = time.perf_counter()
    rows = []
    if payloads:
        if args.jobs == 1:
            results = map(_sweep_trial, payloads)
        else:
            pool = concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs)
            results = pool.map(_sweep_trial, payloads)
        for row in results:
            rows.append(row)
            summary = " ".join(f"{k}={row[k]}" for k in row if k in SWEEP_METRICS)
            print(f"trial seed={row['seed']} status={row['status']} {summary}")
            if args.fail_fast and row["status"] != "ok":
                print("aborting sweep (--fail-fast)", file=sys.stderr)
                return 3
        if args.jobs != 1:
            pool.shutdown()
    rows.sort(key=lambda r: tuple(str(r.get(k)) for cell in cells[:1] for k in cell) + (r["seed"],))

    group_keys = sorted({k for cell in cells for k in cell})
    agg = report.aggregate(rows, group_keys, SWEEP_METRICS)
    trial_cols = ["scenario", "seed", *group_keys, "status", "t", "termination", "decision",
                  *SWEEP_METRICS, "pq_bound", "bound_slack"]
    agg_cols = [*group_keys, "n_trials", "n_failed"]
    for m in SWEEP_METRICS:
        agg_cols.extend([f"{m}_mean", f"{m}_std"])
    os.makedirs(args.out, exist_ok=True)
    report.write_table(os.path.join(args.out, "trials.tsv"), trial_cols, rows)
    report.write_table(os.path.join(args.out, "aggregate.tsv"), agg_cols, agg)
    if args.emit_plot_data and group_keys:
        x = group_keys[0]
        for m in ("selective_error", "rejection_test"):
            pts = [(float(r[x]), r.get(f"{m}_mean")) for r in agg if r.get(f"{m}_mean") is not None]
            if pts:
                report.write_series(
                    os.path.join(args.out, f"sweep-{m}.dat"),
                    [p[0] for p in pts], [p[1] for p in pts],
                )
    if args.plots and group_keys:
        for m in ("selective_error", "rejection_test"):
            report.plot_sweep(agg, group_keys[0], m, os.path.join(args.out, f"sweep-{m}.png"))
    n_failed = sum(1 for r in rows if r["status"] != "ok")
    print(f"sweep done: {len(rows)} trials, {n_failed} failed, "
          f"{time.perf_counter() - t0:.1f}s")
    return 0


# -- oracle check ------------------------------------------------------------


def cmd_oracle_check(args) -> int:
    sizes = [int(v) for v in args.n.split(",") if v.strip()]
    rng = np.random.default_rng(args.seed)
    basis = enumerate_basis(args.d, args.degree, multilinear=True)
    pts_all = hypercube_points(args.d)

    # planted conjunction on the first two coordinates
    def concept(points):
        return ((points[:, 0] > 0) & (points[:, 1] > 0)).astype(int)

    chow_exact = exact_chow(concept, basis, args.d)
    coeffs = rng.standard_normal(len(basis))
    poly = Polynomial(basis, coeffs)
    poly_exact = exact_expectation_hypercube(args.d, poly)

    failures = 0
    for n in sizes:
        pts = pts_all[rng.integers(0, len(pts_all), size=n)]
        feats = basis.feature_matrix(pts)
        fx = concept(pts).astype(float)

        chow_hat = feats.T @ fx / n
        # each term f*chi is in [-1,1], so SE <= 1/sqrt(n)
        gap = np.abs(chow_hat - chow_exact).max()
        ok = gap <= 5.0 / np.sqrt(n)
        failures += not ok
        print(f"check chow n={n} max_gap={gap:.5f} limit={5.0 / np.sqrt(n):.5f} "
              f"{'pass' if ok else 'FAIL'}")

        vals = feats @ coeffs
        se = float(np.std(vals)) / np.sqrt(n)
        gap = abs(float(vals.mean()) - poly_exact)
        ok = gap <= 5.0 * max(se, 1e-12)
        failures += not ok
        print(f"check poly-expectation n={n} gap={gap:.5f} limit={5.0 * se:.5f} "
              f"{'pass' if ok else 'FAIL'}")

    gram = basis.feature_matrix(pts_all)
    gram = gram.T @ gram / len(pts_all)
    gap = np.abs(gram - np.eye(len(basis))).max()
    ok = gap <= 1e-12
    failures += not ok
    print(f"check full-cube-gram max_gap={gap:.2e} {'pass' if ok else 'FAIL'}")
    print(f"oracle-check {'passed' if failures == 0 else f'FAILED ({failures})'}")
    return 0 if failures == 0 else 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.handler(args)
    except (WitnessSolveError, RegressionError, NoValidThreshold) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
