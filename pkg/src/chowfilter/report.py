"""Result tables, plot-data series, and rendered figures.

Result tables are tab-separated with a header row, one row per trial.
Series files are two-column (x, y) text for external plotting. Figures are
rendered with matplotlib to PNG files alongside the tables.
"""

from __future__ import annotations

import os
import tempfile

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

DELIMITER = "\t"


def format_cell(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def write_table(path: str, columns: list[str], rows: list[dict]) -> None:
    """Write a delimited table atomically (temp file, then rename)."""
    lines = [DELIMITER.join(columns)]
    for row in rows:
        lines.append(DELIMITER.join(format_cell(row.get(c)) for c in columns))
    atomic_write(path, "\n".join(lines) + "\n")


def read_table(path: str) -> list[dict]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    columns = lines[0].split(DELIMITER)
    rows = []
    for line in lines[1:]:
        if not line:
            continue
        rows.append(dict(zip(columns, line.split(DELIMITER))))
    return rows


def atomic_write(path: str, text: str) -> None:
    """Never leaves a half-written file at path."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_series(path: str, xs, ys) -> None:
    """(x, y) pairs, one per line, tab separated."""
    lines = [f"{format_cell(float(x))}{DELIMITER}{format_cell(float(y))}" for x, y in zip(xs, ys)]
    atomic_write(path, "\n".join(lines) + "\n")


def survival_series(record) -> tuple[list[int], list[int]]:
    """Surviving test-pool size after each filtering iteration (0 = after the
    boundedness pass)."""
    xs = [0]
    ys = [record.n_s0]
    for i, it in enumerate(record.iterations, 1):
        xs.append(i)
        ys.append(it.surviving)
    return xs, ys


def plot_survival(record, path: str) -> None:
    xs, ys = survival_series(record)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.step(xs, ys, where="post", marker="o")
    ax.set_xlabel("filtering iteration")
    ax.set_ylabel("surviving test points")
    ax.set_title(f"termination: {record.termination} (t = {record.t})")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_metric_by_seed(rows: list[dict], metric: str, path: str, hline: float | None = None) -> None:
    seeds = [int(r["seed"]) for r in rows]
    vals = [float(r[metric]) for r in rows if r.get(metric) not in (None, "NA")]
    if not vals:
        return
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(seeds[: len(vals)], vals, "o")
    if hline is not None:
        ax.axhline(hline, color="tab:red", linestyle="--", label="bound")
        ax.legend()
    ax.set_xlabel("seed")
    ax.set_ylabel(metric)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep(rows: list[dict], x_key: str, y_key: str, path: str) -> None:
    """Mean with a stddev band against one swept parameter."""
    pts = [
        (float(r[x_key]), float(r[f"{y_key}_mean"]), float(r[f"{y_key}_std"]))
        for r in rows
        if r.get(f"{y_key}_mean") not in (None, "NA")
    ]
    if not pts:
        return
    pts.sort()
    xs = np.array([p[0] for p in pts])
    means = np.array([p[1] for p in pts])
    stds = np.array([p[2] for p in pts])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(xs, means, "o-")
    ax.fill_between(xs, means - stds, means + stds, alpha=0.2)
    ax.set_xlabel(x_key)
    ax.set_ylabel(y_key)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def aggregate(rows: list[dict], group_keys: list[str], value_keys: list[str]) -> list[dict]:
    """Mean/stddev per group cell; deterministic row order (sorted group keys)."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = tuple(row.get(k) for k in group_keys)
        groups.setdefault(key, []).append(row)
    out = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        cell = dict(zip(group_keys, key))
        members = groups[key]
        cell["n_trials"] = len(members)
        cell["n_failed"] = sum(1 for m in members if m.get("status") not in (None, "ok"))
        for vk in value_keys:
            vals = [
                float(m[vk])
                for m in members
                if m.get(vk) not in (None, "NA") and m.get("status", "ok") == "ok"
            ]
            if vals:
                vals.sort()  # reduction independent of input row order
                cell[f"{vk}_mean"] = float(np.mean(vals))
                cell[f"{vk}_std"] = float(np.std(vals))
            else:
                cell[f"{vk}_mean"] = None
                cell[f"{vk}_std"] = None
        out.append(cell)
    return out
