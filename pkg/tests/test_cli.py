import os

from chowfilter.cli import _parse_grid, _parse_seeds, main
from chowfilter.report import read_table

SCENARIO = """
[scenario]
name = clitest
n_train = 600
n_test = 400
seed = 0

[train_marginal]
kind = hypercube
d = 4

[shift]
kind = mixture
weight = 0.3
cloud_center = 3.0
cloud_scale = 0.0

[concept]
kind = conjunction
literals = 0:1, 1:1
"""

IDENTICAL = """
[scenario]
name = same
n_train = 6000
n_test = 4000
seed = 0

[train_marginal]
kind = hypercube
d = 3

[concept]
kind = conjunction
literals = 0:1, 1:1
"""


def write_scenario(tmp_path, text=SCENARIO):
    path = tmp_path / "s.cfg"
    path.write_text(text)
    return str(path)


def test_parse_seeds():
    assert _parse_seeds("0:4") == [0, 1, 2, 3]
    assert _parse_seeds("3,7,11") == [3, 7, 11]
    assert _parse_seeds("") == []


def test_parse_grid():
    cells = _parse_grid(["eta=0.3,0.5", "degree=1,2"])
    assert len(cells) == 4
    assert {"eta": 0.3, "degree": 1} in cells
    assert _parse_grid([]) == [{}]


def test_pq_run_writes_results(tmp_path, capsys):
    scenario = write_scenario(tmp_path)
    out = str(tmp_path / "out")
    code = main([
        "pq-run", "--scenario", scenario, "--eta", "0.5", "--eps", "0.2",
        "--seed", "7", "--out", out,
    ])
    assert code == 0
    rows = read_table(os.path.join(out, "results.tsv"))
    assert len(rows) == 1
    assert rows[0]["seed"] == "7"
    assert os.path.exists(os.path.join(out, "selector-clitest-seed7.txt"))
    assert os.path.exists(os.path.join(out, "classifier-clitest-seed7.txt"))
    captured = capsys.readouterr().out
    assert "config " in captured
    assert "trial scenario=clitest seed=7" in captured


def test_pq_run_plot_outputs(tmp_path):
    scenario = write_scenario(tmp_path)
    out = str(tmp_path / "out")
    code = main([
        "pq-run", "--scenario", scenario, "--out", out, "--plots", "--emit-plot-data",
    ])
    assert code == 0
    assert os.path.exists(os.path.join(out, "survival-clitest-seed0.png"))
    assert os.path.exists(os.path.join(out, "survival-clitest-seed0.dat"))


def test_tds_run_accepts_identical_marginals(tmp_path, capsys):
    scenario = write_scenario(tmp_path, IDENTICAL)
    out = str(tmp_path / "out")
    code = main([
        "tds-run", "--scenario", scenario, "--theta", "0", "--eps", "0.9",
        "--seed", "0", "--out", out,
    ])
    assert code == 0
    assert "decision=ACCEPT" in capsys.readouterr().out


def test_icf_run(tmp_path):
    scenario = write_scenario(tmp_path)
    out = str(tmp_path / "out")
    code = main([
        "icf-run", "--scenario", scenario, "--slack-R", "2", "--eps", "0.2",
        "--out", out,
    ])
    assert code == 0
    rows = read_table(os.path.join(out, "results.tsv"))
    assert rows[0]["termination"] in ("converged", "terminated_inconsistent")


def test_sweep_row_count_and_aggregate(tmp_path):
    scenario = write_scenario(tmp_path)
    out = str(tmp_path / "out")
    code = main([
        "bench-sweep", "--scenario", scenario, "--grid", "eta=0.3,0.5",
        "--seeds", "0:3", "--jobs", "1", "--out", out,
    ])
    assert code == 0
    rows = read_table(os.path.join(out, "trials.tsv"))
    assert len(rows) == 6
    agg = read_table(os.path.join(out, "aggregate.tsv"))
    assert len(agg) == 2
    assert {r["eta"] for r in agg} == {"0.3", "0.5"}
    assert all(r["n_trials"] == "3" for r in agg)


def test_sweep_empty_grid(tmp_path):
    scenario = write_scenario(tmp_path)
    out = str(tmp_path / "out")
    code = main([
        "bench-sweep", "--scenario", scenario, "--seeds", "", "--jobs", "1",
        "--out", out,
    ])
    assert code == 0
    assert read_table(os.path.join(out, "trials.tsv")) == []


def test_oracle_check_passes():
    assert main(["oracle-check", "--d", "6", "--n", "2000"]) == 0


def test_validation_exit_codes(tmp_path):
    assert main(["pq-run", "--scenario", str(tmp_path / "missing.cfg")]) == 2
    scenario = write_scenario(tmp_path)
    assert main(["pq-run", "--scenario", scenario, "--eta", "1.5"]) == 2
    assert main(["unknown-command"]) == 2
    assert main(["pq-run"]) == 2  # missing required --scenario
