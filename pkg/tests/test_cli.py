import csv
import io
import json

import pytest

from redsim import cli
from redsim.config import ConfigError, ScenarioConfig, load_config
from redsim.runner import compare_inca_smartre, join_reductions, run_matrix

SMALL = """\
topology: [exodus]
policy: [cachedbit]
cache_chunks: [32]
n_requests: 3000
seeds: [1]
"""


def write(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_single_scenario_gives_two_rows(tmp_path):
    cfg = write(tmp_path, SMALL)
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = read_rows(tmp_path / "o" / "report.csv")
    assert [r["seed"] for r in rows] == ["1", "mean"]
    assert len({r["config_hash"] for r in rows}) == 1
    meta = json.loads((tmp_path / "o" / "metadata.json").read_text())
    assert meta["rng"] == "numpy.PCG64/SeedSequence"
    assert meta["config"]["n_requests"] == 3000
    assert (tmp_path / "o" / "hopcdf").is_dir()


def test_paper_grid_expands_to_36():
    cfg = ScenarioConfig(policy=["all", "cachedbit", "nbsc"], alpha=[0.7, 0.9, 1.1])
    assert len(list(cfg.scenarios())) == 36


def test_repeated_runs_are_byte_identical(tmp_path):
    cfg = write(tmp_path, SMALL.replace("[cachedbit]", "[nbsc, endre]").replace("[1]", "[1, 2]"))
    for out in ("a", "b"):
        assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / out)]) == 0
    a = (tmp_path / "a" / "report.csv").read_bytes()
    assert a == (tmp_path / "b" / "report.csv").read_bytes()
    assert len(read_rows(tmp_path / "a" / "report.csv")) == 2 * 3


def test_parallel_matches_serial(tmp_path):
    cfg = load_config(write(tmp_path, SMALL), {"seeds": [1, 2], "policy": ["all", "nbsc"]})
    assert run_matrix(cfg, parallel=2) == run_matrix(cfg)


def test_env_override(tmp_path):
    cfg = load_config(write(tmp_path, SMALL), environ={"REDSIM_N_REQUESTS": "777",
                                                       "REDSIM_SEEDS": "[4, 5]"})
    assert cfg.n_requests == 777 and cfg.seeds == [4, 5]
    assert cfg.digest() != load_config(write(tmp_path, SMALL), environ={}).digest()


@pytest.mark.parametrize("bad", ["policy: [lfu]", "cache_chunks: []", "warmup: 1.5",
                                 "bogus_key: 3", "level: galaxy", "cache_chunks: [-1]"])
def test_invalid_config(tmp_path, bad, capsys):
    cfg = write(tmp_path, bad + "\n")
    with pytest.raises(ConfigError):
        load_config(cfg)
    assert cli.main(["run", "--config", str(cfg)]) != 0
    assert "error" in capsys.readouterr().err


def test_failure_names_scenario(tmp_path, capsys):
    cfg = write(tmp_path, SMALL.replace("[exodus]", "[/nonexistent/x.txt]"))
    assert cli.main(["run", "--config", str(cfg)]) != 0
    assert "x.txt" in capsys.readouterr().err


def test_stdout_report(tmp_path, capsys):
    assert cli.main(["run", "--config", str(write(tmp_path, SMALL))]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 2


def test_fulfillment_logs(tmp_path):
    cfg = write(tmp_path, SMALL)
    cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--fulfillment-logs"])
    files = sorted(p.name for p in (tmp_path / "o" / "fulfillment").iterdir())
    assert files == ["exodus_cachedbit_32_0.9_constant_s1.csv",
                     "exodus_cachedbit_32_0.9_constant_s1.trace.csv"]


def _row(policy, fr, cap=128):
    return {"topology": "t", "alpha": 0.9, "pattern": "constant", "cache_chunks": cap,
            "policy": policy, "seed": "mean", "footprint_reduction": fr}


def test_join_identical_sides_ratio_one():
    rows = [_row("all", 0.3), _row("all", 0.4, 256)]
    assert [float(r["ratio"]) for r in join_reductions(rows, rows)] == [1.0, 1.0]


def test_join_zero_denominator_empty_cell():
    out = join_reductions([_row("nbsc", 0.0, 0)], [_row("smartre-lp", 0.0, 0)])
    assert out[0]["ratio"] == ""


def test_join_missing_points():
    with pytest.raises(ConfigError, match="256"):
        join_reductions([_row("nbsc", 0.1), _row("nbsc", 0.2, 256)], [_row("smartre-lp", 0.1)])


def test_compare_requires_both_families(tmp_path):
    with pytest.raises(ConfigError):
        compare_inca_smartre(load_config(write(tmp_path, SMALL)))


def test_compare_cli(tmp_path):
    cfg = write(tmp_path, SMALL.replace("[cachedbit]", "[nbsc, smartre-lp]"))
    out = tmp_path / "cmp.csv"
    assert cli.main(["compare", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_rows(out)
    assert len(rows) == 1 and float(rows[0]["ratio"]) > 0


def test_import_topology(tmp_path):
    from redsim.topology import DATA_DIR, load_topology_file
    out = tmp_path / "sprint.txt"
    assert cli.main(["import-topology", str(DATA_DIR / "sprint.cch"), str(out),
                     "--level", "pop"]) == 0
    assert load_topology_file(out).node_count == 43
    bad = write(tmp_path, "0 0\n", "bad.txt")
    assert cli.main(["import-topology", str(bad), str(tmp_path / "x.txt")]) != 0


def test_plot(tmp_path):
    pytest.importorskip("matplotlib")
    cfg = write(tmp_path, SMALL)
    cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert cli.main(["plot", "--report", str(tmp_path / "o" / "report.csv")]) == 0
    assert (tmp_path / "o" / "report.svg").read_text().lstrip().startswith("<?xml")
