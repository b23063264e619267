import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from neumann_mc.cli import EXIT_CONFIG, EXIT_OK, main
from neumann_mc.experiments import (ConfigError, Table, dump_config, load_config,
                                    parse_config, run_experiment, table_config)
from neumann_mc.wos import CircleTable

SMALL_MIXED = """
[experiment]
experiment = mixed_euler
alpha = 1/3, 2/3
delta = 0.01
xi = 0.01
n = 400
points = A 0.5 0 ; B -0.5 0.25
seed = 3
workers = 1
name = small
"""


def test_parse_fractions_and_points():
    cfg = parse_config(SMALL_MIXED)
    assert cfg.alpha == pytest.approx((1 / 3, 2 / 3))
    assert cfg.points == (("A", 0.5, 0.0), ("B", -0.5, 0.25))
    assert cfg.workers == 1
    assert cfg.stem == "small"


def test_control_variate_flag():
    assert not parse_config(SMALL_MIXED).control_variate
    cfg = parse_config(SMALL_MIXED + "control_variate = yes\n")
    assert cfg.control_variate
    assert parse_config(dump_config(cfg)) == cfg
    with pytest.raises(ConfigError):
        parse_config(SMALL_MIXED + "control_variate = maybe\n")


def test_overrides_win():
    cfg = parse_config(SMALL_MIXED, seed=9, n=50, out=None)
    assert cfg.seed == 9 and cfg.n == 50


def test_dump_roundtrip():
    for cfg in (parse_config(SMALL_MIXED), table_config(5), table_config(8)):
        assert parse_config(dump_config(cfg)) == cfg


@pytest.mark.parametrize("text", [
    "[other]\nexperiment = mixed_euler\n",
    "[experiment]\nn = 5\n",
    "[experiment]\nexperiment = nope\n",
    "[experiment]\nexperiment = mixed_euler\nbogus = 1\n",
    "[experiment]\nexperiment = mixed_euler\nn = many\n",
    "[experiment]\nexperiment = mixed_euler\ndelta = -0.1\n",
    "[experiment]\nexperiment = neumann_wos\nschemes = fd1\n",
    "[experiment]\nexperiment = mixed_wos\nschemes = magic\n",
    "[experiment]\nexperiment = spectral_exact\nbasis_n = 3\n",
    "[experiment]\nexperiment = neumann_preliminary\ntimes = 2, 1\n",
    "[experiment]\nexperiment = mixed_euler\npoints = A 0.1\n",
    "[experiment]\nexperiment = mixed_euler\nkernel = box\n",
    "not a config",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


CONFIGS = sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.cfg"))


@pytest.mark.parametrize("path", CONFIGS, ids=[p.stem for p in CONFIGS])
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert cfg.stem == path.stem


def test_shipped_configs_match_tables():
    by_name = {p.stem: load_config(p) for p in CONFIGS}
    for number, name in enumerate(["mixed_euler", "mixed_wos", "neumann_euler", "neumann_wos",
                                   "preliminary", "spectral_exact", "spectral_approx",
                                   "convection"], start=1):
        table = table_config(number)
        cfg = by_name[name]
        for key in ("experiment", "alpha", "delta", "xi", "h", "schemes", "m", "q", "basis_n",
                    "n", "cloud"):
            assert getattr(cfg, key) == getattr(table, key), (name, key)


def test_param_sets_broadcast():
    cfg = table_config(1)
    assert cfg.param_sets("delta", "xi") == [(0.01, 0.01), (0.001, 1e-6), (0.001, 0.001)]
    cfg = table_config(7)
    assert cfg.param_sets("delta", "xi", "m", "q") == [(0.01, 0.001, 1000, 100),
                                                        (0.001, 0.001, 5000, 10_000)]


def test_table_configs_cover_all_tables():
    kinds = [table_config(k).experiment for k in range(1, 9)]
    assert kinds == ["mixed_euler", "mixed_wos", "neumann_euler", "neumann_wos",
                     "neumann_preliminary", "spectral_exact", "spectral_approx", "convection"]
    with pytest.raises(ConfigError):
        table_config(9)


def test_table_csv_format():
    t = Table(["a", "b", "c"])
    t.add(a=1, b=0.5, c="x")
    t.add(a=2, c=True)
    assert t.to_csv() == "a,b,c\n1,5.000000e-01,x\n2,,1\n"
    with pytest.raises(KeyError):
        t.add(d=1)


def test_run_writes_identical_files(tmp_path):
    cfg = parse_config(SMALL_MIXED, out=str(tmp_path / "one"))
    first = run_experiment(cfg)
    names = sorted(p.name for p in first.paths)
    assert names == ["small.csv", "small.json"]
    again = run_experiment(parse_config(SMALL_MIXED, out=str(tmp_path / "two")))
    a = (tmp_path / "one" / "small.csv").read_bytes()
    assert a == (tmp_path / "two" / "small.csv").read_bytes()
    lines = a.decode().splitlines()
    assert lines[0].startswith("delta,xi,alpha,point")
    assert len(lines) == 1 + 2 * 2
    side = json.loads((tmp_path / "one" / "small.json").read_text())
    assert side["seed"] == 3 and side["config"]["n"] == 400
    assert again.summary == first.summary


def test_neumann_runner_reports_bias_metrics(tmp_path):
    cfg = table_config(3, delta=(0.02,), xi=(0.02,), t0=3.0, n=200, workers=1,
                       points=(("M4", 0.0, 0.0),), out=str(tmp_path))
    res = run_experiment(cfg, write=False)
    rows = res.tables["results"].rows
    assert len(rows) == 3 * (9 + 1)
    for key, m in res.summary.items():
        assert m["rho"] >= 0
        assert abs(m["a_bar"]) < 0.5


def test_neumann_runner_with_control(tmp_path):
    base = dict(delta=(0.02,), xi=(0.02,), t0=2.0, n=400, workers=1, points=(),
                out=str(tmp_path))
    plain = run_experiment(table_config(3, **base), write=False).tables["results"].rows
    cv = run_experiment(table_config(3, control_variate=True, **base),
                        write=False).tables["results"].rows
    assert len(plain) == len(cv)
    assert np.mean([r["std_error"] for r in cv]) < np.mean([r["std_error"] for r in plain])


def test_preliminary_runner(tmp_path):
    cfg = table_config(5, n=300, times=(1.0, 2.0, 3.0), fit_range=(1.0, 3.0), t0=3.0,
                       workers=1, out=str(tmp_path))
    res = run_experiment(cfg)
    assert set(res.tables) == {"mean", "variance"}
    assert sorted(p.name for p in res.paths) == ["table5.json", "table5_mean.csv",
                                                 "table5_variance.csv"]
    assert res.summary["c3"] == pytest.approx(32768 / 33075)
    assert np.isfinite(res.summary["variance_slope"])


def test_spectral_runner_small(tmp_path):
    cfg = table_config(7, delta=(0.02,), m=(200,), q=(500,), basis_n=(2,), t0=3.0,
                       workers=1, out=str(tmp_path))
    res = run_experiment(cfg, write=False)
    (row,) = res.tables["results"].rows
    assert row["kappa"] > 0 and row["err2"] != ""


# --- command line -------------------------------------------------------------------

def test_cli_run_and_exit_codes(tmp_path, capsys):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_MIXED)
    code = main(["run", str(path), "--out", str(tmp_path / "out"), "--n", "100"])
    assert code == EXIT_OK
    assert (tmp_path / "out" / "small.csv").exists()
    assert main(["run", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    bad = tmp_path / "bad.cfg"
    bad.write_text("[experiment]\nexperiment = mixed_euler\ndelta = 0\n")
    assert main(["run", str(bad)]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as info:
        main(["table", "12"])
    assert info.value.code == EXIT_CONFIG
    capsys.readouterr()


def test_cli_precompute(tmp_path, capsys):
    out = tmp_path / "t.bin"
    code = main(["precompute-wos", "--out", str(out), "--pairs", "300", "--paths", "10",
                 "--delta", "1e-3"])
    assert code == EXIT_OK
    table = CircleTable.load(out)
    assert table.n_pairs == 300 and table.q_paths == 10
    assert "mean exit time" in capsys.readouterr().out
    assert main(["precompute-wos", "--out", str(out), "--pairs", "0"]) == EXIT_CONFIG


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "neumann_mc.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "precompute-wos" in proc.stdout
