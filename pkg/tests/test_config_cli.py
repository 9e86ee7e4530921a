import json
import math
import shutil

import pytest

from fragsim import cli
from fragsim.config import DEFAULT_TOLERANCES, config_from_dict, load_config
from fragsim.errors import ConfigError
from fragsim.io import decode_float, jsonable, read_csv, read_json, write_csv

from conftest import CONFIGS

BASE = {"seed": 3, "alpha": 1.0, "kernel": {"family": "power_law", "beta": 1.0}}


def cfg(mode="moments", **kw):
    return config_from_dict({**BASE, **kw}, mode=mode)


# ---------------------------------------------------------------- config


def test_all_shipped_configs_load():
    for p in sorted(CONFIGS.glob("*.toml")):
        c = load_config(p, mode=p.stem.replace("_", "-"))
        assert c.seed >= 0 and c.tolerances["l1_pde"] == DEFAULT_TOLERANCES["l1_pde"]


@pytest.mark.parametrize(
    "mode,extra",
    [
        ("nope", {}),
        ("simulate", {}),
        ("pde", {"t_end": 1.0}),
        ("shatter", {}),
        ("moments", {"alpha": 0.0}),
        ("moments", {"seed": -1}),
        ("moments", {"seed": True}),
        ("moments", {"n_paths": 0}),
        ("moments", {"bogus": 1}),
        ("moments", {"kernel": {"beta": 1.0}}),
        ("moments", {"initial": {"kind": "gamma", "shape": 0.0}}),
        ("moments", {"initial": {"kind": "weird"}}),
        ("moments", {"tolerances": {"l1_pde": -1.0}}),
        ("simulate", {"times": [-1.0]}),
        ("pde", {"t_end": 1.0, "grid": {"x_min": 1e-4, "x_max": 50.0}}),
    ],
)
def test_config_errors(mode, extra):
    with pytest.raises(ConfigError):
        cfg(mode, **extra)


def test_seed_is_mandatory_and_env_overrides():
    raw = {k: v for k, v in BASE.items() if k != "seed"}
    with pytest.raises(ConfigError):
        config_from_dict(raw, mode="moments")
    assert config_from_dict(raw, mode="moments", env={"FRAGSIM_SEED": "42"}).seed == 42
    assert config_from_dict(BASE, mode="moments", env={"FRAGSIM_SEED": "7"}).seed == 7
    with pytest.raises(ConfigError):
        config_from_dict(BASE, mode="moments", env={"FRAGSIM_SEED": "x"})


def test_mode_mismatch_and_bad_files(tmp_path):
    with pytest.raises(ConfigError):
        config_from_dict({**BASE, "mode": "pde"}, mode="moments")
    with pytest.raises(ConfigError):
        config_from_dict(BASE)
    bad = tmp_path / "bad.toml"
    bad.write_text("seed = = 1\n")
    with pytest.raises(ConfigError):
        load_config(bad, mode="moments")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml", mode="moments")


def test_config_hash_is_stable():
    assert cfg().config_hash() == cfg().config_hash()
    assert cfg().config_hash() != cfg(seed=4).config_hash()


def test_t_end_defaults_to_last_time():
    c = cfg("simulate", times=[1.0, 3.0])
    assert c.t_end == 3.0
    assert cfg("simulate", t_end=2.0).times == [2.0]


# ------------------------------------------------------------------- io


def test_csv_full_precision(tmp_path):
    p = write_csv(tmp_path / "a.csv", ["x", "y"], [[0.1, 1 / 3], [math.pi, 2]])
    header, data = read_csv(p)
    assert header == ["x", "y"]
    assert data[1, 0] == math.pi and data[0, 1] == 1 / 3
    assert "0.33333333333333331" in p.read_text()


def test_json_non_finite_roundtrip():
    enc = jsonable({"a": math.inf, "b": [-math.inf, 1.5]})
    assert enc == {"a": "+inf", "b": ["-inf", 1.5]}
    assert decode_float(enc["a"]) == math.inf and decode_float(2) == 2.0


# ------------------------------------------------------------------ cli


def _write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_moments_run_lists_factorials(tmp_path):
    code = cli.main(["moments", "--config", str(CONFIGS / "moments.toml"), "--out", str(tmp_path)])
    s = read_json(tmp_path / "summary.json")
    assert code == 0 and s["passed"]
    assert s["metrics"]["moments"] == [2, 6, 24, 120]
    for key in ("config_hash", "versions", "seed", "config"):
        assert key in s


def test_exit_code_config_error(tmp_path, capsys):
    p = _write(tmp_path, "alpha = 1.0\n[kernel]\nfamily = 'power_law'\nbeta = 1.0\n")
    assert cli.main(["moments", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "seed" in capsys.readouterr().err
    assert cli.main(["moments", "--config", str(tmp_path / "nope.toml")]) == 2
    good = CONFIGS / "moments.toml"
    assert cli.main(["moments", "--config", str(good), "--threads", "0"]) == 2


def test_exit_code_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code = cli.main(["moments", "--config", str(CONFIGS / "moments.toml"), "--out", str(blocker / "sub")])
    assert code == 2


def test_exit_code_numeric_failure(tmp_path):
    # a step far above the CFL limit
    text = (CONFIGS / "pde.toml").read_text().replace("seed = 15", "seed = 15\ndt = 1.0")
    p = _write(tmp_path, text)
    assert cli.main(["pde", "--config", str(p), "--out", str(tmp_path / "o")]) == 3


def test_exit_code_failed_check(tmp_path):
    text = (CONFIGS / "pde.toml").read_text().replace("seed = 15", "seed = 15\ntimes = [0.5]").replace(
        "times = [5.0, 10.0, 15.0]\n", ""
    )
    text = text.replace("[kernel]", "[tolerances]\nl1_pde = 1e-6\n\n[kernel]")
    p = _write(tmp_path, text)
    code = cli.main(["converge", "--config", str(p), "--out", str(tmp_path / "o")])
    s = read_json(tmp_path / "o" / "summary.json")
    assert code == 1 and not s["passed"] and not s["checks"]["l1_pde"]


def test_report_empty(tmp_path, capsys):
    assert cli.main(["report", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].split() == cli.REPORT_COLUMNS
    assert (tmp_path / "report.csv").read_text().strip() == ",".join(cli.REPORT_COLUMNS)


def test_report_two_runs(tmp_path):
    paths = []
    for mode, f in (("converge", "converge.toml"), ("sweep-check", "sweep_check.toml")):
        out = tmp_path / mode
        assert cli.main([mode, "--config", str(CONFIGS / f), "--out", str(out)]) == 0
        paths.append(out / "summary.json")
    rows, text = cli.report(paths, tmp_path / "rep")
    assert [r[4] for r in rows] == ["self-similar", "sweeping"]
    assert rows[1][3] == "+inf"
    assert float(rows[0][3]) == 1.0
    assert rows[1][5].startswith("tail=")
    # duplicate runs give identical metric rows
    again = tmp_path / "again"
    cli.main(["converge", "--config", str(CONFIGS / "converge.toml"), "--out", str(again)])
    r2, _ = cli.report([again / "summary.json"])
    assert r2[0][:6] == rows[0][:6]


def test_report_schema_mismatch(tmp_path):
    p = tmp_path / "x.json"
    p.write_text(json.dumps({"mode": "pde"}))
    assert cli.main(["report", str(p)]) == 2


def test_threads_do_not_change_outputs(tmp_path):
    outs = []
    for n in ("1", "4"):
        out = tmp_path / n
        assert cli.main(["simulate", "--config", str(CONFIGS / "simulate.toml"), "--out", str(out), "--threads", n]) == 0
        outs.append(out)
    for name in ("paths.csv", "histogram.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_relative_table_path_resolves_against_config(tmp_path):
    shutil.copy(CONFIGS / "sweep_check.toml", tmp_path / "s.toml")
    shutil.copy(CONFIGS / "log_divergent_g.csv", tmp_path / "log_divergent_g.csv")
    c = load_config(tmp_path / "s.toml", mode="sweep-check")
    assert c.make_kernel().mean_log() == math.inf


def test_gamma_and_csv_initial_data(tmp_path):
    base = (CONFIGS / "pde.toml").read_text().split("[initial]")[0]
    p = _write(tmp_path, base + "[initial]\nkind = 'gamma'\nshape = 2.0\nscale = 0.5\n")
    assert cli.main(["pde", "--config", str(p), "--out", str(tmp_path / "g")]) == 0
    # uniform cell masses on the same grid, read from a CSV
    _, data = read_csv(tmp_path / "g" / "snapshots.csv")
    write_csv(tmp_path / "w.csv", ["x", "mass"], [[float(r[1]), 1.0 / 512] for r in data[:512]])
    p2 = _write(tmp_path, base + "[initial]\nkind = 'csv'\npath = 'w.csv'\n", "csv.toml")
    assert cli.main(["pde", "--config", str(p2), "--out", str(tmp_path / "c")]) == 0
    # Monte Carlo modes need a sampler, not cell masses
    assert cli.main(["simulate", "--config", str(p2), "--out", str(tmp_path / "s")]) == 2
