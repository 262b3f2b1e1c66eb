import json

import pytest

from paractive import acceptance, cli
from paractive.config import (
    DEFAULT_B,
    DEFAULT_WARMSTART,
    ETA_NN,
    ETA_PARALLEL,
    ETA_SEQUENTIAL,
    ConfigError,
    parse_config,
)
from paractive.metrics import SUMMARY_COLUMNS, read_csv

GAUSS = """\
mode = {mode}
seed = 1
out = {out}

[data]
source = gaussian
n = 400
test_n = 200
separation = 2.5

[learner]
kind = svm
gamma = 0.5

[cluster]
k = {k}
B = {B}
warmstart = 20
"""


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def gauss_cfg(tmp_path, mode="sync", k=2, B=8, extra=""):
    return write(tmp_path, GAUSS.format(mode=mode, out=tmp_path / "out", k=k, B=B) + extra)


# -- configuration parsing ---------------------------------------------------------

def test_defaults_follow_published_setup():
    cfg = parse_config("")
    assert cfg.mode == "sync" and cfg.learner == {"kind": "svm", "C": 1.0, "gamma": 0.012}
    assert cfg.rule == {"kind": "margin", "eta": ETA_PARALLEL}
    assert cfg.data["positive"] == [3, 1] and cfg.data["negative"] == [5, 7]
    assert cfg.data["scale"] == (-1.0, 1.0)
    cc = cfg.cluster_config()
    assert cc.B == DEFAULT_B and cc.warmstart_size == DEFAULT_WARMSTART
    nn = parse_config("[learner]\nkind = nn\n")
    assert nn.learner["hidden"] == 100 and nn.learner["step"] == 0.07
    assert nn.rule["eta"] == ETA_NN and nn.data["scale"] == (0.0, 1.0)
    seq = parse_config("mode = sequential-active\n")
    assert seq.rule["eta"] == ETA_SEQUENTIAL


def test_parse_error_reports_line():
    with pytest.raises(ConfigError, match=r"bad.cfg:3: \[cluster\] k: cannot parse 'x'"):
        parse_config("mode = sync\n[cluster]\nk = x\n", "bad.cfg")
    with pytest.raises(ConfigError, match=r":2: \[learner\] colour: unknown key"):
        parse_config("[learner]\ncolour = red\n", "c.cfg")
    with pytest.raises(ConfigError, match=r"\[nope\]"):
        parse_config("[nope]\na = 1\n")


@pytest.mark.parametrize("text,where", [
    ("mode = delayed-iwal\n[learner]\nkind = svm\n", "learner"),
    ("mode = sync\n[learner]\nkind = finite\n", "learner"),
    ("mode = sync\n[rule]\nkind = iwal\n", "rule"),
    ("mode = sequential-passive\n[cluster]\nk = 4\n", "cluster"),
    ("mode = sync\n[cluster]\nk = 3\nB = 10\n", "cluster"),
    ("mode = async\n[cluster]\ntiming = wall\n", "cluster"),
    ("mode = delayed-iwal\n[rule]\nC0 = 1.5\n", "rule"),
    ("mode = warp\n", "run"),
])
def test_incompatible_settings_rejected(text, where):
    with pytest.raises(ConfigError, match=rf"\[{where}\]"):
        parse_config(text)


# -- run -----------------------------------------------------------------------

def test_run_sync_writes_record(tmp_path, capsys):
    code = cli.main(["run", "--config", str(gauss_cfg(tmp_path))])
    assert code == cli.OK
    out = tmp_path / "out"
    for name in ("config.json", "querylog.csv", "errors.csv", "summary.csv", "model.bin"):
        assert (out / name).exists()
    echo = json.loads((out / "config.json").read_text())
    assert echo["mode"] == "sync" and echo["dataset"]["source"] == "gaussian"
    assert "final error" in capsys.readouterr().out


def test_run_overrides(tmp_path):
    other = tmp_path / "elsewhere"
    code = cli.main(["run", "--config", str(gauss_cfg(tmp_path)), "--out", str(other),
                     "--seed", "9", "--k", "4"])
    assert code == cli.OK
    echo = json.loads((other / "config.json").read_text())
    assert echo["k"] == 4 and echo["seed"] == 9


def test_run_delayed_iwal_has_bound_columns(tmp_path):
    text = f"mode = delayed-iwal\nout = {tmp_path / 'iw'}\n[data]\nn = 600\n[delay]\nkind = fixed\nB = 20\n"
    assert cli.main(["run", "--config", str(write(tmp_path, text))]) == cli.OK
    row = read_csv(tmp_path / "iw" / "summary.csv")[0]
    assert row["m_t"] == 580 and row["theta_hat"] > 0


def test_run_missing_data_is_config_error(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("PARACTIVE_DATA", str(tmp_path / "nowhere"))
    cfg = write(tmp_path, f"out = {tmp_path / 'o'}\n")
    assert cli.main(["run", "--config", str(cfg)]) == cli.CONFIG_ERROR
    assert "PARACTIVE_DATA" in capsys.readouterr().err


def test_run_bad_config_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "mode = sync\n[cluster]\nk = x\n", "bad.cfg")
    assert cli.main(["run", "--config", str(cfg)]) == cli.CONFIG_ERROR
    assert "bad.cfg:3" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "absent.cfg")]) == cli.CONFIG_ERROR
    assert cli.main(["run"]) == cli.CONFIG_ERROR


def test_run_failure_flushes_partial_record(tmp_path, capsys):
    data = tmp_path / "d.txt"
    data.write_text("".join(f"{1 if i % 2 else -1} 1:{i / 40} 2:0.5\n" for i in range(40))
                    + "1 1:inf 2:0\n" + "-1 1:0.1 2:0.2\n" * 5)
    text = (f"mode = sequential-passive\nout = {tmp_path / 'part'}\n[data]\nsource = sparse\n"
            f"path = {data}\n[learner]\nkind = nn\nhidden = 3\n[cluster]\nB = 1\nwarmstart = 0\n")
    code = cli.main(["run", "--config", str(write(tmp_path, text))])
    assert code == cli.RUNTIME_FAILURE
    err = capsys.readouterr().err
    assert "NumericError" in err and "partial record" in err
    assert (tmp_path / "part" / "querylog.csv").exists()
    assert not (tmp_path / "part" / "summary.csv").exists()


# -- sweep -----------------------------------------------------------------------

def test_sweep_dedupes_and_summarises(tmp_path, capsys):
    cfg = gauss_cfg(tmp_path, extra="\n[sweep]\npassive = 1\n")
    code = cli.main(["sweep", "--config", str(cfg), "--k", "1,2,2,4"])
    assert code == cli.OK
    err = capsys.readouterr().err
    assert err.count("duplicate k values removed") == 1
    out = tmp_path / "out"
    assert all((out / f"k{k}" / "errors.csv").exists() for k in (1, 2, 4))
    assert (out / "passive" / "errors.csv").exists()
    lines = (out / "summary.csv").read_text().splitlines()
    assert lines[0] == ",".join(SUMMARY_COLUMNS)
    rows = read_csv(out / "summary.csv")
    assert [r["k"] for r in rows] == [1, 2, 4]
    assert rows[0]["speedup_vs_active1"] == 1.0


def test_sweep_single_k(tmp_path):
    cfg = gauss_cfg(tmp_path)
    assert cli.main(["sweep", "--config", str(cfg), "--k", "2"]) == cli.OK
    rows = read_csv(tmp_path / "out" / "summary.csv")
    assert len(rows) == 1 and rows[0]["k"] == 2


def test_sweep_rejects_indivisible_k(tmp_path, capsys):
    cfg = gauss_cfg(tmp_path)
    assert cli.main(["sweep", "--config", str(cfg), "--k", "1,3"]) == cli.CONFIG_ERROR
    assert "nearest valid B" in capsys.readouterr().err
    assert cli.main(["sweep", "--config", str(cfg), "--k", "1,x"]) == cli.CONFIG_ERROR


# -- verify ----------------------------------------------------------------------

def test_verify_selected_checks(capsys, monkeypatch):
    monkeypatch.setenv("PARACTIVE_DATA", "/nonexistent")
    assert cli.main(["verify", "--only", "2,4"]) == cli.OK
    out = capsys.readouterr().out
    assert "[PASS]  2" in out and "[PASS]  4" in out and "[PASS]  1" not in out
    assert "[SKIP]" in out and "MNIST" in out


def test_verify_detects_broken_solver(capsys, monkeypatch):
    monkeypatch.setenv("PARACTIVE_DATA", "/nonexistent")
    monkeypatch.setattr(acceptance, "solve_query_equation", lambda G, eps, *a: 0.5)
    assert cli.main(["verify", "--only", "1"]) == cli.RUNTIME_FAILURE
    assert "[FAIL]  1" in capsys.readouterr().out
