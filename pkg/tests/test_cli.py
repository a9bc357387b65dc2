import subprocess
import sys

import pytest

from discsde.cli import RunConfig, main, parse_config
from discsde.errors import ParseError, ValidationError
from discsde.experiments import fmt


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    return [line.split(",") for line in path.read_text().splitlines()]


# --- config --------------------------------------------------------------

def test_minimal_config_gets_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, "[run]\nmodel = example1\nexperiment = error\n"))
    assert cfg.n_list == [2**k for k in range(6, 13)]
    assert (cfg.N, cfg.m, cfg.scheme) == (2**14, 5000, "em")
    assert cfg.p_list == [1.0, 2.0, 4.0, 8.0]


def test_n_must_divide_N(tmp_path):
    path = write(tmp_path, "[run]\nexperiment = error\nn = 64, 100\nN = 16384\n")
    with pytest.raises(ValidationError, match="n must divide N"):
        parse_config(path)


def test_flags_override_file(tmp_path):
    path = write(tmp_path, "[run]\nseed = 7\nm = 10\n")
    assert parse_config(path).master_seed == 7
    assert parse_config(path, {"master_seed": 42, "m": None}).master_seed == 42
    assert parse_config(path, {"master_seed": 42, "m": None}).m == 10


def test_sections_and_case(tmp_path):
    text = """
[run]
experiment = hist
n = 8, 16
N = 64
exponent = 0.4   # trailing comment
[model]
a = -3
b = 1
x0 = 0, 2
[transform]
eps = 0.2
[surface]
kind = sphere
center = 0, 0
radius = 2
"""
    cfg = parse_config(write(tmp_path, text))
    assert cfg.n_list == [8, 16] and cfg.N == 64 and cfg.exponent == 0.4
    assert cfg.model_params == {"a": -3.0, "b": 1.0, "x0": [0.0, 2.0]}
    assert cfg.eps == 0.2 and cfg.surface["kind"] == "sphere"


@pytest.mark.parametrize("text, match", [
    ("m = 5\n", "line 1"),
    ("[run]\nm = five\n", r"\[run\] m"),
    ("[run]\ncolour = red\n", "unknown key"),
    ("[extras]\nx = 1\n", "unknown section"),
    ("[transform]\nalpha = 1\n", "unknown key"),
    ("[surface]\nradius = 1\n", "kind"),
])
def test_parse_errors(tmp_path, text, match):
    with pytest.raises(ParseError, match=match):
        parse_config(write(tmp_path, text))
    with pytest.raises(ParseError):
        parse_config(str(tmp_path / "missing.ini"))


@pytest.mark.parametrize("override", [
    {"p_list": [0.5]}, {"m": 0}, {"threads": 0}, {"model": "nope"}, {"scheme": "rk4"},
    {"eps": -1.0}, {"experiment": "dance"}, {"master_seed": -1},
])
def test_validation_errors(override):
    with pytest.raises(ValidationError):
        parse_config(None, override)


def test_runconfig_defaults_validate():
    assert RunConfig().validate().experiment == "error"


# --- runs ----------------------------------------------------------------

SMALL = ["--n", "8,16,32", "--N", "64", "--m", "30"]


def run_cli(*args):
    return main(list(args))


def test_run_error_writes_csvs(tmp_path):
    out = tmp_path / "o"
    assert run_cli("run-error", "--model", "gbm", "--seed", "3", "--out-dir", str(out), *SMALL) == 0
    assert sorted(p.name for p in out.iterdir()) == ["error.csv", "manifest.csv", "rates.csv"]
    rows = read_csv(out / "error.csv")
    assert rows[0] == ["p", "n", "N", "m", "value"] and len(rows) == 1 + 4 * 3
    manifest = dict(r[:2] for r in read_csv(out / "manifest.csv")[1:])
    assert manifest["status"] == "ok" and manifest["master_seed"] == "3"
    assert manifest["model"] == "gbm" and "wall_time_s" in manifest


def test_run_error_deterministic(tmp_path):
    outs = []
    for k, threads in enumerate(("1", "2", "1")):
        out = tmp_path / f"o{k}"
        assert run_cli("run-error", "--model", "example1", "--seed", "1", "--threads", threads,
                       "--out-dir", str(out), *SMALL) == 0
        outs.append(out)
    for name in ("error.csv", "rates.csv"):
        blobs = {(o / name).read_bytes() for o in outs}
        assert len(blobs) == 1


def test_run_error_transformed(tmp_path):
    out = tmp_path / "t"
    cfg = write(tmp_path, "[run]\nscheme = em-transformed\n[transform]\neps = 0.1\n")
    assert run_cli("run-error", "--config", cfg, "--model", "example1", "--out-dir", str(out),
                   "--n", "8,16,32", "--N", "64", "--m", "10") == 0
    assert (out / "error.csv").exists()


@pytest.mark.parametrize("cmd, files", [
    ("run-diff", {"diff.csv", "rates.csv"}),
    ("run-sup-error", {"sup_error.csv", "rates.csv"}),
    ("run-hist", {"hist.csv"}),
    ("run-occupation", {"occupation.csv", "neighborhood.csv", "rates.csv"}),
])
def test_run_other_experiments(tmp_path, cmd, files):
    out = tmp_path / "o"
    assert run_cli(cmd, "--model", "example2", "--out-dir", str(out), *SMALL) == 0
    assert {p.name for p in out.iterdir()} == files | {"manifest.csv"}


def test_check_geometry(tmp_path):
    out = tmp_path / "g"
    assert run_cli("check-geometry", "--out-dir", str(out)) == 0
    rows = read_csv(out / "geometry.csv")
    assert rows[0] == ["quantity", "sampled_sup", "bound", "pass"]
    assert all(r[3] == "true" for r in rows[1:])
    cfg = write(tmp_path, "[surface]\nkind = hyperplane\nbase = 0,0,0\nnormal = 0,0,1\n")
    assert run_cli("check-geometry", "--config", cfg, "--out-dir", str(tmp_path / "h")) == 0


def test_check_transform_ok(tmp_path):
    out = tmp_path / "t"
    assert run_cli("check-transform", "--model", "example1", "--out-dir", str(out)) == 0
    rows = read_csv(out / "transform.csv")
    names = [r[0] for r in rows[1:]]
    assert "sup_norm_gamma" in names and "mu_g_gap_ratio" in names
    assert all(r[3] == "true" for r in rows[1:])


@pytest.mark.parametrize("model, eps, failed", [
    ("example1", "2.5", "eps_below_reach"),
    ("example2", "1.9", "sup_norm_gamma"),
])
def test_check_transform_oversized_eps(tmp_path, capsys, model, eps, failed):
    out = tmp_path / "t"
    assert run_cli("check-transform", "--model", model, "--eps", eps, "--out-dir", str(out)) == 3
    assert not (out / "transform.csv").exists()
    rows = read_csv(out / "transform.csv.partial")
    assert [r[0] for r in rows[1:] if r[3] == "false"] == [failed]
    assert failed in capsys.readouterr().err
    manifest = dict(r[:2] for r in read_csv(out / "manifest.csv")[1:])
    assert manifest["status"].startswith("numerical failure")


def test_occupation_identically_zero_is_numerical_failure(tmp_path):
    cfg = write(tmp_path, "[model]\nx0 = 0, 0\n")
    out = tmp_path / "z"
    # example1 from the origin with a short horizon never gets near the circle
    code = run_cli("run-occupation", "--config", cfg, "--model", "example1", "--out-dir", str(out),
                   "--n", "4,8,16", "--N", "64", "--m", "5")
    assert code == 3
    assert (out / "occupation.csv.partial").exists()


def test_invalid_flags_exit_2(tmp_path, capsys):
    assert run_cli("run-error", "--n", "64,100", "--out-dir", str(tmp_path)) == 2
    assert "n must divide N" in capsys.readouterr().err
    assert run_cli("run-error", "--seed", "-4") == 2
    assert run_cli("frobnicate") == 2
    bad = write(tmp_path, "[run]\nN = oops\n")
    assert run_cli("run-error", "--config", bad) == 2


def test_list_models(capsys):
    assert run_cli("list-models") == 0
    out = capsys.readouterr().out
    for name in ("example1", "example2", "sign1d", "gbm"):
        assert name in out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "discsde", "list-models"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "example1" in res.stdout


def test_occupation_eps_flag_is_a_list(tmp_path):
    out = tmp_path / "occ"
    rc = main(["run-occupation", "--model", "example1", "--n", "32,64,128", "--N", "512",
               "--m", "20", "--eps", "0.05,0.1", "--out-dir", str(out)])
    assert rc == 0
    rows = (out / "neighborhood.csv").read_text().strip().splitlines()
    assert {r.split(",")[0] for r in rows[1:]} == {fmt(0.05), fmt(0.1)}
