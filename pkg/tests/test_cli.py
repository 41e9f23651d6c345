import json

import pytest

from spinlsi.cli import SCHEMA, load_config, main, parse_config
from spinlsi.errors import ConfigurationError


def _run(args, tmp_path, capsys):
    code = main(args + ["--out", str(tmp_path), "--quiet"])
    return code, capsys.readouterr()


def test_defaults_cover_schema():
    cfg = load_config(None)
    assert set(cfg.values) == set(SCHEMA)
    assert cfg.centre() == 3
    assert cfg.model().n_sites == 5 and cfg.grid().m == 10


def test_parse_config_comments_and_types():
    cfg = parse_config("# header\nmodel.n_sites = 7  # trailing\nrun.polish = yes\nrun.ladder = 1, 2, 3\n"
                       "model.boundary.left = none\n")
    assert cfg["model.n_sites"] == 7 and cfg["run.polish"] is True
    assert cfg["run.ladder"] == (1.0, 2.0, 3.0) and cfg["model.boundary.left"] is None


@pytest.mark.parametrize("text,match", [
    ("model.foo = 1\n", r"<config>:1: unknown key 'model.foo'"),
    ("grid.m = 5\n\ngrid.m = 6\n", r"<config>:3: duplicate key"),
    ("grid.m\n", r"<config>:1: expected"),
    ("grid.m = ten\n", r"<config>:1: invalid value"),
    ("grid.m = -4\n", r"<config>:1: invalid value"),
])
def test_parse_errors_are_line_anchored(text, match):
    with pytest.raises(ConfigurationError, match=match):
        parse_config(text)


@pytest.mark.parametrize("override", ["model.q=2.5", "model.coupling.J=0.995", "chain.k=9",
                                      "model.boundary.left=5", "run.lemmas=L1.1", "run.ladder=1,2"])
def test_validation_before_running(override):
    with pytest.raises(ConfigurationError):
        load_config(None, [override])


def test_constants_writes_csv_and_manifest(tmp_path, capsys):
    code, _ = _run(["constants", "--set", "model.coupling.J=1e-9", "--sweep", "J=0:1e-7:3"],
                   tmp_path, capsys)
    assert code == 0
    text = (tmp_path / "constants.csv").read_text()
    assert text.startswith("name,value,formula") and "hat_c" in text
    man = json.loads((tmp_path / "constants.csv.manifest").read_text())
    assert man["exit_code"] == 0 and len(man["config_sha256"]) == 64
    assert man["config"]["model.coupling.J"] == 1e-9
    assert (tmp_path / "constants_sweep.csv").read_text().count("\n") == 4


def test_failed_checks_exit_2(tmp_path, capsys):
    code, _ = _run(["constants", "--set", "model.coupling.J=0.5"], tmp_path, capsys)
    assert code == 2
    assert json.loads((tmp_path / "constants.csv.manifest").read_text())["exit_code"] == 2


def test_errors_exit_1(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("grid.m = 8\nmodel.foo = 1\n")
    code, out = _run(["sweep-converge", str(cfg)], tmp_path, capsys)
    assert code == 1 and f"{cfg}:2: unknown key 'model.foo'" in out.err
    code, _ = _run(["no-such-command"], tmp_path, capsys)
    assert code == 1
    code, _ = _run(["constants", "--sweep", "K=1:2:3"], tmp_path, capsys)
    assert code == 1


def test_sweep_converge_product_case(tmp_path, capsys):
    code, _ = _run(["sweep-converge", "--set", "model.coupling.J=0", "--set", "grid.m=6",
                    "--set", "model.n_sites=4"], tmp_path, capsys)
    assert code == 0
    lines = (tmp_path / "sweep_converge.csv").read_text().splitlines()
    assert lines[0] == "n,distance,ratio,truncated"
    assert len([ln for ln in lines[1:] if not ln.startswith("#")]) == 1
    footer = json.loads(lines[-1][2:])
    assert footer["fitted_rate"] == 0.0 and footer["entropy_residual"] < 1e-10


def test_sweep_converge_coupled(tmp_path, capsys):
    code, _ = _run(["sweep-converge", "--set", "grid.m=6", "--set", "model.n_sites=4",
                    "--set", "run.n_max=5"], tmp_path, capsys)
    assert code == 0
    footer = json.loads((tmp_path / "sweep_converge.csv").read_text().splitlines()[-1][2:])
    assert 0 < footer["fitted_rate"] < 1 and footer["monotone"]


def test_verify_identities(tmp_path, capsys):
    code, _ = _run(["verify-identities", "--set", "model.coupling.J=0", "--set", "grid.m=6",
                    "--set", "model.n_sites=4", "--set", "run.samples=4"], tmp_path, capsys)
    assert code == 0
    text = (tmp_path / "verify_identities.csv").read_text()
    assert "product_exactness" in text and "entropy_telescope" in text and "dlr" in text


def test_estimate_ls(tmp_path, capsys):
    code, _ = _run(["estimate-ls", "--set", "run.measure=gaussian", "--set", "grid.L=6",
                    "--set", "grid.m=60"], tmp_path, capsys)
    assert code == 0
    assert "SG_from_LS_bound" in (tmp_path / "estimate_ls.csv").read_text()


def test_refine(tmp_path, capsys):
    code, _ = _run(["refine", "--set", "run.target=gaussian_integral", "--set", "run.axis=L",
                    "--set", "run.ladder=2,4,6"], tmp_path, capsys)
    assert code == 0
    rows = (tmp_path / "refine_gaussian_integral_L.csv").read_text().splitlines()
    assert len(rows) == 4


def test_verify_lemmas_and_hypotheses(tmp_path, capsys):
    base = ["--set", "grid.m=5", "--set", "grid.L=2", "--set", "model.n_sites=5",
            "--set", "run.omega_points=2", "--set", "run.n_seeds=3", "--set", "run.max_iter=50"]
    code, _ = _run(["verify-lemmas", "--fitted", "--set", "run.samples=2",
                    "--set", "run.lemmas=L3.3,L4.1,L5.4"] + base, tmp_path, capsys)
    assert code == 0
    text = (tmp_path / "verify_lemmas.csv").read_text()
    assert "L4.1:fitted_scale" in text
    # J = 0.05 sits far above the feasibility threshold of the measured constants
    code, _ = _run(["check-hypotheses"] + base, tmp_path, capsys)
    assert code == 2
    assert "H3:J,H3,0.05,False" in (tmp_path / "check_hypotheses.csv").read_text()


def test_schema_document_lists_every_key():
    from pathlib import Path

    doc = (Path(__file__).parents[1] / "docs" / "config_schema.md").read_text()
    assert [k for k in SCHEMA if f"`{k}`" not in doc] == []
