import json
import subprocess
import sys

import numpy as np
import pytest

from gpinverse.cli import config_hash, load_config, main, read_matrix
from gpinverse.errors import ParseError


@pytest.fixture
def fixture_dir(tmp_path):
    out = tmp_path / "fx"
    assert main(["synth", "--output", str(out), "--iterations", "600", "--burn-in", "100"]) == 0
    return out


def edit_config(path, **changes):
    cfg = json.loads(path.read_text())
    cfg.update(changes)
    path.write_text(json.dumps(cfg))


def error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return err[-1] if err else ""


class TestReadMatrix:
    def test_header_and_comments(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("# note\na,b\n1,2\n\n3,4.5\n")
        np.testing.assert_array_equal(read_matrix(p), [[1, 2], [3, 4.5]])

    def test_bad_cell_location(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1,2\n3,x\n")
        with pytest.raises(ParseError) as info:
            read_matrix(p)
        assert (info.value.line, info.value.column) == (2, 2)

    @pytest.mark.parametrize("token", ["nan", "NaN", "inf", "-inf"])
    def test_non_finite_rejected(self, tmp_path, token):
        p = tmp_path / "m.csv"
        p.write_text(f"1,2\n{token},4\n")
        with pytest.raises(ParseError) as info:
            read_matrix(p)
        assert (info.value.line, info.value.column) == (2, 1)

    def test_ragged(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1,2\n3,4,5\n")
        with pytest.raises(ParseError, match="expected 2 columns"):
            read_matrix(p)


class TestErrors:
    def test_parse_error_exit(self, fixture_dir, capsys):
        (fixture_dir / "design.csv").write_text("s1,s2\n0,0\n0.5,oops\n")
        assert main(["sample", "--config", str(fixture_dir / "config.json")]) == 2
        line = error_line(capsys)
        assert line.startswith("error category=parse_error")
        assert "design.csv:3:2" in line

    def test_dimension_mismatch(self, fixture_dir, capsys):
        edit_config(fixture_dir / "config.json", dims={"d": 2, "j": 3, "k": 2})
        assert main(["sample", "--config", str(fixture_dir / "config.json")]) == 2
        assert "category=dimension_mismatch" in error_line(capsys)

    def test_missing_config(self, tmp_path, capsys):
        assert main(["sample", "--config", str(tmp_path / "none.json")]) == 2
        assert "category=config_error" in error_line(capsys)

    def test_missing_chain(self, fixture_dir, capsys):
        assert main(["summarize", "--config", str(fixture_dir / "config.json")]) != 0
        assert error_line(capsys).startswith("error category=")

    def test_bounds_warning_not_fatal(self, fixture_dir, capsys):
        edit_config(fixture_dir / "config.json", bounds=[[0.1, 1.0], [0.0, 1.0]])
        assert main(["sample", "--config", str(fixture_dir / "config.json")]) == 0
        assert "warning category=BoundsViolation" in capsys.readouterr().err

    def test_bad_init_exit_code(self, fixture_dir, capsys):
        cfg = json.loads((fixture_dir / "config.json").read_text())
        cfg["tmcmc"]["init"] = [0.5, 0.5, -1.0, 1.0, 1.0, 0.0, 1.0]
        (fixture_dir / "config.json").write_text(json.dumps(cfg))
        assert main(["sample", "--config", str(fixture_dir / "config.json")]) == 4
        assert "category=invalid_init" in error_line(capsys)


class TestPipeline:
    def test_round_trip(self, fixture_dir):
        cfg_path = fixture_dir / "config.json"
        cfg = json.loads(cfg_path.read_text())
        cfg["loo"] = {"iterations": 300, "burn_in": 50, "folds": [0, 12]}
        cfg_path.write_text(json.dumps(cfg))
        for cmd in ("sample", "summarize", "predict", "loo"):
            assert main([cmd, "--config", str(cfg_path)]) == 0, cmd
        out = fixture_dir / "out"
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 0
        assert manifest["config_sha256"] == config_hash(load_config(cfg_path))
        chain = read_matrix(out / "chain.csv")
        header = [ln for ln in (out / "chain.csv").read_text().splitlines() if not ln.startswith("#")][0]
        assert chain.shape == (600, 9)
        assert header.split(",")[:3] == ["iteration", "s1", "s2"]
        summary = json.loads((out / "summary.json").read_text())
        assert "s1" in json.dumps(summary)
        assert (out / "model_fit.csv").stat().st_size > 0
        loo = json.loads((out / "loo.json").read_text())
        assert [f["fold"] for f in loo["folds"]] == [0, 12]

    def test_seed_override_changes_chain(self, fixture_dir, tmp_path):
        cfg = str(fixture_dir / "config.json")
        assert main(["sample", "--config", cfg, "--output", str(tmp_path / "a")]) == 0
        assert main(["sample", "--config", cfg, "--output", str(tmp_path / "b"), "--seed", "1"]) == 0
        assert main(["sample", "--config", cfg, "--output", str(tmp_path / "c")]) == 0
        # headers differ through the output path in the config hash
        a, b, c = (read_matrix(tmp_path / x / "chain.csv") for x in "abc")
        np.testing.assert_array_equal(a, c)
        assert not np.array_equal(a, b)

    def test_coord_scale(self, fixture_dir, tmp_path):
        cfg = str(fixture_dir / "config.json")
        assert main(["sample", "--config", cfg, "--output", str(tmp_path / "plain")]) == 0
        edit_config(fixture_dir / "config.json", coord_scale=[2.0, 2.0])
        assert main(["sample", "--config", cfg, "--output", str(tmp_path / "scaled")]) == 0
        plain = read_matrix(tmp_path / "plain" / "chain.csv")
        scaled = read_matrix(tmp_path / "scaled" / "chain.csv")
        # s is reported in user units in both runs and stays in the box
        for ch in (plain, scaled):
            assert np.all((ch[:, 1:3] >= 0) & (ch[:, 1:3] <= 1))
        assert not np.array_equal(plain, scaled)

    def test_module_entry_point(self):
        r = subprocess.run([sys.executable, "-m", "gpinverse", "--version"], capture_output=True, text=True)
        assert r.returncode == 0 and "gpinverse" in r.stdout
