import csv
import math

import numpy as np
import pytest

from nile import artifact
from nile.cli import main, parse_alphas, parse_number, parse_strengths
from nile.data import Dataset, write_csv
from nile.estimator import predict


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--seed", "5", "--out", str(d / "data.csv")]) == 0
    assert main(["fit", str(d / "data.csv"), "--out", str(d / "fit.json"), "--k", "20"]) == 0
    return d


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


class TestParsing:
    def test_numbers(self):
        assert parse_number("0.5") == 0.5
        assert parse_number("2/3") == pytest.approx(2 / 3)
        assert parse_number("sqrt(1/3)") == pytest.approx(math.sqrt(1 / 3))
        with pytest.raises(ValueError):
            parse_number("sqrt(-1)")
        with pytest.raises(ValueError):
            parse_number("abc")

    def test_alphas(self):
        out = parse_alphas("sqrt(2/3),0,sqrt(1/3); sqrt(1/3),sqrt(2/3),0")
        assert len(out) == 2
        assert sum(v * v for v in out[0]) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            parse_alphas("1,0")

    def test_strengths(self):
        s = parse_strengths("0:2:0.1")
        assert len(s) == 21 and s[-1] == 2.0
        assert parse_strengths("0, 1.5") == (0.0, 1.5)


class TestFitPredict:
    def test_fit_summary(self, workdir, capsys):
        code = main(["fit", str(workdir / "data.csv"), "--out", str(workdir / "f2.json"), "--k", "20", "--test", "t1"])
        out = capsys.readouterr().out
        assert code == 0
        for key in ("k=20", "gamma=", "delta=", "lambda_star=", "fallback_used=", "statistic="):
            assert key in out
        assert artifact.load(workdir / "f2.json").test_kind.value == "t1"

    def test_predict_grid(self, workdir):
        out = workdir / "pred.csv"
        assert main(["predict", str(workdir / "fit.json"), "--grid", "-2", "2", "0.01", "--out", str(out)]) == 0
        table = rows(out)
        assert table[0] == ["x", "f_hat"]
        assert len(table) - 1 == 401

    def test_predict_matches_library(self, workdir):
        out = workdir / "pts.csv"
        pts = ["-5", "0", "0.25", "5"]
        assert main(["predict", str(workdir / "fit.json"), "--x", *pts, "--out", str(out)]) == 0
        fit = artifact.load(workdir / "fit.json")
        got = np.array([float(r[1]) for r in rows(out)[1:]])
        np.testing.assert_array_equal(got, predict(fit, np.array(pts, dtype=float)))

    def test_predict_needs_points(self, workdir, capsys):
        assert main(["predict", str(workdir / "fit.json")]) == 2
        assert "--grid" in capsys.readouterr().err

    def test_missing_column(self, tmp_path, capsys):
        p = tmp_path / "bad.csv"
        p.write_text("x,y\n1,2\n")
        assert main(["fit", str(p), "--out", str(tmp_path / "o.json")]) == 2
        err = capsys.readouterr().err
        assert "a" in err and "missing column" in err

    def test_malformed_row_line_number(self, tmp_path, capsys):
        p = tmp_path / "bad.csv"
        p.write_text("x,y,a\n1,2,3\n1,2,zz\n")
        assert main(["fit", str(p), "--out", str(tmp_path / "o.json")]) == 2
        assert "line 3" in capsys.readouterr().err

    def test_constant_x_is_fit_error(self, tmp_path, capsys):
        p = tmp_path / "const.csv"
        rng = np.random.default_rng(0)
        write_csv(Dataset(np.ones(100), rng.normal(size=100), rng.normal(size=100)), p)
        assert main(["fit", str(p), "--out", str(tmp_path / "o.json")]) == 1
        err = capsys.readouterr().err
        assert "column x is constant" in err

    def test_missing_file(self, tmp_path):
        assert main(["fit", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o.json")]) == 2

    def test_corrupt_artifact(self, workdir, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text((workdir / "fit.json").read_text().replace('"k": 20', '"k": 2'))
        assert main(["predict", str(bad), "--x", "0"]) == 2
        assert "k >= 4" in capsys.readouterr().err

    def test_bad_flag_value(self, workdir):
        with pytest.raises(SystemExit) as info:
            main(["fit", str(workdir / "data.csv"), "--out", "x.json", "--test", "t3"])
        assert info.value.code == 2

    def test_bad_alpha_option(self, workdir, capsys):
        assert main(["fit", str(workdir / "data.csv"), "--out", str(workdir / "z.json"), "--alpha", "1.5"]) == 2


class TestSimulate:
    def test_seed_determines_output(self, tmp_path):
        for name, seed in (("a", "1"), ("b", "1"), ("c", "2")):
            assert main(["simulate", "--seed", seed, "--n", "50", "--out", str(tmp_path / f"{name}.csv")]) == 0
        assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()
        assert (tmp_path / "a.csv").read_text() != (tmp_path / "c.csv").read_text()

    def test_config(self, tmp_path):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text("# strong confounding\nalphas = sqrt(1/3), sqrt(2/3), 0\nn = 40  # rows\nkappa = 1\n")
        out = tmp_path / "d.csv"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        assert len(rows(out)) == 41

    def test_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text("samples = 3\n")
        assert main(["simulate", "--config", str(cfg)]) == 2
        err = capsys.readouterr().err
        assert "unknown key 'samples'" in err and "alphas" in err and "kappa" in err


class TestExperiment:
    def test_summary_shape(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("n = 100\nn_models = 2\neval_grid_points = 101\nk = 12\n")
        out = tmp_path / "rows.csv"
        assert main(["experiment", "--config", str(cfg), "--out", str(out)]) == 0
        summary = rows(tmp_path / "rows_summary.csv")
        # 3 alpha configurations x 2 methods x 21 strengths
        assert len(summary) - 1 == 3 * 2 * 21
        assert len({r[0] for r in summary[1:]}) == 3

    def test_seed_changes_values_not_schema(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("alphas = sqrt(1/3),sqrt(2/3),0\nn = 100\nn_models = 2\neval_grid_points = 51\nk = 12\n")
        for seed in ("0", "1"):
            assert main(["experiment", "--config", str(cfg), "--seed", seed, "--out", str(tmp_path / f"r{seed}.csv")]) == 0
        r0, r1 = rows(tmp_path / "r0.csv"), rows(tmp_path / "r1.csv")
        assert r0[0] == r1[0] and len(r0) == len(r1)
        assert [r[4] for r in r0[1:]] != [r[4] for r in r1[1:]]


class TestCheckTheory:
    def test_default_suite_passes(self, tmp_path, capsys):
        cfg = tmp_path / "t.cfg"
        cfg.write_text("mc_n = 200000\n")
        out = tmp_path / "theory.csv"
        assert main(["check-theory", "--config", str(cfg), "--out", str(out)]) == 0
        assert "FAIL" not in capsys.readouterr().out
        assert rows(out)[0][0] == "scenario_id"
