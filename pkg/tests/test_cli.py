import csv

import pytest

from dca.cli import RunConfig, main
from dca.core import ConfigError
from dca.engine import read_pairs
from synth import write_kdd_like, write_tiny_csv

FAST = ["--population", "10", "--seed", "1"]


def data_lines(path):
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]


def rows_of(path):
    return list(csv.DictReader(data_lines(path)))


@pytest.fixture
def hand_case(tmp_path):
    """Six rows, one cell with lifespan 4, identity preprocessing."""
    data = write_tiny_csv(
        tmp_path / "six.csv",
        [(1, 0, 0, 1), (1, 0, 0, 1), (1, 0, 0, 1), (0, 0, 1, 0), (0, 0, 1, 0), (0, 0, 1, 0)],
    )
    model = tmp_path / "identity.txt"
    model.write_text(
        "dca-preprocess-model 1\nmethod manual\nseed 0\ns_max 1.0\nfeatures f1\tf2\tf3\n"
        "candidate 0 nan 0 0.0 1.0 pamp 0 f1\n"
        "candidate 1 nan 0 0.0 1.0 danger 0 f2\n"
        "candidate 2 nan 0 0.0 1.0 safe 0 f3\nend\n"
    )
    cfg = tmp_path / "six.ini"
    cfg.write_text(
        "[dataset]\npreset = csv\nlabel_column = label\nlabel_map = 0:0,1:1\n\n"
        "[engine]\npopulation = 1\nlifespan_min = 4\nlifespan_max = 4\n"
    )
    return data, model, cfg


class TestRun:
    def test_hand_traced_pairs(self, hand_case, tmp_path):
        data, model, cfg = hand_case
        out = tmp_path / "out"
        rc = main(["run", "--config", str(cfg), "--data", str(data), "--model", str(model), "--rows", "all", "--out", str(out)])
        assert rc == 0
        # csm is 2 for every row; k is 2 for (1,0,0) and -3 for (0,0,1)
        expected = [(0, 4.0), (1, 4.0), (2, -1.0), (3, -1.0), (4, -6.0), (5, -6.0)]
        assert read_pairs(open(out / "pairs.tsv")) == expected
        segs = rows_of(out / "segments.csv")
        assert [r["verdict"] for r in segs] == ["anomalous"] * 2 + ["normal"] * 4
        assert {r["partial"] for r in segs} == {"true"}  # 6 pairs < z

    def test_segmented_matches_offline(self, hand_case, tmp_path):
        data, model, cfg = hand_case
        out = tmp_path / "out"
        main(["run", "--config", str(cfg), "--data", str(data), "--model", str(model), "--rows", "all",
              "--segment-size", "4", "--out", str(out)])
        segs = rows_of(out / "segments.csv")
        assert sorted({r["segment_index"] for r in segs}) == ["0", "1"]
        pairs = read_pairs(open(out / "pairs.tsv"))
        for a in range(6):
            seg_beta = sum(int(r["count"]) for r in segs if int(r["antigen"]) == a)
            seg_gamma = sum(float(r["k_sum"]) for r in segs if int(r["antigen"]) == a)
            assert seg_beta == sum(1 for x, _ in pairs if x == a)
            assert seg_gamma == pytest.approx(sum(k for x, k in pairs if x == a), rel=1e-9)

    def test_missing_model(self, tmp_path, capsys):
        rc = main(["run", "--model", str(tmp_path / "nope.txt"), "--out", str(tmp_path)])
        assert rc != 0
        assert "nope.txt" in capsys.readouterr().err


class TestPreprocess:
    def test_pca_model_structure(self, tmp_path):
        out = tmp_path / "p"
        assert main(["preprocess", "--method", "pca", "--out", str(out)] + FAST) == 0
        text = (out / "model.txt").read_text()
        cats = {ln.split()[6] for ln in text.splitlines() if ln.startswith("candidate ")}
        assert cats == {"pamp", "danger", "safe"}
        assert "# dca" in text.splitlines()[0] and "seed=1" in text.splitlines()[0]
        assert rows_of(out / "ranking.csv")

    def test_unlabeled_correlation(self, tmp_path, capsys):
        data = tmp_path / "u.csv"
        data.write_text("a,b,c,d\n1,2,3,4\n5,6,7,8\n")
        rc = main(["preprocess", "--dataset", "csv", "--data", str(data), "--method", "correlation", "--out", str(tmp_path)])
        assert rc != 0
        assert "label" in capsys.readouterr().err


class TestEvaluate:
    def test_breast_cancer_report(self, tmp_path):
        out = tmp_path / "e"
        assert main(["evaluate", "--method", "pca", "--out", str(out)] + FAST) == 0
        (row, agg) = rows_of(out / "eval.csv")
        assert agg["fold"] == "aggregate"
        assert float(agg["tpr"]) >= 0 and float(agg["fpr"]) >= 0
        assert "TPR" in (out / "eval.txt").read_text()

    def test_ten_folds(self, tmp_path):
        data = write_kdd_like(tmp_path / "kdd.csv", 300, seed=5)
        out = tmp_path / "e"
        rc = main(["evaluate", "--dataset", "kdd", "--data", str(data), "--method", "infogain", "--folds", "10",
                   "--out", str(out)] + FAST)
        assert rc == 0
        rows = rows_of(out / "eval.csv")
        assert [r["fold"] for r in rows] == [str(i) for i in range(10)] + ["aggregate"]


class TestSweep:
    def test_z_rows(self, tmp_path):
        out = tmp_path / "s"
        assert main(["sweep", "--param", "z", "--values", "10,100,1000", "--out", str(out)] + FAST) == 0
        assert [r["value"] for r in rows_of(out / "sweep_z.csv")] == ["10", "100", "1000"]

    def test_threshold_monotone(self, tmp_path):
        out = tmp_path / "s"
        values = "-50,-10,0,10,50,200"
        assert main(["sweep", "--param", "threshold", f"--values={values}", "--method", "correlation",
                     "--out", str(out)] + FAST) == 0
        rows = rows_of(out / "sweep_threshold.csv")
        tpr = [float(r["tpr"]) for r in rows]
        fpr = [float(r["fpr"]) for r in rows]
        assert tpr == sorted(tpr, reverse=True)
        assert fpr == sorted(fpr, reverse=True)

    def test_bad_param(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["sweep", "--param", "w", "--values", "1", "--out", str(tmp_path)])


class TestDeterminism:
    @pytest.mark.parametrize(
        "cmd,files",
        [
            (["preprocess", "--method", "infogain"], ["model.txt", "ranking.csv"]),
            (["evaluate", "--method", "pca"], ["eval.csv", "scores.csv"]),
            (["sweep", "--param", "N", "--values", "5,10"], ["sweep_N.csv"]),
        ],
    )
    def test_byte_identical(self, tmp_path, cmd, files):
        for name in ("a", "b"):
            assert main(cmd + ["--out", str(tmp_path / name)] + FAST) == 0
        for f in files:
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_run_byte_identical(self, hand_case, tmp_path):
        data, model, cfg = hand_case
        for name in ("a", "b"):
            main(["run", "--config", str(cfg), "--data", str(data), "--model", str(model), "--out", str(tmp_path / name)])
        for f in ("pairs.tsv", "segments.csv", "aggregate.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


class TestConfig:
    def test_precedence(self, tmp_path):
        ini = tmp_path / "c.ini"
        ini.write_text("[engine]\npopulation = 7  ; inline comment\n[analysis]\nthreshold = 1.5\n")
        assert RunConfig.build().engine_config().population_size == 100
        cfg = RunConfig.build(str(ini))
        assert cfg.engine_config().population_size == 7
        cfg = RunConfig.build(str(ini), {"population": 9})
        assert cfg.engine_config().population_size == 9
        assert cfg.pipeline().threshold == 1.5

    def test_unknown_key(self, tmp_path):
        ini = tmp_path / "c.ini"
        ini.write_text("[engine]\ncells = 7\n")
        with pytest.raises(ConfigError):
            RunConfig.build(str(ini))

    def test_out_env(self, monkeypatch):
        monkeypatch.setenv("DCA_OUT", "/tmp/elsewhere")
        assert str(RunConfig.build().out_dir) == "/tmp/elsewhere"
        assert str(RunConfig.build(overrides={"out": "x"}).out_dir) == "x"

    def test_header_embeds_config(self):
        lines = RunConfig.build(overrides={"seed": 42}).header("run")
        assert "seed=42" in lines[0]
        assert "engine.population=100" in lines
        assert "preprocess.method=pca" in lines
