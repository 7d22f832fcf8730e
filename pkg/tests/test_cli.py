"""End-to-end runs of the command-line interface."""
import json
import subprocess
import sys

import numpy as np
import pytest

from planarcda.cli import RunConfig, bench, cca_bytes, main
from planarcda.errors import ValidationError
from planarcda.evaluation import parse_report


def _files(root):
    return sorted(p for p in root.rglob("*") if p.is_file())


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "d"
    assert main(["synth", "--classes", "3", "--per-class", "6", "--shape", "8,8,4,4",
                 "--seed", "7", "--out", str(out)]) == 0
    return out


class TestSynth:

    def test_counts_and_summary(self, tmp_path, capsys):
        out = tmp_path / "d"
        code = main(["synth", "--classes", "3", "--per-class", "20", "--shape", "16,16,8,8",
                     "--seed", "7", "--out", str(out)])
        assert code == 0
        assert len(list((out / "x").rglob("*.pgm"))) == 60
        assert len(list((out / "y").rglob("*.pgm"))) == 60
        assert capsys.readouterr().out.strip() == "N=60 shapes=16x16,8x8 c=3"

    def test_force_rewrites_identical_files(self, tmp_path):
        out = tmp_path / "d"
        args = ["synth", "--per-class", "4", "--shape", "6,6,3,3", "--seed", "3", "--out", str(out)]
        assert main(args) == 0
        before = {p: p.read_bytes() for p in _files(out)}
        assert main(args) == 2  # refuses a non-empty directory
        assert main(args + ["--force"]) == 0
        assert {p: p.read_bytes() for p in _files(out)} == before

    def test_one_class_rejected(self, tmp_path, capsys):
        assert main(["synth", "--classes", "1", "--out", str(tmp_path / "d")]) == 2
        assert "class" in capsys.readouterr().err


class TestFit:

    def test_cdtrl_complete_has_both_branches(self, dataset, tmp_path):
        out = tmp_path / "m.json"
        assert main(["fit", "--method", "cdtrl", "--d1", "3", "--d2", "3",
                     "--data", str(dataset), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["method"] == "cdtrl" and doc["info"]["mode"] == "complete"
        assert {"range_l", "range_r", "null_l", "null_r"} <= set(doc["matrices"])
        assert doc["config"] == {"method": "cdtrl", "d1": 3, "d2": 3, "seed": 0}

    def test_one_sample_per_class(self, tmp_path):
        data = tmp_path / "d"
        assert main(["synth", "--classes", "4", "--per-class", "1", "--shape", "6,6,4,4",
                     "--out", str(data)]) == 0
        out = tmp_path / "m.json"
        assert main(["fit", "--method", "cdtrl", "--data", str(data), "--out", str(out)]) == 0
        mats = json.loads(out.read_text())["matrices"]
        assert mats["range_l"]["cols"] == 0
        assert mats["null_l"]["cols"] > 0

    def test_not_converged_exit_3_still_writes(self, dataset, tmp_path, capsys):
        out = tmp_path / "m.json"
        code = main(["fit", "--method", "2dcca", "--max-iter", "1", "--data", str(dataset),
                     "--out", str(out)])
        assert code == 3 and out.exists()
        assert "max_iter" in capsys.readouterr().err

    def test_byte_identical_reruns(self, dataset, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (a, b):
            main(["fit", "--method", "cdtrl", "--data", str(dataset), "--out", str(out)])
        assert a.read_bytes() == b.read_bytes()

    def test_config_file_and_override(self, dataset, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"method": "2dlda", "width": 3}))
        out = tmp_path / "m.json"
        assert main(["fit", "--config", str(cfg), "--width", "2", "--data", str(dataset),
                     "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["method"] == "2dlda" and doc["matrices"]["projection"]["cols"] == 2

    def test_unknown_config_key(self, dataset, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"method": "cdtrl", "alpha": 1}))
        assert main(["fit", "--config", str(cfg), "--data", str(dataset),
                     "--out", str(tmp_path / "m.json")]) == 2

    def test_knob_for_another_method(self, dataset, tmp_path):
        assert main(["fit", "--method", "pca", "--sigma", "1.0", "--data", str(dataset),
                     "--out", str(tmp_path / "m.json")]) == 2

    def test_missing_data(self, tmp_path):
        assert main(["fit", "--method", "cdtrl", "--data", str(tmp_path / "none"),
                     "--out", str(tmp_path / "m.json")]) == 2

    def test_invalid_method_is_a_usage_error(self, dataset, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "planarcda", "fit", "--method", "svm",
                               "--data", str(dataset), "--out", str(tmp_path / "m.json")],
                              capture_output=True, text=True)
        assert proc.returncode == 2
        assert "usage" in proc.stderr and "invalid choice" in proc.stderr


def test_transform(dataset, tmp_path):
    model = tmp_path / "m.json"
    main(["fit", "--method", "cdtrl", "--d1", "3", "--d2", "3", "--data", str(dataset),
          "--out", str(model)])
    out = tmp_path / "f.json"
    assert main(["transform", "--model", str(model), "--data", str(dataset), "--out",
                 str(out), "--branch", "range"]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["samples"]) == 18 and doc["branch"] == "range"
    first = doc["samples"][0]
    assert first["class"] == "c01" and first["feature"]["rows"] == 2


class TestEval:

    def test_two_rows_and_determinism(self, dataset, tmp_path):
        a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
        for report in (a, b):
            assert main(["eval", "--protocol", "loo", "--methods", "2dcca,cdtrl", "--d1", "3",
                         "--d2", "3", "--data", str(dataset), "--report", str(report)]) == 0
        rows = parse_report(a.read_text())
        assert [r.method for r in rows] == ["2DCCA", "CDTRL"]
        assert a.read_bytes() == b.read_bytes()

    def test_cdtrl_beats_2dcca_on_easy_data(self, dataset, tmp_path):
        report = tmp_path / "r.tsv"
        main(["eval", "--methods", "2dcca,cdtrl", "--data", str(dataset), "--report",
              str(report)])
        two, cd = parse_report(report.read_text())
        assert cd.accuracy >= two.accuracy

    def test_split_and_modes(self, dataset, tmp_path):
        report = tmp_path / "r.tsv"
        assert main(["eval", "--protocol", "split", "--methods", "cdtrl-range,cdtrl,pca",
                     "--data", str(dataset), "--test", str(dataset),
                     "--report", str(report)]) == 0
        rows = parse_report(report.read_text())
        assert [r.method for r in rows] == ["CDTRL-range", "CDTRL", "PCA"]
        assert all(r.protocol == "split" and r.n_test == 18 for r in rows)

    def test_empty_null_branch_reported(self, dataset, tmp_path, capsys):
        # 15 within-class deviations fill the 8-row stacked maps: no null space
        assert main(["eval", "--methods", "cdtrl-null", "--data", str(dataset),
                     "--report", str(tmp_path / "r.tsv")]) == 2
        assert "trivial null space" in capsys.readouterr().err

    def test_split_needs_test(self, dataset, tmp_path):
        assert main(["eval", "--protocol", "split", "--methods", "pca", "--data", str(dataset),
                     "--report", str(tmp_path / "r.tsv")]) == 2

    def test_unknown_method_token(self, dataset, tmp_path):
        assert main(["eval", "--methods", "cdtrl,svm", "--data", str(dataset),
                     "--report", str(tmp_path / "r.tsv")]) == 2


class TestBench:

    def test_small_grid_rows(self, tmp_path, capsys):
        out = tmp_path / "b.tsv"
        assert main(["bench", "--sizes", "8", "--n", "20", "--reps", "1", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "m\tn\tN\tmethod\tmedian_ms"
        assert [ln.split("\t")[3] for ln in lines[1:]] == ["cca", "2dcca", "cdtrl"]
        assert all(float(ln.split("\t")[4]) > 0 for ln in lines[1:])

    def test_memory_guard_skips_cca(self):
        rows = bench([8], n_samples=10, reps=1, memory=cca_bytes(64, 16, 10) - 1)
        assert rows[0][3] == "cca" and np.isnan(rows[0][4])
        assert all(np.isfinite(r[4]) for r in rows[1:])

    def test_bad_grid(self):
        with pytest.raises(ValidationError):
            bench([8], n_samples=12, classes=5)


class TestRunConfig:

    def test_rejects_unknown_keys(self):
        with pytest.raises(ValidationError, match="foo"):
            RunConfig.from_dict({"method": "cdtrl", "foo": 1})

    @pytest.mark.parametrize("bad", [{"d1": 0}, {"d1": 1.5}, {"ridge": -1.0},
                                     {"conv_tol": 0.0}, {"method": "svm"}, {"seed": -1}])
    def test_field_validation(self, bad):
        with pytest.raises(ValidationError):
            RunConfig(**bad)

    def test_applies_to_method(self):
        RunConfig(method="l2dcca", sigma=2.0).check_applies(["l2dcca"])
        with pytest.raises(ValidationError, match="sigma"):
            RunConfig(method="2dcca", sigma=2.0).check_applies(["2dcca"])
