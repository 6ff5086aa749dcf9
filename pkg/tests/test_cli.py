import csv
import json
import subprocess
import sys

import pytest

from segproc.cli import EXIT_CONFIG, EXIT_FIT, EXIT_STUDY, main
from segproc.config import format_config
from segproc.geometry import Configuration, Point2, Segment

GIBBS = {"model": "gibbs-directional", "tau": "200", "n_iter": "6000", "burn_in": "2000", "j_mc": "1000"}
INHOMOG = {"model": "inhomog-length", "tau": "300", "n_mc": "20000"}


def write_config(path, mapping):
    path.write_text(format_config(mapping))
    return str(path)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestSimulateAndFit:
    def test_gibbs_pipeline(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "g.cfg", GIBBS)
        code, out, _ = run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "sim", "--seed", 2)
        assert code == 0 and json.loads(out)["status"] == "ok"
        meta = (tmp_path / "sim" / "metadata.txt").read_text()
        assert "accept_birth" in meta and "seed = 2" in meta
        trace = list(csv.DictReader(open(tmp_path / "sim" / "trace.csv")))
        assert [int(r["step"]) for r in trace[:2]] == [1000, 2000]

        code, out, _ = run(capsys, "fit-tf", "--config", cfg, "--input", tmp_path / "sim" / "realization.csv",
                           "--out", tmp_path / "fit")
        assert code == 0 and json.loads(out)["a"] <= 0
        for name in ("fit.csv", "f_x.csv", "g.csv"):
            assert (tmp_path / "fit" / name).is_file()

        code, out, _ = run(capsys, "residuals", "--config", cfg, "--input", tmp_path / "sim" / "realization.csv",
                           "--q", "hits", "--j-mc", 2000)
        assert code == 0 and json.loads(out)["q"] == "hits"

    def test_inhomog_pipeline(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "h.cfg", INHOMOG)
        assert run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "sim")[0] == 0
        code, out, _ = run(capsys, "fit-mle", "--config", cfg, "--input", tmp_path / "sim" / "realization.csv",
                           "--out", tmp_path / "fit")
        assert code == 0 and json.loads(out)["tau"] > 0
        assert (tmp_path / "fit" / "f1.csv").is_file() and (tmp_path / "fit" / "palm_6.csv").is_file()
        code, _, _ = run(capsys, "residuals", "--config", cfg, "--input", tmp_path / "sim" / "realization.csv",
                         "--out", tmp_path / "res")
        assert code == 0 and (tmp_path / "res" / "residual_unit.csv").is_file()

    def test_simulate_deterministic(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "h.cfg", INHOMOG)
        for d in ("a", "b"):
            run(capsys, "simulate", "--config", cfg, "--out", tmp_path / d, "--index", 3)
        assert (tmp_path / "a" / "realization.csv").read_bytes() == (tmp_path / "b" / "realization.csv").read_bytes()


class TestStudyCommand:
    def test_study(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "h.cfg", INHOMOG)
        code, out, _ = run(capsys, "study", "--config", cfg, "--replications", 2, "--out", tmp_path / "s", "--jobs", 2)
        res = json.loads(out)
        assert code == 0 and res["replications"] == 2 and res["failed"] == 0 and "mean_b" in res
        assert (tmp_path / "s" / "summary.csv").is_file()

    def test_study_failure_exit(self, tmp_path, capsys, monkeypatch):
        import segproc.study as study
        from segproc.estimators.mle import MleError

        def fail(*args, **kwargs):
            raise MleError("solve b", "no sign change")

        monkeypatch.setattr(study, "fit", fail)
        cfg = write_config(tmp_path / "h.cfg", INHOMOG)
        code, _, err = run(capsys, "study", "--config", cfg, "--replications", 2, "--out", tmp_path / "s")
        assert code == EXIT_STUDY and json.loads(err)["failed"] == [0, 1]


class TestErrors:
    def test_bad_config(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "bad.cfg", {"model": "gibbs-directional", "a": "0.5"})
        code, out, err = run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "o")
        assert code == EXIT_CONFIG and out == "" and json.loads(err)["error"] == "config"

    def test_wrong_model_for_command(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "h.cfg", INHOMOG)
        code, _, _ = run(capsys, "fit-tf", "--config", cfg, "--input", tmp_path / "x.csv", "--out", tmp_path / "o")
        assert code == EXIT_CONFIG

    def test_missing_input(self, tmp_path, capsys):
        code, _, err = run(capsys, "fit-tf", "--input", tmp_path / "missing.csv", "--out", tmp_path / "o")
        assert code == EXIT_CONFIG and json.loads(err)["error"] == "input"

    def test_fit_failure(self, tmp_path, capsys):
        # one segment near the centre leaves five annuli empty
        Configuration.from_segments([Segment(Point2(0.01, 0), 0.1, 0.2)]).to_csv(tmp_path / "x.csv")
        cfg = write_config(tmp_path / "h.cfg", INHOMOG)
        code, _, err = run(capsys, "fit-mle", "--config", cfg, "--input", tmp_path / "x.csv", "--out", tmp_path / "o")
        assert code == EXIT_FIT and json.loads(err)["stage"] == "partition"

    def test_bad_jobs(self, tmp_path, capsys):
        assert run(capsys, "study", "--jobs", 0, "--out", tmp_path)[0] == EXIT_CONFIG

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["simulate"])
        assert info.value.code == 2


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "segproc.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "fit-mle" in proc.stdout
