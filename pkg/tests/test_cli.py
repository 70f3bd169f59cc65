import numpy as np
import pytest

from fapsm.cli import main


def run(args):
    return main([str(a) for a in args])


@pytest.fixture
def workspace(tmp_path):
    """Generated gallery/probe stores plus trained model and weights."""
    paths = {
        "gallery": tmp_path / "gallery.sig",
        "probes": tmp_path / "probes.sig",
        "model": tmp_path / "model.txt",
        "weights": tmp_path / "weights.txt",
        "dir": tmp_path,
    }
    assert run([
        "generate", "--gallery-out", paths["gallery"], "--probes-out", paths["probes"],
        "--identities", 8, "--probes-per-identity", 3, "--feature-dim", 32,
        "--patches", 4, "--seed", 5,
    ]) == 0
    assert run([
        "train", "--gallery", paths["gallery"], "--probes", paths["probes"],
        "--model-out", paths["model"], "--weights-out", paths["weights"],
    ]) == 0
    return paths


class TestGenerate:
    def test_writes_matching_headers(self, tmp_path):
        g, p = tmp_path / "g.sig", tmp_path / "p.sig"
        assert run(["generate", "--gallery-out", g, "--probes-out", p,
                    "--identities", 4, "--probes-per-identity", 2,
                    "--feature-dim", 8, "--patches", 3, "--seed", 1]) == 0
        assert g.read_text().splitlines()[0] == "fapsm-sig v1 b=8 m=3"
        assert p.read_text().splitlines()[0] == "fapsm-sig v1 b=8 m=3"

    def test_single_identity_is_validation_error(self, tmp_path):
        assert run(["generate", "--gallery-out", tmp_path / "g", "--probes-out",
                    tmp_path / "p", "--identities", 1]) == 1

    def test_rerun_byte_identical(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            g, p = tmp_path / f"g{name}.sig", tmp_path / f"p{name}.sig"
            assert run(["generate", "--gallery-out", g, "--probes-out", p,
                        "--identities", 5, "--probes-per-identity", 2,
                        "--feature-dim", 16, "--patches", 4,
                        "--noise-sigma", 0.2, "--occlusion-prob", 0.2,
                        "--corruption-probs", "0,0,0.3,0.3", "--seed", 42]) == 0
            outs.append((g.read_bytes(), p.read_bytes()))
        assert outs[0] == outs[1]


class TestTrainAndMatch:
    def test_clean_match_recovers_identity(self, workspace, tmp_path):
        out = tmp_path / "matches.csv"
        assert run(["match", "--gallery", workspace["gallery"],
                    "--probes", workspace["probes"], "--model", workspace["model"],
                    "--weights", workspace["weights"], "--output", out]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 24  # 8 identities x 3 probes
        for line in lines:
            idx, final, fscore, base, bscore = line.split(",")
            assert final == base  # clean data: both paths agree
            assert float(bscore) == pytest.approx(1.0)

    def test_dimension_mismatch_exit_code(self, workspace, tmp_path):
        other_g = tmp_path / "g2.sig"
        other_p = tmp_path / "p2.sig"
        assert run(["generate", "--gallery-out", other_g, "--probes-out", other_p,
                    "--identities", 8, "--probes-per-identity", 1,
                    "--feature-dim", 32, "--patches", 5, "--seed", 0]) == 0
        assert run(["train", "--gallery", other_g, "--probes", workspace["probes"],
                    "--model-out", tmp_path / "m", "--weights-out", tmp_path / "w"]) == 1

    def test_corrupt_model_header_exit_code(self, workspace, tmp_path):
        bad = tmp_path / "bad_model.txt"
        bad.write_text("fapsm-model v99 nonsense\n")
        out = tmp_path / "out.csv"
        assert run(["match", "--gallery", workspace["gallery"],
                    "--probes", workspace["probes"], "--model", bad,
                    "--weights", workspace["weights"], "--output", out]) == 2
        assert not out.exists()  # no partial output

    def test_missing_file_exit_code(self, workspace, tmp_path):
        assert run(["match", "--gallery", tmp_path / "missing.sig",
                    "--probes", workspace["probes"], "--model", workspace["model"],
                    "--weights", workspace["weights"],
                    "--output", tmp_path / "o.csv"]) == 2

    def test_match_rerun_byte_identical(self, workspace, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / f"match_{name}.csv"
            assert run(["match", "--gallery", workspace["gallery"],
                        "--probes", workspace["probes"], "--model", workspace["model"],
                        "--weights", workspace["weights"], "--output", out]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_train_rerun_byte_identical(self, workspace, tmp_path):
        outs = []
        for name in ("a", "b"):
            model = tmp_path / f"model_{name}.txt"
            weights = tmp_path / f"weights_{name}.txt"
            assert run(["train", "--gallery", workspace["gallery"],
                        "--probes", workspace["probes"],
                        "--model-out", model, "--weights-out", weights]) == 0
            outs.append((model.read_bytes(), weights.read_bytes()))
        assert outs[0] == outs[1]


class TestEvaluateSweepStats:
    def test_evaluate_report_and_figure(self, workspace, tmp_path):
        out = tmp_path / "eval.txt"
        assert run(["evaluate", "--gallery", workspace["gallery"],
                    "--probes", workspace["probes"], "--model", workspace["model"],
                    "--weights", workspace["weights"], "--output", out]) == 0
        text = out.read_text()
        assert "baseline rank-1: 1.0" in text
        assert "fapsm rank-1: 1.0" in text
        assert (tmp_path / "eval.png").exists()

    def test_sweep_clean_data_flat(self, workspace, tmp_path):
        out = tmp_path / "sweep.csv"
        assert run(["sweep", "--gallery", workspace["gallery"],
                    "--probes", workspace["probes"], "--output", out]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "t,rank1_accuracy"
        accs = [float(line.split(",")[1]) for line in lines[1:-1]]
        assert accs == [1.0] * 5
        assert lines[-1] == "best_t,0.2"
        assert (tmp_path / "sweep.png").exists()

    def test_sweep_rerun_byte_identical(self, workspace, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / f"sweep_{name}.csv"
            assert run(["sweep", "--gallery", workspace["gallery"],
                        "--probes", workspace["probes"], "--output", out]) == 0
            fig = tmp_path / f"sweep_{name}.png"
            outs.append((out.read_bytes(), fig.read_bytes()))
        assert outs[0] == outs[1]

    def test_stats_significant_pair(self, tmp_path):
        # FAPSM outranks the baseline on 22 of 30 splits: rank gap 0.4667 > CD 0.30
        lines = ["split,fapsm,baseline"]
        for i in range(30):
            a, b = (0.9, 0.8) if i < 22 else (0.7, 0.8)
            lines.append(f"{i + 1},{a},{b}")
        csv = tmp_path / "splits.csv"
        csv.write_text("\n".join(lines) + "\n")
        out = tmp_path / "stats.txt"
        assert run(["stats", "--splits", csv, "--output", out]) == 0
        text = out.read_text()
        assert "significant: fapsm vs baseline" in text
        assert "significant_pairs=fapsm|baseline" in text
        assert (tmp_path / "stats.png").exists()

    def test_stats_identical_columns_not_significant(self, tmp_path):
        lines = ["split,A,B"] + [f"{i + 1},0.5,0.5" for i in range(10)]
        csv = tmp_path / "splits.csv"
        csv.write_text("\n".join(lines) + "\n")
        out = tmp_path / "stats.txt"
        assert run(["stats", "--splits", csv, "--output", out]) == 0
        assert "no significant pairs" in out.read_text()

    def test_stats_malformed_csv_exit_code(self, tmp_path):
        csv = tmp_path / "splits.csv"
        csv.write_text("split,A,B\n1,0.5\n")
        assert run(["stats", "--splits", csv]) == 2


class TestConfigLayering:
    def test_config_file_sets_hyperparameters(self, workspace, tmp_path):
        cfg = tmp_path / "fapsm.cfg"
        cfg.write_text("mode = linear\nlambda1 = 2.5\n# comment\nthreshold = 0.3\n")
        model = tmp_path / "model_cfg.txt"
        assert run(["--config", cfg, "train", "--gallery", workspace["gallery"],
                    "--probes", workspace["probes"], "--model-out", model,
                    "--weights-out", tmp_path / "w_cfg.txt"]) == 0
        head = model.read_text().splitlines()[0]
        assert "mode=linear" in head and "lambda1=2.5" in head and "t=0.3" in head

    def test_flag_overrides_config(self, workspace, tmp_path):
        cfg = tmp_path / "fapsm.cfg"
        cfg.write_text("threshold = 0.3\n")
        model = tmp_path / "model_flag.txt"
        assert run(["--config", cfg, "train", "--gallery", workspace["gallery"],
                    "--probes", workspace["probes"], "--model-out", model,
                    "--weights-out", tmp_path / "w_flag.txt",
                    "--threshold", 0.6]) == 0
        assert "t=0.6" in model.read_text().splitlines()[0]

    def test_env_var_names_default_config(self, workspace, tmp_path, monkeypatch):
        cfg = tmp_path / "env.cfg"
        cfg.write_text("threshold = 0.25\n")
        monkeypatch.setenv("FAPSM_CONFIG", str(cfg))
        model = tmp_path / "model_env.txt"
        assert run(["train", "--gallery", workspace["gallery"],
                    "--probes", workspace["probes"], "--model-out", model,
                    "--weights-out", tmp_path / "w_env.txt"]) == 0
        assert "t=0.25" in model.read_text().splitlines()[0]

    def test_malformed_config_line(self, workspace, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("threshold 0.3\n")
        assert run(["--config", cfg, "train", "--gallery", workspace["gallery"],
                    "--probes", workspace["probes"], "--model-out", tmp_path / "m",
                    "--weights-out", tmp_path / "w"]) == 1
