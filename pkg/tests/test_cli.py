import json

import pytest

from funduslab.cli import dispatch
from funduslab.config import TrainingConfig, parse_config
from funduslab.errors import ConfigError

FAST = [
    "--set", "pretext_epochs=2", "--set", "seg_epochs=2",
    "--set", "grading_epochs=3", "--set", "attention_epochs=2",
    "--set", "adapt_epochs=2",
]


def desk_config_file(tmp_path, **extra) -> str:
    cfg = TrainingConfig.desk(**extra).to_dict()
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


class TestParseConfig:
    def test_empty_file_gives_published_defaults(self, tmp_path):
        path = tmp_path / "empty.json"
        path.write_text("")
        config = parse_config(path)
        assert config.beta == 10.0
        assert config.lambda_p == 1e-2
        assert config.lambda_ent == 1e-3
        assert config.lambda_adv == 1e-3
        assert config.canonical_size == 512
        assert config.momentum == 0.9

    def test_negative_beta_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"beta": -1}')
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_unknown_key_named(self, tmp_path):
        path = tmp_path / "typo.json"
        path.write_text('{"lamda_p": 0.1}')
        with pytest.raises(ConfigError, match="lamda_p"):
            parse_config(path)

    def test_roundtrip(self, tmp_path):
        config = TrainingConfig.desk(seed=5)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(config.to_dict()))
        assert parse_config(path) == config


class TestDispatch:
    def test_unknown_subcommand_exit_2(self):
        assert dispatch(["frobnicate"]) == 2

    def test_no_command_exit_2(self):
        assert dispatch([]) == 2

    def test_make_synthetic(self, tmp_path, capsys):
        rc = dispatch(["make-synthetic", "--seed", "7", "--n", "8", "--size", "32",
                       "--out", str(tmp_path)])
        assert rc == 0
        roots = list(tmp_path.glob("make-synthetic-*"))
        assert len(roots) == 1
        assert (roots[0] / "source" / "manifest.csv").exists()
        assert (roots[0] / "target" / "manifest.csv").exists()

    def test_pipeline_smoke_and_byte_identity(self, tmp_path):
        """make-synthetic -> train-seg -> train-grade -> eval -> explain."""
        rc = dispatch(["make-synthetic", "--seed", "3", "--n", "10", "--size", "64",
                       "--out", str(tmp_path)])
        assert rc == 0
        data_root = next(tmp_path.glob("make-synthetic-*")) / "source"

        rc = dispatch(["train-seg", "--data", str(data_root), "--out", str(tmp_path), *FAST])
        assert rc == 0
        seg_out = next(tmp_path.glob("train-seg-*"))
        assert (seg_out / "segmentation_metrics.csv").exists()
        assert (seg_out / "segmentation_metrics.png").exists()
        first_table = (seg_out / "segmentation_metrics.csv").read_bytes()

        # identical config + seed reruns to byte-identical tables
        rc = dispatch(["train-seg", "--data", str(data_root), "--out", str(tmp_path / "again"), *FAST])
        assert rc == 0
        again = next((tmp_path / "again").glob("train-seg-*"))
        assert (again / "segmentation_metrics.csv").read_bytes() == first_table

        rc = dispatch(["train-grade", "--data", str(data_root), "--out", str(tmp_path), *FAST])
        assert rc == 0
        grade_out = next(tmp_path.glob("train-grade-*"))
        system_ckpt = grade_out / "system.ckpt"
        assert system_ckpt.exists()
        assert (grade_out / "grading_metrics.csv").exists()
        assert (grade_out / "grading_log.png").exists()

        rc = dispatch(["eval", "--system", str(system_ckpt), "--data", str(data_root),
                       "--out", str(tmp_path), *FAST])
        assert rc == 0
        eval_out = next(tmp_path.glob("eval-*"))
        table = (eval_out / "segmentation_metrics.csv").read_text()
        assert table.splitlines()[0] == "method,lesion,auc_roc,auc_pr"

        case_image = data_root / "test" / "images"
        first_png = sorted(case_image.glob("*.png"))[0]
        rc = dispatch(["explain", "--system", str(system_ckpt), "--case", str(first_png),
                       "--out", str(tmp_path), *FAST])
        assert rc == 0
        explain_out = next(tmp_path.glob("explain-*"))
        bundle_dirs = list(explain_out.iterdir())
        assert len(bundle_dirs) == 1
        meta = json.loads((bundle_dirs[0] / "bundle.json").read_text())
        assert len(meta["probs"]) == 5
        assert (bundle_dirs[0] / "cam.png").exists()
        assert (bundle_dirs[0] / "cam_union_image.png").exists()

    def test_missing_data_exit_1(self, tmp_path):
        rc = dispatch(["train-seg", "--data", str(tmp_path / "nope"), "--out", str(tmp_path), *FAST])
        assert rc == 1

    def test_bad_set_value_exit_2(self, tmp_path):
        rc = dispatch(["train-seg", "--data", str(tmp_path), "--out", str(tmp_path),
                       "--set", "beta=-3"])
        assert rc == 2
