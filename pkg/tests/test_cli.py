import json
from pathlib import Path

import pytest

from oct_triage.cli import main


def run_pipeline(root: Path, seed: int = 7, threads: int = 1, extra_infer=()) -> dict:
    """Drive gen-phantoms -> train x5 -> infer -> evaluate -> report."""
    data = root / "data"
    models = root / "models"
    models.mkdir(parents=True, exist_ok=True)
    out = {
        "data": data,
        "models": models,
        "preds": root / "preds.jsonl",
        "report": root / "report.json",
        "md": root / "report.md",
    }
    assert main(
        [
            "gen-phantoms",
            "--out", str(data),
            "--per-class", "2",
            "--bscans", "2",
            "--size", "32x32",
            "--ungradable-frac", "0.25",
            "--seed", str(seed),
        ]
    ) == 0
    for task in ("anomaly", "dry", "wet", "dme", "quality"):
        assert main(
            [
                "train",
                "--manifest", str(data / "manifest.json"),
                "--task", task,
                "--size", "32x32",
                "--epochs", "2",
                "--patience", "1",
                "--val-frac", "0.25",
                "--out", str(models / f"{_model_file(task)}"),
                "--seed", str(seed),
            ]
        ) == 0
    assert main(
        [
            "infer",
            "--manifest", str(data / "manifest.json"),
            "--models", str(models),
            "--threads", str(threads),
            "--out", str(out["preds"]),
            "--seed", str(seed),
            *extra_infer,
        ]
    ) == 0
    assert main(
        [
            "evaluate",
            "--preds", str(out["preds"]),
            "--manifest", str(data / "manifest.json"),
            "--out", str(out["report"]),
            "--seed", str(seed),
        ]
    ) == 0
    assert main(
        [
            "report",
            "--in", str(out["report"]),
            "--format", "md",
            "--out", str(out["md"]),
            "--seed", str(seed),
        ]
    ) == 0
    return out


def _model_file(cli_task: str) -> str:
    return {
        "anomaly": "anomaly.poct",
        "dry": "dry_amd.poct",
        "wet": "wet_amd.poct",
        "dme": "dme.poct",
        "quality": "quality.poct",
    }[cli_task]


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    return run_pipeline(root)


class TestSmoke:
    def test_full_pipeline_emits_table_shaped_markdown(self, pipeline_run):
        md = pipeline_run["md"].read_text()
        assert "| Dataset |" in md.splitlines()[0]
        for column in ("General Anomaly", "General AMD", "Dry AMD", "Wet AMD", "DME"):
            assert column in md
        assert "Quality Rating (%)" in md

    def test_preds_are_valid_jsonl(self, pipeline_run):
        lines = pipeline_run["preds"].read_text().strip().splitlines()
        assert len(lines) == 8  # 4 classes x 2 volumes
        for line in lines:
            obj = json.loads(line)
            assert {"volume_id", "dataset_id", "scores", "decision", "gradable_fraction"} <= set(
                obj
            )

    def test_report_json_loads(self, pipeline_run):
        report = json.loads(pipeline_run["report"].read_text())
        assert report["n_volumes"] == 8
        assert report["n_bscans"] == 16
        assert report["thresholds"]["anomaly"] == 0.5

    def test_topk_aggregation_and_quality_gating(self, pipeline_run, tmp_path):
        preds = tmp_path / "gated.jsonl"
        code = main(
            [
                "infer",
                "--manifest", str(pipeline_run["data"] / "manifest.json"),
                "--models", str(pipeline_run["models"]),
                "--agg", "topk:2",
                "--gate-quality", "on",
                "--verbose",
                "--out", str(preds),
            ]
        )
        assert code == 0
        lines = preds.read_text().strip().splitlines()
        assert len(lines) == 8
        json.loads(lines[0])


class TestDeterminism:
    def test_repeat_runs_are_byte_identical(self, tmp_path):
        a = run_pipeline(tmp_path / "a", seed=13)
        b = run_pipeline(tmp_path / "b", seed=13)
        assert a["preds"].read_bytes() == b["preds"].read_bytes()
        assert a["report"].read_bytes() == b["report"].read_bytes()
        assert a["md"].read_bytes() == b["md"].read_bytes()

    def test_thread_count_does_not_change_results(self, tmp_path):
        a = run_pipeline(tmp_path / "a", seed=21, threads=1)
        b = run_pipeline(tmp_path / "b", seed=21, threads=4)
        assert a["preds"].read_bytes() == b["preds"].read_bytes()

    def test_env_seed_fallback_matches_explicit_seed(self, tmp_path, monkeypatch):
        args = ["gen-phantoms", "--out", None, "--per-class", "1", "--bscans", "2",
                "--size", "32x32"]
        args[2] = str(tmp_path / "explicit")
        assert main(args + ["--seed", "5"]) == 0
        monkeypatch.setenv("OCT_TRIAGE_SEED", "5")
        args[2] = str(tmp_path / "env")
        assert main(args) == 0
        a = (tmp_path / "explicit" / "manifest.json").read_bytes()
        b = (tmp_path / "env" / "manifest.json").read_bytes()
        assert a == b
        img = "normal_000/bscan_000.png"
        assert (tmp_path / "explicit" / img).read_bytes() == (tmp_path / "env" / img).read_bytes()


class TestExitCodes:
    def test_missing_model_file_exits_2_and_names_path(self, tmp_path, capsys):
        data = tmp_path / "data"
        assert main(
            ["gen-phantoms", "--out", str(data), "--per-class", "1", "--bscans", "1",
             "--size", "32x32", "--seed", "1"]
        ) == 0
        code = main(
            ["infer", "--manifest", str(data / "manifest.json"),
             "--models", str(tmp_path / "missing_models"), "--out", str(tmp_path / "p.jsonl")]
        )
        assert code == 2
        assert "anomaly.poct" in capsys.readouterr().err

    def test_unknown_flag_exits_1(self, capsys):
        assert main(["gen-phantoms", "--nope", "x"]) == 1
        assert "usage error" in capsys.readouterr().err

    def test_unknown_subcommand_exits_1(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_bad_size_exits_1(self, tmp_path, capsys):
        code = main(
            ["gen-phantoms", "--out", str(tmp_path / "x"), "--per-class", "1",
             "--bscans", "1", "--size", "banana"]
        )
        assert code == 1

    def test_bad_agg_exits_1(self, tmp_path, capsys):
        code = main(
            ["infer", "--manifest", str(tmp_path / "none.json"), "--models", str(tmp_path),
             "--agg", "median", "--out", str(tmp_path / "p.jsonl")]
        )
        assert code == 1

    def test_missing_manifest_exits_2(self, tmp_path, capsys):
        code = main(
            ["evaluate", "--preds", str(tmp_path / "p.jsonl"),
             "--manifest", str(tmp_path / "none.json"), "--out", str(tmp_path / "r.json")]
        )
        assert code == 2

    def test_internal_error_exits_3(self, tmp_path, capsys, monkeypatch):
        import oct_triage.cli as cli_module

        def boom(args):
            raise RuntimeError("wired to fail")

        monkeypatch.setitem(cli_module._COMMANDS, "report", boom)
        assert main(["report", "--in", "whatever.json"]) == 3
        assert "internal error" in capsys.readouterr().err

    def test_report_to_stdout(self, pipeline_run, capsys):
        assert main(["report", "--in", str(pipeline_run["report"]), "--format", "csv"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("dataset_id,task,")
