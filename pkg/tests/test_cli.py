import json
import sys

import numpy as np
import pytest
from click.testing import CliRunner

from copydesc.cli import main
from copydesc.descriptors import DescriptorSet, Role
from copydesc.io import read_descriptors, write_descriptors, write_truth
from copydesc.metrics import GroundTruth

pipeline_mod = sys.modules["copydesc.pipeline"]


@pytest.fixture
def runner():
    return CliRunner()


def _unit(rows):
    arr = np.asarray(rows, dtype=np.float64)
    arr /= np.linalg.norm(arr, axis=1, keepdims=True)
    return arr.astype(np.float32)


def _write_set(path, role, ids, vectors):
    write_descriptors(DescriptorSet(role, tuple(ids), vectors), path)
    return str(path)


@pytest.fixture
def stage_files(tmp_path):
    """Query/reference/training descriptor files plus a matching truth CSV."""
    base = np.eye(3, 8)
    q = _unit(base + 0.01)
    r = _unit(base + 0.011)  # near-duplicates of the queries
    extra = _unit(np.ones((2, 8)) + np.arange(8))
    t = _unit(np.vstack([base + 0.02, extra]))  # 5 rows for n_top=5
    paths = {
        "queries": _write_set(tmp_path / "q.iscd", Role.QUERY, ["q1", "q2", "q3"], q),
        "references": _write_set(
            tmp_path / "r.iscd", Role.REFERENCE, ["r1", "r2", "r3"], r
        ),
        "training": _write_set(
            tmp_path / "t.iscd", Role.TRAINING, [f"t{i}" for i in range(5)], t
        ),
    }
    truth = tmp_path / "truth.csv"
    write_truth(GroundTruth.from_pairs([("q1", "r1"), ("q2", "r2"), ("q3", "r3")]), truth)
    paths["truth"] = str(truth)
    return tmp_path, paths


class TestTopLevel:
    def test_bare_invocation_is_usage_error(self, runner):
        assert runner.invoke(main, []).exit_code == 2

    def test_unknown_subcommand(self, runner):
        assert runner.invoke(main, ["frobnicate"]).exit_code == 2

    def test_negative_threads_rejected(self, runner):
        assert runner.invoke(main, ["--threads", "-1", "selfcheck"]).exit_code == 2

    def test_version_flag(self, runner):
        res = runner.invoke(main, ["--version"])
        assert res.exit_code == 0
        assert "version" in res.output


class TestFuseCommand:
    def test_fuses_two_scales(self, runner, tmp_path):
        a = _write_set(tmp_path / "a.iscd", Role.QUERY, ["x", "y"],
                       _unit([[1.0, 0.0], [0.0, 1.0]]))
        b = _write_set(tmp_path / "b.iscd", Role.QUERY, ["x", "y"],
                       _unit([[1.0, 0.2], [0.2, 1.0]]))
        out = tmp_path / "fused.iscd"
        res = runner.invoke(main, ["fuse", "--inputs", a, "--inputs", b, "--out", str(out)])
        assert res.exit_code == 0, res.output
        fused = read_descriptors(out)
        assert fused.ids == ("x", "y")
        norms = np.linalg.norm(fused.vectors.astype(np.float64), axis=1)
        assert np.allclose(norms, 1.0, atol=1e-6)
        assert "stage=fuse" in res.stderr

    def test_missing_input_is_usage_error(self, runner, tmp_path):
        res = runner.invoke(
            main, ["fuse", "--inputs", str(tmp_path / "no.iscd"), "--out", "o.iscd"]
        )
        assert res.exit_code == 2

    def test_corrupt_input_is_data_error(self, runner, tmp_path):
        bad = tmp_path / "bad.iscd"
        bad.write_bytes(b"JUNKJUNKJUNKJUNKJUNKJUNK")
        res = runner.invoke(main, ["fuse", "--inputs", str(bad), "--out", str(tmp_path / "o.iscd")])
        assert res.exit_code == 3
        assert "kind=format" in res.stderr

    def test_cancelling_scales_is_numeric_error(self, runner, tmp_path):
        a = _write_set(tmp_path / "a.iscd", Role.QUERY, ["x"], _unit([[1.0, 0.0]]))
        b = _write_set(tmp_path / "b.iscd", Role.QUERY, ["x"], _unit([[-1.0, 0.0]]))
        res = runner.invoke(main, ["fuse", "--inputs", a, "--inputs", b,
                                   "--out", str(tmp_path / "o.iscd")])
        assert res.exit_code == 4
        assert "kind=validation" in res.stderr


class TestStretchCommand:
    def test_writes_stretched_set_and_report(self, runner, stage_files):
        tmp_path, paths = stage_files
        out = tmp_path / "stretched.iscd"
        report = tmp_path / "stretch.json"
        res = runner.invoke(main, [
            "stretch", "--queries", paths["queries"], "--training", paths["training"],
            "--out", str(out), "--alpha", "2.5", "--n-top", "5",
            "--report", str(report),
        ])
        assert res.exit_code == 0, res.output
        stretched = read_descriptors(out)
        assert stretched.role == Role.QUERY
        payload = json.loads(report.read_text())
        assert payload["alpha"] == 2.5
        assert len(payload["per_query"]) == 3
        assert all(row["s_n"] > 0 for row in payload["per_query"])

    def test_role_mismatch_is_numeric_error(self, runner, stage_files):
        tmp_path, paths = stage_files
        res = runner.invoke(main, [
            "stretch", "--queries", paths["queries"], "--training", paths["references"],
            "--out", str(tmp_path / "o.iscd"),
        ])
        assert res.exit_code == 4

    def test_small_training_is_numeric_error(self, runner, stage_files):
        tmp_path, paths = stage_files
        res = runner.invoke(main, [
            "stretch", "--queries", paths["queries"], "--training", paths["training"],
            "--out", str(tmp_path / "o.iscd"), "--n-top", "50",
        ])
        assert res.exit_code == 4


class TestSearchCommand:
    def test_writes_candidates(self, runner, stage_files):
        tmp_path, paths = stage_files
        out = tmp_path / "pairs.csv"
        res = runner.invoke(main, [
            "search", "--queries", paths["queries"], "--references", paths["references"],
            "--k", "2", "--out", str(out),
        ])
        assert res.exit_code == 0, res.output
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "query_id,reference_id,score"
        assert len(lines) == 1 + 3 * 2

    def test_dim_mismatch_is_numeric_error(self, runner, stage_files, tmp_path):
        _, paths = stage_files
        other = _write_set(tmp_path / "sm.iscd", Role.REFERENCE, ["z"], _unit([[1.0, 1.0]]))
        res = runner.invoke(main, [
            "search", "--queries", paths["queries"], "--references", other,
            "--out", str(tmp_path / "o.csv"),
        ])
        assert res.exit_code == 4


class TestEvalCommand:
    def _pairs_file(self, tmp_path):
        path = tmp_path / "pairs.csv"
        path.write_text(
            "query_id,reference_id,score\n"
            "q1,r1,0.1\nq1,r9,0.5\nq2,r2,0.3\n"
        )
        return str(path)

    def _truth_file(self, tmp_path):
        path = tmp_path / "truth.csv"
        write_truth(GroundTruth.from_pairs([("q1", "r1"), ("q2", "r2")]), path)
        return str(path)

    def test_prints_metrics_and_writes_json(self, runner, tmp_path):
        out = tmp_path / "report.json"
        res = runner.invoke(main, [
            "eval", "--pairs", self._pairs_file(tmp_path),
            "--truth", self._truth_file(tmp_path),
            "--ranks", "1,2", "--out", str(out),
        ])
        assert res.exit_code == 0, res.output
        lines = dict(line.split(" ", 1) for line in res.output.strip().splitlines())
        assert float(lines["micro_ap"]) == 1.0
        assert float(lines["recall_at_rank_1"]) == 1.0
        payload = json.loads(out.read_text())
        assert payload["micro_ap"] == 1.0
        assert payload["recall_at_rank"]["2"] == 1.0

    def test_bad_ranks_is_usage_error(self, runner, tmp_path):
        res = runner.invoke(main, [
            "eval", "--pairs", self._pairs_file(tmp_path),
            "--truth", self._truth_file(tmp_path), "--ranks", "1,x",
        ])
        assert res.exit_code == 2

    def test_malformed_pairs_is_data_error(self, runner, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("not,a,real,header\n1,2,3,4\n")
        res = runner.invoke(main, [
            "eval", "--pairs", str(bad), "--truth", self._truth_file(tmp_path),
        ])
        assert res.exit_code == 3


class TestScheduleCommand:
    def test_default_table_on_stdout(self, runner):
        res = runner.invoke(main, ["schedule"])
        assert res.exit_code == 0
        lines = res.output.strip().splitlines()
        assert lines[0] == "iteration,epoch,ratio,lr"
        assert len(lines) == 26
        first = lines[1].split(",")
        assert first[:3] == ["0", "0", "0.01"]
        assert float(first[3]) == pytest.approx(0.01 * 3.5e-4)

    def test_ratio_column_matches_library(self, runner):
        from copydesc.trainmath import ScheduleConfig, lr_ratio

        res = runner.invoke(main, ["schedule", "--iters-per-epoch", "4"])
        cfg = ScheduleConfig()
        rows = res.output.strip().splitlines()[1:]
        assert len(rows) == 100
        for row in rows:
            it, epoch, ratio, _ = row.split(",")
            assert float(ratio) == pytest.approx(lr_ratio(float(epoch), cfg), abs=1e-8)

    def test_out_file(self, runner, tmp_path):
        out = tmp_path / "sched.csv"
        res = runner.invoke(main, ["schedule", "--out", str(out)])
        assert res.exit_code == 0
        assert out.read_text().startswith("iteration,epoch,ratio,lr\n")

    def test_invalid_config_is_numeric_error(self, runner):
        res = runner.invoke(main, ["schedule", "--warmup", "0"])
        assert res.exit_code == 4


class TestAugmentCommand:
    def test_generates_corpus_tree(self, runner, source_dir, tmp_path):
        out = tmp_path / "corpus"
        res = runner.invoke(main, [
            "augment", "--src", str(source_dir), "--out", str(out),
            "--copies", "2", "--size", "48", "--seed", "5",
        ])
        assert res.exit_code == 0, res.output
        assert (out / "manifest.json").is_file()
        assert (out / "truth.csv").is_file()
        assert len(list((out / "copies").glob("*.png"))) == 10
        assert (out / "labels").is_dir()
        assert "stage=augment" in res.stderr

    def test_config_override(self, runner, source_dir, tmp_path):
        toml = tmp_path / "aug.toml"
        toml.write_text("[augment]\nmin_transforms = 2\nmax_transforms = 2\n")
        out = tmp_path / "corpus"
        res = runner.invoke(main, [
            "augment", "--src", str(source_dir), "--out", str(out),
            "--copies", "1", "--size", "32", "--config", str(toml),
        ])
        assert res.exit_code == 0, res.output
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["min_transforms"] == 2
        for record in manifest["records"]:
            # resize may merge with a drawn one: 2 or 3 entries.
            assert 2 <= len(record["transforms"]) <= 3

    def test_bad_config_is_data_error(self, runner, source_dir, tmp_path):
        toml = tmp_path / "aug.toml"
        toml.write_text("[augment]\nbogus_key = 1\n")
        res = runner.invoke(main, [
            "augment", "--src", str(source_dir), "--out", str(tmp_path / "o"),
            "--config", str(toml),
        ])
        assert res.exit_code == 3

    def test_empty_source_dir_is_numeric_error(self, runner, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        res = runner.invoke(main, [
            "augment", "--src", str(empty), "--out", str(tmp_path / "o"),
        ])
        assert res.exit_code == 4


class TestPipelineCommand:
    def test_end_to_end_with_stretch(self, runner, stage_files):
        tmp_path, paths = stage_files
        out = tmp_path / "run"
        res = runner.invoke(main, [
            "pipeline", "--queries", paths["queries"], "--references", paths["references"],
            "--training", paths["training"], "--truth", paths["truth"],
            "--out-dir", str(out), "--k", "2",
        ])
        assert res.exit_code == 0, res.output
        for name in ("fused_queries.iscd", "fused_references.iscd",
                     "stretched_queries.iscd", "pairs.csv", "report.json"):
            assert (out / name).is_file(), name
        assert not list(out.glob("*.partial"))
        lines = dict(line.split(" ", 1) for line in res.output.strip().splitlines())
        assert float(lines["micro_ap"]) == 1.0
        report = json.loads((out / "report.json").read_text())
        assert report["counts"] == {"queries": 3, "references": 3, "truth_pairs": 3}
        assert report["stretch"] is not None

    def test_stretch_off_skips_artifact(self, runner, stage_files):
        tmp_path, paths = stage_files
        out = tmp_path / "run"
        res = runner.invoke(main, [
            "pipeline", "--queries", paths["queries"], "--references", paths["references"],
            "--truth", paths["truth"], "--out-dir", str(out), "--stretch", "off",
        ])
        assert res.exit_code == 0, res.output
        assert not (out / "stretched_queries.iscd").exists()
        report = json.loads((out / "report.json").read_text())
        assert report["stretch"] is None

    def test_report_bytes_deterministic(self, runner, stage_files):
        tmp_path, paths = stage_files
        blobs = []
        for name in ("run_a", "run_b"):
            out = tmp_path / name
            res = runner.invoke(main, [
                "pipeline", "--queries", paths["queries"],
                "--references", paths["references"], "--training", paths["training"],
                "--truth", paths["truth"], "--out-dir", str(out),
            ])
            assert res.exit_code == 0
            payload = (out / "report.json").read_bytes()
            blobs.append(payload.replace(name.encode(), b"OUT"))
        assert blobs[0] == blobs[1]

    def test_failure_leaves_partial_artifacts(self, runner, stage_files):
        tmp_path, paths = stage_files
        bad_truth = tmp_path / "bad_truth.csv"
        bad_truth.write_text("zzz\n")
        out = tmp_path / "run"
        res = runner.invoke(main, [
            "pipeline", "--queries", paths["queries"], "--references", paths["references"],
            "--training", paths["training"], "--truth", str(bad_truth),
            "--out-dir", str(out),
        ])
        assert res.exit_code == 3
        partials = sorted(p.name for p in out.glob("*.partial"))
        assert "pairs.csv.partial" in partials
        assert not (out / "pairs.csv").exists()
        assert not (out / "report.json").exists()

    def test_toml_config_with_cli_override(self, runner, stage_files):
        tmp_path, paths = stage_files
        cfg = tmp_path / "pipe.toml"
        cfg.write_text(
            "[pipeline]\n"
            f"queries = [\"{paths['queries']}\"]\n"
            f"references = [\"{paths['references']}\"]\n"
            f"training = [\"{paths['training']}\"]\n"
            f"truth = \"{paths['truth']}\"\n"
            f"out_dir = \"{tmp_path / 'from_toml'}\"\n"
            "alpha = 9.0\n"
        )
        res = runner.invoke(main, ["pipeline", "--config", str(cfg), "--alpha", "2.0"])
        assert res.exit_code == 0, res.output
        report = json.loads((tmp_path / "from_toml" / "report.json").read_text())
        assert report["config"]["alpha"] == 2.0

    def test_missing_inputs_is_numeric_error(self, runner, tmp_path):
        res = runner.invoke(main, ["pipeline", "--out-dir", str(tmp_path / "o")])
        assert res.exit_code == 4

    def test_bad_ranks_is_usage_error(self, runner, stage_files):
        tmp_path, paths = stage_files
        res = runner.invoke(main, [
            "pipeline", "--queries", paths["queries"], "--references", paths["references"],
            "--truth", paths["truth"], "--ranks", "a,b",
        ])
        assert res.exit_code == 2


class TestSelfcheckCommand:
    def test_all_checks_pass(self, runner):
        res = runner.invoke(main, ["selfcheck"])
        assert res.exit_code == 0
        lines = res.output.strip().splitlines()
        assert lines[-1] == "13/13 checks passed"
        assert all(line.startswith("PASS") for line in lines[:-1])

    def test_injected_fault_is_detected(self, runner, monkeypatch):
        monkeypatch.setitem(pipeline_mod.SELFCHECK_EXPECTED, "gem_p2", 2.161)
        res = runner.invoke(main, ["selfcheck"])
        assert res.exit_code == 1
        assert "FAIL gem_p2" in res.output
        assert "12/13 checks passed" in res.output

    def test_thread_option_accepted(self, runner):
        res = runner.invoke(main, ["--threads", "2", "selfcheck"])
        assert res.exit_code == 0
