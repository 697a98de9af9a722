"""
Integration tests for the reqneg command line.
"""
import json

import pytest

from app.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from app.core.config import DATA_DIR
from app.schemas.kaos import GoalEdge, GoalNode, KaosModel
from app.schemas.requirement import KaosLevel, QualityDimension
from app.services.emit_service import export_kaos_json, load_gsn_xml
from app.services.pipeline_service import RUN_FILES


AD_CASE_PATH = DATA_DIR / "cases" / "autonomous_driving.json"
AD_TRANSCRIPT_PATH = DATA_DIR / "transcripts" / "autonomous_driving.json"


def _model() -> KaosModel:
    return KaosModel(
        nodes=[
            GoalNode(id="S-SG1", level=KaosLevel.STRATEGIC, text="Avoid collisions.", dimension=QualityDimension.SAFETY),
            GoalNode(id="S-TG1", level=KaosLevel.TACTICAL, text="Detect sensor faults.",
                     dimension=QualityDimension.SAFETY),
        ],
        edges=[GoalEdge(parent="S-SG1", child="S-TG1", similarity=0.4)],
    )


class TestRunCommand:

    def test_run_with_hash_provider(self, tmp_path, capsys):
        code = main(["run", str(AD_CASE_PATH), "--provider", "hash-mock", "--seeds", "101", "--out", str(tmp_path)])

        assert code == EXIT_OK
        seed_dir = tmp_path / "autonomous-driving" / "seed-101"
        assert all((seed_dir / name).exists() for name in RUN_FILES)
        assert "1 seed(s) written" in capsys.readouterr().out

    def test_missing_case_file(self, tmp_path):
        code = main(["run", str(tmp_path / "missing.json"), "--provider", "hash-mock", "--out", str(tmp_path)])
        assert code == EXIT_USAGE

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc_info:
            main(["negotiate"])
        assert exc_info.value.code == 2

    def test_bad_seeds(self):
        with pytest.raises(SystemExit):
            main(["run", str(AD_CASE_PATH), "--seeds", "a,b"])


class TestReplayCommand:

    def test_replay_matches(self, tmp_path):
        code = main(["replay", str(AD_TRANSCRIPT_PATH), str(AD_CASE_PATH), "--out", str(tmp_path)])
        assert code == EXIT_OK

    def test_truncated_transcript(self, ad_transcript, tmp_path):
        truncated = ad_transcript.model_copy(update={"turns": ad_transcript.turns[:-1]})
        path = tmp_path / "truncated.json"
        path.write_text(truncated.model_dump_json(), encoding="utf-8")

        code = main(["replay", str(path), str(AD_CASE_PATH), "--out", str(tmp_path / "out")])
        assert code == EXIT_FAILURE


class TestEvalCommand:

    def test_simplex_vectors(self, tmp_path, capsys):
        vectors = [[0.0] * 5] + [[1.0 if i == j else 0.0 for j in range(5)] for i in range(5)]
        path = tmp_path / "vectors.json"
        path.write_text(json.dumps(vectors), encoding="utf-8")

        code = main(["eval", "--vectors", str(path), "--out", str(tmp_path)])

        assert code == EXIT_OK
        result = json.loads(capsys.readouterr().out)
        assert result["chv"] == pytest.approx(1 / 120)
        assert result["chv_degenerate"] is False
        assert (tmp_path / "metrics.json").exists()

    @pytest.mark.parametrize("vectors", [
        [[0.1, 0.2, 0.3, 0.4]],
        [[0.1, 0.2, 0.3, 0.4, 1.5]],
        [{"safety": 0.5}],
        {"components": [0.1, 0.2, 0.3, 0.4, 0.5]},
    ])
    def test_invalid_vectors_are_input_errors(self, vectors, tmp_path):
        path = tmp_path / "vectors.json"
        path.write_text(json.dumps(vectors), encoding="utf-8")

        code = main(["eval", "--vectors", str(path), "--out", str(tmp_path)])

        assert code == EXIT_USAGE
        assert not (tmp_path / "metrics.json").exists()

    def test_exact_preservation(self, latency_set, tmp_path, capsys):
        path = tmp_path / "set.json"
        path.write_text(latency_set.model_dump_json(), encoding="utf-8")

        code = main(["eval", str(path), str(path), "--provider", "hash-mock", "--out", str(tmp_path)])

        assert code == EXIT_OK
        result = json.loads(capsys.readouterr().out)
        assert result["preservation"]["score"] == 1.0
        assert result["axis_counts"] == [3, 2, 0, 0, 0]

    def test_similarity_matrix(self, tmp_path, capsys):
        path = tmp_path / "matrix.json"
        path.write_text(json.dumps([[0.2, 0.9], [0.8, 0.1]]), encoding="utf-8")

        assert main(["eval", "--similarity-matrix", str(path), "--out", str(tmp_path)]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["preservation"]["score"] == pytest.approx(0.85)

    def test_nothing_to_evaluate(self, tmp_path):
        assert main(["eval", "--out", str(tmp_path)]) == EXIT_USAGE


class TestExportCommand:

    def test_gsn_export(self, tmp_path):
        model_path = tmp_path / "model.kaos.json"
        model_path.write_text(export_kaos_json(_model()), encoding="utf-8")
        out = tmp_path / "model.gsn.xml"

        code = main(["export", str(model_path), "--format", "gsn", "--out", str(out)])

        assert code == EXIT_OK
        assert [n.id for n in load_gsn_xml(out.read_text()).nodes] == ["S-SG1", "S-TG1"]

    def test_report_to_stdout(self, tmp_path, capsys):
        model_path = tmp_path / "model.kaos.json"
        model_path.write_text(export_kaos_json(_model()), encoding="utf-8")

        code = main(["export", str(model_path), "--format", "report", "--case-name", "Demo", "--seed", "3"])

        assert code == EXIT_OK
        assert capsys.readouterr().out.startswith("# Requirements report: Demo (seed 3)")

    def test_invalid_model(self, tmp_path):
        document = json.loads(export_kaos_json(_model()))
        document["model"]["edges"].append({"parent": "S-TG1", "child": "S-SG1", "similarity": 0.1})
        model_path = tmp_path / "broken.json"
        model_path.write_text(json.dumps(document), encoding="utf-8")

        code = main(["export", str(model_path), "--format", "gsn", "--out", str(tmp_path / "x.xml")])
        assert code == EXIT_USAGE
