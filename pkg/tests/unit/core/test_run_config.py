"""
Unit tests for run configuration.
"""
import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from app.core.config import (
    AGENT_COUNT,
    DEFAULT_CLAUSE_CORPUS,
    RunConfig,
    check_weights,
    load_run_config,
    new_uniform_weights,
)
from app.core.exceptions import InvalidArgumentError


class TestWeights:
    """Test priority weight helpers."""

    def test_uniform_weights_sum_to_one(self):
        weights = new_uniform_weights(AGENT_COUNT)
        assert weights == [0.2] * 5
        assert abs(sum(weights) - 1.0) < 1e-12

    def test_uniform_weights_reject_zero_agents(self):
        with pytest.raises(InvalidArgumentError):
            new_uniform_weights(0)

    @pytest.mark.parametrize("weights", [
        [0.25, 0.25, 0.25, 0.25],
        [0.5, 0.5, 0.1, -0.1, 0.0],
        [0.3, 0.3, 0.3, 0.3, 0.3],
        [float("nan"), 0.25, 0.25, 0.25, 0.25],
    ])
    def test_check_weights_rejects_invalid(self, weights):
        with pytest.raises(InvalidArgumentError):
            check_weights(weights)

    def test_check_weights_accepts_skewed(self):
        assert check_weights([0.6, 0.1, 0.1, 0.1, 0.1]) == [0.6, 0.1, 0.1, 0.1, 0.1]


class TestRunConfig:
    """Test RunConfig validation and loading."""

    def test_defaults(self):
        config = RunConfig()
        assert config.seeds == [101, 202, 303]
        assert config.tau_overlap == 0.85
        assert config.round_cap == 3
        assert config.provider.kind == "http"
        assert config.corpus_path == DEFAULT_CLAUSE_CORPUS

    @pytest.mark.parametrize("field,value", [
        ("tau_overlap", 0.0),
        ("tau_overlap", 1.0),
        ("epsilon", 1.5),
        ("round_cap", 0),
        ("top_k", 0),
        ("seeds", []),
    ])
    def test_invalid_fields_raise_validation_error(self, field, value):
        with pytest.raises(ValidationError):
            RunConfig(**{field: value})

    def test_invalid_weights_raise_validation_error(self):
        with pytest.raises(ValidationError):
            RunConfig(weights=[0.5, 0.5, 0.5, 0.0, 0.0])

    def test_with_overrides_revalidates(self):
        config = RunConfig()
        updated = config.with_overrides(seeds=[7], provider={"kind": "hash-mock"})
        assert updated.seeds == [7]
        assert updated.provider.kind == "hash-mock"
        assert config.seeds == [101, 202, 303]
        with pytest.raises(ValidationError):
            config.with_overrides(tau_dup=2.0)

    def test_load_run_config_from_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"seeds": [1, 2], "provider": {"kind": "hash-mock"}}))
        config = load_run_config(path)
        assert config.seeds == [1, 2]
        assert config.provider.kind == "hash-mock"

    def test_relative_paths_follow_config_file(self, tmp_path, monkeypatch):
        config_dir = tmp_path / "configs"
        config_dir.mkdir()
        path = config_dir / "replay.json"
        path.write_text(json.dumps({
            "clause_corpus": "data/clauses.jsonl",
            "provider": {"kind": "transcript", "transcript_path": "../transcripts/case.json"},
        }))
        monkeypatch.chdir(tmp_path)

        config = load_run_config(path.relative_to(tmp_path))

        assert config.corpus_path.resolve() == (config_dir / "data" / "clauses.jsonl").resolve()
        transcript = tmp_path / "transcripts" / "case.json"
        assert Path(config.provider.transcript_path).resolve() == transcript.resolve()

    def test_absolute_paths_are_kept(self, tmp_path):
        corpus = tmp_path / "elsewhere" / "clauses.jsonl"
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"clause_corpus": str(corpus)}))

        config = load_run_config(path)

        assert config.corpus_path == corpus
        assert config.provider.transcript_path is None

    def test_load_run_config_defaults_without_path(self):
        assert load_run_config(None) == RunConfig()

    def test_config_is_frozen(self):
        config = RunConfig()
        with pytest.raises(ValidationError):
            config.round_cap = 5
