from __future__ import annotations

import json
import re
import threading
import time

import pytest

from text2sql.cli import main
from text2sql.config import PipelineConfig, load_config
from text2sql.errors import ConfigurationError
from text2sql.gateway import CacheStore, RecordingGateway, ReplayGateway
from text2sql.minicorpus import ScriptedModel
from text2sql.pipeline import (
    make_gateway,
    run_eval_stage,
    run_generate_stage,
    run_link_stage,
)

from conftest import FIXTURES


class CountingGateway:
    def __init__(self, inner, delay=0.0):
        self.inner = inner
        self.delay = delay
        self.calls = 0
        self.active = 0
        self.max_active = 0
        self._lock = threading.Lock()

    def complete(self, exchange):
        with self._lock:
            self.calls += 1
            self.active += 1
            self.max_active = max(self.max_active, self.active)
        try:
            if self.delay:
                time.sleep(self.delay)
            return self.inner.complete(exchange)
        finally:
            with self._lock:
                self.active -= 1


@pytest.fixture
def replay_config(replay_cache):
    return PipelineConfig(backend="replay", cache_dir=replay_cache)


def test_defaults_match_published_constants():
    config = PipelineConfig()
    assert config.n_samples == 20
    assert config.recall_samples == 10
    assert config.k_tables == 4
    assert config.k_columns == 5


def test_config_precedence(tmp_path, monkeypatch):
    config_file = tmp_path / "pipeline.cfg"
    config_file.write_text("n_samples = 7\ntemperature = 0.2\n# comment\n")
    monkeypatch.setenv("TEXT2SQL_N_SAMPLES", "9")
    assert load_config(config_file).n_samples == 9
    assert load_config(config_file, overrides={"n_samples": 11}).n_samples == 11
    monkeypatch.delenv("TEXT2SQL_N_SAMPLES")
    loaded = load_config(config_file)
    assert loaded.n_samples == 7
    assert loaded.temperature == 0.2


def test_config_rejects_bad_values(tmp_path):
    with pytest.raises(ConfigurationError):
        PipelineConfig(n_samples=0)
    with pytest.raises(ConfigurationError):
        PipelineConfig(backend="telepathy")
    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown_key = 1\n")
    with pytest.raises(ConfigurationError):
        load_config(bad)


def test_no_self_consistency_forces_single_sample():
    config = PipelineConfig(use_self_consistency=False)
    assert config.effective_n_samples == 1


def test_link_stage_writes_one_artifact_per_question(
    catalog, questions, replay_config, tmp_path
):
    gateway = make_gateway(replay_config)
    summary = run_link_stage(catalog, questions, gateway, replay_config, tmp_path)
    assert summary.ok
    assert summary.processed == len(questions)
    artifacts = sorted((tmp_path / "link").glob("*.json"))
    assert len(artifacts) == len(questions)
    payload = json.loads(artifacts[0].read_text())
    assert {"question_id", "linked", "scores"} <= payload.keys()


def test_link_stage_resumes_with_zero_calls(catalog, questions, replay_config, tmp_path):
    counting = CountingGateway(make_gateway(replay_config))
    run_link_stage(catalog, questions, counting, replay_config, tmp_path)
    first_calls = counting.calls
    assert first_calls == 2 * len(questions)  # one table + one column recall each
    summary = run_link_stage(catalog, questions, counting, replay_config, tmp_path)
    assert counting.calls == first_calls
    assert summary.skipped == len(questions)


def test_replay_miss_records_failure_naming_fingerprint(
    catalog, questions, tmp_path
):
    config = PipelineConfig(backend="replay", cache_dir=tmp_path / "empty_cache")
    gateway = make_gateway(config)
    summary = run_link_stage(catalog, questions, gateway, config, tmp_path / "arts")
    assert len(summary.failures) == len(questions)
    for _, message in summary.failures:
        assert re.search(r"[0-9a-f]{64}", message)


def test_gateway_concurrency_stays_bounded(catalog, questions, replay_config, tmp_path):
    # A small delay forces the pool to actually overlap requests.
    counting = CountingGateway(make_gateway(replay_config), delay=0.01)
    run_link_stage(catalog, questions, counting, replay_config, tmp_path)
    run_generate_stage(catalog, questions, counting, replay_config, tmp_path)
    assert 2 <= counting.max_active <= replay_config.max_inflight_requests


def test_generate_matches_frozen_predictions(catalog, questions, replay_config, tmp_path):
    gateway = make_gateway(replay_config)
    run_link_stage(catalog, questions, gateway, replay_config, tmp_path)
    summary = run_generate_stage(catalog, questions, gateway, replay_config, tmp_path)
    assert summary.ok
    got = (tmp_path / "predictions.json").read_text()
    expected = (FIXTURES / "expected_predictions.json").read_text()
    assert got == expected


def test_eval_scores_missing_prediction_as_mismatch(
    catalog, questions, replay_config, tmp_path
):
    predictions = {q.question_id: q.gold_sql for q in questions}
    dropped = questions[0].question_id
    del predictions[dropped]
    report = run_eval_stage(catalog, questions, predictions, replay_config, tmp_path)
    assert report.counts["mismatch"] == 1
    assert report.counts["match"] == len(questions) - 1


def _generation_requests(cache_dir):
    store = CacheStore(cache_dir)
    requests = [store.load_request(fp) for fp in store.fingerprints()]
    return [
        r
        for r in requests
        if not r["messages"][-1]["content"].startswith("Given the database")
    ]


def _record_run(corpus_dir, tmp_path, catalog, questions, **config_kwargs):
    cache_dir = tmp_path / "cache"
    config = PipelineConfig(backend="record", cache_dir=cache_dir, **config_kwargs)
    gateway = RecordingGateway(ScriptedModel(), CacheStore(cache_dir))
    out = tmp_path / "arts"
    if config.effective_use_linking:
        assert run_link_stage(catalog, questions, gateway, config, out).ok
    assert run_generate_stage(catalog, questions, gateway, config, out).ok
    return cache_dir


def test_ablation_calibration_toggles_message_prefix(
    corpus_dir, tmp_path, catalog, questions
):
    with_cal = _record_run(corpus_dir, tmp_path / "on", catalog, questions)
    without_cal = _record_run(
        corpus_dir, tmp_path / "off", catalog, questions, use_calibration=False
    )
    for request in _generation_requests(with_cal):
        assert len(request["messages"]) == 6
        assert request["messages"][0]["role"] == "system"
    for request in _generation_requests(without_cal):
        assert len(request["messages"]) == 1
        assert request["messages"][0]["role"] == "user"


def test_ablation_foreign_keys_strip_fk_lines(corpus_dir, tmp_path, catalog, questions):
    with_fks = _record_run(corpus_dir, tmp_path / "on", catalog, questions)
    without_fks = _record_run(
        corpus_dir, tmp_path / "off", catalog, questions, include_foreign_keys=False
    )
    fk_line = re.compile(r"^# \w+\.\w+ = \w+\.\w+$", re.MULTILINE)
    assert any(
        fk_line.search(r["messages"][-1]["content"]) for r in _generation_requests(with_fks)
    )
    for request in _generation_requests(without_fks):
        assert not fk_line.search(request["messages"][-1]["content"])


def test_ablation_self_consistency_changes_n(corpus_dir, tmp_path, catalog, questions):
    with_sc = _record_run(corpus_dir, tmp_path / "on", catalog, questions)
    without_sc = _record_run(
        corpus_dir, tmp_path / "off", catalog, questions, use_self_consistency=False
    )
    assert all(r["n"] == 20 for r in _generation_requests(with_sc))
    assert all(r["n"] == 1 for r in _generation_requests(without_sc))


def test_ablation_layout_switches_prompt_shape(corpus_dir, tmp_path, catalog, questions):
    clear = _record_run(corpus_dir, tmp_path / "clear", catalog, questions)
    complicated = _record_run(
        corpus_dir,
        tmp_path / "complicated",
        catalog,
        questions,
        layout="complicated",
        use_linking=False,
    )
    for request in _generation_requests(clear):
        assert request["messages"][-1]["content"].startswith("### Complete sqlite SQL query")
    for request in _generation_requests(complicated):
        content = request["messages"][-1]["content"]
        assert content.startswith("Complete sqlite SQL query only and with no explanation.")
        assert " | " in content


def test_cli_run_replay_end_to_end(corpus_dir, replay_cache, tmp_path, capsys):
    rc = main(
        [
            "run",
            "--tables", str(corpus_dir / "tables.json"),
            "--questions", str(corpus_dir / "questions.json"),
            "--backend", "replay",
            "--cache-dir", str(replay_cache),
            "--out", str(tmp_path / "arts"),
        ]
    )
    assert rc == 0
    report = json.loads((tmp_path / "arts" / "report.json").read_text())
    assert report["overall_ex"] == 1.0
    # The whole report matches the frozen fixture from the first validated run.
    got = (tmp_path / "arts" / "report.json").read_text()
    assert got == (FIXTURES / "expected_report.json").read_text()
    out = capsys.readouterr().out
    assert "overall EX" in out


def test_cli_empty_dataset_succeeds(tmp_path, capsys):
    (tmp_path / "tables.json").write_text("[]")
    (tmp_path / "questions.json").write_text("[]")
    rc = main(
        [
            "run",
            "--tables", str(tmp_path / "tables.json"),
            "--questions", str(tmp_path / "questions.json"),
            "--backend", "replay",
            "--cache-dir", str(tmp_path / "cache"),
            "--out", str(tmp_path / "arts"),
        ]
    )
    assert rc == 0
    report = json.loads((tmp_path / "arts" / "report.json").read_text())
    assert report["total"] == 0


def test_cli_live_without_key_is_config_error(corpus_dir, tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("TEXT2SQL_API_KEY", raising=False)
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    rc = main(
        [
            "run",
            "--tables", str(corpus_dir / "tables.json"),
            "--questions", str(corpus_dir / "questions.json"),
            "--backend", "live",
            "--out", str(tmp_path / "arts"),
        ]
    )
    assert rc == 2
    assert "API key" in capsys.readouterr().err
    assert not (tmp_path / "arts").exists()


def test_cli_dump_prompt_prints_messages(corpus_dir, replay_cache, tmp_path, capsys):
    rc = main(
        [
            "dump-prompt",
            "--tables", str(corpus_dir / "tables.json"),
            "--questions", str(corpus_dir / "questions.json"),
            "--backend", "replay",
            "--cache-dir", str(replay_cache),
            "--out", str(tmp_path / "arts"),
            "--question-id", "0",
            "--no-linking",
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "--- system ---" in out
    assert out.rstrip().endswith("SELECT")


def test_cli_unknown_db_is_config_error(tmp_path, capsys):
    (tmp_path / "tables.json").write_text("[]")
    (tmp_path / "questions.json").write_text(
        json.dumps([{"question": "q", "db_id": "ghost", "query": "SELECT 1"}])
    )
    rc = main(
        [
            "link",
            "--tables", str(tmp_path / "tables.json"),
            "--questions", str(tmp_path / "questions.json"),
            "--backend", "replay",
            "--cache-dir", str(tmp_path / "cache"),
            "--out", str(tmp_path / "arts"),
        ]
    )
    assert rc == 2


def test_replay_backend_never_needs_network(replay_cache):
    gateway = make_gateway(PipelineConfig(backend="replay", cache_dir=replay_cache))
    assert isinstance(gateway, ReplayGateway)
