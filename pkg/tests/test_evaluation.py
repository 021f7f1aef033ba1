from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from text2sql.evaluation import (
    EvalRecord,
    build_report,
    execution_accuracy,
    extract_gold_schema_items,
    pairwise_auc,
    recall_auc,
    render_report,
    score_pair,
)
from text2sql.linking import RecallScores


def test_gold_vs_gold_is_perfect(questions, catalog):
    records = [
        (q.question_id, q.gold_sql, q.gold_sql, catalog[q.db_id].sqlite_path, q.difficulty)
        for q in questions
    ]
    scored = execution_accuracy(records)
    report = build_report(scored)
    assert report.overall_ex == 1.0
    assert report.counts["match"] == len(questions)


def test_two_of_four_matches(concert_db):
    good = "SELECT count(*) FROM singer"
    bad = "SELECT count(*) FROM stadium"
    records = [
        ("0", good, good, concert_db, None),
        ("1", bad, good, concert_db, None),
        ("2", good, good, concert_db, None),
        ("3", bad, good, concert_db, None),
    ]
    report = build_report(execution_accuracy(records))
    assert report.overall_ex == 0.5


def test_qualified_and_bare_column_match(concert_db):
    assert score_pair("SELECT singer.name FROM singer", "SELECT name FROM singer", concert_db) == "match"


def test_pred_error_and_gold_error_outcomes(concert_db):
    assert score_pair("SELECT * FROM ghost", "SELECT 1", concert_db) == "pred_error"
    assert score_pair("SELECT 1", "SELECT * FROM ghost", concert_db) == "gold_error"


def test_gold_order_sensitivity_governs(concert_db):
    ordered_gold = "SELECT name FROM singer ORDER BY age"
    permuted = "SELECT name FROM singer ORDER BY age DESC"
    assert score_pair(permuted, ordered_gold, concert_db) == "mismatch"
    unordered_gold = "SELECT name FROM singer"
    assert score_pair(permuted, unordered_gold, concert_db) == "match"


def test_extract_items_count_star(concert_schema):
    tables, columns = extract_gold_schema_items("SELECT count(*) FROM singer", concert_schema)
    assert tables == {"singer"}
    assert columns == set()


def test_extract_items_alias_resolution(concert_schema):
    tables, columns = extract_gold_schema_items(
        "SELECT T1.name FROM singer AS T1", concert_schema
    )
    assert tables == {"singer"}
    assert columns == {("singer", "name")}


def test_extract_items_join_tables(car_schema):
    tables, _ = extract_gold_schema_items(
        "SELECT maker FROM car_makers JOIN model_list ON model_list.maker = car_makers.id",
        car_schema,
    )
    assert tables == {"car_makers", "model_list"}


def test_extract_items_ignores_string_literals(concert_schema):
    tables, columns = extract_gold_schema_items(
        "SELECT name FROM stadium WHERE location = 'singer age'", concert_schema
    )
    assert tables == {"stadium"}
    assert ("singer", "age") not in columns


def test_extract_items_never_leaves_schema(concert_schema):
    tables, columns = extract_gold_schema_items(
        "SELECT ghost_col FROM ghost_table JOIN singer", concert_schema
    )
    table_names = {t.name for t in concert_schema.tables}
    assert tables <= table_names
    for table, column in columns:
        assert table in table_names
        assert column in concert_schema.find_table(table).column_names


def test_auc_perfect_separation():
    assert pairwise_auc([(0.9, True), (0.8, True), (0.1, False)]) == 1.0


def test_auc_reversed_is_zero():
    assert pairwise_auc([(0.1, True), (0.9, False)]) == 0.0


def test_auc_all_tied_is_half():
    assert pairwise_auc([(0.5, True), (0.5, False), (0.5, True), (0.5, False)]) == 0.5


def test_auc_degenerate_class_is_none():
    assert pairwise_auc([(0.5, True)]) is None
    assert pairwise_auc([(0.5, False), (0.1, False)]) is None
    assert pairwise_auc([]) is None


def _auc_oracle(scored):
    positives = [s for s, g in scored if g]
    negatives = [s for s, g in scored if not g]
    if not positives or not negatives:
        return None
    wins = 0.0
    for p in positives:
        for n in negatives:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(positives) * len(negatives))


def test_auc_matches_pairwise_oracle_randomized():
    rng = random.Random(123)
    for _ in range(300):
        size = rng.randint(2, 12)
        scored = [
            (rng.choice([0.0, 0.1, 0.25, 0.5, 0.5, 0.75, 1.0]), rng.random() < 0.5)
            for _ in range(size)
        ]
        expected = _auc_oracle(scored)
        got = pairwise_auc(scored)
        if expected is None:
            assert got is None
        else:
            assert got == pytest.approx(expected, abs=1e-12)


# Scores on a coarse grid so the affine transform stays strictly monotone in
# floating point (tiny magnitudes would collapse into new ties otherwise).
@settings(max_examples=200)
@given(
    scores=st.lists(
        st.tuples(st.sampled_from([i / 64 for i in range(65)]), st.booleans()),
        min_size=2,
        max_size=20,
    )
)
def test_auc_invariant_under_monotone_transform(scores):
    base = pairwise_auc(scores)
    transformed = [(3.0 * s + 1.0, g) for s, g in scores]
    assert pairwise_auc(transformed) == base


def test_recall_auc_pools_across_questions():
    scores_a = RecallScores({"t": 1.0, "u": 0.0}, {("t", "a"): 1.0, ("t", "b"): 0.2})
    scores_b = RecallScores({"t": 0.5, "u": 0.5}, {("t", "a"): 0.6, ("t", "b"): 0.6})
    per_question = [
        (scores_a, {"t"}, {("t", "a")}),
        (scores_b, {"u"}, {("t", "b")}),
    ]
    pooled_tables = [(1.0, True), (0.0, False), (0.5, False), (0.5, True)]
    pooled_columns = [(1.0, True), (0.2, False), (0.6, False), (0.6, True)]
    table_auc, column_auc = recall_auc(per_question)
    assert table_auc == pytest.approx(_auc_oracle(pooled_tables))
    assert column_auc == pytest.approx(_auc_oracle(pooled_columns))


def test_recall_auc_macro_average():
    scores_a = RecallScores({"t": 1.0, "u": 0.0}, {})
    scores_b = RecallScores({"t": 0.0, "u": 1.0}, {})
    per_question = [
        (scores_a, {"t"}, set()),   # AUC 1.0
        (scores_b, {"t"}, set()),   # AUC 0.0
    ]
    table_auc, column_auc = recall_auc(per_question, macro=True)
    assert table_auc == pytest.approx(0.5)
    assert column_auc is None


def test_render_empty_report_shows_na():
    report = build_report([])
    text = render_report(report, "text").decode()
    assert "n/a" in text
    assert "questions" in text
    json_bytes = render_report(report, "json")
    assert b'"overall_ex": null' in json_bytes


def test_render_deterministic():
    records = [EvalRecord("0", "a", "b", "match", "easy")]
    report = build_report(records, table_auc=0.9, column_auc=0.8)
    assert render_report(report, "json") == render_report(report, "json")
    assert render_report(report, "text") == render_report(report, "text")


def test_report_difficulty_breakdown():
    records = [
        EvalRecord("0", "", "", "match", "easy"),
        EvalRecord("1", "", "", "mismatch", "easy"),
        EvalRecord("2", "", "", "match", "hard"),
    ]
    report = build_report(records)
    assert report.per_difficulty_ex == {"easy": 0.5, "hard": 1.0}
    assert report.overall_ex == pytest.approx(2 / 3)
