"""Execution accuracy, recall-ranking AUC, and report rendering."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .catalog import DatabaseSchema
from .executor import execute_sql, is_order_sensitive, results_equivalent, with_order_sensitivity
from .linking import RecallScores

OUTCOME_MATCH = "match"
OUTCOME_MISMATCH = "mismatch"
OUTCOME_PRED_ERROR = "pred_error"
OUTCOME_GOLD_ERROR = "gold_error"
OUTCOMES = (OUTCOME_MATCH, OUTCOME_MISMATCH, OUTCOME_PRED_ERROR, OUTCOME_GOLD_ERROR)


@dataclass(frozen=True)
class EvalRecord:
    question_id: str
    predicted_sql: str
    gold_sql: str
    outcome: str
    difficulty: str | None = None


@dataclass(frozen=True)
class EvalReport:
    total: int
    counts: dict[str, int]
    overall_ex: float | None
    per_difficulty_ex: dict[str, float]
    table_auc: float | None = None
    column_auc: float | None = None

    @property
    def matches(self) -> int:
        return self.counts.get(OUTCOME_MATCH, 0)


def score_pair(
    predicted_sql: str, gold_sql: str, db_path: Path | str, timeout: float = 5.0
) -> str:
    """Outcome of one prediction: both queries run, order sensitivity taken
    from the gold query. A failing gold query flags a dataset/environment
    problem and still counts against accuracy."""
    gold_outcome = execute_sql(db_path, gold_sql, timeout=timeout)
    if not gold_outcome.ok:
        return OUTCOME_GOLD_ERROR
    pred_outcome = execute_sql(db_path, predicted_sql, timeout=timeout)
    if not pred_outcome.ok:
        return OUTCOME_PRED_ERROR
    ordered = is_order_sensitive(gold_sql)
    gold_table = with_order_sensitivity(gold_outcome.table, ordered)
    pred_table = with_order_sensitivity(pred_outcome.table, ordered)
    return OUTCOME_MATCH if results_equivalent(gold_table, pred_table) else OUTCOME_MISMATCH


def execution_accuracy(
    records: Iterable[tuple[str, str, str, Path | str, str | None]],
    timeout: float = 5.0,
) -> list[EvalRecord]:
    """Score (question_id, predicted, gold, db_path, difficulty) records."""
    results = []
    for question_id, predicted, gold, db_path, difficulty in records:
        outcome = score_pair(predicted, gold, db_path, timeout=timeout)
        results.append(EvalRecord(question_id, predicted, gold, outcome, difficulty))
    return results


def build_report(
    records: Sequence[EvalRecord],
    table_auc: float | None = None,
    column_auc: float | None = None,
) -> EvalReport:
    counts = {outcome: 0 for outcome in OUTCOMES}
    for record in records:
        counts[record.outcome] += 1
    total = len(records)
    overall = counts[OUTCOME_MATCH] / total if total else None

    per_difficulty: dict[str, float] = {}
    buckets: dict[str, list[EvalRecord]] = {}
    for record in records:
        if record.difficulty:
            buckets.setdefault(record.difficulty, []).append(record)
    for difficulty, bucket in sorted(buckets.items()):
        matched = sum(1 for r in bucket if r.outcome == OUTCOME_MATCH)
        per_difficulty[difficulty] = matched / len(bucket)

    return EvalReport(
        total=total,
        counts=counts,
        overall_ex=overall,
        per_difficulty_ex=per_difficulty,
        table_auc=table_auc,
        column_auc=column_auc,
    )


_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)?")


def _strip_string_literals(sql: str) -> str:
    out = []
    in_single = False
    for ch in sql:
        if in_single:
            if ch == "'":
                in_single = False
            continue
        if ch == "'":
            in_single = True
            out.append(" ")
            continue
        out.append(ch)
    return "".join(out)


def extract_gold_schema_items(
    gold_sql: str, schema: DatabaseSchema
) -> tuple[set[str], set[tuple[str, str]]]:
    """Best-effort extraction of the schema items a gold query references.

    Bare tokens match table names directly and column names within every
    referenced table; dotted ``t.c`` tokens resolve exactly, including through
    ``AS`` aliases. Only names that exist in the schema are ever returned.
    """
    text = _strip_string_literals(gold_sql)
    tokens = _IDENT_RE.findall(text)
    tables_by_lower = {t.name.lower(): t.name for t in schema.tables}

    # First pass: referenced tables and AS-alias definitions.
    mentioned_tables: set[str] = set()
    aliases: dict[str, str] = {}
    previous: str | None = None
    pending_alias_for: str | None = None
    for token in tokens:
        lowered = token.lower()
        if pending_alias_for is not None:
            aliases[lowered] = pending_alias_for
            pending_alias_for = None
            previous = token
            continue
        if lowered == "as" and previous is not None and previous.lower() in tables_by_lower:
            pending_alias_for = tables_by_lower[previous.lower()]
            continue
        if lowered in tables_by_lower:
            mentioned_tables.add(tables_by_lower[lowered])
        previous = token

    # Second pass: dotted references first so their tables also catch bare tokens.
    columns: set[tuple[str, str]] = set()
    dotted = [t.lower() for t in tokens if "." in t]
    bare = [t.lower() for t in tokens if "." not in t]
    for token in dotted:
        qualifier, _, column = token.partition(".")
        table_name = aliases.get(qualifier) or tables_by_lower.get(qualifier)
        if table_name is None:
            continue
        table = schema.find_table(table_name)
        for col in table.column_names:
            if col.lower() == column:
                columns.add((table_name, col))
                mentioned_tables.add(table_name)
    for token in bare:
        for table_name in mentioned_tables:
            table = schema.find_table(table_name)
            for col in table.column_names:
                if col.lower() == token:
                    columns.add((table_name, col))
    return mentioned_tables, columns


def pairwise_auc(scored: Sequence[tuple[float, bool]]) -> float | None:
    """Mann-Whitney AUC of a score/label sample; ties credit 0.5.

    Returns None when one of the classes is empty (undefined AUC).
    """
    positives = sum(1 for _, is_gold in scored if is_gold)
    negatives = len(scored) - positives
    if positives == 0 or negatives == 0:
        return None
    ordered = sorted(scored, key=lambda pair: pair[0])
    rank_sum = 0.0
    index = 0
    while index < len(ordered):
        tied_end = index
        while tied_end + 1 < len(ordered) and ordered[tied_end + 1][0] == ordered[index][0]:
            tied_end += 1
        average_rank = (index + tied_end) / 2 + 1  # 1-based average rank of the tie group
        for position in range(index, tied_end + 1):
            if ordered[position][1]:
                rank_sum += average_rank
        index = tied_end + 1
    u_statistic = rank_sum - positives * (positives + 1) / 2
    return u_statistic / (positives * negatives)


def recall_auc(
    per_question: Sequence[tuple[RecallScores, set[str], set[tuple[str, str]]]],
    macro: bool = False,
) -> tuple[float | None, float | None]:
    """Ranking quality of recall scores against gold schema items.

    Default pooling concatenates every question's scored items into one global
    ranking; ``macro=True`` instead averages per-question AUCs, skipping
    questions where the statistic is undefined.
    """
    table_pairs: list[tuple[float, bool]] = []
    column_pairs: list[tuple[float, bool]] = []
    table_per_question: list[float] = []
    column_per_question: list[float] = []

    for scores, gold_tables, gold_columns in per_question:
        gold_tables_lower = {name.lower() for name in gold_tables}
        gold_columns_lower = {(t.lower(), c.lower()) for t, c in gold_columns}
        q_tables = [
            (score, name.lower() in gold_tables_lower)
            for name, score in scores.table_scores.items()
        ]
        q_columns = [
            (score, (t.lower(), c.lower()) in gold_columns_lower)
            for (t, c), score in scores.column_scores.items()
        ]
        table_pairs.extend(q_tables)
        column_pairs.extend(q_columns)
        if macro:
            for pairs, sink in ((q_tables, table_per_question), (q_columns, column_per_question)):
                value = pairwise_auc(pairs)
                if value is not None:
                    sink.append(value)

    if macro:
        table_auc = sum(table_per_question) / len(table_per_question) if table_per_question else None
        column_auc = (
            sum(column_per_question) / len(column_per_question) if column_per_question else None
        )
        return table_auc, column_auc
    return pairwise_auc(table_pairs), pairwise_auc(column_pairs)


def _format_ratio(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def render_report(report: EvalReport, fmt: str = "text") -> bytes:
    """Render a report as stable-key JSON or a fixed-width text table."""
    if fmt == "json":
        payload = {
            "column_auc": report.column_auc,
            "counts": {k: report.counts.get(k, 0) for k in OUTCOMES},
            "overall_ex": report.overall_ex,
            "per_difficulty_ex": dict(sorted(report.per_difficulty_ex.items())),
            "table_auc": report.table_auc,
            "total": report.total,
        }
        return (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8")
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")

    lines = [
        "execution accuracy report",
        "=" * 40,
        f"{'questions':<24}{report.total:>16}",
        f"{'overall EX':<24}{_format_ratio(report.overall_ex):>16}",
    ]
    for difficulty, value in sorted(report.per_difficulty_ex.items()):
        lines.append(f"{'EX [' + difficulty + ']':<24}{_format_ratio(value):>16}")
    for outcome in OUTCOMES:
        lines.append(f"{outcome:<24}{report.counts.get(outcome, 0):>16}")
    lines.append(f"{'table recall AUC':<24}{_format_ratio(report.table_auc):>16}")
    lines.append(f"{'column recall AUC':<24}{_format_ratio(report.column_auc):>16}")
    return ("\n".join(lines) + "\n").encode("utf-8")
