"""Execution-consistency voting over sampled SQL completions.

Completions are normalized into runnable candidates, executed once each, and
grouped by result equivalence; the winner comes from the largest group. Errors,
timeouts, and unparseable completions are removed before voting.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import Question, SchemaView
from .executor import (
    STATUS_TIMEOUT,
    ResultTable,
    execute_sql,
    results_equivalent,
)
from .gateway import ChatExchange
from .prompts import PromptConfig, build_generation_prompt

DISCARD_SQL_ERROR = "SqlError"
DISCARD_TIMEOUT = "Timeout"
DISCARD_UNPARSEABLE = "Unparseable"

_FENCE_BLOCK_RE = re.compile(r"```[a-zA-Z]*\n(.*?)```", re.DOTALL)
_SQL_LINE_RE = re.compile(r"^\s*(select|with)\b", re.IGNORECASE)


@dataclass(frozen=True)
class SqlCandidate:
    text: str
    sample_index: int
    raw_completion: str

    @property
    def unparseable(self) -> bool:
        return not self.text


@dataclass
class ExecutionCluster:
    result: ResultTable | None
    members: list[SqlCandidate] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def min_index(self) -> int:
        return min(c.sample_index for c in self.members)


@dataclass
class VoteResult:
    winner: SqlCandidate
    clusters: list[ExecutionCluster]
    discarded: list[tuple[int, str]]
    fallback_used: bool = False


def postprocess_completion(raw: str, sample_index: int) -> SqlCandidate:
    """Normalize one completion into a runnable candidate.

    Strips code fences and leading prose, re-attaches the SELECT the prompt
    ended with, collapses newlines, and drops a trailing semicolon. The whole
    transformation is idempotent; an empty residue marks the candidate
    unparseable.
    """
    text = raw
    fenced = _FENCE_BLOCK_RE.search(text)
    if fenced:
        text = fenced.group(1)
    elif "```" in text:
        text = text.split("```", 1)[1]

    lines = text.splitlines()
    for idx, line in enumerate(lines):
        if _SQL_LINE_RE.match(line):
            lines = lines[idx:]
            break
    text = " ".join(line.strip() for line in lines if line.strip())

    text = text.strip().rstrip(";").strip()
    if not text:
        return SqlCandidate(text="", sample_index=sample_index, raw_completion=raw)
    if not _SQL_LINE_RE.match(text):
        text = f"SELECT {text}"
    return SqlCandidate(text=text, sample_index=sample_index, raw_completion=raw)


def cluster_by_execution(
    candidates: list[SqlCandidate], db_path: Path | str, timeout: float = 5.0
) -> tuple[list[ExecutionCluster], list[tuple[int, str]]]:
    """Execute each candidate once and group successes by result equivalence.

    Each candidate's own ORDER BY status decides its sequence sensitivity.
    Clusters come back ordered by descending size, then ascending smallest
    member index; failed candidates land in the discard list with a reason.
    """
    clusters: list[ExecutionCluster] = []
    discarded: list[tuple[int, str]] = []
    for candidate in candidates:
        if candidate.unparseable:
            discarded.append((candidate.sample_index, DISCARD_UNPARSEABLE))
            continue
        outcome = execute_sql(db_path, candidate.text, timeout=timeout)
        if not outcome.ok:
            reason = DISCARD_TIMEOUT if outcome.status == STATUS_TIMEOUT else DISCARD_SQL_ERROR
            discarded.append((candidate.sample_index, reason))
            continue
        for cluster in clusters:
            if cluster.result is not None and results_equivalent(cluster.result, outcome.table):
                cluster.members.append(candidate)
                break
        else:
            clusters.append(ExecutionCluster(result=outcome.table, members=[candidate]))
    clusters.sort(key=lambda c: (-c.size, c.min_index))
    return clusters, discarded


def select_final(
    clusters: list[ExecutionCluster],
    discarded: list[tuple[int, str]],
    fallback: SqlCandidate,
) -> VoteResult:
    """Pick the winner: lowest sample index inside the largest cluster, size
    ties resolved by the cluster holding the lowest index overall. With nothing
    left to vote on, the raw first candidate wins and the result is flagged."""
    if not clusters:
        return VoteResult(winner=fallback, clusters=[], discarded=discarded, fallback_used=True)
    best = min(clusters, key=lambda c: (-c.size, c.min_index))
    winner = min(best.members, key=lambda c: c.sample_index)
    return VoteResult(winner=winner, clusters=clusters, discarded=discarded)


def generate_sql(
    question: Question,
    view: SchemaView,
    gateway,
    db_path: Path | str,
    prompt_config: PromptConfig,
    *,
    n_samples: int = 20,
    temperature: float = 1.0,
    model_name: str = "gpt-3.5-turbo-0301",
    max_output_tokens: int = 512,
    exec_timeout: float = 5.0,
) -> VoteResult:
    """Sample n completions for one question and vote by execution result.

    With n_samples == 1 the single post-processed candidate is returned
    directly, skipping execution-based voting.
    """
    exchange: ChatExchange = build_generation_prompt(
        view,
        question,
        prompt_config,
        n=n_samples,
        temperature=temperature,
        model_name=model_name,
        max_output_tokens=max_output_tokens,
    )
    completion = gateway.complete(exchange)
    candidates = [
        postprocess_completion(text, index) for index, text in enumerate(completion.texts)
    ]

    if n_samples == 1:
        single = candidates[0]
        if single.unparseable:
            return VoteResult(
                winner=single,
                clusters=[],
                discarded=[(0, DISCARD_UNPARSEABLE)],
                fallback_used=True,
            )
        return VoteResult(
            winner=single,
            clusters=[ExecutionCluster(result=None, members=[single])],
            discarded=[],
        )

    clusters, discarded = cluster_by_execution(candidates, db_path, timeout=exec_timeout)
    return select_final(clusters, discarded, fallback=candidates[0])
