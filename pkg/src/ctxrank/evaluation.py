"""Ranking metrics, relative-improvement reporting, and latency benchmarking.

Questions with no positive candidate cannot be scored by any ranker and
are excluded from metric means; they are counted and surfaced as skipped.
Stored candidate order is authoritative: metrics never re-sort, so tie
handling stays wherever the ranking was produced.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class RankedCandidate:
    doc_id: str
    sentence_index: int
    score: float
    label: int


@dataclass(frozen=True)
class RankedList:
    """One question's candidates in final (descending-score) order."""

    question_id: str
    candidates: tuple[RankedCandidate, ...]

    def __post_init__(self):
        if not self.candidates:
            raise ValueError(f"ranked list for {self.question_id!r} is empty")
        scores = [c.score for c in self.candidates]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError(
                f"ranked list for {self.question_id!r} has increasing scores")
        if any(c.label not in (0, 1) for c in self.candidates):
            raise ValueError(f"ranked list for {self.question_id!r} has non-binary labels")

    @property
    def answerable(self) -> bool:
        return any(c.label == 1 for c in self.candidates)


@dataclass
class MetricReport:
    p_at_1: float
    map: float
    mrr: float
    answerable_questions: int
    skipped_questions: int
    per_question: dict[str, dict[str, float]] = field(default_factory=dict)


def _split_answerable(lists: Sequence[RankedList]) -> tuple[list[RankedList], int]:
    answerable = [rl for rl in lists if rl.answerable]
    if not answerable:
        raise ValueError("no answerable questions: every list lacks a positive label")
    return answerable, len(lists) - len(answerable)


def average_precision(labels: Sequence[int]) -> float:
    """Average precision of one list given labels in rank order."""
    labels = np.asarray(labels)
    positives = int(labels.sum())
    if positives == 0:
        raise ValueError("average precision undefined without a positive label")
    cum_hits = np.cumsum(labels)
    ranks = np.arange(1, len(labels) + 1)
    return float((labels * cum_hits / ranks).sum() / positives)


def reciprocal_rank(labels: Sequence[int]) -> float:
    for rank_, label in enumerate(labels, start=1):
        if label == 1:
            return 1.0 / rank_
    raise ValueError("reciprocal rank undefined without a positive label")


def precision_at_1(lists: Sequence[RankedList]) -> float:
    answerable, _ = _split_answerable(lists)
    return math.fsum(rl.candidates[0].label for rl in answerable) / len(answerable)


def mean_average_precision(lists: Sequence[RankedList]) -> float:
    answerable, _ = _split_answerable(lists)
    values = [average_precision([c.label for c in rl.candidates]) for rl in answerable]
    return math.fsum(values) / len(values)


def mean_reciprocal_rank(lists: Sequence[RankedList]) -> float:
    answerable, _ = _split_answerable(lists)
    values = [reciprocal_rank([c.label for c in rl.candidates]) for rl in answerable]
    return math.fsum(values) / len(values)


def compute_metrics(lists: Sequence[RankedList]) -> MetricReport:
    answerable, skipped = _split_answerable(lists)
    per_question = {}
    for rl in answerable:
        labels = [c.label for c in rl.candidates]
        per_question[rl.question_id] = {
            "p_at_1": float(labels[0]),
            "ap": average_precision(labels),
            "rr": reciprocal_rank(labels),
        }
    n = len(answerable)
    return MetricReport(
        p_at_1=math.fsum(v["p_at_1"] for v in per_question.values()) / n,
        map=math.fsum(v["ap"] for v in per_question.values()) / n,
        mrr=math.fsum(v["rr"] for v in per_question.values()) / n,
        answerable_questions=n,
        skipped_questions=skipped,
        per_question=per_question,
    )


def relative_improvement(baseline: float, system: float) -> float:
    """Signed percentage change of system over baseline."""
    if baseline <= 0:
        raise ValueError(f"baseline must be positive, got {baseline}")
    return 100.0 * (system - baseline) / baseline


@dataclass
class LatencyReport:
    mean_us: float
    ci95_us: float
    batch_size: int
    repeats: int


def latency_bench(run_batch: Callable[[], object], batch_size: int = 128,
                  repeats: int = 50, warmup: int = 5) -> LatencyReport:
    """Time repeated forward passes of one pre-packed batch.

    Tokenization and packing happen before this call; only the forward
    pass is measured. Mean per-sample latency in microseconds with a 95%
    normal-approximation confidence half-width over the repeats.
    """
    if repeats < 2:
        raise ValueError("repeats must be >= 2")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    for _ in range(warmup):
        run_batch()
    samples = np.empty(repeats)
    for i in range(repeats):
        start = time.perf_counter()
        run_batch()
        samples[i] = time.perf_counter() - start
    per_sample_us = samples / batch_size * 1e6
    mean = float(per_sample_us.mean())
    half_width = float(1.96 * per_sample_us.std(ddof=1) / np.sqrt(repeats))
    return LatencyReport(mean_us=mean, ci95_us=half_width,
                         batch_size=batch_size, repeats=repeats)


def comparative_latency_bench(runs: dict[str, Callable[[], object]],
                              batch_size: int = 128, repeats: int = 50,
                              warmup: int = 5) -> dict[str, LatencyReport]:
    """Benchmark several systems with interleaved repeats.

    Round-robin scheduling makes machine-speed drift hit every system
    equally, so latency ratios stay meaningful even when absolute
    throughput wanders. Use this for architecture comparisons; use
    latency_bench for a single system's report.
    """
    if repeats < 2:
        raise ValueError("repeats must be >= 2")
    names = list(runs)
    for _ in range(warmup):
        for name in names:
            runs[name]()
    samples = {name: np.empty(repeats) for name in names}
    for i in range(repeats):
        for name in names:
            start = time.perf_counter()
            runs[name]()
            samples[name][i] = time.perf_counter() - start
    reports = {}
    for name in names:
        per_sample_us = samples[name] / batch_size * 1e6
        reports[name] = LatencyReport(
            mean_us=float(per_sample_us.mean()),
            ci95_us=float(1.96 * per_sample_us.std(ddof=1) / np.sqrt(repeats)),
            batch_size=batch_size, repeats=repeats)
    return reports


def rankings_to_lists(rankings: Sequence[dict],
                      labels: dict[tuple[str, str, int], int]) -> list[RankedList]:
    """Join rankings.jsonl records with gold labels into RankedLists."""
    lists = []
    for record in rankings:
        qid = record["question_id"]
        candidates = []
        for entry in record["ranking"]:
            key = (qid, entry["doc_id"], entry["sentence_index"])
            if key not in labels:
                raise ValueError(f"no gold label for {key}")
            candidates.append(RankedCandidate(
                doc_id=entry["doc_id"], sentence_index=entry["sentence_index"],
                score=entry["score"], label=labels[key]))
        lists.append(RankedList(question_id=qid, candidates=tuple(candidates)))
    return lists


def build_report(variant: str, metrics: MetricReport | None = None,
                 latency: LatencyReport | None = None,
                 baseline: dict | None = None,
                 meta: dict | None = None) -> dict:
    report: dict = {"variant": variant}
    report.update(meta or {})
    if metrics is not None:
        report["metrics"] = {"p_at_1": metrics.p_at_1, "map": metrics.map,
                             "mrr": metrics.mrr}
        report["skipped_questions"] = metrics.skipped_questions
        report["answerable_questions"] = metrics.answerable_questions
    if baseline is not None and metrics is not None:
        report["relative_to_baseline"] = {
            name: relative_improvement(baseline["metrics"][name],
                                       report["metrics"][name])
            for name in ("p_at_1", "map", "mrr")
        }
    if latency is not None:
        report["latency"] = asdict(latency)
    return report


def write_report(path, report: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
