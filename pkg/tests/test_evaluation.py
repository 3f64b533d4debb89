import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ctxrank import evaluation as ev


# ---------------------------------------------------------------- oracles

def oracle_ap(labels):
    hits, total = 0, 0.0
    for rank, label in enumerate(labels, start=1):
        if label:
            hits += 1
            total += hits / rank
    return total / hits


def oracle_rr(labels):
    for rank, label in enumerate(labels, start=1):
        if label:
            return 1.0 / rank


def oracle_metrics(label_lists):
    answerable = [ls for ls in label_lists if any(ls)]
    p1 = math.fsum(ls[0] for ls in answerable) / len(answerable)
    mean_ap = math.fsum(oracle_ap(ls) for ls in answerable) / len(answerable)
    mrr = math.fsum(oracle_rr(ls) for ls in answerable) / len(answerable)
    return p1, mean_ap, mrr


def make_list(labels, qid="q"):
    n = len(labels)
    return ev.RankedList(
        question_id=qid,
        candidates=tuple(
            ev.RankedCandidate(doc_id="d", sentence_index=i,
                               score=1.0 - i / max(n, 1), label=label)
            for i, label in enumerate(labels)))


def random_label_lists(count, seed):
    rng = np.random.default_rng(seed)
    lists = []
    for _ in range(count):
        n = int(rng.integers(1, 12))
        lists.append([int(v) for v in (rng.random(n) < 0.35)])
    return lists


# ---------------------------------------------------------------- metrics

class TestPrecisionAt1:
    def test_single_hit(self):
        assert ev.precision_at_1([make_list([1, 0])]) == 1.0

    def test_hit_and_miss(self):
        lists = [make_list([1, 0], "a"), make_list([0, 1], "b")]
        assert ev.precision_at_1(lists) == 0.5

    def test_no_answerable_error(self):
        with pytest.raises(ValueError):
            ev.precision_at_1([make_list([0, 0])])


class TestMap:
    def test_top_hit(self):
        assert ev.mean_average_precision([make_list([1, 0, 0])]) == 1.0

    def test_worked_example(self):
        assert ev.mean_average_precision([make_list([0, 1, 1])]) == \
            pytest.approx(7 / 12, abs=1e-12)

    def test_all_positive(self):
        for n in (1, 3, 7):
            assert ev.mean_average_precision([make_list([1] * n)]) == 1.0


class TestMrr:
    def test_rank_two(self):
        assert ev.mean_reciprocal_rank([make_list([0, 1])]) == \
            pytest.approx(0.5, abs=1e-12)

    def test_rank_one(self):
        assert ev.mean_reciprocal_rank([make_list([1])]) == 1.0

    def test_two_questions(self):
        lists = [make_list([1, 0, 0, 0], "a"), make_list([0, 0, 0, 1], "b")]
        assert ev.mean_reciprocal_rank(lists) == pytest.approx(0.625)


class TestOracleAgreement:
    def test_thousand_random_lists_exact(self):
        label_lists = random_label_lists(1000, seed=42)
        lists = [make_list(ls, f"q{i}") for i, ls in enumerate(label_lists)]
        p1, mean_ap, mrr = oracle_metrics(label_lists)
        assert ev.precision_at_1(lists) == p1
        assert ev.mean_average_precision(lists) == mean_ap
        assert ev.mean_reciprocal_rank(lists) == mrr

    def test_per_question_rr_vs_ap(self):
        # 1/rank_first >= AP provably holds when the first hit is at rank 1
        # or there is a single positive; with a later first hit and several
        # positives AP can exceed RR ([0,1,1]: AP 7/12 > RR 1/2)
        for labels in random_label_lists(400, seed=7):
            if not any(labels):
                continue
            ap, rr = oracle_ap(labels), oracle_rr(labels)
            if labels[0] == 1 or sum(labels) == 1:
                assert rr >= ap - 1e-12
        assert oracle_ap([0, 1, 1]) > oracle_rr([0, 1, 1])

    def test_aggregate_mrr_at_least_map(self):
        label_lists = [ls for ls in random_label_lists(1000, seed=42) if any(ls)]
        _, mean_ap, mrr = oracle_metrics(label_lists)
        assert mrr >= mean_ap

    def test_question_order_invariance(self):
        label_lists = random_label_lists(50, seed=3)
        lists = [make_list(ls, f"q{i}") for i, ls in enumerate(label_lists)]
        report_fwd = ev.compute_metrics(lists)
        report_rev = ev.compute_metrics(lists[::-1])
        assert report_fwd.p_at_1 == report_rev.p_at_1
        assert report_fwd.map == report_rev.map
        assert report_fwd.mrr == report_rev.mrr

    @given(st.lists(st.sampled_from([0, 1]), min_size=1, max_size=1))
    def test_single_candidate_metrics_coincide(self, labels):
        if labels[0] == 0:
            return
        lists = [make_list(labels)]
        assert ev.precision_at_1(lists) == ev.mean_average_precision(lists) \
            == ev.mean_reciprocal_rank(lists)


class TestMetricReport:
    def test_skipped_counted(self):
        lists = [make_list([1, 0], "a"), make_list([0, 0], "b"),
                 make_list([0, 1], "c")]
        report = ev.compute_metrics(lists)
        assert report.answerable_questions == 2
        assert report.skipped_questions == 1
        assert report.p_at_1 == 0.5
        assert set(report.per_question) == {"a", "c"}

    def test_ranked_list_validation(self):
        with pytest.raises(ValueError):
            ev.RankedList(question_id="q", candidates=())
        with pytest.raises(ValueError, match="increasing"):
            ev.RankedList(question_id="q", candidates=(
                ev.RankedCandidate("d", 0, score=0.1, label=0),
                ev.RankedCandidate("d", 1, score=0.9, label=1)))


class TestRelativeImprovement:
    def test_reference_arithmetic(self):
        assert ev.relative_improvement(0.596, 0.661) == pytest.approx(10.9, abs=0.1)

    def test_no_change(self):
        assert ev.relative_improvement(0.5, 0.5) == 0.0

    def test_negative(self):
        assert ev.relative_improvement(0.5, 0.4) == pytest.approx(-20.0)

    def test_nonpositive_baseline_error(self):
        for baseline in (0.0, -0.1):
            with pytest.raises(ValueError):
                ev.relative_improvement(baseline, 0.5)


class TestLatencyBench:
    def test_report_fields_and_positivity(self):
        x = np.random.default_rng(0).random((64, 64))

        def run_batch():
            return x @ x

        report = ev.latency_bench(run_batch, batch_size=32, repeats=10, warmup=2)
        assert report.mean_us > 0
        assert report.ci95_us >= 0
        assert report.batch_size == 32
        assert report.repeats == 10

    def test_two_runs_agree_within_cis(self):
        x = np.random.default_rng(0).random((600, 600))

        def run_batch():
            return x @ x

        for _ in range(20):  # shared warmup so neither run eats cold-start drift
            run_batch()
        a = ev.latency_bench(run_batch, batch_size=16, repeats=40, warmup=5)
        b = ev.latency_bench(run_batch, batch_size=16, repeats=40, warmup=5)
        assert abs(a.mean_us - b.mean_us) <= a.ci95_us + b.ci95_us

    def test_validation(self):
        with pytest.raises(ValueError):
            ev.latency_bench(lambda: None, batch_size=0)
        with pytest.raises(ValueError):
            ev.latency_bench(lambda: None, repeats=1)

    def test_comparative_bench_interleaves_all_systems(self):
        x = np.random.default_rng(0).random((200, 200))
        counts = {"a": 0, "b": 0}

        def make(name):
            def run_batch():
                counts[name] += 1
                return x @ x
            return run_batch

        reports = ev.comparative_latency_bench(
            {"a": make("a"), "b": make("b")}, batch_size=8, repeats=6, warmup=2)
        assert counts == {"a": 8, "b": 8}
        assert set(reports) == {"a", "b"}
        for report in reports.values():
            assert report.mean_us > 0 and report.repeats == 6


class TestReportIo:
    def test_build_and_round_trip(self, tmp_path):
        lists = [make_list([1, 0], "a"), make_list([0, 1], "b")]
        metrics = ev.compute_metrics(lists)
        latency = ev.LatencyReport(mean_us=12.5, ci95_us=0.4, batch_size=128,
                                   repeats=50)
        baseline = {"metrics": {"p_at_1": 0.4, "map": 0.5, "mrr": 0.5}}
        report = ev.build_report("mwa", metrics=metrics, latency=latency,
                                 baseline=baseline, meta={"seed": 0})
        assert report["variant"] == "mwa"
        assert set(report["metrics"]) == {"p_at_1", "map", "mrr"}
        assert report["relative_to_baseline"]["p_at_1"] == \
            pytest.approx(100 * (0.5 - 0.4) / 0.4)
        assert report["latency"]["batch_size"] == 128
        path = tmp_path / "report.json"
        ev.write_report(path, report)
        assert ev.read_report(path) == report
