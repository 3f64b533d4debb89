"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines live.
"""

import hashlib
import json
import random
import string
import time

import numpy as np
import pytest
import torch
import torch.nn.functional as F

import conftest
from conftest import synthetic_examples
from gradcheck import max_grad_rel_error
from ctxrank import context as ctx
from ctxrank import evaluation as ev
from ctxrank import models as mdl
from ctxrank import synthetic as syn
from ctxrank.cli import run_command
from ctxrank.corpus import load_dataset
from ctxrank.encoder import (EncoderConfig, SentenceEncoder, TokenizerConfig,
                             build_encoder, count_tokens, pack_input)
from ctxrank.evaluation import read_report

torch.set_num_threads(2)


def criterion(num, description):
    def reporter(ok):
        line = f"ACCEPTANCE {num:02d} {'PASS' if ok else 'FAIL'}  {description}"
        print("\n" + line)
        conftest.ACCEPTANCE_LINES.append(line)
    return reporter


# independent scoring oracle: plain loops, string grams
def oracle_grams(text):
    tokens = [w.strip(string.punctuation) for w in text.lower().split()]
    tokens = [w for w in tokens if w]
    grams = set()
    for n in (1, 2, 3):
        for i in range(len(tokens) - n + 1):
            grams.add(" ".join(tokens[i:i + n]))
    return grams


def oracle_overlap(sentence, question, candidate):
    reference = oracle_grams(question) | oracle_grams(candidate)
    return len(oracle_grams(sentence) & reference) / len(reference)


def test_criterion_01_ngram_scorer_oracle_equivalence():
    report = criterion(1, "n-gram scorer matches brute-force enumerator, 200 triples")
    ok = False
    try:
        start = time.time()
        rng = random.Random(11)
        vocab = ["alpha", "beta", "gamma", "delta", "echo", "fox", "golf",
                 "hotel", "pi,", "(nu)", "3.14", "z!"]
        checked = 0
        while checked < 200:
            question = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 6)))
            candidate = " ".join(rng.choice(vocab) for _ in range(rng.randint(0, 6)))
            sentence = " ".join(rng.choice(vocab) for _ in range(rng.randint(0, 8)))
            if not (oracle_grams(question) | oracle_grams(candidate)):
                continue
            got = ctx.score_ngram_overlap(sentence, question, candidate)
            want = oracle_overlap(sentence, question, candidate)
            assert got == want, (question, candidate, sentence, got, want)
            checked += 1
        elapsed = time.time() - start
        assert elapsed < 5.0, f"took {elapsed:.2f}s"
        ok = True
    finally:
        report(ok)


def test_criterion_02_worked_example():
    report = criterion(2, "worked n-gram example scores 2/9")
    ok = False
    try:
        score = ctx.score_ngram_overlap(
            "hamlet was written by shakespeare",
            "who wrote hamlet", "shakespeare wrote hamlet")
        assert abs(score - 2 / 9) < 1e-12
        ok = True
    finally:
        report(ok)


def oracle_select(sentences, j, h, budget, score_fn, count_fn):
    scored = sorted(
        ((p, score_fn(sentences[p])) for p in range(len(sentences)) if p != j),
        key=lambda t: (-t[1], t[0]))
    chosen, remaining, skipped = [], budget, False
    for p, _ in scored:
        if len(chosen) == h:
            break
        cost = count_fn(sentences[p])
        if cost <= remaining:
            chosen.append(p)
            remaining -= cost
        else:
            skipped = True
    return sorted(chosen), skipped


def test_criterion_03_global_selection_oracle():
    report = criterion(3, "global selection equals score-sort-greedy oracle, "
                          "both scorers, 100 documents")
    ok = False
    try:
        rng = random.Random(23)
        vocab = ["alpha", "beta", "gamma", "delta", "echo", "foxtrot", "golf",
                 "hotel", "india", "julia", "kilo", "lima"]
        tok_cfg = TokenizerConfig(vocab_size=512)
        enc_cfg = EncoderConfig(layers=2, hidden_dim=32, heads=2, ffn_dim=64,
                                max_len=48)
        encoder = SentenceEncoder(build_encoder(enc_cfg, tok_cfg, seed=0))
        counter = lambda text: count_tokens(text, tok_cfg)

        budget_skips = 0
        for trial in range(100):
            n = rng.randint(2, 30)
            sentences = [" ".join(rng.choice(vocab)
                                  for _ in range(rng.randint(1, 10)))
                         for _ in range(n)]
            j = rng.randrange(n)
            question = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 4)))
            docs = [json.dumps({"doc_id": "d", "sentences": sentences})]
            qa = [json.dumps({"question_id": f"t{trial}", "question": question,
                              "doc_id": "d", "sentence_index": j, "label": 0})]
            corpus, (inst,) = load_dataset(docs, qa)
            h = rng.randint(1, 5)
            budget = rng.randint(4, 24)

            ngram_cfg = ctx.GlobalContextConfig(h=h, token_budget=budget,
                                                scorer="ngram")
            got = [p for p, _, _ in ctx.select_global_context(
                corpus, inst, ngram_cfg, token_counter=counter)]
            want, skipped = oracle_select(
                sentences, j, h, budget,
                lambda s: oracle_overlap(s, question, sentences[j]), counter)
            assert got == want, f"ngram trial {trial}"
            budget_skips += skipped

            cosine_cfg = ctx.GlobalContextConfig(h=h, token_budget=budget,
                                                 scorer="cosine")
            got = [p for p, _, _ in ctx.select_global_context(
                corpus, inst, cosine_cfg, encoder=encoder)]
            pair_vec = encoder.embed_pair(question, sentences[j])
            vecs = encoder.embed_batch(sentences)

            def cosine_of(s, _cache={}):
                i = sentences.index(s)
                a, b = np.asarray(pair_vec, dtype=np.float64), \
                    np.asarray(vecs[i], dtype=np.float64)
                value = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
                return max(-1.0, min(1.0, value))

            want, skipped = oracle_select(sentences, j, h, budget, cosine_of,
                                          counter)
            assert got == want, f"cosine trial {trial}"
            budget_skips += skipped
        assert budget_skips > 10, "random setup produced too few budget-skip cases"
        ok = True
    finally:
        report(ok)


def test_criterion_04_metric_oracle():
    report = criterion(4, "P@1/MAP/MRR match brute-force oracle on 1000 lists")
    ok = False
    try:
        import math

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

        rng = np.random.default_rng(404)
        label_lists = []
        for _ in range(1000):
            n = int(rng.integers(1, 12))
            label_lists.append([int(v) for v in (rng.random(n) < 0.35)])
        lists = [
            ev.RankedList(question_id=f"q{i}", candidates=tuple(
                ev.RankedCandidate("d", k, score=1.0 - k / 16, label=label)
                for k, label in enumerate(labels)))
            for i, labels in enumerate(label_lists)]
        answerable = [ls for ls in label_lists if any(ls)]
        n = len(answerable)
        assert ev.precision_at_1(lists) == math.fsum(ls[0] for ls in answerable) / n
        assert ev.mean_average_precision(lists) == \
            math.fsum(oracle_ap(ls) for ls in answerable) / n
        assert ev.mean_reciprocal_rank(lists) == \
            math.fsum(oracle_rr(ls) for ls in answerable) / n

        seven_twelfths = ev.RankedList(question_id="q", candidates=(
            ev.RankedCandidate("d", 0, 0.9, 0),
            ev.RankedCandidate("d", 1, 0.8, 1),
            ev.RankedCandidate("d", 2, 0.7, 1)))
        assert abs(ev.mean_average_precision([seven_twelfths]) - 7 / 12) < 1e-12
        rank_two = ev.RankedList(question_id="q", candidates=(
            ev.RankedCandidate("d", 0, 0.9, 0),
            ev.RankedCandidate("d", 1, 0.8, 1)))
        assert abs(ev.mean_reciprocal_rank([rank_two]) - 0.5) < 1e-12
        ok = True
    finally:
        report(ok)


def test_criterion_05_gradient_checks():
    report = criterion(5, "encoder and MWA gradients match central finite "
                          "differences, 5 seeds")
    ok = False
    try:
        start = time.time()
        tok = TokenizerConfig(vocab_size=64)
        cfg = EncoderConfig(layers=2, hidden_dim=16, heads=2, ffn_dim=32,
                            max_len=24)
        packed = [
            pack_input("what is pi", "a constant", ["near text"],
                       ["far words here"], tok, 24),
            pack_input("who did it", "nobody knows", [], [], tok, 24),
            pack_input("where is it", "right here", ["close by"], [], tok, 24),
            pack_input("when was it", "long ago", [], ["distant clue"], tok, 24),
        ]
        labels = [1, 0, 1, 0]
        for seed in range(5):
            concat = mdl.build_model(mdl.ModelVariant.CONTEXT_CONCAT, cfg, tok,
                                     seed=seed).double()
            batch = mdl.collate(packed, labels)

            def concat_loss():
                return F.cross_entropy(concat(batch), batch.labels)

            worst = max_grad_rel_error(concat, concat_loss, max_entries=8,
                                       seed=seed)
            assert worst < 1e-4, f"encoder seed {seed}: rel err {worst}"

            mwa = mdl.build_model(mdl.ModelVariant.MULTIWAY_ATTENTION, cfg, tok,
                                  seed=seed).double()

            def mwa_loss():
                return F.cross_entropy(mwa(batch), batch.labels)

            named = [(n, p) for n, p in mwa.named_parameters()
                     if n.startswith(("mwa_", "head"))]
            worst = max_grad_rel_error(mwa, mwa_loss, max_entries=8, seed=seed,
                                       named_params=named)
            assert worst < 1e-4, f"mwa seed {seed}: rel err {worst}"
        elapsed = time.time() - start
        assert elapsed < 120, f"took {elapsed:.1f}s"
        ok = True
    finally:
        report(ok)


@pytest.fixture(scope="module")
def separation_results():
    tok = TokenizerConfig(vocab_size=2048)
    enc = EncoderConfig(layers=2, hidden_dim=64, heads=4, ffn_dim=128, max_len=96)
    _, _, train_ex = synthetic_examples(120, seed=101, h=3, budget=32)
    _, _, dev_ex = synthetic_examples(100, seed=202, h=3, budget=32)
    start = time.time()
    results = {}
    for seed in (0, 1, 2):
        for variant in (mdl.ModelVariant.NO_CONTEXT,
                        mdl.ModelVariant.CONTEXT_CONCAT,
                        mdl.ModelVariant.MULTIWAY_ATTENTION):
            cfg = mdl.TrainConfig(epochs=8, batch_size=32, learning_rate=1e-3,
                                  seed=seed)
            out = mdl.train(variant, train_ex, dev_ex, enc, tok, cfg)
            results[(variant, seed)] = out.log["final_dev_p_at_1"]
    results["elapsed"] = time.time() - start
    return results


def test_criterion_06_synthetic_separation(separation_results):
    report = criterion(6, "contextual variants learn the marker task, "
                          "no-context stays at chance, seeds 0-2")
    ok = False
    try:
        for seed in (0, 1, 2):
            assert separation_results[(mdl.ModelVariant.CONTEXT_CONCAT, seed)] >= 0.9
            assert separation_results[(mdl.ModelVariant.MULTIWAY_ATTENTION, seed)] >= 0.9
            assert separation_results[(mdl.ModelVariant.NO_CONTEXT, seed)] <= 0.6
        assert separation_results["elapsed"] < 600
        ok = True
    finally:
        report(ok)


def test_criterion_07_architecture_cost_ordering():
    report = criterion(7, "latency: ensemble > 1.5x MWA, MWA within 10% of "
                          "concat; ensemble params = 2x encoder + head")
    ok = False
    try:
        tok = TokenizerConfig(vocab_size=2048)
        enc = EncoderConfig(layers=4, hidden_dim=64, heads=4, ffn_dim=128,
                            max_len=128)
        _, _, examples = synthetic_examples(64, seed=7, h=3, budget=24)
        pool = [examples[i % len(examples)] for i in range(128)]

        runs = {}
        for variant in (mdl.ModelVariant.CONTEXT_CONCAT,
                        mdl.ModelVariant.MULTIWAY_ATTENTION,
                        mdl.ModelVariant.CONTEXT_ENSEMBLE):
            model = mdl.build_model(variant, enc, tok, seed=0).eval()
            packed = [mdl.pack_example(ex, variant, tok, enc.max_len)
                      for ex in pool]
            if variant is mdl.ModelVariant.CONTEXT_ENSEMBLE:
                batch_local = mdl.collate([v[0] for v in packed])
                batch_global = mdl.collate([v[1] for v in packed])
                runs[variant] = (lambda m, bl, bg: lambda: m(bl, bg))(
                    model, batch_local, batch_global)
            else:
                batch = mdl.collate(packed)
                runs[variant] = (lambda m, b: lambda: m(b))(model, batch)

        with torch.no_grad():
            results = ev.comparative_latency_bench(runs, batch_size=128,
                                                   repeats=50, warmup=3)
        for variant, result in results.items():
            print(f"\n  {variant.value}: {result.mean_us:.0f} "
                  f"+/- {result.ci95_us:.0f} us/sample")

        concat = results[mdl.ModelVariant.CONTEXT_CONCAT].mean_us
        mwa = results[mdl.ModelVariant.MULTIWAY_ATTENTION].mean_us
        ensemble = results[mdl.ModelVariant.CONTEXT_ENSEMBLE].mean_us
        assert ensemble > 1.5 * mwa, f"ensemble {ensemble:.0f} vs mwa {mwa:.0f}"
        assert abs(mwa - concat) <= 0.10 * concat, \
            f"mwa {mwa:.0f} vs concat {concat:.0f}"

        concat_model = mdl.build_model(mdl.ModelVariant.CONTEXT_CONCAT, enc, tok, 0)
        ensemble_model = mdl.build_model(mdl.ModelVariant.CONTEXT_ENSEMBLE, enc, tok, 0)
        encoder_params = mdl.count_parameters(concat_model.encoder)
        head_params = 2 * enc.hidden_dim * 2 + 2
        assert mdl.count_parameters(ensemble_model) == \
            2 * encoder_params + head_params
        ok = True
    finally:
        report(ok)


def test_criterion_08_scorer_comparison_harness(tmp_path):
    report = criterion(8, "CLI compares n-gram vs cosine extraction end to end")
    ok = False
    try:
        data_dir = tmp_path / "data"
        docs, qa = syn.write_dataset(
            data_dir, syn.SyntheticConfig(questions=24, seed=61))
        test_docs, test_qa = syn.write_dataset(
            data_dir, syn.SyntheticConfig(questions=16, seed=62), prefix="test_")
        merged_docs = data_dir / "merged_docs.jsonl"
        merged_docs.write_text(docs.read_text() + test_docs.read_text())
        config = data_dir / "config.json"
        config.write_text(json.dumps({
            "encoder": {"layers": 2, "hidden_dim": 32, "heads": 4,
                        "ffn_dim": 64, "max_len": 96},
            "vocab_size": 1024, "epochs": 4, "batch_size": 16, "lr": 1e-3,
            "h": 3, "budget": 24,
        }))

        rows = {}
        for scorer in ("ngram", "cosine"):
            out = tmp_path / scorer
            train_base = ["--config", str(config), "--docs", str(docs),
                          "--qa", str(qa), "--out", str(out)]
            test_base = ["--config", str(config), "--docs", str(test_docs),
                         "--qa", str(test_qa), "--out", str(out / "test")]
            assert run_command(["extract", *train_base, "--scorer", scorer,
                                "--seed", "0"]) == 0
            assert run_command(["train", *train_base, "--variant", "mwa",
                                "--seed", "0"]) == 0
            assert run_command(["extract", *test_base, "--scorer", scorer,
                                "--seed", "0"]) == 0
            assert run_command(["rank", *test_base, "--checkpoint",
                                str(out / "checkpoint.bin"), "--seed", "0"]) == 0
            assert run_command(["eval", "--qa", str(test_qa),
                                "--out", str(out / "test")]) == 0
            rows[scorer] = read_report(out / "test" / "report.json")["metrics"]

        print("\n  scorer     P@1     MAP     MRR")
        for scorer, metrics in rows.items():
            print(f"  {scorer:<8} {metrics['p_at_1']:.3f}   "
                  f"{metrics['map']:.3f}   {metrics['mrr']:.3f}")
            assert set(metrics) == {"p_at_1", "map", "mrr"}
            assert all(0.0 <= v <= 1.0 for v in metrics.values())
        ok = True
    finally:
        report(ok)


def test_criterion_09_determinism(tmp_path):
    report = criterion(9, "same config and seed give byte-identical artifacts")
    ok = False
    try:
        data_dir = tmp_path / "data"
        docs, qa = syn.write_dataset(
            data_dir, syn.SyntheticConfig(questions=12, seed=71))
        config = data_dir / "config.json"
        config.write_text(json.dumps({
            "encoder": {"layers": 2, "hidden_dim": 32, "heads": 4,
                        "ffn_dim": 64, "max_len": 96},
            "vocab_size": 1024, "epochs": 2, "batch_size": 16, "lr": 1e-3,
            "h": 3, "budget": 24,
        }))
        digests = []
        for name in ("run1", "run2"):
            out = tmp_path / name
            base = ["--config", str(config), "--docs", str(docs),
                    "--qa", str(qa), "--out", str(out), "--seed", "5"]
            assert run_command(["extract", *base]) == 0
            assert run_command(["train", *base, "--variant", "mwa"]) == 0
            assert run_command(["rank", *base]) == 0
            digests.append({
                f: hashlib.sha256((out / f).read_bytes()).hexdigest()
                for f in ("contexts.jsonl", "checkpoint.bin", "rankings.jsonl")})
        assert digests[0] == digests[1]
        ok = True
    finally:
        report(ok)


def test_criterion_10_relative_improvement_arithmetic():
    report = criterion(10, "relative improvement of 0.661 over 0.596 is +10.9%")
    ok = False
    try:
        value = ev.relative_improvement(0.596, 0.661)
        assert abs(value - 10.9) <= 0.1
        ok = True
    finally:
        report(ok)
