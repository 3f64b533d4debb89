#!/usr/bin/env python3
"""Train several architectures on the synthetic task and report metrics.

Each variant is trained on the same extracted contexts, evaluated on a
held-out split, and reported with its improvement relative to the
no-context baseline. --bench adds an interleaved latency comparison.
"""

import argparse
import json
import sys
from pathlib import Path

import torch

from ctxrank import evaluation as ev
from ctxrank import models as mdl
from ctxrank.cli import run_command
from ctxrank.evaluation import read_report
from ctxrank.synthetic import SyntheticConfig, write_dataset

DEFAULT_CONFIG = {
    "encoder": {"layers": 2, "hidden_dim": 64, "heads": 4, "ffn_dim": 128,
                "max_len": 96},
    "vocab_size": 2048,
    "epochs": 8,
    "batch_size": 32,
    "lr": 1e-3,
    "h": 3,
    "budget": 24,
}


def check(args):
    code = run_command([str(a) for a in args])
    if code != 0:
        sys.exit(code)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", required=True)
    parser.add_argument("--variants", nargs="+",
                        default=["no_context", "local", "global", "concat",
                                 "ensemble", "mwa"])
    parser.add_argument("--train-questions", type=int, default=120)
    parser.add_argument("--test-questions", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--bench", action="store_true",
                        help="also measure per-sample latency at batch 128")
    args = parser.parse_args()

    workdir = Path(args.workdir)
    data = workdir / "data"
    train_docs, train_qa = write_dataset(
        data, SyntheticConfig(questions=args.train_questions, seed=101))
    test_docs, test_qa = write_dataset(
        data, SyntheticConfig(questions=args.test_questions, seed=202),
        prefix="test_")
    config = data / "config.json"
    config.write_text(json.dumps(DEFAULT_CONFIG, indent=2))

    reports = {}
    for variant in args.variants:
        out = workdir / variant
        train_base = ["--config", config, "--docs", train_docs, "--qa", train_qa,
                      "--out", out, "--seed", args.seed]
        test_out = out / "test"
        test_base = ["--config", config, "--docs", test_docs, "--qa", test_qa,
                     "--out", test_out, "--seed", args.seed]
        check(["extract", *train_base])
        check(["train", *train_base, "--variant", variant])
        check(["extract", *test_base])
        check(["rank", *test_base, "--checkpoint", out / "checkpoint.bin"])
        eval_args = ["eval", "--qa", test_qa, "--out", test_out]
        baseline_report = workdir / "no_context" / "test" / "report.json"
        if variant != "no_context" and baseline_report.exists():
            eval_args += ["--baseline", baseline_report]
        check(eval_args)
        reports[variant] = read_report(test_out / "report.json")

    print(f"\n{'variant':<12} {'P@1':>7} {'MAP':>7} {'MRR':>7}   vs baseline P@1")
    for variant, report in reports.items():
        metrics = report["metrics"]
        delta = report.get("relative_to_baseline", {}).get("p_at_1")
        delta_text = f"{delta:+.1f}%" if delta is not None else "baseline"
        print(f"{variant:<12} {metrics['p_at_1']:>7.3f} {metrics['map']:>7.3f} "
              f"{metrics['mrr']:>7.3f}   {delta_text}")

    if args.bench:
        runs = {}
        for variant in args.variants:
            model, mv, _ = mdl.load_model(workdir / variant / "checkpoint.bin")
            model.eval()
            from ctxrank.cli import _examples_from_contexts
            from ctxrank.corpus import load_dataset
            corpus, instances = load_dataset(test_docs, test_qa)
            _, examples = _examples_from_contexts(
                corpus, instances, workdir / variant / "test" / "contexts.jsonl")
            pool = [examples[i % len(examples)] for i in range(128)]
            packed = [mdl.pack_example(ex, mv, model.tok_cfg, model.enc_cfg.max_len)
                      for ex in pool]
            if mv is mdl.ModelVariant.CONTEXT_ENSEMBLE:
                bl = mdl.collate([v[0] for v in packed])
                bg = mdl.collate([v[1] for v in packed])
                runs[variant] = (lambda m, a, b: lambda: m(a, b))(model, bl, bg)
            else:
                batch = mdl.collate(packed)
                runs[variant] = (lambda m, b: lambda: m(b))(model, batch)
        with torch.no_grad():
            results = ev.comparative_latency_bench(runs, batch_size=128,
                                                   repeats=50, warmup=3)
        print(f"\n{'variant':<12} {'latency us/sample':>18}")
        for variant, report in results.items():
            print(f"{variant:<12} {report.mean_us:>12.0f} +/- {report.ci95_us:.0f}")


if __name__ == "__main__":
    main()
