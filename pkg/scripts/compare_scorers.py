#!/usr/bin/env python3
"""Compare the two global-context scorers end to end on the synthetic task.

For each scorer (n-gram overlap, cosine similarity) the script extracts
contexts, trains a multiway-attention model, ranks a held-out split, and
prints one metrics row per scorer.
"""

import argparse
import json
import sys
from pathlib import Path

from ctxrank.cli import run_command
from ctxrank.evaluation import read_report
from ctxrank.synthetic import SyntheticConfig, write_dataset

DEFAULT_CONFIG = {
    "encoder": {"layers": 2, "hidden_dim": 64, "heads": 4, "ffn_dim": 128,
                "max_len": 96},
    "vocab_size": 2048,
    "epochs": 6,
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
    parser.add_argument("--train-questions", type=int, default=120)
    parser.add_argument("--test-questions", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--variant", default="mwa")
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

    rows = {}
    for scorer in ("ngram", "cosine"):
        out = workdir / scorer
        train_base = ["--config", config, "--docs", train_docs, "--qa", train_qa,
                      "--out", out, "--seed", args.seed]
        test_out = out / "test"
        test_base = ["--config", config, "--docs", test_docs, "--qa", test_qa,
                     "--out", test_out, "--seed", args.seed]
        check(["extract", *train_base, "--scorer", scorer])
        check(["train", *train_base, "--variant", args.variant])
        check(["extract", *test_base, "--scorer", scorer])
        check(["rank", *test_base, "--checkpoint", out / "checkpoint.bin"])
        check(["eval", "--qa", test_qa, "--out", test_out])
        rows[scorer] = read_report(test_out / "report.json")["metrics"]

    print(f"\nglobal-context scorer comparison ({args.variant}, "
          f"{args.test_questions} test questions)")
    print(f"{'scorer':<10} {'P@1':>7} {'MAP':>7} {'MRR':>7}")
    for scorer, metrics in rows.items():
        print(f"{scorer:<10} {metrics['p_at_1']:>7.3f} {metrics['map']:>7.3f} "
              f"{metrics['mrr']:>7.3f}")


if __name__ == "__main__":
    main()
