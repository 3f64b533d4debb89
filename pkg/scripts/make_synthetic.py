#!/usr/bin/env python3
"""Generate the synthetic marker-in-local-context dataset.

Writes <prefix>docs.jsonl and <prefix>qa.jsonl under --out. Use separate
seeds (and prefixes) for train / dev / test splits.
"""

import argparse

from ctxrank.synthetic import SyntheticConfig, write_dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--questions", type=int, default=120)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--prefix", default="")
    parser.add_argument("--doc-sentences", type=int, default=6)
    args = parser.parse_args()

    cfg = SyntheticConfig(questions=args.questions, seed=args.seed,
                          doc_sentences=args.doc_sentences)
    docs, qa = write_dataset(args.out, cfg, prefix=args.prefix)
    print(f"wrote {docs} and {qa}")


if __name__ == "__main__":
    main()
