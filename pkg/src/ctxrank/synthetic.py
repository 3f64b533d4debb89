"""Synthetic contextual ranking task.

Each question gets two candidate sentences in two documents, one labeled
positive. Question and candidate texts are random filler, so no-context
scoring cannot beat chance (0.5 for two candidates). The only label
signal is a marker word planted in the sentence right after the positive
candidate, i.e. inside its local context window.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

FILLER_WORDS = [
    "amber", "basil", "cedar", "delta", "ember", "fjord", "gleam", "harbor",
    "indigo", "juniper", "kelp", "lantern", "meadow", "nectar", "orchid",
    "pebble", "quartz", "raven", "sable", "timber", "umber", "velvet",
    "willow", "xenon", "yarrow", "zephyr", "anchor", "bramble", "cinder",
    "drift", "echo", "fable", "garnet", "hollow", "isle", "jasper",
    "kindle", "lagoon", "marrow", "nimbus", "onyx", "prairie", "quill",
    "ripple", "summit", "thicket", "uplift", "vessel", "walnut", "yonder",
]

MARKER_WORD = "beacon"


@dataclass(frozen=True)
class SyntheticConfig:
    questions: int = 120
    question_len: int = 4
    doc_sentences: int = 6
    min_sentence_len: int = 4
    max_sentence_len: int = 7
    seed: int = 0
    marker: str = MARKER_WORD


def _sentence(rng: random.Random, cfg: SyntheticConfig) -> str:
    n = rng.randint(cfg.min_sentence_len, cfg.max_sentence_len)
    return " ".join(rng.choice(FILLER_WORDS) for _ in range(n))


def generate(cfg: SyntheticConfig) -> tuple[list[dict], list[dict]]:
    """Build (document records, qa records) for one split."""
    rng = random.Random(cfg.seed)
    docs: list[dict] = []
    qa: list[dict] = []
    for qi in range(cfg.questions):
        qid = f"q{cfg.seed}_{qi:04d}"
        question = " ".join(rng.choice(FILLER_WORDS) for _ in range(cfg.question_len))
        first_is_positive = rng.random() < 0.5
        for suffix, positive in (("a", first_is_positive), ("b", not first_is_positive)):
            doc_id = f"{qid}_{suffix}"
            sentences = [_sentence(rng, cfg) for _ in range(cfg.doc_sentences)]
            cand_idx = rng.randrange(1, cfg.doc_sentences - 1)
            if positive:
                words = sentences[cand_idx + 1].split()
                words.insert(rng.randrange(len(words) + 1), cfg.marker)
                sentences[cand_idx + 1] = " ".join(words)
            docs.append({"doc_id": doc_id, "sentences": sentences})
            qa.append({
                "question_id": qid,
                "question": question,
                "doc_id": doc_id,
                "sentence_index": cand_idx,
                "label": int(positive),
            })
    return docs, qa


def write_jsonl(path: str | Path, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


def write_dataset(out_dir: str | Path, cfg: SyntheticConfig,
                  prefix: str = "") -> tuple[Path, Path]:
    """Write <prefix>docs.jsonl and <prefix>qa.jsonl; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    docs, qa = generate(cfg)
    docs_path = out_dir / f"{prefix}docs.jsonl"
    qa_path = out_dir / f"{prefix}qa.jsonl"
    write_jsonl(docs_path, docs)
    write_jsonl(qa_path, qa)
    return docs_path, qa_path
