"""Context extraction for answer candidates.

Local context is the window of sentences adjacent to a candidate. Global
context is a budgeted top-h selection over the rest of the candidate's
document, scored either by n-gram overlap with the question+candidate or
by cosine similarity between sentence embeddings.
"""

from __future__ import annotations

import json
import logging
import string
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .corpus import Corpus, Document, QaInstance

logger = logging.getLogger(__name__)

NGRAM_SCORER = "ngram"
COSINE_SCORER = "cosine"
SCORERS = (NGRAM_SCORER, COSINE_SCORER)


@dataclass(frozen=True)
class LocalContextConfig:
    """Window radius for adjacent-sentence context."""

    k: int = 1

    def __post_init__(self):
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")


@dataclass(frozen=True)
class GlobalContextConfig:
    """Selection limits for document-wide context."""

    h: int = 5
    token_budget: int = 128
    scorer: str = NGRAM_SCORER

    def __post_init__(self):
        if self.h < 1:
            raise ValueError(f"h must be >= 1, got {self.h}")
        if self.token_budget < 1:
            raise ValueError(f"token_budget must be >= 1, got {self.token_budget}")
        if self.scorer not in SCORERS:
            raise ValueError(f"scorer must be one of {SCORERS}, got {self.scorer!r}")


def ngram_tokens(text: str) -> list[str]:
    """Lowercase, whitespace-split, strip surrounding punctuation, drop empties."""
    out = []
    for tok in text.lower().split():
        tok = tok.strip(string.punctuation)
        if tok:
            out.append(tok)
    return out


def ngram_profile(text: str) -> frozenset[tuple[str, ...]]:
    """All contiguous unigrams, bigrams and trigrams of the token sequence."""
    tokens = ngram_tokens(text)
    grams = set()
    for n in (1, 2, 3):
        for i in range(len(tokens) - n + 1):
            grams.add(tuple(tokens[i:i + n]))
    return frozenset(grams)


def pair_profile(question: str, candidate: str) -> frozenset[tuple[str, ...]]:
    """Union of the question's and candidate's n-gram sets.

    No n-grams span the question/candidate boundary; boundary grams would
    be artifacts of the concatenation.
    """
    return ngram_profile(question) | ngram_profile(candidate)


def score_ngram_overlap(context_sentence: str, question: str, candidate: str) -> float:
    """Fraction of the question+candidate gram set found in the context sentence."""
    reference = pair_profile(question, candidate)
    if not reference:
        raise ValueError("question and candidate produce no n-grams; score undefined")
    hits = len(ngram_profile(context_sentence) & reference)
    return hits / len(reference)


def score_semantic_similarity(pair_vec: np.ndarray, ctx_vec: np.ndarray) -> float:
    """Cosine similarity between a question+candidate embedding and a context embedding."""
    pair_vec = np.asarray(pair_vec, dtype=np.float64)
    ctx_vec = np.asarray(ctx_vec, dtype=np.float64)
    if pair_vec.shape != ctx_vec.shape:
        raise ValueError(f"dimension mismatch: {pair_vec.shape} vs {ctx_vec.shape}")
    na = float(np.linalg.norm(pair_vec))
    nb = float(np.linalg.norm(ctx_vec))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm vector")
    value = float(np.dot(pair_vec, ctx_vec) / (na * nb))
    return max(-1.0, min(1.0, value))


def local_context(doc: Document, j: int, cfg: LocalContextConfig) -> list[tuple[int, str]]:
    """Sentences within k positions of sentence j, in document order, j excluded."""
    if not 0 <= j < doc.sentence_count:
        raise IndexError(f"sentence index {j} out of range for doc {doc.doc_id!r}")
    lo = max(0, j - cfg.k)
    hi = min(doc.sentence_count, j + cfg.k + 1)
    return [(p, doc.sentences[p]) for p in range(lo, hi) if p != j]


def _default_token_counter() -> Callable[[str], int]:
    from .encoder import TokenizerConfig, count_tokens
    cfg = TokenizerConfig()
    return lambda text: count_tokens(text, cfg)


def select_global_context(
    corpus: Corpus,
    instance: QaInstance,
    cfg: GlobalContextConfig,
    encoder=None,
    token_counter: Callable[[str], int] | None = None,
) -> list[tuple[int, str, float]]:
    """Pick up to h document sentences as global context, within the token budget.

    Every sentence other than the candidate is scored, then selected
    greedily by descending score (ties: lower index). A sentence whose
    token count exceeds the remaining budget is skipped and selection
    continues. The result is re-ordered into document order, scores attached.

    The token budget counts encoder-tokenizer tokens; with no encoder (the
    n-gram scorer), the default tokenizer configuration is used.
    """
    doc = corpus[instance.doc_id]
    j = instance.sentence_index
    question = instance.question_text
    candidate = doc.sentences[j]

    if cfg.scorer == COSINE_SCORER and encoder is None:
        raise ValueError("cosine scorer requires a sentence encoder")
    if token_counter is None:
        if encoder is not None:
            token_counter = encoder.count_tokens
        else:
            token_counter = _default_token_counter()

    others = [p for p in range(doc.sentence_count) if p != j]
    if not others:
        return []

    if cfg.scorer == NGRAM_SCORER:
        reference = pair_profile(question, candidate)
        if not reference:
            raise ValueError(
                f"question {instance.question_id!r} and candidate produce no n-grams")
        if len(reference) < 3:
            logger.warning(
                "question %r: question+candidate gram set has only %d grams; "
                "overlap scores will be coarse", instance.question_id, len(reference))
        scores = [len(ngram_profile(doc.sentences[p]) & reference) / len(reference)
                  for p in others]
    else:
        pair_vec = encoder.embed_pair(question, candidate)
        ctx_vecs = encoder.embed_batch([doc.sentences[p] for p in others])
        scores = [score_semantic_similarity(pair_vec, v) for v in ctx_vecs]

    order = sorted(range(len(others)), key=lambda i: (-scores[i], others[i]))
    remaining = cfg.token_budget
    chosen: list[tuple[int, float]] = []
    for i in order:
        if len(chosen) >= cfg.h:
            break
        cost = token_counter(doc.sentences[others[i]])
        if cost > remaining:
            continue
        chosen.append((others[i], scores[i]))
        remaining -= cost

    selected = sorted(chosen)  # back to document order
    total = sum(token_counter(doc.sentences[p]) for p, _ in selected)
    assert total <= cfg.token_budget, "token budget exceeded"
    return [(p, doc.sentences[p], s) for p, s in selected]


def context_stats(corpus: Corpus, instances: Sequence[QaInstance],
                  cfg: GlobalContextConfig, encoder=None) -> float:
    """Mean number of global-context sentences selected per instance."""
    if not instances:
        raise ValueError("context_stats requires at least one instance")
    counts = [len(select_global_context(corpus, inst, cfg, encoder))
              for inst in instances]
    return sum(counts) / len(counts)


@dataclass(frozen=True)
class ContextBundle:
    """Extracted context for one candidate: local window + selected globals."""

    local: tuple[tuple[int, str], ...] = ()
    global_ctx: tuple[tuple[int, str, float], ...] = ()

    @property
    def local_texts(self) -> list[str]:
        return [text for _, text in self.local]

    @property
    def global_texts(self) -> list[str]:
        return [text for _, text, _ in self.global_ctx]


def build_bundle(corpus: Corpus, instance: QaInstance,
                 local_cfg: LocalContextConfig, global_cfg: GlobalContextConfig,
                 encoder=None,
                 token_counter: Callable[[str], int] | None = None) -> ContextBundle:
    doc = corpus[instance.doc_id]
    return ContextBundle(
        local=tuple(local_context(doc, instance.sentence_index, local_cfg)),
        global_ctx=tuple(select_global_context(
            corpus, instance, global_cfg, encoder, token_counter)),
    )


def bundle_to_record(instance: QaInstance, bundle: ContextBundle, scorer: str) -> dict:
    return {
        "question_id": instance.question_id,
        "doc_id": instance.doc_id,
        "sentence_index": instance.sentence_index,
        "local": [p for p, _ in bundle.local],
        "global": [{"index": p, "score": s} for p, _, s in bundle.global_ctx],
        "scorer": scorer,
    }


def record_to_bundle(record: dict, corpus: Corpus) -> tuple[tuple[str, str, int], ContextBundle]:
    """Rebuild a bundle from a contexts.jsonl record, resolving texts in the corpus."""
    doc = corpus[record["doc_id"]]
    key = (record["question_id"], record["doc_id"], record["sentence_index"])
    local = tuple((p, doc.sentences[p]) for p in record["local"])
    global_ctx = tuple((g["index"], doc.sentences[g["index"]], g["score"])
                       for g in record["global"])
    return key, ContextBundle(local=local, global_ctx=global_ctx)


def write_contexts(path, instances: Sequence[QaInstance],
                   bundles: Sequence[ContextBundle], scorer: str,
                   meta: dict | None = None) -> None:
    """Write contexts.jsonl: an optional meta line, then one record per instance."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if meta is not None:
            fh.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
        for instance, bundle in zip(instances, bundles):
            fh.write(json.dumps(bundle_to_record(instance, bundle, scorer)) + "\n")


def read_contexts(path, corpus: Corpus) -> tuple[dict | None, dict]:
    """Read contexts.jsonl into {(question_id, doc_id, sentence_index): bundle}."""
    meta = None
    bundles = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            if "meta" in record and "question_id" not in record:
                meta = record["meta"]
                continue
            key, bundle = record_to_bundle(record, corpus)
            bundles[key] = bundle
    return meta, bundles
