"""Dataset model and ingestion: documents, questions, candidates, labels.

Documents are ordered sentence sequences; answer candidates are addressed
positionally by (doc_id, sentence_index) so context extraction can locate
neighbors. Input files are JSON lines, UTF-8, LF endings:

    documents.jsonl  {"doc_id": str, "sentences": [str, ...]}
                     or {"doc_id": str, "text": str}   (segmented on load)
    qa.jsonl         {"question_id": str, "question": str, "doc_id": str,
                      "sentence_index": int, "label": 0|1}
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator


class DatasetError(ValueError):
    """Raised for malformed or inconsistent dataset records.

    Carries the offending line number (1-based) when available.
    """

    def __init__(self, message: str, line_number: int | None = None,
                 source: str | None = None):
        self.line_number = line_number
        self.source = source
        where = []
        if source is not None:
            where.append(str(source))
        if line_number is not None:
            where.append(f"line {line_number}")
        prefix = f"[{':'.join(where)}] " if where else ""
        super().__init__(prefix + message)


# Split after sentence-final punctuation followed by whitespace and an
# uppercase letter or digit. Internal periods ("3.14") never match.
_SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?])\s+(?=[A-Z0-9])")


def segment_text(raw: str) -> list[str]:
    """Split raw text into sentences.

    Deterministic and idempotent: re-segmenting any returned sentence
    yields that sentence unchanged. Empty or whitespace-only input gives
    an empty list.
    """
    stripped = raw.strip()
    if not stripped:
        return []
    return [piece for piece in (p.strip() for p in _SENTENCE_BOUNDARY.split(stripped)) if piece]


@dataclass(frozen=True)
class Document:
    """Ordered sequence of sentences from one source page."""

    doc_id: str
    sentences: tuple[str, ...]

    def __post_init__(self):
        if not self.sentences:
            raise DatasetError(f"document {self.doc_id!r} has no sentences")
        for i, s in enumerate(self.sentences):
            if not s.strip():
                raise DatasetError(
                    f"document {self.doc_id!r} sentence {i} is empty after trimming")

    @property
    def sentence_count(self) -> int:
        return len(self.sentences)


@dataclass(frozen=True)
class Corpus:
    """Immutable collection of documents, keyed by doc_id."""

    documents: dict[str, Document] = field(default_factory=dict)

    @property
    def document_count(self) -> int:
        return len(self.documents)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.documents

    def __getitem__(self, doc_id: str) -> Document:
        return self.documents[doc_id]

    def sentence(self, doc_id: str, index: int) -> str:
        return self.documents[doc_id].sentences[index]


@dataclass(frozen=True)
class QaInstance:
    """One labeled answer candidate for one question."""

    question_id: str
    question_text: str
    doc_id: str
    sentence_index: int
    label: int

    def __post_init__(self):
        if self.label not in (0, 1) or isinstance(self.label, bool):
            raise DatasetError(
                f"label must be 0 or 1, got {self.label!r} "
                f"(question {self.question_id!r})")


def _iter_json_lines(source: Iterable[str] | str | Path,
                     name: str) -> Iterator[tuple[int, dict]]:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            lines = fh.readlines()
    else:
        lines = list(source)
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"malformed JSON: {exc.msg}", lineno, name) from exc
        if not isinstance(obj, dict):
            raise DatasetError("expected a JSON object", lineno, name)
        yield lineno, obj


def load_documents(source: Iterable[str] | str | Path) -> Corpus:
    """Load documents.jsonl into a Corpus; file order is preserved.

    A record may carry pre-segmented "sentences" (the canonical path) or
    raw "text", which is segmented on load. Duplicate doc_ids are errors.
    """
    name = str(source) if isinstance(source, (str, Path)) else "documents"
    documents: dict[str, Document] = {}
    for lineno, obj in _iter_json_lines(source, name):
        doc_id = obj.get("doc_id")
        if not isinstance(doc_id, str) or not doc_id:
            raise DatasetError("missing or invalid doc_id", lineno, name)
        if doc_id in documents:
            raise DatasetError(f"duplicate doc_id {doc_id!r}", lineno, name)
        if "sentences" in obj:
            sentences = obj["sentences"]
            if (not isinstance(sentences, list)
                    or not all(isinstance(s, str) for s in sentences)):
                raise DatasetError("sentences must be a list of strings", lineno, name)
        elif "text" in obj:
            if not isinstance(obj["text"], str):
                raise DatasetError("text must be a string", lineno, name)
            sentences = segment_text(obj["text"])
        else:
            raise DatasetError("record needs 'sentences' or 'text'", lineno, name)
        try:
            documents[doc_id] = Document(doc_id=doc_id, sentences=tuple(sentences))
        except DatasetError as exc:
            raise DatasetError(str(exc), lineno, name) from exc
    return Corpus(documents=documents)


def load_qa(source: Iterable[str] | str | Path, corpus: Corpus) -> list[QaInstance]:
    """Load qa.jsonl, validating every instance against the corpus."""
    name = str(source) if isinstance(source, (str, Path)) else "qa"
    instances: list[QaInstance] = []
    for lineno, obj in _iter_json_lines(source, name):
        try:
            question_id = obj["question_id"]
            question = obj["question"]
            doc_id = obj["doc_id"]
            sentence_index = obj["sentence_index"]
            label = obj["label"]
        except KeyError as exc:
            raise DatasetError(f"missing field {exc.args[0]!r}", lineno, name) from exc
        if not isinstance(question_id, str) or not isinstance(question, str):
            raise DatasetError("question_id and question must be strings", lineno, name)
        if not isinstance(sentence_index, int) or isinstance(sentence_index, bool):
            raise DatasetError("sentence_index must be an integer", lineno, name)
        if doc_id not in corpus:
            raise DatasetError(f"unknown doc_id {doc_id!r}", lineno, name)
        doc = corpus[doc_id]
        if not 0 <= sentence_index < doc.sentence_count:
            raise DatasetError(
                f"sentence_index {sentence_index} out of range for "
                f"doc {doc_id!r} ({doc.sentence_count} sentences)", lineno, name)
        try:
            instances.append(QaInstance(
                question_id=question_id, question_text=question,
                doc_id=doc_id, sentence_index=sentence_index, label=label))
        except DatasetError as exc:
            raise DatasetError(str(exc), lineno, name) from exc
    return instances


def load_dataset(docs_source: Iterable[str] | str | Path,
                 qa_source: Iterable[str] | str | Path) -> tuple[Corpus, list[QaInstance]]:
    """Load and cross-validate the document and QA streams."""
    corpus = load_documents(docs_source)
    instances = load_qa(qa_source, corpus)
    return corpus, instances


def save_documents(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus back to documents.jsonl (always pre-segmented form)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in corpus.documents.values():
            fh.write(json.dumps(
                {"doc_id": doc.doc_id, "sentences": list(doc.sentences)},
                ensure_ascii=False) + "\n")
