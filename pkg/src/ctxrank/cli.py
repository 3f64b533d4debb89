"""Command-line pipeline: extract, train, rank, eval, bench, stats.

Configuration comes from an optional JSON config file plus flags; flags
win. Every artifact embeds the semantic-config hash and seed (JSONL
artifacts carry them in a leading {"meta": ...} line), and eval refuses
to compare runs whose dataset hashes differ.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from . import context as ctx
from . import evaluation as ev
from . import models as mdl
from .corpus import DatasetError, load_dataset
from .encoder import EncoderConfig, SentenceEncoder, TokenizerConfig, build_encoder

CONTEXTS_FILE = "contexts.jsonl"
CHECKPOINT_FILE = "checkpoint.bin"
TRAIN_LOG_FILE = "train_log.json"
RANKINGS_FILE = "rankings.jsonl"
REPORT_FILE = "report.json"


class CliError(ValueError):
    """User-facing configuration or pipeline error; exits with status 1."""


@dataclass(frozen=True)
class RunConfig:
    variant: str = "concat"
    scorer: str = "ngram"
    k: int = 1
    h: int = 5
    budget: int = 128
    seed: int = 0
    epochs: int = 10
    batch_size: int = 32
    lr: float = 3e-4
    unfreeze_top_k: int = 3
    encoder: dict = field(default_factory=lambda: asdict(EncoderConfig()))
    vocab_size: int = 8192

    def encoder_config(self) -> EncoderConfig:
        try:
            return EncoderConfig(**self.encoder)
        except (TypeError, ValueError) as exc:
            raise CliError(f"encoder: {exc}") from exc

    def tokenizer_config(self) -> TokenizerConfig:
        try:
            return TokenizerConfig(vocab_size=self.vocab_size)
        except ValueError as exc:
            raise CliError(f"vocab_size: {exc}") from exc

    def local_config(self) -> ctx.LocalContextConfig:
        try:
            return ctx.LocalContextConfig(k=self.k)
        except ValueError as exc:
            raise CliError(f"k: {exc}") from exc

    def global_config(self) -> ctx.GlobalContextConfig:
        try:
            return ctx.GlobalContextConfig(h=self.h, token_budget=self.budget,
                                           scorer=self.scorer)
        except ValueError as exc:
            raise CliError(f"scorer/h/budget: {exc}") from exc

    def train_config(self) -> mdl.TrainConfig:
        try:
            return mdl.TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                                   learning_rate=self.lr, seed=self.seed,
                                   unfreeze_top_k=self.unfreeze_top_k)
        except ValueError as exc:
            raise CliError(f"train: {exc}") from exc

    def model_variant(self) -> mdl.ModelVariant:
        try:
            return mdl.ModelVariant(self.variant)
        except ValueError as exc:
            raise CliError(
                f"variant: {self.variant!r} is not one of "
                f"{[v.value for v in mdl.ModelVariant]}") from exc


def config_hash(cfg: RunConfig) -> str:
    """Hash of the semantic configuration (paths excluded on purpose)."""
    canonical = json.dumps(asdict(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def dataset_hash(docs_path: str | Path, qa_path: str | Path) -> str:
    joined = (file_sha256(docs_path) + file_sha256(qa_path)).encode("ascii")
    return hashlib.sha256(joined).hexdigest()[:16]


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"config: {exc}") from exc
        known = set(asdict(cfg))
        unknown = set(data) - known
        if unknown:
            raise CliError(f"config: unknown fields {sorted(unknown)}")
        cfg = replace(cfg, **data)
    overrides = {}
    for name in ("variant", "scorer", "k", "h", "budget", "seed", "epochs",
                 "batch_size", "lr", "unfreeze_top_k", "vocab_size"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return replace(cfg, **overrides)


def _apply_thread_cap() -> None:
    cap = os.environ.get("CTXRANK_THREADS")
    if cap:
        import torch
        try:
            torch.set_num_threads(max(1, min(torch.get_num_threads(), int(cap))))
        except ValueError as exc:
            raise CliError(f"CTXRANK_THREADS: {exc}") from exc


def _load(args) -> tuple:
    try:
        return load_dataset(args.docs, args.qa)
    except OSError as exc:
        raise CliError(f"docs/qa: {exc}") from exc


def _sentence_encoder(cfg: RunConfig) -> SentenceEncoder | None:
    if cfg.scorer != ctx.COSINE_SCORER:
        return None
    return SentenceEncoder(build_encoder(cfg.encoder_config(),
                                         cfg.tokenizer_config(), cfg.seed))


def _extract_bundles(corpus, instances, cfg: RunConfig):
    from .encoder import count_tokens
    encoder = _sentence_encoder(cfg)
    local_cfg, global_cfg = cfg.local_config(), cfg.global_config()
    tok_cfg = cfg.tokenizer_config()
    counter = lambda text: count_tokens(text, tok_cfg)
    return [ctx.build_bundle(corpus, inst, local_cfg, global_cfg, encoder,
                             token_counter=counter)
            for inst in instances]


def cmd_extract(args) -> int:
    cfg = resolve_config(args)
    corpus, instances = _load(args)
    bundles = _extract_bundles(corpus, instances, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "dataset_hash": dataset_hash(args.docs, args.qa),
        "qa_hash": file_sha256(args.qa)[:16],
        "scorer": cfg.scorer,
        "k": cfg.k,
        "h": cfg.h,
        "budget": cfg.budget,
        "encoder": dict(cfg.encoder),
        "vocab_size": cfg.vocab_size,
    }
    ctx.write_contexts(out_dir / CONTEXTS_FILE, instances, bundles, cfg.scorer, meta)
    mean_selected = (sum(len(b.global_ctx) for b in bundles) / len(bundles)
                     if bundles else 0.0)
    print(json.dumps({"command": "extract", "instances": len(instances),
                      "mean_global_sentences": mean_selected,
                      "out": str(out_dir / CONTEXTS_FILE)}))
    return 0


def _examples_from_contexts(corpus, instances, contexts_path) -> tuple[dict, list]:
    try:
        meta, bundles = ctx.read_contexts(contexts_path, corpus)
    except OSError as exc:
        raise CliError(f"contexts: {exc}") from exc
    examples = []
    for inst in instances:
        key = (inst.question_id, inst.doc_id, inst.sentence_index)
        if key not in bundles:
            raise CliError(f"contexts: no entry for {key}")
        examples.append(mdl.Example.from_instance(corpus, inst, bundles[key]))
    return meta or {}, examples


def _bundles_from_meta(corpus, instances, meta: dict, cfg: RunConfig):
    """Recreate bundles for a held-out split using the extraction settings."""
    ext_cfg = replace(cfg,
                      scorer=meta.get("scorer", cfg.scorer),
                      k=meta.get("k", cfg.k),
                      h=meta.get("h", cfg.h),
                      budget=meta.get("budget", cfg.budget),
                      seed=meta.get("seed", cfg.seed),
                      encoder=meta.get("encoder", cfg.encoder),
                      vocab_size=meta.get("vocab_size", cfg.vocab_size))
    bundles = _extract_bundles(corpus, instances, ext_cfg)
    return [mdl.Example.from_instance(corpus, inst, b)
            for inst, b in zip(instances, bundles)]


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    corpus, instances = _load(args)
    contexts_path = args.contexts or Path(args.out) / CONTEXTS_FILE
    meta, examples = _examples_from_contexts(corpus, instances, contexts_path)
    dev_examples = []
    if args.dev_qa:
        from .corpus import load_qa
        dev_instances = load_qa(args.dev_qa, corpus)
        dev_examples = _bundles_from_meta(corpus, dev_instances, meta, cfg)
    variant = cfg.model_variant()
    try:
        result = mdl.train(variant, examples, dev_examples, cfg.encoder_config(),
                           cfg.tokenizer_config(), cfg.train_config())
    except mdl.TrainingError as exc:
        raise CliError(f"train: {exc}") from exc
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    extra = {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "dataset_hash": dataset_hash(args.docs, args.qa),
    }
    mdl.save_model(out_dir / CHECKPOINT_FILE, result.model, variant, extra)
    with open(out_dir / TRAIN_LOG_FILE, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({**extra, **result.log}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps({"command": "train", "variant": variant.value,
                      "final_dev_p_at_1": result.log.get("final_dev_p_at_1"),
                      "checkpoint": str(out_dir / CHECKPOINT_FILE)}))
    return 0


def cmd_rank(args) -> int:
    cfg = resolve_config(args)
    corpus, instances = _load(args)
    checkpoint_path = args.checkpoint or Path(args.out) / CHECKPOINT_FILE
    try:
        model, variant, extra = mdl.load_model(checkpoint_path)
    except (OSError, ValueError) as exc:
        raise CliError(f"checkpoint: {exc}") from exc
    contexts_path = args.contexts or Path(args.out) / CONTEXTS_FILE
    _, examples = _examples_from_contexts(corpus, instances, contexts_path)
    ranked = mdl.rank(model, variant, examples)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "config_hash": extra.get("config_hash", config_hash(cfg)),
        "seed": extra.get("seed", cfg.seed),
        "dataset_hash": dataset_hash(args.docs, args.qa),
        "qa_hash": file_sha256(args.qa)[:16],
        "variant": variant.value,
    }
    with open(out_dir / RANKINGS_FILE, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
        for rl in ranked:
            fh.write(json.dumps({
                "question_id": rl.question_id,
                "ranking": [{"doc_id": c.doc_id, "sentence_index": c.sentence_index,
                             "score": c.score} for c in rl.candidates],
            }) + "\n")
    print(json.dumps({"command": "rank", "questions": len(ranked),
                      "out": str(out_dir / RANKINGS_FILE)}))
    return 0


def _read_rankings(path) -> tuple[dict, list[dict]]:
    meta, records = {}, []
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = json.loads(line)
                if "meta" in record and "question_id" not in record:
                    meta = record["meta"]
                else:
                    records.append(record)
    except OSError as exc:
        raise CliError(f"rankings: {exc}") from exc
    return meta, records


def cmd_eval(args) -> int:
    rankings_path = args.rankings or Path(args.out) / RANKINGS_FILE
    meta, records = _read_rankings(rankings_path)
    qa_hash = file_sha256(args.qa)[:16]
    if meta.get("qa_hash") and meta["qa_hash"] != qa_hash:
        raise CliError(
            f"dataset_hash mismatch: rankings were produced for qa_hash "
            f"{meta['qa_hash']} but --qa hashes to {qa_hash}")
    labels = {}
    from .corpus import _iter_json_lines
    for lineno, obj in _iter_json_lines(args.qa, str(args.qa)):
        labels[(obj["question_id"], obj["doc_id"], obj["sentence_index"])] = obj["label"]
    try:
        lists = ev.rankings_to_lists(records, labels)
        metrics = ev.compute_metrics(lists)
    except ValueError as exc:
        raise CliError(f"eval: {exc}") from exc
    baseline = None
    if args.baseline:
        baseline = ev.read_report(args.baseline)
        if baseline.get("dataset_hash") != meta.get("dataset_hash"):
            raise CliError(
                f"dataset_hash mismatch: baseline report has "
                f"{baseline.get('dataset_hash')}, rankings have {meta.get('dataset_hash')}")
    report = ev.build_report(
        variant=meta.get("variant", "unknown"), metrics=metrics, baseline=baseline,
        meta={"config_hash": meta.get("config_hash"), "seed": meta.get("seed"),
              "dataset_hash": meta.get("dataset_hash")})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / REPORT_FILE
    if report_path.exists():
        existing = ev.read_report(report_path)
        existing.update(report)
        report = existing
    ev.write_report(report_path, report)
    print(json.dumps({"command": "eval", "metrics": report["metrics"],
                      "skipped_questions": report["skipped_questions"],
                      "out": str(report_path)}))
    return 0


def cmd_bench(args) -> int:
    cfg = resolve_config(args)
    corpus, instances = _load(args)
    checkpoint_path = args.checkpoint or Path(args.out) / CHECKPOINT_FILE
    try:
        model, variant, extra = mdl.load_model(checkpoint_path)
    except (OSError, ValueError) as exc:
        raise CliError(f"checkpoint: {exc}") from exc
    contexts_path = args.contexts or Path(args.out) / CONTEXTS_FILE
    _, examples = _examples_from_contexts(corpus, instances, contexts_path)
    if not examples:
        raise CliError("bench: no instances to benchmark")
    batch_size = args.bench_batch_size
    repeats = args.repeats
    pool = [examples[i % len(examples)] for i in range(batch_size)]
    packed = [mdl.pack_example(ex, variant, model.tok_cfg, model.enc_cfg.max_len)
              for ex in pool]
    import torch
    if variant is mdl.ModelVariant.CONTEXT_ENSEMBLE:
        batch_local = mdl.collate([v[0] for v in packed])
        batch_global = mdl.collate([v[1] for v in packed])
        run = lambda: model(batch_local, batch_global)
    else:
        batch = mdl.collate(packed)
        run = lambda: model(batch)
    model.eval()
    with torch.no_grad():
        latency = ev.latency_bench(run, batch_size=batch_size, repeats=repeats)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / REPORT_FILE
    report = ev.read_report(report_path) if report_path.exists() else {
        "variant": variant.value,
        "config_hash": extra.get("config_hash"),
        "seed": extra.get("seed"),
        "dataset_hash": extra.get("dataset_hash"),
    }
    report["latency"] = {"mean_us": latency.mean_us, "ci95_us": latency.ci95_us,
                         "batch_size": latency.batch_size, "repeats": latency.repeats}
    ev.write_report(report_path, report)
    print(json.dumps({"command": "bench", "latency": report["latency"],
                      "out": str(report_path)}))
    return 0


def cmd_stats(args) -> int:
    cfg = resolve_config(args)
    corpus, instances = _load(args)
    if not instances:
        raise CliError("stats: no instances")
    encoder = _sentence_encoder(cfg)
    try:
        mean_selected = ctx.context_stats(corpus, instances, cfg.global_config(), encoder)
    except ValueError as exc:
        raise CliError(f"stats: {exc}") from exc
    print(json.dumps({"command": "stats", "scorer": cfg.scorer,
                      "mean_selected_sentences": mean_selected,
                      "instances": len(instances)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxrank",
        description="Context-aware answer sentence ranking pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, docs=True, out=True):
        p.add_argument("--config", help="JSON config file; flags override it")
        if docs:
            p.add_argument("--docs", required=True, help="documents.jsonl")
            p.add_argument("--qa", required=True, help="qa.jsonl")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None)

    def add_context_flags(p):
        p.add_argument("--scorer", choices=list(ctx.SCORERS), default=None)
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--h", type=int, default=None)
        p.add_argument("--budget", type=int, default=None)
        p.add_argument("--vocab-size", dest="vocab_size", type=int, default=None)

    p = sub.add_parser("extract", help="extract local+global contexts")
    add_common(p)
    add_context_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a ranking model")
    add_common(p)
    p.add_argument("--contexts", help="contexts.jsonl (default: <out>/contexts.jsonl)")
    p.add_argument("--dev-qa", dest="dev_qa", help="held-out qa.jsonl for dev P@1")
    p.add_argument("--variant", choices=[v.value for v in mdl.ModelVariant],
                   default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--unfreeze-top-k", dest="unfreeze_top_k", type=int, default=None)
    p.add_argument("--vocab-size", dest="vocab_size", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rank", help="rank candidates with a trained model")
    add_common(p)
    p.add_argument("--contexts", help="contexts.jsonl")
    p.add_argument("--checkpoint", help="model checkpoint")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("eval", help="compute ranking metrics")
    add_common(p, docs=False)
    p.add_argument("--qa", required=True, help="qa.jsonl with gold labels")
    p.add_argument("--rankings", help="rankings.jsonl (default: <out>/rankings.jsonl)")
    p.add_argument("--baseline", help="baseline report.json for relative improvement")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="measure forward-pass latency")
    add_common(p)
    p.add_argument("--contexts", help="contexts.jsonl")
    p.add_argument("--checkpoint", help="model checkpoint")
    p.add_argument("--batch-size", dest="bench_batch_size", type=int, default=128)
    p.add_argument("--repeats", type=int, default=50)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("stats", help="mean selected global-context sentences")
    add_common(p, out=False)
    add_context_flags(p)
    p.set_defaults(func=cmd_stats)

    return parser


def run_command(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        _apply_thread_cap()
        return args.func(args)
    except ValueError as exc:  # CliError and DatasetError included
        message = str(exc).replace("\n", " ")
        print(f"error: {message}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
