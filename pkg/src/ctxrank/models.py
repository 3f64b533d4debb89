"""Context-aware answer scoring architectures, training, and ranking.

Three architectures score a (question, candidate, contexts) input:

  * concatenation: one encoder over the full packed sequence, classifier
    on the pooled CLS state. The no-context / local-only / global-only
    baselines reuse this path with segments omitted, so baseline gaps
    come from inputs, not implementation drift.
  * ensemble: two encoders, one over [Q, C, local] and one over
    [Q, C, global]; pooled states concatenated into a joint classifier.
  * multiway attention: one encoder pass plus an attention block that
    lets candidate tokens attend to local and global context tokens
    separately through four scoring flavors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import checkpoint as ckpt
from .context import ContextBundle
from .corpus import Corpus, QaInstance
from .encoder import (EncoderConfig, PackedSequence, TokenizerConfig,
                      TransformerEncoder, batch_to_tensors, pack_input)
from .evaluation import RankedCandidate, RankedList

# bound on elements materialized by pairwise attention score tensors
_PAIRWISE_CHUNK_ELEMS = 4_000_000


class ModelVariant(str, Enum):
    NO_CONTEXT = "no_context"
    LOCAL_ONLY = "local"
    GLOBAL_ONLY = "global"
    CONTEXT_CONCAT = "concat"
    CONTEXT_ENSEMBLE = "ensemble"
    MULTIWAY_ATTENTION = "mwa"


def variant_inputs(variant: ModelVariant) -> tuple[bool, bool]:
    """Which context segments the variant packs: (local, global)."""
    return {
        ModelVariant.NO_CONTEXT: (False, False),
        ModelVariant.LOCAL_ONLY: (True, False),
        ModelVariant.GLOBAL_ONLY: (False, True),
        ModelVariant.CONTEXT_CONCAT: (True, True),
        ModelVariant.CONTEXT_ENSEMBLE: (True, True),
        ModelVariant.MULTIWAY_ATTENTION: (True, True),
    }[variant]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 3e-4
    seed: int = 0
    unfreeze_top_k: int = 3
    class_weight_cap: float = 10.0
    weight_decay: float = 0.01
    warmup_frac: float = 0.1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Example:
    """One scoring input: question/candidate texts, label, extracted context."""

    question_id: str
    question: str
    doc_id: str
    sentence_index: int
    candidate: str
    label: int
    bundle: ContextBundle

    @classmethod
    def from_instance(cls, corpus: Corpus, instance: QaInstance,
                      bundle: ContextBundle) -> "Example":
        return cls(
            question_id=instance.question_id,
            question=instance.question_text,
            doc_id=instance.doc_id,
            sentence_index=instance.sentence_index,
            candidate=corpus.sentence(instance.doc_id, instance.sentence_index),
            label=instance.label,
            bundle=bundle,
        )


def pack_example(example: Example, variant: ModelVariant, tok_cfg: TokenizerConfig,
                 max_len: int):
    """Pack one example for the variant; the ensemble gets its two views."""
    if variant is ModelVariant.CONTEXT_ENSEMBLE:
        local_view = pack_input(example.question, example.candidate,
                                example.bundle.local_texts, [], tok_cfg, max_len)
        global_view = pack_input(example.question, example.candidate,
                                 [], example.bundle.global_texts, tok_cfg, max_len)
        return local_view, global_view
    use_local, use_global = variant_inputs(variant)
    return pack_input(
        example.question, example.candidate,
        example.bundle.local_texts if use_local else [],
        example.bundle.global_texts if use_global else [],
        tok_cfg, max_len)


@dataclass
class PackedBatch:
    token_ids: torch.Tensor
    segment_ids: torch.Tensor
    attention_mask: torch.Tensor
    cand_idx: torch.Tensor
    cand_mask: torch.Tensor
    local_idx: torch.Tensor
    local_mask: torch.Tensor
    global_idx: torch.Tensor
    global_mask: torch.Tensor
    labels: torch.Tensor | None = None

    def __len__(self) -> int:
        return self.token_ids.shape[0]

    def select(self, indices: torch.Tensor) -> "PackedBatch":
        return PackedBatch(
            *(t[indices] for t in (
                self.token_ids, self.segment_ids, self.attention_mask,
                self.cand_idx, self.cand_mask,
                self.local_idx, self.local_mask,
                self.global_idx, self.global_mask)),
            labels=None if self.labels is None else self.labels[indices])


def _span_tensors(packed: Sequence[PackedSequence], name: str) -> tuple[torch.Tensor, torch.Tensor]:
    lengths = [p.span_length(name) for p in packed]
    width = max(max(lengths, default=0), 1)
    idx = torch.zeros(len(packed), width, dtype=torch.long)
    mask = torch.zeros(len(packed), width, dtype=torch.bool)
    for b, p in enumerate(packed):
        if name in p.spans:
            start, end = p.spans[name]
            idx[b, :end - start] = torch.arange(start, end)
            mask[b, :end - start] = True
    return idx, mask


def collate(packed: Sequence[PackedSequence],
            labels: Sequence[int] | None = None) -> PackedBatch:
    token_ids, segment_ids, attention_mask = batch_to_tensors(packed)
    cand_idx, cand_mask = _span_tensors(packed, "candidate")
    local_idx, local_mask = _span_tensors(packed, "local")
    global_idx, global_mask = _span_tensors(packed, "global")
    return PackedBatch(
        token_ids=token_ids, segment_ids=segment_ids, attention_mask=attention_mask,
        cand_idx=cand_idx, cand_mask=cand_mask,
        local_idx=local_idx, local_mask=local_mask,
        global_idx=global_idx, global_mask=global_mask,
        labels=None if labels is None else torch.tensor(labels, dtype=torch.long))


class MultiwayAttention(nn.Module):
    """Candidate-to-context attention through four scoring flavors.

    Flavors: concat v'tanh(W1 c + W2 x); bilinear c'Wx; dot v'tanh(W(c*x));
    minus v'tanh(W(c-x)). Per candidate token the four attended context
    vectors are concatenated and projected back to the hidden size, then
    mean-pooled over candidate tokens. Samples with no context tokens get
    a learned null-context vector.
    """

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self.concat_c = nn.Linear(dim, dim, bias=False)
        self.concat_x = nn.Linear(dim, dim, bias=False)
        self.concat_v = nn.Parameter(torch.empty(dim))
        self.bilinear_w = nn.Linear(dim, dim, bias=False)
        self.dot_w = nn.Linear(dim, dim, bias=False)
        self.dot_v = nn.Parameter(torch.empty(dim))
        self.minus_w = nn.Linear(dim, dim, bias=False)
        self.minus_v = nn.Parameter(torch.empty(dim))
        self.aggregate = nn.Linear(4 * dim, dim, bias=False)
        self.null_ctx = nn.Parameter(torch.empty(dim))
        for lin in (self.concat_c, self.concat_x, self.bilinear_w,
                    self.dot_w, self.minus_w, self.aggregate):
            nn.init.normal_(lin.weight, std=0.02)
        for vec in (self.concat_v, self.dot_v, self.minus_v, self.null_ctx):
            nn.init.normal_(vec, std=0.02)

    def _flavor_scores(self, cand: torch.Tensor, ctx: torch.Tensor) -> dict[str, torch.Tensor]:
        b, tc, d = cand.shape
        tx = ctx.shape[1]
        scores = {
            "bilinear": self.bilinear_w(cand) @ ctx.transpose(1, 2),
        }
        cc, cx = self.concat_c(cand), self.concat_x(ctx)
        mc, mx = self.minus_w(cand), self.minus_w(ctx)
        s_concat = cand.new_empty(b, tc, tx)
        s_dot = cand.new_empty(b, tc, tx)
        s_minus = cand.new_empty(b, tc, tx)
        step = max(1, _PAIRWISE_CHUNK_ELEMS // max(1, b * tx * d))
        for i in range(0, tc, step):
            rows = slice(i, min(tc, i + step))
            s_concat[:, rows] = torch.tanh(
                cc[:, rows].unsqueeze(2) + cx.unsqueeze(1)) @ self.concat_v
            s_minus[:, rows] = torch.tanh(
                mc[:, rows].unsqueeze(2) - mx.unsqueeze(1)) @ self.minus_v
            pairwise = cand[:, rows].unsqueeze(2) * ctx.unsqueeze(1)
            s_dot[:, rows] = torch.tanh(self.dot_w(pairwise)) @ self.dot_v
        scores.update(concat=s_concat, dot=s_dot, minus=s_minus)
        return scores

    def forward(self, hidden: torch.Tensor, cand_idx: torch.Tensor,
                cand_mask: torch.Tensor, ctx_idx: torch.Tensor,
                ctx_mask: torch.Tensor,
                return_probs: bool = False):
        b, _, d = hidden.shape
        cand = torch.gather(hidden, 1, cand_idx.unsqueeze(-1).expand(-1, -1, d))
        ctx = torch.gather(hidden, 1, ctx_idx.unsqueeze(-1).expand(-1, -1, d))

        has_ctx = ctx_mask.any(dim=1)
        # keep softmax finite on context-free rows; their value is replaced below
        safe_mask = ctx_mask | ~has_ctx[:, None]
        neg = torch.finfo(hidden.dtype).min

        scores = self._flavor_scores(cand, ctx)
        attended = []
        probs = {}
        for flavor in ("concat", "bilinear", "dot", "minus"):
            s = scores[flavor].masked_fill(~safe_mask[:, None, :], neg)
            p = s.softmax(dim=-1)
            probs[flavor] = p
            attended.append(p @ ctx)
        fused = self.aggregate(torch.cat(attended, dim=-1))

        weights = cand_mask.unsqueeze(-1).to(hidden.dtype)
        pooled = (fused * weights).sum(dim=1) / weights.sum(dim=1).clamp(min=1.0)
        null = self.null_ctx.to(hidden.dtype).unsqueeze(0).expand(b, -1)
        out = torch.where(has_ctx[:, None], pooled, null)
        if return_probs:
            return out, probs
        return out


def multiway_attention(cand_reps, ctx_reps, block: MultiwayAttention) -> torch.Tensor:
    """Single-instance attention: (Tc, d) x (Tx, d) -> (d,) summary vector.

    An empty context yields the block's learned null-context vector.
    """
    cand = torch.as_tensor(np.asarray(cand_reps))
    if cand.ndim != 2 or cand.shape[0] == 0:
        raise ValueError("candidate span must be a non-empty (tokens, dim) matrix")
    ctx = torch.as_tensor(np.asarray(ctx_reps))
    if ctx.numel() == 0:
        ctx = cand.new_zeros(1, cand.shape[1])
        ctx_mask = torch.zeros(1, 1, dtype=torch.bool)
    else:
        ctx_mask = torch.ones(1, ctx.shape[0], dtype=torch.bool)
    tc, tx = cand.shape[0], ctx.shape[0]
    hidden = torch.cat([cand, ctx], dim=0).unsqueeze(0)
    out = block(
        hidden,
        cand_idx=torch.arange(tc).unsqueeze(0),
        cand_mask=torch.ones(1, tc, dtype=torch.bool),
        ctx_idx=torch.arange(tc, tc + tx).unsqueeze(0),
        ctx_mask=ctx_mask,
    )
    return out[0]


class ConcatClassifier(nn.Module):
    """Single encoder over the packed sequence, linear head on pooled CLS."""

    def __init__(self, enc_cfg: EncoderConfig, tok_cfg: TokenizerConfig):
        super().__init__()
        self.enc_cfg = enc_cfg
        self.tok_cfg = tok_cfg
        self.encoder = TransformerEncoder(enc_cfg, tok_cfg)
        self.head = nn.Linear(enc_cfg.hidden_dim, 2)

    def forward(self, batch: PackedBatch) -> torch.Tensor:
        _, pooled = self.encoder(batch.token_ids, batch.segment_ids,
                                 batch.attention_mask)
        return self.head(pooled)


class EnsembleClassifier(nn.Module):
    """Two independent encoders (local view, global view), joint linear head."""

    def __init__(self, enc_cfg: EncoderConfig, tok_cfg: TokenizerConfig):
        super().__init__()
        self.enc_cfg = enc_cfg
        self.tok_cfg = tok_cfg
        self.encoder_local = TransformerEncoder(enc_cfg, tok_cfg)
        self.encoder_global = TransformerEncoder(enc_cfg, tok_cfg)
        self.head = nn.Linear(2 * enc_cfg.hidden_dim, 2)

    def forward(self, batch_local: PackedBatch, batch_global: PackedBatch) -> torch.Tensor:
        if self.encoder_local.cfg.hidden_dim != self.encoder_global.cfg.hidden_dim:
            raise ValueError("ensemble encoders must share hidden_dim")
        _, pooled_local = self.encoder_local(
            batch_local.token_ids, batch_local.segment_ids, batch_local.attention_mask)
        _, pooled_global = self.encoder_global(
            batch_global.token_ids, batch_global.segment_ids, batch_global.attention_mask)
        return self.head(torch.cat([pooled_local, pooled_global], dim=-1))


class MwaClassifier(nn.Module):
    """One encoder pass plus separate candidate/local and candidate/global attention."""

    def __init__(self, enc_cfg: EncoderConfig, tok_cfg: TokenizerConfig):
        super().__init__()
        self.enc_cfg = enc_cfg
        self.tok_cfg = tok_cfg
        self.encoder = TransformerEncoder(enc_cfg, tok_cfg)
        self.mwa_local = MultiwayAttention(enc_cfg.hidden_dim)
        self.mwa_global = MultiwayAttention(enc_cfg.hidden_dim)
        self.head = nn.Linear(3 * enc_cfg.hidden_dim, 2)

    def forward(self, batch: PackedBatch) -> torch.Tensor:
        if not bool(batch.cand_mask.any()):
            raise ValueError("packed batch has no candidate span")
        hidden, pooled = self.encoder(batch.token_ids, batch.segment_ids,
                                      batch.attention_mask)
        local_vec = self.mwa_local(hidden, batch.cand_idx, batch.cand_mask,
                                   batch.local_idx, batch.local_mask)
        global_vec = self.mwa_global(hidden, batch.cand_idx, batch.cand_mask,
                                     batch.global_idx, batch.global_mask)
        return self.head(torch.cat([pooled, local_vec, global_vec], dim=-1))


def build_model(variant: ModelVariant, enc_cfg: EncoderConfig,
                tok_cfg: TokenizerConfig, seed: int) -> nn.Module:
    torch.manual_seed(seed)
    if variant is ModelVariant.CONTEXT_ENSEMBLE:
        return EnsembleClassifier(enc_cfg, tok_cfg)
    if variant is ModelVariant.MULTIWAY_ATTENTION:
        return MwaClassifier(enc_cfg, tok_cfg)
    return ConcatClassifier(enc_cfg, tok_cfg)


def _probabilities(logits: torch.Tensor) -> torch.Tensor:
    return logits.softmax(dim=-1)[:, 1]


def forward_concat(model: ConcatClassifier, packed: PackedSequence) -> float:
    with torch.no_grad():
        return float(_probabilities(model(collate([packed])))[0])


def forward_ensemble(model: EnsembleClassifier, packed_local: PackedSequence,
                     packed_global: PackedSequence) -> float:
    with torch.no_grad():
        logits = model(collate([packed_local]), collate([packed_global]))
        return float(_probabilities(logits)[0])


def forward_mwa(model: MwaClassifier, packed: PackedSequence) -> float:
    if "candidate" not in packed.spans:
        raise ValueError("packed sequence has no candidate span")
    with torch.no_grad():
        return float(_probabilities(model(collate([packed])))[0])


def predict(model: nn.Module, variant: ModelVariant, packed_views,
            batch_size: int = 64) -> np.ndarray:
    """Probability of correctness per example; packed_views as from pack_example."""
    model.eval()
    probs = []
    with torch.no_grad():
        for start in range(0, len(packed_views), batch_size):
            chunk = packed_views[start:start + batch_size]
            if variant is ModelVariant.CONTEXT_ENSEMBLE:
                logits = model(collate([v[0] for v in chunk]),
                               collate([v[1] for v in chunk]))
            else:
                logits = model(collate(list(chunk)))
            probs.append(_probabilities(logits).cpu().numpy())
    return np.concatenate(probs) if probs else np.zeros(0)


def rank(model: nn.Module, variant: ModelVariant, examples: Sequence[Example],
         batch_size: int = 64) -> list[RankedList]:
    """Rank each question's candidates by descending model score.

    Ties break on (doc_id, sentence_index) so the ordering is deterministic.
    """
    if not examples:
        raise ValueError("rank requires at least one example")
    tok_cfg = model.tok_cfg
    max_len = model.enc_cfg.max_len
    packed = [pack_example(ex, variant, tok_cfg, max_len) for ex in examples]
    scores = predict(model, variant, packed, batch_size=batch_size)

    by_question: dict[str, list[tuple[Example, float]]] = {}
    order: list[str] = []
    for ex, score in zip(examples, scores):
        if ex.question_id not in by_question:
            by_question[ex.question_id] = []
            order.append(ex.question_id)
        by_question[ex.question_id].append((ex, float(score)))

    ranked = []
    for qid in order:
        entries = sorted(by_question[qid],
                         key=lambda t: (-t[1], t[0].doc_id, t[0].sentence_index))
        ranked.append(RankedList(
            question_id=qid,
            candidates=tuple(RankedCandidate(
                doc_id=ex.doc_id, sentence_index=ex.sentence_index,
                score=score, label=ex.label) for ex, score in entries)))
    return ranked


def _dev_p_at_1(model: nn.Module, variant: ModelVariant,
                examples: Sequence[Example]) -> float:
    lists = rank(model, variant, examples)
    answerable = [rl for rl in lists if any(c.label == 1 for c in rl.candidates)]
    if not answerable:
        return float("nan")
    hits = sum(rl.candidates[0].label for rl in answerable)
    return hits / len(answerable)


def _class_weights(labels: Sequence[int], cap: float) -> torch.Tensor:
    pos = sum(labels)
    neg = len(labels) - pos
    if pos == 0 or neg == 0:
        raise TrainingError("training data must contain both labels")
    return torch.tensor([1.0, min(neg / pos, cap)], dtype=torch.float32)


def _run_epochs(forward_loss, n_examples: int, params, cfg: TrainConfig,
                epochs: int, label: str, log: list, on_epoch_end=None,
                generator: torch.Generator | None = None) -> None:
    optimizer = torch.optim.AdamW(params, lr=cfg.learning_rate,
                                  weight_decay=cfg.weight_decay)
    steps_per_epoch = math.ceil(n_examples / cfg.batch_size)
    total_steps = max(1, epochs * steps_per_epoch)
    warmup = max(1, int(cfg.warmup_frac * total_steps))
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: min(1.0, (step + 1) / warmup))
    for epoch in range(epochs):
        perm = torch.randperm(n_examples, generator=generator)
        losses = []
        for start in range(0, n_examples, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss = forward_loss(idx)
            if not torch.isfinite(loss):
                raise TrainingError(f"{label}: loss diverged at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            scheduler.step()
            losses.append(loss.item())
        entry = {"phase": label, "epoch": epoch,
                 "train_loss": sum(losses) / len(losses)}
        if on_epoch_end is not None:
            entry.update(on_epoch_end())
        log.append(entry)


def _freeze_bottom_layers(encoder: TransformerEncoder, top_k: int) -> None:
    """Leave only the top_k transformer blocks (and the final norm) trainable."""
    for p in encoder.parameters():
        p.requires_grad = False
    keep = encoder.blocks[len(encoder.blocks) - top_k:] if top_k > 0 else []
    for block in keep:
        for p in block.parameters():
            p.requires_grad = True
    if top_k > 0:
        for p in encoder.final_norm.parameters():
            p.requires_grad = True


@dataclass
class TrainResult:
    model: nn.Module
    log: dict


def train(variant: ModelVariant, train_examples: Sequence[Example],
          dev_examples: Sequence[Example], enc_cfg: EncoderConfig,
          tok_cfg: TokenizerConfig, cfg: TrainConfig) -> TrainResult:
    """Fine-tune a model for the variant on labeled examples.

    Minimizes class-weighted cross entropy with decoupled weight decay and
    linear warmup. The ensemble trains in two phases: each encoder is first
    trained on its own view with a throwaway head, then everything below
    the top unfreeze_top_k layers is frozen and the joint head is tuned.
    Deterministic for a fixed seed.
    """
    if not train_examples:
        raise TrainingError("no training examples")
    if variant is ModelVariant.CONTEXT_ENSEMBLE and cfg.unfreeze_top_k > enc_cfg.layers:
        raise TrainingError(
            f"unfreeze_top_k {cfg.unfreeze_top_k} exceeds encoder layers {enc_cfg.layers}")
    labels = [ex.label for ex in train_examples]
    weights = _class_weights(labels, cfg.class_weight_cap)

    model = build_model(variant, enc_cfg, tok_cfg, cfg.seed)
    generator = torch.Generator().manual_seed(cfg.seed)
    max_len = enc_cfg.max_len
    log_entries: list[dict] = []

    def dev_metrics():
        if not dev_examples:
            return {}
        value = _dev_p_at_1(model, variant, dev_examples)
        model.train()
        return {"dev_p_at_1": value}

    model.train()
    if variant is ModelVariant.CONTEXT_ENSEMBLE:
        views = [pack_example(ex, variant, tok_cfg, max_len) for ex in train_examples]
        batch_local = collate([v[0] for v in views], labels)
        batch_global = collate([v[1] for v in views], labels)

        for name, encoder, batch in (("phase1_local", model.encoder_local, batch_local),
                                     ("phase1_global", model.encoder_global, batch_global)):
            torch.manual_seed(cfg.seed + 1)
            head = nn.Linear(enc_cfg.hidden_dim, 2)

            def phase1_loss(idx, encoder=encoder, head=head, batch=batch):
                sub = batch.select(idx)
                _, pooled = encoder(sub.token_ids, sub.segment_ids, sub.attention_mask)
                return F.cross_entropy(head(pooled), batch.labels[idx], weight=weights)

            _run_epochs(phase1_loss, len(train_examples),
                        list(encoder.parameters()) + list(head.parameters()),
                        cfg, cfg.epochs, name, log_entries, generator=generator)

        _freeze_bottom_layers(model.encoder_local, cfg.unfreeze_top_k)
        _freeze_bottom_layers(model.encoder_global, cfg.unfreeze_top_k)

        def phase2_loss(idx):
            logits = model(batch_local.select(idx), batch_global.select(idx))
            return F.cross_entropy(logits, batch_local.labels[idx], weight=weights)

        trainable = [p for p in model.parameters() if p.requires_grad]
        _run_epochs(phase2_loss, len(train_examples), trainable, cfg, cfg.epochs,
                    "phase2_joint", log_entries, on_epoch_end=dev_metrics,
                    generator=generator)
    else:
        packed = [pack_example(ex, variant, tok_cfg, max_len) for ex in train_examples]
        batch = collate(packed, labels)

        def loss_fn(idx):
            logits = model(batch.select(idx))
            return F.cross_entropy(logits, batch.labels[idx], weight=weights)

        _run_epochs(loss_fn, len(train_examples), list(model.parameters()), cfg,
                    cfg.epochs, "train", log_entries, on_epoch_end=dev_metrics,
                    generator=generator)

    model.eval()
    log = {
        "variant": variant.value,
        "seed": cfg.seed,
        "epochs": log_entries,
        "final_dev_p_at_1": log_entries[-1].get("dev_p_at_1"),
    }
    return TrainResult(model=model, log=log)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def encoder_forward_flops(cfg: EncoderConfig, seq_len: int) -> int:
    """Analytic forward FLOPs for one sample (multiply-add counted as 2)."""
    d, f, l = cfg.hidden_dim, cfg.ffn_dim, seq_len
    per_layer = (
        4 * l * d * d * 2       # q, k, v, out projections
        + 2 * l * l * d * 2     # attention scores and weighted sum
        + 2 * l * d * f * 2     # feed-forward
    )
    embed = 3 * l * d           # token + position + segment adds
    return cfg.layers * per_layer + embed


def mwa_forward_flops(dim: int, cand_len: int, ctx_len: int) -> int:
    """Extra forward FLOPs of one attention block for given span lengths."""
    c, x, d = cand_len, ctx_len, dim
    if c == 0 or x == 0:
        return 0
    projections = (
        2 * (c + x) * d * d * 2   # concat flavor: W1 c, W2 x
        + c * d * d * 2           # bilinear: c W
        + (c + x) * d * d * 2     # minus: W c, W x
    )
    pairwise = (
        c * x * 4 * d             # concat: add, tanh, score dot
        + c * x * d * 2           # bilinear scores
        + c * x * d * d * 2 + c * x * 4 * d  # dot: per-pair projection + tanh/score
        + c * x * 4 * d           # minus
    )
    attend = 4 * c * x * d * 2
    aggregate = c * 4 * d * d * 2
    return projections + pairwise + attend + aggregate


def estimate_forward_flops(variant: ModelVariant, cfg: EncoderConfig, seq_len: int,
                           cand_len: int = 0, local_len: int = 0,
                           global_len: int = 0) -> int:
    """Per-sample forward cost of a variant at given packed/span lengths."""
    d = cfg.hidden_dim
    if variant is ModelVariant.CONTEXT_ENSEMBLE:
        return 2 * encoder_forward_flops(cfg, seq_len) + 2 * d * 2 * 2
    if variant is ModelVariant.MULTIWAY_ATTENTION:
        return (encoder_forward_flops(cfg, seq_len)
                + mwa_forward_flops(d, cand_len, local_len)
                + mwa_forward_flops(d, cand_len, global_len)
                + 3 * d * 2 * 2)
    return encoder_forward_flops(cfg, seq_len) + d * 2 * 2


def save_model(path, model: nn.Module, variant: ModelVariant,
               extra: dict | None = None) -> None:
    """Write a model checkpoint: encoder format plus variant tag and head tensors."""
    tensors = {name: tensor.detach().cpu().to(torch.float32).numpy()
               for name, tensor in model.state_dict().items()}
    meta = {"variant": variant.value}
    meta.update(extra or {})
    ckpt.save_checkpoint(path, model.enc_cfg, model.tok_cfg, tensors, extra=meta)


def load_model(path) -> tuple[nn.Module, ModelVariant, dict]:
    enc_cfg, tok_cfg, tensors, extra = ckpt.load_checkpoint(path)
    variant = ModelVariant(extra["variant"])
    model = build_model(variant, enc_cfg, tok_cfg, seed=0)
    state = {name: torch.from_numpy(arr) for name, arr in tensors.items()}
    model.load_state_dict(state, strict=True)
    model.eval()
    return model, variant, extra
