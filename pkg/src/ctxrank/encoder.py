"""Desk-scale transformer encoder and tokenizer.

The tokenizer maps text to ids through a fixed hash into a closed
vocabulary, so no vocabulary training is needed and ids are stable across
runs and platforms. Packed inputs carry segment annotations (question,
candidate, local context, global context) so every architecture can tell
the context roles apart.
"""

from __future__ import annotations

import hashlib
import string
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

PUNCT = set(string.punctuation)

# segment ids
SEG_SPECIAL = 0
SEG_QUESTION = 1
SEG_CANDIDATE = 2
SEG_LOCAL = 3
SEG_GLOBAL = 4
NUM_SEGMENTS = 5

SEGMENT_NAMES = {
    "question": SEG_QUESTION,
    "candidate": SEG_CANDIDATE,
    "local": SEG_LOCAL,
    "global": SEG_GLOBAL,
}


@dataclass(frozen=True)
class TokenizerConfig:
    vocab_size: int = 8192
    cls_id: int = 0
    sep_id: int = 1
    pad_id: int = 2
    unk_id: int = 3

    def __post_init__(self):
        if self.vocab_size < 8:
            raise ValueError("vocab_size must be >= 8")
        specials = (self.cls_id, self.sep_id, self.pad_id, self.unk_id)
        if len(set(specials)) != 4 or any(i >= self.vocab_size for i in specials):
            raise ValueError("special token ids must be distinct and < vocab_size")

    @property
    def num_special(self) -> int:
        return 4

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset((self.cls_id, self.sep_id, self.pad_id, self.unk_id))


def text_tokens(text: str) -> list[str]:
    """Lowercase, whitespace-split, with surrounding punctuation split off as tokens."""
    out: list[str] = []
    for raw in text.lower().split():
        lead: list[str] = []
        trail: list[str] = []
        while raw and raw[0] in PUNCT:
            lead.append(raw[0])
            raw = raw[1:]
        while raw and raw[-1] in PUNCT:
            trail.append(raw[-1])
            raw = raw[:-1]
        out.extend(lead)
        if raw:
            out.append(raw)
        out.extend(reversed(trail))
    return out


def _hash_token(token: str, cfg: TokenizerConfig) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    bucket = int.from_bytes(digest, "little") % (cfg.vocab_size - cfg.num_special)
    return cfg.num_special + bucket


def tokenize(text: str, cfg: TokenizerConfig) -> list[int]:
    """Map text to token ids; deterministic across runs and platforms."""
    return [_hash_token(tok, cfg) for tok in text_tokens(text)]


def count_tokens(text: str, cfg: TokenizerConfig) -> int:
    return len(text_tokens(text))


class PackError(ValueError):
    pass


@dataclass
class PackedSequence:
    """Token ids with segment/span annotations, padded to a fixed length."""

    token_ids: list[int]
    segment_ids: list[int]
    spans: dict[str, tuple[int, int]]
    attention_mask: list[int]

    def span_length(self, name: str) -> int:
        if name not in self.spans:
            return 0
        start, end = self.spans[name]
        return end - start


def pack_input(question: str, candidate: str, local_texts: Sequence[str],
               global_texts: Sequence[str], cfg: TokenizerConfig,
               max_len: int) -> PackedSequence:
    """Pack [CLS] Q [SEP] C [SEP] Loc [SEP] Glo [SEP], padded to max_len.

    Empty context segments are omitted together with their separator. On
    overflow the global segment is truncated first, then local; the
    question and candidate are never truncated.
    """
    q_ids = tokenize(question, cfg)
    c_ids = tokenize(candidate, cfg)
    loc_ids = [tid for text in local_texts for tid in tokenize(text, cfg)]
    glo_ids = [tid for text in global_texts for tid in tokenize(text, cfg)]

    base = 3 + len(q_ids) + len(c_ids)  # CLS + two SEPs
    if base > max_len:
        raise PackError(
            f"question+candidate need {base} positions, max_len is {max_len}")

    def segment_cost(n: int) -> int:
        return n + 1 if n else 0

    avail = max_len - base
    loc_keep, glo_keep = len(loc_ids), len(glo_ids)
    if segment_cost(loc_keep) + segment_cost(glo_keep) > avail:
        glo_room = avail - segment_cost(loc_keep)
        glo_keep = max(0, min(glo_keep, glo_room - 1))
    if segment_cost(loc_keep) + segment_cost(glo_keep) > avail:
        loc_room = avail - segment_cost(glo_keep)
        loc_keep = max(0, min(loc_keep, loc_room - 1))
    loc_ids, glo_ids = loc_ids[:loc_keep], glo_ids[:glo_keep]

    token_ids = [cfg.cls_id]
    segment_ids = [SEG_SPECIAL]
    spans: dict[str, tuple[int, int]] = {}

    def emit(name: str, seg: int, ids: list[int], always: bool = False):
        if not ids and not always:
            return
        start = len(token_ids)
        token_ids.extend(ids)
        segment_ids.extend([seg] * len(ids))
        if ids:
            spans[name] = (start, start + len(ids))
        token_ids.append(cfg.sep_id)
        segment_ids.append(SEG_SPECIAL)

    emit("question", SEG_QUESTION, q_ids, always=True)
    emit("candidate", SEG_CANDIDATE, c_ids, always=True)
    emit("local", SEG_LOCAL, loc_ids)
    emit("global", SEG_GLOBAL, glo_ids)

    attention_mask = [1] * len(token_ids)
    pad = max_len - len(token_ids)
    token_ids.extend([cfg.pad_id] * pad)
    segment_ids.extend([SEG_SPECIAL] * pad)
    attention_mask.extend([0] * pad)
    return PackedSequence(token_ids=token_ids, segment_ids=segment_ids,
                          spans=spans, attention_mask=attention_mask)


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 4
    hidden_dim: int = 128
    heads: int = 4
    ffn_dim: int = 256
    max_len: int = 320

    def __post_init__(self):
        if min(self.layers, self.hidden_dim, self.heads, self.ffn_dim, self.max_len) < 1:
            raise ValueError("all encoder dimensions must be positive")
        if self.hidden_dim % self.heads != 0:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by heads {self.heads}")


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor) -> torch.Tensor:
        # x: (B, L, d); key_mask: (B, L) bool, True where attendable
        b, l, d = x.shape
        q = self.q_proj(x).view(b, l, self.heads, self.head_dim).transpose(1, 2)
        k = self.k_proj(x).view(b, l, self.heads, self.head_dim).transpose(1, 2)
        v = self.v_proj(x).view(b, l, self.heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / self.head_dim ** 0.5
        neg = torch.finfo(scores.dtype).min
        scores = scores.masked_fill(~key_mask[:, None, None, :], neg)
        attn = scores.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, l, d)
        return self.out_proj(out)


class EncoderBlock(nn.Module):
    """Pre-norm residual block: attention then feed-forward."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.hidden_dim)
        self.attn = MultiHeadSelfAttention(cfg.hidden_dim, cfg.heads)
        self.norm2 = nn.LayerNorm(cfg.hidden_dim)
        self.ffn = nn.Sequential(
            nn.Linear(cfg.hidden_dim, cfg.ffn_dim),
            nn.GELU(),
            nn.Linear(cfg.ffn_dim, cfg.hidden_dim),
        )

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x), key_mask)
        x = x + self.ffn(self.norm2(x))
        return x


class TransformerEncoder(nn.Module):
    """Pre-norm transformer over hashed token ids with segment embeddings."""

    def __init__(self, cfg: EncoderConfig, tok_cfg: TokenizerConfig):
        super().__init__()
        self.cfg = cfg
        self.tok_cfg = tok_cfg
        self.token_emb = nn.Embedding(tok_cfg.vocab_size, cfg.hidden_dim)
        self.pos_emb = nn.Embedding(cfg.max_len, cfg.hidden_dim)
        self.seg_emb = nn.Embedding(NUM_SEGMENTS, cfg.hidden_dim)
        self.blocks = nn.ModuleList(EncoderBlock(cfg) for _ in range(cfg.layers))
        self.final_norm = nn.LayerNorm(cfg.hidden_dim)
        self.apply(self._init_weights)

    @staticmethod
    def _init_weights(module: nn.Module):
        if isinstance(module, nn.Linear):
            nn.init.normal_(module.weight, std=0.02)
            nn.init.zeros_(module.bias)
        elif isinstance(module, nn.Embedding):
            nn.init.normal_(module.weight, std=0.02)

    def forward(self, token_ids: torch.Tensor, segment_ids: torch.Tensor,
                attention_mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (per-token states (B, L, d), pooled CLS vector (B, d))."""
        if int(token_ids.max()) >= self.tok_cfg.vocab_size:
            raise ValueError(
                f"token id {int(token_ids.max())} >= vocab_size {self.tok_cfg.vocab_size}")
        b, l = token_ids.shape
        if l > self.cfg.max_len:
            raise ValueError(f"sequence length {l} exceeds max_len {self.cfg.max_len}")
        positions = torch.arange(l, device=token_ids.device).unsqueeze(0)
        x = self.token_emb(token_ids) + self.pos_emb(positions) + self.seg_emb(segment_ids)
        key_mask = attention_mask.bool()
        for block in self.blocks:
            x = block(x, key_mask)
        hidden = self.final_norm(x)
        return hidden, hidden[:, 0]


def build_encoder(cfg: EncoderConfig, tok_cfg: TokenizerConfig,
                  seed: int) -> TransformerEncoder:
    """Construct an encoder with seed-determined initial weights."""
    torch.manual_seed(seed)
    return TransformerEncoder(cfg, tok_cfg)


def batch_to_tensors(packed: Sequence[PackedSequence]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    token_ids = torch.tensor([p.token_ids for p in packed], dtype=torch.long)
    segment_ids = torch.tensor([p.segment_ids for p in packed], dtype=torch.long)
    attention_mask = torch.tensor([p.attention_mask for p in packed], dtype=torch.long)
    return token_ids, segment_ids, attention_mask


class SentenceEncoder:
    """Mean-pooled sentence embeddings from a transformer encoder.

    Pooling averages the non-special, non-pad token states. Pairs are
    embedded as one sequence with a separator between the two texts.
    """

    def __init__(self, encoder: TransformerEncoder):
        self.encoder = encoder
        self.cfg = encoder.cfg
        self.tok_cfg = encoder.tok_cfg

    def count_tokens(self, text: str) -> int:
        return count_tokens(text, self.tok_cfg)

    def _pack_texts(self, segments: Sequence[tuple[str, int]]) -> PackedSequence:
        cfg, max_len = self.tok_cfg, self.cfg.max_len
        token_ids = [cfg.cls_id]
        segment_ids = [SEG_SPECIAL]
        budget = max_len - 1 - len(segments)  # CLS + one SEP per segment
        for text, seg in segments:
            ids = tokenize(text, cfg)[:max(0, budget)]
            budget -= len(ids)
            token_ids.extend(ids + [cfg.sep_id])
            segment_ids.extend([seg] * len(ids) + [SEG_SPECIAL])
        if len(token_ids) <= 1 + len(segments):
            raise ValueError("cannot embed empty text: no tokens to pool")
        mask = [1] * len(token_ids)
        pad = max_len - len(token_ids)
        token_ids += [cfg.pad_id] * pad
        segment_ids += [SEG_SPECIAL] * pad
        mask += [0] * pad
        return PackedSequence(token_ids, segment_ids, {}, mask)

    @torch.no_grad()
    def _embed_packed(self, packed: Sequence[PackedSequence]) -> np.ndarray:
        self.encoder.eval()
        token_ids, segment_ids, attention_mask = batch_to_tensors(packed)
        hidden, _ = self.encoder(token_ids, segment_ids, attention_mask)
        pool_mask = (segment_ids != SEG_SPECIAL) & attention_mask.bool()
        weights = pool_mask.unsqueeze(-1).to(hidden.dtype)
        summed = (hidden * weights).sum(dim=1)
        counts = weights.sum(dim=1).clamp(min=1.0)
        return (summed / counts).cpu().numpy()

    def embed(self, text: str) -> np.ndarray:
        return self._embed_packed([self._pack_texts([(text, SEG_QUESTION)])])[0]

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        packed = [self._pack_texts([(t, SEG_QUESTION)]) for t in texts]
        return self._embed_packed(packed)

    def embed_pair(self, first: str, second: str) -> np.ndarray:
        packed = self._pack_texts([(first, SEG_QUESTION), (second, SEG_CANDIDATE)])
        return self._embed_packed([packed])[0]
