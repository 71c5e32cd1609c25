"""Masked-language transformer encoder over SMILES tokens (sequence view, 768-d).

Post-norm blocks of softmax self-attention and a rectified feed-forward layer,
sinusoidal positions, mean pooling over non-padding positions. A short masked
language model loop (``pretrain_mlm``) trains the weights at desk scale.
"""

from __future__ import annotations

import copy
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

from molfusion.errors import (
    AllKeysMasked,
    EmptyCorpus,
    EmptyTokenList,
    SequenceTooLong,
    StageError,
)

SEQ_DIM = 768
MAX_LEN = 202
PAD, BOS, UNK, MASK = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<unk>", "<mask>")


@dataclass
class Vocabulary:
    tokens: list[str]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[:4]) != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the four special tokens")
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.index.get(t, UNK) for t in tokens]

    def save(self, path) -> None:
        """One token per line; line ``i`` holds id ``i + 4``."""
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.tokens[4:]:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            body = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        return cls(list(SPECIAL_TOKENS) + body)


def build_vocab(corpus: Sequence[Sequence[str]]) -> Vocabulary:
    """Ids by descending token frequency, ties broken by token text."""
    counts = Counter(tok for seq in corpus for tok in seq)
    if not counts:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    ordered = sorted(counts, key=lambda t: (-counts[t], t))
    return Vocabulary(list(SPECIAL_TOKENS) + ordered)


def attention(q, k, v, mask=None):
    """Scaled dot-product attention.

    ``mask`` is boolean over keys (trailing dimension); ``True`` excludes a key,
    which then gets exactly zero weight.
    """
    q, k, v = (torch.as_tensor(x) for x in (q, k, v))
    scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
    if mask is not None:
        mask = torch.as_tensor(mask, dtype=torch.bool)
        if bool(mask.all(dim=-1).any()):
            raise AllKeysMasked("every key is masked")
        scores = scores.masked_fill(mask.unsqueeze(-2), float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    return weights @ v


def sinusoidal_positions(max_len: int, d_model: int) -> torch.Tensor:
    pos = torch.arange(max_len, dtype=torch.float64)[:, None]
    i = torch.arange(0, d_model, 2, dtype=torch.float64)
    angle = pos / torch.pow(10000.0, i / d_model)
    table = torch.zeros(max_len, d_model, dtype=torch.float64)
    table[:, 0::2] = torch.sin(angle)
    table[:, 1::2] = torch.cos(angle[:, : d_model // 2])
    return table


class Block(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.wq = nn.Linear(d_model, d_model)
        self.wk = nn.Linear(d_model, d_model)
        self.wv = nn.Linear(d_model, d_model)
        self.wo = nn.Linear(d_model, d_model)
        self.ln1 = nn.LayerNorm(d_model)
        self.ff1 = nn.Linear(d_model, 4 * d_model)
        self.ff2 = nn.Linear(4 * d_model, d_model)
        self.ln2 = nn.LayerNorm(d_model)

    def _heads(self, x):
        b, t, d = x.shape
        return x.view(b, t, self.n_heads, d // self.n_heads).transpose(1, 2)

    def forward(self, x, pad_mask):
        b, t, d = x.shape
        q, k, v = self._heads(self.wq(x)), self._heads(self.wk(x)), self._heads(self.wv(x))
        ctx = attention(q, k, v, pad_mask[:, None, :])
        ctx = ctx.transpose(1, 2).reshape(b, t, d)
        x = self.ln1(x + self.wo(ctx))
        return self.ln2(x + self.ff2(torch.relu(self.ff1(x))))


class SeqEncoder(nn.Module):
    """Transformer parameters plus the forward pass."""

    def __init__(self, vocab_size: int, d_model: int = SEQ_DIM, n_heads: int = 8,
                 n_layers: int = 2, max_len: int = MAX_LEN):
        super().__init__()
        if d_model % n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        self.d_model = d_model
        self.n_heads = n_heads
        self.max_len = max_len
        self.token_embed = nn.Embedding(vocab_size, d_model)
        self.register_buffer("pos_embed", sinusoidal_positions(max_len, d_model), persistent=False)
        self.blocks = nn.ModuleList(Block(d_model, n_heads) for _ in range(n_layers))
        self.mlm_head = nn.Linear(d_model, vocab_size)
        self.proj = nn.Linear(d_model, SEQ_DIM) if d_model != SEQ_DIM else None

    @property
    def vocab_size(self) -> int:
        return self.token_embed.num_embeddings

    def hidden(self, ids: torch.Tensor) -> torch.Tensor:
        pad_mask = ids == PAD
        t = ids.shape[1]
        x = self.token_embed(ids) * math.sqrt(self.d_model)
        x = x + self.pos_embed[:t].to(x.dtype)
        for block in self.blocks:
            x = block(x, pad_mask)
        return x

    def pooled(self, ids: torch.Tensor) -> torch.Tensor:
        keep = (ids != PAD).to(self.token_embed.weight.dtype)[..., None]
        h = self.hidden(ids)
        pooled = (h * keep).sum(dim=1) / keep.sum(dim=1)
        return self.proj(pooled) if self.proj is not None else pooled

    def to_bundle(self) -> dict[str, np.ndarray]:
        out = {k: v.detach().cpu().numpy() for k, v in self.state_dict().items()}
        out["config.n_heads"] = np.array([self.n_heads], dtype=np.float32)
        return out

    @classmethod
    def from_bundle(cls, tensors: dict[str, np.ndarray], dtype=torch.float64) -> "SeqEncoder":
        tensors = dict(tensors)
        n_heads = int(np.asarray(tensors.pop("config.n_heads")).ravel()[0])
        vocab_size, d_model = tensors["token_embed.weight"].shape
        n_layers = len({k.split(".")[1] for k in tensors if k.startswith("blocks.")})
        model = cls(vocab_size, d_model, n_heads, n_layers).to(dtype)
        model.load_state_dict({k: torch.as_tensor(np.asarray(v), dtype=dtype) for k, v in tensors.items()})
        return model.eval()


def init_transformer(vocab_size: int, seed: int = 0, d_model: int = SEQ_DIM, n_heads: int = 8,
                     n_layers: int = 2, dtype=torch.float64) -> SeqEncoder:
    """Seeded Glorot-uniform weights, zero biases, unit layer norms.

    The output head is scaled down so that initial predictions are close to
    uniform over the vocabulary.
    """
    gen = torch.Generator().manual_seed(int(seed))
    model = SeqEncoder(vocab_size, d_model, n_heads, n_layers).to(dtype)
    with torch.no_grad():
        for name, param in model.named_parameters():
            if name.endswith("bias"):
                param.zero_()
            elif ".ln" in name:
                param.fill_(1.0)
            else:
                fan_out, fan_in = param.shape
                a = math.sqrt(6.0 / (fan_in + fan_out))
                param.copy_((torch.rand(param.shape, generator=gen, dtype=torch.float64) * 2 - 1) * a)
        model.mlm_head.weight.mul_(0.1)
    return model.eval()


def _prepare(v: Vocabulary, tokens: Sequence[str], length_policy: str, max_len: int) -> list[int]:
    if not tokens:
        raise EmptyTokenList("cannot encode an empty token list")
    if len(tokens) + 1 > max_len:
        if length_policy == "strict":
            raise SequenceTooLong(len(tokens), max_len - 1)
        if length_policy != "truncate":
            raise ValueError(f"unknown length policy {length_policy!r}")
        tokens = tokens[: max_len - 1]
    return [BOS] + v.encode(tokens)


def _pad(rows: list[list[int]]) -> torch.Tensor:
    width = max(len(r) for r in rows)
    return torch.tensor([r + [PAD] * (width - len(r)) for r in rows], dtype=torch.long)


@torch.no_grad()
def encode_sequence(p: SeqEncoder, v: Vocabulary, tokens: Sequence[str],
                    length_policy: str = "strict") -> np.ndarray:
    ids = _pad([_prepare(v, tokens, length_policy, p.max_len)])
    return p.pooled(ids)[0].double().numpy()


@torch.no_grad()
def encode_sequence_batch(p: SeqEncoder, v: Vocabulary, token_lists, length_policy: str = "strict",
                          batch_size: int = 32) -> np.ndarray:
    """Row ``i`` embeds ``token_lists[i]``; batches are formed by length."""
    prepared = []
    for i, toks in enumerate(token_lists):
        try:
            prepared.append(_prepare(v, toks, length_policy, p.max_len))
        except Exception as exc:
            raise StageError("encode_sequence", exc, row=i) from exc
    out = np.empty((len(prepared), SEQ_DIM))
    order = sorted(range(len(prepared)), key=lambda i: (len(prepared[i]), i))
    for start in range(0, len(order), batch_size):
        chunk = order[start:start + batch_size]
        out[chunk] = p.pooled(_pad([prepared[i] for i in chunk])).double().numpy()
    return out


# --- masked language model pretraining -------------------------------------------

@dataclass
class MlmTrace:
    losses: list[float]
    accuracies: list[float]


def mask_batch(ids: torch.Tensor, mask_rate: float, gen: torch.Generator):
    """Replace a ``mask_rate`` share of ordinary tokens with MASK.

    Returns the corrupted ids and the boolean positions to predict.
    """
    maskable = ids > MASK
    chosen = (torch.rand(ids.shape, generator=gen, dtype=torch.float64) < mask_rate) & maskable
    if not bool(chosen.any()):
        cand = maskable.flatten().nonzero().flatten()
        pick = cand[torch.randint(len(cand), (1,), generator=gen)]
        chosen.view(-1)[pick] = True
    corrupted = ids.masked_fill(chosen, MASK)
    return corrupted, chosen


def mlm_loss(p: SeqEncoder, corrupted: torch.Tensor, targets: torch.Tensor,
             positions: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Mean cross-entropy and accuracy over the masked positions."""
    logits = p.mlm_head(p.hidden(corrupted))[positions]
    gold = targets[positions]
    loss = nn.functional.cross_entropy(logits, gold)
    acc = (logits.argmax(dim=-1) == gold).double().mean()
    return loss, acc


def pretrain_mlm(p: SeqEncoder, v: Vocabulary, corpus, steps: int, mask_rate: float = 0.15,
                 seed: int = 0, learning_rate: float = 1e-3, batch_size: int = 16,
                 length_policy: str = "truncate") -> tuple[SeqEncoder, MlmTrace]:
    """Plain gradient descent on the masked-token objective.

    ``corpus`` holds token lists. The input model is left untouched; a trained
    copy is returned with the per-step loss and masked-token accuracy.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if not corpus:
        raise EmptyCorpus("cannot pretrain on an empty corpus")
    rows = [_prepare(v, toks, length_policy, p.max_len) for toks in corpus]
    model = copy.deepcopy(p).train()
    gen = torch.Generator().manual_seed(int(seed))
    losses, accs = [], []
    for _ in range(steps):
        pick = torch.randint(len(rows), (min(batch_size, len(rows)),), generator=gen)
        ids = _pad([rows[int(i)] for i in pick])
        corrupted, positions = mask_batch(ids, mask_rate, gen)
        loss, acc = mlm_loss(model, corrupted, ids, positions)
        model.zero_grad()
        loss.backward()
        with torch.no_grad():
            for param in model.parameters():
                if param.grad is not None:
                    param -= learning_rate * param.grad
        losses.append(float(loss.detach()))
        accs.append(float(acc))
    return model.eval(), MlmTrace(losses, accs)
