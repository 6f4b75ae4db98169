"""Tiny byte-level causal LM with LoRA adapters on every linear layer.

The harness has no network access to pretrained checkpoints, so the "base
model" is a deterministic, seed-initialized transformer whose linear weights
are frozen; low-rank adapters, embeddings, layer norms, and the output head
carry the fine-tuning signal. The file format saved by the trainer bundles
the model config with the weights so a checkpoint is self-describing.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
SEP_ID = 3
BYTE_OFFSET = 4
VOCAB_SIZE = 256 + BYTE_OFFSET


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 96
    n_heads: int = 4
    n_layers: int = 2
    ffw_mult: int = 2
    max_seq_len: int = 384
    vocab_size: int = VOCAB_SIZE


def encode_bytes(text: str) -> list[int]:
    return [b + BYTE_OFFSET for b in text.encode("utf-8")]


def decode_bytes(ids: list[int]) -> str:
    data = bytes(i - BYTE_OFFSET for i in ids if i >= BYTE_OFFSET)
    return data.decode("utf-8", errors="replace")


def encode_example(prompt: str, completion: str) -> tuple[list[int], int]:
    """Token ids ``[BOS] prompt [SEP] completion [EOS]`` plus the SEP position."""
    prompt_ids = encode_bytes(prompt)
    ids = [BOS_ID] + prompt_ids + [SEP_ID] + encode_bytes(completion) + [EOS_ID]
    return ids, 1 + len(prompt_ids)


class LoRALinear(nn.Module):
    """Frozen linear layer plus a trainable low-rank update."""

    def __init__(self, in_features: int, out_features: int, rank: int):
        super().__init__()
        self.base = nn.Linear(in_features, out_features)
        self.base.weight.requires_grad_(False)
        self.base.bias.requires_grad_(False)
        self.rank = rank
        if rank > 0:
            self.lora_a = nn.Parameter(torch.randn(rank, in_features) / math.sqrt(in_features))
            self.lora_b = nn.Parameter(torch.zeros(out_features, rank))
        else:
            self.register_parameter("lora_a", None)
            self.register_parameter("lora_b", None)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.base(x)
        if self.rank > 0:
            out = out + (x @ self.lora_a.T) @ self.lora_b.T
        return out


class Block(nn.Module):
    def __init__(self, cfg: ModelConfig, rank: int):
        super().__init__()
        d = cfg.d_model
        self.n_heads = cfg.n_heads
        self.ln1 = nn.LayerNorm(d)
        self.q_proj = LoRALinear(d, d, rank)
        self.k_proj = LoRALinear(d, d, rank)
        self.v_proj = LoRALinear(d, d, rank)
        self.o_proj = LoRALinear(d, d, rank)
        self.ln2 = nn.LayerNorm(d)
        self.up = LoRALinear(d, d * cfg.ffw_mult, rank)
        self.down = LoRALinear(d * cfg.ffw_mult, d, rank)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch, seq, d = x.shape
        h = self.ln1(x)

        def split(t: torch.Tensor) -> torch.Tensor:
            return t.view(batch, seq, self.n_heads, d // self.n_heads).transpose(1, 2)

        attn = F.scaled_dot_product_attention(
            split(self.q_proj(h)), split(self.k_proj(h)), split(self.v_proj(h)),
            is_causal=True,
        )
        attn = attn.transpose(1, 2).reshape(batch, seq, d)
        x = x + self.o_proj(attn)
        h = self.ln2(x)
        return x + self.down(F.gelu(self.up(h)))


class TinyByteLM(nn.Module):
    def __init__(self, cfg: ModelConfig, adapter_rank: int):
        super().__init__()
        self.cfg = cfg
        self.adapter_rank = adapter_rank
        self.tok_embed = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.pos_embed = nn.Embedding(cfg.max_seq_len, cfg.d_model)
        self.blocks = nn.ModuleList(Block(cfg, adapter_rank) for _ in range(cfg.n_layers))
        self.ln_f = nn.LayerNorm(cfg.d_model)
        self.head = nn.Linear(cfg.d_model, cfg.vocab_size, bias=False)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        seq = ids.shape[1]
        if seq > self.cfg.max_seq_len:
            raise ValueError(f"sequence length {seq} exceeds {self.cfg.max_seq_len}")
        positions = torch.arange(seq, device=ids.device)
        x = self.tok_embed(ids) + self.pos_embed(positions)[None, :, :]
        for block in self.blocks:
            x = block(x)
        return self.head(self.ln_f(x))

    def trainable_parameters(self) -> list[nn.Parameter]:
        return [p for p in self.parameters() if p.requires_grad]

    def adapter_state_dict(self) -> dict[str, torch.Tensor]:
        return {
            name: param.detach().clone()
            for name, param in self.named_parameters()
            if param.requires_grad
        }

    @torch.no_grad()
    def generate(self, prompt: str, max_new_tokens: int = 16) -> str:
        """Greedy (temperature-0) decoding from ``[BOS] prompt [SEP]``."""
        was_training = self.training
        self.eval()
        ids = [BOS_ID] + encode_bytes(prompt) + [SEP_ID]
        out: list[int] = []
        for _ in range(max_new_tokens):
            window = ids[-self.cfg.max_seq_len :]
            logits = self(torch.tensor([window], dtype=torch.long))
            next_id = int(logits[0, -1].argmax())
            if next_id == EOS_ID:
                break
            ids.append(next_id)
            out.append(next_id)
        if was_training:
            self.train()
        return decode_bytes(out)


def build_model(model_id: str, cfg: ModelConfig, adapter_rank: int, seed: int) -> TinyByteLM:
    if model_id != "tiny-byte-lm":
        raise ValueError(f"unknown model id {model_id!r}; supported: tiny-byte-lm")
    torch.manual_seed(seed)
    return TinyByteLM(cfg, adapter_rank)


def save_model(path: str | Path, model: TinyByteLM, model_id: str, seed: int) -> None:
    torch.save(
        {
            "model_id": model_id,
            "seed": seed,
            "adapter_rank": model.adapter_rank,
            "config": asdict(model.cfg),
            "state_dict": model.state_dict(),
        },
        path,
    )


def load_model(path: str | Path) -> TinyByteLM:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model = build_model(
        payload["model_id"],
        ModelConfig(**payload["config"]),
        payload["adapter_rank"],
        payload["seed"],
    )
    model.load_state_dict(payload["state_dict"])
    return model
