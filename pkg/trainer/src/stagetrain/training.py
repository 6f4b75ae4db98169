"""Progressive fine-tuning over stage manifests with one optimizer trajectory.

Stages run strictly in manifest order; the optimizer state carries across
stage boundaries and the number of steps in a stage equals its manifest
iteration-range length (or an explicit epochs-per-stage override). The loss
is token-level cross-entropy on completion tokens only; prompt tokens are
masked out.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn.functional as F

from .manifests import StageSpec, load_manifests, read_stage_records
from .model import (
    PAD_ID,
    ModelConfig,
    TinyByteLM,
    build_model,
    encode_example,
    save_model,
)

IGNORE = -100


@dataclass(frozen=True)
class TrainingConfig:
    model_id: str = "tiny-byte-lm"
    adapter_rank: int = 32
    learning_rate: float = 2e-3
    # beta2 = 0.99 lets the second moment track the gradient-scale jump at
    # stage boundaries; together with clipping it keeps the single optimizer
    # trajectory stable when prompts shrink abruptly.
    betas: tuple[float, float] = (0.9, 0.99)
    max_grad_norm: float = 1.0
    batch_size: int = 8
    seed: int = 0
    epochs_per_stage: float | None = None
    max_new_tokens: int = 16
    model: ModelConfig = field(default_factory=ModelConfig)


@dataclass
class TrainResult:
    model: TinyByteLM
    losses: list[float]
    stage_starts: list[int]
    log_path: Path
    adapter_path: Path
    model_path: Path


def _encode_batch(pairs: list[tuple[str, str]], max_seq_len: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Pack examples into padded input/target tensors with prompt positions masked."""
    encoded = []
    for prompt, completion in pairs:
        ids, sep_pos = encode_example(prompt, completion)
        if len(ids) > max_seq_len:
            raise ValueError(
                f"example needs {len(ids)} tokens but the context window is {max_seq_len}"
            )
        encoded.append((ids, sep_pos))
    width = max(len(ids) for ids, _ in encoded)
    inputs = torch.full((len(encoded), width - 1), PAD_ID, dtype=torch.long)
    targets = torch.full((len(encoded), width - 1), IGNORE, dtype=torch.long)
    for row, (ids, sep_pos) in enumerate(encoded):
        seq = torch.tensor(ids, dtype=torch.long)
        inputs[row, : len(ids) - 1] = seq[:-1]
        # positions >= sep_pos predict the completion bytes and the closing EOS
        targets[row, sep_pos : len(ids) - 1] = seq[sep_pos + 1 :]
    return inputs, targets


class _StageSampler:
    """Deterministic epoch-shuffled index stream over one stage dataset."""

    def __init__(self, size: int, seed: int):
        self._rng = random.Random(seed)
        self._size = size
        self._queue: list[int] = []

    def take(self, count: int) -> list[int]:
        out: list[int] = []
        while len(out) < count:
            if not self._queue:
                self._queue = list(range(self._size))
                self._rng.shuffle(self._queue)
            out.append(self._queue.pop())
        return out


def _stage_steps(spec: StageSpec, n_records: int, config: TrainingConfig) -> int:
    if config.epochs_per_stage is None:
        return spec.steps
    steps = int(config.epochs_per_stage * n_records / config.batch_size)
    return max(1, steps)


def run_progressive(
    run_dir: str | Path, config: TrainingConfig, out_dir: str | Path
) -> TrainResult:
    """Train sequentially over all stages of a preprocessing run.

    Writes ``training_log.jsonl`` (per-step losses plus stage transitions),
    ``adapter.pt`` (trainable tensors only), and ``model.pt`` (full
    checkpoint) under ``out_dir``.
    """
    specs = load_manifests(run_dir)
    missing = [spec.dataset_path for spec in specs if not spec.dataset_path.is_file()]
    if missing:
        raise FileNotFoundError(f"missing stage datasets: {missing}")  # abort pre-training
    stage_data = [read_stage_records(spec.dataset_path) for spec in specs]
    for spec, pairs in zip(specs, stage_data):
        if not pairs:
            raise ValueError(f"stage {spec.stage_index} dataset is empty")

    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    log_path = out_path / "training_log.jsonl"
    adapter_path = out_path / "adapter.pt"
    model_path = out_path / "model.pt"

    model = build_model(config.model_id, config.model, config.adapter_rank, config.seed)
    optimizer = torch.optim.Adam(
        model.trainable_parameters(), lr=config.learning_rate, betas=config.betas
    )
    model.train()

    losses: list[float] = []
    stage_starts: list[int] = []
    step = 0
    with open(log_path, "w", encoding="utf-8") as log:
        for spec, pairs in zip(specs, stage_data):
            stage_starts.append(step)
            log.write(
                json.dumps(
                    {
                        "event": "stage_start",
                        "stage": spec.stage_index,
                        "step": step,
                        "tau": spec.tau,
                        "k": spec.k,
                        "records": len(pairs),
                    }
                )
                + "\n"
            )
            sampler = _StageSampler(len(pairs), seed=config.seed * 9973 + spec.stage_index)
            for _ in range(_stage_steps(spec, len(pairs), config)):
                batch = [pairs[i] for i in sampler.take(config.batch_size)]
                inputs, targets = _encode_batch(batch, config.model.max_seq_len)
                logits = model(inputs)
                loss = F.cross_entropy(
                    logits.view(-1, logits.shape[-1]),
                    targets.view(-1),
                    ignore_index=IGNORE,
                )
                optimizer.zero_grad()
                loss.backward()
                if config.max_grad_norm > 0:
                    torch.nn.utils.clip_grad_norm_(
                        model.trainable_parameters(), config.max_grad_norm
                    )
                optimizer.step()
                loss_value = float(loss.detach())
                losses.append(loss_value)
                log.write(
                    json.dumps(
                        {"step": step, "stage": spec.stage_index, "loss": loss_value}
                    )
                    + "\n"
                )
                step += 1

    torch.save(model.adapter_state_dict(), adapter_path)
    save_model(model_path, model, config.model_id, config.seed)
    return TrainResult(
        model=model,
        losses=losses,
        stage_starts=stage_starts,
        log_path=log_path,
        adapter_path=adapter_path,
        model_path=model_path,
    )
