"""Supervised fine-tuning on either ordering variant, with early stopping.

Masked causal-LM loss over solution tokens only.  Every eval interval the
model greedy-decodes the validation split; training stops after `patience`
consecutive evaluations without a strictly better validation cell accuracy,
and the best-scoring parameters are kept.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .codec import Vocabulary, encode
from .errors import InputError
from .evaluate import evaluate
from .model import ModelConfig, forward, init_params, log_softmax, loss_and_grads
from .optim import AdamW
from .seeding import derive_rng

ORDER_VARIANTS = ("solver", "random")
DEFAULT_LR = {"random": 5e-5, "solver": 1e-5}


@dataclass(frozen=True)
class SftConfig:
    order_variant: str = "random"
    lr: float = DEFAULT_LR["random"]
    batch_size: int = 32
    weight_decay: float = 0.01
    patience: int = 10
    max_steps: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.order_variant not in ORDER_VARIANTS:
            raise InputError(f"order_variant must be one of {ORDER_VARIANTS}")
        if self.lr <= 0:
            raise InputError(f"lr must be > 0, got {self.lr}")
        if self.patience < 1:
            raise InputError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 1 or self.max_steps < 0:
            raise InputError("batch_size must be >= 1 and max_steps >= 0")


def default_lr(order_variant: str) -> float:
    if order_variant not in DEFAULT_LR:
        raise InputError(f"order_variant must be one of {ORDER_VARIANTS}")
    return DEFAULT_LR[order_variant]


@dataclass
class SftResult:
    params: dict[str, np.ndarray]
    best_step: int
    best_val_accuracy: float
    steps_run: int
    metrics: list[dict] = field(default_factory=list)


def masked_ce_loss(params, ids, mask, config: ModelConfig, batch_size: int = 64) -> float:
    """Forward-only mean masked cross-entropy, batched over rows."""
    total = 0.0
    count = 0
    for lo in range(0, ids.shape[0], batch_size):
        sl = slice(lo, lo + batch_size)
        logits = forward(params, ids[sl], config)
        logp = log_softmax(logits)
        picked = np.take_along_axis(
            logp[:, :-1, :], np.asarray(ids[sl])[:, 1:, None].astype(np.int64), axis=-1)[..., 0]
        m = np.asarray(mask[sl], dtype=bool)[:, 1:]
        total += float(-picked[m].sum())
        count += int(m.sum())
    return total / count


def train_sft(records_train, records_val, model_config: ModelConfig,
              sft_config: SftConfig, vocab: Vocabulary, *,
              eval_interval: int = 200, eval_max_new: int = 186,
              eval_limit: int | None = None, eval_batch: int = 64,
              log=None) -> SftResult:
    """Train from a fresh seeded init; returns the best-by-validation params.

    Metrics rows are {step, split, loss, cell_accuracy}; train rows carry the
    batch loss, val rows carry teacher-forced loss and greedy cell accuracy.
    """
    records_train = list(records_train)
    records_val = list(records_val)
    if not records_train or not records_val:
        raise InputError("training requires non-empty train and val splits")
    val_eval = records_val if eval_limit is None else records_val[:eval_limit]

    encoded = [encode(rec, sft_config.order_variant, vocab) for rec in records_train]
    ids_all = np.stack([seq.ids for seq in encoded])
    mask_all = np.stack([seq.loss_mask for seq in encoded])
    val_encoded = [encode(rec, sft_config.order_variant, vocab) for rec in records_val]
    val_ids = np.stack([seq.ids for seq in val_encoded])
    val_mask = np.stack([seq.loss_mask for seq in val_encoded])

    params = init_params(model_config, derive_rng(sft_config.seed, "init"))
    opt = AdamW(lr=sft_config.lr, weight_decay=sft_config.weight_decay)
    batch_rng = derive_rng(sft_config.seed, "batches")

    metrics: list[dict] = []
    best_acc = -1.0
    best_step = 0
    best_params = copy.deepcopy(params)
    stale = 0
    steps_run = 0

    def run_eval(step: int) -> float:
        report = evaluate(params, model_config, vocab, val_eval,
                          max_new=eval_max_new, batch_size=eval_batch)
        vloss = masked_ce_loss(params, val_ids, val_mask, model_config, eval_batch)
        row = {"step": step, "split": "val", "loss": vloss,
               "cell_accuracy": report.cell_accuracy}
        metrics.append(row)
        if log:
            log(row)
        return report.cell_accuracy

    acc = run_eval(0)
    if acc > best_acc:
        best_acc, best_step = acc, 0
        best_params = copy.deepcopy(params)

    for step in range(1, sft_config.max_steps + 1):
        idx = batch_rng.integers(0, len(records_train), size=sft_config.batch_size)
        loss, grads = loss_and_grads(params, ids_all[idx], mask_all[idx], model_config)
        opt.step(params, grads)
        steps_run = step
        row = {"step": step, "split": "train", "loss": loss, "cell_accuracy": None}
        metrics.append(row)
        if log:
            log(row)
        if step % eval_interval == 0:
            acc = run_eval(step)
            if acc > best_acc:
                best_acc, best_step = acc, step
                best_params = copy.deepcopy(params)
                stale = 0
            else:
                stale += 1
                if stale >= sft_config.patience:
                    break

    return SftResult(params=best_params, best_step=best_step,
                     best_val_accuracy=best_acc, steps_run=steps_run, metrics=metrics)
