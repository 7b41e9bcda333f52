"""Group-relative policy optimization against a frozen reference model.

Each step samples G completions per prompt, scores them with the frozen
reward scales, normalizes rewards within the group into advantages, and takes
one clipped policy-gradient step with a per-token KL penalty toward the
reference.  A single optimization epoch per batch keeps the behavior policy
equal to the current policy at update time.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint
from .codec import PAD, Vocabulary, decode_completion, encode
from .errors import InputError, ProvenanceError
from .evaluate import evaluate
from .model import ModelConfig, backward, forward, log_softmax, sample_batch, token_logprobs
from .optim import AdamW
from .rewards import RewardBreakdown, RewardScales
from .seeding import derive_rng

ADV_EPS = 1e-8


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 8
    lr: float = 1e-5
    kl_beta: float = 0.01
    clip_eps: float = 0.2
    max_new_tokens: int = 186
    batch_prompts: int = 4
    steps: int = 300
    alpha: float = 0.75
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.group_size < 2:
            raise InputError(f"group_size must be >= 2, got {self.group_size}")
        if self.kl_beta < 0:
            raise InputError(f"kl_beta must be >= 0, got {self.kl_beta}")
        if self.clip_eps <= 0:
            raise InputError(f"clip_eps must be > 0, got {self.clip_eps}")
        if self.temperature <= 0:
            raise InputError(f"temperature must be > 0, got {self.temperature}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InputError(f"alpha must lie in [0, 1], got {self.alpha}")
        if min(self.max_new_tokens, self.batch_prompts) < 1 or self.steps < 0 or self.lr < 0:
            raise InputError("max_new_tokens/batch_prompts must be >= 1, steps/lr >= 0")


@dataclass
class Rollout:
    """One sampled completion: tokens, behavior log-probs, scored rewards."""

    ids: np.ndarray            # prompt + completion, unpadded
    prompt_len: int
    logprobs: np.ndarray       # behavior log-prob per completion token
    breakdown: RewardBreakdown
    advantage: float = 0.0

    @property
    def completion(self) -> np.ndarray:
        return self.ids[self.prompt_len:]


@dataclass
class RolloutGroup:
    prompt_id: str
    rollouts: list[Rollout] = field(default_factory=list)


def compute_advantages(rewards) -> list[float]:
    """(r - mean) / (population std + 1e-8); all zeros when variance is zero."""
    r = np.asarray(list(rewards), dtype=np.float64)
    if r.size < 2:
        raise InputError(f"advantage normalization needs >= 2 rewards, got {r.size}")
    std = float(r.std())
    if std == 0.0:
        return [0.0] * r.size
    mean = float(r.mean())
    return [float((x - mean) / (std + ADV_EPS)) for x in r]


def generate_group(params, model_config: ModelConfig, config: GrpoConfig, record,
                   vocab: Vocabulary, scales: RewardScales, *, step_tag: int = 0) -> RolloutGroup:
    """G stochastic rollouts for one prompt, scored and advantage-normalized.

    Deterministic given (seed, prompt id, rollout index, step_tag): each
    rollout draws from its own derived stream, so results do not depend on
    how prompts are batched.  Behavior log-probs are recomputed with the
    batched training-path forward so the ratio at update time is exactly 1.
    """
    seq = encode(record, "solver", vocab)
    prompt = seq.ids[:seq.prompt_len]
    g = config.group_size
    rngs = [derive_rng(config.seed, "rollout", record.id, i, step_tag) for i in range(g)]
    comps = sample_batch(params, model_config, np.tile(prompt, (g, 1)),
                         mode="categorical", temperature=config.temperature,
                         rngs=rngs, max_new=config.max_new_tokens)

    plen = len(prompt)
    width = plen + max(len(c) for c in comps)
    padded = np.full((g, width), PAD, dtype=np.int64)
    padded[:, :plen] = prompt
    for i, comp in enumerate(comps):
        padded[i, plen:plen + len(comp)] = comp
    lp_all = token_logprobs(params, padded, model_config)

    group = RolloutGroup(prompt_id=record.id)
    for i, comp in enumerate(comps):
        predicted = decode_completion(comp, vocab)
        breakdown = scales.breakdown(record.solver_order, predicted)
        group.rollouts.append(Rollout(
            ids=np.concatenate([prompt, comp]).astype(np.int32),
            prompt_len=plen,
            logprobs=lp_all[i, plen:plen + len(comp)].astype(np.float64),
            breakdown=breakdown,
        ))
    for rollout, adv in zip(group.rollouts,
                            compute_advantages([r.breakdown.r_total for r in group.rollouts])):
        rollout.advantage = adv
    return group


def grpo_step(params, ref_params, opt: AdamW, groups: list[RolloutGroup],
              model_config: ModelConfig, config: GrpoConfig) -> dict:
    """One clipped policy-gradient update over the rollouts of `groups`.

    Per-token loss: -min(rho·a, clip(rho, 1-eps, 1+eps)·a) + beta·kl, with
    kl = exp(lp_ref - lp) - (lp_ref - lp) - 1.  Averaged over each rollout's
    completion tokens, then over rollouts.  Returns step metrics.
    """
    rollouts = [r for grp in groups for r in grp.rollouts]
    if not rollouts:
        raise InputError("grpo_step needs at least one rollout")
    n = len(rollouts)
    width = max(len(r.ids) for r in rollouts)
    ids = np.full((n, width), PAD, dtype=np.int64)
    mask = np.zeros((n, width), dtype=bool)
    beh = np.zeros((n, width), dtype=np.float64)
    adv = np.zeros((n, width), dtype=np.float64)
    inv_t = np.zeros((n, 1), dtype=np.float64)
    for i, r in enumerate(rollouts):
        t_i = len(r.ids) - r.prompt_len
        if t_i < 1:
            raise InputError("rollout has an empty completion")
        ids[i, :len(r.ids)] = r.ids
        mask[i, r.prompt_len:len(r.ids)] = True
        beh[i, r.prompt_len:len(r.ids)] = r.logprobs
        adv[i, r.prompt_len:len(r.ids)] = r.advantage
        inv_t[i, 0] = 1.0 / t_i

    logits, cache = forward(params, ids, model_config, want_cache=True)
    logp = log_softmax(logits)
    lp_cur = np.zeros((n, width), dtype=np.float64)
    lp_cur[:, 1:] = np.take_along_axis(logp[:, :-1, :], ids[:, 1:, None], axis=-1)[..., 0]
    lp_ref_full = token_logprobs(ref_params, ids, model_config).astype(np.float64)

    rho = np.exp(lp_cur - beh)
    unclipped = rho * adv
    clipped = np.clip(rho, 1.0 - config.clip_eps, 1.0 + config.clip_eps) * adv
    take_clipped = clipped < unclipped
    pg = -np.where(take_clipped, clipped, unclipped)
    diff = lp_ref_full - lp_cur
    kl = np.exp(diff) - diff - 1.0

    weights = inv_t / n
    loss = float((((pg + config.kl_beta * kl) * mask) * weights).sum())
    mean_kl = float(((kl * mask) * inv_t).sum() / n)
    clip_fraction = float(take_clipped[mask].mean())

    # d(loss)/d(lp) per completion token; when the clipped branch is taken the
    # ratio sits strictly outside the clip interval, so its derivative is 0
    dlp = np.where(take_clipped, 0.0, -adv * rho) + config.kl_beta * (1.0 - np.exp(diff))
    dlp = dlp * mask * weights

    # route through log-softmax: d lp[y] / d logits[k] = delta(k, y) - p[k]
    w = dlp[:, 1:, None].astype(logits.dtype)
    probs = np.exp(logp[:, :-1, :])
    dlogits = -w * probs
    idx = ids[:, 1:, None]
    np.put_along_axis(dlogits, idx,
                      np.take_along_axis(dlogits, idx, axis=-1) + w, axis=-1)
    full = np.zeros_like(logits)
    full[:, :-1, :] = dlogits
    grads = backward(params, model_config, cache, full)
    opt.step(params, grads)

    breakdowns = [r.breakdown for r in rollouts]
    return {
        "loss": loss,
        "mean_r_cell": float(np.mean([b.r_cell for b in breakdowns])),
        "mean_r_order": float(np.mean([b.r_order for b in breakdowns])),
        "mean_r_total": float(np.mean([b.r_total for b in breakdowns])),
        "mean_kl": mean_kl,
        "clip_fraction": clip_fraction,
    }


@dataclass
class GrpoResult:
    final_params: dict[str, np.ndarray]
    best_params: dict[str, np.ndarray]
    best_step: int
    best_val_accuracy: float
    metrics: list[dict] = field(default_factory=list)


def run_grpo(ckpt: Checkpoint, records_train, records_val, config: GrpoConfig,
             vocab: Vocabulary, scales: RewardScales, *, ckpt_sha256: str = "",
             val_sha256: str = "", eval_interval: int = 25,
             val_limit: int | None = 128, eval_batch: int = 64,
             log=None) -> GrpoResult:
    """Post-train from an SFT checkpoint under the frozen reward scales.

    Refuses to start when the scales' provenance hashes disagree with the
    checkpoint or validation data actually supplied.  The reference policy is
    a frozen copy of the input checkpoint; the input is never mutated.
    """
    if scales.checkpoint_sha256 and ckpt_sha256 and scales.checkpoint_sha256 != ckpt_sha256:
        raise ProvenanceError(
            f"reward scales were calibrated on checkpoint {scales.checkpoint_sha256[:12]} "
            f"but this run loads {ckpt_sha256[:12]}")
    if scales.val_sha256 and val_sha256 and scales.val_sha256 != val_sha256:
        raise ProvenanceError(
            f"reward scales were calibrated on validation data {scales.val_sha256[:12]} "
            f"but this run loads {val_sha256[:12]}")
    if ckpt.vocab_hash and ckpt.vocab_hash != vocab.sha256():
        raise ProvenanceError(
            f"checkpoint vocabulary hash {ckpt.vocab_hash[:12]} does not match "
            f"data vocabulary hash {vocab.sha256()[:12]}")
    if abs(scales.alpha - config.alpha) > 1e-12:
        raise ProvenanceError(
            f"scales were calibrated for alpha={scales.alpha} but config requests "
            f"alpha={config.alpha}")

    records_train = list(records_train)
    records_val = list(records_val)
    if not records_train or not records_val:
        raise InputError("GRPO requires non-empty train and val splits")
    val_eval = records_val if val_limit is None else records_val[:val_limit]

    params = copy.deepcopy(ckpt.params)
    ref_params = copy.deepcopy(ckpt.params)
    opt = AdamW(lr=config.lr)
    prompt_rng = derive_rng(config.seed, "prompts")

    metrics: list[dict] = []
    best_acc = -1.0
    best_step = 0
    best_params = copy.deepcopy(params)

    for step in range(1, config.steps + 1):
        idx = prompt_rng.integers(0, len(records_train), size=config.batch_prompts)
        groups = [generate_group(params, ckpt.config, config, records_train[i],
                                 vocab, scales, step_tag=step) for i in idx]
        step_metrics = grpo_step(params, ref_params, opt, groups, ckpt.config, config)
        row = {"step": step, "alpha": config.alpha,
               "mean_r_cell": step_metrics["mean_r_cell"],
               "mean_r_order": step_metrics["mean_r_order"],
               "mean_r_total": step_metrics["mean_r_total"],
               "mean_kl": step_metrics["mean_kl"],
               "clip_fraction": step_metrics["clip_fraction"]}
        if step % eval_interval == 0 or step == config.steps:
            report = evaluate(params, ckpt.config, vocab, val_eval,
                              max_new=config.max_new_tokens, batch_size=eval_batch)
            row["val_cell_accuracy"] = report.cell_accuracy
            if report.cell_accuracy > best_acc:
                best_acc = report.cell_accuracy
                best_step = step
                best_params = copy.deepcopy(params)
        metrics.append(row)
        if log:
            log(row)

    if best_acc < 0:
        best_params = copy.deepcopy(params)
        best_acc = float("nan")
    return GrpoResult(final_params=params, best_params=best_params, best_step=best_step,
                      best_val_accuracy=best_acc, metrics=metrics)


@dataclass
class SweepRow:
    label: str
    alpha: float | None
    test_cell_accuracy: float


@dataclass
class SweepReport:
    rows: list[SweepRow] = field(default_factory=list)

    def to_json(self) -> str:
        import json
        return json.dumps({"rows": [dataclasses.asdict(r) for r in self.rows]},
                          sort_keys=True, indent=2) + "\n"

    def to_table(self) -> str:
        lines = [f"{'mixture':<14}{'test cell accuracy':>20}"]
        for r in self.rows:
            lines.append(f"{r.label:<14}{r.test_cell_accuracy:>20.4f}")
        return "\n".join(lines) + "\n"


def sweep_alpha(ckpt: Checkpoint, records_train, records_val, records_test,
                config: GrpoConfig, vocab: Vocabulary, *,
                alphas=(0.0, 0.25, 0.5, 0.75, 1.0), solver_ckpt: Checkpoint | None = None,
                ckpt_sha256: str = "", val_sha256: str = "", bootstrap_max_new: int = 186,
                eval_batch: int = 64, val_limit: int | None = 128, log=None,
                per_alpha_hook=None) -> SweepReport:
    """One calibration plus GRPO run per mixture weight, from one checkpoint.

    Every run starts from the same SFT checkpoint and seed; scales are
    recalibrated per alpha.  The report carries one row per alpha (final
    checkpoint's greedy test cell accuracy) plus the two SFT baselines.
    Baseline rows evaluate the post-trained checkpoint's SFT start and the
    solver-order SFT checkpoint (the start itself when none is supplied).
    """
    records_test = list(records_test)
    if not records_test:
        raise InputError("sweep requires a non-empty test split")
    rows: list[SweepRow] = []
    for alpha in alphas:
        scales = bootstrap_scales_for(ckpt, records_val, alpha=alpha, config=config,
                                      vocab=vocab, ckpt_sha256=ckpt_sha256,
                                      val_sha256=val_sha256,
                                      max_new=bootstrap_max_new)
        run_cfg = dataclasses.replace(config, alpha=alpha)
        result = run_grpo(ckpt, records_train, records_val, run_cfg, vocab, scales,
                          ckpt_sha256=ckpt_sha256, val_sha256=val_sha256,
                          val_limit=val_limit, eval_batch=eval_batch, log=log)
        report = evaluate(result.final_params, ckpt.config, vocab, records_test,
                          max_new=config.max_new_tokens, batch_size=eval_batch)
        rows.append(SweepRow(label=f"alpha={alpha:g}", alpha=float(alpha),
                             test_cell_accuracy=report.cell_accuracy))
        if per_alpha_hook:
            per_alpha_hook(alpha, scales, result)

    base = evaluate(ckpt.params, ckpt.config, vocab, records_test,
                    max_new=config.max_new_tokens, batch_size=eval_batch)
    rows.append(SweepRow(label="sft-random", alpha=None,
                         test_cell_accuracy=base.cell_accuracy))
    solver = solver_ckpt or ckpt
    sbase = evaluate(solver.params, solver.config, vocab, records_test,
                     max_new=config.max_new_tokens, batch_size=eval_batch)
    rows.append(SweepRow(label="sft-solver", alpha=None,
                         test_cell_accuracy=sbase.cell_accuracy))
    return SweepReport(rows=rows)


def bootstrap_scales_for(ckpt: Checkpoint, records_val, *, alpha: float,
                         config: GrpoConfig, vocab: Vocabulary, ckpt_sha256: str = "",
                         val_sha256: str = "", max_new: int = 186) -> RewardScales:
    """Calibrate scales for one alpha with the run's rollout seed."""
    from .rewards import bootstrap_scales
    return bootstrap_scales(ckpt.params, ckpt.config, vocab, records_val, alpha=alpha,
                            seed=config.seed, max_new=max_new,
                            temperature=config.temperature,
                            checkpoint_sha256=ckpt_sha256, val_sha256=val_sha256)
