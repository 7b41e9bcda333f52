"""Operator entry point: reproducible batch commands over the whole pipeline.

Every command is deterministic given its flags and seed, writes a manifest
recording resolved flags plus input and output hashes, and exits with 0 on
success, 2 on input errors, 3 on numerical failure, 4 on provenance mismatch.

Config files are flat ``key = value`` text; lines starting with # are
comments.  Precedence: command-line flag > config file > built-in default.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import checkpoint as ckpt_io
from . import dataset, evaluate, grpo, manifest, rewards, sft
from .codec import Vocabulary, max_sequence_length
from .errors import InputError, SudorlError
from .model import ModelConfig

DESK_MODEL = {"n_layers": 4, "n_heads": 4, "d_model": 128}
PAPER_MODEL = {"n_layers": 8, "n_heads": 8, "d_model": 512}
PAPER_BATCH = 128


def required_max_seq_len(side: int, max_new: int) -> int:
    """Positions needed for full teacher forcing and prompt + generation."""
    return max(max_sequence_length(side), 3 * side * side + 2 + max_new)


def _catching(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SudorlError as err:
            click.echo(f"{err.error_class}: {err}", err=True)
            sys.exit(err.exit_code)
    return wrapper


def parse_config_file(path, allowed: dict) -> dict:
    """Flat key = value lines; unknown keys and bad values are input errors."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc}") from exc
    values: dict = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise InputError(f"{path}:{line_no}: expected 'key = value', got {raw!r}")
        key = key.strip()
        value = value.strip()
        if key not in allowed:
            raise InputError(f"{path}:{line_no}: unknown config key {key!r} "
                             f"(known: {', '.join(sorted(allowed))})")
        try:
            values[key] = allowed[key](value)
        except ValueError as exc:
            raise InputError(f"{path}:{line_no}: bad value for {key}: {exc}") from exc
    return values


def _pick(cli_value, file_vals: dict, key: str, default):
    """Flag > config file > default; flags use None for 'not given'."""
    if cli_value is not None:
        return cli_value
    if key in file_vals:
        return file_vals[key]
    return default


MODEL_KEYS = {"n_layers": int, "n_heads": int, "d_model": int}
SFT_KEYS = {**MODEL_KEYS, "lr": float, "batch_size": int, "weight_decay": float,
            "patience": int, "max_steps": int, "seed": int, "eval_interval": int,
            "eval_limit": int, "max_new": int}
GRPO_KEYS = {**MODEL_KEYS, "group_size": int, "lr": float, "kl_beta": float,
             "clip_eps": float, "max_new_tokens": int, "batch_prompts": int,
             "steps": int, "alpha": float, "temperature": float, "seed": int,
             "eval_interval": int, "val_limit": int}


def _load_data(data_dir, *splits):
    meta = dataset.read_meta(data_dir)
    side = int(meta["side"])
    loaded = {s: dataset.load_split(data_dir, s) for s in splits}
    return meta, side, loaded


def _data_hashes(data_dir, *splits) -> dict[str, str]:
    data_dir = Path(data_dir)
    paths = [data_dir / f"{s}.jsonl" for s in splits] + [data_dir / "meta.json"]
    return {str(p): manifest.sha256_file(p) for p in paths}


def _write_metrics(path, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


@click.group()
def main():
    """Ordering-sensitive reward experiments on Sudoku trajectory data."""


@main.command("gen-data")
@click.option("--n-train", type=int, default=2000, show_default=True)
@click.option("--n-val", type=int, default=512, show_default=True)
@click.option("--n-test", type=int, default=512, show_default=True)
@click.option("--givens-min", type=int, default=28, show_default=True)
@click.option("--givens-max", type=int, default=40, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--side", type=int, default=9, show_default=True,
              help="Board side; must be a perfect square (4 or 9).")
@click.option("--out", "out_dir", required=True, type=click.Path())
@_catching
def gen_data(n_train, n_val, n_test, givens_min, givens_max, seed, side, out_dir):
    """Generate a unique-solution puzzle corpus with both move orderings."""
    config = dataset.CorpusConfig(n_train=n_train, n_val=n_val, n_test=n_test,
                                  givens_min=givens_min, givens_max=givens_max,
                                  seed=seed, side=side)
    paths = dataset.build_corpus(config, out_dir)
    vocab_path = Path(out_dir) / "vocab.txt"
    vocab_path.write_text(Vocabulary(side).dump(), encoding="utf-8")
    outputs = {str(p): manifest.sha256_file(p) for p in list(paths.values()) + [vocab_path]}
    manifest.write_manifest(
        Path(out_dir) / "manifest.json", command="gen-data",
        flags={"n_train": n_train, "n_val": n_val, "n_test": n_test,
               "givens_min": givens_min, "givens_max": givens_max,
               "side": side, "out": str(out_dir)},
        seed=seed, inputs={}, outputs=outputs)
    click.echo(f"wrote corpus to {out_dir} "
               f"({n_train} train / {n_val} val / {n_test} test, side {side})")


@main.command("sft")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--order", "order_variant", required=True,
              type=click.Choice(["solver", "random"]))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--lr", type=float, default=None, help="Default 5e-5 random / 1e-5 solver.")
@click.option("--batch-size", type=int, default=None)
@click.option("--weight-decay", type=float, default=None)
@click.option("--patience", type=int, default=None)
@click.option("--max-steps", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--eval-interval", type=int, default=None)
@click.option("--eval-limit", type=int, default=None,
              help="Cap on validation records greedy-decoded per eval.")
@click.option("--max-new", type=int, default=None,
              help="Generation budget the model must leave room for.")
@click.option("--paper-scale", is_flag=True,
              help="8 layers / 8 heads / d_model 512, batch 128.")
@_catching
def sft_cmd(data_dir, order_variant, config_path, out_path, lr, batch_size, weight_decay,
            patience, max_steps, seed, eval_interval, eval_limit, max_new, paper_scale):
    """Train on one ordering variant; keeps the best-by-validation checkpoint."""
    file_vals = parse_config_file(config_path, SFT_KEYS) if config_path else {}
    model_base = PAPER_MODEL if paper_scale else DESK_MODEL
    batch_default = PAPER_BATCH if paper_scale else 32
    n_layers = _pick(None, file_vals, "n_layers", model_base["n_layers"])
    n_heads = _pick(None, file_vals, "n_heads", model_base["n_heads"])
    d_model = _pick(None, file_vals, "d_model", model_base["d_model"])
    cfg = sft.SftConfig(
        order_variant=order_variant,
        lr=_pick(lr, file_vals, "lr", sft.default_lr(order_variant)),
        batch_size=_pick(batch_size, file_vals, "batch_size", batch_default),
        weight_decay=_pick(weight_decay, file_vals, "weight_decay", 0.01),
        patience=_pick(patience, file_vals, "patience", 10),
        max_steps=_pick(max_steps, file_vals, "max_steps", 10000),
        seed=_pick(seed, file_vals, "seed", 0),
    )
    eval_interval = _pick(eval_interval, file_vals, "eval_interval", 200)
    eval_limit = _pick(eval_limit, file_vals, "eval_limit", None)
    max_new = _pick(max_new, file_vals, "max_new", 186)

    meta, side, splits = _load_data(data_dir, "train", "val")
    vocab = Vocabulary(side)
    model_config = ModelConfig(
        n_layers=n_layers, n_heads=n_heads, d_model=d_model, vocab_size=vocab.size,
        max_seq_len=required_max_seq_len(side, max_new), seed=cfg.seed)

    result = sft.train_sft(splits["train"], splits["val"], model_config, cfg, vocab,
                           eval_interval=eval_interval, eval_max_new=max_new,
                           eval_limit=eval_limit,
                           log=lambda row: click.echo(json.dumps(row, sort_keys=True)))

    out_path = Path(out_path)
    ckpt_io.save_checkpoint(
        out_path, result.params, model_config, step=result.best_step,
        vocab_hash=vocab.sha256(),
        extra={"phase": "sft", "order_variant": order_variant,
               "best_val_accuracy": result.best_val_accuracy,
               "steps_run": result.steps_run})
    metrics_path = Path(f"{out_path}.metrics.jsonl")
    _write_metrics(metrics_path, result.metrics)
    manifest.write_manifest(
        Path(f"{out_path}.manifest.json"), command="sft",
        flags={"data": str(data_dir), "order": order_variant,
               "config": str(config_path) if config_path else None,
               "out": str(out_path), "lr": cfg.lr, "batch_size": cfg.batch_size,
               "weight_decay": cfg.weight_decay, "patience": cfg.patience,
               "max_steps": cfg.max_steps, "eval_interval": eval_interval,
               "eval_limit": eval_limit, "max_new": max_new,
               "n_layers": n_layers, "n_heads": n_heads, "d_model": d_model,
               "paper_scale": paper_scale},
        seed=cfg.seed,
        inputs=_data_hashes(data_dir, "train", "val"),
        outputs={str(out_path): manifest.sha256_file(out_path),
                 str(metrics_path): manifest.sha256_file(metrics_path)})
    click.echo(f"best step {result.best_step} val cell accuracy "
               f"{result.best_val_accuracy:.4f} -> {out_path}")


@main.command("bootstrap-scales")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--alpha", type=float, required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--temperature", type=float, default=None)
@click.option("--max-new", type=int, default=None)
@_catching
def bootstrap_cmd(ckpt_path, data_dir, alpha, config_path, out_path, seed, temperature, max_new):
    """Calibrate frozen reward scales on the validation split."""
    file_vals = parse_config_file(config_path, GRPO_KEYS) if config_path else {}
    seed = _pick(seed, file_vals, "seed", 0)
    temperature = _pick(temperature, file_vals, "temperature", 1.0)
    max_new = _pick(max_new, file_vals, "max_new_tokens", 186)

    ckpt = ckpt_io.load_checkpoint(ckpt_path)
    meta, side, splits = _load_data(data_dir, "val")
    vocab = Vocabulary(side)
    evaluate.check_vocab(ckpt, vocab)
    ckpt_hash = manifest.sha256_file(ckpt_path)
    val_path = Path(data_dir) / "val.jsonl"
    val_hash = manifest.sha256_file(val_path)

    scales = rewards.bootstrap_scales(
        ckpt.params, ckpt.config, vocab, splits["val"], alpha=alpha, seed=seed,
        max_new=max_new, temperature=temperature,
        checkpoint_sha256=ckpt_hash, val_sha256=val_hash)
    scales.save(out_path)
    manifest.write_manifest(
        Path(f"{out_path}.manifest.json"), command="bootstrap-scales",
        flags={"ckpt": str(ckpt_path), "data": str(data_dir), "alpha": alpha,
               "config": str(config_path) if config_path else None,
               "out": str(out_path), "temperature": temperature, "max_new": max_new},
        seed=seed,
        inputs={str(ckpt_path): ckpt_hash, str(val_path): val_hash},
        outputs={str(out_path): manifest.sha256_file(out_path)})
    click.echo(f"alpha {alpha:g}: mean_cell {scales.mean_cell:.4f} "
               f"mean_order {scales.mean_order:.4f} cell_scale {scales.cell_scale:.4f} "
               f"order_scale {scales.order_scale:.4f} -> {out_path}")


def _grpo_config(file_vals, **cli):
    return grpo.GrpoConfig(
        group_size=_pick(cli.get("group_size"), file_vals, "group_size", 8),
        lr=_pick(cli.get("lr"), file_vals, "lr", 1e-5),
        kl_beta=_pick(cli.get("kl_beta"), file_vals, "kl_beta", 0.01),
        clip_eps=_pick(cli.get("clip_eps"), file_vals, "clip_eps", 0.2),
        max_new_tokens=_pick(cli.get("max_new"), file_vals, "max_new_tokens", 186),
        batch_prompts=_pick(cli.get("batch_prompts"), file_vals, "batch_prompts", 4),
        steps=_pick(cli.get("steps"), file_vals, "steps", 300),
        alpha=_pick(cli.get("alpha"), file_vals, "alpha", 0.75),
        temperature=_pick(cli.get("temperature"), file_vals, "temperature", 1.0),
        seed=_pick(cli.get("seed"), file_vals, "seed", 0),
    )


@main.command("grpo")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--scales", "scales_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--group-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--kl-beta", type=float, default=None)
@click.option("--clip-eps", type=float, default=None)
@click.option("--max-new", type=int, default=None)
@click.option("--batch-prompts", type=int, default=None)
@click.option("--steps", type=int, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--temperature", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--eval-interval", type=int, default=None)
@click.option("--val-limit", type=int, default=None)
@_catching
def grpo_cmd(ckpt_path, scales_path, data_dir, config_path, out_path, **cli):
    """Post-train an SFT checkpoint under frozen, calibrated reward scales."""
    file_vals = parse_config_file(config_path, GRPO_KEYS) if config_path else {}
    eval_interval = _pick(cli.pop("eval_interval"), file_vals, "eval_interval", 25)
    val_limit = _pick(cli.pop("val_limit"), file_vals, "val_limit", 128)
    scales = rewards.RewardScales.load(scales_path)
    if cli.get("alpha") is None and "alpha" not in file_vals:
        cli["alpha"] = scales.alpha
    config = _grpo_config(file_vals, **cli)

    ckpt = ckpt_io.load_checkpoint(ckpt_path)
    ckpt_hash = manifest.sha256_file(ckpt_path)
    meta, side, splits = _load_data(data_dir, "train", "val")
    vocab = Vocabulary(side)
    val_hash = manifest.sha256_file(Path(data_dir) / "val.jsonl")

    result = grpo.run_grpo(ckpt, splits["train"], splits["val"], config, vocab, scales,
                           ckpt_sha256=ckpt_hash, val_sha256=val_hash,
                           eval_interval=eval_interval, val_limit=val_limit,
                           log=lambda row: click.echo(json.dumps(row, sort_keys=True)))

    out_path = Path(out_path)
    common = dict(vocab_hash=vocab.sha256(),
                  extra={"phase": "grpo", "alpha": config.alpha,
                         "scales_checkpoint_sha256": scales.checkpoint_sha256})
    ckpt_io.save_checkpoint(out_path, result.final_params, ckpt.config,
                            step=config.steps, **common)
    best_path = Path(f"{out_path}.best")
    ckpt_io.save_checkpoint(best_path, result.best_params, ckpt.config,
                            step=result.best_step, **common)
    metrics_path = Path(f"{out_path}.metrics.jsonl")
    _write_metrics(metrics_path, result.metrics)
    manifest.write_manifest(
        Path(f"{out_path}.manifest.json"), command="grpo",
        flags={"ckpt": str(ckpt_path), "scales": str(scales_path),
               "data": str(data_dir),
               "config": str(config_path) if config_path else None,
               "out": str(out_path), "group_size": config.group_size,
               "lr": config.lr, "kl_beta": config.kl_beta,
               "clip_eps": config.clip_eps, "max_new_tokens": config.max_new_tokens,
               "batch_prompts": config.batch_prompts, "steps": config.steps,
               "alpha": config.alpha, "temperature": config.temperature,
               "eval_interval": eval_interval, "val_limit": val_limit},
        seed=config.seed,
        inputs={str(ckpt_path): ckpt_hash, str(scales_path): manifest.sha256_file(scales_path),
                **_data_hashes(data_dir, "train", "val")},
        outputs={str(out_path): manifest.sha256_file(out_path),
                 str(best_path): manifest.sha256_file(best_path),
                 str(metrics_path): manifest.sha256_file(metrics_path)})
    click.echo(f"{config.steps} steps done; best val cell accuracy "
               f"{result.best_val_accuracy:.4f} at step {result.best_step} -> {out_path}")


@main.command("eval")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--split", type=click.Choice(list(dataset.SPLITS)), default="test",
              show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--max-new", type=int, default=186, show_default=True)
@click.option("--limit", type=int, default=None, help="Evaluate only the first N records.")
@click.option("--batch-size", type=int, default=64, show_default=True)
@_catching
def eval_cmd(ckpt_path, data_dir, split, out_path, max_new, limit, batch_size):
    """Greedy-decode a split and report cell and ordering metrics."""
    ckpt = ckpt_io.load_checkpoint(ckpt_path)
    meta, side, splits = _load_data(data_dir, split)
    vocab = Vocabulary(side)
    report = evaluate.evaluate_checkpoint(ckpt, vocab, splits[split], max_new=max_new,
                                          batch_size=batch_size, limit=limit)
    evaluate.write_report(out_path, report)
    split_path = Path(data_dir) / f"{split}.jsonl"
    manifest.write_manifest(
        Path(f"{out_path}.manifest.json"), command="eval",
        flags={"ckpt": str(ckpt_path), "data": str(data_dir), "split": split,
               "out": str(out_path), "max_new": max_new, "limit": limit,
               "batch_size": batch_size},
        seed=None,
        inputs={str(ckpt_path): manifest.sha256_file(ckpt_path),
                str(split_path): manifest.sha256_file(split_path)},
        outputs={str(out_path): manifest.sha256_file(out_path)})
    click.echo(report.summary())


@main.command("sweep")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--alphas", default="0,0.25,0.5,0.75,1", show_default=True)
@click.option("--solver-ckpt", "solver_path", type=click.Path(exists=True, dir_okay=False),
              help="Solver-order SFT checkpoint for the second baseline row; "
                   "defaults to --ckpt.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--group-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--kl-beta", type=float, default=None)
@click.option("--clip-eps", type=float, default=None)
@click.option("--max-new", type=int, default=None)
@click.option("--batch-prompts", type=int, default=None)
@click.option("--steps", type=int, default=None)
@click.option("--temperature", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--val-limit", type=int, default=None)
@_catching
def sweep_cmd(ckpt_path, data_dir, alphas, solver_path, config_path, out_dir, **cli):
    """Run the full mixture-weight sweep and emit the comparison table."""
    try:
        alpha_list = tuple(float(a) for a in alphas.split(","))
    except ValueError as exc:
        raise InputError(f"bad --alphas list {alphas!r}: {exc}") from exc
    if not alpha_list:
        raise InputError("--alphas must name at least one mixture weight")
    file_vals = parse_config_file(config_path, GRPO_KEYS) if config_path else {}
    val_limit = _pick(cli.pop("val_limit"), file_vals, "val_limit", 128)
    config = _grpo_config(file_vals, **cli)

    ckpt = ckpt_io.load_checkpoint(ckpt_path)
    ckpt_hash = manifest.sha256_file(ckpt_path)
    solver_ckpt = ckpt_io.load_checkpoint(solver_path) if solver_path else None
    meta, side, splits = _load_data(data_dir, "train", "val", "test")
    vocab = Vocabulary(side)
    val_hash = manifest.sha256_file(Path(data_dir) / "val.jsonl")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs: dict[str, str] = {}

    def per_alpha_hook(alpha, scales, result):
        sub = out_dir / f"alpha_{alpha:g}"
        sub.mkdir(parents=True, exist_ok=True)
        scales.save(sub / "scales.json")
        common = dict(vocab_hash=vocab.sha256(),
                      extra={"phase": "grpo", "alpha": alpha,
                             "scales_checkpoint_sha256": scales.checkpoint_sha256})
        ckpt_io.save_checkpoint(sub / "final.ckpt", result.final_params, ckpt.config,
                                step=config.steps, **common)
        ckpt_io.save_checkpoint(sub / "best.ckpt", result.best_params, ckpt.config,
                                step=result.best_step, **common)
        _write_metrics(sub / "metrics.jsonl", result.metrics)
        for name in ("scales.json", "final.ckpt", "best.ckpt", "metrics.jsonl"):
            outputs[str(sub / name)] = manifest.sha256_file(sub / name)

    report = grpo.sweep_alpha(ckpt, splits["train"], splits["val"], splits["test"],
                              config, vocab, alphas=alpha_list, solver_ckpt=solver_ckpt,
                              ckpt_sha256=ckpt_hash, val_sha256=val_hash,
                              val_limit=val_limit, per_alpha_hook=per_alpha_hook,
                              log=lambda row: click.echo(json.dumps(row, sort_keys=True)))

    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out_dir / "report.txt").write_text(report.to_table(), encoding="utf-8")
    outputs[str(out_dir / "report.json")] = manifest.sha256_file(out_dir / "report.json")
    outputs[str(out_dir / "report.txt")] = manifest.sha256_file(out_dir / "report.txt")
    inputs = {str(ckpt_path): ckpt_hash, **_data_hashes(data_dir, "train", "val", "test")}
    if solver_path:
        inputs[str(solver_path)] = manifest.sha256_file(solver_path)
    manifest.write_manifest(
        out_dir / "manifest.json", command="sweep",
        flags={"ckpt": str(ckpt_path), "data": str(data_dir), "alphas": alphas,
               "solver_ckpt": str(solver_path) if solver_path else None,
               "config": str(config_path) if config_path else None,
               "out": str(out_dir), "group_size": config.group_size, "lr": config.lr,
               "kl_beta": config.kl_beta, "clip_eps": config.clip_eps,
               "max_new_tokens": config.max_new_tokens,
               "batch_prompts": config.batch_prompts, "steps": config.steps,
               "temperature": config.temperature, "val_limit": val_limit},
        seed=config.seed, inputs=inputs, outputs=outputs)
    click.echo(report.to_table(), nl=False)


if __name__ == "__main__":
    main()
