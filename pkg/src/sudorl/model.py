"""Decoder-only Transformer in numpy with exact hand-derived gradients.

Pre-norm GPT-2-style blocks: learned absolute positions, multi-head causal
attention, GELU MLP with 4x expansion, untied output head.  Training runs in
float32; pass dtype='float64' for finite-difference-grade gradients.  The
backward pass is exact for this architecture (verified against central
differences in the test suite).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import InputError, NumericalError

LN_EPS = 1e-5
_INV_SQRT2 = float(1.0 / np.sqrt(2.0))
_INV_SQRT2PI = float(1.0 / np.sqrt(2.0 * np.pi))


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 4
    n_heads: int = 4
    d_model: int = 128
    vocab_size: int = 23
    max_seq_len: int = 432
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if min(self.n_layers, self.n_heads, self.d_model, self.vocab_size, self.max_seq_len) < 1:
            raise InputError("all model dimensions must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise InputError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.dtype not in ("float32", "float64"):
            raise InputError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)


def param_count(config: ModelConfig) -> int:
    """Closed-form parameter count for the architecture above."""
    d, v, t, n = config.d_model, config.vocab_size, config.max_seq_len, config.n_layers
    per_layer = 12 * d * d + 13 * d
    return 2 * v * d + t * d + n * per_layer + 2 * d


def init_params(config: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """normal(0, 0.02) weights, unit gains, zero biases; fixed draw order."""
    dt = config.np_dtype
    d, v = config.d_model, config.vocab_size

    def w(*shape):
        return rng.normal(0.0, 0.02, size=shape).astype(dt)

    params: dict[str, np.ndarray] = {
        "wte": w(v, d),
        "wpe": w(config.max_seq_len, d),
    }
    for i in range(config.n_layers):
        p = f"layers.{i}."
        params[p + "ln1.g"] = np.ones(d, dtype=dt)
        params[p + "ln1.b"] = np.zeros(d, dtype=dt)
        for name in ("wq", "wk", "wv", "wo"):
            params[p + f"attn.{name}"] = w(d, d)
            params[p + f"attn.b{name[1]}"] = np.zeros(d, dtype=dt)
        params[p + "ln2.g"] = np.ones(d, dtype=dt)
        params[p + "ln2.b"] = np.zeros(d, dtype=dt)
        params[p + "mlp.w1"] = w(d, 4 * d)
        params[p + "mlp.b1"] = np.zeros(4 * d, dtype=dt)
        params[p + "mlp.w2"] = w(4 * d, d)
        params[p + "mlp.b2"] = np.zeros(d, dtype=dt)
    params["lnf.g"] = np.ones(d, dtype=dt)
    params["lnf.b"] = np.zeros(d, dtype=dt)
    params["head.w"] = w(d, v)
    assert sum(a.size for a in params.values()) == param_count(config)
    return params


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def _dgelu(x):
    return 0.5 * (1.0 + erf(x * _INV_SQRT2)) + x * np.exp(-0.5 * x * x) * _INV_SQRT2PI


def _layernorm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + np.asarray(LN_EPS, dtype=x.dtype))
    xhat = xc * inv_std
    return xhat * g + b, (xhat, inv_std)


def _layernorm_backward(dy, g, cache):
    xhat, inv_std = cache
    dg = (dy * xhat).sum(axis=(0, 1))
    db = dy.sum(axis=(0, 1))
    dxhat = dy * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv_std * (dxhat - m1 - xhat * m2)
    return dx, dg, db


def _split_heads(x, n_heads):
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def _softmax_last(x):
    m = np.max(x, axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params, ids, config: ModelConfig, want_cache: bool = False):
    """Logits (B, T, V); logits at position t depend only on ids[:, :t+1]."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    b, t = ids.shape
    if t > config.max_seq_len:
        raise InputError(f"sequence length {t} exceeds max_seq_len {config.max_seq_len}")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise InputError("token id out of vocabulary range")
    dt = config.np_dtype

    x = params["wte"][ids] + params["wpe"][:t]
    causal = np.tril(np.ones((t, t), dtype=bool))
    neg_inf = np.asarray(-np.inf, dtype=dt)
    scale = np.asarray(1.0 / np.sqrt(config.head_dim), dtype=dt)
    layer_caches = []

    for i in range(config.n_layers):
        p = f"layers.{i}."
        a, ln1c = _layernorm(x, params[p + "ln1.g"], params[p + "ln1.b"])
        q = a @ params[p + "attn.wq"] + params[p + "attn.bq"]
        k = a @ params[p + "attn.wk"] + params[p + "attn.bk"]
        v = a @ params[p + "attn.wv"] + params[p + "attn.bv"]
        qh, kh, vh = (_split_heads(z, config.n_heads) for z in (q, k, v))
        scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
        scores = np.where(causal, scores, neg_inf)
        attn = _softmax_last(scores)
        ctx = _merge_heads(attn @ vh)
        out = ctx @ params[p + "attn.wo"] + params[p + "attn.bo"]
        x_mid = x + out

        a2, ln2c = _layernorm(x_mid, params[p + "ln2.g"], params[p + "ln2.b"])
        pre = a2 @ params[p + "mlp.w1"] + params[p + "mlp.b1"]
        h = _gelu(pre)
        x_new = x_mid + h @ params[p + "mlp.w2"] + params[p + "mlp.b2"]

        if want_cache:
            layer_caches.append(dict(a=a, ln1c=ln1c, qh=qh, kh=kh, vh=vh, attn=attn,
                                     ctx=ctx, a2=a2, ln2c=ln2c, pre=pre, h=h))
        x = x_new

    xf, lnfc = _layernorm(x, params["lnf.g"], params["lnf.b"])
    logits = xf @ params["head.w"]
    if want_cache:
        return logits, dict(ids=ids, layers=layer_caches, xf=xf, lnfc=lnfc)
    return logits


def backward(params, config: ModelConfig, cache, dlogits) -> dict[str, np.ndarray]:
    """Gradients for every parameter given d(loss)/d(logits)."""
    ids = cache["ids"]
    b, t = ids.shape
    grads = {name: np.zeros_like(arr) for name, arr in params.items()}

    xf = cache["xf"]
    grads["head.w"] += xf.reshape(-1, xf.shape[-1]).T @ dlogits.reshape(-1, dlogits.shape[-1])
    dxf = dlogits @ params["head.w"].T
    dx, dg, db = _layernorm_backward(dxf, params["lnf.g"], cache["lnfc"])
    grads["lnf.g"] += dg
    grads["lnf.b"] += db

    scale = np.asarray(1.0 / np.sqrt(config.head_dim), dtype=config.np_dtype)
    for i in reversed(range(config.n_layers)):
        p = f"layers.{i}."
        c = cache["layers"][i]

        # MLP block
        dmid = dx
        dm = dx
        grads[p + "mlp.b2"] += dm.sum(axis=(0, 1))
        grads[p + "mlp.w2"] += c["h"].reshape(-1, c["h"].shape[-1]).T @ dm.reshape(-1, dm.shape[-1])
        dh = dm @ params[p + "mlp.w2"].T
        dpre = dh * _dgelu(c["pre"])
        grads[p + "mlp.b1"] += dpre.sum(axis=(0, 1))
        grads[p + "mlp.w1"] += c["a2"].reshape(-1, c["a2"].shape[-1]).T @ dpre.reshape(-1, dpre.shape[-1])
        da2 = dpre @ params[p + "mlp.w1"].T
        dmid2, dg, db = _layernorm_backward(da2, params[p + "ln2.g"], c["ln2c"])
        grads[p + "ln2.g"] += dg
        grads[p + "ln2.b"] += db
        dx_mid = dmid + dmid2

        # Attention block
        dout = dx_mid
        grads[p + "attn.bo"] += dout.sum(axis=(0, 1))
        grads[p + "attn.wo"] += c["ctx"].reshape(-1, c["ctx"].shape[-1]).T @ dout.reshape(-1, dout.shape[-1])
        dctx = _split_heads(dout @ params[p + "attn.wo"].T, config.n_heads)
        dattn = dctx @ c["vh"].transpose(0, 1, 3, 2)
        dvh = c["attn"].transpose(0, 1, 3, 2) @ dctx
        attn = c["attn"]
        dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
        dscores = dscores * scale
        dqh = dscores @ c["kh"]
        dkh = dscores.transpose(0, 1, 3, 2) @ c["qh"]
        dq, dk, dv = (_merge_heads(z) for z in (dqh, dkh, dvh))
        a = c["a"]
        a2d = a.reshape(-1, a.shape[-1])
        da = np.zeros_like(a)
        for name, dz in (("wq", dq), ("wk", dk), ("wv", dv)):
            grads[p + f"attn.{name}"] += a2d.T @ dz.reshape(-1, dz.shape[-1])
            grads[p + f"attn.b{name[1]}"] += dz.sum(axis=(0, 1))
            da += dz @ params[p + f"attn.{name}"].T
        dmid3, dg, db = _layernorm_backward(da, params[p + "ln1.g"], c["ln1c"])
        grads[p + "ln1.g"] += dg
        grads[p + "ln1.b"] += db
        dx = dx_mid + dmid3

    np.add.at(grads["wte"], ids, dx)
    grads["wpe"][:t] += dx.sum(axis=0)
    return grads


def _check_targets(ids, loss_mask):
    ids = np.asarray(ids)
    mask = np.asarray(loss_mask, dtype=bool)
    if ids.ndim == 1:
        ids, mask = ids[None, :], mask[None, :]
    if ids.shape != mask.shape:
        raise InputError("loss_mask shape must match ids shape")
    if not mask.any():
        raise InputError("batch has no loss-mask-true positions")
    if mask[:, 0].any():
        raise InputError("position 0 can never be a prediction target")
    return ids, mask


def token_logprobs(params, ids, config: ModelConfig):
    """lp[b, t] = log p(ids[b, t] | ids[b, :t]) for t >= 1; lp[:, 0] = 0."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    logits = forward(params, ids, config)
    logp = log_softmax(logits[:, :-1, :])
    gathered = np.take_along_axis(logp, ids[:, 1:, None], axis=-1)[..., 0]
    out = np.zeros(ids.shape, dtype=logits.dtype)
    out[:, 1:] = gathered
    return out


def log_softmax(logits):
    m = np.max(logits, axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _ce_grads(params, ids, mask, config: ModelConfig, weights, normalize: bool):
    """Shared core: loss = sum_w weights * (-log p) over mask-true positions."""
    logits, cache = forward(params, ids, config, want_cache=True)
    dt = logits.dtype
    logp = log_softmax(logits)
    probs = np.exp(logp)

    tgt_mask = mask.copy()
    w = np.zeros(ids.shape, dtype=dt)
    w[tgt_mask] = weights if np.isscalar(weights) else np.asarray(weights, dtype=dt)[tgt_mask]
    if normalize:
        w = w / np.asarray(tgt_mask.sum(), dtype=dt)

    picked = np.take_along_axis(logp[:, :-1, :], ids[:, 1:, None], axis=-1)[..., 0]
    loss = float(-(w[:, 1:] * picked).sum())

    dlogits = probs[:, :-1, :].copy()
    np.put_along_axis(dlogits, ids[:, 1:, None],
                      np.take_along_axis(dlogits, ids[:, 1:, None], axis=-1) - 1.0, axis=-1)
    dlogits *= w[:, 1:, None]
    full = np.zeros_like(logits)
    full[:, :-1, :] = dlogits
    grads = backward(params, config, cache, full)
    return loss, grads


def loss_and_grads(params, ids, loss_mask, config: ModelConfig):
    """Mean masked cross-entropy over target positions, with exact grads."""
    ids, mask = _check_targets(ids, loss_mask)
    loss, grads = _ce_grads(params, ids, mask, config, weights=1.0, normalize=True)
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite loss: {loss}")
    return loss, grads


def weighted_token_loss(params, ids, loss_mask, per_token_weights, config: ModelConfig):
    """Sum over mask-true positions of weight * (-log p), with exact grads.

    ``per_token_weights`` is a full (B, T) array read at mask-true positions.
    """
    ids, mask = _check_targets(ids, loss_mask)
    w = np.asarray(per_token_weights)
    if w.ndim == 1:
        w = w[None, :]
    if w.shape != ids.shape:
        raise InputError("per_token_weights shape must match ids shape")
    return _ce_grads(params, ids, mask, config, weights=w, normalize=False)


class KVCache:
    """Per-layer key/value tensors preallocated to a fixed capacity."""

    def __init__(self, config: ModelConfig, batch: int, capacity: int):
        dh = config.head_dim
        dt = config.np_dtype
        self.k = [np.zeros((batch, config.n_heads, capacity, dh), dtype=dt)
                  for _ in range(config.n_layers)]
        self.v = [np.zeros((batch, config.n_heads, capacity, dh), dtype=dt)
                  for _ in range(config.n_layers)]
        self.length = 0


def _forward_cached(params, ids, config: ModelConfig, kv: KVCache):
    """Forward for new positions only, extending the KV cache.

    Returns logits for the last new position, shape (B, V).
    """
    ids = np.asarray(ids, dtype=np.int64)
    b, t_new = ids.shape
    start = kv.length
    stop = start + t_new
    if stop > config.max_seq_len:
        raise InputError(f"KV cache overflow: {stop} > max_seq_len {config.max_seq_len}")
    dt = config.np_dtype
    scale = np.asarray(1.0 / np.sqrt(config.head_dim), dtype=dt)

    x = params["wte"][ids] + params["wpe"][start:stop]
    for i in range(config.n_layers):
        p = f"layers.{i}."
        a, _ = _layernorm(x, params[p + "ln1.g"], params[p + "ln1.b"])
        q = _split_heads(a @ params[p + "attn.wq"] + params[p + "attn.bq"], config.n_heads)
        k = _split_heads(a @ params[p + "attn.wk"] + params[p + "attn.bk"], config.n_heads)
        v = _split_heads(a @ params[p + "attn.wv"] + params[p + "attn.bv"], config.n_heads)
        kv.k[i][:, :, start:stop] = k
        kv.v[i][:, :, start:stop] = v
        keys = kv.k[i][:, :, :stop]
        vals = kv.v[i][:, :, :stop]
        scores = (q @ keys.transpose(0, 1, 3, 2)) * scale
        if t_new > 1:
            # local query j (global start+j) may attend global keys <= start+j
            keep = np.tril(np.ones((t_new, stop), dtype=bool), k=start)
            scores = np.where(keep, scores, np.asarray(-np.inf, dtype=dt))
        attn = _softmax_last(scores)
        ctx = _merge_heads(attn @ vals)
        x = x + ctx @ params[p + "attn.wo"] + params[p + "attn.bo"]
        a2, _ = _layernorm(x, params[p + "ln2.g"], params[p + "ln2.b"])
        x = x + _gelu(a2 @ params[p + "mlp.w1"] + params[p + "mlp.b1"]) @ params[p + "mlp.w2"] \
            + params[p + "mlp.b2"]
    kv.length = stop
    xf, _ = _layernorm(x[:, -1:, :], params["lnf.g"], params["lnf.b"])
    return (xf @ params["head.w"])[:, 0, :]


def sample_batch(params, config: ModelConfig, prompts, *, mode: str = "greedy",
                 temperature: float = 1.0, rngs=None, max_new: int = 186,
                 eos_token: int = 3) -> list[np.ndarray]:
    """Autoregressive decode for same-length prompts.

    greedy: argmax at every step, deterministic.  categorical: per-row seeded
    inverse-CDF draws at ``temperature``, deterministic given each row's rng
    and independent of batch composition.  Returns completions only (EOS
    included when emitted); a row stops at EOS or after max_new tokens.
    """
    if max_new < 1:
        raise InputError(f"max_new must be >= 1, got {max_new}")
    prompts = np.asarray(prompts, dtype=np.int64)
    if prompts.ndim == 1:
        prompts = prompts[None, :]
    b, t0 = prompts.shape
    if mode not in ("greedy", "categorical"):
        raise InputError(f"unknown sampling mode {mode!r}")
    if mode == "categorical":
        if rngs is None or len(rngs) != b:
            raise InputError("categorical sampling needs one rng per batch row")
        if temperature <= 0:
            raise InputError("temperature must be > 0")

    budget = min(max_new, config.max_seq_len - t0)
    if budget < 1:
        raise InputError("prompt leaves no room to generate within max_seq_len")
    kv = KVCache(config, b, t0 + budget)
    logits = _forward_cached(params, prompts, config, kv)

    done = np.zeros(b, dtype=bool)
    completions: list[list[int]] = [[] for _ in range(b)]
    for _ in range(budget):
        if mode == "greedy":
            nxt = logits.argmax(axis=-1)
        else:
            lp = log_softmax(logits / np.asarray(temperature, dtype=logits.dtype))
            probs = np.exp(lp)
            nxt = np.empty(b, dtype=np.int64)
            for row in range(b):
                cdf = np.cumsum(probs[row])
                u = rngs[row].random()
                nxt[row] = min(int(np.searchsorted(cdf, u, side="right")),
                               config.vocab_size - 1)
        nxt = np.where(done, eos_token, nxt)
        for row in range(b):
            if not done[row]:
                completions[row].append(int(nxt[row]))
                if nxt[row] == eos_token:
                    done[row] = True
        if done.all():
            break
        logits = _forward_cached(params, nxt[:, None], config, kv)
    return [np.asarray(c, dtype=np.int32) for c in completions]


def sample_completion(params, config: ModelConfig, prompt_ids, *, mode: str = "greedy",
                      temperature: float = 1.0, rng=None, max_new: int = 186,
                      eos_token: int = 3) -> np.ndarray:
    """Single-prompt convenience wrapper over sample_batch."""
    rngs = [rng] if rng is not None else None
    return sample_batch(params, config, np.asarray(prompt_ids)[None, :], mode=mode,
                        temperature=temperature, rngs=rngs, max_new=max_new,
                        eos_token=eos_token)[0]
