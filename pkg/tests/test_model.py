"""Transformer tests: exact gradients, causality, cache equivalence, sampling.

The gradient oracle is central finite differences in float64; the causality
oracle is bit-level comparison of prefix logits after suffix edits.
"""

import numpy as np
import pytest
from scipy.special import erf

from sudorl.errors import InputError
from sudorl.model import (
    KVCache,
    ModelConfig,
    _forward_cached,
    _gelu,
    _layernorm,
    forward,
    init_params,
    loss_and_grads,
    log_softmax,
    param_count,
    sample_batch,
    sample_completion,
    token_logprobs,
    weighted_token_loss,
)
from sudorl.seeding import derive_rng

TINY = ModelConfig(n_layers=2, n_heads=2, d_model=16, vocab_size=13,
                   max_seq_len=64, seed=0, dtype="float32")
TINY64 = ModelConfig(n_layers=2, n_heads=2, d_model=16, vocab_size=13,
                     max_seq_len=64, seed=0, dtype="float64")


def tiny_params(config=TINY, seed=0):
    return init_params(config, derive_rng(seed, "init"))


def random_batch(config, b, t, seed=1):
    rng = np.random.default_rng(seed)
    return rng.integers(0, config.vocab_size, size=(b, t))


class TestConfig:
    def test_head_divisibility_enforced(self):
        with pytest.raises(InputError):
            ModelConfig(n_layers=1, n_heads=3, d_model=16, vocab_size=8,
                        max_seq_len=8)

    def test_head_dim(self):
        assert TINY.head_dim == 8

    def test_dtype_choices(self):
        assert TINY.np_dtype == np.float32
        assert TINY64.np_dtype == np.float64
        with pytest.raises(InputError):
            ModelConfig(n_layers=1, n_heads=1, d_model=8, vocab_size=8,
                        max_seq_len=8, dtype="float16")


class TestParams:
    def test_count_matches_arrays(self):
        for cfg in (TINY, ModelConfig(n_layers=4, n_heads=4, d_model=128,
                                      vocab_size=23, max_seq_len=432)):
            params = init_params(cfg, derive_rng(0, "init"))
            assert sum(p.size for p in params.values()) == param_count(cfg)

    def test_closed_form(self):
        # 2*V*d + T*d + L*(12*d^2 + 13*d) + 2*d
        cfg = TINY
        expect = (2 * 13 * 16) + (64 * 16) + 2 * (12 * 16 * 16 + 13 * 16) + 2 * 16
        assert param_count(cfg) == expect

    def test_init_layout(self):
        params = tiny_params()
        assert params["wte"].shape == (13, 16)
        assert params["wpe"].shape == (64, 16)
        assert params["head.w"].shape == (16, 13)
        assert np.array_equal(params["layers.0.ln1.g"], np.ones(16, np.float32))
        assert np.array_equal(params["layers.0.attn.bq"], np.zeros(16, np.float32))
        assert params["wte"].dtype == np.float32

    def test_init_deterministic_and_seed_sensitive(self):
        a, b = tiny_params(seed=0), tiny_params(seed=0)
        c = tiny_params(seed=1)
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert not np.array_equal(a["wte"], c["wte"])

    def test_untied_head(self):
        params = tiny_params()
        assert not np.shares_memory(params["wte"], params["head.w"])


class TestActivations:
    def test_gelu_matches_erf_form(self):
        x = np.linspace(-4, 4, 41)
        expect = 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))
        assert np.allclose(_gelu(x), expect, atol=1e-12)

    def test_layernorm_normalizes(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(3, 5, 16)).astype(np.float64)
        y, _ = _layernorm(x, np.ones(16), np.zeros(16))
        assert np.allclose(y.mean(-1), 0.0, atol=1e-12)
        assert np.allclose(y.var(-1), 1.0, atol=1e-4)


class TestForward:
    def test_shapes_and_dtype(self):
        params = tiny_params()
        ids = random_batch(TINY, 3, 10)
        logits = forward(params, ids, TINY)
        assert logits.shape == (3, 10, 13)
        assert logits.dtype == np.float32

    def test_causality_bitwise(self):
        params = tiny_params()
        ids = random_batch(TINY, 2, 20, seed=5)
        base = forward(params, ids, TINY)
        for cut in (4, 11, 19):
            other = ids.copy()
            other[:, cut] = (other[:, cut] + 1) % TINY.vocab_size
            pert = forward(params, other, TINY)
            assert np.array_equal(base[:, :cut, :], pert[:, :cut, :])
            assert not np.array_equal(base[:, cut, :], pert[:, cut, :])

    def test_out_of_vocab_rejected(self):
        params = tiny_params()
        with pytest.raises(InputError):
            forward(params, np.array([[0, 13]]), TINY)
        with pytest.raises(InputError):
            forward(params, np.array([[-1, 0]]), TINY)

    def test_overlength_rejected(self):
        params = tiny_params()
        with pytest.raises(InputError):
            forward(params, np.zeros((1, 65), dtype=np.int64), TINY)

    def test_batch_row_independence(self):
        params = tiny_params()
        ids = random_batch(TINY, 4, 12, seed=9)
        full = forward(params, ids, TINY)
        solo = forward(params, ids[2:3], TINY)
        assert np.allclose(full[2], solo[0], atol=1e-6)


class TestLoss:
    def test_uniform_logits_give_log_vocab(self):
        params = tiny_params()
        params["head.w"] = np.zeros_like(params["head.w"])
        ids = random_batch(TINY, 2, 16, seed=3)
        mask = np.zeros((2, 16), dtype=bool)
        mask[:, 4:] = True
        loss, _ = loss_and_grads(params, ids, mask, TINY)
        assert abs(loss - np.log(13.0)) < 1e-6

    def test_loss_matches_token_logprobs(self):
        params = tiny_params()
        ids = random_batch(TINY, 2, 14, seed=4)
        mask = np.zeros((2, 14), dtype=bool)
        mask[:, 5:] = True
        loss, _ = loss_and_grads(params, ids, mask, TINY)
        lp = token_logprobs(params, ids, TINY)
        expect = float(-(lp[mask]).sum() / mask.sum())
        assert abs(loss - expect) < 1e-5

    def test_suffix_changes_after_targets_do_not_matter(self):
        params = tiny_params()
        ids = random_batch(TINY, 1, 16, seed=6)
        mask = np.zeros((1, 16), dtype=bool)
        mask[:, 4:9] = True
        loss_a, _ = loss_and_grads(params, ids, mask, TINY)
        other = ids.copy()
        other[:, 12:] = (other[:, 12:] + 3) % TINY.vocab_size
        loss_b, _ = loss_and_grads(params, other, mask, TINY)
        assert loss_a == loss_b

    def test_mask_validation(self):
        params = tiny_params()
        ids = random_batch(TINY, 1, 8)
        with pytest.raises(InputError):
            loss_and_grads(params, ids, np.zeros((1, 8), dtype=bool), TINY)
        bad = np.zeros((1, 8), dtype=bool)
        bad[0, 0] = True
        with pytest.raises(InputError):
            loss_and_grads(params, ids, bad, TINY)
        with pytest.raises(InputError):
            loss_and_grads(params, ids, np.ones((1, 9), dtype=bool), TINY)

    def test_weighted_loss_is_linear_in_weights(self):
        params = tiny_params(TINY64)
        ids = random_batch(TINY64, 2, 12, seed=8)
        mask = np.zeros((2, 12), dtype=bool)
        mask[:, 3:] = True
        rng = np.random.default_rng(2)
        w1 = rng.normal(size=(2, 12))
        w2 = rng.normal(size=(2, 12))
        l1, g1 = weighted_token_loss(params, ids, mask, w1, TINY64)
        l2, g2 = weighted_token_loss(params, ids, mask, w2, TINY64)
        l12, g12 = weighted_token_loss(params, ids, mask, w1 + w2, TINY64)
        assert abs(l12 - (l1 + l2)) < 1e-9
        for k in g12:
            assert np.allclose(g12[k], g1[k] + g2[k], atol=1e-9)

    def test_weighted_loss_reduces_to_mean_ce(self):
        params = tiny_params()
        ids = random_batch(TINY, 2, 10, seed=11)
        mask = np.zeros((2, 10), dtype=bool)
        mask[:, 2:7] = True
        loss_a, grads_a = loss_and_grads(params, ids, mask, TINY)
        w = np.full((2, 10), 1.0 / mask.sum())
        loss_b, grads_b = weighted_token_loss(params, ids, mask, w, TINY)
        assert abs(loss_a - loss_b) < 1e-6
        for k in grads_a:
            assert np.allclose(grads_a[k], grads_b[k], atol=1e-6)

    def test_weight_shape_checked(self):
        params = tiny_params()
        ids = random_batch(TINY, 2, 10)
        mask = np.zeros((2, 10), dtype=bool)
        mask[:, 1:] = True
        with pytest.raises(InputError):
            weighted_token_loss(params, ids, mask, np.ones((2, 9)), TINY)


class TestGradientCheck:
    def test_against_central_differences(self):
        config = TINY64
        params = tiny_params(config, seed=2)
        ids = random_batch(config, 2, 18, seed=7)
        mask = np.zeros((2, 18), dtype=bool)
        mask[:, 6:] = True
        _, grads = loss_and_grads(params, ids, mask, config)

        rng = np.random.default_rng(123)
        eps = 1e-5
        names = sorted(params)
        for _ in range(8):
            direction = {k: rng.normal(size=params[k].shape) for k in names}
            analytic = sum(float((grads[k] * direction[k]).sum()) for k in names)

            def shifted(sign):
                moved = {k: params[k] + sign * eps * direction[k] for k in names}
                loss, _ = loss_and_grads(moved, ids, mask, config)
                return loss

            numeric = (shifted(+1.0) - shifted(-1.0)) / (2 * eps)
            denom = max(abs(analytic), abs(numeric), 1e-12)
            assert abs(analytic - numeric) / denom < 1e-4

    def test_grads_cover_every_parameter(self):
        params = tiny_params()
        ids = random_batch(TINY, 1, 12)
        mask = np.zeros((1, 12), dtype=bool)
        mask[:, 4:] = True
        _, grads = loss_and_grads(params, ids, mask, TINY)
        assert set(grads) == set(params)
        assert all(grads[k].shape == params[k].shape for k in params)
        assert any(np.abs(g).max() > 0 for g in grads.values())


class TestTokenLogprobs:
    def test_position_zero_is_zero(self):
        params = tiny_params()
        ids = random_batch(TINY, 3, 9)
        lp = token_logprobs(params, ids, TINY)
        assert np.array_equal(lp[:, 0], np.zeros(3, dtype=lp.dtype))

    def test_matches_manual_gather(self):
        params = tiny_params()
        ids = random_batch(TINY, 2, 11, seed=13)
        lp = token_logprobs(params, ids, TINY)
        logits = forward(params, ids, TINY)
        ls = log_softmax(logits)
        for b in range(2):
            for t in range(1, 11):
                assert abs(lp[b, t] - ls[b, t - 1, ids[b, t]]) < 1e-7

    def test_logprobs_nonpositive(self):
        params = tiny_params()
        ids = random_batch(TINY, 2, 11)
        assert (token_logprobs(params, ids, TINY) <= 0).all()


class TestSampling:
    def test_cache_matches_full_forward_greedy(self):
        params = tiny_params(seed=4)
        prompt = random_batch(TINY, 1, 6, seed=21)[0]
        got = sample_completion(params, TINY, prompt, mode="greedy", max_new=12,
                                eos_token=3)
        seq = list(prompt)
        expect = []
        for _ in range(12):
            logits = forward(params, np.asarray(seq)[None, :], TINY)
            nxt = int(logits[0, -1].argmax())
            expect.append(nxt)
            seq.append(nxt)
            if nxt == 3:
                break
        assert list(got) == expect

    def test_kv_cache_prompt_pass_matches_full(self):
        params = tiny_params(seed=4)
        ids = random_batch(TINY, 2, 10, seed=22)
        kv = KVCache(TINY, 2, 16)
        last = _forward_cached(params, ids, TINY, kv)
        full = forward(params, ids, TINY)
        assert np.allclose(last, full[:, -1, :], atol=1e-5)

    def test_greedy_is_deterministic(self):
        params = tiny_params()
        prompts = random_batch(TINY, 3, 5, seed=30)
        a = sample_batch(params, TINY, prompts, mode="greedy", max_new=8)
        b = sample_batch(params, TINY, prompts, mode="greedy", max_new=8)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_categorical_row_independent_of_batch(self):
        params = tiny_params()
        prompts = random_batch(TINY, 3, 5, seed=31)
        rngs = [derive_rng(9, "row", i) for i in range(3)]
        batch = sample_batch(params, TINY, prompts, mode="categorical",
                             temperature=1.0, rngs=rngs, max_new=10)
        solo = sample_batch(params, TINY, prompts[1:2], mode="categorical",
                            temperature=1.0, rngs=[derive_rng(9, "row", 1)],
                            max_new=10)
        assert np.array_equal(batch[1], solo[0])

    def test_categorical_seed_determinism(self):
        params = tiny_params()
        prompts = random_batch(TINY, 2, 5, seed=32)
        draw = lambda: sample_batch(params, TINY, prompts, mode="categorical",
                                    temperature=1.0,
                                    rngs=[derive_rng(7, "r", i) for i in range(2)],
                                    max_new=10)
        a, b = draw(), draw()
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_low_temperature_approaches_greedy(self):
        params = tiny_params(seed=6)
        prompts = random_batch(TINY, 2, 6, seed=33)
        greedy = sample_batch(params, TINY, prompts, mode="greedy", max_new=10)
        cold = sample_batch(params, TINY, prompts, mode="categorical",
                            temperature=1e-4,
                            rngs=[derive_rng(1, "c", i) for i in range(2)],
                            max_new=10)
        assert all(np.array_equal(g, c) for g, c in zip(greedy, cold))

    def test_max_new_and_context_budget(self):
        params = tiny_params()
        prompt = random_batch(TINY, 1, 6, seed=34)[0]
        out = sample_completion(params, TINY, prompt, max_new=4, eos_token=999)
        assert len(out) == 4
        long_prompt = random_batch(TINY, 1, 60, seed=35)[0]
        out = sample_completion(params, TINY, long_prompt, max_new=50,
                                eos_token=999)
        assert len(out) == TINY.max_seq_len - 60

    def test_stops_at_eos_token(self):
        params = tiny_params()
        prompt = random_batch(TINY, 1, 6, seed=36)[0]
        out = sample_completion(params, TINY, prompt, mode="greedy", max_new=30)
        hits = np.flatnonzero(out == 3)
        if len(hits):
            assert hits[0] == len(out) - 1

    def test_argument_validation(self):
        params = tiny_params()
        prompts = random_batch(TINY, 2, 5)
        with pytest.raises(InputError):
            sample_batch(params, TINY, prompts, max_new=0)
        with pytest.raises(InputError):
            sample_batch(params, TINY, prompts, mode="beam")
        with pytest.raises(InputError):
            sample_batch(params, TINY, prompts, mode="categorical", rngs=None)
        with pytest.raises(InputError):
            sample_batch(params, TINY, prompts, mode="categorical",
                         temperature=0.0,
                         rngs=[derive_rng(0, "x", i) for i in range(2)])
        full = np.zeros((1, TINY.max_seq_len), dtype=np.int64)
        with pytest.raises(InputError):
            sample_batch(params, TINY, full, max_new=5)
