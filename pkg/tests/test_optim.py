"""AdamW tests against a hand-traced oracle and an independent replay."""

import numpy as np
import pytest

from sudorl.errors import InputError, NumericalError
from sudorl.optim import AdamW


def reference_adamw(params, grad_seq, *, lr, beta1=0.9, beta2=0.999, eps=1e-8,
                    weight_decay=0.0):
    """Independent scalar-loop replay of the update rule."""
    p = {k: v.astype(np.float64).copy() for k, v in params.items()}
    m = {k: np.zeros_like(v) for k, v in p.items()}
    v = {k: np.zeros_like(val) for k, val in p.items()}
    for t, grads in enumerate(grad_seq, start=1):
        for k in p:
            g = grads[k].astype(np.float64)
            m[k] = beta1 * m[k] + (1 - beta1) * g
            v[k] = beta2 * v[k] + (1 - beta2) * g * g
            m_hat = m[k] / (1 - beta1 ** t)
            v_hat = v[k] / (1 - beta2 ** t)
            p[k] = p[k] - lr * (m_hat / (np.sqrt(v_hat) + eps)
                                + weight_decay * p[k])
    return p


class TestSingleStep:
    def test_hand_traced_first_step(self):
        # g = 1 everywhere: m = 0.1, v = 0.001, m_hat = v_hat = 1 exactly.
        p = {"w": np.full(3, 2.0)}
        opt = AdamW(lr=0.1)
        opt.step(p, {"w": np.ones(3)})
        expect = 2.0 - 0.1 * (1.0 / (1.0 + 1e-8))
        assert np.allclose(p["w"], expect, atol=1e-15)
        assert np.allclose(opt.m["w"], 0.1, atol=1e-15)
        assert np.allclose(opt.v["w"], 0.001, atol=1e-15)
        assert opt.t == 1

    def test_decay_is_decoupled(self):
        # Zero gradient leaves the moments at zero, so the only movement is
        # the multiplicative shrink lr * wd * p.
        p = {"w": np.array([4.0, -2.0])}
        opt = AdamW(lr=0.5, weight_decay=0.1)
        opt.step(p, {"w": np.zeros(2)})
        assert np.allclose(p["w"], [4.0 * 0.95, -2.0 * 0.95], atol=1e-15)

    def test_sign_of_update_follows_gradient(self):
        p = {"w": np.zeros(2)}
        opt = AdamW(lr=0.01)
        opt.step(p, {"w": np.array([3.0, -3.0])})
        assert p["w"][0] < 0 < p["w"][1]


class TestMultiStep:
    def test_matches_reference_over_ten_steps(self):
        rng = np.random.default_rng(0)
        params = {"a": rng.normal(size=(4, 3)).astype(np.float64),
                  "b": rng.normal(size=5).astype(np.float64)}
        grad_seq = [{k: rng.normal(size=v.shape) for k, v in params.items()}
                    for _ in range(10)]
        expect = reference_adamw(params, grad_seq, lr=3e-3, weight_decay=0.02)

        live = {k: v.copy() for k, v in params.items()}
        opt = AdamW(lr=3e-3, weight_decay=0.02)
        for grads in grad_seq:
            opt.step(live, grads)
        for k in live:
            assert np.allclose(live[k], expect[k], atol=1e-12)
        assert opt.t == 10

    def test_float32_params_stay_float32(self):
        p = {"w": np.ones(4, dtype=np.float32)}
        opt = AdamW(lr=0.1)
        opt.step(p, {"w": np.ones(4, dtype=np.float32)})
        assert p["w"].dtype == np.float32
        assert opt.m["w"].dtype == np.float32


class TestValidation:
    def test_key_mismatch(self):
        opt = AdamW()
        with pytest.raises(InputError):
            opt.step({"a": np.ones(2)}, {"b": np.ones(2)})
        with pytest.raises(InputError):
            opt.step({"a": np.ones(2)}, {"a": np.ones(2), "b": np.ones(2)})

    def test_non_finite_gradient_aborts(self):
        opt = AdamW()
        p = {"w": np.ones(3)}
        with pytest.raises(NumericalError):
            opt.step(p, {"w": np.array([1.0, np.nan, 0.0])})
        with pytest.raises(NumericalError):
            opt.step(p, {"w": np.array([np.inf, 0.0, 0.0])})
        # Failed step must not advance time or touch the parameter.
        assert opt.t == 0
        assert np.array_equal(p["w"], np.ones(3))

    def test_hyperparameter_bounds(self):
        with pytest.raises(InputError):
            AdamW(lr=-1e-4)
        with pytest.raises(InputError):
            AdamW(beta1=1.0)
        with pytest.raises(InputError):
            AdamW(beta2=-0.1)
        with pytest.raises(InputError):
            AdamW(eps=0.0)
        with pytest.raises(InputError):
            AdamW(weight_decay=-0.01)


class TestStateRoundTrip:
    def test_resume_matches_uninterrupted_run(self):
        rng = np.random.default_rng(1)
        params = {"w": rng.normal(size=(3, 3))}
        grad_seq = [{"w": rng.normal(size=(3, 3))} for _ in range(6)]

        straight = {k: v.copy() for k, v in params.items()}
        opt_a = AdamW(lr=1e-2)
        for g in grad_seq:
            opt_a.step(straight, g)

        resumed = {k: v.copy() for k, v in params.items()}
        opt_b = AdamW(lr=1e-2)
        for g in grad_seq[:3]:
            opt_b.step(resumed, g)
        saved = {k: v.copy() for k, v in opt_b.state_arrays().items()}
        t_saved = opt_b.t

        opt_c = AdamW(lr=1e-2)
        opt_c.load_state_arrays(saved, t_saved)
        for g in grad_seq[3:]:
            opt_c.step(resumed, g)

        assert np.array_equal(straight["w"], resumed["w"])
        assert opt_c.t == 6

    def test_state_array_names(self):
        opt = AdamW(lr=0.1)
        p = {"x.y": np.ones(2)}
        opt.step(p, {"x.y": np.ones(2)})
        arrays = opt.state_arrays()
        assert set(arrays) == {"m.x.y", "v.x.y"}
