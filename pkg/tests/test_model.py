import math

import numpy as np
import pytest

from courage import numerics as nx
from courage.model import (ConfigError, ModelConfig, ModelParams, attention_weights, embed, feed_forward,
                           forward, forward_batch, init_params, load_checkpoint, multi_head,
                           param_shapes, positional_encoding, save_checkpoint, self_attention_head)


def c(x):
    return nx.constant(x)


def test_positional_encoding_values():
    pe = positional_encoding(7, 32)
    assert np.array_equal(pe[0], np.tile([0.0, 1.0], 16))
    assert pe[1, 0] == pytest.approx(0.841471, abs=1e-6)
    assert pe[1, 1] == pytest.approx(0.540302, abs=1e-6)
    assert np.all(np.abs(pe) <= 1.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(d_model=7, n_heads=1)
    with pytest.raises(ConfigError):
        ModelConfig(pooling="max")
    assert ModelConfig().d_key == 4


def test_embed_zero_projection_is_position_code(rng):
    cfg = ModelConfig(n_features=3, window=5, d_model=4, n_heads=2)
    out = embed(rng.normal(size=(3, 5)), c(np.zeros((4, 3))), cfg)
    assert np.array_equal(out.value, positional_encoding(5, 4))


def test_embed_identity_projection_returns_days(rng):
    cfg = ModelConfig(n_features=4, window=3, d_model=4, n_heads=2)
    E = rng.normal(size=(4, 3))
    out = embed(E, c(np.eye(4)), cfg)
    assert np.allclose(out.value - positional_encoding(3, 4), E.T)


def test_embed_rejects_wrong_feature_count(rng):
    cfg = ModelConfig(n_features=3, window=4, d_model=4, n_heads=2)
    with pytest.raises(nx.ShapeError):
        embed(rng.normal(size=(5, 4)), c(np.zeros((4, 3))), cfg)


def test_embed_gradient(rng, toy_config):
    E = rng.normal(size=(3, 4))
    f = lambda p: nx.sum_all(nx.mul(embed(E, p["U"], toy_config), embed(E, p["U"], toy_config)))  # noqa: E731
    assert nx.gradient_check(f, {"U": rng.normal(size=(8, 3))}) < 1e-6


def test_zero_query_key_gives_uniform_attention(rng):
    X = rng.normal(size=(5, 4))
    wv = rng.normal(size=(4, 3))
    out = self_attention_head(c(X), c(np.zeros((4, 2))), c(np.zeros((4, 2))), c(wv))
    assert np.allclose(out.value, np.tile((X @ wv).mean(axis=0), (5, 1)))


def test_single_position_attention_copies_value(rng):
    X = rng.normal(size=(1, 4))
    wv = rng.normal(size=(4, 3))
    out = self_attention_head(c(X), c(rng.normal(size=(4, 2))), c(rng.normal(size=(4, 2))), c(wv))
    assert np.allclose(out.value, X @ wv)


def test_attention_by_hand():
    # Q = [[1],[0]], K = [[0],[ln 3]] -> scores [[0, ln 3], [0, 0]] with d_key = 1
    X = np.array([[1.0, 0.0], [0.0, math.log(3)]])
    A = attention_weights(c(X), c([[1.0], [0.0]]), c([[0.0], [1.0]])).value
    assert np.allclose(A[0], [0.25, 0.75])
    assert np.allclose(A[1], [0.5, 0.5])


def test_attention_is_not_masked(rng):
    X = rng.normal(size=(4, 3))
    A = attention_weights(c(X), c(rng.normal(size=(3, 2))), c(rng.normal(size=(3, 2)))).value
    assert (A[np.triu_indices(4, 1)] > 0).all()


def test_single_head_identity_output(rng):
    X = rng.normal(size=(5, 4))
    wq, wk, wv = (rng.normal(size=(1, 4, 4)) for _ in range(3))
    out = multi_head(c(X), c(wq), c(wk), c(wv), c(np.eye(4))).value
    assert np.allclose(out, self_attention_head(c(X), c(wq[0]), c(wk[0]), c(wv[0])).value)
    assert out.shape == (5, 4)


def test_multi_head_matches_concatenation(rng):
    X = rng.normal(size=(6, 8))
    wq, wk, wv = (rng.normal(size=(4, 8, 2)) for _ in range(3))
    wo = rng.normal(size=(8, 8))
    heads = [self_attention_head(c(X), c(wq[h]), c(wk[h]), c(wv[h])) for h in range(4)]
    expected = nx.concat_cols(heads).value @ wo
    assert np.allclose(multi_head(c(X), c(wq), c(wk), c(wv), c(wo)).value, expected, atol=1e-12)


def test_head_permutation_invariance(rng):
    X = rng.normal(size=(6, 8))
    wq, wk, wv = (rng.normal(size=(4, 8, 2)) for _ in range(3))
    wo = rng.normal(size=(8, 8))
    perm = np.array([2, 0, 3, 1])
    wo_perm = wo.reshape(4, 2, 8)[perm].reshape(8, 8)
    a = multi_head(c(X), c(wq), c(wk), c(wv), c(wo)).value
    b = multi_head(c(X), c(wq[perm]), c(wk[perm]), c(wv[perm]), c(wo_perm)).value
    assert np.allclose(a, b, atol=1e-12)


def test_feed_forward_constant_and_positionwise(rng):
    S = rng.normal(size=(3, 4))
    out = feed_forward(c(S), c(np.zeros((4, 6))), c(np.zeros(6)), c(np.zeros((6, 4))), c(np.full(4, 2.5)))
    assert np.array_equal(out.value, np.full((3, 4), 2.5))
    w1, b1, w2, b2 = rng.normal(size=(4, 6)), rng.normal(size=6), rng.normal(size=(6, 4)), rng.normal(size=4)
    S2 = np.vstack([S, S[1]])
    out2 = feed_forward(c(S2), c(w1), c(b1), c(w2), c(b2)).value
    assert np.array_equal(out2[3], out2[1])


def test_feed_forward_gradient(rng):
    S = rng.normal(size=(3, 4))
    params = {"w1": rng.normal(size=(4, 6)), "b1": rng.normal(size=6),
              "w2": rng.normal(size=(6, 4)), "b2": rng.normal(size=4)}

    def f(p):
        out = feed_forward(c(S), p["w1"], p["b1"], p["w2"], p["b2"])
        return nx.sum_all(nx.mul(out, out))

    assert nx.gradient_check(f, params) < 1e-6


def test_zero_network_predicts_zero(toy_config, rng):
    params = ModelParams(toy_config, {k: np.zeros(s) for k, s in param_shapes(toy_config).items()})
    assert forward(rng.normal(size=(3, 4)), params) == (0.0, 0.0)


def test_forward_is_deterministic(toy_config, rng):
    params = init_params(toy_config, 3)
    x = rng.normal(size=(5, 3, 4))
    assert np.array_equal(forward_batch(x, params).value, forward_batch(x, params).value)


@pytest.mark.parametrize("pooling", ["last", "mean"])
@pytest.mark.parametrize("norm", [True, False])
def test_full_model_gradient(pooling, norm, rng):
    cfg = ModelConfig(n_features=2, window=3, d_model=8, n_heads=2, d_ff=16, pooling=pooling,
                      residual_layernorm=norm)
    x, y = rng.normal(size=(4, 2, 3)), rng.normal(size=(4, 2))
    f = lambda p: nx.huber_mean(forward_batch(x, p, cfg), y, 1.0)  # noqa: E731
    assert nx.gradient_check(f, init_params(cfg, 0).arrays) < 1e-5


def test_init_deterministic_and_biases_zero(toy_config):
    a, b = init_params(toy_config, 7), init_params(toy_config, 7)
    for k in a.arrays:
        assert np.array_equal(a[k], b[k])
    for k in ("layer0.b1", "layer0.b2", "decoder_b", "layer0.ln1_bias"):
        assert not a[k].any()


def test_glorot_variance():
    cfg = ModelConfig(d_model=32, d_ff=64)
    w = init_params(cfg, 0)["layer0.w1"]
    assert w.shape == (32, 64)
    assert abs(w.var() / (2.0 / (32 + 64)) - 1.0) < 0.2


def test_checkpoint_round_trip(tmp_path, toy_config):
    params = init_params(toy_config, 1)
    save_checkpoint(tmp_path / "m.npz", params, extra={"x": np.arange(3.0)}, meta={"seed": 1})
    loaded, extra, meta = load_checkpoint(tmp_path / "m.npz")
    assert loaded.config == toy_config
    assert all(np.array_equal(loaded[k], params[k]) for k in params.arrays)
    assert np.array_equal(extra["x"], np.arange(3.0))
    assert meta == {"seed": 1}


def test_params_shape_validation(toy_config):
    arrays = init_params(toy_config, 0).arrays
    arrays["U"] = np.zeros((2, 2))
    with pytest.raises(ConfigError):
        ModelParams(toy_config, arrays)
