import hashlib

import numpy as np
import pytest

from openraga import numkit as nk
from openraga.errors import ConfigError, FormatError, NumericError, ShapeError


def flat_loss(layer_factory, shapes, forward_backward):
    """Wrap a layer's forward/backward as a flat-vector loss for grad_check."""
    def loss_fn(vec):
        arrays = nk.unflatten_params(vec, shapes)
        return forward_backward(layer_factory(arrays))
    return loss_fn


# -- dense --------------------------------------------------------------------

def test_dense_identity_case():
    layer = nk.DenseLayer(np.eye(3), np.zeros(3))
    x = np.array([[0.5, -2.0, 7.0]])
    out, _ = layer.forward(x)
    assert np.array_equal(out, x)


def test_dense_affine_example():
    layer = nk.DenseLayer(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([1.0, 1.0]))
    out, _ = layer.forward(np.array([1.0, 2.0]))
    assert np.array_equal(out, np.array([2.0, 3.0]))


def test_dense_dropout_seed_determinism():
    rng = np.random.default_rng(0)
    layer = nk.DenseLayer(rng.normal(size=(4, 6)), rng.normal(size=6), dropout_rate=0.5)
    x = rng.normal(size=(3, 4))
    out1, _ = layer.forward(x, train_mode=True, rng_seed=123)
    out2, _ = layer.forward(x, train_mode=True, rng_seed=123)
    assert np.array_equal(out1, out2)
    out3, _ = layer.forward(x, train_mode=True, rng_seed=124)
    assert not np.array_equal(out1, out3)


def test_dense_dropout_rate_zero_is_bit_exact_identity():
    rng = np.random.default_rng(1)
    layer = nk.DenseLayer(rng.normal(size=(5, 5)), rng.normal(size=5),
                          activation="tanh", dropout_rate=0.0)
    x = rng.normal(size=(4, 5))
    plain, _ = layer.forward(x, train_mode=False)
    trained, _ = layer.forward(x, train_mode=True, rng_seed=9)
    assert np.array_equal(plain, trained)


def test_inverted_dropout_expectation():
    rate = 0.3
    value = np.ones((1, 8)) * 2.0
    total = np.zeros((1, 8))
    n = 10_000
    for seed in range(n):
        total += value * nk.dropout_mask(value.shape, rate, seed)
    mean = total / n
    assert np.all(np.abs(mean - value) / value < 0.02)


def test_dense_shape_mismatch():
    layer = nk.DenseLayer(np.eye(3), np.zeros(3))
    with pytest.raises(ShapeError):
        layer.forward(np.zeros((2, 4)))


def test_bad_dropout_rate_rejected():
    with pytest.raises(ConfigError):
        nk.DenseLayer(np.eye(2), np.zeros(2), dropout_rate=1.0)


# -- softmax / layer norm --------------------------------------------------------

def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(2)
    x = rng.normal(scale=30.0, size=(20, 7))
    s = nk.softmax(x)
    assert np.all(np.abs(s.sum(axis=1) - 1.0) <= 1e-12)
    assert np.all(s >= 0)


def test_layer_norm_row_statistics():
    rng = np.random.default_rng(3)
    ln = nk.LayerNormLayer.init(16)
    x = rng.normal(loc=3.0, scale=5.0, size=(10, 16))
    out, (xhat, _) = ln.forward(x)
    assert np.all(np.abs(xhat.mean(axis=-1)) < 1e-10)
    assert np.all(np.abs(xhat.var(axis=-1) - 1.0) < 1e-8)
    assert np.array_equal(out, xhat)  # gamma=1, beta=0


def test_layer_norm_zero_input_guard():
    ln = nk.LayerNormLayer.init(8)
    out, _ = ln.forward(np.zeros((3, 8)))
    assert np.all(np.isfinite(out))


# -- attention block ---------------------------------------------------------------

def test_attention_single_token_softmax_is_one():
    rng = np.random.default_rng(4)
    blk = nk.AttentionBlock.init(6, 2, rng)
    token = rng.normal(size=(1, 6))
    out, cache = blk.forward(token)
    attn = cache[4]  # (B, H, T, S) attention weights
    assert attn.shape == (1, 2, 1, 1)
    assert np.allclose(attn, 1.0)
    # attention output = value projection of the token, through wo
    v = token @ blk.wv
    mha = v @ blk.wo
    x, *_ = cache
    residual = x[0] + mha
    h1, _ = blk.ln1.forward(residual)
    assert np.allclose(cache[8][0], h1)
    assert out.shape == token.shape


def test_attention_permutation_equivariance():
    rng = np.random.default_rng(5)
    blk = nk.AttentionBlock.init(8, 2, rng)
    tokens = rng.normal(size=(5, 8))
    perm = rng.permutation(5)
    out, _ = blk.forward(tokens)
    out_perm, _ = blk.forward(tokens[perm])
    assert np.allclose(out_perm, out[perm], atol=1e-12)


def test_attention_shape_contract_and_finite():
    rng = np.random.default_rng(6)
    blk = nk.AttentionBlock.init(8, 2, rng)
    tokens = rng.normal(size=(4, 8))
    out, _ = blk.forward(tokens)
    assert out.shape == (4, 8)
    assert np.all(np.isfinite(out))


def test_attention_head_divisibility_error():
    rng = np.random.default_rng(7)
    with pytest.raises(ConfigError):
        nk.AttentionBlock.init(9, 2, rng)


# -- grad_check ----------------------------------------------------------------------

def test_grad_check_quadratic_is_exact():
    def loss_fn(vec):
        return float((vec ** 2).sum()), 2 * vec
    rng = np.random.default_rng(8)
    err = nk.grad_check(loss_fn, rng.normal(size=12), 1e-5)
    assert err < 1e-8


def test_grad_check_epsilon_zero_is_numeric_error():
    with pytest.raises(NumericError):
        nk.grad_check(lambda v: (float(v.sum()), np.ones_like(v)), np.zeros(3), 0.0)


def test_grad_check_nonfinite_loss_is_numeric_error():
    def loss_fn(vec):
        return float("nan"), np.zeros_like(vec)
    with pytest.raises(NumericError):
        nk.grad_check(loss_fn, np.zeros(2), 1e-5)


def test_grad_check_attention_mean_loss():
    rng = np.random.default_rng(9)
    blk = nk.AttentionBlock.init(4, 2, rng, ff_mult=2)
    tokens = rng.normal(size=(3, 4))
    shapes = [p.shape for p in blk.params]

    def loss_fn(vec):
        arrays = nk.unflatten_params(vec, shapes)
        blk2 = nk.AttentionBlock(arrays[0], arrays[1], arrays[2], arrays[3],
                                 nk.LayerNormLayer(arrays[4], arrays[5]),
                                 arrays[6], arrays[7], arrays[8], arrays[9],
                                 nk.LayerNormLayer(arrays[10], arrays[11]), 2)
        out, cache = blk2.forward_batch(tokens[None])
        grads, _ = blk2.backward_batch(np.full_like(out, 1.0 / out.size), cache)
        return float(out.mean()), nk.flatten_params(grads)

    assert nk.grad_check(loss_fn, nk.flatten_params(blk.params), 1e-5) < 1e-4


def _layer_grad_error(kind: str, rng: np.random.Generator) -> float:
    """Random small instance of one layer kind checked end to end."""
    if kind == "dense":
        i, o, b = (int(rng.integers(1, 9)) for _ in range(3))
        act = str(rng.choice(["linear", "relu", "tanh"]))
        layer = nk.DenseLayer.init(i, o, rng, activation=act,
                                   dropout_rate=float(rng.choice([0.0, 0.4])))
        x = rng.normal(size=(b, i))
        seed = int(rng.integers(1 << 16))
        shapes = [p.shape for p in layer.params]

        def loss_fn(vec):
            w, bias = nk.unflatten_params(vec, shapes)
            lay = nk.DenseLayer(w, bias, layer.activation, layer.dropout_rate)
            out, cache = lay.forward(x, train_mode=True, rng_seed=seed)
            grads, _ = lay.backward(2 * out, cache)
            return float((out ** 2).sum()), nk.flatten_params(grads)

        return nk.grad_check(loss_fn, nk.flatten_params(layer.params), 1e-5)
    if kind == "conv1d":
        cin, cout = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        t = int(rng.integers(3, 12))
        layer = nk.Conv1dLayer.init(cin, cout, 5, rng,
                                    activation=str(rng.choice(["linear", "relu"])))
        x = rng.normal(size=(2, cin, t))
        shapes = [p.shape for p in layer.params]

        def loss_fn(vec):
            w, bias = nk.unflatten_params(vec, shapes)
            lay = nk.Conv1dLayer(w, bias, layer.activation)
            out, cache = lay.forward(x)
            grads, _ = lay.backward(2 * out, cache)
            return float((out ** 2).sum()), nk.flatten_params(grads)

        return nk.grad_check(loss_fn, nk.flatten_params(layer.params), 1e-5)
    if kind == "layer-norm":
        d = int(rng.integers(2, 16))
        layer = nk.LayerNormLayer(rng.normal(size=d), rng.normal(size=d))
        x = rng.normal(size=(3, d))
        shapes = [p.shape for p in layer.params]

        def loss_fn(vec):
            gamma, beta = nk.unflatten_params(vec, shapes)
            lay = nk.LayerNormLayer(gamma, beta)
            out, cache = lay.forward(x)
            grads, _ = lay.backward(2 * out, cache)
            return float((out ** 2).sum()), nk.flatten_params(grads)

        return nk.grad_check(loss_fn, nk.flatten_params(layer.params), 1e-5)
    # attention-block
    heads = int(rng.choice([1, 2]))
    dim = heads * int(rng.integers(1, 4))
    t = int(rng.integers(1, 5))
    blk = nk.AttentionBlock.init(dim, heads, rng, ff_mult=2)
    tokens = rng.normal(size=(2, t, dim))
    shapes = [p.shape for p in blk.params]

    def loss_fn(vec):
        arrays = nk.unflatten_params(vec, shapes)
        blk2 = nk.AttentionBlock(arrays[0], arrays[1], arrays[2], arrays[3],
                                 nk.LayerNormLayer(arrays[4], arrays[5]),
                                 arrays[6], arrays[7], arrays[8], arrays[9],
                                 nk.LayerNormLayer(arrays[10], arrays[11]), heads)
        out, cache = blk2.forward_batch(tokens)
        grads, _ = blk2.backward_batch(2 * out, cache)
        return float((out ** 2).sum()), nk.flatten_params(grads)

    return nk.grad_check(loss_fn, nk.flatten_params(blk.params), 1e-5)


@pytest.mark.parametrize("kind", ["dense", "conv1d", "layer-norm", "attention-block"])
def test_every_layer_matches_finite_differences(kind):
    rng = np.random.default_rng(hash(kind) % (1 << 32))
    for trial in range(5):
        assert _layer_grad_error(kind, rng) < 1e-4, f"{kind} trial {trial}"


# -- optimizer -------------------------------------------------------------------

def test_sgd_lr_zero_leaves_params_unchanged():
    rng = np.random.default_rng(10)
    params = [rng.normal(size=(3, 3)), rng.normal(size=3)]
    before = [p.copy() for p in params]
    opt = nk.SgdMomentum(params, lr=0.0)
    for _ in range(5):
        opt.step([np.ones_like(p) for p in params])
    for p, b in zip(params, before):
        assert np.array_equal(p, b)


# -- checkpoints -------------------------------------------------------------------

def test_checkpoint_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    layers = [nk.DenseLayer.init(4, 3, rng, activation="relu", dropout_rate=0.3),
              nk.Conv1dLayer.init(2, 3, 5, rng),
              nk.AttentionBlock.init(6, 2, rng),
              nk.LayerNormLayer.init(6)]
    p1 = tmp_path / "a.onrk"
    p2 = tmp_path / "b.onrk"
    nk.save_checkpoint(p1, layers, {"model": "test", "rate": 0.3})
    loaded, meta = nk.load_checkpoint(p1)
    assert meta == {"model": "test", "rate": 0.3}
    assert [l.kind for l in loaded] == [l.kind for l in layers]
    nk.save_checkpoint(p2, loaded, meta)
    h = lambda p: hashlib.sha256(p.read_bytes()).hexdigest()
    assert h(p1) == h(p2)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.onrk"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(FormatError):
        nk.load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    rng = np.random.default_rng(12)
    path = tmp_path / "trunc.onrk"
    nk.save_checkpoint(path, [nk.DenseLayer.init(4, 4, rng)], None)
    data = path.read_bytes()
    path.write_bytes(data[:len(data) - 7])
    with pytest.raises(FormatError):
        nk.load_checkpoint(path)
