import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from genfeat import nn
from genfeat.nn import checkpoint, tensor as T
from genfeat.nn.gradcheck import check_gradients
from genfeat.nn.layers import (
    BatchNorm1D, Context, Conv1D, Dense, Embedding, GlobalAvgPool1D, LayerSpec, MaxPool1D,
    MultiHeadAttention, make_layer,
)

from gradcases import ALL_CASES, case


def sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_oracle(x, w, r, b, reverse=False):
    """Plain per-step gate arithmetic, one sequence at a time."""
    n, steps, _ = x.shape
    u = r.shape[0]
    out = np.zeros((n, steps, u))
    for k in range(n):
        h, c = np.zeros(u), np.zeros(u)
        order = range(steps - 1, -1, -1) if reverse else range(steps)
        for t in order:
            a = x[k, t] @ w + h @ r + b
            i, f, g, o = sig(a[:u]), sig(a[u:2 * u]), np.tanh(a[2 * u:3 * u]), sig(a[3 * u:])
            c = f * c + i * g
            h = o * np.tanh(c)
            out[k, t] = h
    return out


def conv_oracle(x, w, stride):
    """Same-padded cross-correlation by explicit loops."""
    n, length, _ = x.shape
    kernel, _, cout = w.shape
    out_len = -(-length // stride)
    total = max((out_len - 1) * stride + kernel - length, 0)
    left = total // 2
    out = np.zeros((n, out_len, cout))
    for b in range(n):
        for t in range(out_len):
            for k in range(kernel):
                src = t * stride + k - left
                if 0 <= src < length:
                    out[b, t] += x[b, src] @ w[k]
    return out


def attention_oracle(x, p, heads):
    steps, dim = x.shape
    dh = dim // heads
    q, k, v = (x @ p[f"W{s}"] + p[f"b{s}"] for s in "qkv")
    out = np.zeros((steps, dim))
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        scores = q[:, sl] @ k[:, sl].T / math.sqrt(dh)
        weights = np.exp(scores - scores.max(axis=1, keepdims=True))
        weights /= weights.sum(axis=1, keepdims=True)
        out[:, sl] = weights @ v[:, sl]
    return out @ p["Wo"] + p["bo"]


class TestAutodiff:
    def test_square_gradient(self):
        x = T.parameter(3.0)
        (g,) = T.grad(x * x, [x])
        assert g == pytest.approx(6.0)

    def test_unused_parameter_gets_zero_gradient(self):
        x, unused = T.parameter(2.0), T.parameter(np.ones((2, 3)))
        gx, gu = T.grad(x * 4.0, [x, unused])
        assert gx == pytest.approx(4.0)
        assert gu.shape == (2, 3) and not gu.any()

    def test_non_scalar_loss_rejected(self):
        x = T.parameter(np.ones(3))
        with pytest.raises(ValueError):
            T.grad(x * 2.0, [x])

    def test_broadcast_gradient_sums(self):
        a, b = T.parameter(np.ones((2, 3))), T.parameter(np.ones(3))
        _, gb = T.grad((a * b).sum(), [a, b])
        np.testing.assert_array_equal(gb, [2.0, 2.0, 2.0])

    @pytest.mark.parametrize("family,name", ALL_CASES)
    def test_finite_differences(self, family, name):
        for seed in range(3):
            err = check_gradients(*case(family, name, seed), rng=np.random.default_rng(seed))
            assert err < 1e-4, (name, seed, err)


class TestAdam:
    def test_first_step_closed_form(self):
        store = nn.ParamStore()
        store.add("p", 0.0)
        nn.adam_step(store, {"p": np.array(1.0)}, lr=0.001)
        assert store["p"].data == pytest.approx(-0.001, abs=1e-8)

    def test_two_steps_hand_unrolled(self):
        store = nn.ParamStore()
        store.add("p", np.array([0.5]))
        grads = [np.array([0.2]), np.array([-0.4])]
        theta, m, v = 0.5, 0.0, 0.0
        for step, g in enumerate(grads, start=1):
            nn.adam_step(store, {"p": g}, lr=0.01)
            m = 0.9 * m + 0.1 * g[0]
            v = 0.999 * v + 0.001 * g[0] ** 2
            theta -= 0.01 * (m / (1 - 0.9 ** step)) / (math.sqrt(v / (1 - 0.999 ** step)) + 1e-8)
        assert store["p"].data[0] == pytest.approx(theta, abs=1e-12)

    def test_zero_gradient_is_noop(self):
        store = nn.ParamStore()
        store.add("p", np.array([1.5, -2.0]))
        nn.adam_step(store, {"p": np.zeros(2)})
        np.testing.assert_array_equal(store["p"].data, [1.5, -2.0])

    def test_slots_are_independent(self):
        store = nn.ParamStore()
        store.add("p", 0.0)
        nn.adam_step(store, {"p": np.array(1.0)}, slot="a")
        nn.adam_step(store, {"p": np.array(1.0)}, slot="b")
        assert store.adam["a"]["p"].step == 1 and store.adam["b"]["p"].step == 1

    def test_shape_mismatch(self):
        store = nn.ParamStore()
        store.add("p", np.zeros(2))
        with pytest.raises(ValueError):
            nn.adam_step(store, {"p": np.zeros(3)})


class TestLosses:
    def test_kl_prior_is_zero(self):
        assert nn.kl_gaussian(np.zeros((3, 4)), np.zeros((3, 4))).item() == 0.0

    def test_kl_unit_mean(self):
        assert nn.kl_gaussian([1.0], [0.0]).item() == pytest.approx(0.5)

    @given(arrays(float, (3,), elements=st.floats(-3, 3)),
           arrays(float, (3,), elements=st.floats(-3, 3)))
    def test_kl_nonnegative(self, mu, logvar):
        assert nn.kl_gaussian(mu, logvar).item() >= -1e-12

    def test_kl_shape_mismatch(self):
        with pytest.raises(ValueError):
            nn.kl_gaussian(np.zeros(2), np.zeros(3))

    def test_bce_half(self):
        assert nn.binary_cross_entropy([0.5], [1.0]).item() == pytest.approx(math.log(2))

    def test_bce_perfect(self):
        assert nn.binary_cross_entropy([1.0, 0.0], [1.0, 0.0]).item() < 1e-6

    def test_bce_three_elements(self):
        p, y = np.array([0.9, 0.2, 0.6]), np.array([1.0, 0.0, 0.0])
        expected = -(math.log(0.9) + math.log(0.8) + math.log(0.4)) / 3
        assert nn.binary_cross_entropy(p, y).item() == pytest.approx(expected, abs=1e-12)

    def test_bce_target_range(self):
        with pytest.raises(ValueError):
            nn.binary_cross_entropy([0.5], [2.0])

    def test_cce_uniform_weights(self):
        p = np.array([[0.7, 0.3], [0.4, 0.6]])
        y = np.eye(2)
        plain = nn.categorical_cross_entropy(p, y).item()
        assert nn.categorical_cross_entropy(p, y, [1.0, 1.0]).item() == pytest.approx(plain)
        assert nn.categorical_cross_entropy(p, y, [3.0, 3.0]).item() == pytest.approx(plain)

    def test_cce_perfect(self):
        assert nn.categorical_cross_entropy(np.eye(3), np.eye(3)).item() < 1e-6

    def test_cce_weighted_hand(self):
        p = np.array([[0.8, 0.2], [0.3, 0.7]])
        y = np.eye(2)
        expected = (2 * -math.log(0.8) + 1 * -math.log(0.7)) / 3
        assert nn.categorical_cross_entropy(p, y, [2.0, 1.0]).item() == pytest.approx(expected)

    def test_cce_unnormalized_rows(self):
        with pytest.raises(ValueError):
            nn.categorical_cross_entropy([[0.5, 0.6]], [[1.0, 0.0]])

    def test_mse_identical_and_unit(self):
        x = np.arange(6.0).reshape(2, 3)
        assert nn.mean_squared_error(x, x).item() == 0.0
        assert nn.mean_squared_error(x + 1, x).item() == pytest.approx(1.0)

    def test_mse_loop_oracle(self, rng):
        a, b = rng.standard_normal((4, 5)), rng.standard_normal((4, 5))
        total = 0.0
        for i in range(4):
            for j in range(5):
                total += (a[i, j] - b[i, j]) ** 2
        assert nn.mean_squared_error(a, b).item() == pytest.approx(total / 20, abs=1e-12)


class TestRecurrent:
    def test_zero_weights_zero_states(self, rng):
        u = 3
        out = T.lstm(rng.standard_normal((2, 4, 5)), np.zeros((5, 4 * u)), np.zeros((u, 4 * u)),
                     np.zeros(4 * u))
        assert not out.data.any()

    def test_single_unit_single_step(self):
        w = np.array([[0.5, -0.3, 0.8, 0.1]])
        b = np.array([0.1, 0.2, -0.1, 0.0])
        out = T.lstm(np.array([[[2.0]]]), w, np.zeros((1, 4)), b).data
        a = 2.0 * w[0] + b
        c = sig(a[0]) * np.tanh(a[2])
        assert out[0, 0, 0] == pytest.approx(sig(a[3]) * np.tanh(c), abs=1e-15)

    @pytest.mark.parametrize("reverse", [False, True])
    def test_matches_loop_oracle(self, rng, reverse):
        x = rng.standard_normal((3, 6, 4))
        w, r, b = rng.standard_normal((4, 8)), rng.standard_normal((2, 8)), rng.standard_normal(8)
        np.testing.assert_allclose(T.lstm(x, w, r, b, reverse).data,
                                   lstm_oracle(x, w, r, b, reverse), atol=1e-12)

    def test_bidirectional_width(self, rng):
        layer = make_layer(LayerSpec("bidirectional-lstm", units=5), 3, "b")
        store = nn.ParamStore()
        layer.init(store, rng)
        assert layer(store, rng.standard_normal((2, 7, 3))).shape == (2, 7, 10)

    def test_width_mismatch(self, rng):
        with pytest.raises(ValueError):
            T.lstm(np.zeros((1, 2, 3)), np.zeros((4, 8)), np.zeros((2, 8)), np.zeros(8))


class TestConvolution:
    def test_identity_kernel(self, rng):
        x = rng.standard_normal((1, 5, 1))
        np.testing.assert_array_equal(T.conv1d(x, np.ones((1, 1, 1)), np.zeros(1)).data, x)

    def test_hand_cross_correlation(self):
        out = T.conv1d(np.array([1.0, 2.0, 3.0]).reshape(1, 3, 1), np.ones((3, 1, 1)), np.zeros(1))
        np.testing.assert_array_equal(out.data.ravel(), [3.0, 6.0, 5.0])

    @pytest.mark.parametrize("stride,kernel", [(1, 3), (2, 4), (2, 5), (1, 2)])
    def test_loop_oracle(self, rng, stride, kernel):
        x, w = rng.standard_normal((2, 9, 3)), rng.standard_normal((kernel, 3, 4))
        np.testing.assert_allclose(T.conv1d(x, w, np.zeros(4), stride).data,
                                   conv_oracle(x, w, stride), atol=1e-12)

    def test_stride_shapes(self, rng):
        x = rng.standard_normal((1, 200, 2))
        assert T.conv1d(x, rng.standard_normal((5, 2, 3)), np.zeros(3), 2).shape == (1, 100, 3)
        y = rng.standard_normal((1, 50, 3))
        assert T.conv1d_transpose(y, rng.standard_normal((4, 2, 3)), np.zeros(2)).shape == \
            (1, 100, 2)

    @pytest.mark.parametrize("stride,kernel", [(2, 4), (2, 3), (1, 5)])
    def test_adjoint_identity(self, rng, stride, kernel):
        w = rng.standard_normal((kernel, 3, 5))
        x = rng.standard_normal((2, 8 * stride, 3))
        y = rng.standard_normal((2, 8, 5))
        lhs = np.vdot(T.conv1d(x, w, np.zeros(5), stride).data, y)
        rhs = np.vdot(x, T.conv1d_transpose(y, w, np.zeros(3), stride).data)
        assert abs(lhs - rhs) < 1e-8

    def test_zero_kernel_transpose(self, rng):
        out = T.conv1d_transpose(rng.standard_normal((1, 4, 2)), np.zeros((3, 2, 2)), np.zeros(2))
        assert not out.data.any()

    def test_kernel_limit(self):
        with pytest.raises(ValueError):
            Conv1D("c", 1, 1, 9)


class TestAttention:
    def _layer(self, rng, dim, heads):
        layer = MultiHeadAttention("a", dim, heads)
        store = nn.ParamStore()
        layer.init(store, rng)
        return layer, store

    def test_rows_sum_to_one(self, rng):
        layer, store = self._layer(rng, 6, 3)
        attn, _ = layer.weights_and_output(store, rng.standard_normal((2, 5, 6)))
        np.testing.assert_allclose(attn.data.sum(axis=-1), 1.0, atol=1e-6)

    def test_zero_query_key_is_uniform_mean(self, rng):
        layer, store = self._layer(rng, 4, 2)
        for name in ("a.Wq", "a.bq", "a.Wk", "a.bk"):
            store.params[name] = T.parameter(np.zeros_like(store[name].data))
        x = rng.standard_normal((1, 3, 4))
        out = layer(store, x).data[0]
        v = x[0] @ store["a.Wv"].data + store["a.bv"].data
        expected = v.mean(axis=0) @ store["a.Wo"].data + store["a.bo"].data
        np.testing.assert_allclose(out, np.tile(expected, (3, 1)), atol=1e-12)

    def test_two_position_hand_case(self):
        layer = MultiHeadAttention("a", 2, 1)
        store = nn.ParamStore()
        for part in "qkvo":
            store.add(f"a.W{part}", np.eye(2))
            store.add(f"a.b{part}", np.zeros(2))
        x = np.array([[[1.0, 0.0], [0.0, 2.0]]])
        s = np.array([[1.0, 0.0], [0.0, 4.0]]) / math.sqrt(2)
        wts = np.exp(s) / np.exp(s).sum(axis=1, keepdims=True)
        np.testing.assert_allclose(layer(store, x).data[0], wts @ x[0], atol=1e-12)

    def test_multi_head_oracle(self, rng):
        layer, store = self._layer(rng, 6, 3)
        x = rng.standard_normal((1, 4, 6))
        params = {k[2:]: v.data for k, v in store.params.items()}
        np.testing.assert_allclose(layer(store, x).data[0], attention_oracle(x[0], params, 3),
                                   atol=1e-12)

    def test_heads_must_divide(self):
        with pytest.raises(ValueError):
            MultiHeadAttention("a", 6, 4)


class TestPoolingAndNorm:
    def test_max_pool(self):
        out = MaxPool1D(2)(None, np.array([1.0, 3.0, 2.0, 5.0]).reshape(1, 4, 1))
        np.testing.assert_array_equal(out.data.ravel(), [3.0, 5.0])

    def test_max_pool_odd_repeats_last(self):
        out = MaxPool1D(2)(None, np.array([1.0, 3.0, 7.0]).reshape(1, 3, 1))
        np.testing.assert_array_equal(out.data.ravel(), [3.0, 7.0])

    @given(arrays(float, (1, 7, 2), elements=st.floats(-10, 10)))
    def test_max_pool_property(self, x):
        out = MaxPool1D(2)(None, x).data
        for t in range(4):
            np.testing.assert_array_equal(out[0, t], x[0, 2 * t:2 * t + 2].max(axis=0))

    def test_global_average(self):
        out = GlobalAvgPool1D()(None, np.array([[[1.0, 3.0], [3.0, 5.0]]]))
        np.testing.assert_array_equal(out.data, [[2.0, 4.0]])

    def _bn(self, rng, channels):
        bn = BatchNorm1D("bn", channels)
        store = nn.ParamStore()
        bn.init(store, rng)
        return bn, store

    def test_batch_norm_zero_mean(self, rng):
        bn, store = self._bn(rng, 3)
        out = bn(store, rng.standard_normal((4, 5, 3)) * 3 + 1, Context(training=True))
        np.testing.assert_allclose(out.data.mean(axis=(0, 1)), 0.0, atol=1e-6)

    def test_batch_norm_constant_channel(self, rng):
        bn, store = self._bn(rng, 1)
        out = bn(store, np.full((3, 2, 1), 4.0), Context(training=True))
        assert not out.data.any()

    def test_batch_norm_two_samples(self, rng):
        bn, store = self._bn(rng, 1)
        out = bn(store, np.array([[[1.0]], [[3.0]]]), Context(training=True))
        np.testing.assert_allclose(out.data.ravel(), [-1 / math.sqrt(1 + 1e-3),
                                                      1 / math.sqrt(1 + 1e-3)], atol=1e-12)

    def test_batch_norm_single_sample(self, rng):
        bn, store = self._bn(rng, 2)
        with pytest.raises(ValueError):
            bn(store, np.ones((1, 3, 2)), Context(training=True))

    def test_running_stats_update(self, rng):
        bn, store = self._bn(rng, 1)
        ctx = Context(training=True)
        bn(store, np.array([[[1.0]], [[3.0]]]), ctx)
        nn.apply_updates(store, ctx)
        assert store.buffers["bn.mean"][0] == pytest.approx(0.01 * 2.0)


class TestDropoutDenseEmbedding:
    def test_rate_zero_and_inference(self, rng):
        x = rng.standard_normal((10,))
        np.testing.assert_array_equal(nn.dropout(x, 0.0, Context(True, rng)).data, x)
        np.testing.assert_array_equal(nn.dropout(x, 0.9).data, x)

    def test_survivor_fraction(self, rng):
        out = nn.dropout(np.ones(100_000), 0.5, Context(True, rng)).data
        assert abs((out > 0).mean() - 0.5) < 0.01
        assert set(np.unique(out)) <= {0.0, 2.0}

    def test_rate_one_rejected(self):
        with pytest.raises(ValueError):
            nn.dropout(np.ones(3), 1.0)

    def test_dense_identity(self, rng):
        layer = Dense("d", 3, 3)
        store = nn.ParamStore()
        store.add("d.W", np.eye(3))
        store.add("d.b", np.zeros(3))
        x = rng.standard_normal((2, 3))
        np.testing.assert_array_equal(layer(store, x).data, x)

    def test_softmax_rows(self, rng):
        layer = Dense("d", 4, 5, "softmax")
        store = nn.ParamStore()
        layer.init(store, rng)
        np.testing.assert_allclose(layer(store, rng.standard_normal((3, 4))).data.sum(-1), 1.0,
                                   atol=1e-6)

    def test_embedding_rows(self, rng):
        layer = Embedding("e", 6, 3)
        store = nn.ParamStore()
        layer.init(store, rng)
        np.testing.assert_array_equal(layer(store, np.array([4, 0])).data,
                                      store["e.table"].data[[4, 0]])
        with pytest.raises(IndexError):
            layer(store, np.array([6]))

    def test_activation_constants(self):
        x = T.as_tensor(np.array([-1.0, 2.0]))
        np.testing.assert_allclose(T.leaky_relu(x).data, [-0.2, 2.0])
        np.testing.assert_allclose(T.elu(x).data, [math.exp(-1) - 1, 2.0])


class TestCheckpoint:
    def test_round_trip(self, rng, tmp_path):
        store = nn.ParamStore()
        store.add("w", rng.standard_normal((3, 4)))
        store.add("ünï.b", rng.standard_normal(2))
        store.add_buffer("bn.mean", rng.standard_normal(3))
        path = tmp_path / "m.gft"
        checkpoint.save(store, path)
        assert path.read_bytes()[:4] == b"GFT1"
        loaded = checkpoint.load(nn.ParamStore(), path)
        for name in store:
            np.testing.assert_allclose(loaded[name].data, store[name].data, rtol=1e-6)
        np.testing.assert_allclose(loaded.buffers["bn.mean"], store.buffers["bn.mean"], rtol=1e-6)

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            checkpoint.loads(b"NOPE\x00\x00\x00\x00")

    def test_float32_mode(self):
        T.set_default_dtype(np.float32)
        assert T.parameter([1.0]).data.dtype == np.float32
        with pytest.raises(ValueError):
            T.set_default_dtype(np.int32)
