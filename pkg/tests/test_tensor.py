import math

import numpy as np
import numpy.testing as npt
import pytest

from specforce_diffusion.gen_tools.core.exceptions import NonFiniteError, TapeError, TensorShapeError
from specforce_diffusion.gen_tools.tensor import ops
from specforce_diffusion.gen_tools.tensor.gradcheck import max_relative_error
from specforce_diffusion.gen_tools.tensor.layers import BatchNorm, Conv2d, GroupNorm, Linear, Module, group_count
from specforce_diffusion.gen_tools.tensor.optim import (Adam, AdamHyperParams, OptimizerState,
                                                         optimizer_step)
from specforce_diffusion.gen_tools.tensor.tensor import (GradientTape, Parameter, Tensor, default_dtype,
                                                          get_default_dtype, set_default_dtype,
                                                          set_nonfinite_trap)

GRAD_TOLERANCE = 1e-4


def weighted_sum(out, weights):
    return ops.sum_all(ops.mul(out, Tensor(weights)))


def param(rng, *shape):
    return Parameter(rng.standard_normal(shape))


class TestTensorBasics:
    def test_float_data_is_cast_to_default_dtype(self):
        t = Tensor(np.ones(3, dtype=np.float64))
        assert t.dtype == np.float32

    def test_integer_data_is_left_alone(self):
        assert Tensor(np.arange(3)).dtype.kind == "i"

    def test_default_dtype_context_restores(self):
        with default_dtype(np.float64):
            assert Tensor([1.0]).dtype == np.float64
        assert get_default_dtype() == np.float32

    def test_unsupported_dtype_rejected(self):
        with pytest.raises(ValueError):
            set_default_dtype(np.float16)

    def test_operator_overloads(self, float64):
        a, b = Tensor([1.0, 2.0]), Tensor([3.0, 5.0])
        npt.assert_allclose((a + b).data, [4.0, 7.0])
        npt.assert_allclose((b - a).data, [2.0, 3.0])
        npt.assert_allclose((a * b).data, [3.0, 10.0])
        npt.assert_allclose((2.0 * a).data, [2.0, 4.0])
        npt.assert_allclose((-a).data, [-1.0, -2.0])


class TestGradientTape:
    def test_only_gradient_paths_are_recorded(self, float64):
        w = Parameter([1.0, 2.0])
        c = Tensor([3.0, 4.0])
        with GradientTape() as tape:
            ops.add(c, c)
            loss = ops.sum_all(ops.mul(w, c))
        assert tape.primitives == ["mul", "sum"]
        npt.assert_allclose(tape.gradient(loss, [w])[0], [3.0, 4.0])

    def test_shared_input_accumulates(self, float64):
        x = Parameter([1.5, -2.0])
        with GradientTape() as tape:
            loss = ops.sum_all(ops.add(x, x))
        npt.assert_allclose(tape.gradient(loss, [x])[0], [2.0, 2.0])

    def test_unreachable_parameter_gets_zeros(self, float64):
        x, unused = Parameter([1.0]), Parameter([[1.0, 2.0]])
        with GradientTape() as tape:
            loss = ops.sum_all(ops.square(x))
        grads = tape.gradient(loss, [x, unused])
        npt.assert_allclose(grads[0], [2.0])
        npt.assert_array_equal(grads[1], np.zeros((1, 2)))

    def test_loss_from_another_tape_raises(self, float64):
        x = Parameter([1.0])
        with GradientTape():
            loss = ops.sum_all(x)
        with GradientTape() as other:
            ops.square(x)
        with pytest.raises(TapeError):
            other.gradient(loss, [x])

    def test_non_scalar_loss_needs_adjoint(self, float64):
        x = Parameter([1.0, 2.0])
        with GradientTape() as tape:
            y = ops.square(x)
        with pytest.raises(TapeError):
            tape.gradient(y, [x])
        npt.assert_allclose(tape.gradient(y, [x], loss_adjoint=np.array([1.0, 0.5]))[0], [2.0, 2.0])

    def test_nothing_recorded_without_tape(self, float64):
        x = Parameter([1.0])
        y = ops.square(x)
        assert y.requires_grad
        with GradientTape() as tape:
            pass
        assert tape.primitives == []


class TestNonFiniteTrap:
    def test_trap_names_the_primitive(self):
        set_nonfinite_trap(True)
        with pytest.raises(NonFiniteError) as info:
            ops.shift(Tensor([np.inf, 1.0]), 1.0)
        assert info.value.details["primitive"] == "shift"

    def test_trap_off_lets_values_through(self):
        out = ops.shift(Tensor([np.inf]), 1.0)
        assert np.isinf(out.data[0])


class TestShapeChecks:
    def test_add_requires_equal_shapes(self):
        with pytest.raises(TensorShapeError) as info:
            ops.add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))
        assert info.value.details["primitive"] == "add"

    def test_linear_mismatch(self):
        with pytest.raises(TensorShapeError):
            ops.linear(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))

    def test_conv_kernel_larger_than_input(self):
        with pytest.raises(TensorShapeError):
            ops.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 5, 5))))

    def test_reshape_to_incompatible_size(self):
        with pytest.raises(TensorShapeError):
            ops.reshape(Tensor(np.zeros(6)), (4,))

    def test_embedding_id_out_of_range(self):
        with pytest.raises(TensorShapeError):
            ops.embedding(np.array([0, 5]), Tensor(np.zeros((4, 2))))

    def test_cross_entropy_label_count(self):
        with pytest.raises(TensorShapeError):
            ops.cross_entropy(Tensor(np.zeros((3, 4))), np.array([0, 1]))


class TestForwardValues:
    def test_conv2d_matches_direct_oracle(self, float64, rng):
        x = rng.standard_normal((2, 3, 7, 6))
        w = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        out = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, padding=1)
        npt.assert_allclose(out.data, ops.conv2d_direct(x, w, b, stride=2, padding=1), rtol=1e-12, atol=1e-12)

    def test_conv1d_matches_height_one_conv2d(self, float64, rng):
        x = rng.standard_normal((2, 3, 11))
        w = rng.standard_normal((5, 3, 5))
        out = ops.conv1d(Tensor(x), Tensor(w), None, stride=1, padding=2)
        expected = ops.conv2d_direct(x[:, :, None, :], w[:, :, None, :], None, stride=1, padding=(0, 2))
        npt.assert_allclose(out.data, expected[:, :, 0, :], rtol=1e-12, atol=1e-12)

    def test_softmax_rows_sum_to_one(self, float64, rng):
        out = ops.softmax(Tensor(rng.standard_normal((4, 7)) * 30.0))
        npt.assert_allclose(out.data.sum(axis=1), np.ones(4))

    def test_cross_entropy_of_uniform_logits(self, float64):
        loss = ops.cross_entropy(Tensor(np.zeros((5, 4))), np.array([0, 1, 2, 3, 0]))
        assert loss.item() == pytest.approx(math.log(4.0))

    def test_max_pool_drops_remainder(self, float64):
        x = Tensor(np.arange(25, dtype=np.float64).reshape(1, 1, 5, 5))
        out = ops.max_pool2d(x, 2)
        npt.assert_array_equal(out.data[0, 0], [[6.0, 8.0], [16.0, 18.0]])

    def test_adaptive_average_of_constant(self, float64):
        out = ops.adaptive_avg_pool2d(Tensor(np.full((1, 2, 7, 5), 3.0)), 4)
        assert out.shape == (1, 2, 4, 4)
        npt.assert_allclose(out.data, 3.0)

    def test_upsample_repeats_pixels(self, float64):
        out = ops.upsample_nearest2d(Tensor(np.array([[[[1.0, 2.0]]]])), 2)
        npt.assert_array_equal(out.data[0, 0], [[1.0, 1.0, 2.0, 2.0], [1.0, 1.0, 2.0, 2.0]])

    def test_attention_weights_are_row_stochastic(self, float64, rng):
        q, k, v = (Tensor(rng.standard_normal((2, 4, 6))) for _ in range(3))
        out, weights = ops.attention(q, k, v, return_weights=True)
        assert out.shape == (2, 4, 6)
        npt.assert_allclose(weights.data.sum(axis=-1), np.ones((2, 6)))

    def test_dropout_identity_in_eval(self, rng):
        x = Tensor(np.ones((3, 3)))
        assert ops.dropout(x, 0.5, rng, training=False) is x

    def test_dropout_rescales_kept_units(self, float64, rng):
        out = ops.dropout(Tensor(np.ones((50, 50))), 0.5, rng, training=True)
        assert set(np.unique(out.data)) <= {0.0, 2.0}

    def test_batch_norm_updates_running_stats(self, float64, rng):
        x = rng.standard_normal((8, 2, 5)) + np.array([1.0, -2.0])[None, :, None]
        mean, var = np.zeros(2), np.ones(2)
        out = ops.batch_norm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), mean, var, training=True)
        npt.assert_allclose(out.data.mean(axis=(0, 2)), 0.0, atol=1e-12)
        npt.assert_allclose(mean, 0.1 * x.mean(axis=(0, 2)))

    def test_batch_norm_eval_uses_running_stats(self, float64):
        x = np.full((2, 1, 3), 5.0)
        out = ops.batch_norm(Tensor(x), Tensor([2.0]), Tensor([1.0]), np.array([1.0]), np.array([4.0]),
                             training=False, eps=0.0)
        npt.assert_allclose(out.data, 2.0 * (5.0 - 1.0) / 2.0 + 1.0)

    def test_group_norm_normalizes_each_group(self, float64, rng):
        x = rng.standard_normal((2, 4, 3, 3)) * 5.0 + 2.0
        out = ops.group_norm(Tensor(x), 2, Tensor(np.ones(4)), Tensor(np.zeros(4)))
        grouped = out.data.reshape(2, 2, -1)
        npt.assert_allclose(grouped.mean(axis=2), 0.0, atol=1e-12)
        npt.assert_allclose(grouped.std(axis=2), 1.0, atol=1e-4)


class TestGradients:
    """Central differences in 64-bit against the recorded adjoints."""

    def check(self, fn, inputs, rng):
        assert max_relative_error(fn, inputs, rng, checks=200) < GRAD_TOLERANCE

    def test_linear(self, float64, rng):
        x, w, b = param(rng, 4, 5), param(rng, 3, 5), param(rng, 3)
        weights = rng.standard_normal((4, 3))
        self.check(lambda: weighted_sum(ops.linear(x, w, b), weights), [x, w, b], rng)

    def test_conv2d_strided_padded(self, float64, rng):
        x, w, b = param(rng, 2, 3, 6, 5), param(rng, 4, 3, 3, 3), param(rng, 4)
        weights = rng.standard_normal((2, 4, 3, 3))
        self.check(lambda: weighted_sum(ops.conv2d(x, w, b, stride=2, padding=1), weights), [x, w, b], rng)

    def test_conv1d(self, float64, rng):
        x, w, b = param(rng, 2, 3, 9), param(rng, 2, 3, 5), param(rng, 2)
        weights = rng.standard_normal((2, 2, 9))
        self.check(lambda: weighted_sum(ops.conv1d(x, w, b, padding=2), weights), [x, w, b], rng)

    def test_group_norm(self, float64, rng):
        x, g, b = param(rng, 2, 4, 3, 3), param(rng, 4), param(rng, 4)
        weights = rng.standard_normal((2, 4, 3, 3))
        self.check(lambda: weighted_sum(ops.group_norm(x, 2, g, b), weights), [x, g, b], rng)

    def test_batch_norm_training(self, float64, rng):
        x, g, b = param(rng, 6, 3, 4), param(rng, 3), param(rng, 3)
        mean, var = np.zeros(3), np.ones(3)
        weights = rng.standard_normal((6, 3, 4))
        self.check(lambda: weighted_sum(ops.batch_norm(x, g, b, mean, var, training=True), weights),
                   [x, g, b], rng)

    def test_attention(self, float64, rng):
        q, k, v = param(rng, 2, 3, 4), param(rng, 2, 3, 4), param(rng, 2, 3, 4)
        weights = rng.standard_normal((2, 3, 4))
        self.check(lambda: weighted_sum(ops.attention(q, k, v), weights), [q, k, v], rng)

    def test_cross_entropy_and_silu(self, float64, rng):
        x, w = param(rng, 5, 4), param(rng, 3, 4)
        labels = np.array([0, 2, 1, 1, 0])
        self.check(lambda: ops.cross_entropy(ops.linear(ops.silu(x), w), labels), [x, w], rng)

    def test_pooling_and_upsampling(self, float64, rng):
        x = param(rng, 2, 2, 6, 6)
        weights = rng.standard_normal((2, 2, 6, 6))

        def fn():
            pooled = ops.max_pool2d(x, 2)
            return weighted_sum(ops.upsample_nearest2d(pooled, 2), weights)

        self.check(fn, [x], rng)

    def test_adaptive_pool_and_log_softmax(self, float64, rng):
        x = param(rng, 2, 3, 7)
        weights = rng.standard_normal((2, 3, 3))
        self.check(lambda: weighted_sum(ops.log_softmax(ops.adaptive_avg_pool1d(x, 3)), weights), [x], rng)

    def test_structural_ops(self, float64, rng):
        a, b = param(rng, 2, 3, 4), param(rng, 2, 2, 4)
        weights = rng.standard_normal((4, 8))

        def fn():
            joined = ops.concat([a, b], axis=1)
            part = ops.slice_channels(joined, 1, 5)
            return weighted_sum(ops.reshape(ops.transpose(part, (1, 0, 2)), (4, 8)), weights)

        self.check(fn, [a, b], rng)

    def test_embedding_and_add_channel(self, float64, rng):
        x, table = param(rng, 2, 3, 4), param(rng, 5, 3)
        ids = np.array([4, 4])
        weights = rng.standard_normal((2, 3, 4))
        self.check(lambda: weighted_sum(ops.add_channel(x, ops.embedding(ids, table)), weights), [x, table], rng)


class TestAdam:
    def test_first_step_moves_by_learning_rate(self):
        p = Parameter(np.array([1.0]))
        Adam([("p", p)], AdamHyperParams(lr=0.1)).step([np.array([1.0], dtype=np.float32)])
        assert p.data[0] == pytest.approx(0.9, abs=1e-6)

    def test_decoupled_weight_decay(self):
        p = Parameter(np.array([1.0]))
        Adam([("p", p)], AdamHyperParams(lr=0.1, weight_decay=0.01, decoupled=True)).step(
            [np.array([1.0], dtype=np.float32)])
        assert p.data[0] == pytest.approx(0.899, abs=1e-6)

    def test_coupled_weight_decay_goes_through_the_moments(self):
        p = Parameter(np.array([1.0]))
        Adam([("p", p)], AdamHyperParams(lr=0.1, weight_decay=0.5, decoupled=False)).step(
            [np.array([1.0], dtype=np.float32)])
        assert p.data[0] == pytest.approx(0.9, abs=1e-6)

    def test_skip_policy_leaves_parameters(self):
        p = Parameter(np.array([1.0, 2.0]))
        state = OptimizerState(hyper=AdamHyperParams(nonfinite="skip"))
        applied = optimizer_step(state, [("p", p)], [np.array([np.nan, 1.0])])
        assert not applied
        assert state.step == 0
        npt.assert_array_equal(p.data, [1.0, 2.0])

    def test_trap_policy_raises(self):
        p = Parameter(np.array([1.0]))
        state = OptimizerState(hyper=AdamHyperParams())
        with pytest.raises(NonFiniteError):
            optimizer_step(state, [("p", p)], [np.array([np.inf])])

    def test_gradient_shape_checked(self):
        p = Parameter(np.zeros((2, 2)))
        with pytest.raises(TensorShapeError):
            optimizer_step(OptimizerState(hyper=AdamHyperParams()), [("p", p)], [np.zeros(4)])

    def test_state_survives_tensor_export(self):
        p = Parameter(np.array([0.5, -0.5]))
        optimizer = Adam([("layer/weight", p)], AdamHyperParams(lr=0.01))
        for _ in range(3):
            optimizer.step([np.array([0.2, -0.1], dtype=np.float32)])
        restored = OptimizerState.from_tensors(optimizer.state.hyper, optimizer.state.step,
                                               optimizer.state.tensors())
        assert restored.step == 3
        npt.assert_array_equal(restored.m["layer/weight"], optimizer.state.m["layer/weight"])
        npt.assert_array_equal(restored.v["layer/weight"], optimizer.state.v["layer/weight"])

    def test_minimizes_a_quadratic(self, float64):
        p = Parameter(np.array([3.0, -2.0]))
        optimizer = Adam([("p", p)], AdamHyperParams(lr=0.1))
        for _ in range(300):
            with GradientTape() as tape:
                loss = ops.sum_all(ops.square(p))
            optimizer.step(tape.gradient(loss, [p]))
        npt.assert_allclose(p.data, 0.0, atol=1e-2)


class _Net(Module):
    def __init__(self, rng):
        super().__init__()
        self.conv = Conv2d(2, 4, 3, rng)
        self.norm = BatchNorm(4)
        self.blocks = [GroupNorm(4), Linear(4, 2, rng)]


class TestModules:
    def test_parameter_names_follow_attribute_order(self, rng):
        names = [name for name, _ in _Net(rng).named_parameters()]
        assert names == ["conv/weight", "conv/bias", "norm/weight", "norm/bias",
                         "blocks/0/weight", "blocks/0/bias", "blocks/1/weight", "blocks/1/bias"]

    def test_state_dict_round_trip(self, rng):
        source, target = _Net(rng), _Net(np.random.default_rng(99))
        source.norm._buffers["running_mean"][:] = 0.25
        target.load_state_dict(source.state_dict())
        for (name, a), (_, b) in zip(source.named_parameters(), target.named_parameters()):
            npt.assert_array_equal(a.data, b.data, err_msg=name)
        npt.assert_array_equal(target.norm._buffers["running_mean"], 0.25)

    def test_state_dict_mismatch_lists_keys(self, rng):
        state = _Net(rng).state_dict()
        del state["conv/bias"]
        state["extra"] = np.zeros(1)
        with pytest.raises(TensorShapeError) as info:
            _Net(rng).load_state_dict(state)
        assert info.value.details["missing"] == ["conv/bias"]
        assert info.value.details["unexpected"] == ["extra"]

    def test_train_eval_propagates(self, rng):
        net = _Net(rng).eval()
        assert not net.norm.training and not net.blocks[0].training
        assert net.train().conv.training

    def test_parameter_count(self, rng):
        assert _Net(rng).parameter_count() == (4 * 2 * 9 + 4) + 8 + 8 + (2 * 4 + 2)

    @pytest.mark.parametrize("channels,expected", [(8, 2), (32, 8), (128, 32), (96, 24), (3, 1)])
    def test_group_count(self, channels, expected):
        assert group_count(channels) == expected
