import numpy as np
import pytest

import oracles

from ompq import ValidationError, orm_matrix
from ompq.rng import splitmix64
from ompq.toynet import (
    ToyNet,
    ToyNetSpec,
    build,
    descriptor_for,
    forward_collect,
    input_seed_for,
    sample_inputs,
)


class TestSpec:
    def test_basic(self):
        spec = ToyNetSpec(seed=3, layer_dims=(8, 4, 2))
        assert spec.n_layers == 2

    def test_rejects_single_dim(self):
        with pytest.raises(ValidationError):
            ToyNetSpec(seed=0, layer_dims=(8,))

    def test_rejects_zero_width(self):
        with pytest.raises(ValidationError):
            ToyNetSpec(seed=0, layer_dims=(8, 0, 2))

    def test_rejects_negative_seed(self):
        with pytest.raises(ValidationError):
            ToyNetSpec(seed=-1, layer_dims=(4, 2))

    def test_rejects_bool_seed(self):
        with pytest.raises(ValidationError):
            ToyNetSpec(seed=True, layer_dims=(4, 2))

    def test_rejects_unknown_nonlinearity(self):
        with pytest.raises(ValidationError, match="nonlinearity"):
            ToyNetSpec(seed=0, layer_dims=(4, 2), nonlinearity="tanh")

    def test_rejects_zero_block_size(self):
        with pytest.raises(ValidationError):
            ToyNetSpec(seed=0, layer_dims=(4, 2), block_size=0)


class TestBuild:
    def test_weights_match_documented_generator(self):
        dims = (5, 4, 3, 2)
        net = build(ToyNetSpec(seed=42, layer_dims=dims))
        want = oracles.toynet_weights(42, dims)
        assert len(net.weights) == 3
        for got, ref in zip(net.weights, want):
            assert np.array_equal(got, ref)

    def test_odd_layer_sizes_share_the_stream(self):
        # 3*1=3 normals in the first layer leaves a cached spare that the
        # second layer must consume before drawing fresh pairs
        dims = (3, 1, 5)
        net = build(ToyNetSpec(seed=9, layer_dims=dims))
        want = oracles.toynet_weights(9, dims)
        for got, ref in zip(net.weights, want):
            assert np.array_equal(got, ref)

    def test_same_seed_reproduces(self):
        a = build(ToyNetSpec(seed=7, layer_dims=(6, 5, 4)))
        b = build(ToyNetSpec(seed=7, layer_dims=(6, 5, 4)))
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_different_seeds_differ(self):
        a = build(ToyNetSpec(seed=7, layer_dims=(6, 5)))
        b = build(ToyNetSpec(seed=8, layer_dims=(6, 5)))
        assert not np.array_equal(a.weights[0], b.weights[0])

    def test_weights_are_readonly(self):
        net = build(ToyNetSpec(seed=1, layer_dims=(3, 2)))
        with pytest.raises(ValueError):
            net.weights[0][0, 0] = 0.0

    def test_hand_weights_validated(self):
        spec = ToyNetSpec(seed=0, layer_dims=(2, 3))
        with pytest.raises(ValidationError, match="shape"):
            ToyNet(spec=spec, weights=(np.zeros((3, 2)),))
        with pytest.raises(ValidationError, match="weight matrices"):
            ToyNet(spec=spec, weights=())
        with pytest.raises(ValidationError, match="finite"):
            ToyNet(spec=spec, weights=(np.full((2, 3), np.nan),))


class TestInputs:
    def test_seed_derivation(self):
        out, _ = splitmix64(12345)
        assert input_seed_for(12345) == out
        assert input_seed_for(0) == 0xE220A8397B1DCDAF

    def test_inputs_match_documented_generator(self):
        got = sample_inputs(seed=11, n_samples=4, dim=3)
        stream = oracles.normal_stream(11)
        want = np.array([next(stream) for _ in range(12)]).reshape(4, 3)
        assert np.array_equal(got, want)

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            sample_inputs(seed=1, n_samples=0, dim=3)
        with pytest.raises(ValidationError):
            sample_inputs(seed=1, n_samples=3, dim=0)


class TestForward:
    def test_hand_relu_network(self):
        spec = ToyNetSpec(seed=0, layer_dims=(2, 2, 1))
        net = ToyNet(
            spec=spec,
            weights=(np.eye(2), np.array([[1.0], [1.0]])),
        )
        feats = forward_collect(net, np.array([[3.0, -4.0], [-1.0, 2.0]]))
        assert [f.layer_name for f in feats] == ["layer01", "layer02"]
        assert np.array_equal(feats[0].data, [[3.0, 0.0], [0.0, 2.0]])
        assert np.array_equal(feats[1].data, [[3.0], [2.0]])

    def test_identity_network_passes_inputs_through(self):
        spec = ToyNetSpec(seed=0, layer_dims=(3, 3), nonlinearity="identity")
        net = ToyNet(spec=spec, weights=(np.eye(3),))
        x = np.array([[1.0, -2.0, 3.0]])
        feats = forward_collect(net, x)
        assert np.array_equal(feats[0].data, x)

    def test_layer_count_and_name_padding(self):
        # identity keeps narrow deep chains from collapsing to all zeros
        dims = (4,) + (3,) * 12
        net = build(ToyNetSpec(seed=5, layer_dims=dims, nonlinearity="identity"))
        feats = forward_collect(net, sample_inputs(1, 6, 4))
        assert len(feats) == 12
        assert feats[9].layer_name == "layer10"
        assert feats[11].layer_name == "layer12"

    def test_relu_output_nonnegative(self):
        net = build(ToyNetSpec(seed=3, layer_dims=(6, 5, 4)))
        feats = forward_collect(net, sample_inputs(4, 32, 6))
        for f in feats:
            assert (f.data >= 0.0).all()

    def test_composition(self):
        # layer 2's features are layer 1's pushed through weight 2
        net = build(ToyNetSpec(seed=3, layer_dims=(6, 5, 4), nonlinearity="identity"))
        feats = forward_collect(net, sample_inputs(4, 16, 6))
        assert np.array_equal(feats[1].data, feats[0].data @ net.weights[1])

    def test_duplicated_transform_is_maximally_coupled(self):
        # an identity second layer reproduces the first layer's features, so
        # the pair's orthogonality entry sits at the top of the range
        spec = ToyNetSpec(seed=6, layer_dims=(5, 3, 3), nonlinearity="identity")
        first = build(ToyNetSpec(seed=6, layer_dims=(5, 3), nonlinearity="identity"))
        net = ToyNet(spec=spec, weights=(first.weights[0], np.eye(3)))
        feats = forward_collect(net, sample_inputs(2, 24, 5))
        matrix = orm_matrix(feats)
        assert matrix.values[0, 1] == pytest.approx(1.0, abs=1e-9)

    def test_rejects_wrong_width(self):
        net = build(ToyNetSpec(seed=1, layer_dims=(4, 2)))
        with pytest.raises(ValidationError):
            forward_collect(net, np.zeros((3, 5)))

    def test_rejects_non_finite(self):
        net = build(ToyNetSpec(seed=1, layer_dims=(4, 2)))
        with pytest.raises(ValidationError):
            forward_collect(net, np.full((3, 4), np.inf))


class TestDescriptor:
    def test_counts_and_grouping(self):
        spec = ToyNetSpec(seed=0, layer_dims=(8, 6, 5, 4, 3), block_size=2)
        model = descriptor_for(spec)
        assert model.names == ("layer01", "layer02", "layer03", "layer04")
        assert [l.param_count for l in model.layers] == [48, 30, 20, 12]
        assert [l.mac_count for l in model.layers] == [48, 30, 20, 12]
        assert [l.block_id for l in model.layers] == [0, 0, 1, 1]
        assert [l.stage_id for l in model.layers] == [0, 0, 0, 0]
        assert model.bit_min == 4 and model.bit_max == 8
        assert all(l.fixed_weight_bit is None for l in model.layers)
        assert all(l.activation_bit == 8 for l in model.layers)

    def test_unit_blocks(self):
        spec = ToyNetSpec(seed=0, layer_dims=(4, 4, 4, 4, 4))
        model = descriptor_for(spec)
        assert [l.block_id for l in model.layers] == [0, 1, 2, 3]
        assert [l.stage_id for l in model.layers] == [0, 0, 1, 1]

    def test_bit_range_override(self):
        spec = ToyNetSpec(seed=0, layer_dims=(4, 2))
        model = descriptor_for(spec, bit_min=2, bit_max=6)
        assert (model.bit_min, model.bit_max) == (2, 6)

    def test_names_match_forward_collect(self):
        spec = ToyNetSpec(seed=2, layer_dims=(5, 4, 3))
        feats = forward_collect(build(spec), sample_inputs(1, 8, 5))
        assert tuple(f.layer_name for f in feats) == descriptor_for(spec).names
