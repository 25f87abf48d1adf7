import itertools
import json
from pathlib import Path

import numpy as np
import pytest

from mixmas import tensor as T
from mixmas.errors import DimensionError, ValidationError
from mixmas.gradcheck import grad_check, projected
from mixmas.nn import Module
from mixmas.tensor import Tensor
from mixmas.zoo import (BLOCKS, Encoder, EncoderConfig, Head, HyperMixerBlock, MixerBlock,
                        MonarchLinear, MonarchMixerBlock, PlainBlock, PlainMLP,
                        block_kind, default_monarch_blocks, head_forward,
                        hypermixer_block_forward, mixer_block_forward, monarch_linear_forward,
                        plain_mlp_forward, register_block)

from oracles import dense_monarch

FIXTURES = Path(__file__).parent / "fixtures"


def all_blocks(rng, n=4, d=6):
    return {
        "mlp_mixer": MixerBlock(n, d, 5, 7, rng),
        "hyper_mixer": HyperMixerBlock(d, 4, 7, rng),
        "monarch_mixer": MonarchMixerBlock(n, d, rng),
        "plain_mlp": PlainBlock(d, 7, rng),
    }


# -- residual identity ------------------------------------------------------

@pytest.mark.parametrize("kind", ["mlp_mixer", "hyper_mixer", "monarch_mixer", "plain_mlp"])
def test_zero_weight_block_is_identity(kind):
    rng = np.random.default_rng(0)
    blk = all_blocks(rng)[kind]
    blk.zero_()
    x = rng.standard_normal((4, 6))
    np.testing.assert_array_equal(blk(Tensor(x)).data, x)


# -- MLP-Mixer ----------------------------------------------------------------

def _fixture_block():
    fx = json.loads((FIXTURES / "mixer_permutation_counterexample.json").read_text())
    blk = MixerBlock(3, 4, 6, 8, np.random.default_rng(0))
    for k in ("w1", "w2", "w3", "w4"):
        blk.parameters()[k].data[...] = np.array(fx[k])
    return blk, np.array(fx["x"]), fx["perm"]


def test_token_mixing_is_position_sensitive():
    blk, x, perm = _fixture_block()
    permuted_out = mixer_block_forward(blk, Tensor(x[perm])).data
    out_permuted = mixer_block_forward(blk, Tensor(x)).data[perm]
    assert np.max(np.abs(permuted_out - out_permuted)) > 1e-3
    assert np.max(np.abs(blk.token_mixing(Tensor(x[perm])).data
                         - blk.token_mixing(Tensor(x)).data[perm])) > 1e-3


def test_channel_mixing_commutes_with_token_permutation():
    blk, x, perm = _fixture_block()
    np.testing.assert_allclose(blk.channel_mixing(Tensor(x[perm])).data,
                               blk.channel_mixing(Tensor(x)).data[perm], rtol=0, atol=1e-14)


def test_mixer_token_count_error_names_both_counts():
    blk = MixerBlock(3, 4, 6, 8, np.random.default_rng(0))
    with pytest.raises(DimensionError, match="3.*5"):
        blk(Tensor(np.ones((5, 4))))


# -- HyperMixer ---------------------------------------------------------------

def test_hypermixer_permutation_equivariance():
    rng = np.random.default_rng(1)
    blk = HyperMixerBlock(6, 5, 8, rng)
    x = rng.standard_normal((4, 6))
    for perm in itertools.permutations(range(4)):
        perm = list(perm)
        a = hypermixer_block_forward(blk, Tensor(x[perm])).data
        b = hypermixer_block_forward(blk, Tensor(x)).data[perm]
        assert np.max(np.abs(a - b)) < 1e-10


def test_hypermixer_handles_any_length():
    rng = np.random.default_rng(2)
    blk = HyperMixerBlock(6, 5, 8, rng)
    assert blk(Tensor(rng.standard_normal((3, 6)))).shape == (3, 6)
    assert blk(Tensor(rng.standard_normal((7, 6)))).shape == (7, 6)


def test_hypermixer_zero_hypernetwork_leaves_channel_mlp():
    rng = np.random.default_rng(3)
    blk = HyperMixerBlock(6, 5, 8, rng)
    blk.hyper1.layers[-1].zero_()
    x = Tensor(rng.standard_normal((4, 6)))
    np.testing.assert_array_equal(blk(x).data, blk.channel_mixing(x).data)


def test_positional_info_breaks_equivariance():
    rng = np.random.default_rng(4)
    blk = HyperMixerBlock(6, 5, 8, rng, positional_info=True)
    blk.pos.data[...] = rng.standard_normal(blk.pos.shape)
    x = rng.standard_normal((4, 6))
    perm = [1, 0, 3, 2]
    assert np.max(np.abs(blk(Tensor(x[perm])).data - blk(Tensor(x)).data[perm])) > 1e-6


def test_hypermixer_params_do_not_depend_on_length():
    counts = {n: Encoder(EncoderConfig("hyper_mixer", d=8), n, 5, np.random.default_rng(0)).num_parameters()
              for n in (2, 9)}
    assert counts[2] == counts[9]


# -- Monarch ------------------------------------------------------------------

def test_monarch_identity_blocks_give_stride_permutation():
    layer = MonarchLinear(6, np.random.default_rng(0), blocks=2)
    layer.left.data[...] = np.eye(3)
    layer.right.data[...] = np.eye(3)
    y = monarch_linear_forward(layer, Tensor(np.arange(6.0))).data
    np.testing.assert_array_equal(y, [0, 3, 1, 4, 2, 5])


def test_monarch_matches_dense_n4_b2():
    rng = np.random.default_rng(5)
    layer = MonarchLinear(4, rng, blocks=2)
    x = rng.standard_normal(4)
    dense = dense_monarch(layer.left.data, layer.right.data)
    assert np.max(np.abs(layer(Tensor(x)).data - dense @ x)) < 1e-12
    np.testing.assert_allclose(layer.dense(), dense, rtol=0, atol=1e-15)


def test_monarch_parameter_count():
    layer = MonarchLinear(64, np.random.default_rng(0), blocks=8)
    assert layer.num_parameters() == 2 * 64 * 64 // 8 == 1024
    assert 64 * 64 == 4096


def test_monarch_rejects_non_divisor():
    with pytest.raises(ValidationError):
        MonarchLinear(10, np.random.default_rng(0), blocks=3)


@pytest.mark.parametrize("n,b", [(16, 4), (8, 2), (12, 3), (10, 2), (7, 1), (64, 8)])
def test_default_monarch_blocks(n, b):
    assert default_monarch_blocks(n) == b


def test_monarch_batched_input():
    rng = np.random.default_rng(6)
    layer = MonarchLinear(8, rng)
    x = rng.standard_normal((2, 3, 8))
    dense = dense_monarch(layer.left.data, layer.right.data)
    assert np.max(np.abs(layer(Tensor(x)).data - x @ dense.T)) < 1e-12


# -- plain MLP and head -----------------------------------------------------

def test_plain_mlp_identity_layer():
    mlp = PlainMLP([3, 3], np.random.default_rng(0))
    mlp.layers[0].weight.data[...] = np.eye(3)
    x = np.array([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(plain_mlp_forward(mlp, Tensor(x)).data, x)


def test_plain_mlp_zero_weights_give_bias():
    mlp = PlainMLP([3, 2], np.random.default_rng(0))
    mlp.layers[0].weight.data[...] = 0
    mlp.layers[0].bias.data[...] = [4.0, -1.0]
    np.testing.assert_array_equal(mlp(Tensor([9.0, 9.0, 9.0])).data, [4, -1])


def test_plain_mlp_width_mismatch():
    with pytest.raises(DimensionError):
        PlainMLP([3, 2], np.random.default_rng(0))(Tensor(np.ones(4)))


def test_head_is_zero_initialised():
    head = Head(5, 3, np.random.default_rng(0))
    head.bias.data[...] = [0.1, 0.2, 0.3]
    np.testing.assert_array_equal(head_forward(head, Tensor(np.ones(5))).data, [0.1, 0.2, 0.3])


def test_head_identity_weights():
    head = Head(3, 3, np.random.default_rng(0))
    head.weight.data[...] = np.eye(3)
    head.bias.data[...] = [1.0, 0.0, -1.0]
    np.testing.assert_allclose(head(Tensor([2.0, 3.0, 4.0])).data, [3, 3, 3])


def test_head_width_mismatch():
    with pytest.raises(DimensionError):
        Head(3, 2, np.random.default_rng(0))(Tensor(np.ones(4)))


# -- encoders -----------------------------------------------------------------

def test_depth_zero_encoder_projects_constant_tokens():
    enc = Encoder(EncoderConfig("mlp_mixer", depth=0, d=4), 3, 2, np.random.default_rng(0))
    c = np.array([0.5, -1.0])
    out = enc(Tensor(np.tile(c, (3, 1)))).data
    np.testing.assert_allclose(out, enc.proj.weight.data @ c + enc.proj.bias.data, atol=1e-15)


def test_single_token_pooling_is_identity():
    rng = np.random.default_rng(1)
    enc = Encoder(EncoderConfig("plain_mlp", depth=2, d=4), 1, 3, rng)
    x = Tensor(rng.standard_normal((1, 3)))
    h = enc.proj(x)
    for blk in enc.blocks:
        h = blk(h)
    np.testing.assert_array_equal(enc(x).data, h.data[0])


def test_plain_mlp_encoder_rejects_multiple_tokens():
    with pytest.raises(ValidationError):
        Encoder(EncoderConfig("plain_mlp"), 4, 3, np.random.default_rng(0))


def test_unknown_kind_is_rejected():
    with pytest.raises(ValidationError, match="ramlp"):
        block_kind("ramlp")


def test_registry_accepts_new_kind():
    class Scale(Module):
        def __init__(self, d):
            super().__init__()
            self.s = self.param("s", np.ones(d))

        def forward(self, x):
            return x * T.broadcast_to(self.s, x.shape)

    register_block("scale_test", lambda n, cfg, rng: Scale(cfg.d))
    try:
        enc = Encoder(EncoderConfig("scale_test", d=4), 3, 2, np.random.default_rng(0))
        assert enc(Tensor(np.ones((3, 2)))).shape == (4,)
    finally:
        del BLOCKS["scale_test"]


def test_encoder_batched_matches_unbatched():
    rng = np.random.default_rng(2)
    for kind in ("mlp_mixer", "hyper_mixer", "monarch_mixer"):
        enc = Encoder(EncoderConfig(kind, depth=2, d=8), 4, 5, rng)
        x = rng.standard_normal((3, 4, 5))
        batched = enc(Tensor(x)).data
        for i in range(3):
            np.testing.assert_allclose(batched[i], enc(Tensor(x[i])).data, rtol=0, atol=1e-13)


@pytest.mark.parametrize("kind", ["mlp_mixer", "hyper_mixer", "monarch_mixer", "plain_mlp"])
def test_encoder_depth_two_gradients(kind):
    rng = np.random.default_rng(3)
    n = 1 if kind == "plain_mlp" else 4
    enc = Encoder(EncoderConfig(kind, depth=2, d=4, hyper_hidden=3), n, 3, rng)
    x = Tensor(rng.standard_normal((n, 3)))
    f = projected(lambda: enc(x), rng)
    tensors = [x] + list(enc.parameters().values())
    assert np.all(np.isfinite(enc(x).data))
    assert grad_check(f, tensors) < 1e-5


def test_head_gradients():
    rng = np.random.default_rng(4)
    head = Head(4, 3, rng)
    head.weight.data[...] = rng.standard_normal((3, 4))
    e = Tensor(rng.standard_normal(4))
    assert grad_check(projected(lambda: head(e), rng), [e, head.weight, head.bias]) < 1e-5
