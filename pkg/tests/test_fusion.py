import itertools

import numpy as np
import pytest

from mixmas.errors import DimensionError, ValidationError
from mixmas.fusion import fuse, fused_tokens
from mixmas.gradcheck import grad_check, projected
from mixmas.tensor import Tensor


def test_identical_inputs_are_fixed_points():
    v = Tensor([0.3, -1.2, 4.0])
    for kind in ("mean", "max"):
        np.testing.assert_array_equal(fuse(kind, [v, v]).tokens.data, [[0.3, -1.2, 4.0]])


def test_hand_values():
    a, b = Tensor([1.0, -2.0]), Tensor([0.0, 5.0])
    np.testing.assert_array_equal(fuse("max", [a, b]).tokens.data, [[1, 5]])
    np.testing.assert_array_equal(fuse("mean", [a, b]).tokens.data, [[0.5, 1.5]])


def test_concat_places_rows_in_order():
    rng = np.random.default_rng(0)
    es = [rng.standard_normal(8) for _ in range(3)]
    fused = fuse("concat", [Tensor(e) for e in es])
    assert fused.tokens.shape == (3, 8)
    for i, e in enumerate(es):
        np.testing.assert_array_equal(fused.tokens.data[i], e)
    np.testing.assert_array_equal(fused.flat().data, np.concatenate(es))


def test_batched_fusion_keeps_width():
    rng = np.random.default_rng(1)
    es = [Tensor(rng.standard_normal((5, 4))) for _ in range(2)]
    assert fuse("concat", es).tokens.shape == (5, 2, 4)
    assert fuse("mean", es).tokens.shape == (5, 1, 4)
    assert fuse("max", es).flat().shape == (5, 4)


def test_permutation_properties():
    rng = np.random.default_rng(2)
    es = [rng.standard_normal(5) for _ in range(4)]
    base = {k: fuse(k, [Tensor(e) for e in es]).tokens.data for k in ("concat", "mean", "max")}
    for perm in itertools.permutations(range(4)):
        out = {k: fuse(k, [Tensor(es[i]) for i in perm]).tokens.data for k in base}
        np.testing.assert_allclose(out["mean"], base["mean"], rtol=0, atol=1e-15)
        np.testing.assert_array_equal(out["max"], base["max"])
        np.testing.assert_array_equal(out["concat"], base["concat"][list(perm)])


def test_width_mismatch_names_modality():
    with pytest.raises(DimensionError, match="audio"):
        fuse("concat", [Tensor(np.ones(4)), Tensor(np.ones(3))], names=["image", "audio"])


def test_needs_two_modalities_and_known_kind():
    with pytest.raises(ValidationError):
        fuse("mean", [Tensor(np.ones(4))])
    with pytest.raises(ValidationError):
        fuse("sum", [Tensor(np.ones(4))] * 2)


def test_token_counts():
    assert fused_tokens("concat", 3) == 3
    assert fused_tokens("mean", 3) == fused_tokens("max", 3) == 1


@pytest.mark.parametrize("kind", ["concat", "mean"])
def test_gradient_reaches_every_modality(kind):
    rng = np.random.default_rng(3)
    es = [Tensor(rng.standard_normal(4)) for _ in range(3)]
    f = projected(lambda: fuse(kind, es).tokens, rng)
    assert grad_check(f, es) < 1e-6
    assert all(np.all(e.grad != 0) for e in es)


def test_max_gradient_goes_to_winners_only():
    rng = np.random.default_rng(4)
    raw = rng.standard_normal((3, 6))
    es = [Tensor(r.copy()) for r in raw]
    f = projected(lambda: fuse("max", es).tokens, rng)
    assert grad_check(f, es) < 1e-6
    winners = np.argmax(raw, axis=0)
    for i, e in enumerate(es):
        assert np.all((e.grad != 0) == (winners == i))
