import numpy as np
import pytest

from frnet import numerics as nx
from frnet import refinement as rf
from frnet.gradcheck import end_to_end_case, check
from frnet.models import FMFRNet, ModelSpec, embed, fm_pairwise, fm_pairwise_bruteforce, fm_score
from frnet.numerics import Tensor


def test_pairwise_hand_example():
    E = Tensor(np.array([[[1.0, 0.0], [1.0, 1.0], [0.0, 2.0]]]))
    # <e1,e2> + <e1,e3> + <e2,e3> = 1 + 0 + 2
    assert fm_pairwise(E).data.item() == 3.0


def test_pairwise_single_field_is_zero():
    E = Tensor(np.random.default_rng(0).normal(size=(4, 1, 5)))
    np.testing.assert_allclose(fm_pairwise(E).data, 0, atol=1e-12)


def test_pairwise_trick_matches_bruteforce_single_precision():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        f, d = rng.integers(1, 9, size=2)
        E = rng.normal(size=(3, f, d)).astype(np.float32)
        fast = fm_pairwise(Tensor(E)).data.astype(np.float64)
        worst = max(worst, np.abs(fast - fm_pairwise_bruteforce(E)).max())
    assert worst <= 1e-5


def test_first_order_uses_raw_indices():
    table = Tensor(np.zeros((5, 2)))
    w = Tensor(np.arange(5, dtype=np.float64).reshape(5, 1))
    feats = np.array([[1, 3], [0, 4]])
    out = fm_score(embed(table, feats), feats, w, Tensor(np.array(0.5)))
    np.testing.assert_array_equal(out.data, [4.5, 4.5])


def test_embedding_gradient_is_a_scatter_add():
    table = Tensor(np.ones((4, 2)), requires_grad=True)
    nx.sum(embed(table, np.array([[0, 2], [2, 3]]))).backward()
    np.testing.assert_array_equal(table.grad[:, 1], [1, 0, 2, 1])


def spec(variant=13, n=12, f=3, d=4, **kw):
    return ModelSpec(num_features=n, num_fields=f, embed_dim=d, attn_dim=kw.pop("attn_dim", 3),
                     cie_hidden=kw.pop("cie_hidden", (6,)), variant=variant, **kw)


def test_out_of_range_index_raises():
    m = FMFRNet.initialize(spec())
    with pytest.raises(IndexError):
        m.predict(np.array([[0, 1, 12]]))


def test_wrong_field_count_raises():
    m = FMFRNet.initialize(spec())
    with pytest.raises(nx.ShapeError):
        m.predict(np.array([[0, 1]]))


def test_zero_parameters_predict_one_half():
    m = FMFRNet.initialize(spec())
    for p in m.parameters():
        p.data[...] = 0
    np.testing.assert_array_equal(m.predict(np.array([[0, 4, 8], [3, 5, 11]])), 0.5)


def test_predictions_are_probabilities():
    m = FMFRNet.initialize(spec(), seed=1)
    rng = np.random.default_rng(1)
    feats = rng.integers(0, 12, size=(50, 3))
    p = m.predict(feats)
    assert p.shape == (50,) and ((p > 0) & (p < 1)).all()


def test_variant_one_equals_plain_fm_bit_exactly():
    m = FMFRNet.initialize(spec(variant="fm"), seed=2)
    m.params["embed"].data[...] = np.random.default_rng(2).normal(size=(12, 4))
    m.params["linear_w"].data[...] = np.random.default_rng(3).normal(size=(12, 1))
    feats = np.random.default_rng(4).integers(0, 12, size=(20, 3))
    plain = nx.sigmoid(fm_score(embed(m.params["embed"], feats), feats,
                                m.params["linear_w"], m.params["bias"])).data
    assert np.array_equal(m.predict(feats), plain)
    assert set(m.params) == {"embed", "linear_w", "bias"}


def test_saturated_gate_equals_plain_fm():
    m13 = FMFRNet.initialize(spec(variant=13), seed=5)
    m1 = FMFRNet.initialize(spec(variant=1), seed=5)
    for k in ("embed", "linear_w", "bias"):
        m1.params[k].data = m13.params[k].data.copy()
    feats = np.random.default_rng(5).integers(0, 12, size=(10, 3))
    E = m13.embed(feats)
    _, g = rf.split_params({k: v for k, v in m13.params.items() if k.startswith("ieu_")})
    E_r = rf.csgate(E, rf.ieu_bit(E, g), Tensor(np.full(E.shape, np.inf, dtype=E.dtype)))
    forced = nx.sigmoid(fm_score(E_r, feats, m13.params["linear_w"], m13.params["bias"])).data
    assert np.array_equal(forced, m1.predict(feats))


def test_predict_is_deterministic_in_eval_mode():
    m = FMFRNet.initialize(spec(), seed=6)
    feats = np.random.default_rng(6).integers(0, 12, size=(30, 3))
    assert np.array_equal(m.predict(feats), m.predict(feats))
    assert np.array_equal(m.predict(feats, chunk=7), m.predict(feats))


def test_dropout_changes_training_forward():
    m = FMFRNet.initialize(spec(), seed=7)
    feats = np.random.default_rng(7).integers(0, 12, size=(30, 3))
    train = m.forward(feats, rf.Dropout(0.5, np.random.default_rng(0))).data
    assert not np.array_equal(train, m.predict(feats))


def test_parameter_names_and_count():
    m = FMFRNet.initialize(spec(), seed=0)
    names = set(m.params)
    assert {"embed", "linear_w", "bias", "ieu_w.W_Q", "ieu_g.W_P", "ieu_w.cie.0.weight"} <= names
    assert m.num_parameters() == sum(p.data.size for p in m.parameters())
    assert m.params["embed"].data.dtype == np.float32


def test_attention_width_defaults_to_embedding_width():
    s = ModelSpec(num_features=5, num_fields=2, embed_dim=6)
    assert s.attn_dim == 6


@pytest.mark.parametrize("variant", [1, 12, 13])
def test_end_to_end_gradients(variant):
    for seed in range(5):
        build, inputs = end_to_end_case(np.random.default_rng(seed), variant)
        assert check(build, inputs) < 1e-6


def test_gate_weights_shapes():
    feats = np.random.default_rng(8).integers(0, 12, size=(5, 3))
    assert FMFRNet.initialize(spec(13)).gate_weights(feats).shape == (5, 3, 4)
    assert FMFRNet.initialize(spec(12)).gate_weights(feats).shape == (5, 3, 1)
    with pytest.raises(ValueError):
        FMFRNet.initialize(spec(1)).gate_weights(feats)
