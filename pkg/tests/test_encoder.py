import numpy as np
import pytest

from hrm import data as D
from hrm.autodiff import Tensor
from hrm.encoder import EncoderConfig, encode_value

from helpers import fd_check, leaf, tiny_model


def _encode(model, das):
    return model.encode(model.make_batch(das)).enc


def _lstm(rng, E, H):
    return {"W": leaf(rng, E, 4 * H, scale=0.5), "U": leaf(rng, H, 4 * H, scale=0.5), "b": leaf(rng, 4 * H, scale=0.1)}


def test_fig1_shape_and_finite():
    model = tiny_model()
    enc = _encode(model, [D.parse_da("name[Blue Spice], familyFriendly[yes], priceRange[less than 20]")])
    assert enc.units.shape == (1, 4, 8)
    assert np.all(np.isfinite(enc.units.data))


def test_single_pair_attention_is_one():
    model = tiny_model()
    enc = _encode(model, [D.DialogueAct((("inform", ("TYPE",)),))])
    assert len(enc.attention) == 2
    for w in enc.attention:
        np.testing.assert_array_equal(w, np.ones((1, 2, 1, 1)))


def test_attention_rows_sum_to_one_with_padding():
    model = tiny_model()
    das = [D.parse_da("name[a], food[b c]"), D.parse_da("name[x]")]
    enc = _encode(model, das)
    for w in enc.attention:
        np.testing.assert_allclose(w[0].sum(axis=-1), 1.0)
        np.testing.assert_allclose(w[1, :, :2].sum(axis=-1), 1.0)
        np.testing.assert_array_equal(w[1, :, :, 2], 0.0)


def test_padding_does_not_change_units():
    model = tiny_model()
    short = D.parse_da("name[x]")
    alone = _encode(model, [short]).units.data[0]
    padded = _encode(model, [short, D.parse_da("name[a b c], food[d], area[e]")]).units.data[0, :2]
    np.testing.assert_allclose(padded, alone, atol=1e-12)


@pytest.mark.parametrize("mode", ["attention", "identity"])
def test_permutation_equivariance(mode):
    ablation = None if mode == "attention" else "no-self-attn"
    model = tiny_model(ablation=ablation, attn_layers=3, attn_heads=4)
    rng = np.random.default_rng(0)
    slots = ["name", "eatType", "food", "area", "near", "priceRange"]
    for _ in range(20):
        n = int(rng.integers(1, 6))
        picked = rng.choice(slots, size=n, replace=False)
        da = D.DialogueAct.make("inform", [(s, [str(rng.choice(["pub", "thai", "x", "y", "near"]))]) for s in picked])
        order = [int(i) for i in rng.permutation(np.arange(1, da.n))]
        perm = da.permuted(order)
        a = _encode(model, [da]).units.data[0]
        b = _encode(model, [perm]).units.data[0]
        np.testing.assert_allclose(b, a[[0] + order], atol=1e-6)


def test_unknown_slot_uses_unk_row():
    model = tiny_model()
    batch = model.make_batch([D.parse_da("neverSeenSlot[x]")])
    assert batch.slot_ids[0, 1] == model.slot_vocab.unk_id


def test_same_slot_same_embedding():
    model = tiny_model()
    batch = model.make_batch([D.parse_da("name[x]"), D.parse_da("name[y]")])
    assert batch.slot_ids[0, 1] == batch.slot_ids[1, 1]


def test_encode_value_shapes_and_single_token():
    rng = np.random.default_rng(0)
    params = {"fwd": _lstm(rng, 3, 4), "bwd": _lstm(rng, 3, 4)}
    states, final = encode_value(params, Tensor(rng.normal(size=(2, 1, 3))), [1, 1])
    assert states.shape == (2, 1, 8)
    assert final.shape == (2, 8)
    np.testing.assert_array_equal(states.data[:, 0], final.data)


def test_palindrome_with_shared_weights_is_symmetric():
    rng = np.random.default_rng(1)
    cell = _lstm(rng, 3, 4)
    params = {"fwd": cell, "bwd": cell}
    a, b = rng.normal(size=3), rng.normal(size=3)
    emb = Tensor(np.stack([a, b, a])[None])
    states, _ = encode_value(params, emb, [3])
    fwd, bwd = states.data[0, :, :4], states.data[0, :, 4:]
    np.testing.assert_allclose(fwd, bwd[::-1], atol=1e-12)


def test_reversal_swaps_directions():
    rng = np.random.default_rng(2)
    f, b = _lstm(rng, 3, 4), _lstm(rng, 3, 4)
    x = rng.normal(size=(1, 5, 3))
    states, _ = encode_value({"fwd": f, "bwd": b}, Tensor(x), [5])
    rev, _ = encode_value({"fwd": b, "bwd": f}, Tensor(x[:, ::-1].copy()), [5])
    np.testing.assert_allclose(rev.data[0, :, :4], states.data[0, ::-1, 4:], atol=1e-12)


def test_empty_value_rejected():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        encode_value({"fwd": _lstm(rng, 3, 4), "bwd": _lstm(rng, 3, 4)}, Tensor(np.zeros((1, 2, 3))), [0])


def test_encode_value_gradients():
    rng = np.random.default_rng(3)
    emb = leaf(rng, 2, 3, 3)
    params = {"fwd": _lstm(rng, 3, 2), "bwd": _lstm(rng, 3, 2)}
    w1, w2 = rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 4))

    def loss():
        s, f = encode_value(params, emb, [3, 2])
        return (s * w1).sum() + (f * w2).sum()

    flat = {"emb": emb, **{f"f{k}": v for k, v in params["fwd"].items()},
            **{f"b{k}": v for k, v in params["bwd"].items()}}
    assert fd_check(loss, flat) < 1e-6


def test_encoder_gradients_through_attention():
    model = tiny_model(attn_heads=2)
    batch = model.make_batch([D.parse_da("name[blue spice], food[thai]"), D.parse_da("name[x]")])
    w = np.random.default_rng(4).normal(size=(2, 3, 8))
    params = {k: v for k, v in model.params.items() if k.startswith(("enc/", "embed/"))}
    assert fd_check(lambda: (model.encode(batch).units * w).sum(), params, coords_per_tensor=4) < 1e-5


def test_literal_single_head_config():
    cfg = EncoderConfig(embed_dim=8, hidden_dim=8, layers=1, heads=1, residual=False)
    assert cfg.heads == 1
    model = tiny_model(attn_layers=1, attn_heads=1, attn_residual=False)
    assert "enc/attn0/Wo" not in model.params
    assert "enc/attn0/ln_g" not in model.params
    units = _encode(model, [D.parse_da("name[a], food[b]")]).units.data
    assert np.all(np.isfinite(units))


def test_encoder_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(hidden_dim=10, heads=4)
    with pytest.raises(ValueError):
        EncoderConfig(mode="conv")
