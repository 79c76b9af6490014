import numpy as np
import pytest

from litstar.encoder import MapObservation
from litstar.fuzzy import MembershipParams, RuleConsequents
from litstar.neuralnet import init_network, zero_network
from litstar.policy import (AxisSpec, PolicyTensor, bake, default_axes, load_tensor, lookup,
                            policy_value, save_tensor, tensor_from_dict, tensor_to_dict, to_index)


def test_axis_index():
    ax = AxisSpec("g", 0.0, 1.0, 21)
    assert ax.index(0.0) == 0
    assert ax.index(1.0) == 20
    assert ax.index(0.5) == 10
    assert ax.index(-3) == 0 and ax.index(1.7) == 20
    assert np.allclose(ax.centers()[:2], [0.5 / 21, 1.5 / 21])
    with pytest.raises(ValueError):
        AxisSpec("g", 1.0, 1.0)


def test_to_index_each_center_maps_to_itself():
    axes = default_axes(7)
    c = axes[0].centers()
    for i in range(7):
        assert to_index([c[i], c[i], c[i]], axes) == (i, i, i)


def test_zero_actor_bakes_consequent_mean():
    fp = MembershipParams.default()
    t = bake(zero_network("actor"), fp, RuleConsequents.default("B"), default_axes(5))
    assert np.all(t.values == 110)
    tk = bake(zero_network("actor"), fp, RuleConsequents.default("K"), default_axes(5))
    assert np.all(tk.values == 9.0)


def test_bake_matches_direct_and_lookup():
    rng = np.random.default_rng(0)
    actor = init_network("actor", rng)
    fp, cons = MembershipParams.default(), RuleConsequents.default("B")
    axes = default_axes(6)
    t = bake(actor, fp, cons, axes)
    assert np.all((t.values >= 20) & (t.values <= 200))
    assert np.all(t.values == np.round(t.values))
    cs = axes[0].centers()
    for i, j, k in [(0, 0, 0), (5, 2, 3), (1, 4, 5)]:
        obs = MapObservation(cs[i], cs[j], cs[k])
        assert lookup(t, obs) == policy_value(actor, fp, cons, obs)
    a = lookup(t, MapObservation(0.01, 0.01, 0.01))
    b = lookup(t, MapObservation(0.02, 0.03, 0.04))
    assert a == b
    assert lookup(t, MapObservation(0.5, 0.5, 1.7)) == t.values[3, 3, 5]


def test_bake_head_mismatch():
    with pytest.raises(ValueError):
        bake(zero_network("actor"), MembershipParams.default(), RuleConsequents.default("B"), head="K")
    with pytest.raises(ValueError):
        bake(zero_network("critic"), MembershipParams.default(), RuleConsequents.default("B"))


def test_tensor_validation():
    axes = default_axes(3)
    with pytest.raises(ValueError):
        PolicyTensor(axes, np.full((3, 3, 3), 250.0), "B")
    with pytest.raises(ValueError):
        PolicyTensor(axes, np.full((3, 3, 3), 50.5), "B")
    PolicyTensor(axes, np.full((3, 3, 3), 4.5), "K")


def test_roundtrip(tmp_path):
    actor = init_network("actor", np.random.default_rng(3))
    t = bake(actor, MembershipParams.default(), RuleConsequents.default("K"), default_axes(4))
    path = tmp_path / "t.json"
    save_tensor(path, t)
    back = load_tensor(path)
    assert np.array_equal(back.values, t.values) and back.head == "K"
    doc = tensor_to_dict(t)
    doc["value_range"] = [0, 1]
    with pytest.raises(ValueError):
        tensor_from_dict(doc)
