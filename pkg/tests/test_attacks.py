import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rfc_sim import aggregation, attacks, consensus
from rfc_sim.attacks import AdversaryConfig, apply_trigger, assign_adversaries, boost_update, flip_labels
from rfc_sim.data import Example
from rfc_sim.seeds import Sm64Stream


def rand_examples(n, dim, num_classes, seed=0):
    stream = Sm64Stream(seed)
    out = []
    for i in range(n):
        feats = np.array([stream.uniform() for _ in range(dim)])
        feats.flags.writeable = False
        out.append(Example(feats, i % num_classes))
    return out


def test_adversary_config_validation():
    with pytest.raises(ValueError):
        AdversaryConfig(attack="labelflip", placement="none")
    with pytest.raises(ValueError):
        AdversaryConfig(attack="none", placement="all_pools")
    with pytest.raises(ValueError):
        AdversaryConfig(attack="backdoor", placement="one_pool", poison_fraction=0.0)
    with pytest.raises(ValueError):
        AdversaryConfig(attack="backdoor", placement="one_pool", boost_eta=0.0)


def test_flip_labels_formula():
    examples = [Example(np.zeros(2), 0)]
    assert flip_labels(examples, 10)[0].label == 9
    assert flip_labels(examples, 3)[0].label == 2


def test_flip_labels_involution_and_features_untouched():
    for c in (2, 3, 10):
        examples = rand_examples(12, 4, c, seed=c)
        twice = flip_labels(flip_labels(examples, c), c)
        for orig, back in zip(examples, twice):
            assert back.label == orig.label
            assert back.features is orig.features  # features shared, bit-identical
    with pytest.raises(ValueError):
        flip_labels([Example(np.zeros(2), 5)], 3)


def test_apply_trigger_geometry():
    ex = Example(np.zeros(16), 1)
    out = apply_trigger(ex, 4, 4, trigger_size=2, target_label=0)
    grid = out.features.reshape(4, 4)
    for r, c in [(2, 2), (2, 3), (3, 2), (3, 3)]:
        assert grid[r, c] == 1.0
    mask = np.ones((4, 4), dtype=bool)
    mask[2:, 2:] = False
    assert np.array_equal(grid[mask], ex.features.reshape(4, 4)[mask])
    assert out.label == 0


def test_apply_trigger_idempotent():
    ex = rand_examples(1, 16, 3, seed=5)[0]
    once = apply_trigger(ex, 4, 4, 2, 1)
    twice = apply_trigger(once, 4, 4, 2, 1)
    assert np.array_equal(once.features, twice.features)
    assert once.label == twice.label == 1


def test_apply_trigger_too_large():
    with pytest.raises(ValueError):
        apply_trigger(Example(np.zeros(4), 0), 2, 2, trigger_size=3, target_label=0)


def test_build_backdoor_test_keeps_clean_labels():
    examples = rand_examples(6, 9, 3, seed=2)
    triggered = attacks.build_backdoor_test(examples, 3, 3, 1, target_label=0)
    for orig, trig in zip(examples, triggered):
        assert trig.label == orig.label
        assert trig.features.reshape(3, 3)[2, 2] == 1.0


def test_poison_examples_fraction_and_determinism():
    cfg = AdversaryConfig(attack="backdoor", placement="all_pools", poison_fraction=0.5,
                          trigger_size=1, target_label=2)
    examples = rand_examples(10, 9, 3, seed=3)
    poisoned = attacks.poison_examples(examples, 3, 3, cfg, seed=4)
    again = attacks.poison_examples(examples, 3, 3, cfg, seed=4)
    n_triggered = sum(1 for ex in poisoned if ex.features.reshape(3, 3)[2, 2] == 1.0 and ex.label == 2)
    assert n_triggered == 5
    assert all(np.array_equal(a.features, b.features) and a.label == b.label
               for a, b in zip(poisoned, again))
    untouched = [ex for ex, orig in zip(poisoned, examples) if ex is orig]
    assert len(untouched) == 5


def test_poison_examples_at_least_one():
    cfg = AdversaryConfig(attack="backdoor", placement="all_pools", poison_fraction=0.01,
                          trigger_size=1, target_label=0)
    examples = rand_examples(3, 4, 2, seed=1)
    poisoned = attacks.poison_examples(examples, 2, 2, cfg, seed=9)
    assert sum(1 for ex in poisoned if ex.label == 0 and ex.features.reshape(2, 2)[1, 1] == 1.0) >= 1


def test_boost_update_examples():
    assert np.array_equal(boost_update(np.array([1.0]), np.array([0.0]), 10, 1.0), np.array([10.0]))
    v = np.array([0.3, -0.7])
    assert np.array_equal(boost_update(v, v, 5, 1.0), v)
    with pytest.raises(ValueError):
        boost_update(np.array([1.0]), np.array([1.0, 2.0]), 3, 1.0)
    with pytest.raises(ValueError):
        boost_update(np.array([1.0]), np.array([0.0]), 3, 0.0)


@given(st.integers(2, 50), st.sampled_from([0.5, 1.0, 2.0]), st.integers(0, 2**31))
def test_boost_overrides_server_average(n, eta, seed):
    stream = Sm64Stream(seed)
    dim = 1 + seed % 5
    v_adv = np.array([stream.uniform_in(-3, 3) for _ in range(dim)])
    v_g = np.array([stream.uniform_in(-3, 3) for _ in range(dim)])
    boosted = boost_update(v_adv, v_g, n, eta)
    updates = [boosted] + [v_g] * (n - 1)
    landed = consensus.server_update(v_g, aggregation.fedavg(updates), eta)
    assert np.allclose(landed, v_adv, rtol=1e-9, atol=1e-9)


def test_assign_one_pool():
    cfg = AdversaryConfig(attack="labelflip", placement="one_pool", pool_id=0,
                          adversaries_per_pool=2)
    slots = assign_adversaries(3, 10, cfg, seed=1)
    assert set(slots) == {0}
    assert len(slots[0]) == 2
    assert all(0 <= s < 10 for s in slots[0])


def test_assign_all_pools_counts():
    cfg = AdversaryConfig(attack="labelflip", placement="all_pools", adversaries_per_pool=1)
    slots = assign_adversaries(3, 10, cfg, seed=1)
    assert set(slots) == {0, 1, 2}
    assert sum(len(v) for v in slots.values()) == 3


def test_assign_none_and_errors():
    assert assign_adversaries(3, 10, AdversaryConfig(), seed=1) == {}
    bad_pool = AdversaryConfig(attack="labelflip", placement="one_pool", pool_id=5)
    with pytest.raises(ValueError, match="out of range"):
        assign_adversaries(3, 10, bad_pool, seed=1)
    too_many = AdversaryConfig(attack="labelflip", placement="all_pools", adversaries_per_pool=11)
    with pytest.raises(ValueError):
        assign_adversaries(3, 10, too_many, seed=1)


def test_assign_deterministic():
    cfg = AdversaryConfig(attack="backdoor", placement="all_pools", adversaries_per_pool=3)
    assert assign_adversaries(4, 8, cfg, seed=7) == assign_adversaries(4, 8, cfg, seed=7)
