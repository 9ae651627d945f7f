"""Adversarial client behaviors and their placement over mining pools.

Three ingredients compose every attack scenario: a data manipulation
(labelflip or a fixed white-box trigger), an optional model-replacement boost
of the transmitted update, and a placement policy that marks which client
slots in which pools are adversarial.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Sequence

import numpy as np

from .data import Example
from .seeds import Sm64Stream, derive_seed

ATTACK_KINDS = ("none", "labelflip", "backdoor")
PLACEMENTS = ("none", "one_pool", "all_pools")
BOOST_MODES = ("off", "replacement")


@dataclass(frozen=True)
class AdversaryConfig:
    attack: str = "none"
    placement: str = "none"
    pool_id: int = 0                 # target pool for one_pool placement
    adversaries_per_pool: int = 1
    boost: str = "off"
    boost_eta: float = 1.0           # server learning rate the adversary assumes
    trigger_size: int = 2
    target_label: int = 0
    poison_fraction: float = 0.5     # share of an adversary's local data that gets the trigger

    def __post_init__(self):
        if self.attack not in ATTACK_KINDS:
            raise ValueError(f"unknown attack {self.attack!r}")
        if self.placement not in PLACEMENTS:
            raise ValueError(f"unknown placement {self.placement!r}")
        if (self.attack == "none") != (self.placement == "none"):
            raise ValueError("placement is 'none' exactly when attack is 'none'")
        if self.boost not in BOOST_MODES:
            raise ValueError(f"unknown boost mode {self.boost!r}")
        if self.adversaries_per_pool < 1:
            raise ValueError("adversaries_per_pool must be >= 1")
        if self.boost_eta <= 0:
            raise ValueError("boost_eta must be > 0")
        if self.trigger_size < 1:
            raise ValueError("trigger_size must be >= 1")
        if self.target_label < 0:
            raise ValueError("target_label must be >= 0")
        if not (0 < self.poison_fraction <= 1):
            raise ValueError("poison_fraction must lie in (0, 1]")


def flip_labels(data: Sequence[Example], num_classes: int) -> List[Example]:
    """Relabel y -> (num_classes - 1) - y; features stay untouched."""
    out = []
    for ex in data:
        if not (0 <= ex.label < num_classes):
            raise ValueError(f"label {ex.label} out of range for {num_classes} classes")
        out.append(Example(ex.features, num_classes - 1 - ex.label))
    return out


def apply_trigger(example: Example, height: int, width: int, trigger_size: int,
                  target_label: int) -> Example:
    """White k x k box in the bottom-right corner, label forced to the target."""
    k = trigger_size
    if k > min(height, width):
        raise ValueError(f"trigger {k}x{k} does not fit a {height}x{width} grid")
    feats = np.array(example.features, dtype=np.float64, copy=True)
    grid = feats.reshape(height, width)
    grid[height - k :, width - k :] = 1.0
    feats.flags.writeable = False
    return Example(feats, target_label)


def poison_examples(data: Sequence[Example], height: int, width: int,
                    cfg: AdversaryConfig, seed: int) -> List[Example]:
    """Trigger a deterministic poison_fraction share of a client's examples."""
    n = len(data)
    n_poison = min(n, max(1, round(cfg.poison_fraction * n)))
    chosen = set(Sm64Stream(seed).sample(range(n), n_poison))
    out = []
    for i, ex in enumerate(data):
        if i in chosen:
            out.append(apply_trigger(ex, height, width, cfg.trigger_size, cfg.target_label))
        else:
            out.append(ex)
    return out


def build_backdoor_test(test_data: Sequence[Example], height: int, width: int,
                        trigger_size: int, target_label: int) -> List[Example]:
    """Triggered copies of the test split that keep their original clean labels."""
    out = []
    for ex in test_data:
        triggered = apply_trigger(ex, height, width, trigger_size, target_label)
        out.append(Example(triggered.features, ex.label))
    return out


def boost_update(v_adv: np.ndarray, v_global: np.ndarray, n: int, eta: float) -> np.ndarray:
    """Model-replacement transmission: v_global + (n/eta) * (v_adv - v_global).

    Averaged with n-1 converged benign updates and pushed through the server
    update rule with learning rate eta, the aggregate lands on v_adv.
    """
    if v_adv.shape[0] != v_global.shape[0]:
        raise ValueError(f"boost_update: dimension mismatch ({v_adv.shape[0]} vs {v_global.shape[0]})")
    if eta <= 0:
        raise ValueError("eta must be > 0")
    beta = n / eta
    return v_global + beta * (v_adv - v_global)


def assign_adversaries(num_pools: int, clients_per_pool: int, cfg: AdversaryConfig,
                       seed: int) -> Dict[int, FrozenSet[int]]:
    """Map pool_id -> adversarial client slots (indices within the pool)."""
    if cfg.placement == "none":
        return {}
    if cfg.adversaries_per_pool > clients_per_pool:
        raise ValueError(f"{cfg.adversaries_per_pool} adversaries do not fit in pools of {clients_per_pool}")
    if cfg.placement == "one_pool":
        if not (0 <= cfg.pool_id < num_pools):
            raise ValueError(f"placement pool {cfg.pool_id} out of range for {num_pools} pools")
        pools = [cfg.pool_id]
    else:
        pools = list(range(num_pools))
    out = {}
    for p in pools:
        stream = Sm64Stream(derive_seed(seed, 0, p, 0, "adversary-slots"))
        out[p] = frozenset(stream.sample(range(clients_per_pool), cfg.adversaries_per_pool))
    return out
