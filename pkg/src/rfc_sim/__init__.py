"""Deterministic pooled federated learning on a hash-chained ledger.

Swappable robust aggregation rules and consensus metrics, plus an adversary
harness (labelflip, fixed-pattern backdoor, model-replacement boosting) at
desk scale.
"""

from . import aggregation, attacks, chain, config, consensus, data, metrics, models, params, seeds

__all__ = ["aggregation", "attacks", "chain", "config", "consensus", "data",
           "metrics", "models", "params", "seeds"]
