"""The federation round engine: pool-parallel training, per-pool aggregation,
candidate scoring on the public validation set, winner selection and chain append.

Topologies:

* ``rfc``: clients are partitioned into disjoint pools; each pool trains and
  aggregates independently, candidates compete on the shared validation set,
  and the winner is sealed into the chain.
* ``client_server``: all sampled clients feed one aggregation per round and
  the single candidate is committed without a selection step (the classic
  baseline). The per-round server step is G <- G + eta * (aggregate - G).

Pools may execute concurrently (``RFC_SIM_THREADS``); every random draw is
pre-derived per (round, pool, client, purpose), so results are identical for
any thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import aggregation, attacks, chain as chain_mod, metrics, models
from .data import FederatedPartition
from .seeds import Sm64Stream, derive_seed

TOPOLOGIES = ("rfc", "client_server")


class RoundAbortError(RuntimeError):
    """Every candidate of a round was disqualified; the chain is unchanged."""

    def __init__(self, round_idx: int, notes: Sequence[str]):
        self.round_idx = round_idx
        self.notes = tuple(notes)
        super().__init__(f"round {round_idx} aborted, all candidates disqualified: " + "; ".join(notes))


class ProvenanceError(RuntimeError):
    """A client update reached an aggregation outside its home pool."""


@dataclass(frozen=True)
class FederationConfig:
    num_pools: int = 3
    clients_per_pool: int = 10
    rounds: int = 30
    clients_sampled_per_round: int = 18
    model: models.ModelSpec = field(default_factory=lambda: models.ModelSpec("linear", 64, 3))
    # Desk-scale training schedule: enough local steps per round that clients
    # roughly converge on their local data, which the replacement-boost
    # arithmetic presumes.
    optimizer: models.OptimizerConfig = field(
        default_factory=lambda: models.OptimizerConfig(learning_rate=0.01, batch_size=8))
    aggregator: aggregation.AggregatorConfig = field(default_factory=aggregation.AggregatorConfig)
    metric: metrics.MetricSpec = field(default_factory=lambda: metrics.MetricSpec("accuracy"))
    adversary: attacks.AdversaryConfig = field(
        default_factory=lambda: attacks.AdversaryConfig(adversaries_per_pool=2))
    master_seed: int = 42
    topology: str = "rfc"
    server_eta: float = 1.0
    chain_difficulty: int = 0

    def __post_init__(self):
        if self.num_pools < 1:
            raise ValueError(f"num_pools must be >= 1, got {self.num_pools}")
        if self.clients_per_pool < 1:
            raise ValueError(f"clients_per_pool must be >= 1, got {self.clients_per_pool}")
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}")
        if self.server_eta <= 0:
            raise ValueError("server_eta must be > 0")
        if self.chain_difficulty < 0:
            raise ValueError("chain_difficulty must be >= 0")
        quota = self.sample_quota()
        if quota < 1:
            raise ValueError("per-aggregation sample size must be >= 1")
        group = self.clients_per_pool if self.topology == "rfc" else self.num_pools * self.clients_per_pool
        if quota > group:
            raise ValueError(f"sample size {quota} exceeds group size {group}")
        need = aggregation.min_updates(self.aggregator)
        if quota < need:
            raise ValueError(f"rule {self.aggregator.rule} needs at least {need} updates per aggregation, sample gives {quota}")
        adv = self.adversary
        if adv.placement == "one_pool" and adv.pool_id >= self.num_pools:
            raise ValueError(f"adversary pool {adv.pool_id} out of range for {self.num_pools} pools")
        if adv.placement != "none" and adv.adversaries_per_pool > self.clients_per_pool:
            raise ValueError("adversaries_per_pool exceeds clients_per_pool")

    def sample_quota(self) -> int:
        """Updates entering one aggregation: the per-pool share, or all sampled clients."""
        if self.topology == "rfc":
            return round(self.clients_sampled_per_round / self.num_pools)
        return self.clients_sampled_per_round

    def total_clients(self) -> int:
        return self.num_pools * self.clients_per_pool


@dataclass(frozen=True)
class PoolCandidate:
    pool_id: int
    model: Optional[np.ndarray]
    metric_value: float
    clients: Tuple[int, ...]
    disqualified: bool = False
    note: str = ""


@dataclass
class FederationResult:
    final_model: np.ndarray
    records: List[metrics.RoundRecord]
    chain: chain_mod.Chain
    store: chain_mod.ParamStore
    pool_members: Tuple[Tuple[int, ...], ...]
    candidates: List[Tuple[PoolCandidate, ...]]
    provenance_violations: int = 0


def sample_clients(members: Sequence[int], pool_id: int, round_idx: int, quota: int,
                   master_seed: int) -> List[int]:
    """Uniform without-replacement sample from one pool's fixed client set."""
    if quota > len(members):
        raise ValueError(f"sample size {quota} exceeds pool size {len(members)}")
    stream = Sm64Stream(derive_seed(master_seed, round_idx, pool_id, 0, "sample"))
    return stream.sample(members, quota)


def select_winner(candidates: Sequence[PoolCandidate], direction: str) -> Optional[PoolCandidate]:
    """Best qualified candidate under the metric direction, ties to the lowest pool id."""
    winner = None
    for cand in candidates:
        if cand.disqualified:
            continue
        if winner is None or metrics.better(cand.metric_value, winner.metric_value, direction):
            winner = cand
    return winner


def server_update(global_model: np.ndarray, aggregate: np.ndarray, eta: float) -> np.ndarray:
    """G + eta * (aggregate - G); with eta = 1 the aggregate replaces the model."""
    return global_model + eta * (aggregate - global_model)


def _threads_from_env() -> int:
    raw = os.environ.get("RFC_SIM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _adversarial_ids(cfg: FederationConfig) -> frozenset:
    slot_map = attacks.assign_adversaries(cfg.num_pools, cfg.clients_per_pool,
                                          cfg.adversary, cfg.master_seed)
    ids = set()
    for pool_id, slots in slot_map.items():
        for slot in slots:
            ids.add(pool_id * cfg.clients_per_pool + slot)
    return frozenset(ids)


def _client_examples(cfg: FederationConfig, partition: FederatedPartition, cid: int,
                     is_adversary: bool, round_idx: int, pool_id: int):
    examples = partition.client_data[cid]
    adv = cfg.adversary
    if not is_adversary or adv.attack == "none":
        return examples
    if adv.attack == "labelflip":
        return attacks.flip_labels(examples, partition.num_classes)
    seed = derive_seed(cfg.master_seed, round_idx, pool_id, cid, "poison")
    return attacks.poison_examples(examples, partition.height, partition.width, adv, seed)


def _run_pool(cfg: FederationConfig, partition: FederatedPartition, pool_id: int,
              members: Sequence[int], adversarial: frozenset, global_model: np.ndarray,
              round_idx: int, quota: int) -> Tuple[PoolCandidate, int]:
    """Train one pool's sample and produce its candidate; returns (candidate, violations)."""
    sampled = sample_clients(members, pool_id, round_idx, quota, cfg.master_seed)
    home = set(members)
    violations = sum(1 for cid in sampled if cid not in home)
    if violations:
        raise ProvenanceError(f"round {round_idx}: pool {pool_id} sampled foreign clients")

    updates: List[np.ndarray] = []
    adv_positions: List[int] = []
    for pos, cid in enumerate(sampled):
        is_adv = cid in adversarial
        examples = _client_examples(cfg, partition, cid, is_adv, round_idx, pool_id)
        seed = derive_seed(cfg.master_seed, round_idx, pool_id, cid, "shuffle")
        try:
            update = models.train_local(cfg.model, global_model, examples, cfg.optimizer, seed)
        except models.DivergenceError as exc:
            return PoolCandidate(pool_id, None, float("nan"), tuple(sampled), True,
                                 f"client {cid} diverged in round {round_idx}: {exc}"), violations
        updates.append(update)
        if is_adv:
            adv_positions.append(pos)

    adv = cfg.adversary
    if adv.boost == "replacement" and adv_positions:
        # Colluding adversaries in one aggregation split the replacement factor
        # n/eta between them so the averaged update still lands on their model.
        k = len(adv_positions)
        for pos in adv_positions:
            updates[pos] = attacks.boost_update(updates[pos], global_model,
                                                len(updates), adv.boost_eta * k)

    try:
        aggregated = aggregation.aggregate(cfg.aggregator, updates)
    except ValueError as exc:
        return PoolCandidate(pool_id, None, float("nan"), tuple(sampled), True,
                             f"aggregation failed in round {round_idx}: {exc}"), violations
    candidate_model = server_update(global_model, aggregated, cfg.server_eta)
    if not np.all(np.isfinite(candidate_model)):
        return PoolCandidate(pool_id, None, float("nan"), tuple(sampled), True,
                             f"non-finite candidate in round {round_idx}"), violations
    value = metrics.score_model(cfg.metric, cfg.model, candidate_model, partition.validation)
    if not np.isfinite(value):
        return PoolCandidate(pool_id, candidate_model, float("nan"), tuple(sampled), True,
                             f"non-finite validation metric in round {round_idx}"), violations
    return PoolCandidate(pool_id, candidate_model, float(value), tuple(sampled)), violations


def run_federation(cfg: FederationConfig, partition: FederatedPartition) -> FederationResult:
    """Execute the full run: genesis, ``rounds`` consensus rounds, per-round records."""
    if partition.height * partition.width != cfg.model.input_dim:
        raise ValueError(f"model input_dim {cfg.model.input_dim} does not match grid "
                         f"{partition.height}x{partition.width}")
    if partition.num_classes != cfg.model.num_classes:
        raise ValueError(f"model num_classes {cfg.model.num_classes} does not match dataset "
                         f"{partition.num_classes}")
    missing = [c for c in range(cfg.total_clients()) if c not in partition.client_data]
    if missing:
        raise ValueError(f"partition lacks data for clients {missing[:5]}")

    pools = tuple(tuple(range(p * cfg.clients_per_pool, (p + 1) * cfg.clients_per_pool))
                  for p in range(cfg.num_pools))
    if cfg.topology == "rfc":
        groups = list(enumerate(pools))
    else:
        groups = [(0, tuple(range(cfg.total_clients())))]
    quota = cfg.sample_quota()
    adversarial = _adversarial_ids(cfg)

    adv = cfg.adversary
    backdoor_test = partition.backdoor_test
    if adv.attack == "backdoor" and not backdoor_test:
        backdoor_test = attacks.build_backdoor_test(partition.test, partition.height,
                                                    partition.width, adv.trigger_size,
                                                    adv.target_label)

    store = chain_mod.ParamStore()
    init = models.init_params(cfg.model, derive_seed(cfg.master_seed, 0, 0, 0, "init"))
    store.put(init)
    ledger = chain_mod.genesis(init, cfg.chain_difficulty)

    n_threads = _threads_from_env()
    records: List[metrics.RoundRecord] = []
    all_candidates: List[Tuple[PoolCandidate, ...]] = []
    total_violations = 0

    executor = ThreadPoolExecutor(max_workers=n_threads) if n_threads > 1 else None
    try:
        for round_idx in range(1, cfg.rounds + 1):
            global_model = store.get(ledger.blocks[-1].payload_digest)
            tasks = [(gid, members) for gid, members in groups]
            if executor is None:
                outcomes = [_run_pool(cfg, partition, gid, members, adversarial,
                                      global_model, round_idx, quota)
                            for gid, members in tasks]
            else:
                futures = [executor.submit(_run_pool, cfg, partition, gid, members,
                                           adversarial, global_model, round_idx, quota)
                           for gid, members in tasks]
                outcomes = [f.result() for f in futures]
            candidates = tuple(c for c, _ in outcomes)
            total_violations += sum(v for _, v in outcomes)

            winner = select_winner(candidates, cfg.metric.direction)
            if winner is None:
                raise RoundAbortError(round_idx, [c.note or f"pool {c.pool_id} disqualified"
                                                  for c in candidates])
            meta = chain_mod.RoundMeta(round=round_idx, winning_pool_id=winner.pool_id,
                                       metric_name=cfg.metric.name,
                                       metric_value=winner.metric_value,
                                       aggregator_rule=cfg.aggregator.rule)
            store.put(winner.model)
            ledger = chain_mod.append(ledger, winner.model, meta)

            test_loss, test_acc = models.evaluate(cfg.model, winner.model, partition.test)
            if adv.attack == "backdoor":
                bd_target, bd_loss = metrics.evaluate_backdoor(cfg.model, winner.model,
                                                               backdoor_test, adv.target_label)
                _, bd_clean = models.evaluate(cfg.model, winner.model, backdoor_test)
            else:
                bd_target = bd_clean = bd_loss = float("nan")
            records.append(metrics.RoundRecord(
                round=round_idx, winning_pool_id=winner.pool_id,
                val_metric=winner.metric_value, test_accuracy=test_acc, test_loss=test_loss,
                backdoor_accuracy_target=bd_target, backdoor_accuracy_clean=bd_clean,
                backdoor_loss=bd_loss,
                pool_metrics=tuple(c.metric_value for c in candidates)))
            all_candidates.append(candidates)
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    final_model = store.get(ledger.blocks[-1].payload_digest)
    return FederationResult(final_model=final_model, records=records, chain=ledger,
                            store=store, pool_members=pools, candidates=all_candidates,
                            provenance_violations=total_violations)
