"""Hash-linked ledger of winning round models, with nonce search and tampering checks.

Block hashes are SHA-256 over a canonical little-endian field serialization::

    u64 index | u64 timestamp | 32 raw payload_digest bytes
    | u64 round | i64 winning_pool_id
    | u64 len(metric_name) + UTF-8 bytes | f64 metric_value bits
    | u64 len(aggregator_rule) + UTF-8 bytes
    | u64 nonce | 32 raw prev_hash bytes

A block meets difficulty d when its hash starts with d zero bits. Timestamps
are logical round counters, never wall clock, so sealed chains are
reproducible. Model payloads live off-chain in a ParamStore keyed by the
sha256 digest of their wire encoding.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np

from . import params

ZERO32 = bytes(32)
_MAX_NONCE = (1 << 64) - 1


class NonceExhaustedError(RuntimeError):
    """The 64-bit nonce space held no hash meeting the difficulty target."""


@dataclass(frozen=True)
class RoundMeta:
    round: int
    winning_pool_id: int
    metric_name: str
    metric_value: float
    aggregator_rule: str


@dataclass(frozen=True)
class Block:
    index: int
    timestamp: int
    payload_digest: bytes
    meta: RoundMeta
    prev_hash: bytes
    nonce: int = 0
    hash: bytes = b""


@dataclass(frozen=True)
class Chain:
    blocks: Tuple[Block, ...]
    difficulty: int = 0


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<Q", len(raw)) + raw


def block_preimage(block: Block) -> bytes:
    m = block.meta
    return (
        struct.pack("<Q", block.index)
        + struct.pack("<Q", block.timestamp)
        + block.payload_digest
        + struct.pack("<Q", m.round)
        + struct.pack("<q", m.winning_pool_id)
        + _pack_str(m.metric_name)
        + struct.pack("<d", m.metric_value)
        + _pack_str(m.aggregator_rule)
        + struct.pack("<Q", block.nonce)
        + block.prev_hash
    )


def block_hash(block: Block) -> bytes:
    return hashlib.sha256(block_preimage(block)).digest()


def meets_difficulty(digest: bytes, difficulty: int) -> bool:
    if difficulty <= 0:
        return True
    if difficulty > 256:
        return False
    return int.from_bytes(digest, "big") < (1 << (256 - difficulty))


def seal_block(draft: Block, difficulty: int) -> Block:
    """Fill nonce and hash: smallest nonce from 0 upward whose hash meets difficulty."""
    nonce = 0
    while True:
        candidate = replace(draft, nonce=nonce, hash=b"")
        h = block_hash(candidate)
        if meets_difficulty(h, difficulty):
            return replace(candidate, hash=h)
        if nonce == _MAX_NONCE:
            raise NonceExhaustedError(f"no valid nonce for block {draft.index} at difficulty {difficulty}")
        nonce += 1


def genesis(initial_params: np.ndarray, difficulty: int = 0) -> Chain:
    meta = RoundMeta(round=0, winning_pool_id=-1, metric_name="", metric_value=0.0, aggregator_rule="")
    draft = Block(index=0, timestamp=0, payload_digest=params.digest(initial_params),
                  meta=meta, prev_hash=ZERO32)
    return Chain(blocks=(seal_block(draft, difficulty),), difficulty=difficulty)


def append(chain: Chain, model: np.ndarray, meta: RoundMeta) -> Chain:
    bad = validate(chain)
    if bad is not None:
        raise ValueError(f"refusing to append to invalid chain (first invalid block {bad})")
    tip = chain.blocks[-1]
    draft = Block(index=len(chain.blocks), timestamp=meta.round,
                  payload_digest=params.digest(model), meta=meta, prev_hash=tip.hash)
    return Chain(blocks=chain.blocks + (seal_block(draft, chain.difficulty),),
                 difficulty=chain.difficulty)


def validate(chain: Chain) -> Optional[int]:
    """None when every block checks out, else the first invalid index."""
    for i, block in enumerate(chain.blocks):
        if block.index != i:
            return i
        if i == 0:
            if block.prev_hash != ZERO32:
                return 0
        elif block.prev_hash != chain.blocks[i - 1].hash:
            return i
        if block_hash(block) != block.hash:
            return i
        if not meets_difficulty(block.hash, chain.difficulty):
            return i
    return None


class ParamStore:
    """Off-chain model storage keyed by payload digest; round-trips bit-exactly."""

    def __init__(self):
        self._blobs: Dict[bytes, bytes] = {}

    def put(self, v: np.ndarray) -> bytes:
        blob = params.to_bytes(v)
        key = hashlib.sha256(blob).digest()
        self._blobs[key] = blob
        return key

    def get(self, digest: bytes) -> np.ndarray:
        try:
            return params.from_bytes(self._blobs[digest])
        except KeyError:
            raise KeyError(f"no model stored under digest {digest.hex()}")

    def __contains__(self, digest: bytes) -> bool:
        return digest in self._blobs

    def __len__(self) -> int:
        return len(self._blobs)


def export_lines(chain: Chain) -> str:
    """One self-describing JSON record per block, hashes hex-encoded."""
    lines = []
    for b in chain.blocks:
        lines.append(json.dumps({
            "index": b.index,
            "timestamp": b.timestamp,
            "payload_digest": b.payload_digest.hex(),
            "round": b.meta.round,
            "winning_pool_id": b.meta.winning_pool_id,
            "metric_name": b.meta.metric_name,
            "metric_value": b.meta.metric_value,
            "aggregator_rule": b.meta.aggregator_rule,
            "nonce": b.nonce,
            "prev_hash": b.prev_hash.hex(),
            "hash": b.hash.hex(),
            "difficulty": chain.difficulty,
        }, sort_keys=True, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def load_lines(text: str) -> Chain:
    blocks = []
    difficulty = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            meta = RoundMeta(round=int(rec["round"]),
                             winning_pool_id=int(rec["winning_pool_id"]),
                             metric_name=str(rec["metric_name"]),
                             metric_value=float(rec["metric_value"]),
                             aggregator_rule=str(rec["aggregator_rule"]))
            block = Block(index=int(rec["index"]), timestamp=int(rec["timestamp"]),
                          payload_digest=bytes.fromhex(rec["payload_digest"]), meta=meta,
                          prev_hash=bytes.fromhex(rec["prev_hash"]), nonce=int(rec["nonce"]),
                          hash=bytes.fromhex(rec["hash"]))
            difficulty = int(rec["difficulty"])
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"chain export line {lineno}: {exc}")
        blocks.append(block)
    if not blocks:
        raise ValueError("chain export holds no blocks")
    return Chain(blocks=tuple(blocks), difficulty=difficulty)
