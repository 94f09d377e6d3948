"""Shared value types: system parameters, transactions, blocks, latency records.

Everything here is an immutable record.  Weight vectors are stored as
read-only float64 arrays so a constructed transaction or block can be
shared freely between the trainer, the verifier and the simulator.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, fields
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "SystemParams",
    "DEFAULT_PARAMS",
    "CONFIG_KEYS",
    "Sample",
    "LocalUpdateTx",
    "Block",
    "LatencyBreakdown",
    "ExperimentStats",
    "COMPONENT_FIELDS",
    "SUM_FIELDS",
    "ALL_FIELDS",
    "validate_params",
    "tx_payload_bytes",
    "tx_digest",
    "parse_params_text",
    "params_to_text",
    "tx_to_json",
    "tx_from_json",
    "block_to_json",
    "block_from_json",
]

# Integer-valued configuration fields; everything else parses as float.
_INT_FIELDS = frozenset({"n_peers", "f", "n_block", "t_max"})

# Config-file key -> dataclass attribute.  "lambda" is a Python keyword,
# so the attribute is called lam.
_KEY_TO_ATTR = {"lambda": "lam"}
_ATTR_TO_KEY = {v: k for k, v in _KEY_TO_ATTR.items()}


@dataclass(frozen=True)
class SystemParams:
    """Full parameterization of one training-plus-consensus deployment.

    Rates are per second, sizes in bits, f_c in CPU cycles per second.
    ``lam`` is the transaction arrival rate (config key ``lambda``),
    ``mu`` the per-peer service rate, ``f`` the tolerated faulty peers,
    ``n_block`` the block capacity in transactions and ``tau`` the leader's
    maximum batching wait.  ``delta_m``/``delta_d`` are model and data unit
    sizes, ``h`` the block header size, ``w_up``/``w_dn`` link bandwidths
    with SNRs ``gamma_up``/``gamma_dn``.  ``beta``, ``epsilon``, ``e0`` and
    ``t_max`` drive the local update rule, the stop rule and verification.
    """

    lam: float = 100.0
    mu: float = 300.0
    n_peers: int = 4
    f: int = 1
    n_block: int = 100
    tau: float = 10.0
    delta_m: float = 1e4
    delta_d: float = 1e4
    h: float = 1e3
    f_c: float = 1e9
    w_up: float = 1e6
    w_dn: float = 1e7
    gamma_up: float = 3.0
    gamma_dn: float = 15.0
    beta: float = 0.5
    epsilon: float = 1e-3
    e0: float = 0.5
    t_max: int = 500

    def __post_init__(self) -> None:
        validate_params(self)


def validate_params(p: SystemParams) -> SystemParams:
    """Check every invariant, raising ValueError naming the first violation."""
    if not p.lam > 0:
        raise ValueError("lambda must be positive")
    if not p.mu > 0:
        raise ValueError("mu must be positive")
    if not p.lam < p.mu:
        raise ValueError("lambda must be < mu")
    if p.f < 0:
        raise ValueError("f must be >= 0")
    if p.n_peers != 3 * p.f + 1:
        raise ValueError("n_peers must equal 3f+1")
    if p.n_block < 1:
        raise ValueError("n_block must be >= 1")
    if not p.tau > 0:
        raise ValueError("tau must be positive")
    for name in ("delta_m", "delta_d", "h", "f_c", "w_up", "w_dn",
                 "gamma_up", "gamma_dn"):
        if not getattr(p, name) > 0:
            raise ValueError(f"{name} must be positive")
    if not p.beta >= 0:
        raise ValueError("beta must be >= 0")
    if not p.epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not 0 <= p.e0 <= 1:
        raise ValueError("e0 must be within [0, 1]")
    if p.t_max < 1:
        raise ValueError("t_max must be >= 1")
    return p


DEFAULT_PARAMS = SystemParams()

CONFIG_KEYS = tuple(_ATTR_TO_KEY.get(f.name, f.name) for f in fields(SystemParams))


def parse_params_text(text: str) -> SystemParams:
    """Parse flat key=value configuration text.

    ``#`` starts a comment line, blank lines are skipped, keys missing from
    the text keep their defaults.  Unknown or duplicate keys and malformed
    values are reported with their line number.
    """
    seen: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"expected key=value on line {lineno}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        attr = _KEY_TO_ATTR.get(key, key)
        if attr not in {f.name for f in fields(SystemParams)}:
            raise ValueError(f"unknown key '{key}' on line {lineno}")
        if attr in seen:
            raise ValueError(f"duplicate key '{key}' on line {lineno}")
        try:
            seen[attr] = int(value) if attr in _INT_FIELDS else float(value)
        except ValueError:
            raise ValueError(
                f"invalid value '{value}' for key '{key}' on line {lineno}"
            ) from None
    return SystemParams(**seen)


def params_to_text(p: SystemParams) -> str:
    """Serialize to the flat key=value form accepted by parse_params_text."""
    lines = []
    for field in fields(SystemParams):
        key = _ATTR_TO_KEY.get(field.name, field.name)
        value = getattr(p, field.name)
        lines.append(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
    return "\n".join(lines) + "\n"


def _frozen_array(values: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Sample:
    """A single labelled observation with y in {-1, +1}."""

    x: np.ndarray
    y: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", _frozen_array(self.x))
        if self.x.ndim != 1 or self.x.size == 0:
            raise ValueError("x must be a nonempty vector")
        if not np.isfinite(self.x).all():
            raise ValueError("x must be finite")
        if self.y not in (-1, 1):
            raise ValueError("y must be -1 or +1")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Sample):
            return NotImplemented
        return self.y == other.y and np.array_equal(self.x, other.x)


def tx_payload_bytes(
    enterprise_id: int,
    weights: np.ndarray,
    shared_gradient: np.ndarray,
    n_samples: int,
    created_at: float,
) -> bytes:
    """Canonical little-endian serialization of a transaction payload."""
    w = np.ascontiguousarray(weights, dtype="<f8")
    g = np.ascontiguousarray(shared_gradient, dtype="<f8")
    head = struct.pack("<qqdqq", enterprise_id, n_samples, created_at, w.size, g.size)
    return head + w.tobytes() + g.tobytes()


def tx_digest(
    enterprise_id: int,
    weights: np.ndarray,
    shared_gradient: np.ndarray,
    n_samples: int,
    created_at: float,
) -> str:
    """SHA-256 over the canonical payload bytes; any field change changes it."""
    payload = tx_payload_bytes(enterprise_id, weights, shared_gradient,
                               n_samples, created_at)
    return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True, eq=False)
class LocalUpdateTx:
    """One enterprise's signed local update: weights plus shared gradient."""

    enterprise_id: int
    weights: np.ndarray
    shared_gradient: np.ndarray
    n_samples: int
    created_at: float
    digest: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", _frozen_array(self.weights))
        object.__setattr__(self, "shared_gradient", _frozen_array(self.shared_gradient))
        if self.weights.shape != self.shared_gradient.shape:
            raise ValueError("weights and shared_gradient must have equal dimension")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")

    @classmethod
    def create(
        cls,
        enterprise_id: int,
        weights: np.ndarray,
        shared_gradient: np.ndarray,
        n_samples: int,
        created_at: float,
    ) -> "LocalUpdateTx":
        digest = tx_digest(enterprise_id, weights, shared_gradient,
                           n_samples, created_at)
        return cls(enterprise_id, weights, shared_gradient, n_samples,
                   created_at, digest)

    def digest_ok(self) -> bool:
        return self.digest == tx_digest(
            self.enterprise_id, self.weights, self.shared_gradient,
            self.n_samples, self.created_at)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LocalUpdateTx):
            return NotImplemented
        return (
            self.enterprise_id == other.enterprise_id
            and self.n_samples == other.n_samples
            and self.created_at == other.created_at
            and self.digest == other.digest
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.shared_gradient, other.shared_gradient)
        )


@dataclass(frozen=True, eq=False)
class Block:
    """A sealed batch of update transactions ordered by creation time."""

    txs: tuple[LocalUpdateTx, ...]
    sealed_at: float
    size_bits: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "txs", tuple(self.txs))
        if len(self.txs) < 1:
            raise ValueError("block must contain at least one tx")
        created = [tx.created_at for tx in self.txs]
        if any(a > b for a, b in zip(created, created[1:])):
            raise ValueError("block txs must be ordered by created_at")

    @classmethod
    def seal(
        cls,
        txs: Iterable[LocalUpdateTx],
        sealed_at: float,
        h: float,
        delta_m: float,
        n_block: Optional[int] = None,
    ) -> "Block":
        txs = tuple(txs)
        if n_block is not None and len(txs) > n_block:
            raise ValueError("block exceeds n_block capacity")
        return cls(txs, sealed_at, h + delta_m * len(txs))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Block):
            return NotImplemented
        return (
            self.sealed_at == other.sealed_at
            and self.size_bits == other.size_bits
            and self.txs == other.txs
        )


# Measured (or predicted) components, in the order CSV columns use them.
COMPONENT_FIELDS = ("t_local", "t_up", "t_preprepare", "t_prepare",
                    "t_commit", "t_dn", "t_global")
SUM_FIELDS = ("t_update", "t_commun", "t_consensus", "t_total")
ALL_FIELDS = COMPONENT_FIELDS + SUM_FIELDS


@dataclass(frozen=True)
class LatencyBreakdown:
    """Per-cycle delay components in seconds; sums are derived, never stored."""

    t_local: float
    t_up: float
    t_preprepare: float
    t_prepare: float
    t_commit: float
    t_dn: float
    t_global: float

    def __post_init__(self) -> None:
        for name in COMPONENT_FIELDS:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def t_update(self) -> float:
        return self.t_local + self.t_global

    @property
    def t_commun(self) -> float:
        return self.t_up + self.t_dn

    @property
    def t_consensus(self) -> float:
        return self.t_preprepare + self.t_prepare + self.t_commit

    @property
    def t_total(self) -> float:
        return self.t_update + self.t_commun + self.t_consensus

    def as_dict(self) -> dict[str, float]:
        out = {name: getattr(self, name) for name in COMPONENT_FIELDS}
        out.update({name: getattr(self, name) for name in SUM_FIELDS})
        return out


@dataclass(frozen=True)
class ExperimentStats:
    """Replicated-measurement summary next to the matching model prediction.

    ``std_err`` is None when a single replication makes it undefined.
    All four mappings are keyed by the latency field names.
    """

    config_id: str
    replications: int
    mean: dict[str, float]
    std_err: Optional[dict[str, float]]
    analytic: dict[str, float]
    rel_error: dict[str, float]

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise ValueError("replications must be >= 1")


def _tx_dict(tx: LocalUpdateTx) -> dict:
    return {
        "enterprise_id": tx.enterprise_id,
        "weights": [float(v) for v in tx.weights],
        "shared_gradient": [float(v) for v in tx.shared_gradient],
        "n_samples": tx.n_samples,
        "created_at": tx.created_at,
        "digest": tx.digest,
    }


def _tx_from_dict(d: dict) -> LocalUpdateTx:
    return LocalUpdateTx(
        enterprise_id=int(d["enterprise_id"]),
        weights=np.array(d["weights"], dtype=np.float64),
        shared_gradient=np.array(d["shared_gradient"], dtype=np.float64),
        n_samples=int(d["n_samples"]),
        created_at=float(d["created_at"]),
        digest=str(d["digest"]),
    )


def tx_to_json(tx: LocalUpdateTx) -> str:
    return json.dumps(_tx_dict(tx))


def tx_from_json(text: str) -> LocalUpdateTx:
    return _tx_from_dict(json.loads(text))


def block_to_json(block: Block) -> str:
    return json.dumps({
        "txs": [_tx_dict(tx) for tx in block.txs],
        "sealed_at": block.sealed_at,
        "size_bits": block.size_bits,
    })


def block_from_json(text: str) -> Block:
    d = json.loads(text)
    return Block(
        txs=tuple(_tx_from_dict(td) for td in d["txs"]),
        sealed_at=float(d["sealed_at"]),
        size_bits=float(d["size_bits"]),
    )
