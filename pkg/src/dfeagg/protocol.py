"""One federated round across the three roles: KDC, clients, aggregator.

Round ``t``:

1. the aggregator broadcasts ``GlobalModel`` plus ``RoundMetadata``;
2. each eligible client trains locally from the broadcast weights;
3. the client scales its weights by its balancing weight, quantizes,
   masks and encrypts, and uploads a ``CipherVector``;
4. the aggregator asks the KDC for the mask sum of exactly the declared
   participants, decrypts the aggregate and dequantizes it into ``w^{t+1}``.

Roles never share key types: the aggregator only ever sees an
``AggregationKey`` and ``RoundUnmask`` values.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import model as lr_model
from .errors import UnknownClientError, ZeroFrequencyError
from .groups import GroupParams
from .quantizer import QuantScheme, dequantize_aggregate, quantize
from .scheme import (
    AggregationKey,
    CipherVector,
    ClientKey,
    MasterSecret,
    RoundUnmask,
    aggregate_decrypt,
    derive_round_unmask,
    encrypt,
    keygen_aggregator,
    keygen_client,
)
from . import wire


@dataclass(frozen=True)
class GlobalModel:
    round_index: int
    weights: np.ndarray

    @property
    def dimension(self) -> int:
        return int(self.weights.size)


@dataclass
class ClientState:
    client_id: str
    x: np.ndarray
    y: np.ndarray
    n_classes: int
    learning_rate: float = 0.1
    local_epochs: int = 1
    batch_size: int = 32
    participation_count: int = 0
    last_participation_round: int | None = None
    local_weights: np.ndarray | None = None
    last_alpha: float | None = None
    clamp_count: int = 0

    @property
    def data_size(self) -> int:
        return int(len(self.y))


@dataclass(frozen=True)
class RoundMetadata:
    round_index: int
    participants: tuple[str, ...]
    data_sizes: Mapping[str, int]
    frequencies: Mapping[str, int]
    gamma: int | None = None

    def to_dict(self) -> dict:
        return {"round_index": self.round_index, "participants": list(self.participants),
                "data_sizes": dict(self.data_sizes), "frequencies": dict(self.frequencies),
                "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> "RoundMetadata":
        return cls(d["round_index"], tuple(d["participants"]), dict(d["data_sizes"]),
                   dict(d["frequencies"]), d.get("gamma"))


def _gamma(gamma: int | None, t: int) -> int:
    return t if gamma is None else gamma


def eligibility(f_k: int, t: int, gamma: int | None) -> bool:
    """Staleness filter: a client may join round ``t`` iff ``f_k >= t - gamma``.

    ``gamma=None`` means ``gamma = t``, which admits everyone.
    """
    if t < 1:
        raise ValueError("rounds start at 1")
    g = _gamma(gamma, t)
    if g < 0:
        raise ValueError("gamma must be >= 0")
    return f_k >= t - g


def clamped_frequency(f_k: int, t: int, gamma: int | None) -> int:
    """Alternative reading of the staleness bound: clip ``f_k`` into ``[t - gamma, t - 1]``."""
    g = _gamma(gamma, t)
    return min(max(f_k, max(t - g, 0)), t - 1)


def balancing_weights(meta: RoundMetadata, *, mode: str = "balanced",
                      staleness_mode: str = "filter", strict: bool = False) -> dict[str, float]:
    """Frequency-and-size weights ``alpha_k`` for the round's participants.

    ``beta_k = f_k / sum(f) * S'_k`` and ``alpha_k = beta_k / sum(beta)`` with
    ``S'_k`` the share of the participants' data.  When every participant has
    ``f_k = 0`` (cold start) the weights fall back to ``S'_k`` unless
    ``strict`` is set.  ``mode="size"`` always returns ``S'_k``.
    """
    ids = sorted(meta.participants)
    if not ids:
        raise ValueError("no participants")
    sizes = [meta.data_sizes[k] for k in ids]
    if any(s <= 0 for s in sizes):
        raise ValueError("data sizes must be positive")
    total_size = math.fsum(sizes)
    share = [s / total_size for s in sizes]
    if mode == "size":
        return dict(zip(ids, share))
    if mode != "balanced":
        raise ValueError(f"unknown weighting mode {mode!r}")
    t = meta.round_index
    freqs = [meta.frequencies[k] for k in ids]
    if staleness_mode == "clamp":
        freqs = [clamped_frequency(f, t, meta.gamma) for f in freqs]
    elif staleness_mode != "filter":
        raise ValueError(f"unknown staleness mode {staleness_mode!r}")
    total_f = math.fsum(freqs)
    if total_f == 0:
        if strict:
            raise ZeroFrequencyError("all participation frequencies are zero")
        return dict(zip(ids, share))
    beta = [f / total_f * s for f, s in zip(freqs, share)]
    total_beta = math.fsum(beta)
    return {k: b / total_beta for k, b in zip(ids, beta)}


def local_train(cs: ClientState, global_model: GlobalModel, rng: np.random.Generator) -> np.ndarray:
    if cs.data_size == 0:
        raise ValueError(f"client {cs.client_id} has no data")
    return lr_model.sgd(global_model.weights, cs.x, cs.y, cs.n_classes, lr=cs.learning_rate,
                        epochs=cs.local_epochs, batch_size=cs.batch_size, rng=rng)


def client_round(params: GroupParams, cs: ClientState, global_model: GlobalModel, meta: RoundMetadata,
                 ck: ClientKey, qs: QuantScheme, rng: np.random.Generator, *,
                 weighting: str = "balanced", staleness_mode: str = "filter") -> CipherVector:
    t = meta.round_index
    if not eligibility(meta.frequencies[cs.client_id], t, meta.gamma) and staleness_mode == "filter":
        raise ValueError(f"client {cs.client_id} is not eligible in round {t}")
    w_local = local_train(cs, global_model, rng)
    alpha = balancing_weights(meta, mode=weighting, staleness_mode=staleness_mode)[cs.client_id]
    qv = quantize(alpha * w_local, qs)
    cv = encrypt(params, ck, qv, t)
    cs.local_weights = w_local
    cs.last_alpha = alpha
    cs.clamp_count = qv.clamp_count
    cs.participation_count += 1
    cs.last_participation_round = t
    return cv


def aggregator_round(params: GroupParams, ciphers: Sequence[CipherVector], ak: AggregationKey,
                     unmask: RoundUnmask, qs: QuantScheme, k_prime: int, *, path: str = "pairing") -> GlobalModel:
    if k_prime != len(ciphers):
        raise ValueError(f"k_prime={k_prime} but {len(ciphers)} ciphertexts")
    agg = aggregate_decrypt(params, ak, unmask, ciphers, qs.bound_for(k_prime), path=path, scheme=qs)
    weights = dequantize_aggregate(agg, k_prime, qs)
    return GlobalModel(ciphers[0].round_index + 1, weights)


def kdc_round_service(ms: MasterSecret, t: int, declared_participants: Iterable[str], d: int) -> RoundUnmask:
    return derive_round_unmask(ms, t, declared_participants, d)


@dataclass
class KeyDistributionCenter:
    """Single-writer key registry answering per-round unmask queries."""

    params: GroupParams
    master: MasterSecret
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def register(self, client_id: str) -> ClientKey:
        with self._lock:
            return keygen_client(self.master, client_id)

    def aggregation_key(self) -> AggregationKey:
        return keygen_aggregator(self.master)

    def round_unmask(self, t: int, participants: Iterable[str], padded_len: int) -> RoundUnmask:
        participants = list(participants)
        unknown = [p for p in participants if p not in self.master.issued]
        if unknown:
            raise UnknownClientError(", ".join(sorted(unknown)))
        return kdc_round_service(self.master, t, participants, padded_len)

    def handle(self, query: bytes) -> bytes:
        t, participants, padded_len = wire.decode_kdc_query(query)
        return wire.encode_kdc_response(self.round_unmask(t, participants, padded_len), self.params.order_q)
