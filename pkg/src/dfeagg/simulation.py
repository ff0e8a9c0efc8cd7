"""In-process federated simulation: encrypted, plaintext, or both side by side.

Every message crossing a role boundary is serialized through ``wire`` so the
byte counts in the metrics are those of real payloads.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import model as lr_model
from . import wire
from .baselines import plaintext_fedavg
from .errors import DFEError
from .groups import GroupParams, TOY_DEFAULT_Q, bls12_381_params, toy_params
from .metrics import MetricsRow, comm_overhead, evaluate_model
from .protocol import (
    ClientState,
    GlobalModel,
    KeyDistributionCenter,
    RoundMetadata,
    aggregator_round,
    balancing_weights,
    client_round,
    eligibility,
    local_train,
)
from .quantizer import QuantScheme
from .scenario import ScenarioConfig, available_clients, partition_data
from .scheme import AggregationKey, ClientKey, padded_length, setup

log = logging.getLogger(__name__)


@dataclass
class SimulationSpec:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    quant: QuantScheme = field(default_factory=QuantScheme)
    chunk_dim: int = 16
    rounds: int = 30
    local_epochs: int = 1
    learning_rate: float = 0.1
    lr_decay: float = 0.0
    batch_size: int = 32
    gamma: int | None = None
    staleness_mode: str = "filter"
    weighting: str = "balanced"
    decrypt_path: str = "pairing"
    toy_field: bool = False
    toy_q: int = TOY_DEFAULT_Q
    security_level: int = 128
    element_size_bytes: int = 56
    seed: int | None = 0
    # False draws key material from OS entropy even when ``seed`` is set
    pin_keys: bool = True

    def learning_rate_at(self, t: int) -> float:
        return self.learning_rate / (1.0 + self.lr_decay * (t - 1))

    def group_params(self) -> GroupParams:
        if self.toy_field:
            return toy_params(self.toy_q, self.element_size_bytes)
        return bls12_381_params(self.element_size_bytes)


@dataclass
class KeyMaterial:
    params: GroupParams
    kdc: KeyDistributionCenter
    client_keys: dict[str, ClientKey]
    aggregation_key: AggregationKey

    def fingerprints(self) -> dict[str, str]:
        fp = {cid: wire.fingerprint(wire.client_key_to_bytes(ck)) for cid, ck in sorted(self.client_keys.items())}
        fp["aggregator"] = wire.fingerprint(wire.aggregation_key_to_bytes(self.aggregation_key))
        fp["params"] = self.params.fingerprint()
        return fp


def key_ceremony(spec: SimulationSpec, client_ids: list[str]) -> KeyMaterial:
    seed = None if spec.seed is None or not spec.pin_keys else f"{spec.seed}:keys"
    params, ms = setup(spec.security_level, spec.chunk_dim, seed, params=spec.group_params())
    kdc = KeyDistributionCenter(params, ms)
    keys = {cid: kdc.register(cid) for cid in client_ids}
    return KeyMaterial(params, kdc, keys, kdc.aggregation_key())


@dataclass
class SimulationResult:
    rows: list[MetricsRow]
    final_weights: np.ndarray
    history: list[np.ndarray]
    frequencies: dict[str, int]
    fingerprints: dict[str, str] = field(default_factory=dict)

    @property
    def final_macro_accuracy(self) -> float:
        return self.rows[-1].macro_accuracy


class RoundAbort(DFEError, RuntimeError):
    def __init__(self, round_index: int, cause: BaseException):
        super().__init__(f"round {round_index} aborted: {cause}")
        self.round_index = round_index
        self.cause = cause


def _client_rng(spec: SimulationSpec, t: int, idx: int) -> np.random.Generator:
    base = 0 if spec.seed is None else spec.seed
    return np.random.default_rng([base, 6, t, idx])


def simulate(spec: SimulationSpec, *, encrypted: bool = True, keys: KeyMaterial | None = None,
             reference: SimulationResult | None = None,
             on_row: Callable[[MetricsRow], None] | None = None) -> SimulationResult:
    """Run ``spec.rounds`` rounds.

    With ``reference`` (a plaintext run on the same spec) each row also
    carries the trajectory divergence and the reference accuracy.
    """
    sc = spec.scenario
    part = partition_data(sc)
    ids = sc.client_ids
    index = {cid: i for i, cid in enumerate(ids)}
    states = {
        c.client_id: ClientState(c.client_id, c.x, c.y, sc.n_classes, spec.learning_rate,
                                 spec.local_epochs, spec.batch_size)
        for c in part.clients
    }
    init_seed = 0 if spec.seed is None else spec.seed
    w = lr_model.init_weights(sc.n_features, sc.n_classes, np.random.default_rng([init_seed, 5]))
    d = w.size
    global_model = GlobalModel(1, w)
    if encrypted and keys is None:
        keys = key_ceremony(spec, ids)
    qs = spec.quant
    rows, history = [], []
    for t in range(1, spec.rounds + 1):
        try:
            row = _one_round(spec, t, global_model, states, index, part, qs, keys if encrypted else None, d)
        except DFEError as exc:
            raise RoundAbort(t, exc) from exc
        global_model = GlobalModel(t + 1, row.pop_weights())
        history.append(global_model.weights)
        if reference is not None:
            ref_w = reference.history[t - 1]
            row.metrics.trajectory_divergence = float(np.max(np.abs(global_model.weights - ref_w)))
            row.metrics.plain_macro_accuracy = reference.rows[t - 1].macro_accuracy
        rows.append(row.metrics)
        if on_row:
            on_row(row.metrics)
    return SimulationResult(rows, global_model.weights, history,
                            {c: s.participation_count for c, s in states.items()},
                            keys.fingerprints() if keys else {})


@dataclass
class _RoundOutput:
    metrics: MetricsRow
    weights: np.ndarray

    def pop_weights(self) -> np.ndarray:
        return self.weights


def _one_round(spec, t, global_model, states, index, part, qs, keys, d) -> _RoundOutput:
    sc = spec.scenario
    lr_t = spec.learning_rate_at(t)
    for s in states.values():
        s.learning_rate = lr_t
    available = available_clients(sc, t)
    if spec.staleness_mode == "filter":
        participants = [c for c in available if eligibility(states[c].participation_count, t, spec.gamma)]
    else:
        participants = list(available)
    if not participants:
        # Nobody eligible this round: carry the model forward unchanged.
        ev = evaluate_model(global_model.weights, part.test.x, part.test.y, sc.n_classes)
        m = MetricsRow(t, [], ev.per_class_accuracy.tolist(), ev.macro_accuracy, ev.macro_precision,
                       confusion=ev.confusion.tolist())
        return _RoundOutput(m, global_model.weights)

    meta = RoundMetadata(t, tuple(sorted(participants)),
                         {c: states[c].data_size for c in participants},
                         {c: states[c].participation_count for c in participants}, spec.gamma)
    broadcast = wire.encode_broadcast(t, global_model.weights, meta.to_dict())
    _, received_w, meta_dict = wire.decode_broadcast(broadcast)
    received = GlobalModel(t, received_w)
    meta = RoundMetadata.from_dict(meta_dict)
    alphas = balancing_weights(meta, mode=spec.weighting, staleness_mode=spec.staleness_mode)
    k_prime = len(meta.participants)

    m = MetricsRow(t, list(meta.participants), [], 0.0, 0.0,
                   broadcast_bytes=len(broadcast) * k_prime, alpha_sum=sum(alphas.values()))
    if keys is not None:
        params = keys.params
        uploads = []
        for cid in meta.participants:
            t0 = time.perf_counter()
            cv = client_round(params, states[cid], received, meta, keys.client_keys[cid], qs,
                              _client_rng(spec, t, index[cid]), weighting=spec.weighting,
                              staleness_mode=spec.staleness_mode)
            m.encrypt_seconds += time.perf_counter() - t0
            m.clamp_count += states[cid].clamp_count
            blob = wire.cipher_to_bytes(params, cv)
            m.bytes_measured += len(blob)
            m.bytes_measured_formula += comm_overhead(d, params.g2.wire_size, "measured",
                                                      chunk_dim=spec.chunk_dim, client_id_bytes=len(cid.encode()))
            m.bytes_nominal += comm_overhead(d, params.element_size_bytes, "nominal")
            uploads.append(wire.encode_upload(params, cv))
        padded = padded_length(d, spec.chunk_dim)
        unmask = wire.decode_kdc_response(keys.kdc.handle(wire.encode_kdc_query(t, meta.participants, padded)))
        ciphers = [wire.decode_upload(params, u) for u in uploads]
        t0 = time.perf_counter()
        new_model = aggregator_round(params, ciphers, keys.aggregation_key, unmask, qs, k_prime,
                                     path=spec.decrypt_path)
        m.decrypt_seconds = time.perf_counter() - t0
        m.dlog_queries = padded
        new_w = new_model.weights
        oracle = plaintext_fedavg({c: states[c].local_weights for c in meta.participants}, alphas)
        m.step_divergence = float(np.max(np.abs(new_w - oracle)))
        m.step_tolerance = k_prime * qs.delta / 2
    else:
        local = {}
        for cid in meta.participants:
            cs = states[cid]
            local[cid] = local_train(cs, received, _client_rng(spec, t, index[cid]))
            cs.local_weights = local[cid]
            cs.last_alpha = alphas[cid]
            cs.participation_count += 1
            cs.last_participation_round = t
        new_w = plaintext_fedavg(local, alphas)
    ev = evaluate_model(new_w, part.test.x, part.test.y, sc.n_classes)
    m.per_class_accuracy = ev.per_class_accuracy.tolist()
    m.macro_accuracy = ev.macro_accuracy
    m.macro_precision = ev.macro_precision
    m.confusion = ev.confusion.tolist()
    log.debug("round %d: K'=%d macro=%.4f", t, k_prime, m.macro_accuracy)
    return _RoundOutput(m, new_w)


def run_both(spec: SimulationSpec, *, keys: KeyMaterial | None = None,
             on_row: Callable[[MetricsRow], None] | None = None) -> tuple[SimulationResult, SimulationResult]:
    plain = simulate(spec, encrypted=False)
    enc = simulate(spec, encrypted=True, keys=keys, reference=plain, on_row=on_row)
    return enc, plain
