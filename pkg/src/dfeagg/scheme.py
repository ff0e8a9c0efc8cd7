"""Decentralized functional-encryption aggregation.

Key material
------------
The KDC holds three invertible ``n x n`` matrices ``B, A1, A2``.  Client ``k``
receives ``sk1 = A1^-1 B'_k`` and ``sk2 = A2^-1 B''_k`` where
``B'_k + B''_k = B^-1``; the aggregator receives ``ak1 = B A1`` and
``ak2 = B A2``.  Hence ``ak1 sk1 + ak2 sk2 = B (B'_k + B''_k) = I`` for every
client, while no single party can strip another's key.

Vectors are columns: a masked chunk ``w_hat`` (``n x 1``) encrypts to
``(sk1 w_hat) * g2`` and ``(sk2 w_hat) * g2`` element-wise.  Summing all
clients' ciphertexts and applying ``ak1``/``ak2`` leaves
``sum_k w_hat_k * g2``; the per-round mask sum is then removed and the small
exponent recovered by baby-step giant-step.

Models longer than ``n`` are split into ``ceil(d / n)`` chunks that reuse the
same matrices; per-coordinate, per-round masks keep chunks independent.
"""

from __future__ import annotations

import hashlib
import hmac
import threading
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

from .bsgs import cached_table
from .errors import (
    DimensionMismatchError,
    DuplicateClientError,
    ParticipantMismatchError,
    QuantizationRangeError,
    UnknownClientError,
    UnsupportedSecurityLevel,
)
from .field import FieldMatrix, FieldRng, SeedLike, mat_inverse, sample_invertible_matrix
from .groups import GroupParams, bls12_381_params, pairing_row
from .quantizer import QuantizedVector, QuantScheme

SUPPORTED_SECURITY_BITS = 128
DEFAULT_CHUNK_DIM = 16


@dataclass
class MasterSecret:
    b_mat: FieldMatrix
    a1_mat: FieldMatrix
    a2_mat: FieldMatrix
    chunk_dim: int
    round_mask_seed: bytes
    key_seed: bytes
    curve_id: str
    issued: set[str] = field(default_factory=set)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @property
    def q(self) -> int:
        return self.b_mat.q

    @cached_property
    def b_inv(self) -> FieldMatrix:
        return mat_inverse(self.b_mat)

    @cached_property
    def a1_inv(self) -> FieldMatrix:
        return mat_inverse(self.a1_mat)

    @cached_property
    def a2_inv(self) -> FieldMatrix:
        return mat_inverse(self.a2_mat)

    def client_mask_seed(self, client_id: str) -> bytes:
        return hmac.new(self.round_mask_seed, b"mask:" + client_id.encode(), hashlib.sha256).digest()


@dataclass(frozen=True)
class ClientKey:
    client_id: str
    sk1: FieldMatrix
    sk2: FieldMatrix
    mask_seed: bytes
    curve_id: str

    @property
    def chunk_dim(self) -> int:
        return self.sk1.rows

    @property
    def q(self) -> int:
        return self.sk1.q


@dataclass(frozen=True)
class AggregationKey:
    ak1: FieldMatrix
    ak2: FieldMatrix
    curve_id: str

    @property
    def chunk_dim(self) -> int:
        return self.ak1.rows


@dataclass(frozen=True)
class RoundUnmask:
    round_index: int
    participant_set: frozenset[str]
    lambda_sum: tuple[int, ...]


@dataclass(frozen=True)
class CipherVector:
    """Ciphertext of one client's masked vector.

    ``padded_len`` is the coordinate count before zero-padding to a
    multiple of ``chunk_dim``.
    """

    client_id: str
    round_index: int
    chunk_dim: int
    padded_len: int
    chunks: tuple[tuple[tuple, tuple], ...]

    @property
    def n_chunks(self) -> int:
        return len(self.chunks)

    @property
    def total_len(self) -> int:
        return self.n_chunks * self.chunk_dim


def padded_length(d: int, n: int) -> int:
    return -(-d // n) * n


def setup(security_level: int = SUPPORTED_SECURITY_BITS, chunk_dim: int = DEFAULT_CHUNK_DIM,
          rng_seed: SeedLike = None, params: GroupParams | None = None) -> tuple[GroupParams, MasterSecret]:
    """Sample the master secret.  Deterministic for a fixed seed.

    ``params`` selects the group backend (the toy field for fast tests);
    the default is BLS12-381, which covers security levels up to 128 bits.
    """
    if chunk_dim < 1:
        raise DimensionMismatchError("chunk_dim must be >= 1")
    if params is None:
        if not 0 < security_level <= SUPPORTED_SECURITY_BITS:
            raise UnsupportedSecurityLevel(
                f"{security_level}-bit security is not available; max is {SUPPORTED_SECURITY_BITS}"
            )
        params = bls12_381_params()
    rng = FieldRng(rng_seed)
    q = params.order_q
    ms = MasterSecret(
        b_mat=sample_invertible_matrix(chunk_dim, rng.child("B"), q=q),
        a1_mat=sample_invertible_matrix(chunk_dim, rng.child("A1"), q=q),
        a2_mat=sample_invertible_matrix(chunk_dim, rng.child("A2"), q=q),
        chunk_dim=chunk_dim,
        round_mask_seed=rng.child("round-mask").key,
        key_seed=rng.child("client-keys").key,
        curve_id=params.curve_id,
    )
    return params, ms


def keygen_client(ms: MasterSecret, client_id: str) -> ClientKey:
    """Issue a client key; each id may be issued once per master secret."""
    with ms._lock:
        if client_id in ms.issued:
            raise DuplicateClientError(client_id)
        ms.issued.add(client_id)
    rng = FieldRng(ms.key_seed).child("client", client_id)
    n, q = ms.chunk_dim, ms.q
    # Both summands of B^-1 must be invertible.
    while True:
        b_prime = sample_invertible_matrix(n, rng, q=q)
        b_second = ms.b_inv - b_prime
        if b_second.is_invertible():
            break
    return ClientKey(
        client_id=client_id,
        sk1=ms.a1_inv @ b_prime,
        sk2=ms.a2_inv @ b_second,
        mask_seed=ms.client_mask_seed(client_id),
        curve_id=ms.curve_id,
    )


def keygen_aggregator(ms: MasterSecret) -> AggregationKey:
    return AggregationKey(ms.b_mat @ ms.a1_mat, ms.b_mat @ ms.a2_mat, ms.curve_id)


def derive_lambda(key: ClientKey | MasterSecret, round_index: int, padded_len: int,
                  client_id: str | None = None) -> list[int]:
    """Per-round, per-coordinate mask for one client.

    Clients derive their own mask from ``ClientKey.mask_seed``; the KDC
    derives anyone's from the master secret (``client_id`` required).
    """
    if padded_len < 1:
        raise ValueError("padded_len must be >= 1")
    if isinstance(key, MasterSecret):
        if client_id is None:
            raise ValueError("client_id is required when deriving from the master secret")
        seed, q = key.client_mask_seed(client_id), key.q
    else:
        seed, q = key.mask_seed, key.q
    return FieldRng(seed).child("round", round_index).vector(padded_len, q)


def derive_round_unmask(ms: MasterSecret, round_index: int, participant_set: Iterable[str],
                        padded_len: int) -> RoundUnmask:
    participants = frozenset(participant_set)
    if not participants:
        raise ValueError("participant set must be non-empty")
    unknown = sorted(participants - ms.issued)
    if unknown:
        raise UnknownClientError(", ".join(unknown))
    q = ms.q
    total = [0] * padded_len
    for cid in sorted(participants):
        lam = derive_lambda(ms, round_index, padded_len, client_id=cid)
        total = [(a + b) % q for a, b in zip(total, lam)]
    return RoundUnmask(round_index, participants, tuple(total))


def encrypt(params: GroupParams, ck: ClientKey, weighted_quantized: QuantizedVector | Sequence[int],
            round_index: int) -> CipherVector:
    """Mask (coordinate-wise ``+ lambda_k``) and encrypt a quantized vector."""
    if isinstance(weighted_quantized, QuantizedVector):
        weighted_quantized.check_range()
        values = list(weighted_quantized.values)
    else:
        values = [int(v) for v in weighted_quantized]
    if not values:
        raise DimensionMismatchError("cannot encrypt an empty vector")
    if any(v < 0 for v in values):
        raise QuantizationRangeError("encrypt expects non-negative quantized values")
    n, q = ck.chunk_dim, ck.q
    d = len(values)
    total = padded_length(d, n)
    lam = derive_lambda(ck, round_index, total)
    masked = [(v + l) % q for v, l in zip(values + [0] * (total - d), lam)]
    g2 = params.g2
    chunks = []
    for c in range(0, total, n):
        w_hat = masked[c:c + n]
        half1 = tuple(g2.encode(e) for e in ck.sk1.apply(w_hat))
        half2 = tuple(g2.encode(e) for e in ck.sk2.apply(w_hat))
        chunks.append((half1, half2))
    return CipherVector(ck.client_id, round_index, n, d, tuple(chunks))


def _check_ciphers(unmask: RoundUnmask, ciphers: Sequence[CipherVector], check_participants: bool):
    if not ciphers:
        raise ValueError("no ciphertexts to aggregate")
    first = ciphers[0]
    for c in ciphers:
        if (c.round_index, c.padded_len, c.chunk_dim, c.n_chunks) != (
                first.round_index, first.padded_len, first.chunk_dim, first.n_chunks):
            raise DimensionMismatchError("ciphertexts disagree on round or shape")
    senders = [c.client_id for c in ciphers]
    if check_participants:
        if len(set(senders)) != len(senders):
            raise ParticipantMismatchError("duplicate sender in ciphertext set")
        if set(senders) != set(unmask.participant_set):
            raise ParticipantMismatchError(
                f"ciphertexts from {sorted(senders)} but unmask issued for {sorted(unmask.participant_set)}"
            )
        if first.round_index != unmask.round_index:
            raise ParticipantMismatchError("unmask was issued for a different round")
    if len(unmask.lambda_sum) != first.total_len:
        raise DimensionMismatchError("unmask length does not match padded ciphertext length")


def sum_ciphertexts(params: GroupParams, ciphers: Sequence[CipherVector]) -> list[tuple[list, list]]:
    """Half-wise group sum over clients, per chunk."""
    g2 = params.g2
    summed = []
    for c in range(ciphers[0].n_chunks):
        s1 = list(ciphers[0].chunks[c][0])
        s2 = list(ciphers[0].chunks[c][1])
        for cv in ciphers[1:]:
            h1, h2 = cv.chunks[c]
            s1 = [g2.op(a, b) for a, b in zip(s1, h1)]
            s2 = [g2.op(a, b) for a, b in zip(s2, h2)]
        summed.append((s1, s2))
    return summed


def apply_aggregation_key(params: GroupParams, ak: AggregationKey, ciphers: Sequence[CipherVector]) -> list:
    """``ak1 * sum(half1) + ak2 * sum(half2)`` in G2: encodings of the masked sum."""
    g2 = params.g2
    out = []
    for s1, s2 in sum_ciphertexts(params, ciphers):
        points = s1 + s2
        for j in range(ak.chunk_dim):
            out.append(g2.msm(points, ak.ak1.row(j) + ak.ak2.row(j)))
    return out


def aggregate_decrypt(params: GroupParams, ak: AggregationKey, unmask: RoundUnmask,
                      ciphers: Sequence[CipherVector], dlog_bound: int, *,
                      path: str = "pairing", scheme: QuantScheme | None = None,
                      check_participants: bool = True) -> QuantizedVector:
    """Recover ``sum_k values_k`` coordinate-wise.

    ``path="pairing"`` pairs each aggregation-key row (encoded in G1) with the
    summed ciphertext halves and solves the discrete log in Gt;
    ``path="fast"`` applies the key directly in G2.  Both give identical
    results.
    """
    ciphers = list(ciphers)
    _check_ciphers(unmask, ciphers, check_participants)
    if ak.chunk_dim != ciphers[0].chunk_dim:
        raise DimensionMismatchError("aggregation key and ciphertext chunk sizes differ")
    n = ak.chunk_dim
    lam = unmask.lambda_sum
    values: list[int] = []
    if path == "fast":
        g2 = params.g2
        table = cached_table(params, g2, dlog_bound)
        for j, r in enumerate(apply_aggregation_key(params, ak, ciphers)):
            target = g2.op(r, g2.encode(-lam[j]))
            values.append(table.solve(target))
    elif path == "pairing":
        g1, gt = params.g1, params.gt
        table = cached_table(params, gt, dlog_bound)
        for c, (s1, s2) in enumerate(sum_ciphertexts(params, ciphers)):
            for j in range(n):
                t1 = pairing_row(params, ak.ak1.row(j), s1)
                t2 = pairing_row(params, ak.ak2.row(j), s2)
                # Division by e(lambda*g1, g2) as multiplication by its inverse e(-lambda*g1, g2).
                denom_inv = params.pairing(g1.encode(-lam[c * n + j]), params.gen_2)
                values.append(table.solve(gt.op(gt.op(t1, t2), denom_inv)))
    else:
        raise ValueError(f"unknown decryption path {path!r}")
    return QuantizedVector(tuple(values[:ciphers[0].padded_len]), scheme, len(ciphers))
