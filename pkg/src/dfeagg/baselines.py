"""Reference points for the encrypted pipeline.

* ``plaintext_fedavg``: the weighted average every encrypted result is
  checked against.
* Textbook Paillier (``g = n + 1``) for per-parameter timing.
* The PPFL cost model: 512-byte ciphertexts per parameter, three message
  rounds per FL round.
"""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass
from typing import Mapping, Sequence

import gmpy2
import numpy as np

from .errors import DimensionMismatchError, MessageRangeError
from .field import FieldRng, SeedLike
from .groups import GroupParams
from .quantizer import QuantScheme, quantize
from .scheme import ClientKey, encrypt

PPFL_BYTES_PER_PARAM = 512
PPFL_MESSAGE_ROUNDS = 3
# Figure as printed in the published comparison; 1536 * 37,196,556 B is 57,133.91 MB.
PUBLISHED_PPFL_MB_37M = 57233.91


def plaintext_fedavg(models: Mapping[str, np.ndarray] | Sequence[np.ndarray],
                     alphas: Mapping[str, float] | Sequence[float]) -> np.ndarray:
    if isinstance(models, Mapping):
        ids = sorted(models)
        vecs = [np.asarray(models[k], dtype=np.float64) for k in ids]
        weights = [alphas[k] for k in ids]
    else:
        vecs = [np.asarray(m, dtype=np.float64) for m in models]
        weights = list(alphas)
    if not vecs:
        raise ValueError("no models to aggregate")
    if len(weights) != len(vecs):
        raise DimensionMismatchError("one alpha per model required")
    if any(v.shape != vecs[0].shape for v in vecs):
        raise DimensionMismatchError("models have different dimensions")
    out = np.zeros_like(vecs[0])
    for a, v in zip(weights, vecs):
        out += a * v
    return out


@dataclass(frozen=True)
class PaillierPublicKey:
    n: int

    @property
    def n_sq(self) -> int:
        return self.n * self.n

    @property
    def g(self) -> int:
        return self.n + 1

    @property
    def ciphertext_bytes(self) -> int:
        return (self.n_sq.bit_length() + 7) // 8


@dataclass(frozen=True)
class PaillierKeypair:
    public: PaillierPublicKey
    lam: int
    mu: int

    @property
    def modulus_n(self) -> int:
        return self.public.n


def _random_prime(bits: int, rng: FieldRng) -> int:
    while True:
        cand = int.from_bytes(rng.bytes(bits // 8), "big") | (1 << (bits - 1)) | (1 << (bits - 2)) | 1
        if gmpy2.is_prime(cand, 40):
            return cand


def paillier_keygen(bits: int = 2048, rng_seed: SeedLike = None) -> PaillierKeypair:
    if bits < 16 or bits % 16:
        raise ValueError("key size must be a positive multiple of 16 bits")
    rng = FieldRng(rng_seed)
    while True:
        p = _random_prime(bits // 2, rng)
        q = _random_prime(bits // 2, rng)
        n = p * q
        if p != q and n.bit_length() == bits and math.gcd(n, (p - 1) * (q - 1)) == 1:
            break
    lam = (p - 1) * (q - 1)
    mu = int(gmpy2.invert(lam, n))
    return PaillierKeypair(PaillierPublicKey(n), lam, mu)


def paillier_encrypt(pk: PaillierPublicKey, m: int, r: int | None = None, rng: FieldRng | None = None) -> int:
    n = pk.n
    if not 0 <= m < n:
        raise MessageRangeError("plaintext must lie in [0, n)")
    if r is None:
        rng = rng or FieldRng()
        while True:
            r = rng.randbelow(n)
            if r and math.gcd(r, n) == 1:
                break
    n_sq = pk.n_sq
    # (1 + n)^m = 1 + m*n mod n^2
    return int((1 + m * n) % n_sq * gmpy2.powmod(r, n, n_sq) % n_sq)


def paillier_decrypt(kp: PaillierKeypair, c: int) -> int:
    n = kp.public.n
    u = int(gmpy2.powmod(c, kp.lam, kp.public.n_sq))
    return (u - 1) // n * kp.mu % n


def paillier_add(pk: PaillierPublicKey, c1: int, c2: int) -> int:
    return c1 * c2 % pk.n_sq


def ppfl_cost_model(param_count: int, rounds: int = 1) -> tuple[int, int]:
    """Bytes moved and message rounds for ``rounds`` FL rounds of the Paillier baseline."""
    if param_count < 1:
        raise ValueError("param_count must be >= 1")
    return PPFL_MESSAGE_ROUNDS * PPFL_BYTES_PER_PARAM * param_count * rounds, PPFL_MESSAGE_ROUNDS


@dataclass(frozen=True)
class TimingComparison:
    n_params: int
    dfe_median_s: float
    paillier_median_s: float
    paillier_bits: int
    chunk_dim: int

    @property
    def ratio(self) -> float:
        return self.paillier_median_s / self.dfe_median_s

    def as_dict(self) -> dict:
        return {"n_params": self.n_params, "dfe_median_s": self.dfe_median_s,
                "paillier_median_s": self.paillier_median_s, "paillier_bits": self.paillier_bits,
                "chunk_dim": self.chunk_dim, "ratio": self.ratio}


def compare_encryption_timing(params: GroupParams, ck: ClientKey, kp: PaillierKeypair, *,
                              n_params: int = 1000, qs: QuantScheme | None = None,
                              seed: SeedLike = 0) -> TimingComparison:
    """Per-parameter encryption medians: DFE chunk time / n versus one Paillier encryption."""
    qs = qs or QuantScheme()
    n = ck.chunk_dim
    rng = np.random.default_rng(int.from_bytes(FieldRng(seed).child("values").bytes(8), "little"))
    values = list(quantize(rng.uniform(-1, 1, size=n_params), qs).values)
    dfe = []
    for start in range(0, n_params, n):
        chunk = values[start:start + n]
        t0 = time.perf_counter()
        encrypt(params, ck, chunk, round_index=1)
        dfe.append((time.perf_counter() - t0) / len(chunk))
    prng = FieldRng(seed).child("paillier-timing")
    pai = []
    for v in values:
        t0 = time.perf_counter()
        paillier_encrypt(kp.public, v, rng=prng)
        pai.append(time.perf_counter() - t0)
    return TimingComparison(n_params, statistics.median(dfe), statistics.median(pai),
                            kp.public.n.bit_length(), n)
