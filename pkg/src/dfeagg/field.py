"""Matrix arithmetic over the prime scalar field Z_q.

Entries are plain Python ints so the same code serves the 255-bit BLS12-381
scalar field and the small toy primes used by brute-force tests.
"""

from __future__ import annotations

import hashlib
import secrets
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

from .errors import DimensionMismatchError, SamplingError, SingularMatrixError, WireFormatError

SeedLike = Union[None, int, str, bytes, "FieldRng"]

MAX_SAMPLING_RETRIES = 64
_MATRIX_MAGIC = b"FMAT"


class FieldRng:
    """Deterministic keyed byte stream (BLAKE2b in counter mode).

    ``FieldRng(None)`` draws a fresh 32-byte key from the OS; any other seed
    reproduces the same stream.  ``child`` derives independent sub-streams so
    that e.g. per-client key material does not depend on issuance order.
    """

    def __init__(self, seed: SeedLike = None):
        if isinstance(seed, FieldRng):
            self._key = seed._key
        else:
            self._key = _seed_bytes(seed)
        self._counter = 0

    @property
    def key(self) -> bytes:
        return self._key

    def child(self, *labels: object) -> "FieldRng":
        h = hashlib.blake2b(key=self._key, digest_size=32, person=b"dfeagg-child")
        for label in labels:
            data = str(label).encode()
            h.update(struct.pack("<I", len(data)) + data)
        return FieldRng(h.digest())

    def bytes(self, n: int) -> bytes:
        out = bytearray()
        while len(out) < n:
            block = hashlib.blake2b(
                struct.pack("<Q", self._counter), key=self._key, digest_size=64
            ).digest()
            self._counter += 1
            out.extend(block)
        return bytes(out[:n])

    def randbelow(self, q: int) -> int:
        # 64 surplus bits keep the modular bias below 2^-64.
        width = (q.bit_length() + 7) // 8 + 8
        return int.from_bytes(self.bytes(width), "little") % q

    def vector(self, length: int, q: int) -> list[int]:
        return [self.randbelow(q) for _ in range(length)]


def _seed_bytes(seed: SeedLike) -> bytes:
    if seed is None:
        return secrets.token_bytes(32)
    if isinstance(seed, bytes):
        raw = seed
    elif isinstance(seed, int):
        raw = b"int:" + str(seed).encode()
    else:
        raw = b"str:" + str(seed).encode()
    return hashlib.blake2b(raw, digest_size=32, person=b"dfeagg-seed").digest()


def as_rng(seed: SeedLike) -> FieldRng:
    return seed if isinstance(seed, FieldRng) else FieldRng(seed)


@dataclass(frozen=True)
class FieldMatrix:
    rows: int
    cols: int
    entries: tuple[int, ...]
    q: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DimensionMismatchError("matrix dimensions must be positive")
        if len(self.entries) != self.rows * self.cols:
            raise DimensionMismatchError(
                f"expected {self.rows * self.cols} entries, got {len(self.entries)}"
            )
        if any(not 0 <= e < self.q for e in self.entries):
            raise ValueError("matrix entries must lie in [0, q)")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]], q: int) -> "FieldMatrix":
        n_rows = len(rows)
        n_cols = len(rows[0]) if n_rows else 0
        if any(len(r) != n_cols for r in rows):
            raise DimensionMismatchError("ragged rows")
        return cls(n_rows, n_cols, tuple(int(v) % q for r in rows for v in r), q)

    @classmethod
    def identity(cls, n: int, q: int) -> "FieldMatrix":
        return cls(n, n, tuple(1 if i == j else 0 for i in range(n) for j in range(n)), q)

    @classmethod
    def zeros(cls, rows: int, cols: int, q: int) -> "FieldMatrix":
        return cls(rows, cols, (0,) * (rows * cols), q)

    @classmethod
    def diag(cls, values: Sequence[int], q: int) -> "FieldMatrix":
        n = len(values)
        return cls.from_rows([[values[i] if i == j else 0 for j in range(n)] for i in range(n)], q)

    @property
    def is_square(self) -> bool:
        return self.rows == self.cols

    def row(self, i: int) -> tuple[int, ...]:
        return self.entries[i * self.cols:(i + 1) * self.cols]

    def to_rows(self) -> list[list[int]]:
        return [list(self.row(i)) for i in range(self.rows)]

    def __getitem__(self, idx: tuple[int, int]) -> int:
        i, j = idx
        return self.entries[i * self.cols + j]

    def _check_same_field(self, other: "FieldMatrix"):
        if self.q != other.q:
            raise ValueError("matrices live over different fields")

    def __add__(self, other: "FieldMatrix") -> "FieldMatrix":
        self._check_same_field(other)
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise DimensionMismatchError("shape mismatch in addition")
        q = self.q
        return FieldMatrix(self.rows, self.cols, tuple((a + b) % q for a, b in zip(self.entries, other.entries)), q)

    def __sub__(self, other: "FieldMatrix") -> "FieldMatrix":
        self._check_same_field(other)
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise DimensionMismatchError("shape mismatch in subtraction")
        q = self.q
        return FieldMatrix(self.rows, self.cols, tuple((a - b) % q for a, b in zip(self.entries, other.entries)), q)

    def __matmul__(self, other: "FieldMatrix") -> "FieldMatrix":
        self._check_same_field(other)
        if self.cols != other.rows:
            raise DimensionMismatchError(f"cannot multiply {self.rows}x{self.cols} by {other.rows}x{other.cols}")
        q = self.q
        cols_b = [other.entries[j::other.cols] for j in range(other.cols)]
        out = []
        for i in range(self.rows):
            r = self.row(i)
            for c in cols_b:
                out.append(sum(a * b for a, b in zip(r, c)) % q)
        return FieldMatrix(self.rows, other.cols, tuple(out), q)

    def apply(self, vec: Sequence[int]) -> list[int]:
        """Matrix times column vector, reduced mod q."""
        if len(vec) != self.cols:
            raise DimensionMismatchError(f"vector length {len(vec)} != {self.cols} columns")
        q = self.q
        return [sum(a * b for a, b in zip(self.row(i), vec)) % q for i in range(self.rows)]

    def transpose(self) -> "FieldMatrix":
        flipped = tuple(self[i, j] for j in range(self.cols) for i in range(self.rows))
        return FieldMatrix(self.cols, self.rows, flipped, self.q)

    def determinant(self) -> int:
        if not self.is_square:
            raise DimensionMismatchError("determinant of a non-square matrix")
        q, n = self.q, self.rows
        m = self.to_rows()
        det = 1
        for col in range(n):
            pivot = next((r for r in range(col, n) if m[r][col] % q), None)
            if pivot is None:
                return 0
            if pivot != col:
                m[col], m[pivot] = m[pivot], m[col]
                det = -det
            det = det * m[col][col] % q
            inv = pow(m[col][col], -1, q)
            for r in range(col + 1, n):
                f = m[r][col] * inv % q
                if f:
                    m[r] = [(a - f * b) % q for a, b in zip(m[r], m[col])]
        return det % q

    def is_invertible(self) -> bool:
        return self.is_square and self.determinant() != 0

    def to_bytes(self) -> bytes:
        width = _width(self.q)
        q_bytes = self.q.to_bytes(width, "little")
        head = _MATRIX_MAGIC + struct.pack("<IIH", self.rows, self.cols, width) + q_bytes
        return head + b"".join(e.to_bytes(width, "little") for e in self.entries)

    @classmethod
    def from_bytes(cls, data: bytes) -> "FieldMatrix":
        matrix, rest = cls.read_from(data)
        if rest:
            raise WireFormatError("trailing bytes after matrix payload")
        return matrix

    @classmethod
    def read_from(cls, data: bytes) -> tuple["FieldMatrix", bytes]:
        if data[:4] != _MATRIX_MAGIC:
            raise WireFormatError("not a FieldMatrix payload")
        rows, cols, width = struct.unpack_from("<IIH", data, 4)
        pos = 14
        q = int.from_bytes(data[pos:pos + width], "little")
        pos += width
        count = rows * cols
        end = pos + count * width
        if len(data) < end:
            raise WireFormatError("truncated matrix payload")
        entries = tuple(int.from_bytes(data[p:p + width], "little") for p in range(pos, end, width))
        return cls(rows, cols, entries, q), data[end:]


def _width(q: int) -> int:
    return (q.bit_length() + 7) // 8


def mat_inverse(m: FieldMatrix) -> FieldMatrix:
    """Gauss-Jordan inverse over Z_q; raises SingularMatrixError when det = 0."""
    if not m.is_square:
        raise DimensionMismatchError("only square matrices are invertible")
    q, n = m.q, m.rows
    aug = [list(m.row(i)) + [1 if i == j else 0 for j in range(n)] for i in range(n)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] % q), None)
        if pivot is None:
            raise SingularMatrixError("matrix is singular mod q")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = pow(aug[col][col], -1, q)
        aug[col] = [v * inv % q for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col]:
                f = aug[r][col]
                aug[r] = [(a - f * b) % q for a, b in zip(aug[r], aug[col])]
    return FieldMatrix(n, n, tuple(v for row in aug for v in row[n:]), q)


def random_matrix(rows: int, cols: int, q: int, rng: SeedLike = None) -> FieldMatrix:
    rng = as_rng(rng)
    return FieldMatrix(rows, cols, tuple(rng.vector(rows * cols, q)), q)


def sample_invertible_matrix(n: int, rng_seed: SeedLike = None, *, q: int,
                             max_retries: int = MAX_SAMPLING_RETRIES) -> FieldMatrix:
    if n < 1:
        raise DimensionMismatchError("dimension must be >= 1")
    rng = as_rng(rng_seed)
    for _ in range(max_retries):
        m = random_matrix(n, n, q, rng)
        if m.is_invertible():
            return m
    raise SamplingError(f"no invertible {n}x{n} matrix after {max_retries} draws")


def vec_add(a: Iterable[int], b: Iterable[int], q: int) -> list[int]:
    return [(x + y) % q for x, y in zip(a, b, strict=True)]
