"""Source/target groups, the bilinear pairing, and group-encoded linear algebra.

Two backends share one interface:

* ``bls12_381_params()`` wraps the arkworks BLS12-381 bindings.
* ``toy_params(q)`` is the transparent group Z_q (elements are integers,
  ``a * g`` is modular multiplication, the pairing is the product of
  exponents).  It has no security whatsoever and exists so that matrix and
  mask algebra can be checked exhaustively over small primes.

All group objects are written additively (``op``/``scale``); the target
group's ``op`` is the Fp12 product.
"""

from __future__ import annotations

import functools
import hashlib
import struct
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import py_arkworks_bls12381 as ark

from .errors import DimensionMismatchError, WireFormatError
from .field import FieldMatrix

BLS12_381_ORDER = 0x73EDA753299D7D483339D80809A1D80553BDA402FFFE5BFEFFFFFFFF00000001
DEFAULT_ELEMENT_SIZE_BYTES = 56
TOY_DEFAULT_Q = (1 << 61) - 1


class _BlsPointGroup:
    def __init__(self, name: str, point_cls, order: int):
        self.name = name
        self.order = order
        self._cls = point_cls
        self.generator = point_cls()
        self.wire_size = len(self.generator.to_compressed_bytes())

    def identity(self):
        return self._cls.identity()

    def op(self, a, b):
        return a + b

    def neg(self, a):
        return -a

    def scale(self, a, k: int):
        return a * ark.Scalar(k % self.order)

    def encode(self, k: int):
        # Fixed-base 8-bit windows: 32 additions instead of a full ladder.
        table = self._fixed_base_table()
        acc = self._cls.identity()
        for w, digit in enumerate((k % self.order).to_bytes(32, "little")):
            if digit:
                acc = acc + table[w][digit]
        return acc

    def _fixed_base_table(self) -> list[list]:
        table = getattr(self, "_table", None)
        if table is None:
            table = []
            base = self.generator
            for _ in range(32):
                row = [self._cls.identity()]
                for _ in range(255):
                    row.append(row[-1] + base)
                table.append(row)
                base = row[-1] + base
            self._table = table
        return table

    def msm(self, points: Sequence, scalars: Sequence[int]):
        if len(points) != len(scalars):
            raise DimensionMismatchError("msm length mismatch")
        if not points:
            return self.identity()
        q = self.order
        return self._cls.multiexp_unchecked(list(points), [ark.Scalar(s % q) for s in scalars])

    def eq(self, a, b) -> bool:
        return a == b

    def key(self, a) -> bytes:
        return bytes(a.to_compressed_bytes())

    def to_bytes(self, a) -> bytes:
        return bytes(a.to_compressed_bytes())

    def from_bytes(self, data: bytes):
        try:
            return self._cls.from_compressed_bytes(bytes(data))
        except Exception as exc:  # binding raises bare ValueError/OSError variants
            raise WireFormatError(f"invalid {self.name} encoding") from exc


class _BlsTargetGroup:
    """Gt of BLS12-381.  No native exponentiation, so ``scale`` is double-and-add."""

    wire_size = 576

    def __init__(self, order: int):
        self.name = "bls12_381.gt"
        self.order = order
        self.generator = ark.GT.pairing(ark.G1Point(), ark.G2Point())

    def identity(self):
        return ark.GT.one()

    def op(self, a, b):
        return a * b

    def scale(self, a, k: int):
        k %= self.order
        acc = ark.GT.one()
        base = a
        while k:
            if k & 1:
                acc = acc * base
            base = base * base
            k >>= 1
        return acc

    def neg(self, a):
        return self.scale(a, self.order - 1)

    def encode(self, k: int):
        return self.scale(self.generator, k)

    def msm(self, points, scalars):
        acc = self.identity()
        for p, s in zip(points, scalars, strict=True):
            acc = acc * self.scale(p, s)
        return acc

    def eq(self, a, b) -> bool:
        return a == b

    def key(self, a) -> str:
        return str(a)

    def to_bytes(self, a) -> bytes:
        return bytes.fromhex(str(a))

    def from_bytes(self, data: bytes):
        raise NotImplementedError("target-group elements are never deserialized")


class ToyGroup:
    """Z_q under addition with a chosen generator."""

    def __init__(self, name: str, q: int, generator: int):
        self.name = name
        self.order = q
        self.generator = generator % q
        self.wire_size = (q.bit_length() + 7) // 8

    def identity(self) -> int:
        return 0

    def op(self, a: int, b: int) -> int:
        return (a + b) % self.order

    def neg(self, a: int) -> int:
        return -a % self.order

    def scale(self, a: int, k: int) -> int:
        return a * k % self.order

    def encode(self, k: int) -> int:
        return self.generator * k % self.order

    def msm(self, points, scalars) -> int:
        if len(points) != len(scalars):
            raise DimensionMismatchError("msm length mismatch")
        return sum(p * s for p, s in zip(points, scalars)) % self.order

    def eq(self, a: int, b: int) -> bool:
        return a % self.order == b % self.order

    def key(self, a: int) -> int:
        return a % self.order

    def to_bytes(self, a: int) -> bytes:
        return (a % self.order).to_bytes(self.wire_size, "little")

    def from_bytes(self, data: bytes) -> int:
        if len(data) != self.wire_size:
            raise WireFormatError("toy element has wrong width")
        v = int.from_bytes(data, "little")
        if v >= self.order:
            raise WireFormatError("toy element out of range")
        return v

    def exponent(self, a: int) -> int:
        """Discrete log w.r.t. the generator; trivially available in the toy group."""
        return a * pow(self.generator, -1, self.order) % self.order


@dataclass(frozen=True, eq=False)
class GroupParams:
    """Public parameters: two source groups, a target group, and the pairing.

    ``element_size_bytes`` is an accounting constant used for reporting
    overheads; the wire encoder uses each group's ``wire_size`` instead.
    """

    curve_id: str
    order_q: int
    g1: Any
    g2: Any
    gt: Any
    _pair: Callable[[Any, Any], Any] = field(repr=False)
    _multi_pair: Callable[[Sequence, Sequence], Any] = field(repr=False)
    element_size_bytes: int = DEFAULT_ELEMENT_SIZE_BYTES
    _table_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def group_id_1(self) -> str:
        return self.g1.name

    @property
    def group_id_2(self) -> str:
        return self.g2.name

    @property
    def group_id_target(self) -> str:
        return self.gt.name

    @property
    def gen_1(self):
        return self.g1.generator

    @property
    def gen_2(self):
        return self.g2.generator

    @property
    def is_toy(self) -> bool:
        return isinstance(self.g2, ToyGroup)

    def pairing(self, a, b):
        return self._pair(a, b)

    def multi_pairing(self, a_list: Sequence, b_list: Sequence):
        if len(a_list) != len(b_list):
            raise DimensionMismatchError("multi-pairing length mismatch")
        if not a_list:
            return self.gt.identity()
        return self._multi_pair(list(a_list), list(b_list))

    def fingerprint(self) -> str:
        h = hashlib.sha256(self.curve_id.encode() + struct.pack("<H", self.element_size_bytes))
        h.update(self.order_q.to_bytes(64, "little"))
        return h.hexdigest()[:16]


@functools.lru_cache(maxsize=None)
def _bls_groups():
    # Shared so the fixed-base tables are built once per process.
    q = BLS12_381_ORDER
    return (_BlsPointGroup("bls12_381.g1", ark.G1Point, q),
            _BlsPointGroup("bls12_381.g2", ark.G2Point, q),
            _BlsTargetGroup(q))


def bls12_381_params(element_size_bytes: int = DEFAULT_ELEMENT_SIZE_BYTES) -> GroupParams:
    g1, g2, gt = _bls_groups()
    return GroupParams(
        curve_id="bls12_381",
        order_q=BLS12_381_ORDER,
        g1=g1,
        g2=g2,
        gt=gt,
        _pair=ark.GT.pairing,
        _multi_pair=ark.GT.multi_pairing,
        element_size_bytes=element_size_bytes,
    )


def toy_params(q: int = TOY_DEFAULT_Q, element_size_bytes: int = DEFAULT_ELEMENT_SIZE_BYTES,
               gen_1: int = 3, gen_2: int = 5) -> GroupParams:
    if q < 5:
        raise ValueError("toy modulus too small")
    g1 = ToyGroup(f"toy{q}.g1", q, gen_1)
    g2 = ToyGroup(f"toy{q}.g2", q, gen_2)
    gt = ToyGroup(f"toy{q}.gt", q, gen_1 * gen_2)
    if not (g1.generator and g2.generator):
        raise ValueError("toy generators must be non-zero mod q")

    def pair(a, b):
        return a * b % q

    def multi_pair(a_list, b_list):
        return sum(a * b for a, b in zip(a_list, b_list)) % q

    return GroupParams(f"toy:{q}", q, g1, g2, gt, pair, multi_pair, element_size_bytes)


def params_for_curve_id(curve_id: str, element_size_bytes: int = DEFAULT_ELEMENT_SIZE_BYTES) -> GroupParams:
    if curve_id == "bls12_381":
        return bls12_381_params(element_size_bytes)
    if curve_id.startswith("toy:"):
        return toy_params(int(curve_id[4:]), element_size_bytes)
    raise WireFormatError(f"unknown curve id {curve_id!r}")


def mat_vec_group(group, m: FieldMatrix, v: Sequence) -> list:
    """``out[j] = sum_i m[j, i] * v[i]`` evaluated in ``group``."""
    if m.cols != len(v):
        raise DimensionMismatchError(f"matrix has {m.cols} columns, vector has {len(v)} elements")
    return [group.msm(v, m.row(j)) for j in range(m.rows)]


def pairing_row(params: GroupParams, row_scalars: Sequence[int], v: Sequence):
    """prod_i e(row[i] * g1, v[i]) as one multi-pairing."""
    if len(row_scalars) != len(v):
        raise DimensionMismatchError("row and vector lengths differ")
    g1 = params.g1
    return params.multi_pairing([g1.encode(s) for s in row_scalars], v)
