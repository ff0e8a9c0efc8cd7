"""Baby-step giant-step discrete logarithm over a bounded exponent range."""

from __future__ import annotations

import math

from .errors import DlogNotFoundError


class BabyStepTable:
    """Precomputed ``{j*base: j}`` for ``0 <= j < m``.

    Built once per (group, base, bound) and then shared read-only across all
    coordinates of a decryption.
    """

    def __init__(self, group, base, bound: int):
        if bound < 1:
            raise ValueError("bound must be >= 1")
        self.group = group
        self.base = base
        self.bound = bound
        self.m = math.isqrt(bound - 1) + 1
        table = {}
        cur = group.identity()
        for j in range(self.m):
            table.setdefault(group.key(cur), j)
            cur = group.op(cur, base)
        self._table = table
        # cur == m*base here
        self._giant = group.neg(cur)
        self.queries = 0

    def solve(self, target) -> int:
        self.queries += 1
        group, m, table = self.group, self.m, self._table
        cur = target
        for i in range(-(-self.bound // m)):
            j = table.get(group.key(cur))
            if j is not None:
                x = i * m + j
                if x < self.bound:
                    return x
                break
            cur = group.op(cur, self._giant)
        raise DlogNotFoundError(f"no discrete log below {self.bound}")


def bsgs_dlog(group, target, base, bound: int, table: BabyStepTable | None = None) -> int:
    """Return the unique ``x < bound`` with ``x*base == target``."""
    if table is None or table.bound != bound or not group.eq(table.base, base):
        table = BabyStepTable(group, base, bound)
    return table.solve(target)


def cached_table(params, group, bound: int) -> BabyStepTable:
    """Baby-step table for ``group.generator``, memoised on the params object."""
    key = (group.name, bound)
    table = params._table_cache.get(key)
    if table is None:
        table = BabyStepTable(group, group.generator, bound)
        params._table_cache[key] = table
    return table
