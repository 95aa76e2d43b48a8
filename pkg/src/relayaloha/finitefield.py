"""Arithmetic over GF(2^L), dense matrices, Gauss-Jordan elimination, and
the rank distribution of uniformly random matrices.

The sink of the relay system decodes stacked random linear combinations by
row-reducing a coefficient matrix over a small binary extension field; a
packet is recovered exactly when some row of the reduced system pins a
single unknown.  Everything here is deterministic and reentrant: a
:class:`FieldSpec` is immutable and shareable, matrices are owned by their
callers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_FIELD_BITS = 16


def _poly_mod(a: int, b: int) -> int:
    db = b.bit_length() - 1
    while a.bit_length() - 1 >= db:
        a ^= b << (a.bit_length() - 1 - db)
    return a


def _poly_mul_mod(a: int, b: int, modulus: int) -> int:
    acc = 0
    while b:
        if b & 1:
            acc ^= a
        b >>= 1
        a <<= 1
    return _poly_mod(acc, modulus)


def is_irreducible(poly: int) -> bool:
    """Exhaustive trial division by every polynomial of degree <= deg/2."""
    deg = poly.bit_length() - 1
    if deg < 1:
        return False
    for d in range(1, deg // 2 + 1):
        for f in range(1 << d, 1 << (d + 1)):
            if _poly_mod(poly, f) == 0:
                return False
    return True


def default_modulus(l_bits: int) -> int:
    """Smallest irreducible polynomial of the given degree with constant term 1.

    The constant-term restriction only matters for degree 1, where it picks
    x+1 (0b11) over the degenerate x; reduction modulo either realises GF(2).
    """
    if not 1 <= l_bits <= MAX_FIELD_BITS:
        raise ValueError(f"l_bits must be in [1, {MAX_FIELD_BITS}], got {l_bits}")
    for cand in range((1 << l_bits) | 1, 1 << (l_bits + 1), 2):
        if is_irreducible(cand):
            return cand
    raise AssertionError("unreachable: irreducibles exist for every degree")


@lru_cache(maxsize=None)
def _tables(l_bits: int, modulus: int) -> tuple[np.ndarray, np.ndarray]:
    """(exp, log) tables for the multiplicative group, generator-based."""
    q = 1 << l_bits
    if q == 2:
        return np.array([1], dtype=np.int64), np.array([0, 0], dtype=np.int64)
    for g in range(2, q):
        order, x = 0, 1
        while True:
            x = _poly_mul_mod(x, g, modulus)
            order += 1
            if x == 1:
                break
        if order == q - 1:
            break
    else:
        raise AssertionError("no generator found; modulus not irreducible?")
    exp = np.zeros(q - 1, dtype=np.int64)
    log = np.zeros(q, dtype=np.int64)
    x = 1
    for i in range(q - 1):
        exp[i] = x
        log[x] = i
        x = _poly_mul_mod(x, g, modulus)
    return exp, log


@dataclass(frozen=True)
class FieldSpec:
    """A binary extension field GF(2^l_bits) with a fixed modulus polynomial."""

    l_bits: int
    modulus_poly: int

    def __post_init__(self):
        if not 1 <= self.l_bits <= MAX_FIELD_BITS:
            raise ValueError(f"l_bits must be in [1, {MAX_FIELD_BITS}], got {self.l_bits}")
        if self.modulus_poly.bit_length() - 1 != self.l_bits:
            raise ValueError(
                f"modulus polynomial degree {self.modulus_poly.bit_length() - 1} != l_bits {self.l_bits}")
        if not is_irreducible(self.modulus_poly):
            raise ValueError(f"modulus polynomial {self.modulus_poly:#x} is reducible")

    @classmethod
    def default(cls, l_bits: int) -> "FieldSpec":
        return cls(l_bits, default_modulus(l_bits))

    @property
    def order(self) -> int:
        return 1 << self.l_bits

    def _check_element(self, a: int) -> None:
        if not 0 <= a < self.order:
            raise ValueError(f"element {a} outside GF(2^{self.l_bits})")


def field_add(spec: FieldSpec, a: int, b: int) -> int:
    """Addition is bitwise XOR (characteristic 2)."""
    spec._check_element(a)
    spec._check_element(b)
    return a ^ b


def field_mul(spec: FieldSpec, a: int, b: int) -> int:
    spec._check_element(a)
    spec._check_element(b)
    if a == 0 or b == 0:
        return 0
    exp, log = _tables(spec.l_bits, spec.modulus_poly)
    return int(exp[(log[a] + log[b]) % (spec.order - 1)])


def field_inv(spec: FieldSpec, a: int) -> int:
    spec._check_element(a)
    if a == 0:
        raise ZeroDivisionError("zero has no multiplicative inverse")
    exp, log = _tables(spec.l_bits, spec.modulus_poly)
    return int(exp[(spec.order - 1 - int(log[a])) % (spec.order - 1)])


def _mul_vec(spec: FieldSpec, scalars: np.ndarray, row: np.ndarray) -> np.ndarray:
    """Outer product scalars[:, None] * row[None, :] over the field."""
    if spec.l_bits == 1:
        return scalars[:, None] & row[None, :]
    exp, log = _tables(spec.l_bits, spec.modulus_poly)
    out = np.zeros((scalars.size, row.size), dtype=np.int64)
    nz = (scalars[:, None] != 0) & (row[None, :] != 0)
    idx = (log[scalars][:, None] + log[row][None, :]) % (spec.order - 1)
    out[nz] = exp[idx[nz]]
    return out


class FieldMatrix:
    """Dense matrix with entries in GF(2^L), stored row-major as int64."""

    def __init__(self, spec: FieldSpec, entries: np.ndarray):
        data = np.ascontiguousarray(entries, dtype=np.int64)
        if data.ndim != 2:
            raise ValueError("entries must be 2-dimensional")
        if data.size and (data.min() < 0 or data.max() >= spec.order):
            raise ValueError(f"entries must lie in [0, {spec.order})")
        self.spec = spec
        self.data = data

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @classmethod
    def zeros(cls, spec: FieldSpec, rows: int, cols: int) -> "FieldMatrix":
        return cls(spec, np.zeros((rows, cols), dtype=np.int64))

    @classmethod
    def identity(cls, spec: FieldSpec, n: int) -> "FieldMatrix":
        return cls(spec, np.eye(n, dtype=np.int64))

    @classmethod
    def random(cls, spec: FieldSpec, rows: int, cols: int, rng: np.random.Generator) -> "FieldMatrix":
        return cls(spec, rng.integers(0, spec.order, size=(rows, cols), dtype=np.int64))

    def copy(self) -> "FieldMatrix":
        return FieldMatrix(self.spec, self.data.copy())

    def __eq__(self, other) -> bool:
        return (isinstance(other, FieldMatrix) and self.spec == other.spec
                and self.data.shape == other.data.shape
                and bool(np.array_equal(self.data, other.data)))


def gauss_jordan(m: FieldMatrix) -> tuple[FieldMatrix, int, list[int]]:
    """Reduce to RREF; returns (rref, rank, pivot_cols).

    Deterministic: for each column, the first non-zero entry at or below the
    current row becomes the pivot.
    """
    spec = m.spec
    a = m.data.copy()
    rows, cols = a.shape
    pivot_cols: list[int] = []
    r = 0
    binary = spec.l_bits == 1
    if not binary:
        exp, log = _tables(spec.l_bits, spec.modulus_poly)
    for c in range(cols):
        if r >= rows:
            break
        nz = np.nonzero(a[r:, c])[0]
        if nz.size == 0:
            continue
        p = r + int(nz[0])
        if p != r:
            a[[r, p]] = a[[p, r]]
        if not binary:
            pivot = int(a[r, c])
            if pivot != 1:
                inv = int(exp[(spec.order - 1 - int(log[pivot])) % (spec.order - 1)])
                a[r] = _mul_vec(spec, np.array([inv], dtype=np.int64), a[r])[0]
        # eliminate the pivot column everywhere else
        targets = np.nonzero(a[:, c])[0]
        targets = targets[targets != r]
        if targets.size:
            if binary:
                a[targets] ^= a[r]
            else:
                factors = a[targets, c]
                a[targets] ^= _mul_vec(spec, factors, a[r])
        pivot_cols.append(c)
        r += 1
    return FieldMatrix(spec, a), r, pivot_cols


def _is_rref(m: FieldMatrix) -> bool:
    a = m.data
    last_pivot = -1
    seen_zero_row = False
    for i in range(a.shape[0]):
        nz = np.nonzero(a[i])[0]
        if nz.size == 0:
            seen_zero_row = True
            continue
        if seen_zero_row:
            return False
        p = int(nz[0])
        if a[i, p] != 1 or p <= last_pivot:
            return False
        col = a[:, p]
        if int(np.count_nonzero(col)) != 1:
            return False
        last_pivot = p
    return True


def solved_variables(rref: FieldMatrix) -> set[int]:
    """Columns pinned to a unique value: rows with a single non-zero entry.

    The input must already be in reduced row echelon form.
    """
    if not _is_rref(rref):
        raise ValueError("matrix is not in reduced row echelon form")
    counts = np.count_nonzero(rref.data, axis=1)
    solved: set[int] = set()
    for i in np.nonzero(counts == 1)[0]:
        solved.add(int(np.nonzero(rref.data[i])[0][0]))
    return solved


def rank_pmf(spec: FieldSpec, rows_c: int, cols_h: int) -> np.ndarray:
    """Distribution of the rank of a uniform random (rows_c x cols_h) matrix.

    Built by adding one row at a time: an extra row either falls in the span
    of the current rank-n row space (probability q^(n-h)) or extends it.
    Returns a vector over ranks 0..min(rows_c, cols_h) summing to 1.
    """
    if rows_c < 0 or cols_h < 0:
        raise ValueError("matrix dimensions must be >= 0")
    if rows_c == 0 or cols_h == 0:
        return np.ones(1)
    if max(rows_c, cols_h) > 2000:
        return _rank_pmf_log(spec, rows_c, cols_h)
    q = float(spec.order)
    nmax = min(rows_c, cols_h)
    n = np.arange(nmax + 1)
    stay = q ** (n - cols_h)          # new row inside the current span
    grow = 1.0 - q ** (n - cols_h - 1.0)
    pm = np.zeros(nmax + 1)
    pm[0] = q ** (-cols_h)
    if nmax >= 1:
        pm[1] = 1.0 - pm[0]
    for _ in range(2, rows_c + 1):
        shifted = np.empty_like(pm)
        shifted[0] = 0.0
        shifted[1:] = pm[:-1]
        pm = stay * pm + grow * shifted
    return pm


def _rank_pmf_log(spec: FieldSpec, rows_c: int, cols_h: int) -> np.ndarray:
    """Log-space variant of the rank recursion for very large matrices."""
    logq = spec.l_bits * np.log(2.0)
    nmax = min(rows_c, cols_h)
    n = np.arange(nmax + 1)
    log_stay = (n - cols_h) * logq
    grow = -np.expm1((n - cols_h - 1.0) * logq)
    with np.errstate(divide="ignore"):
        log_grow = np.log(grow)
    lp = np.full(nmax + 1, -np.inf)
    lp[0] = -cols_h * logq
    if nmax >= 1:
        lp[1] = np.log(-np.expm1(lp[0]))
    for _ in range(2, rows_c + 1):
        shifted = np.concatenate(([-np.inf], lp[:-1]))
        lp = np.logaddexp(log_stay + lp, log_grow + shifted)
    pm = np.exp(lp)
    return pm / pm.sum()
