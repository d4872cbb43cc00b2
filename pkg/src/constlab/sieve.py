"""Prime tables, primorials and totients.

A :class:`PrimeTable` stores exact primality up to ``limit`` twice: as a
packed bit array (bit ``n`` of byte ``n >> 3``, least significant bit first)
and as the sorted array of primes.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import kernels
from .errors import BudgetError, ConfigError

DEFAULT_SEGMENT = 1 << 16
DEFAULT_MAX_LIMIT = 10**9
HARD_MAX_LIMIT = 1 << 40
WORD_MAX = (1 << 63) - 1

MAGIC = b"PTBL"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQ")


@dataclass(frozen=True, eq=False)
class PrimeTable:
    limit: int
    bits: np.ndarray
    primes: np.ndarray

    @property
    def count(self) -> int:
        return int(self.primes.shape[0])

    def is_prime(self, n: int) -> bool:
        if n < 0 or n > self.limit:
            raise ValueError(f"{n} outside table range [0, {self.limit}]")
        return bool((self.bits[n >> 3] >> (n & 7)) & 1)

    def contains(self, values: np.ndarray) -> np.ndarray:
        """Vectorised membership; values outside ``[0, limit]`` are not prime."""
        v = np.asarray(values, dtype=np.int64)
        ok = (v >= 0) & (v <= self.limit)
        out = np.zeros(v.shape, dtype=bool)
        w = v[ok]
        out[ok] = ((self.bits[w >> 3] >> (w & 7).astype(np.uint8)) & 1).astype(bool)
        return out

    @cached_property
    def mask(self) -> np.ndarray:
        """Unpacked uint8 indicator of length ``limit + 1``."""
        return np.unpackbits(self.bits, bitorder="little")[: self.limit + 1].copy()

    def primes_between(self, lo: int, hi: int) -> np.ndarray:
        """Primes p with ``lo <= p <= hi``."""
        i = np.searchsorted(self.primes, lo, side="left")
        j = np.searchsorted(self.primes, hi, side="right")
        return self.primes[i:j]

    def pi(self, x: int) -> int:
        return int(np.searchsorted(self.primes, x, side="right"))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PrimeTable):
            return NotImplemented
        return (
            self.limit == other.limit
            and np.array_equal(self.bits, other.bits)
            and np.array_equal(self.primes, other.primes)
        )

    def dump(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, self.limit))
            fh.write(self.bits.tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "PrimeTable":
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER.size:
            raise ConfigError(f"{path}: truncated header")
        magic, version, limit = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise ConfigError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise ConfigError(f"{path}: unsupported version {version}")
        nbytes = (limit + 1 + 7) // 8
        body = raw[_HEADER.size :]
        if len(body) != nbytes:
            raise ConfigError(f"{path}: expected {nbytes} bytes of bits, found {len(body)}")
        bits = np.frombuffer(body, dtype=np.uint8).copy()
        mask = np.unpackbits(bits, bitorder="little")[: limit + 1]
        primes = np.flatnonzero(mask).astype(np.int64)
        return cls(limit=int(limit), bits=bits, primes=primes)


def _small_primes(n: int) -> np.ndarray:
    """Plain sieve of Eratosthenes for the base primes up to ``n``."""
    if n < 2:
        return np.zeros(0, dtype=np.int64)
    flags = np.ones(n + 1, dtype=np.uint8)
    flags[:2] = 0
    for p in range(2, math.isqrt(n) + 1):
        if flags[p]:
            flags[p * p :: p] = 0
    return np.flatnonzero(flags).astype(np.int64)


def sieve_primes(
    limit: int,
    segment_size: int | None = DEFAULT_SEGMENT,
    max_limit: int = DEFAULT_MAX_LIMIT,
) -> PrimeTable:
    """Segmented sieve of Eratosthenes up to ``limit`` inclusive.

    ``segment_size=None`` sieves the whole range as one block; the result is
    bit-identical either way.
    """
    if not isinstance(limit, (int, np.integer)) or isinstance(limit, bool):
        raise ConfigError(f"limit must be an integer, got {limit!r}")
    limit = int(limit)
    if limit < 2:
        raise ConfigError(f"limit must be >= 2, got {limit}")
    if limit > min(max_limit, HARD_MAX_LIMIT):
        raise BudgetError(f"limit {limit} exceeds the sieve budget {min(max_limit, HARD_MAX_LIMIT)}")
    if segment_size is None:
        segment_size = (limit + 8) // 8 * 8
    if segment_size < 8 or segment_size % 8:
        raise ConfigError(f"segment_size must be a positive multiple of 8, got {segment_size}")

    base = _small_primes(math.isqrt(limit))
    packed: list[np.ndarray] = []
    found: list[np.ndarray] = []
    for lo in range(0, limit + 1, segment_size):
        size = min(segment_size, limit + 1 - lo)
        seg = np.ones(size, dtype=np.uint8)
        kernels.mark_segment(seg, lo, base)
        if lo == 0:
            seg[: min(2, size)] = 0
        found.append(np.flatnonzero(seg).astype(np.int64) + lo)
        packed.append(np.packbits(seg, bitorder="little"))
    return PrimeTable(limit=limit, bits=np.concatenate(packed), primes=np.concatenate(found))


@dataclass(frozen=True)
class Primorial:
    w: int
    W: int
    totient: int

    @property
    def density(self) -> float:
        """phi(W) / W."""
        return self.totient / self.W


def _prime_list(upto: int) -> list[int]:
    return [int(p) for p in _small_primes(upto)]


def largest_admissible_w() -> int:
    """Largest w whose primorial still fits in a signed 64-bit word."""
    W = 1
    p = 2
    while True:
        if all(p % q for q in range(2, math.isqrt(p) + 1)):
            if W * p > WORD_MAX:
                return p - 1
            W *= p
        p += 1


def primorial(w: int) -> Primorial:
    """Return ``W = prod_{p <= w} p`` together with ``phi(W)``."""
    if not isinstance(w, (int, np.integer)) or isinstance(w, bool) or w < 2:
        raise ConfigError(f"w must be an integer >= 2, got {w!r}")
    W = 1
    phi = 1
    for p in _prime_list(int(w)):
        W *= p
        phi *= p - 1
        if W > WORD_MAX:
            raise ConfigError(
                f"primorial of w={w} overflows 64-bit arithmetic; "
                f"the largest admissible w is {largest_admissible_w()}"
            )
    return Primorial(w=int(w), W=W, totient=phi)
