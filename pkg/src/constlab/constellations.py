"""Counting constellations ``a + r v_1, .., a + r v_k`` inside ``A subset [N]^d``.

A hit is a pair ``(a, r)`` with ``a`` in Z^d and ``r >= 1`` such that every
``a + r v_j`` lies in ``A``.  Since ``A`` sits in ``[N]^d``, only ``r < N``
can contribute once the shape has two distinct points.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import kernels
from .errors import BudgetError, ConfigError
from .sieve import PrimeTable, sieve_primes
from .wtrick import DENSE_BUDGET, DenseSubset, prime_grid

ORACLE_BUDGET = 5 * 10**7


@dataclass(frozen=True)
class Shape:
    vectors: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if not self.vectors:
            raise ConfigError("a shape needs at least one vector")
        widths = {len(v) for v in self.vectors}
        if len(widths) != 1 or 0 in widths:
            raise ConfigError(f"shape vectors must share one positive dimension, got {sorted(widths)}")
        if len(set(self.vectors)) != len(self.vectors):
            raise ConfigError("shape vectors must be pairwise distinct")

    @classmethod
    def of(cls, *vectors: Sequence[int] | int) -> "Shape":
        return cls(tuple((int(v),) if np.isscalar(v) else tuple(int(c) for c in v) for v in vectors))

    @property
    def d(self) -> int:
        return len(self.vectors[0])

    @property
    def k(self) -> int:
        return len(self.vectors)

    @property
    def omega(self) -> tuple[tuple[int, ...], ...]:
        """Projection of the shape onto each coordinate."""
        return tuple(tuple(sorted({v[i] for v in self.vectors})) for i in range(self.d))

    @property
    def omega_size(self) -> int:
        return sum(len(o) for o in self.omega)

    def array(self) -> np.ndarray:
        return np.asarray(self.vectors, dtype=np.int64)

    def scaled(self, s: int) -> "Shape":
        return Shape(tuple(tuple(s * c for c in v) for v in self.vectors))

    def permuted(self, order: Sequence[int]) -> "Shape":
        return Shape(tuple(tuple(v[i] for i in order) for v in self.vectors))

    def to_json(self) -> dict:
        return {"d": self.d, "vectors": [list(v) for v in self.vectors]}

    @classmethod
    def from_json(cls, data: dict) -> "Shape":
        if not isinstance(data, dict):
            raise ConfigError("shape must be a JSON object")
        if "vectors" not in data:
            raise ConfigError("shape is missing field 'vectors'")
        vecs = data["vectors"]
        if not isinstance(vecs, list) or not all(isinstance(v, list) for v in vecs):
            raise ConfigError("field 'vectors' must be a list of integer lists")
        try:
            shape = cls(tuple(tuple(_as_int(c) for c in v) for v in vecs))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"field 'vectors' is malformed: {exc}") from None
        if "d" in data and data["d"] != shape.d:
            raise ConfigError(f"field 'd' is {data['d']} but the vectors have dimension {shape.d}")
        return shape

    @classmethod
    def load(cls, path: str | Path) -> "Shape":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_json(data)


def _as_int(c: object) -> int:
    if isinstance(c, bool) or not isinstance(c, int):
        raise ConfigError(f"field 'vectors' holds a non-integer coordinate {c!r}")
    return c


@dataclass(frozen=True)
class ConstellationHit:
    a: tuple[int, ...]
    r: int


def _check_subset(shape: Shape, A: DenseSubset, N: int) -> DenseSubset:
    if A.d != shape.d:
        raise ConfigError(f"shape has dimension {shape.d} but the subset has {A.d}")
    if N < 1:
        raise ConfigError(f"N must be positive, got {N}")
    if A.bound == N:
        return A
    if A.is_product:
        if any(f.size and f[-1] > N for f in A.factors):
            raise ConfigError(f"subset leaves [1, {N}]^{A.d}")
        return DenseSubset.product(A.factors, bound=N, source=A.source)
    if len(A) and int(A.points.max()) > N:
        raise ConfigError(f"subset leaves [1, {N}]^{A.d}")
    return DenseSubset.from_points(A.points, bound=N, d=A.d, source=A.source)


def _a_ranges(V: np.ndarray, r: int, N: int) -> tuple[np.ndarray, np.ndarray]:
    lo = 1 - r * V.min(axis=0)
    hi = N - r * V.max(axis=0)
    return lo, hi


@dataclass(frozen=True)
class BruteCount:
    count: int
    hits: list[ConstellationHit] | None


def count_bruteforce(shape: Shape, A: DenseSubset, N: int, with_hits: bool = False,
                     budget: int = ORACLE_BUDGET) -> BruteCount:
    """Enumerate every ``(r, a)`` over a dense indicator of A.

    Hits come out in lexicographic ``(r, a)`` order.
    """
    A = _check_subset(shape, A, N)
    if N ** (shape.d + 1) > budget:
        raise BudgetError(f"N^(d+1) = {N ** (shape.d + 1)} exceeds the oracle budget {budget}")
    mask = A.mask().astype(bool)
    V = shape.array()
    total, hits = 0, [] if with_hits else None
    for r in range(1, N):
        lo, hi = _a_ranges(V, r, N)
        if np.any(hi < lo):
            break
        ok = np.ones(tuple(int(x) for x in hi - lo + 1), dtype=bool)
        for v in V:
            start = lo + r * v
            ok &= mask[tuple(slice(int(s), int(s) + ok.shape[i]) for i, s in enumerate(start))]
        total += int(ok.sum())
        if with_hits:
            for a in np.argwhere(ok):
                hits.append(ConstellationHit(tuple(int(x) for x in a + lo), r))
    return BruteCount(total, hits)


def iter_hits(shape: Shape, A: DenseSubset, N: int) -> Iterator[ConstellationHit]:
    """Lazily yield hits in ``(r, a)`` order without a dense indicator."""
    A = _check_subset(shape, A, N)
    if len(A) == 0:
        return
    pts = A.points
    V = shape.array()
    for r in range(1, N):
        lo, hi = _a_ranges(V, r, N)
        if np.any(hi < lo):
            break
        a = pts - r * V[0]
        ok = np.all((a >= lo) & (a <= hi), axis=1)
        for v in V[1:]:
            ok[ok] = A.contains(a[ok] + r * v)
        for row in a[ok]:
            yield ConstellationHit(tuple(int(x) for x in row), r)


def _pattern_counts(factor: np.ndarray, pattern: Sequence[int], N: int) -> np.ndarray:
    """``out[r] = #{a : a + r c in factor for every c in pattern}`` for r < N."""
    rmax = N - 1
    if factor.shape[0] == 0:
        return np.zeros(rmax + 1, dtype=np.int64)
    base = min(pattern)
    rel = np.asarray(sorted(c - base for c in pattern), dtype=np.int64)
    mask = np.zeros(N + 1, dtype=np.uint8)
    mask[factor] = 1
    return kernels.pattern_counts_by_r(mask, np.ascontiguousarray(factor, dtype=np.int64), rel, rmax)


def counts_by_r(shape: Shape, A: DenseSubset, N: int, method: str = "auto") -> list[int]:
    """Hit counts indexed by r (entry 0 unused), exact Python integers.

    ``method`` is ``"product"`` (A must be a Cartesian product, or d = 1),
    ``"probe"`` (membership probing for general A) or ``"auto"``.
    """
    A = _check_subset(shape, A, N)
    rmax = N - 1
    if method == "auto":
        method = "product" if (A.is_product or shape.d == 1) else "probe"
    if method == "product":
        if A.is_product:
            factors = A.factors
        elif shape.d == 1:
            factors = (A.points[:, 0],)
        else:
            raise ConfigError("product counting needs a Cartesian-product subset")
        per = [_pattern_counts(f, om, N) for f, om in zip(factors, shape.omega)]
        out = [0] * (rmax + 1)
        for r in range(1, rmax + 1):
            out[r] = math.prod(int(c[r]) for c in per)
        return out
    if method != "probe":
        raise ConfigError(f"unknown counting method {method!r}")
    if (N + 1) ** shape.d > DENSE_BUDGET:
        raise BudgetError(f"probe mask of {(N + 1) ** shape.d} cells exceeds budget {DENSE_BUDGET}")
    V = shape.array()
    mask = np.ascontiguousarray(A.mask().ravel())
    pts = np.ascontiguousarray(A.points, dtype=np.int64)
    deltas = np.ascontiguousarray(V[1:] - V[0], dtype=np.int64).reshape(-1, shape.d)
    counts = kernels.probe_counts_by_r(mask, N, pts, deltas, rmax)
    return [0] + [int(c) for c in counts[1:]]


def count_fast(shape: Shape, A: DenseSubset, N: int, method: str = "auto") -> int:
    return sum(counts_by_r(shape, A, N, method))


@dataclass(frozen=True)
class DilationResult:
    lhs: int
    rhs: int

    @property
    def equal(self) -> bool:
        return self.lhs == self.rhs


def dilation_check(shape: Shape, s: int, A: DenseSubset, N: int) -> DilationResult:
    """Hits of ``s v`` against hits of ``v`` whose r is a multiple of s.

    Needs ``k >= 2``: a one-point shape is hit for every r, so the cutoff
    ``r < N`` would break the correspondence.
    """
    if s < 1:
        raise ConfigError(f"dilation factor must be positive, got {s}")
    if shape.k < 2:
        raise ConfigError("dilation check needs a shape with at least two vectors")
    lhs = count_fast(shape.scaled(s), A, N)
    per_r = counts_by_r(shape, A, N)
    return DilationResult(lhs=lhs, rhs=sum(per_r[s::s]))


@dataclass(frozen=True)
class ScalingRow:
    N: int
    count: int
    normalized: float
    seconds: float


@dataclass(frozen=True)
class ScalingReport:
    rows: list[ScalingRow]

    @property
    def flatness(self) -> float:
        """max / min of the normalised counts (inf if some count is zero)."""
        vals = [row.normalized for row in self.rows]
        if not vals:
            return math.nan
        if min(vals) <= 0:
            return math.inf
        return max(vals) / min(vals)


def normalized_count(count: int, N: int, shape: Shape) -> float:
    """``count * log(N)^{sum |Omega_i|} / N^{d+1}``."""
    return count * math.log(N) ** shape.omega_size / N ** (shape.d + 1)


def scaling_report(shape: Shape, grid: Sequence[int], table: PrimeTable | None = None) -> ScalingReport:
    """Counts in the full prime grid ``(P cap [N])^d`` for each N in ``grid``."""
    grid = [int(n) for n in grid]
    if not grid:
        return ScalingReport([])
    if any(n < 2 for n in grid):
        raise ConfigError(f"grid values must be >= 2, got {grid}")
    if table is None or table.limit < max(grid):
        table = sieve_primes(max(grid))
    rows = []
    for N in grid:
        t0 = time.perf_counter()
        count = count_fast(shape, prime_grid(table, N, shape.d), N)
        rows.append(ScalingRow(N=N, count=count, normalized=normalized_count(count, N, shape),
                               seconds=time.perf_counter() - t0))
    return ScalingReport(rows)
