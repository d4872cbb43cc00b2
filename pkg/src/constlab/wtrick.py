"""W-trick rescaling of prime subsets and the normalised prime weights.

Given a modulus ``W = prod_{p <= w} p``, a margin ``delta'`` and residues
``b_1..b_d`` coprime to ``W``, a point ``x`` of ``[N]^d`` maps to
``a = (x - b) / W - floor(delta' N / W)`` when every ``x_i = b_i (mod W)``.
The image lives in ``[N']^d`` with ``N' = floor((1 - delta') N / W)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import BudgetError, ConfigError, DegenerateInputError, NumericalIntegrityError
from .sieve import PrimeTable, Primorial, primorial

DENSE_BUDGET = 1 << 27


@dataclass(frozen=True, eq=False)
class DenseSubset:
    """A finite set of lattice points in ``[1, bound]^d``.

    Stored either explicitly (``points``, lexicographically sorted and
    unique) or as a Cartesian product of sorted coordinate sets
    (``factors``).  Product sets never materialise their points unless asked.
    """

    d: int
    bound: int
    points_: np.ndarray | None = None
    factors: tuple[np.ndarray, ...] | None = None
    source: str = ""

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.d}")
        if (self.points_ is None) == (self.factors is None):
            raise ConfigError("DenseSubset needs exactly one of points or factors")
        if self.points_ is not None:
            pts = self.points_
            if pts.ndim != 2 or pts.shape[1] != self.d:
                raise ConfigError(f"points must have shape (n, {self.d}), got {pts.shape}")
            if pts.size and (pts.min() < 1 or pts.max() > self.bound):
                raise ConfigError(f"points must lie in [1, {self.bound}]^{self.d}")
        else:
            if len(self.factors) != self.d:
                raise ConfigError(f"need {self.d} factors, got {len(self.factors)}")
            for f in self.factors:
                if f.size and (f[0] < 1 or f[-1] > self.bound):
                    raise ConfigError(f"factor entries must lie in [1, {self.bound}]")

    @classmethod
    def from_points(cls, points: Iterable[Sequence[int]] | np.ndarray, bound: int,
                    d: int | None = None, source: str = "points") -> "DenseSubset":
        arr = np.asarray(points if isinstance(points, np.ndarray) else list(points), dtype=np.int64)
        if arr.size == 0:
            dim = d if d is not None else (arr.shape[1] if arr.ndim == 2 else 1)
            arr = np.zeros((0, dim), dtype=np.int64)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if d is not None and arr.shape[1] != d:
            raise ConfigError(f"points have dimension {arr.shape[1]}, expected {d}")
        arr = np.unique(arr, axis=0) if arr.shape[0] else arr
        return cls(d=arr.shape[1], bound=int(bound), points_=arr, source=source)

    @classmethod
    def product(cls, factors: Sequence[Iterable[int]], bound: int, source: str = "product") -> "DenseSubset":
        fs = tuple(np.unique(np.asarray(list(f), dtype=np.int64)) for f in factors)
        return cls(d=len(fs), bound=int(bound), factors=fs, source=source)

    @classmethod
    def empty(cls, d: int, bound: int) -> "DenseSubset":
        return cls.from_points(np.zeros((0, d), dtype=np.int64), bound, d=d, source="empty")

    @property
    def is_product(self) -> bool:
        return self.factors is not None

    def __len__(self) -> int:
        if self.factors is not None:
            return math.prod(int(f.shape[0]) for f in self.factors)
        return int(self.points_.shape[0])

    @cached_property
    def points(self) -> np.ndarray:
        if self.points_ is not None:
            return self.points_
        n = len(self)
        if n > DENSE_BUDGET:
            raise BudgetError(f"refusing to materialise {n} points of a product set")
        if n == 0:
            return np.zeros((0, self.d), dtype=np.int64)
        grids = np.meshgrid(*self.factors, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @cached_property
    def _keys(self) -> np.ndarray:
        return self.linear_index(self.points)

    def linear_index(self, pts: np.ndarray) -> np.ndarray:
        """C-order index of points in the ``(bound + 1)^d`` box."""
        strides = np.array([(self.bound + 1) ** (self.d - 1 - i) for i in range(self.d)], dtype=np.int64)
        return np.asarray(pts, dtype=np.int64) @ strides

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Vectorised membership test for an ``(n, d)`` array."""
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, self.d)
        inside = np.all((pts >= 1) & (pts <= self.bound), axis=1)
        out = np.zeros(pts.shape[0], dtype=bool)
        if not inside.any():
            return out
        if self.factors is not None:
            ok = inside.copy()
            for i, f in enumerate(self.factors):
                col = pts[ok, i]
                pos = np.searchsorted(f, col)
                hit = np.zeros(col.shape[0], dtype=bool)
                valid = pos < f.shape[0]
                hit[valid] = f[pos[valid]] == col[valid]
                ok[ok] = hit
            return ok
        keys = self._keys
        q = self.linear_index(pts[inside])
        pos = np.searchsorted(keys, q)
        valid = pos < keys.shape[0]
        hit = np.zeros(q.shape[0], dtype=bool)
        hit[valid] = keys[pos[valid]] == q[valid]
        out[inside] = hit
        return out

    def __contains__(self, pt: Sequence[int]) -> bool:
        return bool(self.contains(np.asarray(pt).reshape(1, -1))[0])

    def mask(self) -> np.ndarray:
        """Dense uint8 indicator over ``[0, bound]^d`` (index 0 unused)."""
        size = (self.bound + 1) ** self.d
        if size > DENSE_BUDGET:
            raise BudgetError(f"dense mask of {size} cells exceeds budget {DENSE_BUDGET}")
        m = np.zeros((self.bound + 1,) * self.d, dtype=np.uint8)
        if self.factors is not None:
            ind = []
            for f in self.factors:
                v = np.zeros(self.bound + 1, dtype=np.uint8)
                v[f] = 1
                ind.append(v)
            m = ind[0]
            for v in ind[1:]:
                m = np.multiply.outer(m, v)
            return m.astype(np.uint8)
        if len(self):
            m[tuple(self.points.T)] = 1
        return m

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for p in self.points:
                fh.write(" ".join(str(int(c)) for c in p) + "\n")

    @classmethod
    def load(cls, path: str | Path, bound: int, d: int | None = None) -> "DenseSubset":
        rows = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([int(tok) for tok in line.split()])
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: non-integer coordinate in {line!r}") from None
        widths = {len(r) for r in rows}
        if len(widths) > 1:
            raise ConfigError(f"{path}: inconsistent point dimensions {sorted(widths)}")
        if rows and d is not None and widths != {d}:
            raise ConfigError(f"{path}: points have dimension {widths.pop()}, expected {d}")
        dim = widths.pop() if rows else (d or 1)
        arr = np.asarray(rows, dtype=np.int64).reshape(-1, dim)
        if arr.size and (arr.min() < 1 or arr.max() > bound):
            raise ConfigError(f"{path}: coordinates must lie in [1, {bound}]")
        return cls.from_points(arr, bound, d=dim, source=str(path))


def prime_grid(table: PrimeTable, N: int, d: int, lo: int = 1) -> DenseSubset:
    """``(P cap [lo, N])^d`` as a product set."""
    if table.limit < N:
        raise ConfigError(f"prime table limit {table.limit} is below N={N}")
    ps = table.primes_between(lo, N)
    return DenseSubset.product([ps] * d, bound=N, source=f"primes<={N}")


@dataclass(frozen=True)
class WTrickContext:
    w: int
    W: int
    totient: int
    delta_prime: Fraction
    N: int
    residues: tuple[int, ...]

    def __post_init__(self) -> None:
        if not (0 < self.delta_prime <= Fraction(1, 2)):
            raise ConfigError(f"delta' must lie in (0, 1/2], got {self.delta_prime}")
        for i, b in enumerate(self.residues):
            if not (1 <= b < max(self.W, 2)) or math.gcd(b, self.W) != 1:
                raise ConfigError(f"residue b_{i + 1}={b} is not a unit modulo W={self.W}")
        if self.n_prime < 1:
            raise ConfigError(f"N={self.N} is too small: N' = {self.n_prime}")

    @property
    def d(self) -> int:
        return len(self.residues)

    @property
    def n_prime(self) -> int:
        return math.floor((1 - self.delta_prime) * self.N / self.W)

    @property
    def offset(self) -> int:
        """``floor(delta' N / W)``."""
        return math.floor(self.delta_prime * self.N / self.W)

    @property
    def level(self) -> float:
        """The nonzero weight value ``(phi(W) / W) log N``."""
        return self.totient / self.W * math.log(self.N)

    def unrescale(self, a: np.ndarray, i: int) -> np.ndarray:
        """Map rescaled coordinates back: ``W (a + offset) + b_i``."""
        return self.W * (np.asarray(a, dtype=np.int64) + self.offset) + self.residues[i]

    def top(self, i: int) -> int:
        """Largest original integer reached by coordinate ``i``."""
        return int(self.unrescale(np.array([self.n_prime]), i)[0])


def make_context(w: int, delta_prime: Fraction | float | str, N: int, residues: Sequence[int]) -> WTrickContext:
    pm = primorial(w)
    return WTrickContext(
        w=pm.w, W=pm.W, totient=pm.totient,
        delta_prime=_as_fraction(delta_prime), N=int(N),
        residues=tuple(int(b) for b in residues),
    )


def _as_fraction(x: Fraction | float | str | int) -> Fraction:
    try:
        q = Fraction(x).limit_denominator(10**9) if isinstance(x, float) else Fraction(x)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot parse delta' = {x!r}") from None
    return q


@dataclass(frozen=True)
class ResidueSelection:
    context: WTrickContext
    attained: int
    window_count: int
    strategy: str

    @property
    def pigeonhole_bound(self) -> float:
        return self.window_count / self.context.totient ** self.context.d


def _best(counts: dict[tuple[int, ...], int]) -> tuple[tuple[int, ...], int]:
    # argmax count, ties to the lexicographically smallest tuple
    key, cnt = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return key, cnt


def _unit_tally(values: np.ndarray, W: int) -> dict[int, int]:
    res = values % W
    res = res[np.gcd(res, W) == 1]
    u, c = np.unique(res, return_counts=True)
    return {int(a): int(b) for a, b in zip(u, c)}


def select_residues(
    table: PrimeTable | None,
    A: DenseSubset,
    w: int,
    delta_prime: Fraction | float | str,
    N: int,
    strategy: str = "joint",
) -> ResidueSelection:
    """Pick residues ``b_i`` coprime to ``W`` holding the most points of A.

    Only points of ``A cap [delta' N, N]^d`` whose coordinates are all units
    mod ``W`` are tallied; the winning class always holds at least the
    average share ``window_count / phi(W)^d`` under the joint strategy.
    ``strategy="marginal"`` maximises each coordinate separately.
    """
    pm: Primorial = primorial(w)
    dp = _as_fraction(delta_prime)
    if not (0 < dp <= Fraction(1, 2)):
        raise ConfigError(f"delta' must lie in (0, 1/2], got {dp}")
    if dp * N <= pm.w:
        raise ConfigError(f"need delta' N > w so every prime in the window exceeds w (delta' N = {float(dp * N)})")
    if strategy not in ("joint", "marginal"):
        raise ConfigError(f"unknown residue strategy {strategy!r}")
    if table is not None and table.limit < N:
        raise ConfigError(f"prime table limit {table.limit} is below N={N}")
    lo = math.ceil(dp * N)
    W, d = pm.W, A.d

    if A.is_product:
        picks, attained, window = [], 1, 1
        for f in A.factors:
            f = f[(f >= lo) & (f <= N)]
            tally = _unit_tally(f, W)
            window *= sum(tally.values())
            if not tally:
                raise DegenerateInputError("no unit residue class meets A inside the window")
            b, c = _best({(k,): v for k, v in tally.items()})
            picks.append(b[0])
            attained *= c
        residues = tuple(picks)
    else:
        pts = A.points
        pts = pts[np.all((pts >= lo) & (pts <= N), axis=1)]
        res = pts % W
        res = res[np.all(np.gcd(res, W) == 1, axis=1)]
        window = int(res.shape[0])
        if window == 0:
            raise DegenerateInputError("no unit residue class meets A inside the window")
        rows, counts = np.unique(res, axis=0, return_counts=True)
        joint = {tuple(int(x) for x in r): int(c) for r, c in zip(rows, counts)}
        if strategy == "joint":
            residues, attained = _best(joint)
        else:
            residues = tuple(
                _best({(k,): v for k, v in _unit_tally(res[:, i], W).items()})[0][0] for i in range(d)
            )
            attained = joint.get(residues, 0)
            if attained == 0:
                raise DegenerateInputError(f"marginal residues {residues} hold no point of A")

    if strategy == "joint" and attained * pm.totient**d < window:
        raise NumericalIntegrityError(
            f"pigeonhole violated: class count {attained} below average {window}/{pm.totient}^{d}"
        )
    ctx = WTrickContext(w=pm.w, W=W, totient=pm.totient, delta_prime=dp, N=int(N), residues=tuple(residues))
    return ResidueSelection(context=ctx, attained=int(attained), window_count=int(window), strategy=strategy)


def rescale_subset(A: DenseSubset, ctx: WTrickContext) -> DenseSubset:
    """``A' = {a in [N']^d : W (a + floor(delta' N / W)) + b in A}``."""
    if A.d != ctx.d:
        raise ConfigError(f"subset dimension {A.d} does not match {ctx.d} residues")
    b = np.asarray(ctx.residues, dtype=np.int64)
    if A.is_product:
        out = []
        for i, f in enumerate(A.factors):
            f = f[(f % ctx.W) == b[i]]
            a = (f - b[i]) // ctx.W - ctx.offset
            out.append(a[(a >= 1) & (a <= ctx.n_prime)])
        return DenseSubset.product(out, bound=ctx.n_prime, source=f"rescaled({A.source})")
    pts = A.points
    pts = pts[np.all(pts % ctx.W == b, axis=1)]
    a = (pts - b) // ctx.W - ctx.offset
    a = a[np.all((a >= 1) & (a <= ctx.n_prime), axis=1)]
    return DenseSubset.from_points(a, bound=ctx.n_prime, d=ctx.d, source=f"rescaled({A.source})")


@dataclass(frozen=True, eq=False)
class WeightField:
    """A nonnegative function on ``[1, n]``, zero elsewhere.

    ``values`` has length ``n + 1`` with slot 0 unused.  ``level`` is the
    common nonzero value of a two-valued field, else ``None``.  The
    ``untruncated`` flag (test use only) makes the field read 1 on all of Z.
    """

    n: int
    values: np.ndarray
    level: float | None = None
    untruncated: bool = False
    context: WTrickContext | None = field(default=None, compare=False)
    coordinate: int | None = None

    def __post_init__(self) -> None:
        if self.values.shape != (self.n + 1,):
            raise ConfigError(f"values must have length n + 1 = {self.n + 1}")
        if self.values.dtype != np.float64:
            raise ConfigError("values must be float64")

    @classmethod
    def from_values(cls, values: Sequence[float] | np.ndarray, level: float | None = None) -> "WeightField":
        """Field whose value at ``a`` (1-based) is ``values[a - 1]``."""
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 1:
            raise ConfigError("weight values must be one-dimensional")
        if v.size and v.min() < 0:
            raise ConfigError("weights must be nonnegative")
        full = np.zeros(v.shape[0] + 1, dtype=np.float64)
        full[1:] = v
        if level is None:
            nz = np.unique(v[v != 0])
            level = float(nz[0]) if nz.shape[0] == 1 else None
        return cls(n=int(v.shape[0]), values=full, level=level)

    @classmethod
    def ones(cls, n: int, untruncated: bool = False) -> "WeightField":
        full = np.ones(n + 1, dtype=np.float64)
        full[0] = 0.0
        return cls(n=n, values=full, level=1.0, untruncated=untruncated)

    @classmethod
    def bernoulli(cls, n: int, p: float, rng: np.random.Generator) -> "WeightField":
        """Independent Bernoulli(p) support scaled by ``1/p``; mean 1."""
        if not 0 < p <= 1:
            raise ConfigError(f"p must lie in (0, 1], got {p}")
        hits = rng.random(n) < p
        return cls.from_values(hits / p, level=1.0 / p)

    @cached_property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.values).astype(np.int64)

    @cached_property
    def mask(self) -> np.ndarray:
        return (self.values != 0).astype(np.uint8)

    @property
    def mean(self) -> float:
        """``E_{a in [n]} nu(a)``."""
        if self.untruncated:
            return 1.0
        return math.fsum(self.values[1:]) / self.n

    def take(self, idx: np.ndarray | int) -> np.ndarray:
        """Evaluate at integer points, zero outside ``[1, n]``."""
        idx = np.asarray(idx, dtype=np.int64)
        if self.untruncated:
            return np.ones(idx.shape, dtype=np.float64)
        out = np.zeros(idx.shape, dtype=np.float64)
        ok = (idx >= 1) & (idx <= self.n)
        out[ok] = self.values[idx[ok]]
        return out

    def __call__(self, a: int) -> float:
        return float(self.take(np.array(a)))

    def scaled(self, c: float) -> "WeightField":
        if c < 0:
            raise ConfigError("scale must be nonnegative")
        return WeightField(
            n=self.n, values=self.values * c,
            level=None if self.level is None else self.level * c,
            untruncated=False, context=self.context, coordinate=self.coordinate,
        )


def build_weight(table: PrimeTable, ctx: WTrickContext, i: int) -> WeightField:
    """The weight ``(phi(W)/W) log N`` on rescaled primes of coordinate ``i``.

    ``i`` is zero-based.
    """
    if not 0 <= i < ctx.d:
        raise ConfigError(f"coordinate {i} out of range for d={ctx.d}")
    b = ctx.residues[i]
    if math.gcd(b, ctx.W) != 1:
        raise ConfigError(f"residue {b} not coprime to W={ctx.W}")
    top = ctx.top(i)
    if table.limit < top:
        raise ConfigError(f"prime table limit {table.limit} must reach {top} = W(N' + offset) + b")
    lo = int(ctx.unrescale(np.array([1]), i)[0])
    ps = table.primes_between(lo, top)
    ps = ps[ps % ctx.W == b]
    a = (ps - b) // ctx.W - ctx.offset
    values = np.zeros(ctx.n_prime + 1, dtype=np.float64)
    values[a] = ctx.level
    return WeightField(n=ctx.n_prime, values=values, level=ctx.level, context=ctx, coordinate=i)


def table_limit_for(N: int, w: int) -> int:
    """Sieve limit sufficient for :func:`build_weight` at any residue."""
    return int(N) + primorial(w).W


@dataclass(frozen=True)
class WTrickSetup:
    selection: ResidueSelection
    weights: tuple[WeightField, ...]
    subset: DenseSubset

    @property
    def context(self) -> WTrickContext:
        return self.selection.context


def setup(
    table: PrimeTable,
    N: int,
    w: int,
    delta_prime: Fraction | float | str = Fraction(1, 2),
    d: int = 1,
    A: DenseSubset | None = None,
    strategy: str = "joint",
) -> WTrickSetup:
    """Select residues for A (default: all primes up to N), rescale, build weights."""
    if A is None:
        A = prime_grid(table, N, d)
    sel = select_residues(table, A, w, delta_prime, N, strategy=strategy)
    weights = tuple(build_weight(table, sel.context, i) for i in range(A.d))
    return WTrickSetup(selection=sel, weights=weights, subset=rescale_subset(A, sel.context))
