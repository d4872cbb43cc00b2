"""Finite cylinder measures built from a subset A and weights nu_i.

For a tuple ``Omega = (Omega_1, .., Omega_d)`` of finite integer sets the
measure of the cylinder event ``{B : B_0 subset B}`` is

    E_{a in [N']^d} E_{r in [M]} prod_{b in B_0} 1_A(a + r b)
                                  * prod_i prod_{c in Omega_i} nu_i(a_i + c r),

with every ``nu_i`` extended by zero outside ``[N']``.  Exact events
``{B : B cap G = B_0}`` over the grid ``G = prod_i Omega_i`` follow by
inclusion-exclusion.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import BudgetError, ConfigError
from .wtrick import DenseSubset, WeightField

MAX_COORD_SET = 6
MAX_TOTAL_OMEGA = 24
MAX_EXACT_FREE = 16
DENSE_SUM_BUDGET = 1 << 30

Point = tuple[int, ...]


@dataclass(frozen=True)
class CylinderSpec:
    omega: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if not self.omega:
            raise ConfigError("Omega needs at least one coordinate")
        for i, om in enumerate(self.omega, 1):
            if not om:
                raise ConfigError(f"Omega_{i} is empty")
            if len(om) > MAX_COORD_SET:
                raise ConfigError(f"|Omega_{i}| = {len(om)} exceeds {MAX_COORD_SET}")
            if len(set(om)) != len(om):
                raise ConfigError(f"Omega_{i} has repeated entries")

    @classmethod
    def of(cls, *sets: Sequence[int]) -> "CylinderSpec":
        return cls(tuple(tuple(sorted(set(int(c) for c in s))) for s in sets))

    @classmethod
    def parse(cls, text: str) -> "CylinderSpec":
        """``"0,1;0"`` means ``Omega_1 = {0, 1}``, ``Omega_2 = {0}``."""
        try:
            return cls.of(*[[int(t) for t in part.split(",") if t.strip()] for part in text.split(";")])
        except ValueError:
            raise ConfigError(f"cannot parse Omega {text!r}") from None

    @property
    def d(self) -> int:
        return len(self.omega)

    @property
    def size(self) -> int:
        """``sum_i |Omega_i|``."""
        return sum(len(om) for om in self.omega)

    def grid(self) -> list[Point]:
        return [tuple(p) for p in itertools.product(*self.omega)]

    def contains(self, other: "CylinderSpec") -> bool:
        return other.d == self.d and all(set(a) <= set(b) for a, b in zip(other.omega, self.omega))

    def shifted(self, h: Sequence[int]) -> "CylinderSpec":
        return CylinderSpec(tuple(tuple(c + int(s) for c in om) for om, s in zip(self.omega, h)))


@dataclass(frozen=True)
class CylinderEvent:
    spec: CylinderSpec
    b0: tuple[Point, ...]
    mode: str = "superset"

    def __post_init__(self) -> None:
        if self.mode not in ("superset", "exact"):
            raise ConfigError(f"event mode must be 'superset' or 'exact', got {self.mode!r}")
        grid = set(self.spec.grid())
        for b in self.b0:
            if len(b) != self.spec.d:
                raise ConfigError(f"B_0 point {b} has dimension {len(b)}, expected {self.spec.d}")
            if b not in grid:
                raise ConfigError(f"B_0 point {b} is not in the grid prod Omega_i")
        if len(set(self.b0)) != len(self.b0):
            raise ConfigError("B_0 has repeated points")

    @classmethod
    def make(cls, spec: CylinderSpec, b0: Sequence[Sequence[int]], mode: str = "superset") -> "CylinderEvent":
        return cls(spec, tuple(sorted(tuple(int(c) for c in b) for b in b0)), mode)

    @classmethod
    def base(cls, d: int) -> "CylinderEvent":
        """The event ``{B : 0 in B}`` over ``Omega = ({0}, .., {0})``."""
        return cls.make(CylinderSpec.of(*[[0]] * d), [(0,) * d])


def parse_points(text: str) -> list[Point]:
    """``"(0,0),(1,0)"`` -> ``[(0, 0), (1, 0)]``; an empty string is the empty set."""
    text = text.strip()
    if not text or text in ("()", "{}", "[]"):
        return []
    groups = re.findall(r"\(([^()]*)\)", text)
    if not groups:
        raise ConfigError(f"cannot parse point list {text!r}")
    try:
        return [tuple(int(t) for t in g.split(",") if t.strip()) for g in groups]
    except ValueError:
        raise ConfigError(f"cannot parse point list {text!r}") from None


@dataclass(frozen=True)
class MeasureReport:
    value: float
    total_mass: float
    terms: int

    @property
    def conditional(self) -> float:
        """``value / total_mass``; the measures are only asymptotically normalised."""
        return self.value / self.total_mass if self.total_mass else math.nan


class _Inputs:
    """Validated subset, weights and ranges shared by every sum."""

    def __init__(self, A: DenseSubset, weights: Sequence[WeightField], n_prime: int, M: int):
        if M < 1:
            raise ConfigError(f"M must be positive, got {M}")
        if len(weights) != A.d:
            raise ConfigError(f"need {A.d} weight fields, got {len(weights)}")
        for i, nu in enumerate(weights):
            if nu.n != n_prime:
                raise ConfigError(f"weight {i + 1} lives on [{nu.n}], expected [{n_prime}]")
        if A.bound > n_prime:
            if len(A) and int(A.points.max()) > n_prime:
                raise ConfigError(f"A must lie in [N']^d with N' = {n_prime}")
        self.A, self.weights, self.n, self.M, self.d = A, tuple(weights), n_prime, M, A.d
        self._mask: np.ndarray | None = None
        self._row: np.ndarray | None = None
        self._rows: dict[int, np.ndarray] = {}

    @property
    def mask(self) -> np.ndarray:
        if self._mask is None:
            sub = self.A if self.A.bound == self.n else DenseSubset.from_points(self.A.points, self.n, d=self.d)
            self._mask = sub.mask()
        return self._mask

    @property
    def row(self) -> np.ndarray:
        if self._row is None:
            self._row = self.mask.astype(np.float64)
        return self._row

    def sums(self, b0: Sequence[Point], omega: Sequence[Sequence[int]],
             h: Sequence[int] | None = None, pad: int = 0) -> np.ndarray:
        """Per r in ``[1, M]``: sum of the integrand at ``a + h r`` over ``a`` in
        ``[1 - pad r, N' + pad r]^d``."""
        h = np.zeros(self.d, dtype=np.int64) if h is None else np.asarray(h, dtype=np.int64)
        rs = np.arange(1, self.M + 1, dtype=np.int64)
        if self.d == 1 or self.A.is_product or not b0:
            # the integrand splits into one factor per coordinate
            out = np.ones(rs.shape[0])
            for i in range(self.d):
                coords = sorted({b[i] for b in b0})
                out *= self._sums_axis(i, coords, bool(b0), omega[i], int(h[i]), pad, rs)
            return out
        if self.n**self.d * self.M > DENSE_SUM_BUDGET:
            raise BudgetError(f"dense cylinder sum over {self.n}^{self.d} x {self.M} cells exceeds budget")
        return np.array([self._sum_nd(b0, omega, h, pad, int(r)) for r in rs])

    def _factor_row(self, i: int) -> np.ndarray:
        if i not in self._rows:
            if self.A.is_product:
                row = np.zeros(self.n + 1)
                f = self.A.factors[i]
                row[f[(f >= 1) & (f <= self.n)]] = 1.0
            else:
                row = self.row
            self._rows[i] = row
        return self._rows[i]

    def _sums_axis(self, i: int, coords: Sequence[int], use_a: bool, omega_i: Sequence[int],
                   h: int, pad: int, rs: np.ndarray) -> np.ndarray:
        nu = self.weights[i]
        rows, coefs = [], []
        stack = [self._factor_row(i)] if use_a else []
        for c in coords:
            rows.append(0)
            coefs.append(c + h)
        if not nu.untruncated:
            stack.append(nu.values)
            for c in omega_i:
                rows.append(len(stack) - 1)
                coefs.append(c + h)
        if not stack:
            stack = [np.zeros(self.n + 1)]
        stack_arr = np.ascontiguousarray(np.stack(stack))
        rows_arr = np.asarray(rows, dtype=np.int64)
        offsets = np.ascontiguousarray(np.outer(rs, np.asarray(coefs, dtype=np.int64)).reshape(rs.shape[0], len(coefs)))
        if pad == 0:
            return kernels.product_sums(stack_arr, rows_arr, offsets, 1, self.n)
        out = np.empty(rs.shape[0])
        for t, r in enumerate(rs):
            out[t] = kernels.product_sums(stack_arr, rows_arr, offsets[t : t + 1], 1 - pad * int(r), self.n + pad * int(r))[0]
        return out

    def _sum_nd(self, b0, omega, h: np.ndarray, pad: int, r: int) -> float:
        lo, hi = 1 - pad * r, self.n + pad * r
        if hi < lo:
            return 0.0
        axes = [np.arange(lo, hi + 1, dtype=np.int64) + h[i] * r for i in range(self.d)]
        us = []
        for i, a in enumerate(axes):
            u = np.ones(a.shape[0])
            for c in omega[i]:
                u *= self.weights[i].take(a + c * r)
            us.append(u)
        if not b0:
            return math.prod(float(u.sum()) for u in us)
        part = None
        for b in b0:
            idx = []
            for i, a in enumerate(axes):
                q = a + r * b[i]
                idx.append(np.where((q >= 1) & (q <= self.n), q, 0))
            g = self.mask[np.ix_(*idx)]
            part = g.astype(np.float64) if part is None else part * g
        for i, u in enumerate(us):
            shape = [1] * self.d
            shape[i] = u.shape[0]
            part = part * u.reshape(shape)
        return float(part.sum())

    @property
    def terms(self) -> int:
        return self.n**self.d * self.M

    def average(self, per_r: np.ndarray) -> float:
        return math.fsum(per_r) / self.terms


def _check_budget(spec: CylinderSpec) -> None:
    if spec.size > MAX_TOTAL_OMEGA:
        raise BudgetError(f"sum |Omega_i| = {spec.size} exceeds cap {MAX_TOTAL_OMEGA}")


def _event_sums(event: CylinderEvent, inp: _Inputs, omega: Sequence[Sequence[int]],
                h=None, pad: int = 0) -> np.ndarray:
    """Per-r integrand sums of ``event`` (superset directly, exact by inclusion-exclusion)."""
    if event.mode == "superset":
        return inp.sums(event.b0, omega, h, pad)
    free = [p for p in event.spec.grid() if p not in set(event.b0)]
    if len(free) > MAX_EXACT_FREE:
        raise BudgetError(f"exact event needs 2^{len(free)} inclusion-exclusion terms")
    total = np.zeros(inp.M)
    for k in range(len(free) + 1):
        for extra in itertools.combinations(free, k):
            total += (-1) ** k * inp.sums(event.b0 + extra, omega, h, pad)
    return total


def measure(
    event: CylinderEvent,
    A: DenseSubset,
    weights: Sequence[WeightField],
    n_prime: int,
    M: int,
    weight_omega: CylinderSpec | None = None,
) -> MeasureReport:
    """Measure of ``event`` under the cylinder measure with weights from
    ``weight_omega`` (default: the event's own grid)."""
    spec = weight_omega or event.spec
    _check_budget(spec)
    if spec.d != A.d or event.spec.d != A.d:
        raise ConfigError(f"Omega has dimension {spec.d}, subset has {A.d}")
    inp = _Inputs(A, weights, n_prime, M)
    value = inp.average(_event_sums(event, inp, spec.omega))
    total = inp.average(inp.sums((), spec.omega))
    return MeasureReport(value=value, total_mass=total, terms=inp.terms)


@dataclass(frozen=True)
class GapReport:
    gap: float
    coarse: float
    fine: float
    terms: int


def compatibility_gap(
    event: CylinderEvent,
    omega_prime: CylinderSpec,
    A: DenseSubset,
    weights: Sequence[WeightField],
    n_prime: int,
    M: int,
) -> GapReport:
    """``|mu_{Omega'}(F) - mu_{Omega}(F)|`` for an event F on the Omega grid."""
    if not omega_prime.contains(event.spec):
        raise ConfigError(f"Omega' = {omega_prime.omega} does not contain Omega = {event.spec.omega}")
    coarse = measure(event, A, weights, n_prime, M)
    fine = measure(event, A, weights, n_prime, M, weight_omega=omega_prime)
    return GapReport(gap=abs(fine.value - coarse.value), coarse=coarse.value, fine=fine.value,
                     terms=coarse.terms + fine.terms)


@dataclass(frozen=True)
class ShiftReport:
    gap: float
    boundary_mass: float
    base: float
    shifted: float

    @property
    def within_bound(self) -> bool:
        return self.gap <= self.boundary_mass + 1e-12


def shift_gap(
    event: CylinderEvent,
    h: Sequence[int],
    A: DenseSubset,
    weights: Sequence[WeightField],
    n_prime: int,
    M: int,
) -> ShiftReport:
    """Compare ``E G(a + h r, r)`` with ``E G(a, r)`` for the event integrand G.

    The first average is the measure of the shifted event ``T_h F`` under the
    shifted grid ``Omega + h``.  ``boundary_mass`` is the normalised sum of
    ``|G|`` over the frame ``[1 - |h| r, N' + |h| r]^d`` minus
    ``[1 + |h| r, N' - |h| r]^d``, which contains every point where the two
    averages differ.
    """
    h = tuple(int(x) for x in h)
    if len(h) != event.spec.d:
        raise ConfigError(f"shift has dimension {len(h)}, expected {event.spec.d}")
    _check_budget(event.spec)
    inp = _Inputs(A, weights, n_prime, M)
    om = event.spec.omega
    base = inp.average(_event_sums(event, inp, om))
    shifted = inp.average(_event_sums(event, inp, om, h=h))
    hn = max((abs(x) for x in h), default=0)
    if hn == 0:
        boundary = 0.0
    else:
        outer = _event_sums(event, inp, om, pad=hn)
        inner = _event_sums(event, inp, om, pad=-hn)
        boundary = max(math.fsum(outer - inner) / inp.terms, 0.0)  # exact mode can round below 0
    return ShiftReport(gap=abs(shifted - base), boundary_mass=boundary, base=base, shifted=shifted)
