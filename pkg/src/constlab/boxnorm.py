"""Weighted box norms and the weighted generalised von Neumann inequality.

An instance fixes a finite index set ``B = {0, .., n-1}``, a side length
``H``, nonnegative weights ``nu[S]`` on ``[H]^S`` for proper subsets ``S`` of
``B`` and functions ``f[S]`` on ``[H]^S`` for all ``S``.  Subsets are sorted
index tuples; a function on ``[H]^S`` is an array with one axis of length
``H`` per element of ``S`` (a 0-d array when ``S`` is empty).

For ``S`` and a function ``g`` on ``[H]^S`` the weighted box norm is the
``2^|S|``-th root of

    E_{h0, h1 in [H]^S} prod_{w in {0,1}^S} g(h^w)
        * prod_{T < S proper} prod_{w in {0,1}^T} nu[T](h^w_T),

where ``h^w`` takes coordinate ``b`` from copy ``w_b``.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import BudgetError, ConfigError, NumericalIntegrityError

log = logging.getLogger(__name__)

MAX_INDEX_SET = 4
CELL_BUDGET = 1 << 26
NEG_TOL = 1e-9
DOMINANCE_TOL = 1e-12

Subset = tuple[int, ...]


def subsets(n: int) -> list[Subset]:
    """All subsets of ``range(n)`` as sorted tuples, smallest first."""
    return [s for k in range(n + 1) for s in itertools.combinations(range(n), k)]


def proper_subsets(s: Subset) -> Iterator[Subset]:
    for k in range(len(s)):
        yield from itertools.combinations(s, k)


@dataclass(frozen=True, eq=False)
class BoxInstance:
    n: int
    H: int
    nu: dict[Subset, np.ndarray]
    f: dict[Subset, np.ndarray]

    def __post_init__(self) -> None:
        if not 1 <= self.n <= MAX_INDEX_SET:
            raise ConfigError(f"|B| must lie in [1, {MAX_INDEX_SET}], got {self.n}")
        if self.H < 1:
            raise ConfigError(f"H must be positive, got {self.H}")
        top = tuple(range(self.n))
        for s in subsets(self.n):
            shape = (self.H,) * len(s)
            if s not in self.f:
                raise ConfigError(f"missing f for subset {s}")
            if self.f[s].shape != shape:
                raise ConfigError(f"f{s} has shape {self.f[s].shape}, expected {shape}")
            if s == top:
                continue
            if s not in self.nu:
                raise ConfigError(f"missing nu for subset {s}")
            if self.nu[s].shape != shape:
                raise ConfigError(f"nu{s} has shape {self.nu[s].shape}, expected {shape}")
            if np.any(self.nu[s] < 0):
                raise ConfigError(f"nu{s} has negative entries")

    @property
    def top(self) -> Subset:
        return tuple(range(self.n))

    def dominated(self) -> list[Subset]:
        """Proper subsets where ``|f| <= nu`` fails somewhere."""
        return [
            s for s in subsets(self.n)
            if s != self.top and np.any(np.abs(self.f[s]) > self.nu[s] + DOMINANCE_TOL)
        ]

    def to_json(self) -> dict:
        def enc(d: dict[Subset, np.ndarray]) -> dict:
            return {",".join(map(str, s)): np.asarray(a).tolist() for s, a in d.items()}
        return {"schema": 1, "n": self.n, "H": self.H, "nu": enc(self.nu), "f": enc(self.f)}

    @classmethod
    def from_json(cls, data: dict) -> "BoxInstance":
        for key in ("n", "H", "nu", "f"):
            if key not in data:
                raise ConfigError(f"box instance is missing field {key!r}")

        def dec(d: dict, name: str) -> dict[Subset, np.ndarray]:
            if not isinstance(d, dict):
                raise ConfigError(f"field {name!r} must be an object keyed by subsets")
            out = {}
            for k, v in d.items():
                try:
                    s = tuple(sorted(int(x) for x in k.split(","))) if k else ()
                except ValueError:
                    raise ConfigError(f"field {name!r}: bad subset key {k!r}") from None
                out[s] = np.asarray(v, dtype=np.float64)
            return out

        return cls(n=int(data["n"]), H=int(data["H"]), nu=dec(data["nu"], "nu"), f=dec(data["f"], "f"))

    @classmethod
    def load(cls, path: str | Path) -> "BoxInstance":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_json(data)


def _place(arr: np.ndarray, axes: Sequence[int], ndim: int) -> np.ndarray:
    """View ``arr`` with its axes at increasing positions ``axes`` of an ndim grid."""
    shape = [1] * ndim
    for ax, size in zip(axes, arr.shape):
        shape[ax] = size
    return arr.reshape(shape)


def _check_cells(H: int, ndim: int) -> None:
    if H**ndim > CELL_BUDGET:
        raise BudgetError(f"grid of {H}^{ndim} cells exceeds budget {CELL_BUDGET}")


def box_norm_inner(inst: BoxInstance, s: Subset, g: np.ndarray, debug: bool = False) -> float:
    """The expectation inside the root, before clamping."""
    pos = {b: t for t, b in enumerate(s)}
    ndim = 2 * len(s)
    _check_cells(inst.H, ndim)
    grid = np.ones((1,) * ndim)
    for omega in itertools.product((0, 1), repeat=len(s)):
        axes = [2 * t + w for t, w in enumerate(omega)]
        if debug:
            log.debug("f%s omega=%s -> axes %s", s, omega, axes)
        grid = grid * _place(g, axes, ndim)
    for t_sub in proper_subsets(s):
        wt = inst.nu[t_sub]
        for omega in itertools.product((0, 1), repeat=len(t_sub)):
            axes = [2 * pos[b] + w for b, w in zip(t_sub, omega)]
            if debug:
                log.debug("nu%s omega=%s -> axes %s", t_sub, omega, axes)
            grid = grid * _place(wt, axes, ndim)
    full = np.broadcast_to(grid, (inst.H,) * ndim)
    return float(full.mean())


def box_norm(inst: BoxInstance, s: Subset, g: np.ndarray | None = None, debug: bool = False) -> float:
    """Weighted box norm of ``g`` (default ``f[s]``) over ``[H]^s``."""
    s = tuple(sorted(s))
    if any(not 0 <= b < inst.n for b in s):
        raise ConfigError(f"{s} is not a subset of B = {inst.top}")
    g = inst.f[s] if g is None else np.asarray(g, dtype=np.float64)
    inner = box_norm_inner(inst, s, g, debug=debug)
    if inner < -NEG_TOL:
        raise NumericalIntegrityError(f"box norm inner expectation {inner} < 0 for subset {s}")
    return max(inner, 0.0) ** (1.0 / 2 ** len(s))


def multilinear_average(inst: BoxInstance) -> float:
    """``E_{h in [H]^B} prod_{S subset B} f[S](h_S)``."""
    _check_cells(inst.H, inst.n)
    grid = np.ones((1,) * inst.n)
    for s in subsets(inst.n):
        grid = grid * _place(inst.f[s], list(s), inst.n)
    return float(np.broadcast_to(grid, (inst.H,) * inst.n).mean())


@dataclass(frozen=True)
class VonNeumannResult:
    lhs: float
    rhs: float
    holds: bool

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def von_neumann_rhs(inst: BoxInstance) -> float:
    rhs = box_norm(inst, inst.top)
    for s in proper_subsets(inst.top):
        rhs *= box_norm(inst, s, inst.nu[s]) ** (1.0 / 2 ** (inst.n - len(s)))
    return rhs


def von_neumann_check(inst: BoxInstance, tol: float = NEG_TOL) -> VonNeumannResult:
    """Evaluate both sides of the weighted generalised von Neumann bound."""
    bad = inst.dominated()
    if bad:
        raise ConfigError(f"dominance |f| <= nu fails on subsets {bad}")
    lhs = abs(multilinear_average(inst))
    rhs = von_neumann_rhs(inst)
    return VonNeumannResult(lhs=lhs, rhs=rhs, holds=lhs <= rhs + tol)


def random_instance(
    rng: np.random.Generator,
    n: int,
    H: int,
    levels: Sequence[float] = (0.0, 0.5, 1.0, 2.0),
) -> BoxInstance:
    """Dominated instance: ``nu`` drawn from ``levels``, ``f = +-nu`` off the top.

    The top function is unconstrained and drawn from ``+-levels``.
    """
    lv = np.asarray(levels, dtype=np.float64)
    nu, f = {}, {}
    for s in subsets(n):
        shape = (H,) * len(s)
        if len(s) == n:
            f[s] = rng.choice(lv, size=shape) * rng.choice([-1.0, 1.0], size=shape)
            continue
        nu[s] = rng.choice(lv, size=shape)
        f[s] = nu[s] * rng.choice([-1.0, 1.0], size=shape)
    return BoxInstance(n=n, H=H, nu=nu, f=f)


@dataclass(frozen=True)
class FuzzSummary:
    count: int
    failures: int
    min_slack: float
    first_counterexample: BoxInstance | None

    @property
    def passed(self) -> bool:
        return self.failures == 0


def von_neumann_fuzz(count: int, seed: int = 0, max_n: int = 3, max_h: int = 6) -> FuzzSummary:
    rng = np.random.default_rng(seed)
    failures, first, min_slack = 0, None, math.inf
    for _ in range(count):
        n = int(rng.integers(1, max_n + 1))
        H = int(rng.integers(1, max_h + 1))
        inst = random_instance(rng, n, H)
        res = von_neumann_check(inst)
        min_slack = min(min_slack, res.slack)
        if not res.holds:
            failures += 1
            first = first or inst
    return FuzzSummary(count=count, failures=failures, min_slack=min_slack, first_counterexample=first)
