"""Systems of integer linear forms and their weighted averages.

For weights ``nu_1..nu_d`` on ``[N']`` (zero outside) and forms
``phi_{i,j}: Z^m -> Z`` the quantity of interest is

    E_{a in [N']^d} E_{r in [L_1] x ... x [L_m]} prod_i prod_j nu_i(a_i + phi_{i,j}(r)).

:func:`evaluate_naive` enumerates the full ``(a, r)`` grid.
:func:`evaluate_fast` uses that for fixed ``r`` the ``a``-average splits
into a product of one-dimensional correlations.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .errors import BudgetError, ConfigError
from .parallel import map_ordered
from .wtrick import WeightField

COEFF_BOUND = 1 << 20
NAIVE_BUDGET = 10**9
R_CHUNK = 256


@dataclass(frozen=True)
class LinearFormSystem:
    d: int
    m: int
    forms: tuple[tuple[tuple[int, ...], ...], ...]

    def __post_init__(self) -> None:
        if self.d < 1 or self.m < 0:
            raise ConfigError(f"need d >= 1 and m >= 0, got d={self.d}, m={self.m}")
        if len(self.forms) != self.d:
            raise ConfigError(f"forms lists {len(self.forms)} coordinates, expected d={self.d}")
        for i, fam in enumerate(self.forms, 1):
            for j, row in enumerate(fam, 1):
                if len(row) != self.m:
                    raise ConfigError(f"form ({i},{j}) has {len(row)} coefficients, expected m={self.m}")
                if any(abs(c) > COEFF_BOUND for c in row):
                    raise ConfigError(f"form ({i},{j}) has a coefficient above {COEFF_BOUND} in size")

    @classmethod
    def build(cls, forms: Sequence[Sequence[Sequence[int]]], m: int | None = None) -> "LinearFormSystem":
        fams = tuple(tuple(tuple(int(c) for c in row) for row in fam) for fam in forms)
        if m is None:
            widths = {len(row) for fam in fams for row in fam}
            if len(widths) > 1:
                raise ConfigError(f"forms have inconsistent widths {sorted(widths)}")
            m = widths.pop() if widths else 0
        return cls(d=len(fams), m=m, forms=fams)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(f) for f in self.forms)

    def matrix(self, i: int) -> np.ndarray:
        """Coefficients of coordinate ``i`` as a ``(k_i, m)`` array."""
        return np.asarray(self.forms[i], dtype=np.int64).reshape(len(self.forms[i]), self.m)

    def permuted(self, order: Sequence[int]) -> "LinearFormSystem":
        return LinearFormSystem(d=self.d, m=self.m, forms=tuple(self.forms[i] for i in order))

    def to_json(self) -> dict:
        return {"d": self.d, "m": self.m, "forms": [[list(r) for r in fam] for fam in self.forms]}

    @classmethod
    def from_json(cls, data: dict) -> "LinearFormSystem":
        for key in ("d", "m", "forms"):
            if key not in data:
                raise ConfigError(f"form system is missing field {key!r}")
        if not isinstance(data["forms"], list):
            raise ConfigError("field 'forms' must be a list")
        try:
            system = cls.build(data["forms"], m=int(data["m"]))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"field 'forms' is malformed: {exc}") from None
        if system.d != int(data["d"]):
            raise ConfigError(f"field 'd' is {data['d']} but 'forms' lists {system.d} coordinates")
        return system

    @classmethod
    def load(cls, path: str | Path) -> "LinearFormSystem":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_json(data)


@dataclass(frozen=True)
class Validation:
    ok: bool
    duplicates: tuple[tuple[int, int, int], ...]
    dependent_pairs: tuple[tuple[tuple[int, int], tuple[int, int]], ...]

    @property
    def independent(self) -> bool:
        return not self.dependent_pairs

    def describe(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(f"forms {j} and {jj} of coordinate {i} coincide" for i, j, jj in self.duplicates)


def validate(system: LinearFormSystem) -> Validation:
    """Check per-coordinate distinctness and pairwise independence.

    Duplicates are reported 1-based as ``(i, j, j')``.  Independence looks at
    the forms ``(a, r) -> a_i + phi_{i,j}(r)`` as vectors in ``Z^{d+m}``.
    """
    dups = []
    for i, fam in enumerate(system.forms, 1):
        for j, jj in itertools.combinations(range(len(fam)), 2):
            if fam[j] == fam[jj]:
                dups.append((i, j + 1, jj + 1))
    vecs = []
    for i, fam in enumerate(system.forms):
        for j, row in enumerate(fam):
            e = [0] * system.d
            e[i] = 1
            vecs.append(((i + 1, j + 1), np.array(e + list(row), dtype=object)))
    dependent = []
    for (p, u), (q, v) in itertools.combinations(vecs, 2):
        # rank < 2 iff every 2x2 minor vanishes
        if all(u[s] * v[t] - u[t] * v[s] == 0 for s, t in itertools.combinations(range(len(u)), 2)):
            dependent.append((p, q))
    return Validation(ok=not dups, duplicates=tuple(dups), dependent_pairs=tuple(dependent))


def require_valid(system: LinearFormSystem) -> None:
    v = validate(system)
    if not v.ok:
        raise ConfigError(f"invalid form system: {v.describe()}")


@dataclass(frozen=True)
class AverageRunConfig:
    box_lengths: tuple[int, ...]
    n_prime: int
    kappa: float | None = None
    lam: float | None = None

    def __post_init__(self) -> None:
        if self.n_prime < 1:
            raise ConfigError(f"N' must be positive, got {self.n_prime}")
        if any(L < 1 for L in self.box_lengths):
            raise ConfigError(f"box lengths must be positive, got {self.box_lengths}")
        if self.kappa is not None:
            if not 0 < self.kappa <= 1:
                raise ConfigError(f"kappa must lie in (0, 1], got {self.kappa}")
            lam = 1.0 if self.lam is None else self.lam
            if not 0 < lam <= 1:
                raise ConfigError(f"lambda must lie in (0, 1], got {lam}")
            lo, hi = lam * self.kappa * self.n_prime, self.kappa * self.n_prime
            for L in self.box_lengths:
                if not lo <= L <= hi:
                    raise ConfigError(f"box length {L} outside [lambda kappa N', kappa N'] = [{lo:g}, {hi:g}]")

    @classmethod
    def from_kappa(cls, n_prime: int, m: int, kappa: float, lam: float = 0.5) -> "AverageRunConfig":
        """Every box length set to ``floor(kappa N')``."""
        L = math.floor(kappa * n_prime)
        return cls(box_lengths=(L,) * m, n_prime=n_prime, kappa=kappa, lam=lam)

    @property
    def r_count(self) -> int:
        return math.prod(self.box_lengths)


@dataclass(frozen=True)
class AverageReport:
    value: float
    term_count: int
    deviation: float
    elapsed: float


def _check_inputs(system: LinearFormSystem, weights: Sequence[WeightField], cfg: AverageRunConfig) -> None:
    if len(weights) != system.d:
        raise ConfigError(f"need {system.d} weight fields, got {len(weights)}")
    if len(cfg.box_lengths) != system.m:
        raise ConfigError(f"need {system.m} box lengths, got {len(cfg.box_lengths)}")
    for i, nu in enumerate(weights):
        if nu.n != cfg.n_prime:
            raise ConfigError(f"weight {i + 1} lives on [{nu.n}], expected [{cfg.n_prime}]")


def _r_grid(box_lengths: Sequence[int]) -> np.ndarray:
    if not box_lengths:
        return np.zeros((1, 0), dtype=np.int64)
    axes = [np.arange(1, L + 1, dtype=np.int64) for L in box_lengths]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def evaluate_naive(
    system: LinearFormSystem,
    weights: Sequence[WeightField],
    cfg: AverageRunConfig,
    budget: int = NAIVE_BUDGET,
) -> AverageReport:
    """Exact average by enumerating every ``(a, r)``."""
    t0 = time.perf_counter()
    _check_inputs(system, weights, cfg)
    n, d = cfg.n_prime, system.d
    terms = n**d * cfg.r_count
    if terms > budget:
        raise BudgetError(f"naive evaluation needs {terms} terms (budget {budget}); use evaluate_fast")
    base = np.arange(1, n + 1, dtype=np.int64)
    totals = []
    for r in itertools.product(*(range(1, L + 1) for L in cfg.box_lengths)):
        r = np.asarray(r, dtype=np.int64)
        grid = np.ones((n,) * d, dtype=np.float64)
        for i in range(d):
            shape = [1] * d
            shape[i] = n
            for row in system.forms[i]:
                shift = int(np.dot(np.asarray(row, dtype=np.int64), r)) if system.m else 0
                grid = grid * weights[i].take(base + shift).reshape(shape)
        totals.append(float(grid.sum()))
    value = math.fsum(totals) / terms
    return AverageReport(value=value, term_count=terms, deviation=abs(value - 1.0),
                         elapsed=time.perf_counter() - t0)


def coordinate_sums(nu: WeightField, offsets: np.ndarray) -> np.ndarray:
    """``out[t] = sum_{a in [n]} prod_j nu(a + offsets[t, j])`` for each row t."""
    R, k = offsets.shape
    n = nu.n
    if k == 0 or nu.untruncated:
        return np.full(R, float(n))
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if nu.level is not None:
        counts = kernels.support_counts(nu.mask, nu.support, offsets)
        return counts.astype(np.float64) * nu.level**k
    rows = np.zeros(k, dtype=np.int64)
    return kernels.product_sums(nu.values.reshape(1, -1), rows, offsets, 1, n)


def evaluate_fast(
    system: LinearFormSystem,
    weights: Sequence[WeightField],
    cfg: AverageRunConfig,
    threads: int | None = None,
) -> AverageReport:
    """Same average as :func:`evaluate_naive`, factorised over coordinates."""
    t0 = time.perf_counter()
    _check_inputs(system, weights, cfg)
    n, d = cfg.n_prime, system.d
    rgrid = _r_grid(cfg.box_lengths)
    mats = [system.matrix(i) for i in range(d)]
    chunks = [rgrid[s : s + R_CHUNK] for s in range(0, rgrid.shape[0], R_CHUNK)]

    def per_chunk(rs: np.ndarray) -> np.ndarray:
        prod = np.ones(rs.shape[0], dtype=np.float64)
        for i in range(d):
            offs = rs @ mats[i].T if system.m else np.zeros((rs.shape[0], mats[i].shape[0]), dtype=np.int64)
            prod *= coordinate_sums(weights[i], offs) / n
        return prod

    per_r = np.concatenate(map_ordered(per_chunk, chunks, threads))
    value = math.fsum(per_r) / rgrid.shape[0]
    terms = n**d * cfg.r_count
    return AverageReport(value=value, term_count=terms, deviation=abs(value - 1.0),
                         elapsed=time.perf_counter() - t0)


@dataclass(frozen=True)
class ScanRow:
    kappa: float
    box_lengths: tuple[int, ...]
    report: AverageReport
    within: bool


def lf_condition_scan(
    system: LinearFormSystem,
    weights: Sequence[WeightField],
    kappa_grid: Sequence[float],
    lam: float = 0.5,
    eps: float = 0.1,
    threads: int | None = None,
) -> list[ScanRow]:
    """One :func:`evaluate_fast` run per kappa with box lengths ``floor(kappa N')``."""
    if not weights:
        raise ConfigError("no weight fields given")
    n = weights[0].n
    rows = []
    for kappa in kappa_grid:
        cfg = AverageRunConfig.from_kappa(n, system.m, kappa, lam)
        rep = evaluate_fast(system, weights, cfg, threads=threads)
        rows.append(ScanRow(kappa=kappa, box_lengths=cfg.box_lengths, report=rep, within=rep.deviation <= eps))
    return rows
