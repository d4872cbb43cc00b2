"""Command-line entry point: ``constlab <command> [options]``.

Exit codes: 0 success, 1 validation error, 2 budget error, 3 numerical
integrity error (including a failed von Neumann fuzz campaign).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__, boxnorm, constellations, forms, measures, wtrick
from .errors import ConfigError, ConstlabError, NumericalIntegrityError
from .kernels import BACKEND
from .sieve import sieve_primes

log = logging.getLogger("constlab")

SCHEMA = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits 2 by default
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    params: dict[str, Any]
    out: str | None = None
    fmt: str = "json"
    threads: int = 1
    seed: int | None = None
    timing: bool = False


@dataclass
class RunReport:
    command: str
    config: dict[str, Any]
    result: Any
    seed: int | None = None
    wall_time: float | None = None
    version: str = __version__
    rows: list[dict[str, Any]] | None = field(default=None, repr=False)

    def to_json(self) -> str:
        payload = {
            "schema": SCHEMA,
            "command": self.command,
            "version": self.version,
            "seed": self.seed,
            "config": self.config,
            "result": self.result,
        }
        if self.wall_time is not None:
            payload["wallTime"] = self.wall_time
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def to_csv(self, columns: Sequence[str]) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in self.rows or []:
            writer.writerow({c: row[c] for c in columns})
        return buf.getvalue()


def _num(text: str) -> int:
    """Integers, also written as ``1e6`` or ``10**6``."""
    t = text.strip().replace("_", "")
    try:
        if "**" in t:
            b, e = t.split("**")
            return int(b) ** int(e)
        if "e" in t.lower():
            v = float(t)
            if v != int(v):
                raise ValueError
            return int(v)
        return int(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None


def _num_list(text: str) -> list[int]:
    return [_num(t) for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def _subset_for(path: str | None, table, N: int, d: int) -> wtrick.DenseSubset:
    if path is None:
        return wtrick.prime_grid(table, N, d)
    return wtrick.DenseSubset.load(path, bound=N, d=d)


def _wtrick_setup(p: dict[str, Any]) -> tuple[wtrick.WTrickSetup, Any]:
    N, w, d = p["n"], p["w"], p["dim"]
    table = sieve_primes(wtrick.table_limit_for(N, w))
    A = _subset_for(p.get("subset"), table, N, d)
    return wtrick.setup(table, N, w, p["delta_prime"], d=d, A=A, strategy=p.get("strategy", "joint")), table


def cmd_sieve(cfg: RunConfig) -> RunReport:
    p = cfg.params
    table = sieve_primes(p["limit"], segment_size=p["segment"])
    if cfg.out:
        table.dump(cfg.out)
    result = {"limit": table.limit, "count": table.count,
              "largestPrime": int(table.primes[-1]), "dump": cfg.out}
    return RunReport("sieve", _echo(cfg), result)


def cmd_wtrick(cfg: RunConfig) -> RunReport:
    s, _ = _wtrick_setup(cfg.params)
    ctx = s.context
    result = {
        "W": ctx.W, "phi": ctx.totient, "residues": list(ctx.residues), "nPrime": ctx.n_prime,
        "offset": ctx.offset, "level": ctx.level,
        "weightMeans": [nu.mean for nu in s.weights],
        "attained": s.selection.attained, "windowCount": s.selection.window_count,
        "pigeonholeBound": s.selection.pigeonhole_bound, "rescaledSize": len(s.subset),
    }
    return RunReport("wtrick", _echo(cfg), result)


def cmd_lf_check(cfg: RunConfig) -> RunReport:
    p = cfg.params
    system = forms.LinearFormSystem.load(p["forms"])
    forms.require_valid(system)
    s, _ = _wtrick_setup({**p, "dim": system.d})
    scan = forms.lf_condition_scan(system, s.weights, p["kappa"], p["lambda"], p["eps"], threads=cfg.threads)
    rows = [{"kappa": r.kappa, "value": r.report.value, "deviation": r.report.deviation,
             "terms": r.report.term_count, "seconds": round(r.report.elapsed, 6), "within": r.within}
            for r in scan]
    result = {"residues": list(s.context.residues), "nPrime": s.context.n_prime,
              "rows": [{k: v for k, v in row.items() if k != "seconds"} for row in rows]}
    rep = RunReport("lf-check", _echo(cfg), result)
    rep.rows = rows
    return rep


def cmd_box_norm(cfg: RunConfig) -> RunReport:
    inst = boxnorm.BoxInstance.load(cfg.params["instance"])
    key = lambda s: ",".join(map(str, s))  # noqa: E731
    nu_norms = {key(s): boxnorm.box_norm(inst, s, inst.nu[s]) for s in boxnorm.proper_subsets(inst.top)}
    result: dict[str, Any] = {"n": inst.n, "H": inst.H, "fNorm": boxnorm.box_norm(inst, inst.top),
                              "nuNorms": nu_norms}
    bad = inst.dominated()
    if bad:
        result["vonNeumann"] = None
        result["dominanceViolations"] = [list(s) for s in bad]
    else:
        vn = boxnorm.von_neumann_check(inst)
        result["vonNeumann"] = {"lhs": vn.lhs, "rhs": vn.rhs, "holds": vn.holds, "slack": vn.slack}
    return RunReport("box-norm", _echo(cfg), result)


def cmd_von_neumann_fuzz(cfg: RunConfig) -> RunReport:
    p = cfg.params
    summary = boxnorm.von_neumann_fuzz(p["count"], seed=cfg.seed or 0, max_n=p["max_b"], max_h=p["max_h"])
    result = {
        "count": summary.count, "failures": summary.failures, "passed": summary.passed,
        "minSlack": summary.min_slack,
        "firstCounterexample": summary.first_counterexample.to_json() if summary.first_counterexample else None,
    }
    return RunReport("von-neumann-fuzz", _echo(cfg), result, seed=cfg.seed)


def cmd_measure(cfg: RunConfig) -> RunReport:
    p = cfg.params
    spec = measures.CylinderSpec.parse(p["omega"])
    event = measures.CylinderEvent.make(spec, measures.parse_points(p["b0"]), p["mode"])
    s, _ = _wtrick_setup({**p, "dim": spec.d})
    n = s.context.n_prime
    M = p["m"] if p["m"] is not None else math.floor(p["kappa"] * n)
    if M < 1:
        raise ConfigError(f"M = floor(kappa N') = {M}; increase --kappa or --n")
    rep = measures.measure(event, s.subset, s.weights, n, M)
    result: dict[str, Any] = {"value": rep.value, "totalMass": rep.total_mass, "terms": rep.terms,
                              "conditional": rep.conditional, "nPrime": n, "M": M,
                              "residues": list(s.context.residues)}
    if p["omega_prime"]:
        gap = measures.compatibility_gap(event, measures.CylinderSpec.parse(p["omega_prime"]),
                                         s.subset, s.weights, n, M)
        result["compatibility"] = {"gap": gap.gap, "coarse": gap.coarse, "fine": gap.fine}
    if p["shift"]:
        h = [int(t) for t in p["shift"].split(",")]
        sh = measures.shift_gap(event, h, s.subset, s.weights, n, M)
        result["shift"] = {"gap": sh.gap, "boundaryMass": sh.boundary_mass, "withinBound": sh.within_bound}
    return RunReport("measure", _echo(cfg), result)


def cmd_count(cfg: RunConfig) -> RunReport:
    p = cfg.params
    shape = constellations.Shape.load(p["shape"])
    N = p["limit"]
    table = sieve_primes(max(N, 2))
    A = _subset_for(p.get("subset"), table, N, shape.d)
    count = constellations.count_fast(shape, A, N, method=p["method"])
    result: dict[str, Any] = {"count": count, "d": shape.d, "k": shape.k, "subsetSize": len(A)}
    if p["list_hits"]:
        result["hits"] = [{"a": list(h.a), "r": h.r} for h in constellations.iter_hits(shape, A, N)]
    return RunReport("count", _echo(cfg), result)


def cmd_scaling(cfg: RunConfig) -> RunReport:
    p = cfg.params
    shape = constellations.Shape.load(p["shape"])
    rep = constellations.scaling_report(shape, p["grid"])
    rows = [{"N": r.N, "count": r.count, "normalized": r.normalized, "seconds": round(r.seconds, 6)}
            for r in rep.rows]
    result = {"omegaSize": shape.omega_size, "flatness": rep.flatness,
              "rows": [{k: v for k, v in row.items() if k != "seconds"} for row in rows]}
    out = RunReport("scaling", _echo(cfg), result)
    out.rows = rows
    return out


COMMANDS: dict[str, tuple[Callable[[RunConfig], RunReport], Sequence[str] | None]] = {
    "sieve": (cmd_sieve, None),
    "wtrick": (cmd_wtrick, None),
    "lf-check": (cmd_lf_check, ("kappa", "value", "deviation", "terms", "seconds")),
    "box-norm": (cmd_box_norm, None),
    "von-neumann-fuzz": (cmd_von_neumann_fuzz, None),
    "measure": (cmd_measure, None),
    "count": (cmd_count, None),
    "scaling": (cmd_scaling, ("N", "count", "normalized", "seconds")),
}


def _echo(cfg: RunConfig) -> dict[str, Any]:
    def enc(v: Any) -> Any:
        if isinstance(v, Fraction):
            return str(v)
        if isinstance(v, (list, tuple)):
            return [enc(x) for x in v]
        return v
    return {"command": cfg.command, "format": cfg.fmt, "out": cfg.out, "seed": cfg.seed,
            **{k: enc(v) for k, v in sorted(cfg.params.items())}}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="constlab", description="Prime constellation and pseudorandom-weight lab.")
    parser.add_argument("--version", action="version", version=f"constlab {__version__} ({BACKEND} kernels)")
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write the report (or, for sieve, the binary table) here")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: $CONSTLAB_THREADS or 1)")
    common.add_argument("--timing", action="store_true", help="embed wall time in JSON reports")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def wt_opts(sp: argparse.ArgumentParser, dim: bool = True) -> None:
        sp.add_argument("--n", type=_num, required=True, help="range [N] before rescaling")
        sp.add_argument("--w", type=int, default=7, help="sieve W over primes <= w")
        sp.add_argument("--delta-prime", type=_fraction, default=Fraction(1, 2))
        sp.add_argument("--strategy", choices=("joint", "marginal"), default="joint")
        sp.add_argument("--subset", help="lattice points, one per line")
        if dim:
            sp.add_argument("--dim", type=int, default=1)

    sp = sub.add_parser("sieve", parents=[common], help="sieve primes and dump the bit table")
    sp.add_argument("--limit", type=_num, required=True)
    sp.add_argument("--segment", type=_num, default=1 << 16)

    sp = sub.add_parser("wtrick", parents=[common], help="residue selection and weight means")
    wt_opts(sp)

    sp = sub.add_parser("lf-check", parents=[common], help="linear forms averages over a kappa grid")
    sp.add_argument("--forms", required=True)
    wt_opts(sp, dim=False)
    sp.add_argument("--kappa", type=_float_list, default=[0.01])
    sp.add_argument("--lambda", dest="lambda", type=float, default=0.5)
    sp.add_argument("--eps", type=float, default=0.1)
    sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = sub.add_parser("box-norm", parents=[common], help="weighted box norms of a JSON instance")
    sp.add_argument("--instance", required=True)

    sp = sub.add_parser("von-neumann-fuzz", parents=[common], help="randomised von Neumann inequality check")
    sp.add_argument("--count", type=_num, default=500)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-b", type=int, default=3)
    sp.add_argument("--max-h", type=int, default=6)

    sp = sub.add_parser("measure", parents=[common], help="cylinder measure of an event")
    sp.add_argument("--omega", required=True, help='e.g. "0,1;0"')
    sp.add_argument("--b0", default="", help='e.g. "(0,0),(1,0)"')
    sp.add_argument("--mode", choices=("superset", "exact"), default="superset")
    wt_opts(sp, dim=False)
    sp.add_argument("--kappa", type=float, default=0.01)
    sp.add_argument("--m", type=_num, default=None, help="dilation range M (default floor(kappa N'))")
    sp.add_argument("--omega-prime", default=None, help="also report the compatibility gap to this Omega'")
    sp.add_argument("--shift", default=None, help="also report the shift gap for h, e.g. 1,0")

    sp = sub.add_parser("count", parents=[common], help="count constellation hits")
    sp.add_argument("--shape", required=True)
    sp.add_argument("--limit", type=_num, required=True)
    sp.add_argument("--subset")
    sp.add_argument("--list-hits", action="store_true")
    sp.add_argument("--method", choices=("auto", "product", "probe"), default="auto")

    sp = sub.add_parser("scaling", parents=[common], help="normalised counts over a grid of N")
    sp.add_argument("--shape", required=True)
    sp.add_argument("--grid", type=_num_list, required=True)
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


_GLOBAL = {"command", "out", "threads", "timing", "verbose", "format", "seed"}


def parse_config(argv: Sequence[str] | None = None) -> RunConfig:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        parser.exit(1, "constlab: error: a command is required\n")
    ns = vars(args)
    threads = ns.get("threads") or int(os.environ.get("CONSTLAB_THREADS", "1") or 1)
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG, format="%(name)s: %(message)s")
    return RunConfig(
        command=args.command,
        params={k: v for k, v in ns.items() if k not in _GLOBAL},
        out=ns.get("out"),
        fmt=ns.get("format", "json"),
        threads=max(1, threads),
        seed=ns.get("seed"),
        timing=ns.get("timing", False),
    )


def dispatch(cfg: RunConfig) -> RunReport:
    if cfg.command not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.command!r}")
    os.environ["CONSTLAB_THREADS"] = str(cfg.threads)
    t0 = time.perf_counter()
    report = COMMANDS[cfg.command][0](cfg)
    if cfg.timing:
        report.wall_time = time.perf_counter() - t0
    return report


def render(cfg: RunConfig, report: RunReport) -> str:
    columns = COMMANDS[cfg.command][1]
    if cfg.fmt == "csv" and columns is not None:
        return report.to_csv(columns)
    return report.to_json()


def main(argv: Sequence[str] | None = None) -> int:
    cfg = parse_config(argv)
    try:
        report = dispatch(cfg)
    except ConstlabError as exc:
        print(f"constlab {cfg.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"constlab {cfg.command}: {exc}", file=sys.stderr)
        return 1
    text = render(cfg, report)
    if cfg.out and cfg.command != "sieve":
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    if cfg.command == "von-neumann-fuzz" and not report.result["passed"]:
        print("constlab von-neumann-fuzz: inequality violated", file=sys.stderr)
        return NumericalIntegrityError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
