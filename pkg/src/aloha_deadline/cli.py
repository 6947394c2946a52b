"""Command-line front end.

    aloha-deadline <mode> --config FILE [--out PATH] [--seed N] [--slots N]
                   [--reps N] [--grid STEP] [--jobs N] [--trace PATH]

Modes: analyze, simulate, validate, sweep, sdp-table, optimize, and ``run``
(take the mode from the config). ``--config`` also accepts the name of a shipped
figure config (``fig03`` ... ``fig14``). Every mode iterates over the sweep axes;
with none it emits a single row.

Exit codes: 0 success, 1 usage or config error, 2 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from importlib import resources
from typing import Optional

from .config import MODES, ConfigError, RunSpec, parse_config, scenario_from_point
from .dtmc import analyze, optimize_q
from .sdp import sdp_table
from .service import service_prob
from .sim import SimConfig, run_replications, run_simulation

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION = 0, 1, 2
Z_LIMIT = 4.0
JOBS_ENV = "ALOHA_DEADLINE_JOBS"

POINT_COLUMNS = ["N", "q", "lambda", "D", "n", "c", "L", "b"]
ANALYTIC_COLUMNS = ["mu", "T", "DR"]
SIM_COLUMNS = ["seed", "slots", "warmup", "reps", "arrivals", "successes", "drops_deadline",
               "drops_retx", "drops_overflow", "T_sim", "DR_sim", "ci99_T", "ci99_DR"]
Z_COLUMNS = ["z_T", "z_DR"]
SDP_COLUMNS = ["mu", "nu", "ps_n", "ps_D", "p_s"]
OPT_COLUMNS = ["objective", "q_grid", "value_grid", "q_opt", "value_opt"]


def columns_for(mode: str) -> list:
    head = POINT_COLUMNS + ["status"]
    if mode == "analyze":
        return head + ANALYTIC_COLUMNS
    if mode == "simulate":
        return head + SIM_COLUMNS
    if mode in ("validate", "sweep"):
        return head + ANALYTIC_COLUMNS + SIM_COLUMNS + Z_COLUMNS
    if mode == "sdp-table":
        return head + SDP_COLUMNS
    if mode == "optimize":
        return head + OPT_COLUMNS
    raise ValueError(f"unknown mode {mode!r}")


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return format(v, ".12g")
    return str(v)


def _z(sim: float, exact: float, se: float) -> float:
    if se > 0:
        return (sim - exact) / se
    return 0.0 if abs(sim - exact) < 1e-12 else math.inf


def evaluate_point(spec: RunSpec, point: dict) -> list:
    """Rows (dicts) for one sweep point. Invalid points yield a single error row."""
    try:
        scenario = scenario_from_point(point)
        table = spec.success_table(scenario.n_nodes)
    except ValueError as e:
        return [{**point, "status": f"invalid: {e}"}]
    row = {"N": scenario.n_nodes, "q": scenario.q if "q" in point else None,
           "lambda": scenario.lam, "D": scenario.deadline, "n": scenario.retx,
           "c": scenario.mpr_cap, "L": scenario.buffer, "b": scenario.backlogged, "status": "ok"}
    mode = spec.mode

    if mode == "optimize":
        opt = optimize_q(scenario, table, spec.objective, spec.grid)
        row.update(objective=opt.objective, q_grid=float(opt.q_grid), value_grid=float(opt.value_grid),
                   q_opt=float(opt.q), value_opt=float(opt.value))
        return [row]

    if mode == "sdp-table":
        svc = service_prob(scenario, table)
        if svc.nu is None:
            return [{**row, "status": "invalid: q = 0 leaves nu undefined", "mu": svc.mu}]
        grid = sdp_table(scenario.q, svc.nu, scenario.deadline - 1, scenario.deadline)
        rows = []
        for d in range(1, scenario.deadline + 1):
            for n in range(d):
                rows.append({**row, "mu": svc.mu, "nu": svc.nu, "ps_n": n, "ps_D": d,
                             "p_s": grid[n][d]})
        return rows

    if mode in ("analyze", "validate", "sweep"):
        a = analyze(scenario, table)
        row.update(mu=float(a.mu), T=float(a.throughput), DR=float(a.drop_rate))
        if not a.irreducible:
            row["status"] = "reducible"
    if mode in ("simulate", "validate", "sweep"):
        cfg = SimConfig(scenario, table, slots=spec.slots, seed=spec.seed, warmup=spec.warmup)
        r = run_replications(cfg, spec.reps)
        row.update(seed=spec.seed, slots=spec.slots, warmup=spec.warmup, reps=spec.reps,
                   arrivals=r.arrivals, successes=r.successes, drops_deadline=r.drops_deadline,
                   drops_retx=r.drops_retx, drops_overflow=r.drops_overflow, T_sim=r.throughput,
                   DR_sim=r.drop_rate, ci99_T=r.ci99_throughput, ci99_DR=r.ci99_drop)
        if "T" in row:
            row.update(z_T=_z(r.throughput, row["T"], r.se_throughput),
                       z_DR=_z(r.drop_rate, row["DR"], r.se_drop))
    return [row]


def _evaluate_packed(args):
    return evaluate_point(*args)


def resolve_jobs(jobs: Optional[int]) -> int:
    if jobs is None:
        env = os.environ.get(JOBS_ENV)
        if env:
            jobs = int(env)
    if jobs is None:
        jobs = os.cpu_count() or 1
    return max(1, jobs)


def execute(spec: RunSpec, jobs: Optional[int] = 1, out=None) -> int:
    """Run ``spec``, write CSV to ``out`` (path, file object, or ``spec.out``/stdout).

    Rows come out in sweep order regardless of worker completion order.
    Returns the exit status.
    """
    points = spec.points()
    jobs = min(resolve_jobs(jobs), len(points))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate_packed, [(spec, p) for p in points]))
    else:
        results = [evaluate_point(spec, p) for p in points]
    rows = [r for group in results for r in group]

    cols = columns_for(spec.mode)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([fmt(r.get(c)) for c in cols])
    invalid = [r for r in rows if r["status"].startswith("invalid")]
    if invalid:
        log.warning("%d of %d rows skipped as invalid, first: %s", len(invalid), len(rows),
                    invalid[0]["status"])

    target = out if out is not None else spec.out
    if target is None:
        sys.stdout.write(buf.getvalue())
    elif hasattr(target, "write"):
        target.write(buf.getvalue())
    else:
        with open(target, "w", newline="") as fh:
            fh.write(buf.getvalue())

    if spec.mode == "validate":
        bad = [r for r in rows if "z_T" in r and max(abs(r["z_T"]), abs(r["z_DR"])) > Z_LIMIT]
        if bad:
            log.error("%d of %d points outside %.0f standard errors", len(bad), len(rows), Z_LIMIT)
            return EXIT_VALIDATION
    return EXIT_OK


def figure_config_names() -> list:
    root = resources.files("aloha_deadline") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def read_config(name: str) -> str:
    if os.path.exists(name):
        with open(name) as fh:
            return fh.read()
    shipped = resources.files("aloha_deadline") / "configs" / f"{name}.cfg"
    if shipped.is_file():
        return shipped.read_text()
    raise ConfigError(f"config {name!r} not found (shipped: {', '.join(figure_config_names())})")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="aloha-deadline",
                description="Deadline-constrained slotted ALOHA: analysis and simulation.")
    p.add_argument("mode", choices=MODES + ("run",))
    p.add_argument("--config", required=True, help="config file or shipped figure name (fig03..fig14)")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--seed", type=int)
    p.add_argument("--slots", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--grid", type=float)
    p.add_argument("--jobs", type=int, help=f"worker processes (default: ${JOBS_ENV} or CPU count)")
    p.add_argument("--trace", help="per-slot CSV trace (simulate mode, single point only)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = parse_config(read_config(args.config))
        overrides = {k: getattr(args, k) for k in ("out", "seed", "slots", "reps", "grid")
                     if getattr(args, k) is not None}
        if args.mode != "run":
            overrides["mode"] = args.mode
        spec = replace(spec, **overrides)
        if not 0 <= spec.seed < 2 ** 64:
            raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {spec.seed}")
        if spec.reps < 1 or spec.slots <= spec.warmup:
            raise ConfigError("need --reps >= 1 and --slots > warmup")
        if not 0.0 < spec.grid <= 0.5:
            raise ConfigError(f"--grid must lie in (0, 0.5], got {spec.grid}")
        if spec.mode == "optimize" and any(axis == "q" for axis, _ in spec.sweep):
            raise ConfigError("q cannot be swept in optimize mode")
        if args.trace:
            points = spec.points()
            if spec.mode != "simulate" or len(points) != 1:
                raise ConfigError("--trace needs simulate mode and a single point")
            sc = scenario_from_point(points[0])
            run_simulation(SimConfig(sc, spec.success_table(sc.n_nodes), slots=spec.slots,
                                     seed=spec.seed, warmup=spec.warmup), trace=args.trace)
    except (ConfigError, ValueError, OSError) as e:
        print(f"aloha-deadline: {e}", file=sys.stderr)
        return EXIT_USAGE
    return execute(spec, jobs=args.jobs)


if __name__ == "__main__":
    sys.exit(main())
