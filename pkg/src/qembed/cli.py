"""Experiment harness: run config files, compare curves, list protocols.

Exit codes: 0 success, 1 a comparison check failed, 2 config/structural
validation, 3 runtime failure, 4 I/O, 5 unparseable input.  Validation
messages always name the offending field.

Artifacts are deterministic functions of the resolved config: every CSV
row carries its seed block, the manifest echoes the full config (plus
derived constants), and re-running a manifest rebuilds the same bytes.
Wall-clock measurements (the overhead table, per-run optimizer times) are
the one exception: they are measurements, not derivations, and vary
between machines.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import network, optimizers
from .chain_oracle import interpolation_curve, write_oracle_csv
from .coeffs import CoeffTemplate, DiscreteDomain, alphas
from .config import (
    ExperimentConfig,
    ValidationError,
    load_config,
    packaged_protocols,
    with_seed,
)
from .queues import sweep_point, write_sweep_csv

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_IO = 4
EXIT_PARSE = 5

SWEEP_HEADER = "y,mean,std,replications,horizon,seed0"

Z_LIMIT = 3.0
# Two-sided tail mass beyond 3 sigma; quantifies expected chance exceedances.
CHANCE_RATE = 0.0027


class _CliError(Exception):
    def __init__(self, code, message):
        self.code = code
        self.message = message
        super().__init__(message)


def _err(message):
    print(message, file=sys.stderr)


# ------------------------------------------------------------------ seeds

_SEED_SCHEMES = {
    "sweep": "replication i uses stream seed + i; the block repeats at every grid point",
    "oracle-curve": "exact computation; no random streams",
    "slice2d": "replication r of cell (i, j) of slice s draws its stream from "
    "seed-sequence [seed, s, i, j, r]",
    "overhead": "run r of row k uses stream seed + 100 * k + r",
    "campaign": "seed-sequence spawn: one child for shared initial points, "
    "one per (run, method-independent) run stream",
}


def _cell_seed(seed, s, i, j, r) -> int:
    return int(np.random.SeedSequence([seed, s, i, j, r]).generate_state(1)[0])


# ------------------------------------------------------------- sweep kinds

def _point_task(payload):
    model, y, reps, seed, horizon = payload
    return sweep_point(model, y, reps, seed, horizon)


def _sweep_rows(model, grid, reps, seed, horizon, jobs):
    payloads = [(model, y, reps, seed, horizon) for y in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_point_task, payloads))
    return [_point_task(p) for p in payloads]


def _run_sweep(cfg: ExperimentConfig, out_dir: Path, jobs: int):
    templates = cfg.sweep_templates()
    multi = len(templates) > 1
    artifacts = []
    for i, tpl in enumerate(templates, start=1):
        stem = f"{cfg.out}-p{i}" if multi else cfg.out
        model = cfg.slot_model(tpl)
        rows = _sweep_rows(model, cfg.grid, cfg.replications, cfg.seed, cfg.horizon, jobs)
        write_sweep_csv(out_dir / f"{stem}.csv", rows)
        artifacts.append(f"{stem}.csv")
        if cfg.oracle:
            curve = interpolation_curve(model, cfg.grid)
            write_oracle_csv(out_dir / f"{stem}-oracle.csv", curve)
            artifacts.append(f"{stem}-oracle.csv")
    return artifacts


def _run_oracle_curve(cfg: ExperimentConfig, out_dir: Path, jobs: int):
    name = f"{cfg.out}.csv"
    if cfg.model == "coeffs":
        _write_coeff_panels(cfg, out_dir / name)
        return [name]
    model = cfg.slot_model(cfg.template)
    write_oracle_csv(out_dir / name, interpolation_curve(model, cfg.grid))
    return [name]


def _write_coeff_panels(cfg: ExperimentConfig, path: Path):
    lo, hi = cfg.domain
    domain = DiscreteDomain(lo, hi)
    with open(path, "w") as fh:
        fh.write("panel,half_width,spread,skew,y,k,alpha\n")
        for p, tpl in enumerate(cfg.sweep_templates(), start=1):
            for y in cfg.grid:
                weights = alphas(y, domain, tpl).as_dict()
                for k in range(lo, hi + 1):
                    a = weights.get(k, 0.0)
                    fh.write(
                        f"{p},{tpl.half_width},{tpl.spread!r},{tpl.skew!r},"
                        f"{y!r},{k},{a!r}\n"
                    )


# ------------------------------------------------------------ network kinds

def _slice_cell(payload):
    x, horizon, seeds, arrival_p, q2, templates = payload
    cfg = network.NetworkConfig(arrival_p=arrival_p, q2=q2)
    vals = [
        network.objective(x, horizon=horizon, seed=s, config=cfg, templates=templates)
        for s in seeds
    ]
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return float(np.mean(vals)), std


def _run_slice2d(cfg: ExperimentConfig, out_dir: Path, jobs: int):
    artifacts = []
    for s, (a, b) in enumerate(cfg.slices):
        ia, ib = network.PARAM_ORDER.index(a), network.PARAM_ORDER.index(b)
        payloads = []
        points = []
        for i, va in enumerate(cfg.grid):
            for j, vb in enumerate(cfg.grid):
                x = [float(cfg.fixed_target)] * len(network.PARAM_ORDER)
                x[ia], x[ib] = float(va), float(vb)
                seeds = tuple(
                    _cell_seed(cfg.seed, s, i, j, r) for r in range(cfg.replications)
                )
                payloads.append(
                    (tuple(x), cfg.horizon, seeds, cfg.arrival_p, cfg.q2, cfg.templates)
                )
                points.append((va, vb))
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                stats = list(pool.map(_slice_cell, payloads))
        else:
            stats = [_slice_cell(p) for p in payloads]
        name = f"{cfg.out}-{a.lower()}-{b.lower()}.csv"
        with open(out_dir / name, "w") as fh:
            fh.write(f"{a.lower()},{b.lower()},mean,std,replications,horizon,seed0\n")
            for (va, vb), (mean, std) in zip(points, stats):
                fh.write(
                    f"{va!r},{vb!r},{mean!r},{std!r},"
                    f"{cfg.replications},{cfg.horizon},{cfg.seed}\n"
                )
        artifacts.append(name)
    return artifacts


def _run_overhead(cfg: ExperimentConfig, out_dir: Path, jobs: int):
    netcfg = network.NetworkConfig(arrival_p=cfg.arrival_p, q2=cfg.q2)
    # warm the compiled kernel outside the timed region
    network.simulate_network(network.overhead_params(0), 256, seed=0, config=netcfg)
    rows = []
    base = None
    for k in range(8):
        params = network.overhead_params(k, templates=cfg.templates)
        t0 = time.process_time()
        for r in range(cfg.runs):
            network.simulate_network(
                params, cfg.horizon, seed=cfg.seed + 100 * k + r, config=netcfg
            )
        avg = (time.process_time() - t0) / cfg.runs
        if k == 0:
            base = avg
            pct = 0.0
        else:
            pct = 100.0 * (avg / base - 1.0)
        rows.append({"embedded": k, "avg_seconds": avg, "overhead_pct": pct})
    name = f"{cfg.out}.json"
    _dump_json(out_dir / name, {"config": cfg.resolved(), "rows": rows})
    return [name]


def _run_campaign(cfg: ExperimentConfig, out_dir: Path, jobs: int):
    netcfg = network.NetworkConfig(arrival_p=cfg.arrival_p, q2=cfg.q2)

    def objective(x, seed):
        return network.objective(
            x, horizon=cfg.horizon, seed=seed, config=netcfg, templates=cfg.templates
        )

    artifacts = []
    combined = {
        "config": cfg.resolved(),
        "seeds": {"seed": cfg.seed, "scheme": _SEED_SCHEMES["campaign"]},
        "methods": {},
    }
    for method in cfg.methods:
        result = optimizers.campaign(
            method, objective, n_runs=cfg.n_runs, budget=cfg.budget, seed=cfg.seed
        )
        optimizers.write_records_jsonl(out_dir / f"{cfg.out}-{method}-runs.jsonl", result)
        optimizers.write_summary_json(out_dir / f"{cfg.out}-{method}-summary.json", result)
        artifacts += [f"{cfg.out}-{method}-runs.jsonl", f"{cfg.out}-{method}-summary.json"]
        combined["methods"][method] = optimizers.summary_dict(result)
    name = f"{cfg.out}.json"
    _dump_json(out_dir / name, combined)
    return artifacts + [name]


_RUNNERS = {
    "sweep": _run_sweep,
    "oracle-curve": _run_oracle_curve,
    "slice2d": _run_slice2d,
    "overhead": _run_overhead,
    "campaign": _run_campaign,
}


# ---------------------------------------------------------------- manifest

def _dump_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


def _write_manifest(cfg: ExperimentConfig, out_dir: Path, artifacts):
    manifest = {
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": cfg.resolved(),
        "derived": {"max_cost": network.MAX_COST},
        "seeds": {"seed": cfg.seed, "scheme": _SEED_SCHEMES[cfg.kind]},
        "artifacts": artifacts,
    }
    name = f"{cfg.out}-manifest.json"
    _dump_json(out_dir / name, manifest)
    return name


# ------------------------------------------------------------------- run

def _resolve_config_path(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    packaged = packaged_protocols().get(arg)
    if packaged is not None:
        return Path(str(packaged))
    raise _CliError(
        EXIT_IO, f"cannot read config {arg!r}: no such file or packaged protocol"
    )


def _cmd_run(args) -> int:
    try:
        path = _resolve_config_path(args.config)
        try:
            cfg = load_config(path)
        except OSError as exc:
            raise _CliError(EXIT_IO, f"cannot read {path}: {exc}")
        except yaml.YAMLError as exc:
            raise _CliError(EXIT_PARSE, f"cannot parse {path}: {exc}")
        except ValidationError as exc:
            raise _CliError(EXIT_VALIDATION, f"config error in {path}: {exc}")
        if args.seed is not None:
            cfg = with_seed(cfg, args.seed)
        out_dir = Path(args.out)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise _CliError(EXIT_IO, f"cannot create output directory: {exc}")
        try:
            artifacts = _RUNNERS[cfg.kind](cfg, out_dir, args.jobs)
            manifest = _write_manifest(cfg, out_dir, artifacts)
        except OSError as exc:
            raise _CliError(EXIT_IO, f"cannot write artifact: {exc}")
        except Exception as exc:
            raise _CliError(EXIT_RUNTIME, f"runtime error: {exc}")
    except _CliError as exc:
        _err(exc.message)
        return exc.code
    for name in artifacts + [manifest]:
        print(out_dir / name)
    return EXIT_OK


# --------------------------------------------------------- compare-oracle

def _read_sweep_table(path_str):
    path = Path(path_str)
    try:
        lines = path.read_text().strip().splitlines()
    except OSError as exc:
        raise _CliError(EXIT_IO, f"cannot read {path}: {exc}")
    if not lines or lines[0] != SWEEP_HEADER:
        raise _CliError(
            EXIT_VALIDATION,
            f"{path}: expected header {SWEEP_HEADER!r}, got {(lines or [''])[0]!r}",
        )
    rows = []
    for n, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 6:
            raise _CliError(EXIT_PARSE, f"{path}:{n}: expected 6 fields")
        try:
            rows.append(
                (float(parts[0]), float(parts[1]), float(parts[2]), int(parts[3]))
            )
        except ValueError:
            raise _CliError(EXIT_PARSE, f"{path}:{n}: non-numeric field")
    return rows


def _cmd_compare(args) -> int:
    try:
        sim = _read_sweep_table(args.sweep)
        ora = _read_sweep_table(args.oracle)
        if len(sim) != len(ora) or any(
            abs(a[0] - b[0]) > 1e-9 for a, b in zip(sim, ora)
        ):
            raise _CliError(
                EXIT_VALIDATION,
                f"grid mismatch: {args.sweep} has {len(sim)} points, "
                f"{args.oracle} has {len(ora)}, or the y columns differ",
            )
    except _CliError as exc:
        _err(exc.message)
        return exc.code

    exceed = 0
    print(f"{'y':>10} {'sim':>12} {'exact':>12} {'z':>9}")
    for (y, mean, std, reps), (_, exact, _, _) in zip(sim, ora):
        diff = mean - exact
        sem = std / math.sqrt(reps) if reps > 0 and std > 0 else 0.0
        if diff == 0.0:
            z = 0.0
        elif sem == 0.0:
            z = math.inf if diff > 0 else -math.inf
        else:
            z = diff / sem
        flag = ""
        if abs(z) > Z_LIMIT:
            exceed += 1
            flag = "  <-- exceeds"
        print(f"{y:>10.4f} {mean:>12.6g} {exact:>12.6g} {z:>9.3g}{flag}")
    n = len(sim)
    print(
        f"exceedances: {exceed}/{n} at |z| > {Z_LIMIT}"
        f" (about {CHANCE_RATE * n:.2f} expected by chance at {n} points;"
        " isolated exceedances on large grids may be noise)"
    )
    if exceed:
        print("FAIL")
        return EXIT_CHECK_FAILED
    print("PASS")
    return EXIT_OK


# ----------------------------------------------------------- list-protocols

def _cmd_list(args) -> int:
    for name, path in packaged_protocols().items():
        try:
            cfg = load_config(path)
        except Exception as exc:  # a broken packaged file is still listed
            print(f"{name:14} (unreadable: {exc})")
            continue
        print(f"{name:14} {cfg.kind:13} {cfg.label}")
    return EXIT_OK


# ------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qembed",
        description="Run declared simulation experiments and check their artifacts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a config file or packaged protocol")
    run.add_argument("config", help="path to a config/manifest file, or a protocol name")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out", default="artifacts", help="output directory")
    run.add_argument(
        "--jobs",
        type=int,
        default=1,
        help="worker processes for independent grid points (sweeps and slices)",
    )
    run.set_defaults(func=_cmd_run)

    cmp_ = sub.add_parser(
        "compare-oracle", help="z-score a sweep CSV against an exact-curve CSV"
    )
    cmp_.add_argument("sweep", help="simulated sweep CSV")
    cmp_.add_argument("oracle", help="exact curve CSV on the same grid")
    cmp_.set_defaults(func=_cmd_compare)

    lst = sub.add_parser("list-protocols", help="list packaged experiment files")
    lst.set_defaults(func=_cmd_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        _err("jobs: must be >= 1")
        return EXIT_VALIDATION
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
