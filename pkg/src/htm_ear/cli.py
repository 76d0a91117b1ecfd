"""Command-line driver: ``htm-ear gen | run | ablate | bgl | report``.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import io
import logging
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .errors import HtmEarError
from .evaluation import (
    AGG_METRICS,
    BglMetrics,
    RunMetrics,
    aggregate,
    aggregate_table,
    append_result,
    pareto_points,
    read_bgl,
    read_results,
    run_bgl,
    run_scenario,
    write_aggregate,
    write_bgl,
    write_pareto,
    write_results,
)
from .memory_tiers import MODES, SystemConfig
from .workload import Scenario, generate_synthetic, make_bgl_queries, parse_bgl, write_facts, write_queries

log = logging.getLogger("htm_ear")

BGL_DEFAULT_MODES = ("full", "oracle_unbounded", "lru")


# -- argument helpers -------------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _probability(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {v}")
    return v


def parse_seeds(text: str) -> list[int]:
    """``"42-46"`` -> 42..46; comma lists and mixtures (``"1,5-7"``) also work."""
    seeds: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            lo, sep, hi = part.partition("-")
            if sep:
                a, b = int(lo), int(hi)
                if b < a:
                    raise ValueError
                seeds.extend(range(a, b + 1))
            else:
                seeds.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return list(dict.fromkeys(seeds))


def parse_modes(text: str) -> list[str]:
    modes = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in modes if m not in MODES]
    if bad or not modes:
        raise argparse.ArgumentTypeError(f"unknown mode(s) {bad}; choose from {','.join(MODES)}")
    return list(dict.fromkeys(modes))


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=_positive_int, default=15000, help="facts in the stream")
    p.add_argument("--l1", type=_positive_int, default=500, help="L1 capacity")
    p.add_argument("--l2", type=_positive_int, default=5000, help="L2 capacity")
    p.add_argument("--keyword-prob", type=_probability, default=0.25,
                   help="probability a synthetic fact carries an essential keyword")
    p.add_argument("--scale", type=_positive_float, default=1.0,
                   help="multiply n and both capacities (desk-scale smoke runs)")


def _add_system_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=_positive_int, default=64, help="embedding dimension")
    p.add_argument("--final-k", type=_positive_int, default=10, help="length of the returned list")
    p.add_argument("--index", choices=("hnsw", "flat"), default="hnsw", help="ANN backend")


def _scenario(args, seed: int) -> Scenario:
    scn = Scenario(
        n_facts=args.n, l1_capacity=args.l1, l2_capacity=args.l2,
        seed=seed, essential_keyword_prob=args.keyword_prob,
    )
    return scn.scaled(args.scale) if args.scale != 1.0 else scn


def _config(args, mode: str, seed: int, scn: Optional[Scenario] = None) -> SystemConfig:
    return SystemConfig(
        mode=mode, seed=seed, dim=args.dim, final_k=args.final_k, index=args.index,
        l1_capacity=scn.l1_capacity if scn else args.l1,
        l2_capacity=scn.l2_capacity if scn else args.l2,
    )


def write_manifest(path: Path, command: str, fields: dict, outputs: Sequence[Path]) -> None:
    """Flat ``key=value`` record of what produced the outputs next to it."""
    lines = [
        f"command={command}",
        f"tool_version={__version__}",
        f"started_utc={_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}",
    ]
    for k, v in fields.items():
        if isinstance(v, (list, tuple, set, frozenset)):
            v = ",".join(str(x) for x in (sorted(v) if isinstance(v, (set, frozenset)) else v))
        lines.append(f"{k}={v}")
    lines.append("outputs=" + ",".join(str(p) for p in outputs))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _snapshot(cfg: SystemConfig, scn: Optional[Scenario] = None, **extra) -> dict:
    fields = {f"cfg.{k}": v for k, v in dataclasses.asdict(cfg).items()}
    if scn is not None:
        fields.update({f"scenario.{k}": v for k, v in dataclasses.asdict(scn).items()})
    fields.update(extra)
    return fields


# -- subcommands -------------------------------------------------------------


def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scn = _scenario(args, args.seed)
    facts, queries = generate_synthetic(scn)
    paths = [out / "facts.tsv", out / "queries.tsv"]
    write_manifest(out / "manifest.txt", "gen", {f"scenario.{k}": v for k, v in dataclasses.asdict(scn).items()}, paths)
    write_facts(facts, paths[0])
    write_queries(queries, paths[1])
    print(f"wrote {len(facts)} facts and {len(queries)} queries to {out}")
    return 0


def _run_one(args, mode: str, seed: int) -> RunMetrics:
    scn = _scenario(args, seed)
    return run_scenario(_config(args, mode, seed, scn), scn)


def cmd_run(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scn = _scenario(args, args.seed)
    cfg = _config(args, args.mode, args.seed, scn)
    results = out / "results.csv"
    write_manifest(out / "manifest.txt", "run", _snapshot(cfg, scn), [results])
    metrics = run_scenario(cfg, scn)
    write_results([metrics], results)
    _print_run(metrics)
    return 0


def _print_run(m: RunMetrics) -> None:
    print(
        f"{m.mode:<17} seed={m.seed}  active={m.mrr_active:.3f}  history={m.mrr_history:.3f}  "
        f"latency={m.latency_mean_ms:.2f}ms  lost={m.essential_lost}  pruned={m.pruned_total}  "
        f"l2_rate={m.l2_fallback_rate:.3f}"
    )


def _sweep_worker(payload):
    args, mode, seed = payload
    return _run_one(args, mode, seed)


def cmd_ablate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / "results.csv"
    agg_path = out / "aggregate.csv"
    pareto_path = out / "pareto.csv"
    pairs = [(m, s) for m in args.modes for s in args.seeds]
    probe = _scenario(args, args.seeds[0])
    write_manifest(
        out / "manifest.txt", "ablate",
        _snapshot(_config(args, args.modes[0], args.seeds[0], probe), probe,
                  modes=args.modes, seeds=args.seeds, jobs=args.jobs),
        [results_path, agg_path, pareto_path],
    )
    results_path.write_text("", encoding="utf-8")

    runs: list[RunMetrics] = []
    failed: Optional[BaseException] = None
    jobs = args.jobs or len(args.modes)
    if jobs <= 1:
        for mode, seed in pairs:
            try:
                m = _run_one(args, mode, seed)
            except Exception as exc:  # abort the sweep, keep finished rows
                failed = exc
                log.error("run %s/%d failed: %s", mode, seed, exc)
                break
            append_result(m, results_path)
            runs.append(m)
            _print_run(m)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_sweep_worker, (args, m, s)): (m, s) for m, s in pairs}
            for fut in as_completed(futures):
                try:
                    m = fut.result()
                except Exception as exc:
                    failed = exc
                    log.error("run %s/%d failed: %s", *futures[fut], exc)
                    for other in futures:
                        other.cancel()
                    break
                append_result(m, results_path)
                runs.append(m)
                _print_run(m)

    runs.sort(key=lambda r: (MODES.index(r.mode), r.seed))
    write_results(runs, results_path)
    if failed is not None:
        print(f"error: sweep aborted after {len(runs)} run(s): {failed}", file=sys.stderr)
        return 1
    rows = aggregate(runs, args.seeds)
    write_aggregate(rows, agg_path)
    write_pareto(pareto_points(rows), pareto_path)
    print(render_tables(runs, args.seeds, fmt="text"))
    return 0


def cmd_bgl(args) -> int:
    log_path = Path(args.log)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    skipped: list[int] = []
    facts = parse_bgl(log_path, args.limit, skipped=skipped)
    queries = make_bgl_queries(facts)
    results_path = out / "bgl.csv"
    cfg0 = _config(args, args.modes[0], args.seed)
    write_manifest(
        out / "manifest.txt", "bgl",
        _snapshot(cfg0, None, log=log_path, limit=args.limit, modes=args.modes,
                  facts=len(facts), queries=len(queries), malformed_lines=len(skipped)),
        [results_path],
    )
    rows: list[BglMetrics] = []
    for mode in args.modes:
        rows.append(run_bgl(_config(args, mode, args.seed), facts, queries))
    write_bgl(rows, results_path)
    print(f"{len(facts)} facts, {len(queries)} queries, {len(skipped)} malformed line(s) skipped")
    print(render_bgl(rows))
    return 0


# -- report --------------------------------------------------------------------------

_DECIMALS = {
    "mrr_active": 3, "mrr_history": 3, "latency_mean_ms": 2,
    "essential_lost": 1, "pruned_total": 0, "l2_fallback_rate": 3,
}


def _report_rows(runs: list[RunMetrics], seeds: Optional[Sequence[int]]) -> list[dict]:
    if seeds is None:
        seeds = sorted({r.seed for r in runs})
    table = aggregate_table(aggregate(runs, seeds))
    points = {p.mode: p for p in pareto_points(aggregate(runs, seeds))}
    rows = []
    for mode, vals in table.items():
        row = {"mode": mode}
        for metric in AGG_METRICS:
            d = _DECIMALS[metric]
            mean, std = vals[metric]
            row[f"{metric}_mean"] = f"{mean:.{d}f}"
            row[f"{metric}_std"] = f"{std:.{d}f}"
        row["failure_zone"] = str(points[mode].failure_zone).lower()
        rows.append(row)
    return rows


def render_tables(runs: list[RunMetrics], seeds: Optional[Sequence[int]] = None, fmt: str = "text") -> str:
    rows = _report_rows(runs, seeds)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else ["mode"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue().rstrip("\n")

    def pm(r, m):
        return f"{r[m + '_mean']} ± {r[m + '_std']}"

    out = ["Retrieval (MRR, mean ± std)", f"{'Mode':<18}{'Active':>18}{'History':>18}"]
    out += [f"{r['mode']:<18}{pm(r, 'mrr_active'):>18}{pm(r, 'mrr_history'):>18}" for r in rows]
    out += ["", "Robustness (active queries)",
            f"{'Mode':<18}{'Latency (ms)':>18}{'Essential Lost':>20}{'Pruned Total':>16}{'L2 rate':>16}"]
    out += [
        f"{r['mode']:<18}{pm(r, 'latency_mean_ms'):>18}{pm(r, 'essential_lost'):>20}"
        f"{pm(r, 'pruned_total'):>16}{pm(r, 'l2_fallback_rate'):>16}"
        for r in rows
    ]
    out += ["", "Pareto (latency vs active MRR; failure zone: MRR < 0.6)",
            f"{'Mode':<18}{'Latency (ms)':>14}{'Active MRR':>12}{'Failure zone':>14}"]
    out += [
        f"{r['mode']:<18}{r['latency_mean_ms_mean']:>14}{r['mrr_active_mean']:>12}{r['failure_zone']:>14}"
        for r in rows
    ]
    return "\n".join(out)


def render_bgl(rows: Sequence[BglMetrics], fmt: str = "text") -> str:
    if fmt == "csv":
        lines = ["mode,mrr,latency_mean_ms,essential_lost"]
        lines += [f"{r.mode},{r.mrr:.3f},{r.latency_mean_ms:.2f},{r.essential_lost}" for r in rows]
        return "\n".join(lines)
    out = ["BGL log benchmark", f"{'Mode':<18}{'MRR':>8}{'Latency (ms)':>14}{'Essential Lost':>16}"]
    out += [f"{r.mode:<18}{r.mrr:>8.3f}{r.latency_mean_ms:>14.2f}{r.essential_lost:>16}" for r in rows]
    return "\n".join(out)


def cmd_report(args) -> int:
    results = Path(args.results) if args.results else None
    bgl = Path(args.bgl) if args.bgl else None
    if results is None and bgl is None:
        results = Path(args.dir) / "results.csv"
        if (Path(args.dir) / "bgl.csv").is_file():
            bgl = Path(args.dir) / "bgl.csv"
    chunks = []
    if results is not None:
        runs = read_results(results)
        seeds = parse_seeds(args.seeds) if args.seeds else None
        chunks.append(render_tables(runs, seeds, args.format))
        pareto_out = Path(args.pareto_out) if args.pareto_out else results.with_name("pareto.csv")
        write_pareto(pareto_points(aggregate(runs, seeds or sorted({r.seed for r in runs}))), pareto_out)
    if bgl is not None:
        chunks.append(render_bgl(read_bgl(bgl), args.format))
    print("\n\n".join(chunks))
    return 0


# -- entry point -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="htm-ear", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic facts/queries dataset")
    _add_scenario_flags(p)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="one (mode, seed) experiment")
    _add_scenario_flags(p)
    _add_system_flags(p)
    p.add_argument("--mode", choices=MODES, default="full")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", default="out/run", help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="sweep modes x seeds and aggregate")
    _add_scenario_flags(p)
    _add_system_flags(p)
    p.add_argument("--modes", type=parse_modes, default=list(MODES))
    p.add_argument("--seeds", type=parse_seeds, default=parse_seeds("42-46"))
    p.add_argument("--jobs", type=int, default=0, help="worker processes (default: one per mode)")
    p.add_argument("--out", default="out/ablate", help="output directory")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bgl", help="run modes on a BGL log file")
    _add_system_flags(p)
    p.add_argument("--log", required=True, help="path to a BGL log file")
    p.add_argument("--limit", type=_positive_int, default=2000)
    p.add_argument("--modes", type=parse_modes, default=list(BGL_DEFAULT_MODES))
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--l1", type=_positive_int, default=500)
    p.add_argument("--l2", type=_positive_int, default=5000)
    p.add_argument("--out", default="out/bgl", help="output directory")
    p.set_defaults(func=cmd_bgl)

    p = sub.add_parser("report", help="render result files as tables")
    p.add_argument("--dir", default="out/ablate", help="directory holding results.csv / bgl.csv")
    p.add_argument("--results", help="per-run results CSV (overrides --dir)")
    p.add_argument("--bgl", help="BGL results CSV")
    p.add_argument("--seeds", help="restrict aggregation to these seeds")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--pareto-out", help="where to write the Pareto CSV")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (HtmEarError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
