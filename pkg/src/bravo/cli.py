"""Command-line front end: ``bravo {exact,qed,sweep,simulate,figures,verify}``.

Exit codes: 0 success, 1 verification failure, 2 bad input, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .chain import MmskParams, build_mmsk, d_pi, d_pi_lower_bound, d_pi_marked, output_stats, stationary
from .qed import BETA_SWITCH, d0, d_beta_eta, delay_prob_limit
from .simulate import SimConfig, default_workers, simulate_marked_ratio, simulate_ratio

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_IO = 0, 1, 2, 3
EXACT_WORK_LIMIT = 10_000_000


class InputError(ValueError):
    pass


# ---------------------------------------------------------------- formatting

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return float(f"{v:.12g}") if math.isfinite(v) else None
    return v


def render(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        data = [{k: _json_value(v) for k, v in r.items()} for r in rows]
        return json.dumps(data[0] if len(data) == 1 else data, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(rows[0].keys()))
        for r in rows:
            writer.writerow([_fmt(v) for v in r.values()])
        return buf.getvalue()
    width = max(len(k) for k in rows[0])
    blocks = ["\n".join(f"{k:<{width}}  {_fmt(v)}" for k, v in r.items()) for r in rows]
    return "\n\n".join(blocks) + "\n"


def _write(path: str | Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _workers(args) -> int:
    return args.threads if getattr(args, "threads", None) else default_workers()


# ---------------------------------------------------------------- records

def exact_record(s: int, k: int, rho: float) -> dict:
    params = MmskParams(s, k, rho)
    chain = build_mmsk(params)
    dist = stationary(chain)
    return {
        "s": params.servers,
        "K": params.buffer,
        "rho": params.traffic_intensity,
        "J": params.J,
        "pi_J": dist.pi_J,
        "departure_rate": output_stats(chain, dist).departure_rate,
        "d_pi": d_pi(chain, dist),
        "lower_bound": d_pi_lower_bound(dist),
    }


def qed_record(beta: float, eta: float) -> dict:
    if not (math.isfinite(beta) and math.isfinite(eta)):
        raise InputError("beta and eta must be finite")
    critical = abs(beta) < BETA_SWITCH
    if eta < 0 or (eta == 0 and not critical):
        raise InputError("eta must be > 0 (eta = 0 is accepted only on the critical branch)")
    if critical:
        ratio, h, f, g = d0(eta), math.nan, math.nan, math.nan
        branch = "critical"
    else:
        ev = d_beta_eta(eta, beta)
        ratio, h, f, g, branch = ev.ratio, ev.h_value, ev.f_value, ev.g_value, ev.branch
    return {"beta": float(beta), "eta": float(eta), "branch": branch, "h": h, "f": f, "g": g,
            "ratio": ratio, "delay_probability": delay_prob_limit(eta, beta)}


def _parse_marks(text: str | None):
    if text is None:
        return None
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise InputError(f"cannot parse marks {text!r}") from exc


def simulate_record(s, k, rho, marks, seed, replications, batch_count, batch_length, warmup,
                    initial_state, workers) -> dict:
    chain = build_mmsk(MmskParams(s, k, rho))
    if isinstance(initial_state, str) and initial_state.isdigit():
        initial_state = int(initial_state)
    config = SimConfig(master_seed=seed, warmup_time=warmup, batch_count=batch_count,
                       batch_length=batch_length, replications=replications, initial_state=initial_state)
    if marks is None:
        est = simulate_ratio(chain, config, workers=workers)
        exact = d_pi(chain)
    else:
        est = simulate_marked_ratio(chain, marks, config, workers=workers)
        exact = float(d_pi_marked(chain, marks))
    rec = {"s": s, "K": k, "rho": float(rho), "marked": marks is not None}
    rec.update(est.as_dict())
    rec["exact_ratio"] = exact
    return rec


def simulate_output(*, s, k, rho, marks, seed, replications, batch_count, batch_length, warmup,
                    initial_state, fmt, workers) -> str:
    """Rendered simulate output; used by the command and by the determinism check."""
    rec = simulate_record(s, k, rho, marks, seed, replications, batch_count, batch_length, warmup,
                          initial_state, workers)
    return render([rec], fmt)


# ---------------------------------------------------------------- figures

def fig1_rows() -> list[dict]:
    return [{"eta": k / 100, "d0": d0(k / 100)} for k in range(501)]


def fig2_rows(workers: int = 1) -> list[dict]:
    points = [(k / 20, eta) for eta in (0.5, 1.0, 2.0, 4.0) for k in range(-120, 121)]

    def one(p):
        beta, eta = p
        return {"beta": beta, "eta": eta, "d": d_beta_eta(eta, beta).ratio}

    return _ordered_map(one, points, workers)


def fig3_rows(workers: int = 1) -> list[dict]:
    points = [(k / 100, s) for s in (10, 100, 400) for k in range(50, 151)]

    def one(p):
        rho, s = p
        return {"rho": rho, "s": s, "d_exact": d_pi(build_mmsk(MmskParams(s, math.ceil(math.sqrt(s)), rho)))}

    rows = _ordered_map(one, points, workers)
    rows.append({"rho": 1.0, "s": math.inf, "d_exact": d0(1.0)})
    return rows


FIGURES = {"fig1": lambda w: fig1_rows(), "fig2": fig2_rows, "fig3": fig3_rows}


def _ordered_map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- sweep

def _read_grid(path: str) -> list[list[float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    return [[float(x) for x in r] for r in rows]


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def _parse_point(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise InputError(f"cannot parse grid point {text!r}") from exc


def _as_int(x: float, name: str) -> int:
    if x != int(x):
        raise InputError(f"{name} must be an integer, got {x!r}")
    return int(x)


def sweep_rows(mode: str, grid: list[list[float]], seed: int | None, workers: int, sim_kwargs: dict) -> list[dict]:
    if not grid:
        raise InputError("sweep grid is empty")
    width = 2 if mode == "qed" else 3
    for p in grid:
        if len(p) != width:
            raise InputError(f"{mode} grid points need {width} values, got {p}")
    if mode == "qed":
        return _ordered_map(lambda p: qed_record(p[0], p[1]), grid, workers)
    points = [(_as_int(p[0], "s"), _as_int(p[1], "K"), p[2]) for p in grid]
    for s, k, rho in points:
        MmskParams(s, k, rho)
    if mode == "exact":
        for s, k, _ in points:
            if s * (1 + k) > EXACT_WORK_LIMIT:
                raise InputError(f"s*(1+K) = {s * (1 + k)} exceeds the exact-mode bound {EXACT_WORK_LIMIT}")
        return _ordered_map(lambda p: exact_record(*p), points, workers)
    base = 0 if seed is None else seed
    seeds = [int(np.random.SeedSequence([base, i]).generate_state(1, np.uint64)[0]) for i in range(len(points))]
    # Points run one after another; each simulation parallelises over its replications.
    return [simulate_record(s, k, rho, None, sd, workers=workers, **sim_kwargs)
            for (s, k, rho), sd in zip(points, seeds)]


# ---------------------------------------------------------------- commands

def cmd_exact(args) -> int:
    _emit(args, render([exact_record(args.s, args.k, args.rho)], args.format))
    return EXIT_OK


def cmd_qed(args) -> int:
    _emit(args, render([qed_record(args.beta, args.eta)], args.format))
    return EXIT_OK


def cmd_simulate(args) -> int:
    text = simulate_output(s=args.s, k=args.k, rho=args.rho, marks=_parse_marks(args.marks), seed=args.seed,
                           replications=args.replications, batch_count=args.batch_count,
                           batch_length=args.batch_length, warmup=args.warmup,
                           initial_state=args.initial_state, fmt=args.format, workers=_workers(args))
    _emit(args, text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    grid: list[list[float]] = []
    if args.grid:
        grid.extend(_read_grid(args.grid))
    grid.extend(_parse_point(p) for p in args.point or [])
    sim_kwargs = dict(replications=args.replications, batch_count=args.batch_count,
                      batch_length=args.batch_length, warmup=args.warmup, initial_state="stationary-sampled")
    rows = sweep_rows(args.mode, grid, args.seed, _workers(args), sim_kwargs)
    fmt = "json" if args.format == "json" else "csv"
    text = render(rows, fmt)
    if args.output:
        _write(args.output, text)
    _emit(args, text)
    return EXIT_OK


def cmd_figures(args) -> int:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = list(FIGURES) if args.which == "all" else [args.which]
    for name in names:
        path = out / f"{name}.csv"
        _write(path, render(FIGURES[name](_workers(args)), "csv"))
        if not args.quiet:
            print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import format_report, run_checks

    checks = run_checks(args.level)
    if args.format == "text":
        text = format_report(checks) + "\n"
    else:
        rows = [{"criterion": c.criterion, "name": c.name, "passed": c.passed,
                 "measured": c.measured, "expected": c.expected, "detail": c.detail} for c in checks]
        text = render(rows, args.format)
    _emit(args, text)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY


def _emit(args, text: str) -> None:
    if not args.quiet:
        sys.stdout.write(text)


# ---------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser, formats=("text", "csv", "json")) -> None:
    p.add_argument("--format", choices=formats, default=formats[0])
    p.add_argument("--quiet", action="store_true", help="suppress standard output")


def _sim_options(p: argparse.ArgumentParser, batch_default: int = 100) -> None:
    p.add_argument("--replications", type=int, default=4)
    p.add_argument("--batch-count", type=int, default=batch_default)
    p.add_argument("--batch-length", type=float, default=None, help="model time per batch (default 1e4/lambda*)")
    p.add_argument("--warmup", type=float, default=None, help="warm-up time (default 100 J / slowest rate)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default $BRAVO_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bravo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exact", help="exact ratio of an M/M/s/K queue")
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--rho", type=float, required=True)
    _common(p)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("qed", help="many-server limit at (beta, eta)")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    _common(p)
    p.set_defaults(func=cmd_qed)

    p = sub.add_parser("simulate", help="batch-means simulation of an M/M/s/K queue")
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--marks", default=None, help="comma-separated counting probabilities q_1..q_J")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--initial-state", default="stationary-sampled")
    _sim_options(p)
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="evaluate a grid of points")
    p.add_argument("--mode", choices=("exact", "qed", "simulate"), required=True)
    p.add_argument("--grid", default=None, help="CSV file of points: s,K,rho or beta,eta")
    p.add_argument("--point", action="append", help="one grid point, e.g. 400,20,1 or 1,0.5")
    p.add_argument("--output", default=None)
    p.add_argument("--seed", type=int, default=None)
    _sim_options(p)
    _common(p, formats=("csv", "json"))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("figures", help="write figure data as CSV")
    p.add_argument("--which", choices=("fig1", "fig2", "fig3", "all"), default="all")
    p.add_argument("--output-dir", default=".")
    p.add_argument("--threads", type=int, default=None)
    _common(p, formats=("csv",))
    p.set_defaults(func=cmd_figures)

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--level", choices=("fast", "full"), default="fast")
    _common(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except OSError as exc:
        print(f"bravo: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, OverflowError) as exc:
        print(f"bravo: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
