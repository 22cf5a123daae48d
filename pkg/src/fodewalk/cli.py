"""Command-line driver.

Subcommands::

    fodewalk solve     --problem p.json [--walks N] [--seed S] [--mode M] [--out r.json]
    fodewalk validate  [--systems 100] [--n 5] [--walks N] [--seed S]
    fodewalk robin     [--nx 20] [--alpha0 0.7] [--walks N] [--bootstrap B]
    fodewalk bench     [--family time|grid|dimension|all] [--walks N]
    fodewalk ml-eval   --alpha A [--beta B] --z Z [Z ...] [--derivs]

Exit status: 0 on success, 2 when the problem is invalid (the message names
the row), 3 on a numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Sequence

import numpy as np

from fodewalk import experiments
from fodewalk.errors import FodeWalkError, MLDomainError, ProblemError, WalkError
from fodewalk.estimator import estimate
from fodewalk.mittag_leffler import ml_eval
from fodewalk.model import RobinSpec, load_problem, problem_to_json
from fodewalk.reference import L1Config, l1_solve

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def _level(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 0.5:
        raise argparse.ArgumentTypeError("significance level must lie in (0, 0.5)")
    return v


def _walks(text: str) -> int:
    v = int(float(text))
    if v < 2:
        raise argparse.ArgumentTypeError("at least two walks are needed")
    return v


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _common(sp: argparse.ArgumentParser, walks_default: int | None) -> None:
    sp.add_argument("--walks", type=_walks, default=walks_default, help="number of walks N_s")
    sp.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    sp.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    sp.add_argument("--out", default="-", help="output path, '-' for stdout")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--level", type=_level, default=0.05, help="significance level p")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fodewalk", description="Random-walk solver for fractional ODE systems.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="estimate u_i(T) and its sensitivities for a problem file")
    sp.add_argument("--problem", required=True, help="problem JSON file")
    sp.add_argument("--mode", choices=("simplified", "general"), default=None)
    sp.add_argument("--proposal", choices=("exponential", "ml"), default="exponential",
                    help="sojourn proposal in general mode")
    sp.add_argument("--trajectory", default=None, help="also write the L1 reference trajectory (CSV) here")
    sp.add_argument("--nt", type=int, default=4096, help="L1 time steps for --trajectory")
    _common(sp, None)

    sp = sub.add_parser("validate", help="random-system validation table")
    sp.add_argument("--systems", type=int, default=100)
    sp.add_argument("--n", type=int, default=5, help="system size")
    sp.add_argument("--nt", type=int, default=1024, help="L1 time steps (Richardson over nt and 2nt)")
    sp.add_argument("--quiet", action="store_true", help="no per-system progress on stderr")
    _common(sp, 100_000)

    sp = sub.add_parser("robin", help="Robin heat-equation loss sweep with bootstrap intervals")
    sp.add_argument("--nx", type=int, default=20)
    sp.add_argument("--alpha0", type=float, default=0.7)
    sp.add_argument("--b1", type=float, default=1.0)
    sp.add_argument("--b2", type=float, default=-1.0)
    sp.add_argument("--T", type=float, default=experiments.ROBIN_T)
    sp.add_argument("--alphas", type=_floats, default=experiments.ROBIN_ALPHAS)
    sp.add_argument("--a11-steps", type=_ints, default=experiments.ROBIN_A11_STEPS)
    sp.add_argument("--bootstrap", type=int, default=5000, help="bootstrap replicates B")
    sp.add_argument("--nt", type=int, default=1024, help="L1 time steps (Richardson over nt and 2nt)")
    _common(sp, 1_000_000)

    sp = sub.add_parser("bench", help="jump-count scaling on Laplacian problems")
    sp.add_argument("--family", choices=("time", "grid", "dimension", "all"), default="all")
    sp.add_argument("--alphas", type=_floats, default=(0.5, 0.75, 1.0))
    sp.add_argument("--Ts", type=_floats, default=(1.0, 2.0, 4.0, 8.0, 16.0))
    sp.add_argument("--nx", type=int, default=None, help="grid size for the time and dimension families")
    sp.add_argument("--nxs", type=_ints, default=(4, 8, 16, 32), help="grid sizes for the grid family")
    sp.add_argument("--dims", type=_ints, default=(1, 2, 3, 4))
    _common(sp, 2000)

    sp = sub.add_parser("ml-eval", help="evaluate E_{alpha,beta}(z)")
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--beta", type=float, default=None, help="defaults to 1")
    sp.add_argument("--z", type=float, nargs="+", required=True)
    sp.add_argument("--derivs", action="store_true")
    sp.add_argument("--out", default="-")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    return ap


# --------------------------------------------------------------------------
# output


def _emit(path: str, fmt: str, doc, rows: list[dict]) -> None:
    if fmt == "json":
        text = json.dumps(doc, indent=2) + "\n"
    else:
        buf = io.StringIO()
        if rows:
            w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: _plain(v) for k, v in r.items()})
        text = buf.getvalue()
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _plain(v):
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    if isinstance(v, (np.integer, np.bool_)):
        return v.item()
    return v


# --------------------------------------------------------------------------
# commands


def cmd_solve(args) -> int:
    p, opts = load_problem(args.problem)
    mode = args.mode or opts.get("mode", "simplified")
    seed = args.seed if args.seed is not None else int(opts.get("seed", 0))
    walks = args.walks if args.walks is not None else int(opts.get("num_walks", 100_000))
    if walks < 2:
        raise ProblemError("at least two walks are needed")
    rep = estimate(p, walks, workers=args.workers, seed=seed, mode=mode, proposal=args.proposal, level=args.level)
    doc = rep.to_dict()
    doc["problem"] = problem_to_json(p)
    _emit(args.out, args.format, doc, rep.to_rows())
    if args.trajectory:
        sol = l1_solve(p, L1Config(args.nt))
        rows = [{"t": t, **{f"u_{j + 1}": u[j] for j in range(p.n)}} for t, u in zip(sol.t, sol.u)]
        _emit(args.trajectory, "csv", None, rows)
    return EXIT_OK


def cmd_validate(args) -> int:
    seed = args.seed if args.seed is not None else 0

    def progress(s, check):
        if not args.quiet:
            flags = " ".join(f"{k}={'pass' if v else 'FAIL'}" for k, v in check.passed.items())
            extra = f" ({check.error})" if check.error else ""
            print(f"system {s + 1}/{args.systems}: {flags}{extra}", file=sys.stderr, flush=True)

    table = experiments.validation_table(
        args.systems, args.n, args.walks, seed, args.level, L1Config(args.nt, True), args.workers, progress
    )
    doc = {"schema": 1, "seed": seed, **table.to_dict()}
    doc["systems_detail"] = [
        {"system": c.index + 1, "passed": c.passed, "pvalues": c.pvalues, "error": c.error} for c in table.checks
    ]
    rows = [{"column": c, "passed": table.counts[c], "systems": table.systems} for c in experiments.VALIDATION_COLUMNS]
    _emit(args.out, args.format, doc, rows)
    return EXIT_OK


def cmd_robin(args) -> int:
    seed = args.seed if args.seed is not None else 0
    spec = RobinSpec(n_x=args.nx, b1=args.b1, b2=args.b2, alpha_param=args.alpha0)
    study = experiments.robin_study(
        spec, args.T, args.walks, seed, args.bootstrap, args.level, L1Config(args.nt, True),
        args.alphas, args.a11_steps, args.workers,
    )
    rows = study.to_rows()
    doc = {
        "schema": 1,
        "seed": seed,
        "n_x": spec.n_x,
        "T": study.T,
        "a11_0": study.a11_0,
        "n_walks": study.n_walks,
        "bootstrap": args.bootstrap,
        "level": args.level,
        "overlaps": study.overlaps,
        "points": len(rows),
        "rows": rows,
    }
    _emit(args.out, args.format, doc, rows)
    return EXIT_OK


def cmd_bench(args) -> int:
    seed = args.seed if args.seed is not None else 0
    fam = args.family
    time_rows = grid_rows = dim_rows = []
    if fam in ("time", "all"):
        time_rows = experiments.bench_time(args.alphas, args.Ts, args.nx or 4, args.walks, seed)
    if fam in ("grid", "all"):
        grid_rows = experiments.bench_grid(args.nxs, n_walks=args.walks, seed=seed)
    if fam in ("dimension", "all"):
        dim_rows = experiments.bench_dimension(args.dims, args.nx or 5, n_walks=args.walks, seed=seed)
    rows = [vars(r) for r in (*time_rows, *grid_rows, *dim_rows)]
    summary = experiments.bench_summary(time_rows, grid_rows, dim_rows)
    summary["time_slopes"] = {str(k): v for k, v in summary["time_slopes"].items()}
    doc = {"schema": 1, "seed": seed, "n_walks": args.walks, "summary": summary, "rows": rows}
    _emit(args.out, args.format, doc, rows)
    return EXIT_OK


def cmd_ml_eval(args) -> int:
    beta = 1.0 if args.beta is None else args.beta
    rows = []
    for z in args.z:
        v = ml_eval(args.alpha, beta, z, args.derivs)
        row = {"alpha": args.alpha, "beta": beta, "z": z, "value": v.value}
        if args.derivs:
            row.update(d_alpha=v.d_alpha, d_beta=v.d_beta, d_z=v.d_z)
        rows.append(row)
    _emit(args.out, args.format, {"schema": 1, "rows": rows}, rows)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "validate": cmd_validate,
    "robin": cmd_robin,
    "bench": cmd_bench,
    "ml-eval": cmd_ml_eval,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ProblemError as exc:
        print(f"fodewalk: invalid problem: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except MLDomainError as exc:
        print(f"fodewalk: invalid argument: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except WalkError as exc:
        code = EXIT_INVALID if isinstance(exc.cause, ProblemError) else EXIT_NUMERICAL
        print(f"fodewalk: {exc}", file=sys.stderr)
        return code
    except FodeWalkError as exc:
        print(f"fodewalk: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"fodewalk: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
