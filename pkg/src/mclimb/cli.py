"""Experiment runner and verification driver.

Subcommands: run, sweep, fit, oracle, verify-appendix-b, codec-check.
Exit codes: 0 ok, 1 assertion failure, 2 bad arguments, 3 I/O failure,
4 insufficient data. MCLIMB_THREADS caps sweep workers.

CSV bodies are deterministic given identical arguments and seeds; the only
exceptions are comment header lines (timestamps live there) and the trailing
wall_ms column, which reports real elapsed time.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import codec, engine, entropy
from .core import ParameterError, RngSeed, SearchPoint
from .engine import RunConfig, phase_stats
from .fitness import parse_function

CSV_COLUMNS = ("n,c,seed,function,alpha,T,T_bad,total_steps,reached,"
               "entropy_lb_bits,encoded_bits,budget_bits,phases,wall_ms")

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_BAD_ARGS = 2
EXIT_IO = 3
EXIT_INSUFFICIENT = 4


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from exc


def _parse_start(text: str, n: int):
    if text in ("uniform", "zeros"):
        return text
    if text.startswith("file:"):
        point = SearchPoint.from_string(Path(text[5:]).read_text(encoding="utf-8").strip())
        if point.n != n:
            raise ParameterError(f"start point length {point.n} != n = {n}")
        return point
    raise ParameterError(f"unknown start spec {text!r} (use uniform, zeros, or file:<path>)")


@dataclass(frozen=True)
class SweepSpec:
    ns: tuple[int, ...]
    cs: tuple[Fraction, ...]
    reps: int
    function: str
    alpha: Fraction
    seed_base: int
    classify: bool
    max_steps: int | None
    start: str

    def __post_init__(self):
        if self.reps < 1:
            raise ParameterError("repetitions must be >= 1")
        if any(n < 2 for n in self.ns):
            raise ParameterError("sweep dimensions must be >= 2")
        if any(not 0 < c < min(self.ns) for c in self.cs):
            raise ParameterError("sweep needs 0 < c < min(n)")

    def cells(self):
        counter = 0
        for n in self.ns:
            for c in self.cs:
                for _ in range(self.reps):
                    yield n, c, self.seed_base + counter
                    counter += 1


def _phase_summary(traj) -> str:
    if not traj.reached_optimum:
        return "partial"
    stats = phase_stats(traj)
    return ";".join(f"{p.k}:{p.updates}:{p.steps}" for p in stats.phases) or "-"


def result_row(config: RunConfig, function_spec: str, traj, wall_ms: float) -> str:
    """One CSV line; encoded/budget cells are blank when not applicable."""
    lb = entropy.entropy_lower_bound(traj)
    encoded = budget_bits = ""
    t_bad = ""
    if traj.is_classified():
        t_bad = str(traj.bad_count())
        if traj.reached_optimum:
            f = config.resolved_function()
            encoded = str(codec.encode_trajectory(traj, f, config.alpha).length)
            budget_bits = str(codec.budget(traj, config.alpha))
    return ",".join((
        str(config.n), str(config.c), str(config.seed.seed), function_spec,
        str(config.alpha), str(traj.T), t_bad, str(traj.total_steps),
        str(int(traj.reached_optimum)), f"{lb:.6f}", encoded, budget_bits,
        _phase_summary(traj), f"{wall_ms:.3f}",
    ))


def _run_cell(payload) -> str:
    n, c, seed, function_spec, alpha, classify, max_steps, start = payload
    config = RunConfig(n=n, c=c, function=function_spec, seed=RngSeed(seed),
                       start=start, max_steps=max_steps, alpha=alpha, classify=classify)
    t0 = time.perf_counter()
    traj = engine.run(config)
    wall_ms = (time.perf_counter() - t0) * 1e3
    return result_row(config, function_spec, traj, wall_ms)


def _workers() -> int:
    env = os.environ.get("MCLIMB_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return os.cpu_count() or 1


def cmd_run(args) -> int:
    config = RunConfig(
        n=args.n, c=args.c, function=args.function, seed=RngSeed(args.seed),
        start=_parse_start(args.start, args.n), max_steps=args.max_steps,
        alpha=args.alpha, classify=args.classify == "on",
    )
    t0 = time.perf_counter()
    traj = engine.run(config)
    wall_ms = (time.perf_counter() - t0) * 1e3
    row = result_row(config, args.function, traj, wall_ms)
    print(CSV_COLUMNS)
    print(row)
    if args.out:
        _write_rows(args.out, [row], f"run {args.function} n={args.n}")
    if args.trace:
        if not (traj.reached_optimum and traj.is_classified()):
            print("trace not written: needs a finished, classified run", file=sys.stderr)
            return EXIT_ASSERTION
        f = config.resolved_function()
        codec.write_trace(args.trace, codec.encode_trajectory(traj, f, config.alpha))
    return EXIT_OK


def _write_rows(path, rows, title: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# mclimb {title}\n")
        fh.write(f"# written {datetime.now(timezone.utc).isoformat()}\n")
        fh.write(CSV_COLUMNS + "\n")
        for row in rows:
            fh.write(row + "\n")
            fh.flush()


def cmd_sweep(args) -> int:
    spec = SweepSpec(
        ns=tuple(args.n), cs=tuple(args.c), reps=args.reps, function=args.function,
        alpha=args.alpha, seed_base=args.seed, classify=args.classify == "on",
        max_steps=args.max_steps, start=args.start,
    )
    payloads = [(n, c, seed, spec.function, spec.alpha, spec.classify,
                 spec.max_steps, spec.start) for n, c, seed in spec.cells()]
    workers = min(_workers(), len(payloads))
    try:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# mclimb sweep function={spec.function} reps={spec.reps}\n")
            fh.write(f"# written {datetime.now(timezone.utc).isoformat()}\n")
            fh.write(CSV_COLUMNS + "\n")
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    for row in pool.map(_run_cell, payloads, chunksize=4):
                        fh.write(row + "\n")
                        fh.flush()
            else:
                for payload in payloads:
                    fh.write(_run_cell(payload) + "\n")
                    fh.flush()
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {len(payloads)} rows to {args.out}")
    return EXIT_OK


def read_result_csv(path) -> list[dict]:
    rows = []
    header = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = line.split(",")
            continue
        rows.append(dict(zip(header, line.split(","))))
    if header is None:
        raise ParameterError(f"{path}: no CSV header found")
    return rows


def fit_loglog(ns, means, boot_rows=None, resamples: int = 1000, seed: int = 0):
    """Least-squares slope of log mean vs log n, with a bootstrap CI.

    boot_rows maps n to the raw per-run values; when given, runs are
    resampled within each n to produce the interval.
    """
    xs = np.log(np.asarray(ns, dtype=float))
    ys = np.log(np.asarray(means, dtype=float))
    slope = float(np.polyfit(xs, ys, 1)[0])
    ci = (slope, slope)
    if boot_rows:
        rng = np.random.default_rng(seed)
        slopes = []
        for _ in range(resamples):
            ys_b = []
            for n in ns:
                vals = np.asarray(boot_rows[n], dtype=float)
                ys_b.append(math.log(float(np.mean(rng.choice(vals, size=len(vals))))))
            slopes.append(float(np.polyfit(xs, ys_b, 1)[0]))
        ci = (float(np.percentile(slopes, 2.5)), float(np.percentile(slopes, 97.5)))
    return slope, ci


def cmd_fit(args) -> int:
    try:
        rows = read_result_csv(args.csv)
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    finished = [r for r in rows if r.get("reached") == "1"]
    by_n: dict[int, dict[str, list[float]]] = {}
    for r in finished:
        n = int(r["n"])
        slot = by_n.setdefault(n, {"T": [], "total_steps": []})
        slot["T"].append(float(r["T"]))
        slot["total_steps"].append(float(r["total_steps"]))
    ns = sorted(by_n)
    if len(ns) < 4:
        print(f"insufficient data: {len(ns)} distinct n values, need >= 4", file=sys.stderr)
        return EXIT_INSUFFICIENT
    for col in ("T", "total_steps"):
        means = [float(np.mean(by_n[n][col])) for n in ns]
        boot = {n: by_n[n][col] for n in ns}
        slope, ci = fit_loglog(ns, means, boot)
        flag = ""
        if ci[0] > 1.0:
            flag = "  [exceeds linear: log-factor correction likely]"
        print(f"{col}: exponent={slope:.4f} ci95=[{ci[0]:.4f},{ci[1]:.4f}]{flag}")
    return EXIT_OK


ORACLE_CSV = ("n,k,c,alpha,function,p_keep,e_flips_keep,e_up_keep,e_down_keep,"
              "p_good,p_bad,e_gain_good,e_gain_bad,entropy_bits,e_log2_binom_keep,checks_ok")


def oracle_cell_checks(rep, slack: float = 1e-9) -> list[str]:
    """Names of violated single-round inequalities for one oracle report."""
    n, k = rep.y.n, rep.y.ones
    c = float(rep.c)
    failures = []
    if float(rep.e_flips_keep) > (1 + c) * math.exp(c) + slack:
        failures.append("flips_keep_bound")
    if rep.entropy_bits < rep.e_log2_binom_keep - slack:
        failures.append("entropy_vs_logbinom")
    if rep.e_down_keep > rep.c * k / n + slack:
        failures.append("down_keep_bound")
    if rep.e_up_keep < 1 - slack:
        failures.append("up_keep_floor")
    alpha = rep.alpha
    if rep.c <= 1 / (1 - alpha):
        if rep.e_gain_bad is not None and float(rep.e_gain_bad) < 1 - c - slack:
            failures.append("gain_bad_floor")
        good_floor = (1 - c / n) ** (float(alpha) * n) * (1 - (1 - float(alpha)) * c)
        if rep.e_gain_good is not None and float(rep.e_gain_good) < good_floor - slack:
            failures.append("gain_good_floor")
    return failures


def default_oracle_state(n: int, k: int) -> SearchPoint:
    # ones packed at the low indices leaves the high-weight zeros that
    # provoke bad updates on heavy-tailed functions
    return SearchPoint.from_bits(n, (1 << k) - 1)


def cmd_oracle(args) -> int:
    rows = []
    failures = 0
    cells = 0
    for spec in args.functions:
        for n in args.n:
            f = parse_function(spec, n)
            for k in range(1, n):
                y = default_oracle_state(n, k)
                for c in args.c:
                    for alpha in args.alpha:
                        rep = entropy.oracle_report(y, c, f, alpha)
                        bad = oracle_cell_checks(rep)
                        cells += 1
                        ok = not bad
                        failures += not ok
                        rows.append(",".join((
                            str(n), str(k), str(c), str(alpha), spec,
                            str(rep.p_keep), str(rep.e_flips_keep), str(rep.e_up_keep),
                            str(rep.e_down_keep), str(rep.p_good), str(rep.p_bad),
                            str(rep.e_gain_good), str(rep.e_gain_bad),
                            f"{rep.entropy_bits:.9f}", f"{rep.e_log2_binom_keep:.9f}",
                            "ok" if ok else "+".join(bad),
                        )))
                        if not ok:
                            print(f"FAIL n={n} k={k} c={c} alpha={alpha} f={spec}: {bad}")
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(ORACLE_CSV + "\n")
                fh.write("\n".join(rows) + "\n")
        except OSError as exc:
            print(f"I/O failure: {exc}", file=sys.stderr)
            return EXIT_IO
    print(f"oracle: {cells - failures}/{cells} cells ok")
    return EXIT_OK if failures == 0 else EXIT_ASSERTION


def cmd_verify_appendix_b(args) -> int:
    failures = 0
    cells = 0
    for n in args.n:
        ks = list(range(n)) if n <= args.k_limit else \
            sorted({round(i * (n - 1) / (args.k_samples - 1)) for i in range(args.k_samples)})
        for k in ks:
            for c in args.c:
                rep = entropy.verify_appendixB(n, k, c)
                cells += 1
                if not rep.bound_holds:
                    failures += 1
                    print(f"FAIL n={n} k={k} c={c}: maximizer {rep.maximizer}")
    print(f"appendix-b: {cells - failures}/{cells} cells ok")
    return EXIT_OK if failures == 0 else EXIT_ASSERTION


def cmd_codec_check(args) -> int:
    failures = 0
    runs = 0
    seed = args.seed
    for spec in args.functions:
        for n in args.n:
            f = parse_function(spec, n)
            for c in args.c:
                for _ in range(args.reps):
                    config = RunConfig(n=n, c=c, function=f, seed=RngSeed(seed),
                                       alpha=args.alpha, classify=True)
                    seed += 1
                    traj = engine.run(config)
                    runs += 1
                    if not traj.reached_optimum:
                        failures += 1
                        print(f"FAIL {spec} n={n} c={c} seed={seed - 1}: cap hit")
                        continue
                    trace = codec.encode_trajectory(traj, f, args.alpha)
                    back = codec.decode_trajectory(trace, f, n, args.alpha)
                    bound = codec.budget(traj, args.alpha)
                    if not traj.same_updates(back):
                        failures += 1
                        print(f"FAIL {spec} n={n} c={c} seed={seed - 1}: round-trip mismatch")
                    elif trace.length > bound:
                        failures += 1
                        print(f"FAIL {spec} n={n} c={c} seed={seed - 1}: "
                              f"length {trace.length} > budget {bound}")
    print(f"codec: {runs - failures}/{runs} trajectories ok")
    return EXIT_OK if failures == 0 else EXIT_ASSERTION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mclimb",
        description="(1+1)-EA workbench on strictly monotone pseudo-Boolean functions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single instrumented run, one CSV row")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--c", type=_fraction, default=Fraction(1))
    p.add_argument("--function", default="onemax")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=_fraction, default=Fraction(1, 4))
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--start", default="uniform", help="uniform | zeros | file:<path>")
    p.add_argument("--classify", choices=("on", "off"), default="on")
    p.add_argument("--out", default=None, help="also append the row to this CSV file")
    p.add_argument("--trace", default=None, help="write the encoded trace here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid of runs to a CSV file")
    p.add_argument("--n", type=int, nargs="+", required=True)
    p.add_argument("--c", type=_fraction, nargs="+", default=[Fraction(1)])
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--function", default="onemax")
    p.add_argument("--seed", type=int, default=0, help="seed base; cells use seed+counter")
    p.add_argument("--alpha", type=_fraction, default=Fraction(1, 4))
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--start", default="uniform", choices=("uniform", "zeros"))
    p.add_argument("--classify", choices=("on", "off"), default="on")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="log-log scaling exponents from a sweep CSV")
    p.add_argument("--csv", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("oracle", help="exact single-round inequality grid")
    p.add_argument("--n", type=int, nargs="+", default=list(range(3, 11)))
    p.add_argument("--c", type=_fraction, nargs="+",
                   default=[Fraction(1, 2), Fraction(1), Fraction(13, 10)])
    p.add_argument("--alpha", type=_fraction, nargs="+", default=[Fraction(1, 4)])
    p.add_argument("--functions", nargs="+",
                   default=["onemax", "plugin:randlin1", "plugin:randlin2",
                            "plugin:randlin3", "expw:2"])
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("verify-appendix-b", help="offspring-count product maximizer check")
    p.add_argument("--n", type=int, nargs="+", default=[20, 100, 1000])
    p.add_argument("--c", type=_fraction, nargs="+",
                   default=[Fraction(1, 2), Fraction(1), Fraction(13, 10)])
    p.add_argument("--k-limit", type=int, default=100,
                   help="enumerate every k for n up to this")
    p.add_argument("--k-samples", type=int, default=50,
                   help="evenly spaced k values above k-limit")
    p.set_defaults(func=cmd_verify_appendix_b)

    p = sub.add_parser("codec-check", help="round-trip and budget check on seeded runs")
    p.add_argument("--n", type=int, nargs="+", default=[16, 64, 256])
    p.add_argument("--c", type=_fraction, nargs="+",
                   default=[Fraction(4, 5), Fraction(1), Fraction(6, 5)])
    p.add_argument("--functions", nargs="+",
                   default=["onemax", "plugin:randlin1", "plugin:randlin2",
                            "plugin:randlin3", "expw:2"])
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--alpha", type=_fraction, default=Fraction(1, 4))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_codec_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"bad arguments: {exc}", file=sys.stderr)
        return EXIT_BAD_ARGS
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
