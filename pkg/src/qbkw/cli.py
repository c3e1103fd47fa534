"""Command-line front end: gen, solve, estimate, subsetsum, bench."""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import io as fio
from .estimate import (
    PRESETS,
    EstimateInfeasible,
    emit_contours,
    estimate_bkw,
    estimate_row,
    table_instances,
    write_csv,
)
from .gen import as_generator, sample_lwe, sample_secret, sample_uniform
from .model import (
    Bernoulli,
    Binary,
    BoundedPerCoordinate,
    DiscreteGaussian,
    LweParams,
    Uniform,
    regev_stddev,
)
from .reduce import PlanInfeasible, ReductionPlan, plan as make_plan

EXIT_OK, EXIT_INFEASIBLE, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------
# configuration


def _parse_secret(name: str, n: int):
    if name == "uniform":
        return Uniform()
    if name == "binary":
        return Binary()
    if name.startswith("bounded:"):
        bound = int(name.split(":", 1)[1])
        return BoundedPerCoordinate(tuple([bound] * n))
    raise CliError(f"unknown secret model {name!r}", EXIT_INFEASIBLE)


def resolve(args: argparse.Namespace, keys) -> dict:
    """Flags override the config file; missing keys fall back to defaults."""
    cfg = {}
    if getattr(args, "config", None):
        try:
            cfg.update(fio.read_config(args.config))
        except (OSError, fio.FormatError) as exc:
            raise CliError(f"cannot read config: {exc}", EXIT_IO) from exc
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
        elif key in cfg:
            cfg[key] = _coerce(cfg[key])
    return cfg


def _coerce(text):
    if not isinstance(text, str):
        return text
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _params(cfg: dict, n: int | None = None, q: int | None = None) -> LweParams:
    n = int(n if n is not None else cfg.get("n", 32))
    mode = cfg.get("mode", "general")
    if mode == "lpn":
        p = float(cfg.get("p", 0.125))
        return LweParams(n, 2, Bernoulli(p))
    q = int(q if q is not None else cfg.get("q", 1031))
    if n < 2 or q < 2:
        raise CliError("need n >= 2 and q >= 2", EXIT_INFEASIBLE)
    sigma = cfg.get("sigma")
    sigma = regev_stddev(n, q) if sigma in (None, "", "regev") else float(sigma)
    cfg["sigma"] = sigma
    try:
        return LweParams(n, q, DiscreteGaussian(sigma), _parse_secret(cfg.get("secret", "uniform"), n))
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INFEASIBLE) from exc


def _save_config(out: Path, cfg: dict, command: str) -> None:
    full = {"command": command, **{k: v for k, v in cfg.items() if k != "config"}}
    fio.write_config(out.with_name(out.name + ".config"), full)


def _auto_plan(params: LweParams, cfg: dict, dim: int | None = None) -> ReductionPlan:
    mode = cfg.get("mode", "general")
    if dim is not None and dim != params.n:
        params = LweParams(dim, params.q, params.noise, _shrink_secret(params.secret, dim))
    if mode == "lpn":
        return make_plan(params, mode="lpn", model="practical")
    default_tail = 0 if cfg.get("finisher") == "distinguish" else 2
    tail = min(int(cfg.get("tail", default_tail)), params.n)
    knobs = PRESETS[cfg.get("knobs", "reasonable")]
    return make_plan(params, mode=mode, model="practical", reducer=cfg.get("reducer", "exact"),
                     tail=tail, knobs=knobs)


def _shrink_secret(secret, dim):
    if isinstance(secret, BoundedPerCoordinate):
        return BoundedPerCoordinate(tuple(secret.bounds[:dim]))
    return secret


# --------------------------------------------------------------------------
# commands


GEN_KEYS = ("n", "q", "sigma", "p", "secret", "m", "seed", "threads", "mode", "out", "uniform", "packed", "knobs", "tail",
            "finisher")


def cmd_gen(args) -> int:
    cfg = resolve(args, GEN_KEYS)
    cfg.setdefault("seed", 0)
    cfg.setdefault("secret", "uniform")
    cfg.setdefault("mode", "general")
    params = _params(cfg)
    out = Path(cfg.get("out") or "samples.bkws")
    m = cfg.get("m")
    if m in (None, "", "auto"):
        m = _auto_plan(params, cfg).m
    m = int(m)
    cfg["m"] = m
    gen = as_generator(int(cfg["seed"]))
    s = sample_secret(params, gen)
    if cfg.get("uniform"):
        samples = sample_uniform(params, m, gen)
    else:
        samples = sample_lwe(params, s, m, gen)
    fio.write_samples(out, samples, packed=bool(cfg.get("packed")))
    fio.write_key(out.with_name(out.name + ".key"), s)
    _save_config(out, cfg, "gen")
    print(json.dumps({"out": str(out), "n": params.n, "q": params.q, "m": m}))
    return EXIT_OK


SOLVE_KEYS = ("sigma", "p", "secret", "seed", "threads", "plan", "mode", "out", "knobs", "tail", "finisher", "key", "log", "reducer")


def cmd_solve(args) -> int:
    from .solve import solve_lpn_decision, solve_lwe

    cfg = resolve(args, SOLVE_KEYS)
    cfg.setdefault("seed", 0)
    cfg.setdefault("secret", "uniform")
    cfg.setdefault("mode", "general")
    cfg.setdefault("plan", "auto")
    cfg["samples"] = args.samples
    samples = fio.read_samples(args.samples)
    if samples.q == 2:
        cfg["mode"] = "lpn"
    params = _params(cfg, samples.dim, samples.q)
    key = fio.read_key(cfg["key"]) if cfg.get("key") else None
    log_stream = open(cfg["log"], "w") if cfg.get("log") else sys.stderr
    log = fio.jsonl_logger(log_stream)
    gen = as_generator(int(cfg["seed"]))
    finisher = cfg.get("finisher") or ("distinguish" if params.q == 2 else "find_secret")
    cfg["finisher"] = finisher
    try:
        if cfg["plan"] == "auto":
            plan = _auto_plan(params, cfg)
        else:
            with open(cfg["plan"]) as fh:
                plan = ReductionPlan.from_dict(json.load(fh))
        if plan.n != samples.dim or plan.q != samples.q:
            raise CliError("plan does not match the sample file", EXIT_INFEASIBLE)
        if plan.m and len(samples) > plan.m:
            samples = samples[: plan.m]
        report: dict = {"n": samples.dim, "q": samples.q, "count": len(samples), "plan": plan.to_dict()}
        if params.q == 2 and finisher == "distinguish":
            verdict = solve_lpn_decision(params.noise.p, samples, plan=plan, log=log)
            report["verdict"] = verdict.decision.value
            report["statistic"] = verdict.statistic
        elif finisher == "distinguish":
            verdict = solve_lwe(samples, plan, "distinguish", log=log, rng=gen, secret=key)
            report["verdict"] = verdict.decision.value
            report["statistic"] = verdict.statistic
        else:
            cache: dict = {}

            def replan(dim):
                if dim not in cache:
                    cache[dim] = _auto_plan(params, cfg, dim)
                return cache[dim]

            res = solve_lwe(samples, plan, "find_secret", replan=replan, log=log, rng=gen, secret=key)
            report["secret"] = [int(v) for v in np.mod(res.s, samples.q)]
            report["score"] = res.score
            if key is not None:
                report["matches_key"] = bool(np.array_equal(np.mod(res.s, samples.q), np.mod(key, samples.q)))
    finally:
        if log_stream is not sys.stderr:
            log_stream.close()
    out = Path(cfg.get("out") or (args.samples + ".report.json"))
    cfg["out"] = str(out)
    with fio.atomic_write(out, "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True, default=fio._jsonable)
        fh.write("\n")
    _save_config(out, cfg, "solve")
    summary = {k: report[k] for k in ("verdict", "secret", "matches_key") if k in report}
    print(json.dumps(summary))
    if key is not None and report.get("matches_key") is False:
        return EXIT_SOLVER
    return EXIT_OK


EST_KEYS = ("n", "q", "sigma", "secret", "knobs", "out", "table", "contours", "seed", "threads")


def cmd_estimate(args) -> int:
    cfg = resolve(args, EST_KEYS)
    cfg.setdefault("knobs", "reasonable")
    knobs = PRESETS[cfg["knobs"]]
    out = cfg.get("out")
    if cfg.get("contours"):
        text = emit_contours(knobs=knobs)
        _emit(out, text, cfg, "estimate")
        return EXIT_OK
    if cfg.get("n") is not None:
        n, q = int(cfg["n"]), int(cfg.get("q", 4099))
        sigma = cfg.get("sigma")
        sigma = regev_stddev(n, q) if sigma in (None, "", "regev") else float(sigma)
        jobs = [(n, q, sigma, cfg.get("secret", "uniform"))]
    else:
        table = str(cfg.get("table", "1"))
        labels = {"1": ("regev",), "2": ("lindner-peikert",), "3": ("binary",),
                  "all": ("regev", "lindner-peikert", "binary")}[table]
        jobs = [(n, q, s, sec) for lab, n, q, s, sec, _ in table_instances() if lab in labels]
    rows = []
    for n, q, sigma, secret in jobs:
        row = estimate_row(n, q, sigma, secret)
        if knobs is not PRESETS["reasonable"]:
            alt = estimate_bkw(n, q, sigma, secret, knobs)
            row.update(k=alt.k, log_m=alt.log_m, log_N=alt.log_N)
        row["sigma"] = round(sigma, 6)
        rows.append(row)
    buf = _StringSink()
    write_csv(rows, buf)
    _emit(out, buf.text, cfg, "estimate")
    return EXIT_OK


class _StringSink:
    def __init__(self):
        self.text = ""

    def write(self, s):
        self.text += s


def _emit(out, text: str, cfg: dict, command: str) -> None:
    if out:
        path = Path(out)
        with fio.atomic_write(path, "w") as fh:
            fh.write(text)
        _save_config(path, cfg, command)
    else:
        sys.stdout.write(text)


SUBSET_KEYS = ("n", "seed", "out", "instance", "bits", "modular", "threads")


def cmd_subsetsum(args) -> int:
    from .lattice import SubsetSumFailure, solve_subset_sum

    cfg = resolve(args, SUBSET_KEYS)
    cfg.setdefault("seed", 0)
    gen = as_generator(int(cfg["seed"]))
    if cfg.get("instance"):
        with open(cfg["instance"]) as fh:
            lines = [ln.split("#", 1)[0].strip() for ln in fh]
        lines = [ln for ln in lines if ln]
        a = [int(v) for v in lines[0].split()]
        t = int(lines[1])
        M = int(lines[2]) if len(lines) > 2 else None
        planted = None
    else:
        n = int(cfg.get("n", 8))
        bits = int(cfg.get("bits", 32))
        M = 1 << bits
        a = [int(v) for v in gen.integers(0, M, size=n)]
        planted = gen.integers(0, 2, size=n)
        if not planted.any():
            planted[0] = 1
        t = sum(x * int(y) for x, y in zip(a, planted))
        if cfg.get("modular"):
            t %= M
    try:
        res = solve_subset_sum(a, t, M=M, modular=bool(cfg.get("modular")), rng=gen)
    except SubsetSumFailure as exc:
        raise CliError(f"subset sum not solved: {exc}", EXIT_SOLVER) from exc
    total = sum(int(x) * int(y) for x, y in zip(a, res.s))
    ok = total == t if not cfg.get("modular") else (total - t) % M == 0
    report = {"a": a, "t": t, "M": M, "s": [int(v) for v in res.s], "verified": bool(ok)}
    if planted is not None:
        report["planted"] = [int(v) for v in planted]
    text = json.dumps(report) + "\n"
    _emit(cfg.get("out"), text, cfg, "subsetsum")
    return EXIT_OK if ok else EXIT_SOLVER


BENCH_KEYS = ("n", "m", "seed", "threads", "out", "repeat")

REFERENCE_NORMS_PER_SECOND = 9e13 / (13 * 3600)


def bench_norms(dim: int, count: int, gen, repeat: int = 3, bucket: int = 256) -> float:
    """Distinct pairwise squared norms per second inside buckets of 16-bit vectors.

    Each bucket's pair norms come from one Gram product; entries stay below
    2^24, so float32 arithmetic is exact.
    """
    buckets = max(1, count // bucket)
    X = gen.integers(-(1 << 7), 1 << 7, size=(buckets, bucket, dim), dtype=np.int16).astype(np.float32)
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        for lo in range(0, buckets, 32):
            chunk = X[lo : lo + 32]
            gram = np.matmul(chunk, chunk.transpose(0, 2, 1))
            sq = np.einsum("bij,bij->bi", chunk, chunk)
            norms = sq[:, :, None] + sq[:, None, :] - 2 * gram
            norms.min()
        best = min(best, time.perf_counter() - t0)
    return buckets * bucket * (bucket - 1) / 2 / best


def bench_direct_norms(dim: int, count: int, gen, repeat: int = 3) -> float:
    """Squared norms per second of explicit 16-bit difference vectors."""
    X = gen.integers(-(1 << 7), 1 << 7, size=(count, dim), dtype=np.int16)
    Y = gen.integers(-(1 << 7), 1 << 7, size=(count, dim), dtype=np.int16)
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        diff = X - Y
        np.einsum("ij,ij->i", diff, diff, dtype=np.int32).sum()
        best = min(best, time.perf_counter() - t0)
    return count / best


def bench_reduce(n: int, q: int, m: int, gen) -> float:
    from .reduce import reduce_step

    params = LweParams(n, q, DiscreteGaussian(regev_stddev(n, q)), Binary())
    L = sample_lwe(params, sample_secret(params, gen), m, gen)
    t0 = time.perf_counter()
    reduce_step(L, 1.0, 0, 2)
    return m / (time.perf_counter() - t0)


def cmd_bench(args) -> int:
    cfg = resolve(args, BENCH_KEYS)
    cfg.setdefault("seed", 0)
    gen = as_generator(int(cfg["seed"]))
    dim = int(cfg.get("n", 32))
    count = int(cfg.get("m", 1 << 20))
    repeat = int(cfg.get("repeat", 3))
    threads = int(cfg.get("threads", 1))
    rate = bench_norms(dim, count, gen, repeat)
    direct = bench_direct_norms(dim, min(count, 1 << 20), gen, repeat)
    reduce_rate = bench_reduce(dim, 1031, min(count, 1 << 18), gen)
    per16 = rate * 16 / max(threads, 1)
    lines = [
        "metric,value",
        f"norm_dim,{dim}",
        f"norms_per_second,{rate:.4g}",
        f"threads,{threads}",
        f"norms_per_second_16_cores_scaled,{per16:.4g}",
        f"reference_norms_per_second,{REFERENCE_NORMS_PER_SECOND:.4g}",
        f"ratio_to_reference,{per16 / REFERENCE_NORMS_PER_SECOND:.3g}",
        f"direct_norms_per_second,{direct:.4g}",
        f"reduce_samples_per_second,{reduce_rate:.4g}",
    ]
    _emit(cfg.get("out"), "\n".join(lines) + "\n", cfg, "bench")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out")


def _lwe_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma", help="error standard deviation, or 'regev'")
    p.add_argument("--p", type=float, help="LPN error rate")
    p.add_argument("--secret", help="uniform | binary | bounded:B")
    p.add_argument("--mode", choices=("general", "smallmod", "lpn"))
    p.add_argument("--knobs", choices=sorted(PRESETS))
    p.add_argument("--tail", type=int, help="coordinates left to the Fourier finisher")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qbkw", description="BKW-style LWE/LPN solver toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a sample file and its key")
    _common(g)
    _lwe_flags(g)
    g.add_argument("--n", type=int)
    g.add_argument("--q", type=int)
    g.add_argument("--m", help="sample count, or 'auto' for the planner's")
    g.add_argument("--uniform", action="store_true", default=None, help="uniform samples instead of LWE")
    g.add_argument("--packed", action="store_true", default=None, help="bit-pack residues")
    g.add_argument("--finisher", choices=("distinguish", "find_secret"), help="finisher the automatic m is sized for")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run the reduction pipeline on a sample file")
    _common(s)
    _lwe_flags(s)
    s.add_argument("samples")
    s.add_argument("--plan", help="'auto' or a plan JSON file")
    s.add_argument("--finisher", choices=("distinguish", "find_secret"))
    s.add_argument("--reducer", choices=("exact", "greedy"))
    s.add_argument("--key", help="key file, used for diagnostics and the exit status")
    s.add_argument("--log", help="JSON-lines diagnostics file (default stderr)")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("estimate", help="cost tables and contour grids")
    _common(e)
    e.add_argument("--n", type=int)
    e.add_argument("--q", type=int)
    e.add_argument("--sigma")
    e.add_argument("--secret")
    e.add_argument("--knobs", choices=sorted(PRESETS))
    e.add_argument("--table", choices=("1", "2", "3", "all"))
    e.add_argument("--contours", action="store_true", default=None)
    e.set_defaults(func=cmd_estimate)

    ss = sub.add_parser("subsetsum", help="solve a (planted) subset-sum instance")
    _common(ss)
    ss.add_argument("--n", type=int)
    ss.add_argument("--bits", type=int, help="log2 of the coefficient bound M")
    ss.add_argument("--instance", help="text file: coefficients, target, optional modulus")
    ss.add_argument("--modular", action="store_true", default=None)
    ss.set_defaults(func=cmd_subsetsum)

    b = sub.add_parser("bench", help="fixed-point norm throughput")
    _common(b)
    b.add_argument("--n", type=int, help="vector dimension")
    b.add_argument("--m", type=int, help="vectors per run")
    b.add_argument("--repeat", type=int)
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (PlanInfeasible, EstimateInfeasible) as exc:
        print(f"error: infeasible parameters: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (OSError, fio.FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # solver-side failures
        from .solve import PipelineExhausted, SolverFailure

        if isinstance(exc, (PipelineExhausted, SolverFailure, ValueError, RuntimeError)):
            print(f"error: solver failure: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        raise


if __name__ == "__main__":
    sys.exit(main())
