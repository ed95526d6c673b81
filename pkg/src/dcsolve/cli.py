"""``dcsolve`` command line: single solves, the prox-vs-CCCP study, shape from
shading and the diagnostics battery.

Exit codes: 0 success, 1 configuration or usage error, 2 a solve diverged
(``check`` returns 1 when any check fails).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import diagnostics as dg
from .core import SolverConfig, Status, UsageError, objective_float
from .data import (
    PgmParseError,
    estimation_error,
    gen_mixture_samples,
    gen_regression,
    hemisphere,
    load_pgm,
    render_sfs,
    rng_for,
    write_csv,
    write_pgm,
)
from .problems import (
    BestSubsetInstance,
    MixtureInstance,
    SfsInstance,
    TukeyInstance,
    default_lambda,
    make_best_subset,
    make_gaussian_mixture_nll,
    make_sfs,
    make_toy,
    make_tukey,
    with_box,
    with_l1,
    TOYS,
)
from .solvers import ALGORITHMS, CccpConfig, cccp, lmo_ball, lmo_box, prox_dc, solve

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2

SUMMARY_HEADER = ("sparsity", "algo", "metric", "mean", "stderr", "n_reps")
REPLICATE_HEADER = ("sparsity", "rep", "algo", "runtime_s", "estimation_error", "iterations",
                    "status")


class ConfigError(UsageError):
    pass


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        # the message carries "(at line L, column C)"
        raise ConfigError(f"config parse error in {path}: {exc}") from None


def _section(cfg, key) -> dict:
    val = cfg.get(key, {})
    if not isinstance(val, dict):
        raise ConfigError(f"[{key}] must be a table")
    return val


def solver_config(sec: dict, seed: int) -> SolverConfig:
    known = {"alpha", "beta", "c0", "max_iter", "tol"}
    kw = {k: sec[k] for k in known if k in sec}
    return SolverConfig(seed=seed, **kw)


# problems from config


def _x0_noise(seed, dim, scale=0.1):
    return scale * rng_for(seed, 7).standard_normal(dim)


def build_problem(table: dict, seed: int):
    """Return ``(problem, x0, extras)`` for a ``[problem]`` table."""
    name = table.get("name")
    if not isinstance(name, str):
        raise ConfigError("[problem] needs a string 'name'")
    params = dict(table.get("params", {}))
    extras = {}
    if name in TOYS:
        p = make_toy(name, **params)
        x0 = _x0_noise(seed, p.dim, 1.0)
    elif name == "best_subset":
        n, dim = int(params.get("n", 40)), int(params.get("p", 10))
        noise = float(params.get("noise_sd", 0.5))
        ds = gen_regression(n, dim, float(params.get("rho", 0.7)), int(params.get("s_star", 3)),
                            noise, seed)
        lam = float(params.get("lam", default_lambda(n, dim, noise)))
        inst = BestSubsetInstance(ds.X, ds.y, lam, int(params.get("s", params.get("s_star", 3))))
        p = make_best_subset(inst)
        x0 = _x0_noise(seed, dim)
        extras = {"xstar": ds.xstar, "lam": lam}
    elif name == "tukey":
        n, d = int(params.get("n", 100)), int(params.get("d", 3))
        rng = rng_for(seed, 5)
        Z = rng.standard_normal((n, d))
        mu = rng.standard_normal(d)
        y = Z @ mu + 0.1 * rng.standard_normal(n)
        n_out = int(round(float(params.get("outlier_frac", 0.1)) * n))
        y[:n_out] += 10.0
        p = make_tukey(TukeyInstance(Z, y, float(params.get("lam", 1.0))))
        x0 = np.zeros(d)
        extras = {"mu_true": mu}
    elif name == "sfs":
        light = tuple(params.get("light", (0.0, 0.0, 1.0)))
        if "image" in params:
            img = load_pgm(params["image"])
        else:
            z = hemisphere(int(params.get("m", 16)), int(params.get("n", 16)),
                           height=float(params.get("height", 4.0)))
            img = render_sfs(z, light)
        p = make_sfs(SfsInstance(img, light=light))
        x0 = _x0_noise(seed, p.dim)
        extras = {"shape": img.shape}
    elif name == "mixture":
        y = gen_mixture_samples(int(params.get("n", 200)), float(params.get("pi", 0.4)),
                                float(params.get("mu0", -1.0)), float(params.get("sd0", 0.5)),
                                float(params.get("mu1", 1.5)), float(params.get("sd1", 0.8)), seed)
        inst = MixtureInstance(y, float(params.get("R0", 10.0)), float(params.get("R1", 10.0)),
                               float(params.get("eps", 1e-3)))
        p = make_gaussian_mixture_nll(inst)
        x0 = np.array([0.0, -0.5, 0.5, -0.5, 0.5])
    else:
        raise ConfigError(f"unknown problem {name!r}")
    if "l1" in table:
        p = with_l1(p, float(table["l1"]))
    if "box" in table:
        lo, hi = table["box"]
        p = with_box(p, lo, hi)
    if "x0" in table:
        x0 = np.asarray(table["x0"], dtype=float)
    return p, x0, extras


def build_lmo(sec: dict):
    kind = sec.get("kind")
    if kind == "box":
        return lmo_box(sec["lo"], sec["hi"])
    if kind == "ball":
        return lmo_ball(sec["center"], float(sec["radius"]))
    raise ConfigError(f"[solver.lmo] kind must be 'box' or 'ball', got {kind!r}")


# commands


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    return str(o)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    seed = int(args.seed if args.seed is not None else cfg.get("seed", 0))
    p, x0, extras = build_problem(_section(cfg, "problem"), seed)
    ssec = _section(cfg, "solver")
    algo = ssec.get("algorithm")
    if algo not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")
    lmo = None
    if algo == "frank_wolfe":
        lmo = build_lmo(_section(ssec, "lmo"))
        if ssec.get("c0") == "estimate":
            def sampler(rng, lmo=lmo, d=p.dim):
                a = lmo(rng.standard_normal(d))
                b = lmo(rng.standard_normal(d))
                t = rng.random()
                return t * a + (1 - t) * b, lmo(rng.standard_normal(d))

            est = dg.estimate_curvature(p, sampler, 10_000, seed)
            warnings.warn("c0 set from a sampled curvature estimate; this is a lower bound "
                          "and the Frank-Wolfe rate guarantee needs an upper bound", stacklevel=1)
            ssec = dict(ssec, c0=max(est, 1e-12))
    scfg = solver_config(ssec, seed)
    inner = CccpConfig(**_section(ssec, "inner"))
    out = args.out or _section(cfg, "output").get("dir", "out")
    os.makedirs(out, exist_ok=True)
    start = time.perf_counter()
    tr = solve(algo, p, x0, scfg, lmo=lmo, inner=inner)
    wall = time.perf_counter() - start
    write_csv(os.path.join(out, "trace.csv"), tr)
    summary = {
        "problem": p.name,
        "algorithm": algo,
        "final_f": float(tr.f_val[-1]),
        "final_residual": float(tr.grad_norm[-1]),
        "iterations": tr.n_iter,
        "wall_time_s": wall,
        "status": str(tr.status),
        "seed": seed,
    }
    if "xstar" in extras and np.any(tr.x_final):
        summary["estimation_error"] = estimation_error(tr.x_final, extras["xstar"])
    _write_json(os.path.join(out, "summary.json"), summary)
    print(json.dumps(summary, default=_json_default))
    return EXIT_DIVERGED if tr.status is Status.DIVERGED else EXIT_OK


def compare_settings(cfg: dict, args) -> dict:
    sec = _section(cfg, "compare")
    s = {
        "n": int(sec.get("n", 190)),
        "p": int(sec.get("p", 300)),
        "rho": float(sec.get("rho", 0.7)),
        "s_star": int(sec.get("s_star", 10)),
        "sparsity": [int(v) for v in sec.get("sparsity", [5, 10, 20, 40])],
        "reps": int(sec.get("reps", 100)),
        "noise_sd": float(sec.get("noise_sd", 0.5)),
        "tol": float(sec.get("tol", 1e-8)),
        "max_iter": int(sec.get("max_iter", 1000)),
        "inner_max_iter": int(sec.get("inner_max_iter", 1000)),
        "init_sd": float(sec.get("init_sd", 0.1)),
        "seed": int(cfg.get("seed", 0)),
    }
    if args.reps is not None:
        s["reps"] = int(args.reps)
    if args.seed is not None:
        s["seed"] = int(args.seed)
    s["lam"] = float(sec.get("lam", default_lambda(s["n"], s["p"], s["noise_sd"])))
    s["lam_rule"] = "given" if "lam" in sec else "2*noise_sd*sqrt(2*n*log(p))"
    if s["reps"] < 1 or not s["sparsity"]:
        raise ConfigError("need reps >= 1 and a nonempty sparsity grid")
    return s


def _replicate(task):
    """One replication: a fresh dataset, a shared start, both algorithms at every sparsity."""
    st, rep = task
    ds = gen_regression(st["n"], st["p"], st["rho"], st["s_star"], st["noise_sd"], st["seed"], rep)
    x0 = st["init_sd"] * rng_for(st["seed"], rep, 3).standard_normal(st["p"])
    cfg = SolverConfig(max_iter=st["max_iter"], tol=st["tol"])
    inner = CccpConfig(inner_max_iter=st["inner_max_iter"], inner_tol=st["tol"])
    rows = []
    for s in st["sparsity"]:
        p = make_best_subset(BestSubsetInstance(ds.X, ds.y, st["lam"], s))
        for algo in ("prox", "cccp"):
            t0 = time.perf_counter()
            tr = prox_dc(p, x0, cfg) if algo == "prox" else cccp(p, x0, cfg, inner)
            wall = time.perf_counter() - t0
            err = estimation_error(tr.x_final, ds.xstar) if np.any(tr.x_final) else math.nan
            rows.append((s, rep, algo, wall, err, tr.n_iter, str(tr.status)))
    return rows


def run_compare(st: dict, workers: int = 1) -> list:
    tasks = [(st, rep) for rep in range(st["reps"])]
    if workers <= 1:
        results = [_replicate(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_replicate, tasks))
    return [row for rows in results for row in rows]


def summarize(rows, sparsity) -> list:
    out = []
    for s in sparsity:
        for algo in ("prox", "cccp"):
            sel = [r for r in rows if r[0] == s and r[2] == algo]
            for metric, col in (("runtime_s", 3), ("estimation_error", 4)):
                v = np.array([r[col] for r in sel], dtype=float)
                se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
                out.append((s, algo, metric, float(v.mean()), se, int(v.size)))
    return out


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def cmd_compare(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    st = compare_settings(cfg, args)
    out = args.out or _section(cfg, "output").get("dir", "out")
    os.makedirs(out, exist_ok=True)
    rows = run_compare(st, max(1, int(args.workers or 1)))
    summary = summarize(rows, st["sparsity"])
    write_rows(os.path.join(out, "summary.csv"), SUMMARY_HEADER, summary)
    write_rows(os.path.join(out, "replicates.csv"), REPLICATE_HEADER, rows)
    meta = dict(st, init="x0 = init_sd * N(0, I), keyed by (seed, rep); shared by both algorithms",
                noise="Gaussian, noise_sd is a default (not stated in the source protocol)",
                timing="monotonic clock around each solver call only")
    _write_json(os.path.join(out, "metadata.json"), meta)
    for r in summary:
        print(f"s={r[0]:<3d} {r[1]:<5s} {r[2]:<17s} mean={r[3]:.6g} stderr={r[4]:.3g} n={r[5]}")
    diverged = any(r[6] == str(Status.DIVERGED) for r in rows)
    return EXIT_DIVERGED if diverged else EXIT_OK


def _parse_light(text):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"light must be three comma-separated numbers, got {text!r}") from None
    if len(vals) != 3:
        raise UsageError(f"light must have three components, got {text!r}")
    return vals


def cmd_sfs(args) -> int:
    try:
        img = load_pgm(args.input)
    except PgmParseError as exc:
        raise UsageError(f"{args.input}: {exc}") from None
    light = _parse_light(args.light)
    p = make_sfs(SfsInstance(img, light=light))
    seed = int(args.seed or 0)
    m, n = img.shape
    z0 = 0.1 * rng_for(seed, 7).standard_normal(m * n)
    start = time.perf_counter()
    tr = solve("backtracking", p, z0, SolverConfig(max_iter=int(args.iters), tol=0.0, seed=seed))
    wall = time.perf_counter() - start
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    z = tr.x_final.reshape(m, n)
    np.savetxt(os.path.join(out, "height.csv"), z, delimiter=",", fmt="%.17g")
    span = float(z.max() - z.min())
    write_pgm(os.path.join(out, "height.pgm"), (z - z.min()) / span if span > 0 else np.zeros_like(z))
    write_csv(os.path.join(out, "trace.csv"), tr)
    summary = {"initial_f": float(tr.f_val[0]), "final_f": float(tr.f_val[-1]),
               "iterations": tr.n_iter, "wall_time_s": wall, "status": str(tr.status),
               "shape": [m, n], "light": list(light)}
    _write_json(os.path.join(out, "summary.json"), summary)
    print(json.dumps(summary))
    return EXIT_DIVERGED if tr.status is Status.DIVERGED else EXIT_OK


def cmd_check(args) -> int:
    from .suite import SUITES

    name = args.suite or "all"
    if name != "all" and name not in SUITES:
        raise UsageError(f"unknown suite {name!r}; choose from all, {', '.join(SUITES)}")
    names = list(SUITES) if name == "all" else [name]
    seed = int(args.seed or 0)
    ok = True
    for n in names:
        for r in SUITES[n](seed):
            print(r.line())
            ok &= r.passed
    return EXIT_OK if ok else EXIT_USAGE


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2, which is reserved here for divergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dcsolve", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="one solve from a TOML config")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="prox vs CCCP on synthetic best subset selection")
    cmp_.add_argument("--config")
    cmp_.add_argument("--seed", type=int)
    cmp_.add_argument("--reps", type=int)
    cmp_.add_argument("--workers", type=int, default=1)
    cmp_.add_argument("--out")
    cmp_.set_defaults(func=cmd_compare)

    sfs = sub.add_parser("sfs", help="shape from shading on a PGM image")
    sfs.add_argument("--input", required=True)
    sfs.add_argument("--light", default="0,0,1")
    sfs.add_argument("--iters", type=int, default=500)
    sfs.add_argument("--seed", type=int)
    sfs.add_argument("--out")
    sfs.set_defaults(func=cmd_sfs)

    chk = sub.add_parser("check", help="run the diagnostics battery")
    chk.add_argument("--suite", default="all")
    chk.add_argument("--seed", type=int)
    chk.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, KeyError, TypeError) as exc:
        print(f"dcsolve {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
