"""Command line entry point: ``timelyfl <command> ...``.

Exit codes: 0 success, 2 invalid usage or parameters, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path
from typing import Any, Callable

from . import cli_io
from .age_model import ApproxParams, SystemParams, age_approx, age_exact
from .cli_io import ConfigError, default_out_dir, make_envelope, write_csv, write_json
from .fl_bench import FLConfig, train
from .order_stats import DomainError
from .protocol_sim import SchemeKind, compare_iteration_time, simulate
from .sweep_opt import SweepSpec, reproduce_figure, sweep


class UsageError(ValueError):
    pass


SYSTEM_DEFAULTS = {"lam": 1.0, "mu_up": 1.0, "c": 1.0, "mu_down": None}


def _resolve(args: argparse.Namespace, names: list[str], defaults: dict) -> dict:
    """Merge defaults < config file < explicit flags, keeping only ``names``."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        cfg.update(cli_io.parse_config(args.config).flat())
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            cfg[name] = v
    return {k: cfg.get(k) for k in names}


def _need(cfg: dict, *names: str) -> None:
    missing = [n for n in names if cfg.get(n) is None]
    if missing:
        raise UsageError(f"missing required parameter(s): {', '.join(missing)}")


def _system(cfg: dict) -> SystemParams:
    _need(cfg, "n", "m", "k", "lam", "mu_up", "c")
    return SystemParams(cfg["n"], cfg["m"], cfg["k"], cfg["lam"], cfg["mu_up"], cfg["c"],
                        cfg.get("mu_down"))


# ---------------------------------------------------------------- payloads
# Each builder maps a resolved config to the JSON payload; ``replay`` reuses them.

def payload_age_exact(cfg: dict) -> dict:
    return dataclasses.asdict(age_exact(_system(cfg)))


def payload_age_approx(cfg: dict) -> dict:
    _need(cfg, "alpha", "beta", "lam", "mu_up", "c")
    value = age_approx(ApproxParams(cfg["alpha"], cfg["beta"]), cfg["lam"], cfg["mu_up"], cfg["c"])
    return {"age": value}


def _sim_results(cfg: dict, trace: bool = False):
    params = _system(cfg)
    _need(cfg, "iterations", "seed")
    schemes = list(SchemeKind) if cfg["scheme"] == "all" else [SchemeKind.parse(cfg["scheme"])]
    return {
        s: simulate(params, s, cfg["iterations"], cfg.get("warmup"), cfg["seed"],
                    random_k_wait=cfg.get("random_k_wait") or "common", trace=trace)
        for s in schemes
    }


def _comparison_payload(results: dict) -> dict:
    y = {s.value: r.mean_iteration_time for s, r in results.items()}
    base = results[SchemeKind.RANDOM_K].mean_iteration_time
    prop = results[SchemeKind.EARLIEST_K_OF_M].mean_iteration_time
    return {"mean_iteration_time": y, "improvement_over_random": (base - prop) / base}


def payload_simulate(cfg: dict, results: dict | None = None) -> dict:
    results = results if results is not None else _sim_results(cfg)
    out: dict[str, Any] = {"results": {s.value: r.to_dict() for s, r in results.items()}}
    if len(results) == len(SchemeKind):
        out["comparison"] = _comparison_payload(results)
    return out


def payload_compare(cfg: dict, cmp=None) -> dict:
    if cmp is None:
        _need(cfg, "seed")
        cmp = compare_iteration_time(_system(cfg), cfg["iterations"], cfg["seed"], cfg.get("warmup"),
                                     cfg.get("random_k_wait") or "common")
    return _comparison_payload(cmp.results)


def _sweep_spec(cfg: dict, **over) -> SweepSpec:
    kw = dict(n=cfg["n"], lam=cfg["lam"], mu_up=cfg["mu_up"], c=cfg["c"], mu_down=cfg.get("mu_down"),
              m_values=cfg.get("sweep_m"), k_values=cfg.get("sweep_k"),
              objective=cfg.get("objective") or "analytic",
              sim_iterations=cfg.get("sim_iterations") or 100_000, seed=cfg.get("seed") or 0)
    kw.update(over)
    return SweepSpec(**kw)


def _rows(res) -> list[dict]:
    return [dataclasses.asdict(r) for r in res.rows]


def _sweep_results(cfg: dict):
    _need(cfg, "n")
    if (cfg.get("objective") or "analytic") == "simulated":
        _need(cfg, "seed")
    if cfg.get("figure"):
        return cfg["figure"], reproduce_figure(cfg["figure"], cfg["n"], cfg.get("seed") or 0)
    return None, sweep(_sweep_spec(cfg))


def payload_sweep(cfg: dict, results=None) -> dict:
    figure, res = results if results is not None else _sweep_results(cfg)
    if figure:
        return {
            "figure": figure,
            "curves": [
                {"parameter": c.parameter, "value": c.value,
                 "optimum": dataclasses.asdict(c.optimum), "rows": _rows(c.curve)}
                for c in res
            ],
        }
    return {"rows": _rows(res), "argmin": dataclasses.asdict(res.argmin),
            "objective": res.objective_kind}


FL_NAMES = ["d", "n_clients", "samples_per_client", "batch_size", "tau", "eta", "repeats",
            "noise_std", "test_samples"]


def _fl_configs(cfg: dict) -> list[FLConfig]:
    _need(cfg, "seed")
    base = {k: cfg[k] for k in FL_NAMES if cfg.get(k) is not None}
    if cfg.get("fl_iterations") is not None:
        base["iterations"] = cfg["fl_iterations"]
    if cfg.get("fl_m") is not None:
        base["m"] = cfg["fl_m"]
    for name in ("lam", "mu_up", "c"):
        if cfg.get(name) is not None:
            base[name] = cfg[name]
    schemes = cfg.get("schemes") or ("earliest",)
    ks = cfg.get("fl_k") or (10,)
    return [FLConfig(scheme=s, k=k, seed=cfg["seed"], **base) for s in schemes for k in ks]


def _fl_times(fc: FLConfig) -> list[float]:
    r = simulate(fc.system_params(), fc.scheme, fc.iterations, 0, fc.seed, trace=True)
    return [0.0] + [float(x) for x in r.trace.end]


def payload_fl_train(cfg: dict, histories=None) -> dict:
    configs = _fl_configs(cfg)
    if histories is None:
        histories = [train(fc) for fc in configs]
    runs = []
    for fc, h in zip(configs, histories):
        run = {"scheme": fc.scheme.value, "k": fc.k, "m": fc.m, "config": fc.to_dict(),
               "iteration": h.iteration.tolist(), "train_loss": h.train_loss.tolist(),
               "test_loss": h.test_loss.tolist(), "final_test_std": h.final_test_std}
        if cfg.get("time_join"):
            run["time"] = _fl_times(fc)
        runs.append(run)
    return {"runs": runs}


PAYLOADS: dict[str, Callable[[dict], dict]] = {
    "age-exact": payload_age_exact,
    "age-approx": payload_age_approx,
    "simulate": payload_simulate,
    "compare": payload_compare,
    "sweep": payload_sweep,
    "fl-train": payload_fl_train,
}


# ---------------------------------------------------------------- commands

SYSTEM_NAMES = ["n", "m", "k", "lam", "mu_up", "mu_down", "c"]
RUN_NAMES = ["iterations", "warmup", "seed", "random_k_wait"]


def _emit(args, command: str, cfg: dict, payload: dict, t0: float, default_name: str) -> Path:
    env = make_envelope(command, cfg, payload, time.perf_counter() - t0)
    path = Path(args.json) if getattr(args, "json", None) else _out_dir(args) / default_name
    return write_json(path, env)


def _out_dir(args) -> Path:
    return Path(args.out_dir) if getattr(args, "out_dir", None) else default_out_dir()


def cmd_age_exact(args) -> int:
    t0 = time.perf_counter()
    cfg = _resolve(args, SYSTEM_NAMES, SYSTEM_DEFAULTS)
    payload = payload_age_exact(cfg)
    for label, key in (("delta1", "delta1"), ("delta2", "delta2"), ("delta3", "delta3"),
                       ("total", "total"), ("E[Y]", "mean_Y"), ("Var[Y]", "var_Y")):
        print(f"{label:8s} {payload[key]!r}")
    if args.json:
        _emit(args, "age-exact", cfg, payload, t0, "age-exact.json")
    return 0


def cmd_age_approx(args) -> int:
    t0 = time.perf_counter()
    if args.alpha is None and args.beta is None and args.n is not None:
        _need(vars(args), "n", "m", "k")
        ap = ApproxParams.from_counts(args.n, args.m, args.k)
        args.alpha, args.beta = ap.alpha, ap.beta
    cfg = _resolve(args, ["alpha", "beta", "lam", "mu_up", "c"], SYSTEM_DEFAULTS)
    payload = payload_age_approx(cfg)
    print(repr(payload["age"]))
    if args.json:
        _emit(args, "age-approx", cfg, payload, t0, "age-approx.json")
    return 0


def _print_comparison(cmp: dict) -> None:
    print("scheme    mean_iteration_time")
    for s, y in cmp["mean_iteration_time"].items():
        print(f"{s:9s} {y!r}")
    print(f"improvement over random k: {100 * cmp['improvement_over_random']:.2f}%")


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    cfg = _resolve(args, SYSTEM_NAMES + RUN_NAMES + ["scheme"],
                   dict(SYSTEM_DEFAULTS, scheme="earliest", iterations=100_000))
    if args.trace and cfg["scheme"] == "all":
        raise UsageError("--trace needs a single --scheme")
    results = _sim_results(cfg, trace=bool(args.trace))
    payload = payload_simulate(cfg, results)
    path = _emit(args, "simulate", cfg, payload, t0, "simulate.json")
    if args.trace:
        tr = next(iter(results.values())).trace
        write_csv(Path(args.trace), ["iter", "start", "wait", "service", "end", "deliverer_ids"],
                  ([rec.index, rec.start_time, rec.wait_duration, rec.service_duration,
                    rec.end_time, ";".join(str(i) for i in rec.deliverers)]
                   for rec in tr.records()))
    for s, r in payload["results"].items():
        print(f"{s:9s} mean_avg_age={r['mean_avg_age']!r} "
              f"mean_iteration_time={r['mean_iteration_time']!r}")
    if "comparison" in payload:
        _print_comparison(payload["comparison"])
    print(f"wrote {path}")
    return 0


def cmd_compare(args) -> int:
    t0 = time.perf_counter()
    cfg = _resolve(args, SYSTEM_NAMES + RUN_NAMES,
                   dict(SYSTEM_DEFAULTS, iterations=50_000))
    payload = payload_compare(cfg)
    path = _emit(args, "compare", cfg, payload, t0, "compare.json")
    _print_comparison(payload)
    print(f"wrote {path}")
    return 0


SWEEP_NAMES = ["n", "lam", "mu_up", "mu_down", "c", "figure", "sweep_m", "sweep_k",
               "objective", "sim_iterations", "seed"]


def _fmt_value(v) -> str:
    return cli_io.format_number(float(v)) if not float(v).is_integer() else str(int(v))


def cmd_sweep(args) -> int:
    t0 = time.perf_counter()
    cfg = _resolve(args, SWEEP_NAMES, dict(SYSTEM_DEFAULTS, n=100))
    if args.m is not None:
        cfg["sweep_m"] = (args.m,)
    if args.k is not None:
        cfg["sweep_k"] = (args.k,)
    results = _sweep_results(cfg)
    payload = payload_sweep(cfg, results)
    out = _out_dir(args)
    header = ["m", "k", "age", "mean_iter_time"]
    figure, res = results
    if figure:
        print(f"{'parameter':10s} {'value':>6s} {'m*':>4s} {'k*':>4s} age*")
        for c in res:
            write_csv(out / f"{figure}_{c.parameter}={_fmt_value(c.value)}.csv", header,
                      ([r.m, r.k, r.age, r.mean_iteration_time] for r in c.curve.rows))
            o = c.optimum
            print(f"{c.parameter:10s} {_fmt_value(c.value):>6s} {o.m:4d} {o.k:4d} {o.age!r}")
    else:
        write_csv(out / "sweep.csv", header,
                  ([r.m, r.k, r.age, r.mean_iteration_time] for r in res.rows))
        a = res.argmin
        print(f"argmin m={a.m} k={a.k} age={a.age!r}")
    _emit(args, "sweep", cfg, payload, t0, f"{figure or 'sweep'}.json")
    return 0


def cmd_fl_train(args) -> int:
    t0 = time.perf_counter()
    names = FL_NAMES + ["fl_iterations", "fl_k", "fl_m", "schemes", "lam", "mu_up", "c", "seed",
                        "time_join"]
    cfg = _resolve(args, names, {})
    cfg["time_join"] = bool(cfg.get("time_join"))
    payload = payload_fl_train(cfg)
    out = _out_dir(args)
    for run in payload["runs"]:
        header = ["iter", "train_loss", "test_loss"] + (["time"] if "time" in run else [])
        cols = [run["iteration"], run["train_loss"], run["test_loss"]] + (
            [run["time"]] if "time" in run else [])
        write_csv(out / f"fl_{run['scheme']}_k{run['k']}.csv", header, zip(*cols))
        print(f"{run['scheme']:9s} k={run['k']:<4d} final train={run['train_loss'][-1]!r} "
              f"test={run['test_loss'][-1]!r} (std {run['final_test_std']!r})")
    _emit(args, "fl-train", cfg, payload, t0, "fl-train.json")
    return 0


def cmd_replay(args) -> int:
    """Re-run an envelope's command from its embedded config and compare payloads."""
    try:
        env = json.loads(Path(args.envelope).read_text())
    except OSError as e:
        print(f"error: cannot read {args.envelope}: {e.strerror}", file=sys.stderr)
        return 3
    meta = env["metadata"]
    cfg = dict(meta["config"])
    for key in ("sweep_m", "sweep_k", "fl_k", "schemes"):
        if isinstance(cfg.get(key), list):
            cfg[key] = tuple(cfg[key])
    payload = PAYLOADS[meta["command"]](cfg)
    same = cli_io.dumps(payload) == cli_io.dumps(env["payload"])
    print("identical" if same else "DIFFERENT")
    return 0 if same else 1


# ---------------------------------------------------------------- parser

def _add_system(p: argparse.ArgumentParser, with_downlink: bool = True) -> None:
    g = p.add_argument_group("system")
    g.add_argument("--n", type=int)
    g.add_argument("--m", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--lambda", dest="lam", type=float, help="availability rate (default 1)")
    g.add_argument("--mu-up", dest="mu_up", type=float, help="uplink rate (default 1)")
    if with_downlink:
        g.add_argument("--mu-down", dest="mu_down", type=cli_io._rate_or_instant,
                       help="downlink rate or 'instant' (default)")
    g.add_argument("--c", type=float, help="computation time (default 1)")


def _add_common(p: argparse.ArgumentParser, seed: bool = False) -> None:
    p.add_argument("--config", help="INI config file; flags override it")
    p.add_argument("--out-dir", help=f"output directory (default ${cli_io.OUT_ENV} or .)")
    p.add_argument("--json", help="write the result envelope to this path")
    if seed:
        p.add_argument("--seed", type=cli_io._seed)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="timelyfl", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {cli_io.__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("age-exact", help="closed-form average age with its three terms")
    _add_system(p, with_downlink=False)
    _add_common(p)
    p.set_defaults(func=cmd_age_exact)

    p = sub.add_parser("age-approx", help="large-n approximation of the average age")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    _add_system(p, with_downlink=False)
    _add_common(p)
    p.set_defaults(func=cmd_age_approx)

    p = sub.add_parser("simulate", help="Monte-Carlo run of one scheme or all three")
    _add_system(p)
    _add_common(p, seed=True)
    p.add_argument("--scheme", type=cli_io._scheme, help="earliest | random | first | all")
    p.add_argument("--iterations", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--random-k-wait", dest="random_k_wait", choices=["common", "independent"])
    p.add_argument("--trace", help="write the per-iteration trace CSV here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="mean iteration time of all schemes")
    _add_system(p)
    _add_common(p, seed=True)
    p.add_argument("--iterations", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--random-k-wait", dest="random_k_wait", choices=["common", "independent"])
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="(m, k) grid search or a figure family")
    _add_system(p)
    _add_common(p, seed=True)
    p.add_argument("--figure", choices=["fig3", "fig4", "fig5", "fig6"])
    p.add_argument("--sweep-m", dest="sweep_m", type=cli_io.parse_int_range)
    p.add_argument("--sweep-k", dest="sweep_k", type=cli_io._k_range)
    p.add_argument("--objective", choices=["analytic", "simulated"])
    p.add_argument("--sim-iterations", dest="sim_iterations", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fl-train", help="linear-regression FL convergence")
    _add_common(p, seed=True)
    p.add_argument("--d", type=int)
    p.add_argument("--n-clients", dest="n_clients", type=int)
    p.add_argument("--samples-per-client", dest="samples_per_client", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--tau", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--iterations", dest="fl_iterations", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--noise-std", dest="noise_std", type=float)
    p.add_argument("--test-samples", dest="test_samples", type=int)
    p.add_argument("--k", dest="fl_k", type=cli_io.parse_int_range, help="e.g. 10,31,40")
    p.add_argument("--m", dest="fl_m", type=int)
    p.add_argument("--schemes", type=cli_io._schemes, help="e.g. earliest,random")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--mu-up", dest="mu_up", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--time-join", dest="time_join", action="store_true", default=None,
                   help="add simulated wall-clock time per iteration")
    p.set_defaults(func=cmd_fl_train)

    p = sub.add_parser("replay", help="re-run a result envelope and check its payload")
    p.add_argument("envelope")
    p.set_defaults(func=cmd_replay)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DomainError, UsageError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e.strerror or e}: {e.filename or ''}".rstrip(": "), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
