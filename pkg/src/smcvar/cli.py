"""Command-line entry point: ``smcvar {run, accept, gen-data, oracle}``.

Examples::

    smcvar run --config studies/coverage.cfg --out-csv reps.csv --out-json summary.json
    smcvar run --model changepoint --T 200 --m 2000 --policy 2 --replications 300
    smcvar accept identities micro-oracle
    smcvar gen-data changepoint --T 1000 --seed 7 --out y.csv
    smcvar oracle changepoint --data y.csv
    smcvar oracle discrete --c 0.5
"""

from __future__ import annotations

import argparse
import json
import sys

from . import acceptance, benchmarks, oracle
from .errors import SMCError
from .experiment import JOBS_ENV, ExperimentConfig, discrete_hmm, load_config, run_experiment


def _add_run(sub):
    p = sub.add_parser("run", help="run replicated filters and write CSV/JSON")
    p.add_argument("--config", help="key = value file; flags override its entries")
    p.add_argument("--model", choices=["changepoint", "bearings", "generic", "oracle"])
    p.add_argument("--m", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--scheme", choices=["multinomial", "bootstrap", "residual"])
    p.add_argument("--policy", help="always, never/inf, or a cv^2 threshold c")
    p.add_argument("--k", type=int, help="sample-splitting groups (0 = off)")
    p.add_argument("--gb", choices=["on", "off"], help="Gilks-Berzuini estimate")
    p.add_argument("--replications", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help=f"worker processes (default: ${JOBS_ENV} or 1)")
    p.add_argument("--out-csv", dest="out_csv")
    p.add_argument("--out-json", dest="out_json")
    p.add_argument("--truth", help="oracle, none, or a number")
    p.add_argument("--timing", choices=["on", "off"], help="record runtime_ms")
    p.add_argument("--data", help="CSV of observations written by gen-data")
    p.add_argument("--rho", type=float)
    p.add_argument("--xi", type=float)
    p.add_argument("--proposal", choices=["conditional", "prior"])
    p.add_argument("--first-stage", dest="first_stage", choices=["informed", "prior"])
    p.add_argument("--factory", help="file.py:callable returning a ModelSpec")
    p.add_argument("--tables", help="JSON file of DiscreteHMM tables, or two-state")
    p.add_argument("--observations", help="comma-separated observations for two-state")


def _add_accept(sub):
    p = sub.add_parser("accept", help="run acceptance suites")
    p.add_argument("suites", nargs="*", help=f"any of {', '.join(acceptance.SUITES)} (default: all)")
    p.add_argument("--json", dest="json_out", help="write the report as JSON")
    p.add_argument("--seed", type=int, default=20240501)


def _add_gen(sub):
    p = sub.add_parser("gen-data", help="simulate a benchmark series to CSV")
    p.add_argument("model", choices=["changepoint", "bearings"])
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rho", type=float, default=0.01)
    p.add_argument("--xi", type=float, default=1.0)
    p.add_argument("--out", required=True)


def _add_oracle(sub):
    p = sub.add_parser("oracle", help="exact reference values")
    p.add_argument("model", choices=["changepoint", "discrete"])
    p.add_argument("--data", help="observation CSV (changepoint)")
    p.add_argument("--rho", type=float, default=0.01)
    p.add_argument("--xi", type=float, default=1.0)
    p.add_argument("--all-stages", action="store_true", help="print E(X_t | Y_1..t) for every t")
    p.add_argument("--tables", default="two-state")
    p.add_argument("--observations", default="0,1,1")
    p.add_argument("--c", type=float, help="also report the limiting resampling times for cv^2 >= c")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smcvar", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_accept(sub)
    _add_gen(sub)
    _add_oracle(sub)
    return parser


def cmd_run(args) -> int:
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    for flag in ("gb", "timing"):
        if overrides.get(flag) is not None:
            overrides[flag] = overrides[flag] == "on"
    config = load_config(args.config, overrides)
    text, summary = run_experiment(config)
    if not config.out_csv:
        sys.stdout.write(text)
    if not config.out_json:
        print(json.dumps(summary, indent=2, sort_keys=True))
    if not summary["complete"]:
        print(f"{summary['n_failed']} replication(s) failed: {', '.join(summary['failures'])}",
              file=sys.stderr)
        return 3
    return 0


def cmd_accept(args) -> int:
    names = args.suites or list(acceptance.SUITES)
    unknown = [n for n in names if n not in acceptance.SUITES]
    if unknown:
        print(f"unknown suite(s): {', '.join(unknown)}; choose from {', '.join(acceptance.SUITES)}",
              file=sys.stderr)
        return 2
    results = []
    for name in names:
        for res in acceptance.SUITES[name](seed=args.seed):
            print(res.line(), flush=True)
            results.append(res)
    if args.json_out:
        with open(args.json_out, "w") as fh:
            json.dump([r.as_dict() for r in results], fh, indent=2)
    return 0 if all(r.passed for r in results) else 1


def cmd_gen(args) -> int:
    if args.model == "changepoint":
        x, y = benchmarks.simulate_changepoint(args.T, args.rho, args.xi, args.seed)
    else:
        x, y = benchmarks.simulate_bearings(args.T, args.seed)
    benchmarks.write_series(args.out, x, y)
    return 0


def cmd_oracle(args) -> int:
    if args.model == "changepoint":
        if not args.data:
            print("oracle changepoint needs --data", file=sys.stderr)
            return 2
        _, y = benchmarks.read_series(args.data)
        means = oracle.changepoint_exact_mean(y, args.rho, args.xi)
        out = {"T": int(y.size), "posterior_mean": float(means[-1])}
        if args.all_stages:
            out["posterior_mean_by_stage"] = means.tolist()
    else:
        cfg = ExperimentConfig(model="oracle", tables=args.tables, observations=args.observations)
        dhmm = discrete_hmm(cfg)
        psi_t, eta = oracle.exact_posterior(dhmm)
        out = {
            "T": dhmm.horizon,
            "psi_T": float(psi_t),
            "eta": eta.tolist(),
            "sigma2_multinomial": oracle.exact_sigma2(dhmm),
            "sigma2_residual": oracle.exact_sigma2(dhmm, scheme="residual"),
            "sigma2_no_resampling": oracle.exact_sigma2(dhmm, schedule=()),
        }
        if args.c is not None:
            taus = oracle.exact_tau_star(dhmm, args.c)
            out["tau_star"] = list(taus)
            out["sigma2_tau_star"] = oracle.exact_sigma2(dhmm, schedule=taus)
    print(json.dumps(out, indent=2))
    return 0


COMMANDS = {"run": cmd_run, "accept": cmd_accept, "gen-data": cmd_gen, "oracle": cmd_oracle}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except SMCError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
