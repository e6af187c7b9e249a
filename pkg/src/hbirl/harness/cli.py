"""Command line interface: simulate, learn, experiment, plot, oracle."""
import argparse
import json
import logging
import os
import sys
import time

from ..errors import ConfigurationError
from .config import ExperimentConfig, config_from_dict, dump_config, load_config
from .experiment import (
    build_scenario,
    learn,
    load_scenario,
    read_results,
    run_experiment,
    run_seed,
    save_scenario,
    score,
    write_results,
)
from .summary import aggregate, emit_plot_data

OUT_ENV = "HBIRL_OUT"
log = logging.getLogger("hbirl")


def _out_dir(args):
    out = args.out or os.environ.get(OUT_ENV) or "hbirl_out"
    os.makedirs(out, exist_ok=True)
    return out


def _config(args, **overrides):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if overrides:
        raw = cfg.to_dict()
        raw.update({k: v for k, v in overrides.items() if v is not None})
        cfg = config_from_dict(raw)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def cmd_simulate(args):
    cfg = _config(args, domain=args.domain)
    seed = run_seed(cfg.seed, args.value, args.run)
    scn = build_scenario(cfg, args.value, seed)
    out = _out_dir(args)
    save_scenario(scn, out)
    print(f"wrote {len(scn.trajectories)} trajectories and {scn.log.total_observations} observations to {out}")


def cmd_learn(args):
    cfg = _config(args)
    scn = load_scenario(cfg, args.data)
    seed = cfg.seed if args.seed is None else args.seed
    res = learn(scn, args.variant, cfg.em, seed)
    err = score(scn, res.weights)
    doc = {
        "variant": args.variant,
        "weights": res.weights.tolist(),
        "ile": err,
        "converged": res.converged,
        "em_iterations": res.iterations,
        "entropy": res.entropy,
        "restart_entropies": res.entropies,
    }
    out = _out_dir(args)
    with open(os.path.join(out, f"learned_{args.variant}.json"), "w") as fh:
        json.dump(doc, fh, indent=1)
    print(f"{args.variant}: ILE {err:.6g} after {res.iterations} EM iterations")


def cmd_experiment(args):
    cfg = _config(args)
    out = _out_dir(args)
    with open(os.path.join(out, "config.yaml"), "w") as fh:
        fh.write(dump_config(cfg))
    total = len(cfg.variants) * len(cfg.sweep) * cfg.runs
    done = [0]
    start = time.perf_counter()

    def progress(row):
        done[0] += 1
        log.info("[%d/%d] %s %s=%d ile=%.4g", done[0], total, row.variant, cfg.sweep_variable,
                 row.sweep_value, row.ile)

    rows = run_experiment(cfg, jobs=args.jobs, progress=progress)
    write_results(rows, os.path.join(out, "results.csv"))
    summary = aggregate(rows)
    emit_plot_data(summary, out)
    print(f"{total} runs in {time.perf_counter() - start:.1f}s; results in {out}")
    for r in summary:
        print(f"  {r.variant:18s} {cfg.sweep_variable}={r.sweep_value:<3d} mean ILE {r.mean:9.4f}"
              f"  95% CI [{r.ci_low:.4f}, {r.ci_high:.4f}] n={r.n}")


def cmd_plot(args):
    rows = [row for path in args.results for row in read_results(path)]
    summary = aggregate(rows)
    formats = tuple(f.strip() for f in args.format.split(","))
    variants = args.variants.split(",") if args.variants else None
    for path in emit_plot_data(summary, _out_dir(args), formats, variants, stem=args.stem):
        print(path)


def cmd_oracle(args):
    from ..oracle import sampler_oracle_check
    from .checks import enumeration_check, gradient_check

    seed = 0 if args.seed is None else args.seed
    report = {
        "sampler_stochastic": sampler_oracle_check("stochastic", seed, args.samples, args.burn_in),
        "sampler_deterministic": sampler_oracle_check("deterministic", seed, args.samples, args.burn_in),
        "feature_enumeration": enumeration_check(seed),
        "dual_gradient": gradient_check(seed),
    }
    out = _out_dir(args)
    with open(os.path.join(out, "oracle.json"), "w") as fh:
        json.dump(report, fh, indent=1, default=float)
    for name, res in report.items():
        shown = {k: (round(v, 6) if isinstance(v, float) else v) for k, v in res.items() if k != "acceptance"}
        print(f"{name}: {shown}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    common.add_argument("--config", default=None, help="YAML experiment config")
    common.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./hbirl_out)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hbirl", description="Reward learning from confounded observation streams.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate one data set and its ground truth")
    s.add_argument("--domain", choices=("gridworld", "onion"), default=None)
    s.add_argument("--value", type=int, default=4, help="sweep value (confounders or trajectories)")
    s.add_argument("--run", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("learn", parents=[common], help="learn with one variant on a simulated data set")
    s.add_argument("--data", required=True, help="directory written by 'simulate'")
    s.add_argument("--variant", required=True)
    s.set_defaults(func=cmd_learn)

    s = sub.add_parser("experiment", parents=[common], help="run a full sweep")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("plot", parents=[common], help="summarise result files into plot data")
    s.add_argument("results", nargs="+")
    s.add_argument("--format", default="csv,svg")
    s.add_argument("--variants", default=None, help="comma separated variant filter")
    s.add_argument("--stem", default="summary")
    s.set_defaults(func=cmd_plot)

    s = sub.add_parser("oracle", parents=[common], help="brute-force enumeration checks")
    s.add_argument("--samples", type=int, default=20000)
    s.add_argument("--burn-in", type=int, default=2000)
    s.set_defaults(func=cmd_oracle)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (ConfigurationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
