"""Command-line entry point (``fs-adapt`` / ``python -m fsadapt``)."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import replace

from fsadapt.adaptive import (DesignSpec, conditional_power, initial_sample_size,
                              predictive_probability)
from fsadapt.config import ConfigError, load_config
from fsadapt.endpoint import fs_statistic
from fsadapt.harness import (compare_designs, replicate_seed, run_trial, simulate_trials,
                             summarize)
from fsadapt.patient_sim import calibrate_jfm, simulate_cohort
from fsadapt.report import emit_results, write_patient_csv

log = logging.getLogger("fsadapt")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _probability(text):
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not strictly between 0 and 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fs-adapt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log applied defaults")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="operating characteristics over many replicates")
    p.add_argument("--config", required=True)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--trace", action="store_true", help="also write trace.csv")
    p.add_argument("--workers", type=int)
    p.add_argument("--no-ssr", action="store_true", help="fixed design only")

    p = sub.add_parser("trial", help="one replicate with its full trace on stdout")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--scenario")
    p.add_argument("--no-ssr", action="store_true")

    p = sub.add_parser("pp", help="interim predictive probability")
    p.add_argument("--pvalue", type=_probability, required=True)
    p.add_argument("--info-frac", type=_probability, required=True)
    p.add_argument("--alpha", type=_probability, default=0.025)

    p = sub.add_parser("cp", help="conditional power for a stage-2 size")
    p.add_argument("--z1", type=float, required=True)
    p.add_argument("--n2", type=int, required=True)
    p.add_argument("--drift", type=float, required=True, help="E(z2)/sqrt(n2)")
    p.add_argument("--alpha", type=_probability, default=0.025)

    p = sub.add_parser("size", help="initial win-ratio sample size")
    p.add_argument("--wr", type=float, required=True)
    p.add_argument("--var", type=float, help="N * Var(log WR); tie-based null variance if omitted")
    p.add_argument("--tie", type=float, required=True)
    p.add_argument("--power", type=float, default=0.9)
    p.add_argument("--alpha", type=_probability, default=0.025)

    p = sub.add_parser("gen", help="export a simulated cohort as patient-record CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scenario")
    return parser


def _pick(cfg, name):
    if name is None:
        return cfg.selected()[0]
    if name not in cfg.scenarios:
        raise UsageError(f"unknown scenario {name!r}; config defines {sorted(cfg.scenarios)}")
    return cfg.scenarios[name]


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    reps = args.reps if args.reps is not None else cfg.replicates
    seed = args.seed if args.seed is not None else cfg.master_seed
    workers = args.workers
    if workers is None:
        workers = int(os.environ.get("FS_ADAPT_WORKERS", cfg.workers))
    out = args.out or cfg.output_dir
    if reps < 1:
        raise UsageError("--reps must be positive")
    design = cfg.design
    if args.no_ssr:
        design = replace(design, ssr_enabled=False)

    results = []
    for spec in cfg.selected():
        log.info("simulating %s: %d replicates, seed %d", spec.name, reps, seed)
        if design.ssr_enabled:
            cmp = compare_designs(spec, design, reps, seed, workers)
            results += [(cmp.fixed, cmp.fixed_trials), (cmp.ssr, cmp.ssr_trials)]
        else:
            trials = simulate_trials(spec, design, reps, seed, workers)
            results.append((summarize(trials, design, spec.name, seed), trials))

    for path in emit_results(results, out, trace=args.trace or cfg.trace):
        print(path)
    for oc, _ in results:
        print(f"{oc.scenario:<14}{oc.design:<6} power {oc.power_pct:5.1f}%  "
              f"avg N {oc.average_n:6.1f}  futility {oc.futility_stop_pct:5.1f}%  "
              f"max SSR {oc.max_ssr_pct:5.1f}%", file=sys.stderr)
    return EXIT_OK


def cmd_trial(args) -> int:
    cfg = load_config(args.config)
    spec = _pick(cfg, args.scenario)
    design = replace(cfg.design, ssr_enabled=False) if args.no_ssr else cfg.design
    seed = replicate_seed(args.seed, 0)
    t = run_trial(spec, design, seed)
    doc = {
        "scenario": spec.name,
        "design": dataclasses.asdict(design),
        "params": dataclasses.asdict(calibrate_jfm(spec)),
        "replicate_seed": seed,
        "interim": {**dataclasses.asdict(t.interim), "zone": t.interim.zone.value},
        "stage1_z": t.stage1_z, "stage2_z": t.stage2_z, "combined_z": t.combined_z,
        "stage2_enrolled": t.stage2_enrolled, "total_enrolled": t.total_enrolled,
        "stopped_futility": t.stopped_futility, "rejected": t.rejected,
        "resimulated": t.resimulated,
    }
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def cmd_pp(args) -> int:
    print(f"{predictive_probability(args.pvalue, args.info_frac, args.alpha):.6f}")
    return EXIT_OK


def cmd_cp(args) -> int:
    design = DesignSpec(alpha_one_sided=args.alpha)
    print(f"{conditional_power(args.z1, args.n2, args.drift, design):.6f}")
    return EXIT_OK


def cmd_size(args) -> int:
    print(initial_sample_size(args.wr, args.var, args.tie, args.power, args.alpha))
    return EXIT_OK


def cmd_gen(args) -> int:
    cfg = load_config(args.config)
    spec = _pick(cfg, args.scenario)
    cohort = simulate_cohort(calibrate_jfm(spec), spec, args.n, args.seed)
    write_patient_csv(cohort, args.out)
    fs = fs_statistic(cohort)
    log.info("wrote %d records to %s (z = %.3f)", len(cohort), args.out, fs.z)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "trial": cmd_trial, "pp": cmd_pp, "cp": cmd_cp,
            "size": cmd_size, "gen": cmd_gen}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValueError, OSError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
