"""Command-line entry point: ``resetmt {reset,filter,simulate,validate}``.

Exit codes: 0 success, 1 usage, 2 data, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__
from .classifiers import default_grid
from .ensemble import EnsembleConfig
from .filters import FilterParams, bh, competition_filter, gr_sd
from .model import ConfigError, DataError, Mode, PValueTable, SeedSpec
from .pvalue_adapter import ConversionRegions, null_win_prob, pvalues_to_table
from .reset import ResetConfig, run_reset, run_reset_pvalues
from .simgen import (
    SCENARIOS,
    BetaMixtureSpec,
    CompetitionSimSpec,
    GeometricSimSpec,
    monte_carlo_validate,
    simulate_beta_mixture,
    simulate_competition,
    simulate_geometric,
)
from .tsv import read_input, write_discoveries, write_table, write_truth

LOGGER = logging.getLogger("resetmt")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
FILTER_METHODS = ("seqstep", "seqstep+", "fdpsd", "grsd", "bh")
VALIDATE_METHODS = ("reset",) + FILTER_METHODS


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _probability(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"{text} is not in (0, 1)")
    return v


def _level(text):
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"{text} is not in (0, 1]")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text} must be >= 1")
    return v


# --------------------------------------------------------------------------
# argument groups shared between subcommands


def _add_regions(p):
    g = p.add_argument_group("p-value conversion")
    g.add_argument("--a", type=float, default=0.5, help="target region is [0, a)")
    g.add_argument("--b1", type=float, default=0.5, help="decoy region is (b1, b2]")
    g.add_argument("--b2", type=float, default=1.0)


def _add_ensemble(p):
    g = p.add_argument_group("rescoring ensemble")
    g.add_argument("--folds", type=_positive_int, default=3, help="cross-validation folds K")
    g.add_argument("--reps", type=_positive_int, default=10, help="fold repetitions r")
    g.add_argument("--alpha0", type=float, default=0.5, help="initial pseudo-FDR level for the positive set")
    g.add_argument("--min-positive", type=_positive_int, default=50)
    g.add_argument("--knn", type=_positive_int, default=20)
    g.add_argument("--rf-trees", type=_positive_int, default=500)
    g.add_argument("--nn-maxiter", type=_positive_int, default=500)
    g.add_argument("--no-adjust-c", dest="adjust_c", action="store_false", help="use c0 in model selection")
    g.add_argument("--threads", type=_positive_int, default=1, help="parallel training tasks")


def _ensemble_config(args) -> EnsembleConfig:
    return EnsembleConfig(
        K=args.folds,
        r=args.reps,
        alpha0=args.alpha0,
        min_positive=args.min_positive,
        knn=args.knn,
        grid=default_grid(rf_trees=args.rf_trees, nn_maxiter=args.nn_maxiter),
        adjust_c=args.adjust_c,
        n_jobs=args.threads,
    )


def _ensemble_record(args) -> dict:
    return {
        "folds": args.folds,
        "reps": args.reps,
        "alpha0": args.alpha0,
        "min_positive": args.min_positive,
        "knn": args.knn,
        "rf_trees": args.rf_trees,
        "nn_maxiter": args.nn_maxiter,
        "adjust_c": args.adjust_c,
    }


def _regions(args) -> ConversionRegions:
    return ConversionRegions(a=args.a, b1=args.b1, b2=args.b2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="resetmt", description="Multiple testing with side information by rescoring decoys.")
    parser.add_argument("--version", action="version", version=f"resetmt {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("reset", help="rescore with side information and filter")
    parser.reset_parser = p
    p.add_argument("input", help="TSV with 'pvalue' or 'label'+'score' plus x_ columns")
    p.add_argument("--config", help="run.json of an earlier run; its settings become the defaults")
    p.add_argument("--alpha", type=_probability, default=0.1)
    p.add_argument("--mode", choices=[m.value for m in Mode], default="fdr")
    p.add_argument("--gamma", type=_probability, default=None, help="required with --mode fdp")
    p.add_argument("--s", type=float, default=0.5, help="probability a decoy win goes to training")
    p.add_argument("--c0", type=_probability, default=None, help="override the null target-win probability")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic-fdpsd", action="store_true")
    p.add_argument("--out", default=".", help="output directory")
    _add_regions(p)
    _add_ensemble(p)

    p = sub.add_parser("filter", help="apply a filter without rescoring")
    p.add_argument("input")
    p.add_argument("--method", choices=FILTER_METHODS, required=True)
    p.add_argument("--alpha", type=_level, default=0.1, help="level in (0, 1]; 1 only for bh")
    p.add_argument("--gamma", type=_probability, default=None, help="required by fdpsd and grsd")
    p.add_argument("--c", type=_probability, default=None, help="null target-win probability for competition filters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic-fdpsd", action="store_true")
    p.add_argument("--out", default=".")
    _add_regions(p)

    for name, helptext in (("simulate", "write a simulated data set"), ("validate", "Monte Carlo error rates and power")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--sim", choices=("geometric", "betamix", "competition"), required=True)
        p.add_argument("--scenario", default="circle_center", help=f"geometric layout: {', '.join(SCENARIOS)}")
        p.add_argument("--m", type=_positive_int, default=None, help="number of hypotheses (betamix, competition)")
        p.add_argument("--false-null-fraction", type=float, default=0.0, help="competition only")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".")
        if name == "validate":
            p.add_argument("--method", choices=VALIDATE_METHODS, default="reset")
            p.add_argument("--alpha", type=_probability, nargs="+", default=[0.1])
            p.add_argument("--mode", choices=[m.value for m in Mode], default="fdr")
            p.add_argument("--gamma", type=_probability, default=None)
            p.add_argument("--s", type=float, default=0.5)
            p.add_argument("--runs", type=int, default=100)
            p.add_argument("--jobs", type=_positive_int, default=1, help="replicates run in parallel")
            p.add_argument("--deterministic-fdpsd", action="store_true")
            _add_regions(p)
            _add_ensemble(p)
    return parser


# --------------------------------------------------------------------------
# reset


REPLAY_KEYS = (
    "alpha", "mode", "gamma", "s", "c0", "seed", "deterministic_fdpsd", "a", "b1", "b2",
    "folds", "reps", "alpha0", "min_positive", "knn", "rf_trees", "nn_maxiter", "adjust_c", "threads",
)


def _config_defaults(path) -> dict:
    try:
        record = json.loads(Path(path).read_text())
        arguments = record["arguments"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot read arguments from --config {path}: {exc}") from None
    return {k: arguments[k] for k in REPLAY_KEYS if k in arguments}


def cmd_reset(args) -> dict:
    if args.mode == "fdp" and args.gamma is None:
        raise UsageError("--mode fdp needs --gamma")
    data = read_input(args.input)
    regions = _regions(args)
    if data.kind == "pvalue":
        c0 = null_win_prob(regions) if args.c0 is None else args.c0
    else:
        c0 = 0.5 if args.c0 is None else args.c0
    config = ResetConfig(
        alpha=args.alpha,
        mode=Mode(args.mode),
        gamma=args.gamma,
        s=args.s,
        c0=c0,
        ensemble=_ensemble_config(args),
        seed=SeedSpec(args.seed),
        deterministic_fdpsd=args.deterministic_fdpsd,
    )
    start = time.perf_counter()
    if data.kind == "pvalue":
        table, kept = pvalues_to_table(data.table, regions)
        result = run_reset(table, config)
        rows = kept[result.discoveries.indices]
        rescored = np.full(data.table.n, np.nan)
        rescored[kept] = result.rescored
        n_kept = int(result.kept.size)
    else:
        result = run_reset(data.table, config)
        rows = result.discoveries.indices
        rescored = result.rescored
        n_kept = int(result.kept.size)
    elapsed = time.perf_counter() - start

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    discovered = np.zeros(data.table.n, dtype=bool)
    discovered[rows] = True
    write_discoveries(out / "discoveries.tsv", data.ids, data.raw_scores, rescored, discovered)

    record = {
        "command": "reset",
        "version": __version__,
        "input": str(args.input),
        "input_kind": data.kind,
        "arguments": {k: getattr(args, k) for k in REPLAY_KEYS},
        "config": {
            "alpha": config.alpha,
            "mode": config.mode.value,
            "gamma": config.gamma,
            "s": config.s,
            "c0": config.c0,
            "c": config.c,
            "seed": args.seed,
            "deterministic_fdpsd": config.deterministic_fdpsd,
            "regions": {"a": regions.a, "b1": regions.b1, "b2": regions.b2} if data.kind == "pvalue" else None,
            "ensemble": _ensemble_record(args),
        },
        "counts": {
            "hypotheses": data.table.n,
            "entered": n_kept,
            "training_decoys": int(result.pseudo.training_decoys.size),
            "pseudo_targets": int(result.pseudo.pseudo_targets.size),
            "discoveries": int(rows.size),
        },
        "ensemble": {
            "selected_models": list(result.ensemble.winners),
            "positive_set_sizes": [int(v) for v in result.ensemble.positive_sizes],
            "side_info_used": list(result.ensemble.features.names),
        },
        "timing": {"seconds": round(elapsed, 3), "threads": args.threads},
    }
    (out / "run.json").write_text(json.dumps(record, indent=2) + "\n")
    LOGGER.info("%d discoveries written to %s", rows.size, out / "discoveries.tsv")
    return record


# --------------------------------------------------------------------------
# filter


def cmd_filter(args) -> dict:
    if args.method in ("fdpsd", "grsd") and args.gamma is None:
        raise UsageError(f"--method {args.method} needs --gamma")
    if args.alpha >= 1 and args.method != "bh":
        raise UsageError(f"--method {args.method} needs --alpha below 1")
    data = read_input(args.input)
    seeds = SeedSpec(args.seed)
    n = data.table.n
    rescored = np.full(n, np.nan)
    if args.method in ("grsd", "bh"):
        if data.kind != "pvalue":
            raise DataError(f"--method {args.method} needs a 'pvalue' column")
        p = data.table.pvalues
        if args.method == "bh":
            found = bh(p, args.alpha)
        else:
            found = gr_sd(p, args.alpha, args.gamma, seeds.stream("tie_break"))
        rows = found.indices
        c = None
    else:
        if data.kind == "pvalue":
            regions = _regions(args)
            table, kept = pvalues_to_table(data.table, regions)
            c_default = null_win_prob(regions)
        else:
            table, kept = data.table, np.arange(n)
            c_default = 0.5
        c = c_default if args.c is None else args.c
        params = FilterParams(alpha=args.alpha, c=c, gamma=args.gamma or 0.1)
        found = competition_filter(
            table.labels,
            table.scores,
            params,
            args.method,
            seeds.stream("tie_break"),
            seeds.stream("coinflip"),
            deterministic=args.deterministic_fdpsd,
        )
        rows = kept[found.indices]
        rescored[kept] = table.scores

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    discovered = np.zeros(n, dtype=bool)
    discovered[rows] = True
    write_discoveries(out / "discoveries.tsv", data.ids, data.raw_scores, rescored, discovered)
    record = {
        "command": "filter",
        "version": __version__,
        "input": str(args.input),
        "input_kind": data.kind,
        "config": {"method": args.method, "alpha": args.alpha, "gamma": args.gamma, "c": c, "seed": args.seed},
        "counts": {"hypotheses": n, "discoveries": int(np.asarray(rows).size)},
    }
    (out / "run.json").write_text(json.dumps(record, indent=2) + "\n")
    return record


# --------------------------------------------------------------------------
# simulate / validate


def _generator(args):
    if args.sim == "geometric":
        if args.scenario not in SCENARIOS:
            raise UsageError(f"unknown scenario {args.scenario!r}; choose from {', '.join(SCENARIOS)}")
        return partial(simulate_geometric, GeometricSimSpec(scenario=args.scenario))
    if args.sim == "betamix":
        spec = BetaMixtureSpec() if args.m is None else BetaMixtureSpec(m=args.m)
        return partial(simulate_beta_mixture, spec)
    if not 0 <= args.false_null_fraction <= 1:
        raise UsageError("--false-null-fraction must lie in [0, 1]")
    spec = CompetitionSimSpec(false_null_fraction=args.false_null_fraction, **({} if args.m is None else {"m": args.m}))
    return partial(simulate_competition, spec)


def cmd_simulate(args) -> dict:
    data, truth = _generator(args)(SeedSpec(args.seed).stream("simulation"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table(out / "data.tsv", data)
    write_truth(out / "truth.tsv", data.ids, truth.false_null)
    return {"command": "simulate", "rows": data.n, "false_nulls": truth.n_false}


def _reset_method(data, seeds, config, regions):
    config = replace(config, seed=seeds)
    if isinstance(data, PValueTable):
        return run_reset_pvalues(data, config, regions).discoveries.indices
    return run_reset(data, config).discoveries.indices


def _filter_method(data, seeds, name, params, regions, deterministic):
    if name == "bh":
        return bh(data.pvalues, params.alpha).indices
    if name == "grsd":
        return gr_sd(data.pvalues, params.alpha, params.gamma, seeds.stream("tie_break")).indices
    if isinstance(data, PValueTable):
        table, kept = pvalues_to_table(data, regions)
    else:
        table, kept = data, np.arange(data.n)
    found = competition_filter(
        table.labels, table.scores, params, name, seeds.stream("tie_break"), seeds.stream("coinflip"), deterministic
    )
    return kept[found.indices]


REPORT_FIELDS = (
    "alpha",
    "runs",
    "empirical_fdr",
    "fdr_se",
    "power",
    "power_se",
    "p_fdp_exceed",
    "p_fdp_exceed_se",
    "mean_discoveries",
)


def cmd_validate(args) -> dict:
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    if args.sim == "competition" and args.method in ("bh", "grsd"):
        raise UsageError(f"--method {args.method} needs p-values; use --sim geometric or betamix")
    needs_gamma = args.method in ("fdpsd", "grsd") or (args.method == "reset" and args.mode == "fdp")
    if needs_gamma and args.gamma is None:
        raise UsageError("this method needs --gamma")
    generator = _generator(args)
    regions = _regions(args)
    rows = []
    for alpha in args.alpha:
        if args.method == "reset":
            c0 = null_win_prob(regions) if args.sim != "competition" else 0.5
            config = ResetConfig(
                alpha=alpha,
                mode=Mode(args.mode),
                gamma=args.gamma,
                s=args.s,
                c0=c0,
                ensemble=_ensemble_config(args),
                deterministic_fdpsd=args.deterministic_fdpsd,
            )
            method = partial(_reset_method, config=config, regions=regions)
        else:
            c = null_win_prob(regions) if args.sim != "competition" else 0.5
            params = FilterParams(alpha=alpha, c=c, gamma=args.gamma or 0.1)
            method = partial(
                _filter_method, name=args.method, params=params, regions=regions, deterministic=args.deterministic_fdpsd
            )
        report = monte_carlo_validate(generator, method, alpha, args.runs, SeedSpec(args.seed), n_jobs=args.jobs)
        rows.append(report.as_row())
        LOGGER.info("alpha=%g FDR=%.4f (se %.4f) power=%.4f", alpha, report.fdr, report.fdr_se, report.power)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "report.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})
    return {"command": "validate", "rows": rows}


COMMANDS = {"reset": cmd_reset, "filter": cmd_filter, "simulate": cmd_simulate, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            parser.reset_parser.set_defaults(**_config_defaults(args.config))
            args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
        )
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        LOGGER.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
