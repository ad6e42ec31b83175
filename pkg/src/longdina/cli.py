"""Command-line interface.

Subcommands:

    simulate      generate one dataset directory
    fit-joint     fit the joint Bayesian model to a dataset directory
    fit-stepwise  fit the bias-corrected three-step model
    study         run a condition x rho x replication grid
    report        re-aggregate a saved study's records without recomputing

Precedence: CLI flags override the --config file, which overrides defaults.
The default output root comes from the LONGDINA_OUT environment variable
(falling back to ./longdina-out). Exit codes: 0 success, 1 configuration
error, 2 compute failure.
"""

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from .dataio import load_dataset, read_manifest, save_dataset
from .errors import ConfigurationError
from .estimators import JointEstimator, StepwiseEstimator
from .simulate import GenConfig, gen_dataset
from .stepwise import dump_stepwise_audit
from .study import (
    SENSITIVITY_RHO,
    StudyConfig,
    config_from_entries,
    reaggregate,
    run_study,
)


class _UsageError(Exception):
    def __init__(self, parser, message):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage errors with exit code 1."""

    def error(self, message):
        raise _UsageError(self, message)


def _output_root() -> Path:
    return Path(os.environ.get("LONGDINA_OUT", "longdina-out"))


def _parse_condition(text: str):
    try:
        n_txt, j_txt = text.lower().split("x")
        return int(n_txt), int(j_txt)
    except ValueError as exc:
        raise ConfigurationError(f"bad condition {text!r}; expected NxJ, e.g. 200x6") from exc


def build_parser() -> _Parser:
    parser = _Parser(prog="longdina", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a dataset directory")
    sim.add_argument("--condition", default="200x6", help="NxJ, e.g. 200x6")
    sim.add_argument("--rho", type=float, default=0.4)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--waves", type=int, default=2)
    sim.add_argument("--covariates", type=int, default=3)
    sim.add_argument("--out", default=None)
    sim.add_argument("--quiet", action="store_true")

    for name in ("fit-joint", "fit-stepwise"):
        fit = sub.add_parser(name, help=f"{name.replace('-', ' ')} on a dataset directory")
        fit.add_argument("--data", required=True, help="dataset directory from `simulate`")
        fit.add_argument("--seed", type=int, default=0)
        fit.add_argument("--quiet", action="store_true")
        if name == "fit-joint":
            fit.add_argument("--chains", type=int, default=2)
            fit.add_argument("--burn-in", type=int, default=500)
            fit.add_argument("--kept", type=int, default=1000)
            fit.add_argument("--thin", type=int, default=1)
            fit.add_argument("--trace", default=None, help="dump chain traces to this CSV")
        else:
            fit.add_argument("--audit-dir", default=None, help="dump Step-1/2 audit CSVs here")

    study = sub.add_parser("study", help="run the Monte Carlo grid")
    study.add_argument("--config", default=None, help="key=value config file")
    study.add_argument("--condition", action="append", default=None, help="NxJ; repeatable")
    study.add_argument("--rho", action="append", type=float, default=None, help="repeatable")
    study.add_argument("--sensitivity", action="store_true", help="rho sweep preset 0..0.8")
    study.add_argument("--reps", type=int, default=None)
    study.add_argument("--estimators", default=None, help="comma list: joint,stepwise")
    study.add_argument("--seed", type=int, default=None)
    study.add_argument("--workers", type=int, default=None)
    study.add_argument("--full", action="store_true", help="paper-scale replications and chains")
    study.add_argument("--out", default=None)
    study.add_argument("--quiet", action="store_true")

    rep = sub.add_parser("report", help="re-aggregate a saved study")
    rep.add_argument("--records", required=True, help="study directory with records.csv")
    rep.add_argument("--out", default=None)
    rep.add_argument("--quiet", action="store_true")
    return parser


def _cmd_simulate(args) -> int:
    n, j = _parse_condition(args.condition)
    config = GenConfig(
        n_learners=n,
        n_items=j,
        n_waves=args.waves,
        n_covariates=args.covariates,
        rho=args.rho,
        seed=args.seed,
    )
    out = Path(args.out) if args.out else _output_root() / f"dataset-{n}x{j}-seed{args.seed}"
    save_dataset(gen_dataset(config), out)
    if not args.quiet:
        print(f"dataset written to {out}")
    return 0


def _cmd_fit_joint(args) -> int:
    dataset = load_dataset(args.data)
    est = JointEstimator(
        q_matrix=dataset.qmatrix,
        chains=args.chains,
        burn_in=args.burn_in,
        kept=args.kept,
        thin=args.thin,
        seed=args.seed,
        trace_path=args.trace,
    )
    est.fit(dataset.responses, dataset.covariates)
    summary = est.summary_
    print(f"{'parameter':<16} {'mean':>9} {'sd':>9} {'2.5%':>9} {'97.5%':>9} {'psrf':>7}")
    for name, p in summary.params.items():
        print(
            f"{name:<16} {p.mean:>9.4f} {p.sd:>9.4f} {p.lower95:>9.4f} "
            f"{p.upper95:>9.4f} {p.psrf:>7.3f}"
        )
    print(f"max PSRF: {summary.psrf_max:.3f} (converged: {summary.converged})")
    for block, rate in summary.acceptance_rates.items():
        print(f"acceptance {block}: {rate:.3f}")
    return 0


def _cmd_fit_stepwise(args) -> int:
    dataset = load_dataset(args.data)
    est = StepwiseEstimator(q_matrix=dataset.qmatrix, seed=args.seed)
    est.fit(dataset.responses, dataset.covariates)
    result = est.result_
    for t, fit in enumerate(result.wave_fits):
        print(f"wave {t + 1}: EM loglik {fit.loglik:.3f} in {fit.n_iter} iterations")
        print(f"  guess: {_fmt_vec(fit.item_params.guess)}")
        print(f"  slip:  {_fmt_vec(fit.item_params.slip)}")
    print(f"initial coefficients (per attribute):\n{est.initial_coef_}")
    print(f"acquisition coefficients (per attribute):\n{est.acquire_coef_}")
    if est.lose_coef_ is not None:
        print(f"loss coefficients (per attribute):\n{est.lose_coef_}")
    print(f"corrected loglik: {result.loglik:.3f} ({result.optimizer_status})")
    if args.audit_dir:
        dump_stepwise_audit(result, args.audit_dir)
        if not args.quiet:
            print(f"audit files written to {args.audit_dir}")
    return 0


def _fmt_vec(values) -> str:
    return " ".join(f"{v:.3f}" for v in values)


def _cmd_study(args) -> int:
    if args.config:
        config = config_from_entries(read_manifest(args.config))
    else:
        config = StudyConfig()
    if args.full:
        config = config.at_full_scale()
    overrides = {}
    if args.condition:
        overrides["conditions"] = tuple(_parse_condition(c) for c in args.condition)
    if args.sensitivity:
        overrides["rho_list"] = SENSITIVITY_RHO
    if args.rho:
        overrides["rho_list"] = tuple(args.rho)
    if args.reps is not None:
        overrides["replications"] = args.reps
    if args.estimators is not None:
        overrides["estimators"] = tuple(
            s.strip() for s in args.estimators.split(",") if s.strip()
        )
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        config = replace(config, **overrides)

    out = Path(args.out) if args.out else _output_root() / "study"
    report = run_study(config, out)
    if not args.quiet:
        print(f"{len(report.records)} records written to {out}")
    if report.n_failed:
        print(f"{report.n_failed} estimator runs failed", file=sys.stderr)
        return 2
    return 0


def _cmd_report(args) -> int:
    tables = reaggregate(args.records, args.out)
    if not args.quiet:
        for name, rows in tables.items():
            print(f"{name}: {len(rows)} rows")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        exc.parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        handler = {
            "simulate": _cmd_simulate,
            "fit-joint": _cmd_fit_joint,
            "fit-stepwise": _cmd_fit_stepwise,
            "study": _cmd_study,
            "report": _cmd_report,
        }[args.command]
        return handler(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
