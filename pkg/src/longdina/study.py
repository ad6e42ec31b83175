"""Monte Carlo study runner: condition x rho x replication grids, identical
datasets for both estimators, per-replication records, and aggregate tables.

Determinism: replication records are produced in a fixed grid order (the
process pool preserves submission order), every stream derives from the
master seed, and floats are written with full round-trip precision, so
records.csv is byte-identical for any worker count. Wall-clock timings are
therefore kept out of records.csv and written to timings.csv instead.
"""

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvariantViolation
from .joint import McmcConfig, PriorSpec, fit_joint
from .metrics import aar
from .simulate import DEFAULT_TRUE_PARAMS, Dataset, GenConfig, gen_dataset, split_rng
from .stepwise import OptimizerConfig, fit_stepwise
from .structural import StructuralParams

DEFAULT_CONDITIONS = ((200, 6), (400, 18), (600, 30))
SENSITIVITY_RHO = (0.0, 0.2, 0.4, 0.6, 0.8)


@dataclass(frozen=True)
class StudyConfig:
    """One study grid: conditions, correlation levels, replication count,
    estimator settings, and the master seed."""

    conditions: tuple = DEFAULT_CONDITIONS
    rho_list: tuple = (0.4,)
    replications: int = 20
    estimators: tuple = ("joint", "stepwise")
    # generation
    n_attributes: int = 2
    n_waves: int = 2
    n_covariates: int = 3
    item_range: tuple = (0.15, 0.25)
    true_params: StructuralParams = DEFAULT_TRUE_PARAMS
    # model fit
    monotone: bool = True
    # joint sampler (desk scale; --full raises these to paper scale)
    chains: int = 2
    burn_in: int = 500
    kept: int = 1000
    thin: int = 1
    proposal_sd: float = 0.25
    adapt_window: int = 50
    psrf_threshold: float = 1.2
    # stepwise
    em_tol: float = 1e-6
    em_max_iter: int = 500
    opt_n_starts: int = 5
    opt_grad_step: float = 1e-5
    opt_gtol: float = 1e-5
    opt_ftol_rel: float = 1e-10
    opt_max_iter: int = 500
    opt_coef_bound: float = 15.0
    # execution
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigurationError("replications must be >= 1")
        if not self.conditions:
            raise ConfigurationError("need at least one (N, J) condition")
        unknown = set(self.estimators) - {"joint", "stepwise"}
        if unknown:
            raise ConfigurationError(f"unknown estimators: {sorted(unknown)}")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")

    def at_full_scale(self) -> "StudyConfig":
        """Paper-scale preset: 100 replications, 1000 + 2000 MCMC sweeps."""
        return replace(self, replications=100, burn_in=1000, kept=2000)


def _cell_seed(config: StudyConfig, tag: str, n: int, j: int, rho: float, rep: int) -> int:
    rho_milli = int(round(rho * 1000))
    return int(split_rng(config.seed, tag, n, j, rho_milli, rep).integers(2**62))


def record_columns(config: StudyConfig) -> list:
    """Fixed records.csv column order for a study configuration."""
    k, t = config.n_attributes, config.n_waves
    c = config.n_covariates
    cols = ["rho", "n_learners", "n_items", "rep", "estimator", "status", "error", "dataset_hash"]
    cols += [f"aar_a{a + 1}_w{w + 1}" for a in range(k) for w in range(t)]
    for w in range(t):
        cols += [
            f"item_guess_mae_w{w + 1}",
            f"item_guess_mse_w{w + 1}",
            f"item_slip_mae_w{w + 1}",
            f"item_slip_mse_w{w + 1}",
        ]
    cols += [f"est_initial_{a + 1}_{ci}" for a in range(k) for ci in range(1 + c)]
    cols += [f"est_acquire_{a + 1}_{ci}" for a in range(k) for ci in range(1 + c)]
    if not config.monotone:
        cols += [f"est_lose_{a + 1}_{ci}" for a in range(k) for ci in range(1 + c)]
    cols += ["psrf_max", "converged", "optimizer_status", "n_degenerate_cep"]
    return cols


def _item_error_fields(record, prefix: str, estimates: np.ndarray, truth: np.ndarray, wave: int):
    err = estimates - truth
    record[f"{prefix}_mae_w{wave + 1}"] = float(np.abs(err).mean())
    record[f"{prefix}_mse_w{wave + 1}"] = float((err**2).mean())


def _coef_fields(record, group: str, estimates: np.ndarray):
    for a in range(estimates.shape[0]):
        for ci in range(estimates.shape[1]):
            record[f"est_{group}_{a + 1}_{ci}"] = float(estimates[a, ci])


def run_replication(condition, rho: float, rep: int, config: StudyConfig) -> list:
    """Generate one dataset and run every enabled estimator on it.

    Returns one record dict per estimator. A failing estimator yields a
    record with status 'failed:<estimator>' and the error message; the other
    estimator still runs.
    """
    n, j = condition
    gen = GenConfig(
        n_learners=n,
        n_items=j,
        n_attributes=config.n_attributes,
        n_waves=config.n_waves,
        n_covariates=config.n_covariates,
        rho=rho,
        item_range=config.item_range,
        true_params=config.true_params,
        seed=_cell_seed(config, "dataset", n, j, rho, rep),
    )
    dataset = gen_dataset(gen)
    data_hash = dataset.content_hash()

    records = []
    for estimator in config.estimators:
        base = {
            "rho": rho,
            "n_learners": n,
            "n_items": j,
            "rep": rep,
            "estimator": estimator,
            "status": "ok",
            "error": "",
            "dataset_hash": data_hash,
        }
        started = time.perf_counter()
        try:
            if estimator == "joint":
                _run_joint(base, dataset, config, _cell_seed(config, "joint", n, j, rho, rep))
            else:
                _run_stepwise(
                    base, dataset, config, _cell_seed(config, "stepwise", n, j, rho, rep)
                )
        except Exception as exc:  # noqa: BLE001 - failures become records
            base["status"] = f"failed:{estimator}"
            base["error"] = f"{type(exc).__name__}: {exc}"
        base["_runtime_s"] = time.perf_counter() - started
        if dataset.content_hash() != data_hash:
            raise InvariantViolation("estimator mutated the shared dataset")
        records.append(base)
    return records


def _aar_fields(record, estimated_bits: np.ndarray, truth: np.ndarray):
    rates = aar(estimated_bits, truth)  # (K, T)
    for a in range(rates.shape[0]):
        for w in range(rates.shape[1]):
            record[f"aar_a{a + 1}_w{w + 1}"] = float(rates[a, w])


def _run_joint(record, dataset: Dataset, config: StudyConfig, seed: int):
    priors = PriorSpec(monotone=config.monotone)
    mcmc = McmcConfig(
        chains=config.chains,
        burn_in=config.burn_in,
        kept=config.kept,
        thin=config.thin,
        proposal_sd=config.proposal_sd,
        adapt_window=config.adapt_window,
        seed=seed,
    )
    summary = fit_joint(
        dataset.responses,
        dataset.covariates,
        dataset.qmatrix,
        priors=priors,
        mcmc=mcmc,
        psrf_threshold=config.psrf_threshold,
    )
    k = config.n_attributes
    c = dataset.covariates.shape[1]
    j = dataset.qmatrix.n_items
    _aar_fields(record, summary.map_profile_bits, dataset.true_profiles)
    guess = summary.point_estimates("guess", (j,))
    slip = summary.point_estimates("slip", (j,))
    for w in range(config.n_waves):  # single estimate, constant across waves
        _item_error_fields(record, "item_guess", guess, dataset.true_items.guess, w)
        _item_error_fields(record, "item_slip", slip, dataset.true_items.slip, w)
    _coef_fields(record, "initial", summary.point_estimates("initial", (k, 1 + c)))
    _coef_fields(record, "acquire", summary.point_estimates("acquire", (k, 1 + c)))
    if not config.monotone:
        _coef_fields(record, "lose", summary.point_estimates("lose", (k, 1 + c)))
    record["psrf_max"] = summary.psrf_max
    record["converged"] = int(summary.converged)


def _run_stepwise(record, dataset: Dataset, config: StudyConfig, seed: int):
    opt = OptimizerConfig(
        n_starts=config.opt_n_starts,
        grad_step=config.opt_grad_step,
        gtol=config.opt_gtol,
        ftol_rel=config.opt_ftol_rel,
        max_iter=config.opt_max_iter,
        coef_bound=config.opt_coef_bound,
    )
    result = fit_stepwise(
        dataset.responses,
        dataset.covariates,
        dataset.qmatrix,
        monotone=config.monotone,
        em_tol=config.em_tol,
        em_max_iter=config.em_max_iter,
        opt=opt,
        seed=seed,
    )
    profiles = dataset.qmatrix.profiles()
    _aar_fields(record, profiles[result.assignments], dataset.true_profiles)
    for w, fit in enumerate(result.wave_fits):
        _item_error_fields(record, "item_guess", fit.item_params.guess, dataset.true_items.guess, w)
        _item_error_fields(record, "item_slip", fit.item_params.slip, dataset.true_items.slip, w)
    _coef_fields(record, "initial", result.params.initial)
    _coef_fields(record, "acquire", result.params.acquire)
    if not config.monotone:
        _coef_fields(record, "lose", result.params.lose)
    record["optimizer_status"] = result.optimizer_status
    record["n_degenerate_cep"] = sum(len(d) for d in result.cep_degenerate)


def _replication_task(args):
    condition, rho, rep, config = args
    return run_replication(condition, rho, rep, config)


@dataclass(frozen=True)
class StudyReport:
    """Aggregated study output plus the raw per-replication records."""

    tables: dict
    records: list
    out_dir: Path

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.records if r["status"] != "ok")


def run_study(config: StudyConfig, out_dir) -> StudyReport:
    """Run the full grid, write records, tables, manifest, and report.

    Raises ConfigurationError up front for an unwritable output directory.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigurationError(f"output directory {out} not writable: {exc}") from exc

    tasks = [
        ((n, j), rho, rep, config)
        for rho in config.rho_list
        for (n, j) in config.conditions
        for rep in range(config.replications)
    ]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            per_task = list(pool.map(_replication_task, tasks))
    else:
        per_task = [_replication_task(t) for t in tasks]

    records = [rec for group in per_task for rec in group]
    timings = [
        {
            "rho": r["rho"],
            "n_learners": r["n_learners"],
            "n_items": r["n_items"],
            "rep": r["rep"],
            "estimator": r["estimator"],
            "runtime_s": r.pop("_runtime_s"),
        }
        for r in records
    ]

    write_records(out / "records.csv", records, record_columns(config))
    _write_rows(out / "timings.csv", timings, list(timings[0].keys()) if timings else [])
    write_manifest_config(out / "manifest.txt", config)

    tables = aggregate_records(records, config)
    write_tables(tables, out)
    write_markdown_report(out / "report.md", tables, config)
    return StudyReport(tables=tables, records=records, out_dir=out)


def write_records(path, records, columns):
    rows = []
    for rec in records:
        rows.append({c: _cell_text(rec.get(c, "")) for c in columns})
    _write_rows(path, rows, columns)


def _cell_text(value) -> str:
    if isinstance(value, float):  # incl. numpy scalars; repr round-trips exactly
        return repr(float(value))
    return str(value)


def _write_rows(path, rows, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: _cell_text(row.get(c, "")) for c in columns})


def load_records(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def aggregate_records(records, config: StudyConfig) -> dict:
    """Aggregate per-replication records into the study tables.

    Failed records are excluded from metric aggregates but counted in the
    convergence table. Estimates are compared against the configured true
    parameters; item-parameter errors were already reduced per replication.
    """
    k, t, c = config.n_attributes, config.n_waves, config.n_covariates
    cells = {}
    for rec in records:
        key = (float(rec["rho"]), int(rec["n_learners"]), int(rec["n_items"]), rec["estimator"])
        cells.setdefault(key, []).append(rec)

    aar_rows, item_rows, initial_rows, acquire_rows, conv_rows = [], [], [], [], []
    for key in sorted(cells, key=lambda x: (x[0], x[1], x[2], x[3])):
        rho, n, j, estimator = key
        rows = cells[key]
        ok = [r for r in rows if r["status"] == "ok"]
        n_failed = len(rows) - len(ok)
        base = {"rho": rho, "n_learners": n, "n_items": j, "estimator": estimator}

        conv = dict(base)
        conv["n_replications"] = len(rows)
        conv["n_failed"] = n_failed
        if estimator == "joint":
            flags = [float(r["converged"]) for r in ok if r.get("converged", "") != ""]
            psrfs = [float(r["psrf_max"]) for r in ok if r.get("psrf_max", "") != ""]
            conv["psrf_pass_rate"] = float(np.mean(flags)) if flags else ""
            conv["mean_psrf_max"] = float(np.mean(psrfs)) if psrfs else ""
            conv["optimizer_ok_rate"] = ""
            conv["n_degenerate_cep"] = ""
        else:
            statuses = [r.get("optimizer_status", "") for r in ok]
            degen = [int(r["n_degenerate_cep"]) for r in ok if r.get("n_degenerate_cep", "") != ""]
            conv["psrf_pass_rate"] = ""
            conv["mean_psrf_max"] = ""
            conv["optimizer_ok_rate"] = (
                float(np.mean([s == "ok" for s in statuses])) if statuses else ""
            )
            conv["n_degenerate_cep"] = int(np.sum(degen)) if degen else 0
        conv_rows.append(conv)

        if not ok:
            continue

        for w in range(t):
            row = dict(base)
            row["wave"] = w + 1
            for a in range(k):
                row[f"aar_a{a + 1}"] = float(
                    np.mean([float(r[f"aar_a{a + 1}_w{w + 1}"]) for r in ok])
                )
            aar_rows.append(row)

        for metric in ("mae", "rmse"):
            row = dict(base)
            row["metric"] = metric
            for w in range(t):
                for grp in ("guess", "slip"):
                    if metric == "mae":
                        v = np.mean([float(r[f"item_{grp}_mae_w{w + 1}"]) for r in ok])
                    else:
                        v = np.sqrt(np.mean([float(r[f"item_{grp}_mse_w{w + 1}"]) for r in ok]))
                    row[f"{grp}_w{w + 1}"] = float(v)
            item_rows.append(row)

        initial_rows += _coef_metric_rows(base, ok, "initial", config.true_params.initial, k, c)
        acquire_rows += _coef_metric_rows(base, ok, "acquire", config.true_params.acquire, k, c)

    return {
        "table_aar": aar_rows,
        "table_items": item_rows,
        "table_beta": initial_rows,
        "table_gamma": acquire_rows,
        "convergence": conv_rows,
    }


def _coef_metric_rows(base, ok_records, group: str, truth: np.ndarray, k: int, c: int) -> list:
    """MAE and RMSE rows for one coefficient group: intercepts per attribute,
    slopes per attribute both averaged over covariates and per covariate."""
    out = []
    est = np.array(
        [
            [[float(r[f"est_{group}_{a + 1}_{ci}"]) for ci in range(1 + c)] for a in range(k)]
            for r in ok_records
        ]
    )  # (R, K, 1+C)
    err = est - truth[None, :, :]
    for metric in ("mae", "rmse"):
        row = dict(base)
        row["metric"] = metric

        def reduce(e):
            return float(np.mean(np.abs(e)) if metric == "mae" else np.sqrt(np.mean(e**2)))

        for a in range(k):
            row[f"intercept_{a + 1}"] = reduce(err[:, a, 0])
            if c > 0:
                row[f"slope_{a + 1}"] = reduce(err[:, a, 1:])
                for ci in range(1, 1 + c):
                    row[f"slope_{a + 1}_z{ci}"] = reduce(err[:, a, ci])
        out.append(row)
    return out


def write_tables(tables: dict, out_dir):
    out = Path(out_dir)
    for name, rows in tables.items():
        columns = list(rows[0].keys()) if rows else []
        _write_rows(out / f"{name}.csv", rows, columns)


def write_markdown_report(path, tables: dict, config: StudyConfig):
    """Markdown summary with paper-style Joint | Stepwise column blocks."""
    lines = ["# Study report", ""]
    lines.append(
        f"Conditions: {list(config.conditions)}; rho: {list(config.rho_list)}; "
        f"replications: {config.replications}; estimators: {list(config.estimators)}; "
        f"seed: {config.seed}"
    )
    lines.append("")

    def block(title, rows, value_cols):
        lines.append(f"## {title}")
        lines.append("")
        if not rows:
            lines.append("(no successful replications)")
            lines.append("")
            return
        key_cols = [c for c in rows[0] if c not in value_cols and c != "estimator"]
        estimators = sorted({r["estimator"] for r in rows})
        header = key_cols + [f"{e}:{v}" for e in estimators for v in value_cols]
        lines.append("| " + " | ".join(header) + " |")
        lines.append("|" + "---|" * len(header))
        grouped = {}
        for r in rows:
            gk = tuple(r[c] for c in key_cols)
            grouped.setdefault(gk, {})[r["estimator"]] = r
        for gk in grouped:
            cells = [str(v) for v in gk]
            for e in estimators:
                r = grouped[gk].get(e, {})
                cells += [
                    f"{r[v]:.4f}" if isinstance(r.get(v), float) else str(r.get(v, ""))
                    for v in value_cols
                ]
            lines.append("| " + " | ".join(cells) + " |")
        lines.append("")

    aar_cols = [c for c in (tables["table_aar"][0] if tables["table_aar"] else {}) if c.startswith("aar_")]
    block("Attribute recovery (AAR)", tables["table_aar"], aar_cols)
    item_cols = [
        c
        for c in (tables["table_items"][0] if tables["table_items"] else {})
        if c.startswith(("guess_", "slip_"))
    ]
    block("Item parameter recovery", tables["table_items"], item_cols)
    for title, name in (
        ("Initial-mastery coefficients", "table_beta"),
        ("Acquisition coefficients", "table_gamma"),
    ):
        rows = tables[name]
        cols = [
            c for c in (rows[0] if rows else {}) if c.startswith(("intercept_", "slope_"))
        ]
        block(title, rows, cols)
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


MANIFEST_VERSION_KEY = "study.format"


def write_manifest_config(path, config: StudyConfig):
    """Serialize a StudyConfig as key=value text; doubles as a config file."""
    from .dataio import write_manifest

    entries = {
        MANIFEST_VERSION_KEY: 1,
        "study.conditions": ",".join(f"{n}x{j}" for n, j in config.conditions),
        "study.rho_list": ",".join(repr(float(r)) for r in config.rho_list),
        "study.replications": config.replications,
        "study.estimators": ",".join(config.estimators),
        "study.seed": config.seed,
        "study.workers": config.workers,
        "study.monotone": int(config.monotone),
        "gen.n_attributes": config.n_attributes,
        "gen.n_waves": config.n_waves,
        "gen.n_covariates": config.n_covariates,
        "gen.item_range_low": repr(config.item_range[0]),
        "gen.item_range_high": repr(config.item_range[1]),
        "gen.true_initial": ",".join(repr(float(v)) for v in config.true_params.initial.ravel()),
        "gen.true_acquire": ",".join(repr(float(v)) for v in config.true_params.acquire.ravel()),
        "gen.true_monotone": int(config.true_params.monotone),
        "mcmc.chains": config.chains,
        "mcmc.burn_in": config.burn_in,
        "mcmc.kept": config.kept,
        "mcmc.thin": config.thin,
        "mcmc.proposal_sd": repr(config.proposal_sd),
        "mcmc.adapt_window": config.adapt_window,
        "mcmc.psrf_threshold": repr(config.psrf_threshold),
        "em.tol": repr(config.em_tol),
        "em.max_iter": config.em_max_iter,
        "opt.n_starts": config.opt_n_starts,
        "opt.grad_step": repr(config.opt_grad_step),
        "opt.gtol": repr(config.opt_gtol),
        "opt.ftol_rel": repr(config.opt_ftol_rel),
        "opt.max_iter": config.opt_max_iter,
        "opt.coef_bound": repr(config.opt_coef_bound),
    }
    if config.true_params.lose is not None:
        entries["gen.true_lose"] = ",".join(
            repr(float(v)) for v in config.true_params.lose.ravel()
        )
    write_manifest(path, entries)


def config_from_entries(entries: dict) -> StudyConfig:
    """Build a StudyConfig from key=value entries (manifest or config file).

    Unknown keys raise; missing keys fall back to defaults.
    """
    known = {
        MANIFEST_VERSION_KEY,
        "study.conditions",
        "study.rho_list",
        "study.replications",
        "study.estimators",
        "study.seed",
        "study.workers",
        "study.monotone",
        "gen.n_attributes",
        "gen.n_waves",
        "gen.n_covariates",
        "gen.item_range_low",
        "gen.item_range_high",
        "gen.true_initial",
        "gen.true_acquire",
        "gen.true_lose",
        "gen.true_monotone",
        "mcmc.chains",
        "mcmc.burn_in",
        "mcmc.kept",
        "mcmc.thin",
        "mcmc.proposal_sd",
        "mcmc.adapt_window",
        "mcmc.psrf_threshold",
        "em.tol",
        "em.max_iter",
        "opt.n_starts",
        "opt.grad_step",
        "opt.gtol",
        "opt.ftol_rel",
        "opt.max_iter",
        "opt.coef_bound",
    }
    unknown = set(entries) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")

    kwargs = {}
    if "study.conditions" in entries:
        conditions = []
        for token in entries["study.conditions"].split(","):
            try:
                n_txt, j_txt = token.lower().split("x")
                conditions.append((int(n_txt), int(j_txt)))
            except ValueError as exc:
                raise ConfigurationError(f"bad condition {token!r}; expected NxJ") from exc
        kwargs["conditions"] = tuple(conditions)
    if "study.rho_list" in entries:
        kwargs["rho_list"] = tuple(float(v) for v in entries["study.rho_list"].split(","))
    if "study.estimators" in entries:
        kwargs["estimators"] = tuple(
            s.strip() for s in entries["study.estimators"].split(",") if s.strip()
        )

    int_keys = {
        "study.replications": "replications",
        "study.seed": "seed",
        "study.workers": "workers",
        "gen.n_attributes": "n_attributes",
        "gen.n_waves": "n_waves",
        "gen.n_covariates": "n_covariates",
        "mcmc.chains": "chains",
        "mcmc.burn_in": "burn_in",
        "mcmc.kept": "kept",
        "mcmc.thin": "thin",
        "mcmc.adapt_window": "adapt_window",
        "em.max_iter": "em_max_iter",
        "opt.n_starts": "opt_n_starts",
        "opt.max_iter": "opt_max_iter",
    }
    float_keys = {
        "mcmc.proposal_sd": "proposal_sd",
        "mcmc.psrf_threshold": "psrf_threshold",
        "em.tol": "em_tol",
        "opt.grad_step": "opt_grad_step",
        "opt.gtol": "opt_gtol",
        "opt.ftol_rel": "opt_ftol_rel",
        "opt.coef_bound": "opt_coef_bound",
    }
    for key, attr in int_keys.items():
        if key in entries:
            try:
                kwargs[attr] = int(entries[key])
            except ValueError as exc:
                raise ConfigurationError(f"{key} must be an integer") from exc
    for key, attr in float_keys.items():
        if key in entries:
            try:
                kwargs[attr] = float(entries[key])
            except ValueError as exc:
                raise ConfigurationError(f"{key} must be a number") from exc
    if "study.monotone" in entries:
        kwargs["monotone"] = bool(int(entries["study.monotone"]))
    if "gen.item_range_low" in entries or "gen.item_range_high" in entries:
        kwargs["item_range"] = (
            float(entries.get("gen.item_range_low", 0.15)),
            float(entries.get("gen.item_range_high", 0.25)),
        )

    k = kwargs.get("n_attributes", 2)
    c = kwargs.get("n_covariates", 3)
    if "gen.true_initial" in entries:
        shape = (k, 1 + c)
        true_monotone = bool(int(entries.get("gen.true_monotone", 1)))
        kwargs["true_params"] = StructuralParams(
            initial=_parse_floats(entries["gen.true_initial"]).reshape(shape),
            acquire=_parse_floats(entries["gen.true_acquire"]).reshape(shape),
            lose=(
                _parse_floats(entries["gen.true_lose"]).reshape(shape)
                if "gen.true_lose" in entries
                else None
            ),
            monotone=true_monotone,
        )
    return StudyConfig(**kwargs)


def _parse_floats(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise ConfigurationError(f"bad float list: {text!r}") from exc


def load_study_config(path) -> StudyConfig:
    from .dataio import read_manifest

    return config_from_entries(read_manifest(path))


def reaggregate(study_dir, out_dir=None) -> dict:
    """Re-aggregate saved records without recomputing; writes fresh tables."""
    study = Path(study_dir)
    config = load_study_config(study / "manifest.txt")
    records = load_records(study / "records.csv")
    tables = aggregate_records(records, config)
    out = Path(out_dir) if out_dir is not None else study
    out.mkdir(parents=True, exist_ok=True)
    write_tables(tables, out)
    write_markdown_report(out / "report.md", tables, config)
    return tables
