"""Dataset export/import as a directory of plain-text tabular files.

Layout (all comma-separated with a header row, floats written with full
round-trip precision):

    responses.csv   learner,item,wave,y          one row per response
    covariates.csv  learner,z1,...,zC
    truth.csv       learner,wave,attribute,mastered
    qmatrix.csv     item,a1,...,aK
    manifest.txt    key=value lines: config echo, seed, true item and
                    structural parameters

Indices in the files are 1-based; arrays in memory are 0-based.
"""

import csv
from pathlib import Path

import numpy as np

from .errors import InputError
from .measurement import ItemParams, QMatrix
from .simulate import Dataset, GenConfig
from .structural import StructuralParams


def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_list(arr) -> str:
    return ",".join(_fmt(v) for v in np.asarray(arr, dtype=float).ravel())


def save_dataset(dataset: Dataset, out_dir) -> Path:
    """Write a dataset directory; returns its path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n, j, t = dataset.responses.shape
    k = dataset.qmatrix.n_attributes
    c = dataset.covariates.shape[1]

    with open(out / "responses.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["learner", "item", "wave", "y"])
        for i in range(n):
            for wave in range(t):
                for item in range(j):
                    w.writerow([i + 1, item + 1, wave + 1, int(dataset.responses[i, item, wave])])

    with open(out / "covariates.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["learner"] + [f"z{c_i + 1}" for c_i in range(c)])
        for i in range(n):
            w.writerow([i + 1] + [_fmt(v) for v in dataset.covariates[i]])

    with open(out / "truth.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["learner", "wave", "attribute", "mastered"])
        for i in range(n):
            for wave in range(t):
                for attr in range(k):
                    w.writerow([i + 1, wave + 1, attr + 1, int(dataset.true_profiles[i, wave, attr])])

    with open(out / "qmatrix.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["item"] + [f"a{a + 1}" for a in range(k)])
        for item in range(j):
            w.writerow([item + 1] + dataset.qmatrix.entries[item].tolist())

    cfg = dataset.config
    manifest = {
        "gen.n_learners": n,
        "gen.n_items": j,
        "gen.n_attributes": k,
        "gen.n_waves": t,
        "gen.n_covariates": c,
        "gen.rho": _fmt(cfg.rho),
        "gen.item_range_low": _fmt(cfg.item_range[0]),
        "gen.item_range_high": _fmt(cfg.item_range[1]),
        "gen.seed": cfg.seed,
        "true.monotone": int(cfg.true_params.monotone),
        "true.initial": _fmt_list(cfg.true_params.initial),
        "true.acquire": _fmt_list(cfg.true_params.acquire),
        "true.guess": _fmt_list(dataset.true_items.guess),
        "true.slip": _fmt_list(dataset.true_items.slip),
    }
    if cfg.true_params.lose is not None:
        manifest["true.lose"] = _fmt_list(cfg.true_params.lose)
    write_manifest(out / "manifest.txt", manifest)
    return out


def write_manifest(path, entries: dict):
    with open(path, "w") as fh:
        for key, value in entries.items():
            fh.write(f"{key}={value}\n")


def read_manifest(path) -> dict:
    entries = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InputError(f"malformed manifest line: {line!r}")
            key, _, value = line.partition("=")
            entries[key.strip()] = value.strip()
    return entries


def load_dataset(in_dir) -> Dataset:
    """Read a dataset directory written by :func:`save_dataset`."""
    src = Path(in_dir)
    manifest = read_manifest(src / "manifest.txt")
    n = int(manifest["gen.n_learners"])
    j = int(manifest["gen.n_items"])
    k = int(manifest["gen.n_attributes"])
    t = int(manifest["gen.n_waves"])
    c = int(manifest["gen.n_covariates"])

    responses = np.zeros((n, j, t), dtype=np.int8)
    for row in _read_rows(src / "responses.csv"):
        responses[int(row["learner"]) - 1, int(row["item"]) - 1, int(row["wave"]) - 1] = int(row["y"])

    covariates = np.zeros((n, c))
    for row in _read_rows(src / "covariates.csv"):
        i = int(row["learner"]) - 1
        covariates[i] = [float(row[f"z{c_i + 1}"]) for c_i in range(c)]

    profiles = np.zeros((n, t, k), dtype=np.int8)
    for row in _read_rows(src / "truth.csv"):
        profiles[int(row["learner"]) - 1, int(row["wave"]) - 1, int(row["attribute"]) - 1] = int(
            row["mastered"]
        )

    q_entries = np.zeros((j, k), dtype=np.int8)
    for row in _read_rows(src / "qmatrix.csv"):
        q_entries[int(row["item"]) - 1] = [int(row[f"a{a + 1}"]) for a in range(k)]

    monotone = bool(int(manifest["true.monotone"]))
    shape = (k, 1 + c)
    true_params = StructuralParams(
        initial=_parse_list(manifest["true.initial"]).reshape(shape),
        acquire=_parse_list(manifest["true.acquire"]).reshape(shape),
        lose=_parse_list(manifest["true.lose"]).reshape(shape) if "true.lose" in manifest else None,
        monotone=monotone,
    )
    config = GenConfig(
        n_learners=n,
        n_items=j,
        n_attributes=k,
        n_waves=t,
        n_covariates=c,
        rho=float(manifest["gen.rho"]),
        item_range=(float(manifest["gen.item_range_low"]), float(manifest["gen.item_range_high"])),
        true_params=true_params,
        seed=int(manifest["gen.seed"]),
        qmatrix=QMatrix(q_entries),
    )
    return Dataset(
        responses=responses,
        covariates=covariates,
        true_profiles=profiles,
        true_items=ItemParams(
            guess=_parse_list(manifest["true.guess"]),
            slip=_parse_list(manifest["true.slip"]),
        ),
        qmatrix=QMatrix(q_entries),
        config=config,
    )


def _parse_list(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",")]) if text else np.array([])


def _read_rows(path):
    with open(path, newline="") as fh:
        yield from csv.DictReader(fh)
