"""Surrogate ablations: number of re-uploadings, and data efficiency against the MLP."""
from __future__ import annotations

import csv
import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import baseline, surrogate, vqc
from .dataset import SplitDataset
from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (1.0, 1 / 2, 1 / 4, 1 / 8, 1 / 16, 1 / 20)
DEFAULT_REUPLOADS = (0, 1, 2, 3, 4)
MIN_TRAIN_SAMPLES = 10
STUDY_COLUMNS = ("setting", "family", "run", "n_train", "val_loss")


@dataclass(frozen=True)
class StudyRow:
    setting: float
    family: str
    run: int
    n_train: int
    val_loss: float


def _map(fn, jobs, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def _vqc_job(job) -> StudyRow:
    ds, setting, run, reuploads, epochs, lr = job
    template = vqc.build_model_template(reuploads=reuploads, encoding_scale=surrogate.DEFAULT_ENCODING_SCALE)
    model = surrogate.train(ds, template, lr=lr, epochs=epochs, seed=run)
    return StudyRow(setting, "vqc", run, len(ds.train_idx), model.evaluate_loss(ds, "val"))


def _mlp_job(job) -> StudyRow:
    ds, setting, run, epochs, lr = job
    model = baseline.train_mlp(ds, lr=lr, epochs=epochs, seed=run)
    return StudyRow(setting, "mlp", run, len(ds.train_idx), model.evaluate_loss(ds, "val"))


def reupload_study(dataset: SplitDataset, reuploads=DEFAULT_REUPLOADS, runs: int = 10, epochs: int = 20,
                   lr: float = 0.01, seed: int = 0, workers: int = 1) -> list[StudyRow]:
    """Validation loss of the surrogate for each re-upload count; run ``r`` uses seed ``seed + r``."""
    jobs = [(dataset, float(k), seed + r, k, epochs, lr) for k in reuploads for r in range(runs)]
    return _map(_vqc_job, jobs, workers)


def compare_data_efficiency(dataset: SplitDataset, fractions=DEFAULT_FRACTIONS, runs: int = 10, seed: int = 0,
                            vqc_epochs: int = 20, mlp_epochs: int = 200, lr: float = 0.01,
                            workers: int = 1) -> list[StudyRow]:
    """Validation loss of both model families on nested training subsets.

    Fractions leaving fewer than 10 training samples are skipped with a warning.
    """
    subsets = []
    for f in fractions:
        sub = dataset.with_train_fraction(f)
        if len(sub.train_idx) < MIN_TRAIN_SAMPLES:
            warnings.warn(f"fraction {f} leaves {len(sub.train_idx)} training samples; skipped", stacklevel=2)
            continue
        subsets.append((float(f), sub))
    if not subsets:
        raise ConfigurationError("no fraction leaves enough training samples")
    jobs = [(sub, f, seed + r, 3, vqc_epochs, lr) for f, sub in subsets for r in range(runs)]
    rows = _map(_vqc_job, jobs, workers)
    rows += _map(_mlp_job, [(sub, f, seed + r, mlp_epochs, lr) for f, sub in subsets for r in range(runs)], workers)
    return rows


def group_stats(rows: list[StudyRow]) -> dict[tuple[str, float], tuple[float, float, int]]:
    """``(family, setting) -> (mean, std, n)`` of the validation loss."""
    groups: dict[tuple[str, float], list[float]] = {}
    for r in rows:
        groups.setdefault((r.family, r.setting), []).append(r.val_loss)
    return {k: (float(np.mean(v)), float(np.std(v)), len(v)) for k, v in sorted(groups.items())}


def _label(x: float) -> str:
    return str(Fraction(x).limit_denominator(1000))


def summarize_reupload(rows: list[StudyRow]) -> dict:
    stats = group_stats(rows)
    means = {int(s): m for (fam, s), (m, _, _) in stats.items()}
    out = {"groups": [{"reuploads": int(s), "mean": m, "std": sd, "n": n} for (_, s), (m, sd, n) in stats.items()]}
    ks = sorted(means)
    out["improvement_factors"] = {f"{a}->{b}": means[a] / means[b] for a, b in zip(ks[:-1], ks[1:])}
    return out


def summarize_data_efficiency(rows: list[StudyRow]) -> dict:
    """Per-family means plus degradation (smallest vs full fraction) and the MLP advantage per fraction."""
    stats = group_stats(rows)
    out: dict = {"groups": [{"family": fam, "fraction": _label(s), "mean": m, "std": sd, "n": n}
                            for (fam, s), (m, sd, n) in stats.items()]}
    fams = {fam for fam, _ in stats}
    out["degradation"] = {}
    for fam in sorted(fams):
        settings = sorted(s for f, s in stats if f == fam)
        out["degradation"][fam] = stats[(fam, settings[0])][0] / stats[(fam, settings[-1])][0]
    if fams >= {"vqc", "mlp"}:
        out["mlp_advantage"] = {_label(s): stats[("vqc", s)][0] / stats[("mlp", s)][0]
                                for f, s in stats if f == "mlp" and ("vqc", s) in stats}
    return out


def write_rows(rows: list[StudyRow], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STUDY_COLUMNS)
        for r in rows:
            w.writerow([repr(r.setting), r.family, r.run, r.n_train, repr(r.val_loss)])


def read_rows(path) -> list[StudyRow]:
    with open(path, newline="") as fh:
        return [StudyRow(float(d["setting"]), d["family"], int(d["run"]), int(d["n_train"]), float(d["val_loss"]))
                for d in csv.DictReader(fh)]


def write_summary(summary: dict, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(summary, indent=1) + "\n")
