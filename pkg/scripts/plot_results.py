"""Plot study tables and search histories written by the qmbrl CLI.

    python scripts/plot_results.py --studies runs/studies --history runs/policy.history.csv --out runs/figures

Needs matplotlib (``pip install -e .[plot]``).  Missing inputs are skipped.
"""
import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from qmbrl import studies  # noqa: E402


def plot_reupload(csv_path: Path, out: Path) -> None:
    stats = studies.group_stats(studies.read_rows(csv_path))
    k = [s for f, s in stats if f == "vqc"]
    mean = [stats[("vqc", s)][0] for s in k]
    std = [stats[("vqc", s)][1] for s in k]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.errorbar([int(s) for s in k], mean, yerr=std, marker="o", capsize=3)
    ax.set_yscale("log")
    ax.set_xlabel("re-uploadings")
    ax.set_ylabel("validation MSE")
    ax.set_xticks([int(s) for s in k])
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def plot_data_efficiency(csv_path: Path, out: Path) -> None:
    stats = studies.group_stats(studies.read_rows(csv_path))
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    for family, label in (("vqc", "VQC"), ("mlp", "MLP")):
        fr = sorted(s for f, s in stats if f == family)
        ax.errorbar(fr, [stats[(family, s)][0] for s in fr], yerr=[stats[(family, s)][1] for s in fr],
                    marker="o", capsize=3, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("fraction of training data")
    ax.set_ylabel("validation MSE")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def plot_history(csv_path: Path, out: Path) -> None:
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    ev = [int(r["evaluation"]) for r in rows]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.step(ev, [float(r["model_return"]) for r in rows], where="post", label="return on model")
    if rows and rows[0]["env_steps"]:
        ax.step(ev, [float(r["env_steps"]) for r in rows], where="post", label="steps on environment")
    ax.set_xlabel("fitness evaluations")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--studies", type=Path, default=Path("runs/studies"))
    p.add_argument("--history", type=Path, nargs="*", default=[Path("runs/policy.history.csv")])
    p.add_argument("--out", type=Path, default=Path("runs/figures"))
    args = p.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)

    jobs = [(plot_reupload, args.studies / "reupload.csv", args.out / "reupload.png"),
            (plot_data_efficiency, args.studies / "data_efficiency.csv", args.out / "data_efficiency.png")]
    jobs += [(plot_history, h, args.out / f"{h.name.split('.')[0]}_search.png") for h in args.history]
    for fn, src, dst in jobs:
        if src.exists():
            fn(src, dst)
            print(f"wrote {dst}")
        else:
            print(f"skip {src} (not found)")


if __name__ == "__main__":
    main()
