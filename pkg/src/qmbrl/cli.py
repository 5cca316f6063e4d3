"""Command-line pipeline: gen-data -> train-model -> search-policy -> eval-policy, plus the two studies.

Stages communicate only through files.  Every output ``X`` gets a sibling
``X.provenance.json`` with the command, its settings and library versions.
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from importlib import metadata
from pathlib import Path

from . import dataset, policy, studies, surrogate, vqc
from .exceptions import ConfigurationError, SchemaVersionError, TrainingError

logger = logging.getLogger("qmbrl")

# execution details that must not change any output file
_NOT_RECORDED = {"func", "workers", "verbose"}


def _version(dist: str) -> str:
    try:
        return metadata.version(dist)
    except metadata.PackageNotFoundError:
        return "unknown"


def write_provenance(out: Path, args: argparse.Namespace) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_RECORDED}
    prov = {
        "command": args.command,
        "config": config,
        "versions": {"python": platform.python_version(),
                     **{d: _version(d) for d in ("qmbrl", "numpy", "scikit-learn", "numba")}},
    }
    Path(f"{out}.provenance.json").write_text(json.dumps(prov, indent=1, default=str) + "\n")


def _split_sizes(size: int) -> tuple[int, int, int]:
    if size == dataset.DEFAULT_SIZE:
        return dataset.DEFAULT_SPLIT
    train, val = int(round(0.8 * size)), int(round(0.1 * size))
    return train, val, size - train - val


def cmd_gen_data(args) -> None:
    sizes = tuple(args.split) if args.split else _split_sizes(args.size)
    ds = dataset.split(dataset.generate(args.seed, args.size), sizes, args.split_seed)
    dataset.save(ds, args.out)
    write_provenance(args.out, args)
    m = ds.meta
    print(f"wrote {len(ds.transitions)} transitions ({m['n_episodes']} episodes, "
          f"mean length {m['mean_episode_length']:.2f}) to {args.out}")


def cmd_train_model(args) -> None:
    ds = dataset.load(args.data)
    reuploads = args.uploads - 1 if args.uploads is not None else args.reuploads
    template = vqc.build_model_template(reuploads=reuploads, layers_per_upload=args.layers,
                                        encoding_scale=args.encoding_scale)
    model = surrogate.train(ds, template, lr=args.lr, epochs=args.epochs, batch_size=args.batch_size,
                            seed=args.seed, grad_method=args.grad_method)
    model.save(args.out)
    hist = Path(args.out).with_suffix(".history.csv")
    hist.write_text("epoch,train_loss,val_loss\n" + "".join(f"{e},{t!r},{v!r}\n" for e, t, v in model.history))
    write_provenance(args.out, args)
    print(f"best epoch {model.meta['best_epoch']}, val loss {model.evaluate_loss(ds, 'val'):.4g}, "
          f"test loss {model.evaluate_loss(ds, 'test'):.4g}; wrote {args.out}")


def cmd_search_policy(args) -> None:
    model = surrogate.SurrogateModel.load(args.model)
    est = policy.ModelBasedPolicySearch(
        n_particles=args.particles, budget=args.budget, horizon=args.horizon, n_starts=args.starts,
        repetitions=args.repetitions, seed=args.seed, workers=args.workers,
        eval_during_search=args.eval_during_search, eval_episodes=args.eval_episodes,
    ).fit(model)
    est.policy_.save(args.out)
    policy.write_history(est.history_, Path(args.out).with_suffix(".history.csv"))
    write_provenance(args.out, args)
    print(f"best fitness {est.result_.best_fitness:.4f} after {est.result_.n_evaluations} evaluations, "
          f"{len(est.history_)} improvements; wrote {args.out}")


def cmd_eval_policy(args) -> None:
    pol = policy.VQCPolicy.load(args.policy)
    report = policy.evaluate_on_env(pol, args.episodes, args.max_steps, seed=args.seed)
    out = Path(args.out) if args.out else Path(args.policy).with_suffix(".eval.csv")
    report.write_csv(out)
    Path(out).with_suffix(".json").write_text(json.dumps(report.summary(), indent=1) + "\n")
    write_provenance(out, args)
    s = report.summary()
    print(f"mean steps {s['mean_steps']:.2f}, mean return {s['mean_return']:.2f}, perfect {s['perfect']}; "
          f"wrote {out}")


def cmd_study_reupload(args) -> None:
    ds = dataset.load(args.data)
    rows = studies.reupload_study(ds, args.reuploads, args.runs, args.epochs, args.lr, args.seed,
                                  policy.resolve_workers(args.workers))
    out = Path(args.out_dir)
    studies.write_rows(rows, out / "reupload.csv")
    summary = studies.summarize_reupload(rows)
    studies.write_summary(summary, out / "reupload_summary.json")
    write_provenance(out / "reupload.csv", args)
    for g in summary["groups"]:
        print(f"reuploads {g['reuploads']}: val loss {g['mean']:.4g} +- {g['std']:.2g} (n={g['n']})")


def cmd_study_data(args) -> None:
    ds = dataset.load(args.data)
    fractions = [1.0 / d for d in args.denominators]
    rows = studies.compare_data_efficiency(ds, fractions, args.runs, args.seed, args.vqc_epochs, args.mlp_epochs,
                                           args.lr, policy.resolve_workers(args.workers))
    out = Path(args.out_dir)
    studies.write_rows(rows, out / "data_efficiency.csv")
    summary = studies.summarize_data_efficiency(rows)
    studies.write_summary(summary, out / "data_efficiency_summary.json")
    write_provenance(out / "data_efficiency.csv", args)
    for g in summary["groups"]:
        print(f"{g['family']:>4} fraction {g['fraction']:>5}: val loss {g['mean']:.4g} +- {g['std']:.2g}")
    print("degradation", {k: round(v, 2) for k, v in summary["degradation"].items()})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qmbrl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="record random-policy transitions")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--size", type=int, default=dataset.DEFAULT_SIZE)
    g.add_argument("--split", type=int, nargs=3, metavar=("TRAIN", "VAL", "TEST"),
                   help="split sizes (default 8000 1000 1000, or 80/10/10 percent for other sizes)")
    g.add_argument("--split-seed", type=int, default=0)
    g.add_argument("--out", type=Path, default=Path("runs/dataset.csv"))
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train-model", help="fit the circuit surrogate")
    t.add_argument("--data", type=Path, default=Path("runs/dataset.csv"))
    ups = t.add_mutually_exclusive_group()
    ups.add_argument("--reuploads", type=int, default=3, help="re-uploadings after the first encoding")
    ups.add_argument("--uploads", type=int, help="total encoding blocks (reuploads + 1)")
    t.add_argument("--layers", type=int, default=5, help="variational layers per upload")
    t.add_argument("--encoding-scale", type=float, default=surrogate.DEFAULT_ENCODING_SCALE)
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--grad-method", choices=vqc.GRADIENT_METHODS, default="adjoint")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", type=Path, default=Path("runs/model.json"))
    t.set_defaults(func=cmd_train_model)

    s = sub.add_parser("search-policy", help="particle swarm search on the surrogate")
    s.add_argument("--model", type=Path, default=Path("runs/model.json"))
    s.add_argument("--particles", type=int, default=100)
    s.add_argument("--budget", type=int, default=20_000)
    s.add_argument("--horizon", type=int, default=500)
    s.add_argument("--starts", type=int, default=100)
    s.add_argument("--repetitions", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, help=f"worker processes (default ${policy.WORKERS_ENV} or 1)")
    s.add_argument("--eval-during-search", action="store_true",
                   help="also score every improvement on the real environment (diagnostic only)")
    s.add_argument("--eval-episodes", type=int, default=100)
    s.add_argument("--out", type=Path, default=Path("runs/policy.json"))
    s.set_defaults(func=cmd_search_policy)

    e = sub.add_parser("eval-policy", help="run a policy on the real environment")
    e.add_argument("--policy", type=Path, default=Path("runs/policy.json"))
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--max-steps", type=int, default=500)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", type=Path)
    e.set_defaults(func=cmd_eval_policy)

    r = sub.add_parser("study-reupload", help="validation loss against the number of re-uploadings")
    r.add_argument("--data", type=Path, default=Path("runs/dataset.csv"))
    r.add_argument("--reuploads", type=int, nargs="+", default=list(studies.DEFAULT_REUPLOADS))
    r.add_argument("--runs", type=int, default=10)
    r.add_argument("--epochs", type=int, default=20)
    r.add_argument("--lr", type=float, default=0.01)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--workers", type=int)
    r.add_argument("--out-dir", type=Path, default=Path("runs/studies"))
    r.set_defaults(func=cmd_study_reupload)

    d = sub.add_parser("study-data", help="circuit surrogate vs MLP on shrinking training sets")
    d.add_argument("--data", type=Path, default=Path("runs/dataset.csv"))
    d.add_argument("--denominators", type=int, nargs="+", default=[1, 2, 4, 8, 16, 20],
                   help="train on 1/d of the training split for each d")
    d.add_argument("--runs", type=int, default=10)
    d.add_argument("--vqc-epochs", type=int, default=20)
    d.add_argument("--mlp-epochs", type=int, default=200)
    d.add_argument("--lr", type=float, default=0.01)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--workers", type=int)
    d.add_argument("--out-dir", type=Path, default=Path("runs/studies"))
    d.set_defaults(func=cmd_study_data)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except FileNotFoundError as exc:
        print(f"qmbrl {args.command}: file not found: {exc.filename or exc}", file=sys.stderr)
        return 2
    except (ConfigurationError, SchemaVersionError, TrainingError) as exc:
        print(f"qmbrl {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
