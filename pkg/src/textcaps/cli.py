"""Command-line interface.

Subcommands:

* ``synth``     emit a synthetic corpus (train.tsv, test.tsv, embeddings.txt)
* ``train``     config file -> checkpoint + per-epoch log
* ``eval``      checkpoint + dataset -> metric report (aligned block plus
                machine-readable ``metric<TAB>value`` lines)
* ``trace``     checkpoint + one instance -> per-iteration routing trace
* ``gradcheck`` finite-difference check of the reverse-mode gradients;
                nonzero exit on failure

All failures print to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import load_experiment
from .data import (
    doc_matrix,
    load_dataset,
    load_embeddings,
    save_dataset,
    synth_multilabel,
    synth_qa,
    write_embeddings,
)
from .model import (
    finite_diff_check,
    forward,
    load_checkpoint,
    random_gradcheck_setup,
    save_checkpoint,
)
from .routing import write_trace
from .training import evaluate_classifier, evaluate_qa, train_classifier, train_qa


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="textcaps", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic corpus")
    sp.add_argument("--task", choices=("classify", "qa"), default="classify")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--docs", type=int, default=600, help="documents (classify)")
    sp.add_argument("--labels", type=int, default=6, help="label count (classify)")
    sp.add_argument("--questions", type=int, default=80, help="questions (qa)")
    sp.add_argument("--topics", type=int, default=6, help="topic count (qa)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--noise", type=float, default=0.1)
    sp.add_argument("--train-fraction", type=float, default=1.0)

    tp = sub.add_parser("train", help="train from a config file")
    tp.add_argument("--config", required=True)
    tp.add_argument("--out", required=True, help="checkpoint path")
    tp.add_argument("--log", help="epoch log path (default: <out>.log)")

    ep = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ep.add_argument("--checkpoint", required=True)
    ep.add_argument("--data", required=True)
    ep.add_argument("--embeddings", required=True)
    ep.add_argument("--ks", default="1,3,5", help="comma-joined k values (classify)")

    rp = sub.add_parser("trace", help="dump the routing trace of one instance")
    rp.add_argument("--checkpoint", required=True)
    rp.add_argument("--data", required=True)
    rp.add_argument("--embeddings", required=True)
    rp.add_argument("--index", type=int, default=0)
    rp.add_argument("--out", required=True)

    gp = sub.add_parser("gradcheck", help="verify gradients against finite differences")
    gp.add_argument("--models", type=int, default=5)
    gp.add_argument("--step", type=float, default=1e-5)
    gp.add_argument("--tol", type=float, default=1e-4)
    gp.add_argument("--seed", type=int, default=0)
    return p


def cmd_synth(args: argparse.Namespace) -> int:
    os.makedirs(args.out, exist_ok=True)
    if args.task == "classify":
        task = synth_multilabel(
            args.docs, args.labels, args.seed,
            noise=args.noise, train_fraction=args.train_fraction,
        )
    else:
        task = synth_qa(args.questions, args.topics, args.seed, noise=args.noise)
    write_embeddings(task.table, os.path.join(args.out, "embeddings.txt"))
    save_dataset(task.train, os.path.join(args.out, "train.tsv"), task.table)
    save_dataset(task.test, os.path.join(args.out, "test.tsv"), task.table)
    print(f"wrote {len(task.train)} train / {len(task.test)} test records to {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    exp = load_experiment(args.config)
    table = load_embeddings(exp.embeddings)
    model_cfg = exp.model_config(table.dim)
    if exp.task == "classify":
        records = load_dataset(exp.train_data, "classification", table, model_cfg.n_labels)
        params, stats = train_classifier(records, table, model_cfg, exp.train)
    else:
        records = load_dataset(exp.train_data, "qa", table)
        params, stats = train_qa(records, table, model_cfg, exp.train)

    save_checkpoint(args.out, params, exp.train)
    log_path = args.log or args.out + ".log"
    with open(log_path, "w", encoding="utf-8") as f:
        for s in stats:
            f.write(f"{s.epoch}\t{s.loss:.6f}\t{s.seconds:.3f}\n")
    print(f"trained {len(stats)} epochs; checkpoint {args.out}; log {log_path}")

    if exp.eval_data:
        if exp.task == "classify":
            held = load_dataset(exp.eval_data, "classification", table, model_cfg.n_labels)
            report = evaluate_classifier(held, table, params, exp.train)
        else:
            held = load_dataset(exp.eval_data, "qa", table)
            report = evaluate_qa(held, table, params, exp.train)
        print(report.render())
        for line in report.machine_lines():
            print(line)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    params, train_cfg = load_checkpoint(args.checkpoint)
    table = load_embeddings(args.embeddings)
    if table.dim != params.config.embed_dim:
        raise ValueError(
            f"embedding dim {table.dim} does not match checkpoint dim {params.config.embed_dim}"
        )
    if params.config.task == "classify":
        ks = tuple(int(k) for k in args.ks.split(","))
        records = load_dataset(args.data, "classification", table, params.config.n_labels)
        report = evaluate_classifier(records, table, params, train_cfg, ks=ks)
    else:
        records = load_dataset(args.data, "qa", table)
        report = evaluate_qa(records, table, params, train_cfg)
    print(report.render())
    for line in report.machine_lines():
        print(line)
    return 0


def cmd_trace(args: argparse.Namespace) -> int:
    params, train_cfg = load_checkpoint(args.checkpoint)
    table = load_embeddings(args.embeddings)
    mcfg = params.config
    if mcfg.task == "classify":
        records = load_dataset(args.data, "classification", table, mcfg.n_labels)
        if not 0 <= args.index < len(records):
            raise ValueError(f"index {args.index} outside dataset of {len(records)} records")
        X = doc_matrix(records[args.index].token_ids, table, mcfg.max_len)
    else:
        records = load_dataset(args.data, "qa", table)
        if not 0 <= args.index < len(records):
            raise ValueError(f"index {args.index} outside dataset of {len(records)} records")
        X = doc_matrix(records[args.index].question_ids, table, mcfg.max_len)
    result = forward(X, params, train_cfg, mode="infer")
    with open(args.out, "w", encoding="utf-8") as f:
        write_trace(result, f)
    print(f"wrote {result.iterations} trace lines to {args.out}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    worst = 0.0
    for i in range(args.models):
        params, instance, cfg = random_gradcheck_setup(args.seed + i)
        err = finite_diff_check(params, instance, args.step, cfg)
        worst = max(worst, err)
        print(f"model {i}: max relative error {err:.3e}")
    print(f"worst over {args.models} models: {worst:.3e} (tolerance {args.tol:.1e})")
    if worst >= args.tol:
        print("gradcheck FAILED", file=sys.stderr)
        return 1
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "trace": cmd_trace,
    "gradcheck": cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
