"""Command-line entry point.

Subcommands: train, evaluate, propagate, analyze-kg, gen-synthetic,
benchmark, grad-check.  Hyperparameter flags mirror the config-file keys;
flags override the file.
"""

import argparse
import os
import sys

import numpy as np

from kgrec import benchmark as benchmod
from kgrec import evaluate as evalmod
from kgrec import gnn, interactions, labelprop, scoring, synthetic
from kgrec import gradcheck as gradmod
from kgrec import kg as kgmod
from kgrec import train as trainmod
from kgrec.errors import KgrecError, TrainingDiverged


def _add_data_args(p):
    p.add_argument("--triples", required=True, help="knowledge-graph TSV")
    p.add_argument("--item-map", required=True, help="item-to-entity TSV")
    p.add_argument("--ratings", required=True, help="user/item/rating TSV")
    p.add_argument("--threshold", type=float, default=None,
                   help="positive-rating threshold (default: all positive)")


def _add_hp_args(p):
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--S", type=int, default=None, help="sampled neighbors per entity")
    p.add_argument("--d", type=int, default=None, help="embedding dimension")
    p.add_argument("--L", type=int, default=None, help="number of layers")
    p.add_argument("--lambda", dest="lambda_", type=float, default=None,
                   help="smoothness regularizer weight")
    p.add_argument("--gamma", type=float, default=None, help="L2 weight")
    p.add_argument("--eta", type=float, default=None, help="learning rate")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--K", type=int, default=None,
                   help="propagation unroll steps (default L+2)")


def _hyperparams(args):
    config = trainmod.parse_config(args.config) if args.config else {}
    hp_threshold = getattr(args, "threshold", None)
    return trainmod.hyperparams_from(
        config, S=args.S, d=args.d, L=args.L, **{"lambda": args.lambda_},
        gamma=args.gamma, eta=args.eta, epochs=args.epochs,
        batch_size=getattr(args, "batch_size", None), seed=args.seed,
        K=args.K, threshold=hp_threshold)


def _load_dataset(args, hp):
    kg = kgmod.load_kg(args.triples, args.item_map)
    lookup = {tok: i for i, tok in enumerate(kg.item_tokens)}
    raw = interactions.load_ratings(args.ratings, hp.threshold, lookup)
    rng = np.random.default_rng(hp.seed)
    matrix = interactions.negative_sample(raw, kg.n_items, rng)
    split = interactions.split(matrix, rng)
    return kg, matrix, split


def cmd_train(args):
    hp = _hyperparams(args)
    kg, _, split = _load_dataset(args, hp)
    os.makedirs(args.out_dir, exist_ok=True)
    last_path = os.path.join(args.out_dir, "last.ckpt")
    resume = last_path if args.resume and os.path.exists(last_path) else None
    try:
        result = trainmod.train(split, kg, hp, resume_from=resume,
                                checkpoint_path=last_path)
    except TrainingDiverged as exc:
        if exc.params is not None:
            trainmod.checkpoint_save(
                os.path.join(args.out_dir, "diverged.ckpt"),
                exc.params, None, hp, exc.epoch or 0)
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 1
    trainmod.write_metrics_csv(result.metrics,
                               os.path.join(args.out_dir, "metrics.csv"))
    trainmod.checkpoint_save(os.path.join(args.out_dir, "checkpoint.bin"),
                             result.params, None, hp, result.best_epoch)
    print(f"best epoch {result.best_epoch}  val_r10 {result.best_r10:.4f}")
    return 0


def cmd_evaluate(args):
    params, _, hp, _ = trainmod.checkpoint_load(args.checkpoint)
    kg, _, split = _load_dataset(args, hp)
    rng = np.random.default_rng([hp.seed, 3])
    ks = [int(k) for k in args.ks.split(",")]
    report = evalmod.evaluate_matrix(kg, params, hp, split.test,
                                     split.train.positives_by_user(), rng, ks=ks)
    print(f"test AUC: {report.auc:.4f}")
    for k in ks:
        print(f"test Recall@{k}: {report.recall_at[k]:.4f}")
    if report.daily_auc:
        print("day,auc")
        for day, val in report.daily_auc:
            print(f"{day},{val:.4f}")
    return 0


def cmd_propagate(args):
    hp = _hyperparams(args)
    kg, matrix, _ = _load_dataset(args, hp)
    if args.checkpoint:
        params, _, hp, _ = trainmod.checkpoint_load(args.checkpoint)
    else:
        rng = np.random.default_rng([hp.seed, 0])
        params = gnn.init_params(matrix.n_users, kg.n_relations,
                                 kg.n_entities, hp.d, hp.L, rng)
    if not 0 <= args.user < matrix.n_users:
        raise KgrecError(f"user {args.user} out of range (0..{matrix.n_users - 1})")

    known_items, known_labels = matrix.rows_by_user()[args.user]
    item_labels = np.zeros(kg.n_items)
    item_labels[known_items] = known_labels
    adj = scoring.build_user_adjacency(kg, params.user_emb[args.user],
                                       params.rel_emb, add_self_loops=False)
    ctx = labelprop.label_context(kg, adj, item_labels,
                                  known_items=known_items)
    init = np.zeros(kg.n_entities)
    res = labelprop.propagate_to_convergence(init, ctx.P, ctx.clamp_mask,
                                             ctx.clamp_values, tol=args.tol,
                                             max_iter=args.max_iter)
    residual = labelprop.verify_harmonic(res.labels, adj, ctx.clamp_mask)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("entity,label\n")
        for e, val in enumerate(res.labels):
            f.write(f"{kg.entity_tokens[e]},{val:.12g}\n")
    status = "converged" if res.converged else "NOT converged"
    print(f"{status} in {res.iterations} iterations; "
          f"harmonic residual {residual:.3e}")
    return 0 if res.converged else 1


def cmd_analyze_kg(args):
    hp = _hyperparams(args)
    kg, matrix, _ = _load_dataset(args, hp)
    rng = np.random.default_rng(hp.seed)
    result = kgmod.proximity_study(kg, matrix, args.pairs, rng, cap=args.cap)
    result.write_csv(args.out)
    print(f"mean distance (common user): {result.mean_distance('common_user'):.3f}")
    print(f"mean distance (no common user): "
          f"{result.mean_distance('no_common_user'):.3f}")
    return 0


def cmd_gen_synthetic(args):
    paths = synthetic.gen_synthetic(
        args.out_dir, n_entities=args.entities, n_items=args.items,
        n_relations=args.relations, n_users=args.users,
        smoothness=args.smoothness, seed=args.seed,
        pos_per_user=args.pos_per_user)
    print(f"wrote {paths.triples}, {paths.item_map}, {paths.ratings}")
    return 0


def cmd_benchmark(args):
    hp = _hyperparams(args)
    multipliers = [int(m) for m in args.multipliers.split(",")]
    rows = benchmod.benchmark_scalability(
        args.triples, args.item_map, args.ratings, hp, multipliers,
        n_batches=args.batches, work_dir=args.work_dir,
        threshold=args.threshold)
    benchmod.write_benchmark_csv(rows, args.out)
    for m, secs in rows:
        print(f"{m}x: {secs:.3f} s/epoch")
    return 0


def cmd_grad_check(args):
    max_err, per_tensor = gradmod.run_grad_check(
        seed=args.seed if args.seed is not None else 7,
        lambda_=args.lambda_ if args.lambda_ is not None else 0.5,
        gamma=args.gamma if args.gamma is not None else 1e-4)
    for name, err in sorted(per_tensor.items()):
        print(f"{name}: {err:.3e}")
    print(f"max relative gradient error: {max_err:.3e}")
    return 0 if max_err < 1e-4 else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kgrec",
        description="Knowledge-graph recommender with label-smoothness "
                    "regularized graph convolutions")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model, write metrics and checkpoint")
    _add_data_args(p)
    _add_hp_args(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--resume", action="store_true",
                   help="continue from out-dir/last.ckpt if present")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="test-set AUC and Recall@K")
    _add_data_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ks", default="2,10,50,100")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("propagate", help="converged relevancy labels for one user")
    _add_data_args(p)
    _add_hp_args(p)
    p.add_argument("--user", type=int, required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=10000)
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("analyze-kg", help="item-pair proximity histograms")
    _add_data_args(p)
    _add_hp_args(p)
    p.add_argument("--pairs", type=int, default=10000)
    p.add_argument("--cap", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze_kg)

    p = sub.add_parser("gen-synthetic", help="write a synthetic dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--entities", type=int, default=2000)
    p.add_argument("--items", type=int, default=300)
    p.add_argument("--relations", type=int, default=12)
    p.add_argument("--users", type=int, default=100)
    p.add_argument("--smoothness", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--pos-per-user", type=int, default=20)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("benchmark", help="seconds per epoch vs KG size")
    _add_data_args(p)
    _add_hp_args(p)
    p.add_argument("--multipliers", default="1,2,3,4,5")
    p.add_argument("--batches", type=int, default=60)
    p.add_argument("--work-dir", default=".")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("grad-check",
                       help="analytic vs finite-difference gradients")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lambda", dest="lambda_", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.set_defaults(func=cmd_grad_check)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (KgrecError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
