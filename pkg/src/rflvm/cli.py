"""Command-line entry point.

Subcommands: `gen` writes synthetic datasets to CSV; `fit` runs a chain
and emits posterior summaries; `impute` fits under extra masking and
reports held-out MSE; `eval` scores emitted latents; `repro` runs the
scripted desk-scale experiment protocols. Every emitted file is a
deterministic function of (argv, seed); wall times go to stderr only.
"""

import argparse
import os
import sys
import time

import numpy as np

from rflvm import protocols
from rflvm.baselines import pca_latents
from rflvm.data import Dataset, load_csv, mask_random, save_csv
from rflvm.engine import Config, impute, posterior_summary, run_chain
from rflvm.metrics import (MetricsReport, distance_matrix_error,
                           knn_accuracy, mse)
from rflvm.synthetic import gen_synthetic


def _write_matrix(path, mat, header=None):
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    with open(path, "w") as handle:
        if header:
            handle.write(",".join(header) + "\n")
        for row in mat:
            handle.write(",".join(repr(float(v)) for v in row) + "\n")


def _read_matrix(path):
    with open(path) as handle:
        lines = [ln.strip() for ln in handle if ln.strip()]
    start = 0
    try:
        float(lines[0].split(",")[0])
    except ValueError:
        start = 1
    return np.array([[float(v) for v in ln.split(",")]
                     for ln in lines[start:]])


def _write_metrics(path, report):
    with open(path, "w") as handle:
        handle.write(report.to_text())


def _add_model_flags(p):
    p.add_argument("--m", type=int, default=100,
                   help="random feature count (even)")
    p.add_argument("--d", type=int, default=2, help="latent dimension")
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--burnin", type=int, default=1000)
    p.add_argument("--seed", default="0",
                   help="seed, or inclusive range like 1..5 for repro")
    p.add_argument("--dynamic", action="store_true",
                   help="GP-over-time latent prior")
    p.add_argument("--inducing", type=int, default=25)
    p.add_argument("--out-dir", default="out")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rflvm",
        description="Random-feature latent variable models: fit, impute, "
                    "and reproduce the desk-scale experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a synthetic dataset")
    p_gen.add_argument("--kind", required=True,
                       choices=("scurve_gaussian", "scurve_poisson",
                                "lorenz"))
    p_gen.add_argument("--n", type=int, default=500)
    p_gen.add_argument("--j", type=int, default=100)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--missing-frac", type=float, default=0.0)
    p_gen.add_argument("--out-dir", default="out")

    p_fit = sub.add_parser("fit", help="run one chain on a CSV dataset")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--likelihood", default="gaussian",
                       choices=("gaussian", "poisson", "binomial",
                                "negative_binomial", "multinomial"))
    p_fit.add_argument("--trials", type=int, default=1)
    _add_model_flags(p_fit)

    p_imp = sub.add_parser("impute",
                           help="hold out entries, fit, report MSE")
    p_imp.add_argument("--data", required=True)
    p_imp.add_argument("--likelihood", default="gaussian")
    p_imp.add_argument("--missing-frac", type=float, default=0.2)
    p_imp.add_argument("--trials", type=int, default=1)
    _add_model_flags(p_imp)

    p_eval = sub.add_parser("eval", help="score emitted latents")
    p_eval.add_argument("--latents", required=True,
                        help="CSV of latent coordinates")
    p_eval.add_argument("--truth", default=None,
                        help="CSV of true latents for distance error")
    p_eval.add_argument("--labels-from", default=None,
                        help="dataset CSV whose label column scores KNN")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out-dir", default="out")

    p_rep = sub.add_parser("repro",
                           help="scripted reproduction of the experiment "
                                "protocols")
    p_rep.add_argument("target",
                       choices=("fig1", "fig2", "table3-scurve",
                                "table3-lorenz"))
    p_rep.add_argument("--n", type=int, default=500)
    p_rep.add_argument("--j", type=int, default=100)
    _add_model_flags(p_rep)
    return parser


def cmd_gen(args):
    syn = gen_synthetic(args.kind, args.n, args.j, args.seed)
    data = syn.data
    if args.missing_frac > 0:
        rng = np.random.default_rng(protocols.MASK_SEED_OFFSET + args.seed)
        data = mask_random(data, args.missing_frac, rng)
    os.makedirs(args.out_dir, exist_ok=True)
    save_csv(data, os.path.join(args.out_dir, "data.csv"))
    _write_matrix(os.path.join(args.out_dir, "latent_true.csv"), syn.x_true)
    return 0


def _emit_fit_outputs(out_dir, chain, data):
    summary = posterior_summary(chain)
    _write_matrix(os.path.join(out_dir, "latent_mean.csv"), summary.x_mean)
    _write_matrix(os.path.join(out_dir, "predictive_mean.csv"),
                  summary.y_mean)
    report = MetricsReport(extra={
        "final_loglik": float(summary.log_lik_trace[-1]),
        "mean_loglik": float(summary.log_lik_trace.mean()),
        "mean_n_clusters": float(summary.n_clusters_trace.mean()),
        "mean_alpha": float(summary.alpha_trace.mean()),
    })
    return summary, report


def cmd_fit(args):
    data = load_csv(args.data)
    seed = int(args.seed)
    if args.burnin >= args.iters:
        print(f"config error: burnin ({args.burnin}) must be smaller than "
              f"iterations ({args.iters})", file=sys.stderr)
        return 2
    config = Config(likelihood=args.likelihood, n_rff=args.m,
                    latent_dim=args.d, iterations=args.iters,
                    burnin=args.burnin, seed=seed, dynamic=args.dynamic,
                    n_inducing=args.inducing, trials=args.trials)
    os.makedirs(args.out_dir, exist_ok=True)
    start = time.perf_counter()
    chain = run_chain(config, data, out_dir=args.out_dir)
    elapsed = time.perf_counter() - start
    _, report = _emit_fit_outputs(args.out_dir, chain, data)
    report.wall_time_seconds = elapsed
    _write_metrics(os.path.join(args.out_dir, "metrics.txt"), report)
    print(f"fit finished in {elapsed:.1f}s", file=sys.stderr)
    return 0


def cmd_impute(args):
    data = load_csv(args.data)
    seed = int(args.seed)
    if args.burnin >= args.iters:
        print(f"config error: burnin ({args.burnin}) must be smaller than "
              f"iterations ({args.iters})", file=sys.stderr)
        return 2
    rng = np.random.default_rng(protocols.MASK_SEED_OFFSET + seed)
    masked = mask_random(data, args.missing_frac, rng)
    config = Config(likelihood=args.likelihood, n_rff=args.m,
                    latent_dim=args.d, iterations=args.iters,
                    burnin=args.burnin, seed=seed, dynamic=args.dynamic,
                    n_inducing=args.inducing, trials=args.trials)
    os.makedirs(args.out_dir, exist_ok=True)
    start = time.perf_counter()
    chain = run_chain(config, masked, out_dir=args.out_dir)
    elapsed = time.perf_counter() - start
    summary, report = _emit_fit_outputs(args.out_dir, chain, masked)
    held = ~masked.mask & data.mask
    rows, cols, values = impute(summary, masked)
    keep = data.mask[rows, cols]
    report.mse = mse(values[keep], data.Y[rows[keep], cols[keep]])
    report.wall_time_seconds = elapsed
    _write_metrics(os.path.join(args.out_dir, "metrics.txt"), report)
    print(f"impute finished in {elapsed:.1f}s, held-out mse "
          f"{report.mse:.4f}", file=sys.stderr)
    return 0


def cmd_eval(args):
    latents = _read_matrix(args.latents)
    report = MetricsReport(extra={})
    if args.truth:
        truth = _read_matrix(args.truth)
        report.distance_matrix_error = distance_matrix_error(latents, truth)
    if args.labels_from:
        ref = load_csv(args.labels_from)
        if ref.labels is None:
            print("eval error: dataset has no label column",
                  file=sys.stderr)
            return 2
        report.knn_mean, report.knn_sd = knn_accuracy(
            latents, ref.labels, seed=args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    _write_metrics(os.path.join(args.out_dir, "metrics.txt"), report)
    return 0


def _repro_fig1(args, seeds, out_dir):
    result = protocols.fig1_protocol(
        seeds, n=args.n, j=args.j, iterations=args.iters,
        burnin=args.burnin,
        progress=lambda row: print(f"fig1 {row}", file=sys.stderr))
    with open(os.path.join(out_dir, "fig1_mse.csv"), "w") as handle:
        handle.write("m,seed,mse\n")
        for row in result["mse"]:
            handle.write(f"{row['m']},{row['seed']},{row['mse']!r}\n")
    with open(os.path.join(out_dir, "fig1_kernel.csv"), "w") as handle:
        handle.write("m,frobenius_error\n")
        for row in result["kernel"]:
            handle.write(f"{row['m']},{row['frobenius_error']!r}\n")
    ms = sorted({row["m"] for row in result["mse"]})
    extra = {}
    for m in ms:
        vals = [row["mse"] for row in result["mse"] if row["m"] == m]
        extra[f"mse_m{m}_mean"] = float(np.mean(vals))
        extra[f"mse_m{m}_sd"] = float(np.std(vals, ddof=1)) \
            if len(vals) > 1 else 0.0
    _write_metrics(os.path.join(out_dir, "metrics.txt"),
                   MetricsReport(extra=extra))


def _repro_fig2(args, seeds, out_dir):
    result = protocols.fig2_protocol(
        seeds, n=args.n, j=args.j, iterations=args.iters,
        burnin=args.burnin,
        progress=lambda row: print(f"fig2 {row}", file=sys.stderr))
    with open(os.path.join(out_dir, "fig2_metrics.csv"), "w") as handle:
        keys = list(result["rows"][0])
        handle.write(",".join(keys) + "\n")
        for row in result["rows"]:
            handle.write(",".join(repr(row[k]) if isinstance(row[k], float)
                                  else str(row[k]) for k in keys) + "\n")
    for seed, mats in result["latents"].items():
        for name, mat in mats.items():
            _write_matrix(os.path.join(out_dir,
                                       f"latents_seed{seed}_{name}.csv"),
                          mat)
    rows = result["rows"]
    extra = {}
    for key in ("rflvm_distance_error", "pca_distance_error",
                "rflvm_knn_mean", "pca_knn_mean"):
        vals = [r[key] for r in rows]
        extra[f"{key}_mean"] = float(np.mean(vals))
    _write_metrics(os.path.join(out_dir, "metrics.txt"),
                   MetricsReport(extra=extra))


def _repro_table3(args, seeds, out_dir, dataset_kind):
    result = protocols.table3_protocol(
        dataset_kind, seeds, n=args.n, j=args.j, iterations=args.iters,
        burnin=args.burnin, n_inducing=args.inducing,
        progress=lambda row: print(f"table3-{dataset_kind} {row}",
                                   file=sys.stderr))
    with open(os.path.join(out_dir, f"table3_{dataset_kind}.csv"),
              "w") as handle:
        handle.write("seed,static_mse,dynamic_mse,ppca_mse\n")
        for row in result["rows"]:
            handle.write(f"{row['seed']},{row['static_mse']!r},"
                         f"{row['dynamic_mse']!r},{row['ppca_mse']!r}\n")
    _write_metrics(os.path.join(out_dir, "metrics.txt"),
                   MetricsReport(extra=result["summary"]))


def cmd_repro(args):
    seeds = protocols.parse_seed_range(args.seed)
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    start = time.perf_counter()
    if args.target == "fig1":
        _repro_fig1(args, seeds, out_dir)
    elif args.target == "fig2":
        _repro_fig2(args, seeds, out_dir)
    elif args.target == "table3-scurve":
        _repro_table3(args, seeds, out_dir, "scurve")
    else:
        _repro_table3(args, seeds, out_dir, "lorenz")
    print(f"repro {args.target} finished in "
          f"{time.perf_counter() - start:.1f}s", file=sys.stderr)
    return 0


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {"gen": cmd_gen, "fit": cmd_fit, "impute": cmd_impute,
                "eval": cmd_eval, "repro": cmd_repro}
    try:
        return handlers[args.command](args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    raise SystemExit(cli_main())


if __name__ == "__main__":
    main()
