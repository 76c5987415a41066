"""Command-line interface.

Subcommands: simulate, fit, predict, metrics, network, plot.
Exit codes: 0 success, 2 usage/input error, 3 numeric failure.
"""

import argparse
import glob
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import io as bio
from .data import assemble_dataset, standardize_dataset
from .em import EmConfig
from .errors import BassError, InvalidInputError, NumericError
from .fit import ENGINES, FitSpec, best_fit_index, restart_seeds, run_restarts
from .gibbs import GibbsConfig
from .metrics import classify_factors, dsi, mse, predict_block, pve, recovery_rate, ssi
from .model import HyperParams
from .network import consensus_network, observation_covariance, partial_correlation
from .sim import DENSE, SPARSE, builtin_spec, generate, generate_test

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


def _add_simulate(sub):
    p = sub.add_parser("simulate", help="generate a simulation regime with ground truth")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--builtin", help="one of sim1..sim6")
    src.add_argument("--spec-file", help="path to a sim spec document")
    p.add_argument("--n", type=int, required=True, help="training sample count")
    p.add_argument("--test-n", type=int, default=0, help="also draw a held-out set")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")


def _add_fit(sub):
    p = sub.add_parser("fit", help="fit the model to data blocks")
    p.add_argument("--data", nargs="+", required=True, help="block matrix files")
    p.add_argument("--engine", choices=ENGINES, default="px-em")
    p.add_argument("--k-init", type=int, required=True)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--standardize", action="store_true",
                   help="center/scale each feature before fitting (off by default)")
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--ll-tol", type=float, default=1e-5)
    p.add_argument("--window-t", type=int, default=50)
    p.add_argument("--prune-eps", type=float, default=1e-4)
    p.add_argument("--n-px-iter", type=int, default=20)
    p.add_argument("--mcmc-init-sweeps", type=int, default=50)
    p.add_argument("--gibbs-iters", type=int, default=1000)
    p.add_argument("--gibbs-burn-in", type=int, default=500)
    p.add_argument("--gibbs-thin", type=int, default=2)
    for name in ("a", "b", "c", "d", "e", "f", "nu", "a-sigma", "b-sigma"):
        p.add_argument(f"--hyper-{name}", type=float, default=None)
    p.add_argument("--out", required=True)


def _add_predict(sub):
    p = sub.add_parser("predict", help="predict one block from the others")
    p.add_argument("--fit", required=True, help="fit output directory (one restart)")
    p.add_argument("--data", nargs="+", required=True,
                   help="observed block files, every block except the target")
    p.add_argument("--target", type=int, required=True, help="1-based target block")
    p.add_argument("--truth", help="matrix file with the true target block (for MSE)")
    p.add_argument("--out", required=True)


def _add_metrics(sub):
    p = sub.add_parser("metrics", help="score fits against simulation ground truth")
    p.add_argument("--truth", required=True, help="simulate output directory")
    p.add_argument("--fits", nargs="+", required=True, help="fit restart directories")
    p.add_argument("--corr-thresh", type=float, default=0.9)
    p.add_argument("--out", required=True)


def _add_network(sub):
    p = sub.add_parser("network", help="consensus partial-correlation network")
    p.add_argument("--runs", nargs="+", required=True, help="fit restart directories")
    p.add_argument("--block", type=int, required=True, help="1-based block index")
    p.add_argument("--data", nargs="+", required=True, help="block files (for structure)")
    p.add_argument("--edge-thresh", type=float, default=0.01)
    p.add_argument("--min-frac", type=float, default=0.5)
    p.add_argument("--out", required=True)


def _add_plot(sub):
    p = sub.add_parser("plot", help="static charts of traces and variance explained")
    p.add_argument("--fit", required=True)
    p.add_argument("--out", required=True)


def build_parser():
    parser = argparse.ArgumentParser(prog="bass")
    sub = parser.add_subparsers(dest="command", required=True)
    for adder in (_add_simulate, _add_fit, _add_predict, _add_metrics, _add_network, _add_plot):
        adder(sub)
    return parser


def _expand(paths):
    out = []
    for p in paths:
        hits = sorted(glob.glob(p))
        out.extend(hits if hits else [p])
    return out


def cmd_simulate(args):
    t0 = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.builtin:
        spec = builtin_spec(args.builtin, n=args.n, seed=args.seed)
    else:
        spec = bio.read_sim_spec(args.spec_file)
        spec = type(spec)(**{**vars_of_spec(spec), "n": args.n, "seed": args.seed})
    data, truth = generate(spec)
    paths = bio.write_dataset(out, data)
    bio.write_truth(out, truth)
    bio.write_sim_spec(out / "spec.txt", spec)
    if args.test_n > 0:
        test = generate_test(truth, args.test_n, seed=spec.seed + 10_000_000)
        paths += bio.write_dataset(out, test, prefix="test_block")
    inputs = [args.spec_file] if args.spec_file else []
    bio.write_manifest(
        out, command=sys.argv, config={"spec": str(out / "spec.txt")},
        seeds=[spec.seed], inputs=inputs, outputs=[str(p) for p in paths],
        wall_time=time.perf_counter() - t0,
    )
    print(f"wrote {len(paths)} block files to {out}")
    return EXIT_OK


def vars_of_spec(spec):
    return {
        "block_dims": spec.block_dims,
        "k": spec.k,
        "activity": spec.activity,
        "n": spec.n,
        "seed": spec.seed,
        "sparsity_frac": spec.sparsity_frac,
        "loading_sd": spec.loading_sd,
        "zero_clip": spec.zero_clip,
        "noise_var_range": spec.noise_var_range,
    }


def _hyper_from_args(args) -> HyperParams:
    mapping = {
        "a": "hyper_a", "b": "hyper_b", "c": "hyper_c", "d": "hyper_d",
        "e": "hyper_e", "f": "hyper_f", "nu": "hyper_nu",
        "a_sigma": "hyper_a_sigma", "b_sigma": "hyper_b_sigma",
    }
    overrides = {
        field: getattr(args, attr)
        for field, attr in mapping.items()
        if getattr(args, attr, None) is not None
    }
    return HyperParams(**overrides)


def cmd_fit(args):
    t0 = time.perf_counter()
    paths = _expand(args.data)
    data = bio.read_dataset(paths)
    standardization = None
    if args.standardize:
        data, mean, sd = standardize_dataset(data)
        standardization = (mean[:, 0], sd[:, 0])
    spec = FitSpec(
        engine=args.engine,
        k_init=args.k_init,
        hyper=_hyper_from_args(args),
        em=EmConfig(max_iter=args.max_iter, ll_tol=args.ll_tol,
                    window_t=args.window_t, prune_eps=args.prune_eps),
        n_px_iter=args.n_px_iter,
        mcmc_init_sweeps=args.mcmc_init_sweeps,
        gibbs=GibbsConfig(args.gibbs_iters, args.gibbs_burn_in, args.gibbs_thin, args.seed),
    )
    results = run_restarts(
        data, spec, seed=args.seed, restarts=args.restarts, return_exceptions=True
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    reports, failures = {}, {}
    for i, result in enumerate(results):
        if isinstance(result, Exception):
            failures[i] = result
            continue
        rdir = out / f"r{i:03d}"
        bio.write_report(rdir, result, engine=args.engine, standardization=standardization)
        outputs.append(str(rdir))
        reports[i] = result
    if reports:
        ok = sorted(reports)
        best = ok[best_fit_index([reports[i] for i in ok])]
        (out / "best.json").write_text(json.dumps({
            "best": f"r{best:03d}",
            "log_posterior": reports[best].final_log_posterior,
        }, indent=2) + "\n")
    bio.write_manifest(
        out, command=sys.argv,
        config={"engine": args.engine, "k_init": args.k_init,
                "restarts": args.restarts, "standardize": bool(args.standardize)},
        seeds=restart_seeds(args.seed, args.restarts),
        inputs=paths, outputs=outputs, wall_time=time.perf_counter() - t0,
    )
    if failures:
        for i, exc in failures.items():
            print(f"restart {i} failed: {exc}", file=sys.stderr)
        print(f"wrote {len(reports)} of {len(results)} fit reports to {out}")
        return EXIT_NUMERIC if any(
            isinstance(e, NumericError) for e in failures.values()
        ) else EXIT_USAGE
    print(f"wrote {len(reports)} fit reports to {out} (best: r{best:03d})")
    return EXIT_OK


def cmd_predict(args):
    t0 = time.perf_counter()
    state = bio.read_state(args.fit)
    paths = _expand(args.data)
    observed = bio.read_dataset(paths)
    target = args.target - 1
    if not 0 <= target <= observed.m:
        raise InvalidInputError(f"target block {args.target} out of range")
    # reconstruct the training block structure: observed blocks + target rows
    p_target = state.Lambda.shape[0] - observed.p
    if p_target <= 0:
        raise InvalidInputError("observed blocks already cover all fitted features")
    dims = observed.block_dims
    dims.insert(target, p_target)
    if sum(dims) != state.Lambda.shape[0]:
        raise InvalidInputError("block dimensions do not match the fitted state")
    skeleton = assemble_dataset([np.zeros((d, 1)) for d in dims])
    stats = bio.read_standardization(args.fit)
    if stats is None:
        pred = predict_block(state, skeleton, target, observed.Y)
    else:
        # the state lives on the standardized scale: transform the inputs
        # with the training statistics and map the prediction back
        mean, sd = stats
        rest = skeleton.rows_except(target)
        rows_t = skeleton.block_slice(target)
        obs_std = (observed.Y - mean[rest]) / sd[rest]
        pred = predict_block(state, skeleton, target, obs_std) * sd[rows_t] + mean[rows_t]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bio.write_matrix(out / "prediction.tsv", pred, name=f"pred_block_{args.target}",
                     block=args.target)
    summary = {"target": args.target, "n": int(pred.shape[1])}
    if args.truth:
        truth_mat, _ = bio.read_matrix(args.truth)
        summary["mse"] = mse(pred, truth_mat)
        print(f"MSE block {args.target}: {summary['mse']:.6f}")
    (out / "predict.json").write_text(json.dumps(summary, indent=2) + "\n")
    bio.write_manifest(out, command=sys.argv, config={"target": args.target},
                       seeds=[], inputs=paths + ([args.truth] if args.truth else []),
                       outputs=[str(out / "prediction.tsv")],
                       wall_time=time.perf_counter() - t0)
    return EXIT_OK


def _column_kinds(activity):
    kinds = []
    for h in range(activity.shape[1]):
        col = activity[:, h]
        kinds.append(SPARSE if SPARSE in col else (DENSE if DENSE in col else "-"))
    return np.array(kinds)


def cmd_metrics(args):
    t0 = time.perf_counter()
    truth = bio.read_truth(args.truth)
    offs = np.concatenate([[0], np.cumsum(truth.block_dims)]).astype(int)
    skeleton = assemble_dataset(
        [np.zeros((d, 1)) for d in truth.block_dims]
    )
    true_kinds = _column_kinds(truth.activity)
    rows = []
    fit_dirs = _expand(args.fits)
    for fdir in fit_dirs:
        state = bio.read_state(fdir)
        stats = bio.read_standardization(fdir)
        if stats is not None:
            # map a standardized fit back to the data's original units
            mean, sd = stats
            state.Lambda = state.Lambda * sd
            state.SigmaDiag = state.SigmaDiag * sd[:, 0] ** 2
        labels = classify_factors(state.Lambda, state.Z, skeleton)
        est_kinds = _column_kinds(labels)
        rec = recovery_rate(state.Lambda, labels, truth, corr_thresh=args.corr_thresh)
        true_sparse = truth.Lambda_true[:, true_kinds == SPARSE]
        est_sparse = state.Lambda[:, est_kinds == SPARSE]
        ssi_val = (
            ssi(true_sparse, est_sparse)
            if true_sparse.shape[1] and est_sparse.shape[1]
            else float("nan")
        )
        dsi_val = 0.0
        for w in range(len(truth.block_dims)):
            rows_w = slice(offs[w], offs[w + 1])
            t_dense = truth.Lambda_true[rows_w][:, truth.activity[w] == DENSE]
            e_dense = state.Lambda[rows_w][:, labels[w] == DENSE]
            dsi_val += dsi(t_dense, e_dense)
        rows.append((fdir, rec, ssi_val, dsi_val, state.k))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["fit\trecovery_rate\tssi\tdsi\tk_final"]
    for fdir, rec, s, d, k in rows:
        lines.append(f"{fdir}\t{rec:.6f}\t{s:.6f}\t{d:.6f}\t{k}")
    (out / "metrics.tsv").write_text("\n".join(lines) + "\n")
    summary = {
        "mean_recovery_rate": float(np.mean([r[1] for r in rows])),
        "mean_ssi": float(np.nanmean([r[2] for r in rows])),
        "mean_dsi": float(np.nanmean([r[3] for r in rows])),
        "n_fits": len(rows),
    }
    (out / "metrics.json").write_text(json.dumps(summary, indent=2) + "\n")
    bio.write_manifest(out, command=sys.argv, config={"corr_thresh": args.corr_thresh},
                       seeds=[], inputs=[], outputs=[str(out / "metrics.tsv")],
                       wall_time=time.perf_counter() - t0)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_network(args):
    t0 = time.perf_counter()
    paths = _expand(args.data)
    data = bio.read_dataset(paths)
    w = args.block - 1
    runs = []
    for rdir in _expand(args.runs):
        state = bio.read_state(rdir)
        labels = classify_factors(state.Lambda, state.Z, data)
        omega = observation_covariance(state, labels, data, w)
        runs.append(partial_correlation(omega))
    edges = consensus_network(runs, edge_thresh=args.edge_thresh, min_frac=args.min_frac)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["node_i\tnode_j\tweight\tsupport_fraction"]
    for (i, j), wgt, sup in zip(edges.edges, edges.weights, edges.support):
        lines.append(f"{i}\t{j}\t{wgt:.17g}\t{sup:.17g}")
    (out / "edges.tsv").write_text("\n".join(lines) + "\n")
    (out / "network.json").write_text(json.dumps({
        "block": args.block, "n_edges": len(edges), "n_runs": len(runs),
        "edge_thresh": args.edge_thresh, "min_frac": args.min_frac,
    }, indent=2) + "\n")
    bio.write_manifest(out, command=sys.argv,
                       config={"block": args.block, "edge_thresh": args.edge_thresh,
                               "min_frac": args.min_frac},
                       seeds=[], inputs=paths, outputs=[str(out / "edges.tsv")],
                       wall_time=time.perf_counter() - t0)
    print(f"{len(edges)} consensus edges for block {args.block}")
    return EXIT_OK


def cmd_plot(args):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    state = bio.read_state(args.fit)
    trace, _ = bio.read_matrix(Path(args.fit) / "trace.tsv")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].plot(trace[:, 0], trace[:, 1])
    axes[0].set_xlabel("iteration")
    axes[0].set_ylabel("log posterior")
    axes[1].plot(trace[:, 0], trace[:, 2])
    axes[1].set_xlabel("iteration")
    axes[1].set_ylabel("factor count")
    fig.tight_layout()
    fig.savefig(out / "trace.png", dpi=120)
    plt.close(fig)

    shares = pve(state)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(np.arange(1, len(shares) + 1), np.sort(shares)[::-1])
    ax.set_xlabel("factor (sorted)")
    ax.set_ylabel("proportion of variance explained")
    fig.tight_layout()
    fig.savefig(out / "pve.png", dpi=120)
    plt.close(fig)
    print(f"wrote trace.png and pve.png to {out}")
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "metrics": cmd_metrics,
    "network": cmd_network,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidInputError, BassError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
