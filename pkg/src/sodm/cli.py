"""Command-line entry points: train, predict, bench, verify-bounds,
inspect-partition, plot.

Exit codes: 0 success, 1 runtime or verification failure, 2 usage error.
Reports are JSON lines tagged with "schema": "sodm/1"; models are single
JSON documents. Outputs are reproducible from (flags, seed) except for
wall-time fields. ``--figures DIR`` renders the matching matplotlib
figures next to the delimited output.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np
import scipy.sparse as sp

from . import figures as figmod
from .data import DataError, apply_scaling, normalize, parse_libsvm
from .hierarchy import ConfigError, TrainConfig, level_report_json, train
from .kernels import KernelSpec, linear_kernel, rbf_kernel
from .oracle import run_bound_trials
from .partition import build_plan, default_stratums, diagnostics
from .solver import (
    HyperParams,
    Model,
    load_model,
    model_to_json,
    save_model,
)
from .svrg import SvrgConfig, UnsupportedConfigError, dsvrg_train

_DIAGNOSTICS_LIMIT = 5000


class UsageError(Exception):
    pass


def _kernel_from_args(args):
    if args.kernel == "rbf":
        if args.gamma is None:
            raise UsageError("--kernel rbf requires --gamma")
        return rbf_kernel(args.gamma)
    if args.gamma is not None:
        raise UsageError("--gamma only applies to --kernel rbf")
    return linear_kernel()


def _hp_from_args(args):
    try:
        return HyperParams(lam=args.lam, theta=args.theta, nu=args.nu)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_common_train_flags(parser):
    parser.add_argument("--data", required=True)
    parser.add_argument("--kernel", choices=["linear", "rbf"], required=True)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--lambda", dest="lam", type=float, required=True)
    parser.add_argument("--theta", type=float, required=True)
    parser.add_argument("--nu", type=float, required=True)
    parser.add_argument("--p", type=int, default=2)
    parser.add_argument("--levels", type=int, default=0)
    parser.add_argument("--stratums", type=int)
    parser.add_argument("--svrg", action="store_true")
    parser.add_argument("--nodes", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--eta", type=float)
    parser.add_argument("--tol", type=float, default=1e-4)
    parser.add_argument("--max-epochs", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument(
        "--literal-merge",
        action="store_true",
        help="return the concatenated last-level solution without a final full solve",
    )


def _linear_model(w, kernel, num_features, hp, scaling):
    return Model(
        kernel=kernel,
        num_features=num_features,
        support_indices=np.zeros(0, dtype=np.int64),
        support_labels=np.zeros(0),
        support_gammas=np.zeros(0),
        support_features=sp.csr_matrix((0, num_features)),
        linear_w=np.asarray(w, dtype=np.float64),
        hyperparams=hp,
        scaling=scaling,
    )


def _train_once(args, workers):
    if args.svrg:
        if args.kernel == "rbf":
            raise UsageError("--svrg conflicts with --kernel rbf: the accelerated "
                             "path solves the linear primal")
        if args.nodes is None or args.epochs is None:
            raise UsageError("--svrg requires --nodes and --epochs")
    kernel = _kernel_from_args(args)
    hp = _hp_from_args(args)
    dataset = parse_libsvm(args.data)
    dataset, scaling = normalize(dataset)
    if args.svrg:
        config = SvrgConfig(
            nodes=args.nodes,
            epochs=args.epochs,
            stratums=args.stratums,
            eta=args.eta,
            seed=args.seed,
            workers=workers,
        )
        w, trajectory = dsvrg_train(dataset, kernel, hp, config)
        model = _linear_model(w, kernel, dataset.num_features, hp, scaling)
        records = [
            {"schema": "sodm/1", "type": "epoch", **entry} for entry in trajectory
        ]
    else:
        config = TrainConfig(
            p=args.p,
            levels=args.levels,
            stratums=args.stratums,
            tol=args.tol,
            max_epochs=args.max_epochs,
            seed=args.seed,
            workers=workers,
            final_full_solve=not args.literal_merge,
        )
        model, level_reports = train(dataset, kernel, hp, config)
        model.scaling = scaling
        records = [level_report_json(r) for r in level_reports]
    return model, records


def _write_jsonl(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


def cmd_train(args):
    model, records = _train_once(args, args.workers)
    save_model(model, args.out)
    if args.report:
        _write_jsonl(records, args.report)
        if args.figures:
            figmod.render_report(args.report, args.figures)
    elif args.figures:
        raise UsageError("--figures requires --report")
    return 0


def cmd_predict(args):
    model = load_model(args.model)
    dataset = parse_libsvm(args.data)
    if dataset.num_features > model.num_features:
        print(
            "error: data has %d features but the model was trained on %d"
            % (dataset.num_features, model.num_features),
            file=sys.stderr,
        )
        return 1
    if model.scaling is not None and len(dataset) > 0:
        dataset = apply_scaling(dataset, model.scaling, clamp=True)
    preds = model.predict(dataset.features)
    with open(args.out, "w", encoding="utf-8") as fh:
        for p in preds:
            fh.write("+1\n" if p > 0 else "-1\n")
    if args.metrics:
        metrics = {"schema": "sodm/1", "count": int(len(dataset))}
        if len(dataset) > 0:
            metrics["accuracy"] = float(np.mean(preds == dataset.labels))
        with open(args.metrics, "w", encoding="utf-8") as fh:
            json.dump(metrics, fh)
            fh.write("\n")
    return 0


def cmd_bench(args):
    try:
        workers_list = [int(tok) for tok in args.workers_list.split(",") if tok]
    except ValueError:
        raise UsageError("--workers-list must be comma-separated integers") from None
    if not workers_list or any(w < 1 for w in workers_list):
        raise UsageError("--workers-list entries must be >= 1")
    wall_times = []
    reference = None
    for w in workers_list:
        started = time.perf_counter()
        model, _ = _train_once(args, w)
        wall_times.append(time.perf_counter() - started)
        serialized = json.dumps(model_to_json(model))
        if reference is None:
            reference = serialized
        elif serialized != reference:
            print(
                "error: model for workers=%d differs from workers=%d"
                % (w, workers_list[0]),
                file=sys.stderr,
            )
            return 1
    record = {
        "schema": "sodm/1",
        "workers": workers_list,
        "wall_time_s": wall_times,
        "speedup": [wall_times[0] / t for t in wall_times],
        "identical_models": True,
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(record, fh)
        fh.write("\n")
    if args.figures:
        figmod.plot_bench(record, _ensure_dir(args.figures))
    return 0


def cmd_verify_bounds(args):
    if args.trials <= 0:
        raise UsageError("--trials must be positive")
    theorem = {"1": 1, "2": 2, "both": "both"}[args.theorem]
    records = run_bound_trials(theorem, args.trials, args.seed)
    lines = [json.dumps(r) for r in records]
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        for line in lines:
            print(line)
    if args.figures:
        figmod.plot_trials(records, _ensure_dir(args.figures))
    failures = [r for r in records if not r["satisfied"]]
    if failures:
        first = failures[0]
        print(
            "error: %d unsatisfied bound(s); first at theorem %s trial %d (seed %d)"
            % (len(failures), first["theorem"], first["trial"], first["seed"]),
            file=sys.stderr,
        )
        return 1
    return 0


def cmd_inspect_partition(args):
    kernel = _kernel_from_args(args)
    dataset = parse_libsvm(args.data)
    dataset, _ = normalize(dataset)
    stratums = args.stratums if args.stratums else default_stratums(len(dataset))
    plan = build_plan(dataset, kernel, stratums, args.partitions, args.seed)
    record = {"schema": "sodm/1", **plan.to_json()}
    if not args.no_diagnostics and len(dataset) <= _DIAGNOSTICS_LIMIT:
        record["diagnostics"] = diagnostics(dataset, kernel, plan.stratum_of).to_json()
    else:
        record["diagnostics"] = None
    text = json.dumps(record)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_plot(args):
    written = figmod.render_report(args.report, args.out_dir)
    for path in written:
        print(path)
    return 0


def _ensure_dir(path):
    import os

    os.makedirs(path, exist_ok=True)
    return path


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sodm",
        description="Scalable optimal margin distribution machine trainer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model")
    _add_common_train_flags(p_train)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--report")
    p_train.add_argument("--figures")
    p_train.set_defaults(func=cmd_train)

    p_pred = sub.add_parser("predict", help="predict labels with a saved model")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--data", required=True)
    p_pred.add_argument("--out", required=True)
    p_pred.add_argument("--metrics")
    p_pred.set_defaults(func=cmd_predict)

    p_bench = sub.add_parser(
        "bench", help="time one training config across worker counts"
    )
    _add_common_train_flags(p_bench)
    p_bench.add_argument("--workers-list", required=True)
    p_bench.add_argument("--out", required=True)
    p_bench.add_argument("--figures")
    p_bench.set_defaults(func=cmd_bench)

    p_verify = sub.add_parser(
        "verify-bounds", help="randomized verification of the approximation bounds"
    )
    p_verify.add_argument("--trials", type=int, required=True)
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--theorem", choices=["1", "2", "both"], default="both")
    p_verify.add_argument("--out")
    p_verify.add_argument("--figures")
    p_verify.set_defaults(func=cmd_verify_bounds)

    p_inspect = sub.add_parser(
        "inspect-partition", help="emit the stratified partition plan as JSON"
    )
    p_inspect.add_argument("--data", required=True)
    p_inspect.add_argument("--kernel", choices=["linear", "rbf"], required=True)
    p_inspect.add_argument("--gamma", type=float)
    p_inspect.add_argument("--stratums", type=int)
    p_inspect.add_argument("--partitions", type=int, required=True)
    p_inspect.add_argument("--seed", type=int, default=0)
    p_inspect.add_argument("--out")
    p_inspect.add_argument("--no-diagnostics", action="store_true")
    p_inspect.set_defaults(func=cmd_inspect_partition)

    p_plot = sub.add_parser("plot", help="render a report file into figures")
    p_plot.add_argument("--report", required=True)
    p_plot.add_argument("--out-dir", required=True)
    p_plot.set_defaults(func=cmd_plot)

    return parser


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConfigError, UnsupportedConfigError) as exc:
        print("usage error: %s" % exc, file=sys.stderr)
        return 2
    except (DataError, OSError, RuntimeError, ValueError, json.JSONDecodeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
