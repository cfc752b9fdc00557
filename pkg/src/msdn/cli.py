"""Command-line pipeline: data generation, training, evaluation, checks.

Exit codes: 2 usage/arguments, 3 bad data, 4 numeric failure, 5 shape
mismatch, 6 gradient-check failure.  The first stderr line of any
failure is a single machine-parseable ``error: ...`` message.  Setting
MSDN_SEED overrides --seed wherever that flag exists.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from . import ablation, data_io, losses, model, training, zsl_eval
from .errors import ArgumentError, GradientCheckError, MsdnError, ShapeError
from .ndmath import Rng, grad_check_detail

GRAD_TOLERANCE = 1e-5
# Test hook: name a parameter matrix here to corrupt its analytic
# gradient by 10%, proving grad-check reports failures.
GRAD_BUG_ENV = "MSDN_INJECT_GRAD_BUG"


def _resolve_seed(cli_seed: int | None, default: int) -> int:
    env = os.environ.get("MSDN_SEED")
    if env is not None:
        return int(env)
    return default if cli_seed is None else cli_seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msdn",
        description="Mutual-attention zero-shot learner: synthetic data, "
                    "training, evaluation, and verification tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dataset container")
    p.add_argument("--spec", help="key=value file with SynthSpec fields")
    p.add_argument("--seed", type=int, help="override the generator seed")
    p.add_argument("--out", required=True, help="output container path")

    p = sub.add_parser("train", help="train on a dataset container")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True, help="key=value TrainConfig file")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--history", help="per-epoch loss CSV output path")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mode", choices=zsl_eval.MODES, default="gzsl")
    p.add_argument("--alpha1", type=float, default=0.9)
    p.add_argument("--alpha2", type=float, default=0.1)
    p.add_argument("--out", required=True, help="metric CSV output path")
    p.add_argument("--per-class", dest="per_class", help="per-class accuracy CSV path")

    p = sub.add_parser("grad-check", help="verify analytic gradients")
    p.add_argument("--dims", default="5,4,8,6,3,2",
                   help="k,r,d_v,d_a,c_seen,c_unseen")
    p.add_argument("--seed", type=int, help="instance seed")

    p = sub.add_parser("ablate", help="train and score all ablation variants")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="variant,acc,H CSV path")
    p.add_argument("--alpha1", type=float, default=0.9)
    p.add_argument("--alpha2", type=float, default=0.1)

    p = sub.add_parser("export-attention", help="dump attention weights for one image")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")

    return parser


def cmd_gen_data(args) -> int:
    spec = data_io.load_synth_spec(args.spec) if args.spec else data_io.SynthSpec()
    seed = _resolve_seed(args.seed, spec.seed)
    spec = dataclasses.replace(spec, seed=seed)
    ds = data_io.generate_synthetic(spec)
    data_io.save_container(ds, args.out)
    for name in data_io.REQUIRED_TENSORS:
        print(f"{name} {getattr(ds, name).shape}")
    for name, arr in ds.extras.items():
        print(f"{name} {arr.shape}")
    return 0


def cmd_train(args) -> int:
    ds = data_io.load_container(args.data)
    cfg = training.load_train_config(args.config)
    outcome = training.train(ds, cfg)
    model.save_checkpoint(outcome.params, args.out)
    if args.history:
        training.write_history_csv(outcome.history, args.history)
    if outcome.history:
        print(f"trained {cfg.epochs} epochs, final total loss "
              f"{outcome.history[-1].total:.6f}")
    else:
        print("trained 0 epochs (parameters left at initialization)")
    return 0


def _check_dims(params: model.ModelParams, ds: data_io.Dataset) -> None:
    expected = model.ModelDims.for_dataset(ds)
    if params.dims != expected:
        raise ShapeError(
            f"checkpoint dims {params.dims} do not match dataset dims {expected}"
        )


def cmd_eval(args) -> int:
    ds = data_io.load_container(args.data)
    params = model.load_checkpoint(args.checkpoint)
    _check_dims(params, ds)
    cfg = zsl_eval.PredictConfig(alpha1=args.alpha1, alpha2=args.alpha2, mode=args.mode)
    report = zsl_eval.evaluate(params, ds, cfg)
    zsl_eval.write_report_csv(report, args.out)
    if args.per_class:
        zsl_eval.write_per_class_csv(report, args.per_class)
    if args.mode == "czsl":
        print(f"acc {report.acc:.4f}")
    else:
        print(f"U {report.U:.4f} S {report.S:.4f} H {report.H:.4f}")
    return 0


def cmd_grad_check(args) -> int:
    try:
        k, r, d_v, d_a, c_seen, c_unseen = (int(v) for v in args.dims.split(","))
    except ValueError as exc:
        raise ArgumentError(f"--dims expects six integers, got {args.dims!r}") from exc
    seed = _resolve_seed(args.seed, 0)
    rng = Rng(seed)
    dims = model.ModelDims(visual_dim=d_v, attr_dim=d_a,
                           num_attributes=k, num_regions=r)
    params = model.init_params_from_rng(dims, rng)
    batch = 2
    regions = np.stack([rng.uniform(-1.0, 1.0, r, d_v) for _ in range(batch)])
    attrs = rng.uniform(-1.0, 1.0, k, d_a)
    semantics = rng.uniform(0.0, 1.0, c_seen + c_unseen, k)
    labels = np.asarray([rng.next_below(c_seen) for _ in range(batch)])
    seen = np.arange(c_seen)
    unseen = np.arange(c_seen, c_seen + c_unseen)
    cfg = losses.LossConfig()

    def loss_with(name: str, flat: np.ndarray) -> float:
        candidate = params.with_updates({name: flat.reshape(params.as_dict()[name].shape)})
        breakdown, _ = losses.total_loss_raw(
            candidate, regions, labels, attrs, semantics, seen, unseen, cfg)
        return breakdown.total

    _, grads = losses.total_loss_raw(
        params, regions, labels, attrs, semantics, seen, unseen, cfg)
    bug_target = os.environ.get(GRAD_BUG_ENV)
    failures = []
    for name in model.PARAM_NAMES:
        analytic = grads[name]
        if bug_target == name:
            analytic = analytic * 1.1
        detail = grad_check_detail(
            lambda flat, _n=name: loss_with(_n, flat),
            params.as_dict()[name].reshape(-1),
            analytic.reshape(-1),
        )
        print(f"{name} max_rel_error={detail.max_rel_error:.3e}")
        if detail.max_rel_error > GRAD_TOLERANCE:
            failures.append((name, detail))
    if failures:
        name, detail = max(failures, key=lambda item: item[1].max_rel_error)
        raise GradientCheckError(
            f"gradient check failed for {name} at flat coordinate "
            f"{detail.worst_index}: analytic {detail.analytic_at_worst:.6e}, "
            f"numeric {detail.numeric_at_worst:.6e}, "
            f"relative error {detail.max_rel_error:.3e} > {GRAD_TOLERANCE:.0e}"
        )
    print("all gradients ok")
    return 0


def cmd_ablate(args) -> int:
    ds = data_io.load_container(args.data)
    cfg = training.load_train_config(args.config)
    results = ablation.run_ablation(ds, cfg, alpha1=args.alpha1, alpha2=args.alpha2)
    ablation.write_ablation_csv(results, args.out)
    for row in results:
        print(f"{row.variant} acc={row.acc:.4f} H={row.H:.4f}")
    return 0


def cmd_export_attention(args) -> int:
    ds = data_io.load_container(args.data)
    params = model.load_checkpoint(args.checkpoint)
    _check_dims(params, ds)
    if not 0 <= args.image < ds.num_samples:
        raise ArgumentError(
            f"--image {args.image} out of range for {ds.num_samples} samples"
        )
    trace = model.forward(ds.features[args.image], ds.attributes, params)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def write_grid(path: Path, row_label: str, col_label: str, grid: np.ndarray) -> None:
        with open(path, "w", newline="") as fh:
            header = [row_label] + [f"{col_label}_{j}" for j in range(grid.shape[1])]
            fh.write(",".join(header) + "\n")
            for i, row in enumerate(grid):
                fh.write(",".join([str(i)] + [repr(float(v)) for v in row]) + "\n")

    write_grid(out_dir / "beta.csv", "attribute", "region", trace.beta)
    write_grid(out_dir / "tau.csv", "region", "attribute", trace.tau)
    with open(out_dir / "scores.csv", "w", newline="") as fh:
        fh.write("attribute,psi,Psi\n")
        for i in range(trace.psi.shape[0]):
            fh.write(f"{i},{float(trace.psi[i])!r},{float(trace.Psi[i])!r}\n")
    print(f"wrote beta.csv, tau.csv, scores.csv to {out_dir}")
    return 0


_HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "grad-check": cmd_grad_check,
    "ablate": cmd_ablate,
    "export-attention": cmd_export_attention,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = _HANDLERS[args.command]
    try:
        return handler(args)
    except MsdnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()
