"""vqgeo command-line interface.

Subcommands: gen, run, tune, profile, winrate, rates, infogeo curvature,
mlp train. All CSV output carries a header row; floats print with 17
significant digits.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import bench, infogeo, metrics, mlp
from .numkit import SplitRng
from .optim import ClassicalHyper, QOptConfig


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _load_ensemble(path) -> bench.EnsembleSpec:
    with open(path) as fh:
        return bench.EnsembleSpec.from_json(json.load(fh))


def _cmd_gen(args) -> None:
    ens = bench.EnsembleSpec(
        n_circuits=args.count, n_qubits=args.qubits, n_layers=args.layers,
        gap=args.gap, master_seed=args.seed,
    )
    with open(args.out, "w") as fh:
        json.dump(ens.to_json(), fh)
    print(f"wrote {args.count} circuits to {args.out}")


def _cmd_run(args) -> None:
    ens = _load_ensemble(args.circuits)
    cfg = QOptConfig(args.method, args.eta, args.xi, args.gamma, args.damping,
                     sigma_literal=args.sigma_literal)
    noise = bench.NoiseConfig(args.noise, args.eps, fixed=args.noise_fixed)
    limits = bench.RunLimits(args.max_iters, args.tol, args.window)
    if args.dump_qgt:
        from .qgt import apply_noise, block_qgt

        spec, theta0, _ = ens.instance(0)
        q = block_qgt(spec, theta0)
        if noise.varsigma > 0:
            q = apply_noise(q, noise.varsigma, noise.epsilon, ens.noise_rng(0, (cfg.method, "dump")))
        with open(args.dump_qgt, "w") as fh:
            json.dump(q.to_json(), fh)
    records = bench.run_ensemble(ens, cfg, noise, limits, n_workers=args.workers)
    bench.write_runs_csv(records, args.out)
    n_conv = sum(r.converged for r in records)
    print(f"{cfg.method}: {n_conv}/{len(records)} converged -> {args.out}")


def _cmd_tune(args) -> None:
    ens = _load_ensemble(args.circuits)
    noise = bench.NoiseConfig(args.noise, args.eps)
    limits = bench.RunLimits(args.max_iters, args.tol, args.window)
    best, trials = bench.tune(
        args.method, bench.SearchSpace(), args.trials, ens, seed=args.seed,
        noise=noise, limits=limits, trim_proportion=args.trim,
        n_workers=args.workers,
    )
    with open(args.out, "w") as fh:
        fh.write(f"# trim_proportion={args.trim} convention=total (half per tail)\n")
        fh.write("trial,method,eta,xi,gamma,objective,n_converged,iterations\n")
        for t in trials:
            iters = ";".join(str(int(v)) for v in t["iterations"])
            fh.write(
                f"{t['trial']},{t['method']},{_fmt(t['eta'])},{_fmt(t['xi'])},"
                f"{_fmt(t['gamma'])},{_fmt(t['objective'])},{t['n_converged']},{iters}\n"
            )
    print(
        f"best {args.method}: eta={best['eta']:.4g} xi={best['xi']:.4g} "
        f"gamma={best['gamma']:.4g} objective={best['objective']:.1f}"
    )


def _cmd_profile(args) -> None:
    records = bench.read_runs_csv(args.runs)
    curves = bench.dolan_more(records, args.threshold)
    with open(args.out, "w") as fh:
        fh.write("method,tau,fraction\n")
        for m, curve in sorted(curves.items()):
            for t, f in zip(curve.taus, curve.fractions):
                fh.write(f"{m},{_fmt(t)},{_fmt(f)}\n")
    print(f"profiles for {len(curves)} methods -> {args.out}")


def _parse_thresholds(text: str):
    if ":" in text:
        lo, hi, kind = text.split(":")
        if kind != "log":
            raise ValueError("only log-spaced threshold grids are supported")
        k_lo = int(round(-math.log10(float(lo))))
        k_hi = int(round(-math.log10(float(hi))))
        return [10.0**-k for k in range(min(k_lo, k_hi), max(k_lo, k_hi) + 1)]
    return [float(t) for t in text.split(",")]


def _cmd_winrate(args) -> None:
    records = bench.read_runs_csv(args.runs)
    thresholds = _parse_thresholds(args.thresholds)
    rates = bench.win_rate(records, thresholds)
    with open(args.out, "w") as fh:
        fh.write("method,threshold,win_rate\n")
        for m, fr in sorted(rates.items()):
            for t, f in zip(thresholds, fr):
                fh.write(f"{m},{_fmt(t)},{'' if math.isnan(f) else _fmt(f)}\n")
    print(f"win rates for {len(rates)} methods -> {args.out}")


def _cmd_rates(args) -> None:
    sigmas = np.linspace(0.0, args.sigma_max, args.points)
    out = open(args.out, "w") if args.out else sys.stdout
    out.write("sigma,la,cla1,cla2,cla3\n")
    for s in sigmas:
        vals = [
            metrics.effective_rate(metrics.LA, args.eta, s),
            metrics.effective_rate(metrics.cla1(args.gamma), args.eta, s),
            metrics.effective_rate(metrics.cla2(args.gamma), args.eta, s),
            metrics.effective_rate(metrics.cla3(args.gamma), args.eta, s),
        ]
        out.write(f"{_fmt(s)}," + ",".join(_fmt(v) for v in vals) + "\n")
    if args.out:
        out.close()
        print(f"effective rates -> {args.out}")


def _cmd_infogeo_curvature(args) -> None:
    params = infogeo.KernelParams(kappa=args.kappa, gamma=args.gamma)
    fam = infogeo.MetricFamily(args.family, params)
    out = open(args.out, "w") if args.out else sys.stdout
    if args.sweep == "theta2":
        grid = np.linspace(args.theta2_min, args.theta2_max, args.points)
        out.write("theta2,R_closed,R_numeric\n")
        for t2 in grid:
            p = infogeo.ExpFamilyPoint(args.theta1, t2)
            rc = infogeo.ricci_scalar(fam, p, "closed_form")
            rn = infogeo.ricci_scalar(fam, p, "numeric")
            out.write(f"{_fmt(t2)},{_fmt(rc)},{_fmt(rn)}\n")
    else:
        grid = np.linspace(args.kappa_min, args.kappa_max, args.points)
        out.write("kappa,R_closed,R_numeric\n")
        for kap in grid:
            fam_k = infogeo.MetricFamily(args.family, infogeo.KernelParams(kappa=kap, gamma=args.gamma))
            p = infogeo.ExpFamilyPoint(args.theta1, args.theta2)
            rc = infogeo.ricci_scalar(fam_k, p, "closed_form")
            rn = infogeo.ricci_scalar(fam_k, p, "numeric")
            out.write(f"{_fmt(kap)},{_fmt(rc)},{_fmt(rn)}\n")
    if args.out:
        out.close()
        print(f"curvature sweep -> {args.out}")


def _cmd_mlp_train(args) -> None:
    spec = mlp.MLPSpec(seed=args.seed)
    data = mlp.SyntheticDataset.sample(seed=args.data_seed)
    hyper = ClassicalHyper(eta=args.eta, gamma=args.gamma, lam=args.lam,
                           delta_tilde=args.delta_tilde)
    config = mlp.TrainConfig(batch_size=args.batch_size, max_steps=args.steps, lam=args.lam)
    trace = mlp.train_run(spec, data, args.optimizer, hyper, config, seed=args.seed)
    val_at = dict(zip(trace.val_steps.tolist(), trace.val_accuracies.tolist()))
    with open(args.out, "w") as fh:
        fh.write("step,train_loss,val_accuracy\n")
        for k, loss in enumerate(trace.losses, start=1):
            acc = val_at.get(k)
            fh.write(f"{k},{_fmt(loss)},{'' if acc is None else _fmt(acc)}\n")
    status = "valid" if trace.valid else "INVALID"
    print(f"{args.optimizer}: {len(trace.losses)} steps ({status}) -> {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vqgeo")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a circuit ensemble")
    p.add_argument("--qubits", type=int, default=6)
    p.add_argument("--layers", type=int, default=5)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gap", type=float, default=1.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("run", help="run one method over an ensemble")
    p.add_argument("--circuits", required=True)
    p.add_argument("--method", required=True, choices=list(bench._kernels.METHOD_CODES))
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--xi", type=float, default=0.0)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=12000)
    p.add_argument("--tol", type=float, default=1e-11)
    p.add_argument("--window", type=int, default=400)
    p.add_argument("--damping", type=float, default=1e-8)
    p.add_argument("--sigma-literal", action="store_true")
    p.add_argument("--noise-fixed", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dump-qgt", default=None, help="dump circuit 0's QGT blocks to JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("tune", help="seeded random hyperparameter search")
    p.add_argument("--method", required=True, choices=list(bench._kernels.METHOD_CODES))
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--circuits", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=12000)
    p.add_argument("--tol", type=float, default=1e-11)
    p.add_argument("--window", type=int, default=400)
    p.add_argument("--trim", type=float, default=0.2)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("profile", help="Dolan-More performance profile")
    p.add_argument("--runs", required=True)
    p.add_argument("--threshold", type=float, default=1e-8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_profile)

    p = sub.add_parser("winrate", help="win rate vs error threshold")
    p.add_argument("--runs", required=True)
    p.add_argument("--thresholds", default="1e-2:1e-12:log")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_winrate)

    p = sub.add_parser("rates", help="effective learning-rate curves")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--sigma-max", type=float, required=True)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_rates)

    p_info = sub.add_parser("infogeo", help="exponential-family geometry")
    sub_info = p_info.add_subparsers(dest="subcommand", required=True)
    p = sub_info.add_parser("curvature", help="Ricci scalar sweeps")
    p.add_argument("--family", required=True, choices=list(infogeo.FAMILY_TAGS))
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--theta1", type=float, default=0.0)
    p.add_argument("--theta2", type=float, default=-1.0, help="fixed theta2 for kappa sweeps")
    p.add_argument("--sweep", choices=["theta2", "kappa"], default="theta2")
    p.add_argument("--theta2-min", type=float, default=-10.0)
    p.add_argument("--theta2-max", type=float, default=-0.05)
    p.add_argument("--kappa-min", type=float, default=0.1)
    p.add_argument("--kappa-max", type=float, default=3.0)
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_infogeo_curvature)

    p_mlp = sub.add_parser("mlp", help="classical MLP task")
    sub_mlp = p_mlp.add_subparsers(dest="subcommand", required=True)
    p = sub_mlp.add_parser("train", help="train one optimizer, write the trace")
    p.add_argument("--optimizer", required=True, choices=list(mlp.CLASSICAL_METHODS))
    p.add_argument("--eta", type=float, default=1e-2)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-4)
    p.add_argument("--delta-tilde", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mlp_train)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
