"""Command-line entry point.

Subcommands: ``generate`` (synthetic trajectory bundles), ``build``
(bundle to model file), ``simulate`` (model file to observation CSV),
``validate`` (quantitative reports) and ``info`` (artifact summary).
Every written artifact gets a ``<path>.config.json`` sidecar recording
the fully resolved configuration, so runs can be reproduced exactly.

Exit codes: 0 success, 1 domain error (single ``code: message`` line on
stderr), 2 usage error.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import dmaps, generators, interp, timeseries, validate
from .errors import ClosedObsError
from .model import BuildConfig, build_model, load_model, save_model, simulate_batch

__all__ = ["main", "build_parser"]


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text!r}")


def _ints(text):
    try:
        return [int(t) for t in text.split(",") if t.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}")


def _resolve_threads(value):
    if value is not None:
        return max(1, value)
    env = os.environ.get("CLOSEDOBS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ClosedObsError(f"CLOSEDOBS_THREADS is not an integer: {env!r}")
    return os.cpu_count() or 1


def _write_sidecar(out_path, command, config):
    payload = {"command": command, "config": config}
    with open(str(out_path) + ".config.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_json(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, rows):
    if not rows:
        raise ClosedObsError("report has no rows to write")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v)
                             for k, v in row.items()})


# --------------------------------------------------------------------------
# generate


def _cmd_generate(args):
    if args.system == "spiral":
        cfg = generators.SpiralConfig(grid=args.grid, dt=args.dt,
                                      t_end=args.t_end)
        bundle = generators.gen_spiral(cfg)
        config = {"system": "spiral", "grid": cfg.grid, "dt": cfg.dt,
                  "t_end": cfg.t_end}
    elif args.system == "pde":
        cfg = generators.PdeConfig(c_values=tuple(args.c),
                                   d_values=tuple(args.d), nx=args.nx,
                                   dt=args.dt, t_end=args.t_end)
        bundle = generators.gen_transport_diffusion(cfg)
        config = {"system": "pde", "c_values": list(cfg.c_values),
                  "d_values": list(cfg.d_values), "nx": cfg.nx,
                  "dt": cfg.dt, "t_end": cfg.t_end}
    else:
        cfg = generators.EgressConfig(
            N_T0_values=tuple(args.nt0), N_P0_values=tuple(args.np0),
            runs_per_pair=args.runs, duration=args.duration, seed=args.seed,
            door_rate_base=args.door_rate,
            congestion_coefficient=args.congestion)
        bundle = generators.gen_egress(cfg)
        config = {"system": "egress", "N_T0_values": list(cfg.N_T0_values),
                  "N_P0_values": list(cfg.N_P0_values),
                  "runs_per_pair": cfg.runs_per_pair,
                  "duration": cfg.duration, "seed": cfg.seed,
                  "door_rate_base": cfg.door_rate_base,
                  "congestion_coefficient": cfg.congestion_coefficient}
    timeseries.save_bundle(bundle, args.out)
    _write_sidecar(args.out, f"generate {args.system}", config)
    print(f"wrote {args.out}: {len(bundle.trajectories)} trajectories, "
          f"n0={bundle.n0}, m={bundle.m}")
    return 0


# --------------------------------------------------------------------------
# build


def _method_arg(text):
    if text is None:
        return None
    return interp.parse_method(text)


def _cmd_build(args):
    bundle = timeseries.load_bundle(args.input)
    if args.average_runs:
        bundle = timeseries.average_runs(bundle)
    kernel = dmaps.KernelConfig(epsilon=args.epsilon,
                                median_factor=args.epsilon_median_factor)
    truncation = dmaps.TruncationConfig(
        lambda_ratio=args.lambda_ratio,
        dependency_residual=args.dependency_residual,
        neighbors=args.neighbors)
    config = BuildConfig(T=args.delay, kernel=kernel, truncation=truncation,
                         scheme=args.scheme,
                         interp_input=_method_arg(args.interp_input),
                         interp_dynamic=_method_arg(args.interp_dynamic),
                         interp_observer=_method_arg(args.interp_observer),
                         landmark_stride=args.landmark_stride,
                         extrapolation_multiple=args.extrapolation_multiple,
                         coordinate_scaling=args.coordinate_scaling)
    model = build_model(bundle, config)
    save_model(model, args.out)
    _write_sidecar(args.out, "build",
                   {"input": args.input, "average_runs": args.average_runs,
                    "build": config.to_dict()})
    eigs = model.provenance.get("eigenvalues", [])
    print(f"wrote {args.out}: d={model.d}, T={model.T}, "
          f"{len(model.dynamic)} dynamic nodes, "
          f"{len(eigs)} eigenvalues retained for inspection")
    return 0


# --------------------------------------------------------------------------
# simulate


def _cmd_simulate(args):
    model = load_model(args.model)
    x0s = np.array(args.x0, dtype=np.float64)
    if x0s.shape[1] != model.n0:
        raise ClosedObsError(
            f"--x0 needs {model.n0} components, got {x0s.shape[1]}")
    sim = simulate_batch(model, x0s, args.steps, stepper=args.stepper)
    header = (["traj_id", "k"] + [f"obs_{j}" for j in range(model.m)]
              + ["extrapolated"])
    lines = [",".join(header)]
    for i in range(x0s.shape[0]):
        for k in range(args.steps + 1):
            obs = [repr(float(v)) for v in sim.observations[i, k]]
            flag = int(bool(sim.extrapolation_flags[i, k]))
            lines.append(",".join([str(i), str(k)] + obs + [str(flag)]))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        _write_sidecar(args.out, "simulate",
                       {"model": args.model, "x0": [list(x) for x in args.x0],
                        "steps": args.steps, "stepper": args.stepper})
        print(f"wrote {args.out}: {x0s.shape[0] * (args.steps + 1)} rows")
    else:
        sys.stdout.write(text)
    if sim.extrapolation_flags.any():
        print("warning: some steps queried far outside the training nodes",
              file=sys.stderr)
    return 0


# --------------------------------------------------------------------------
# validate


def _emit_report(args, command, report):
    data = report.to_dict()
    if args.out:
        _write_json(args.out, data)
        csv_path = args.csv or os.path.splitext(args.out)[0] + ".csv"
        _write_csv(csv_path, report.csv_rows())
        _write_sidecar(args.out, command, data.get("config", {}))
        print(f"wrote {args.out} and {csv_path}")
    else:
        json.dump(data, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
        if args.csv:
            _write_csv(args.csv, report.csv_rows())
            print(f"wrote {args.csv}")


def _cmd_validate(args):
    if args.check == "convergence":
        report = validate.convergence_study(
            step_counts=tuple(args.steps), n_line=args.n_line,
            T=args.delay, t_end=args.t_end, n_eval=args.n_eval,
            seed=args.seed, landmark_max=args.landmark_max,
            workers=_resolve_threads(args.threads))
        _emit_report(args, "validate convergence", report)
        for scheme, slope in report.slopes.items():
            print(f"{scheme}: slope {slope:.3f}")
    elif args.check == "storage":
        report = validate.storage_account(args.d, args.m, args.n0, args.N)
        _emit_report(args, "validate storage", report)
        print(f"new={report.new_model_nodes} naive={report.naive_nodes} "
              f"ratio={report.ratio:.3g} reduction={report.reduction_holds}")
    elif args.check == "bound":
        report = validate.bound_audit(args.M, args.e_dynamic, args.e_input,
                                      args.e_observer, n_max=args.n_max,
                                      trials=args.trials, seed=args.seed)
        _emit_report(args, "validate bound", report)
        cs = ", ".join(f"{c:.3f}" for c in report.constants)
        print(f"constants [{cs}] satisfied={report.satisfied}")
    elif args.check == "holdout":
        model = load_model(args.model)
        truth = timeseries.load_bundle(args.truth)
        report = validate.holdout_error(model, truth, stepper=args.stepper)
        _emit_report(args, "validate holdout", report)
        print(f"max_eps={report.max_eps:.3g} "
              f"max_eps_modeled={report.max_eps_modeled:.3g}")
    else:
        model = load_model(args.model)
        report = validate.egress_analysis(model, args.nt0, args.np0,
                                          horizons=tuple(args.horizons),
                                          stepper=args.stepper)
        _emit_report(args, "validate egress", report)
        print(f"conservation_max_dev={report.conservation_max_dev:.3g}")
    return 0


# --------------------------------------------------------------------------
# info


def _cmd_info(args):
    path = args.path
    kind = None
    try:
        with open(path, "r", encoding="utf-8") as fh:
            head = fh.read(64)
        if '"closedobs-model"' in head:
            kind = "model"
    except OSError as exc:
        raise ClosedObsError(f"cannot read {path}: {exc.strerror}")
    if kind == "model":
        model = load_model(path)
        eigs = model.provenance.get("eigenvalues", [])
        kept = model.provenance.get("kept_indices", [])
        print(f"model {path}")
        print(f"  d={model.d} m={model.m} n0={model.n0} T={model.T} "
              f"dt={model.dt!r} scheme={model.scheme}")
        print(f"  nodes: input_map={len(model.input_map)} "
              f"dynamic={len(model.dynamic)} observer={len(model.observer)}")
        print(f"  kept eigenvalue indices: {kept}")
        print("  eigenvalue spectrum:")
        for i, lam in enumerate(eigs):
            mark = " *" if i in kept else ""
            print(f"    lambda_{i + 1} = {lam:.6g}{mark}")
    else:
        bundle = timeseries.load_bundle(path)
        lengths = [tr.length for tr in bundle.trajectories]
        print(f"bundle {path}")
        print(f"  trajectories={len(lengths)} n0={bundle.n0} m={bundle.m} "
              f"dt={bundle.dt!r}")
        print(f"  lengths: min={min(lengths)} max={max(lengths)} "
              f"total_rows={sum(lengths)}")
        if bundle.meta:
            print(f"  meta: {json.dumps(bundle.meta, sort_keys=True)}")
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="closedobs",
        description="Coarse time-autonomous models from observation series.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic bundle")
    gsub = gen.add_subparsers(dest="system", required=True)
    g_spiral = gsub.add_parser("spiral", help="decaying spiral, radius observed")
    g_spiral.add_argument("--grid", type=int, default=21,
                          help="points per axis of the initial-condition grid")
    g_spiral.add_argument("--dt", type=float, default=0.1)
    g_spiral.add_argument("--t-end", type=float, default=2.0)
    g_pde = gsub.add_parser("pde", help="transport-diffusion profiles")
    g_pde.add_argument("--c", type=_floats, default=[1.4, 2.0, 3.0],
                       help="diffusion numerators, comma separated")
    g_pde.add_argument("--d", type=_floats, default=[2.0, 4.0, 6.0],
                       help="diffusion denominators, comma separated")
    g_pde.add_argument("--nx", type=int, default=32)
    g_pde.add_argument("--dt", type=float, default=0.05)
    g_pde.add_argument("--t-end", type=float, default=1.0)
    g_eg = gsub.add_parser("egress", help="platform egress counts")
    g_eg.add_argument("--nt0", type=_ints, default=[10, 20, 30, 40, 50],
                      help="initial train passenger counts")
    g_eg.add_argument("--np0", type=_ints,
                      default=[0, 20, 40, 60, 80, 100, 120, 140, 160, 180, 200],
                      help="initial platform counts")
    g_eg.add_argument("--runs", type=int, default=10)
    g_eg.add_argument("--duration", type=int, default=50)
    g_eg.add_argument("--seed", type=int, default=0)
    g_eg.add_argument("--door-rate", type=float, default=4.5)
    g_eg.add_argument("--congestion", type=float, default=2.5)
    for p in (g_spiral, g_pde, g_eg):
        p.add_argument("--out", required=True, help="bundle path (.csv or .json)")

    bld = sub.add_parser("build", help="build a model file from a bundle")
    bld.add_argument("--input", required=True, help="bundle path")
    bld.add_argument("--out", required=True, help="model file path")
    bld.add_argument("--delay", type=int, default=5, help="delay length T")
    bld.add_argument("--scheme", choices=["one_sided", "central"],
                     default="one_sided")
    bld.add_argument("--epsilon", type=float, default=None,
                     help="kernel bandwidth; default median heuristic")
    bld.add_argument("--epsilon-median-factor", type=float, default=1.0)
    bld.add_argument("--lambda-ratio", type=float, default=1e-3)
    bld.add_argument("--dependency-residual", type=float, default=0.05)
    bld.add_argument("--neighbors", type=int, default=10)
    bld.add_argument("--landmark-stride", type=int, default=1)
    bld.add_argument("--extrapolation-multiple", type=float, default=5.0)
    bld.add_argument("--coordinate-scaling", choices=["none", "unit_range"],
                     default="none",
                     help="rescale retained coordinates before fitting maps")
    bld.add_argument("--average-runs", action="store_true",
                     help="average trajectories sharing an input first")
    for name in ("input", "dynamic", "observer"):
        bld.add_argument(f"--interp-{name}", default=None,
                         help="nearest | shepard:k=8,power=2 | "
                              "rbf_gaussian:shape=0.5,ridge=1e-12 | "
                              "rbf_cubic:k=16,rcond=1e-8")

    sim = sub.add_parser("simulate", help="run a model file forward")
    sim.add_argument("--model", required=True)
    sim.add_argument("--x0", action="append", required=True, type=_floats,
                     help="initial input, comma separated; repeatable")
    sim.add_argument("--steps", type=int, required=True)
    sim.add_argument("--stepper", choices=["increment", "rk4"],
                     default="increment")
    sim.add_argument("--out", default=None, help="CSV path; default stdout")

    val = sub.add_parser("validate", help="quantitative checks")
    vsub = val.add_subparsers(dest="check", required=True)
    v_conv = vsub.add_parser("convergence", help="scheme order study")
    v_conv.add_argument("--steps", type=_ints, default=[20, 40, 80, 200])
    v_conv.add_argument("--delay", type=int, default=5)
    v_conv.add_argument("--n-line", type=int, default=21)
    v_conv.add_argument("--t-end", type=float, default=2.0)
    v_conv.add_argument("--n-eval", type=int, default=1000)
    v_conv.add_argument("--seed", type=int, default=0)
    v_conv.add_argument("--landmark-max", type=int, default=1500)
    v_conv.add_argument("--threads", type=int, default=None,
                        help="worker cap; default CLOSEDOBS_THREADS or cores")
    v_stor = vsub.add_parser("storage", help="node-count accounting")
    v_stor.add_argument("--d", type=int, required=True)
    v_stor.add_argument("--m", type=int, required=True)
    v_stor.add_argument("--n0", type=int, required=True)
    v_stor.add_argument("--N", type=int, required=True)
    v_bound = vsub.add_parser("bound", help="error propagation audit")
    v_bound.add_argument("--M", type=float, required=True)
    v_bound.add_argument("--e-dynamic", type=float, default=1e-3)
    v_bound.add_argument("--e-input", type=float, default=1e-3)
    v_bound.add_argument("--e-observer", type=float, default=1e-3)
    v_bound.add_argument("--n-max", type=int, default=50)
    v_bound.add_argument("--trials", type=int, default=1000)
    v_bound.add_argument("--seed", type=int, default=0)
    v_hold = vsub.add_parser("holdout", help="error against truth bundle")
    v_hold.add_argument("--model", required=True)
    v_hold.add_argument("--truth", required=True, help="truth bundle path")
    v_hold.add_argument("--stepper", choices=["increment", "rk4"],
                        default="increment")
    v_eg = vsub.add_parser("egress", help="chance-of-exit surfaces")
    v_eg.add_argument("--model", required=True)
    v_eg.add_argument("--nt0", type=_floats, default=[10, 20, 30, 40, 50])
    v_eg.add_argument("--np0", type=_floats,
                      default=[0, 20, 40, 60, 80, 100, 120, 140, 160, 180, 200])
    v_eg.add_argument("--horizons", type=_ints, default=[25, 50])
    v_eg.add_argument("--stepper", choices=["increment", "rk4"],
                      default="increment")
    for p in (v_conv, v_stor, v_bound, v_hold, v_eg):
        p.add_argument("--out", default=None, help="JSON report path")
        p.add_argument("--csv", default=None,
                       help="plot-ready CSV path; default <out>.csv")

    inf = sub.add_parser("info", help="summarize a bundle or model file")
    inf.add_argument("path")

    return parser


_COMMANDS = {"generate": _cmd_generate, "build": _cmd_build,
             "simulate": _cmd_simulate, "validate": _cmd_validate,
             "info": _cmd_info}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ClosedObsError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
