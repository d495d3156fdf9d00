"""Command-line driver for the certified reduced-order 4D-Var benchmark.

Pipeline: ``assemble`` builds the discrete model, ``synthesize`` creates
noisy observations from a known truth, ``train-*`` runs the POD-Greedy
sampling for one assimilation variant, ``sweep`` tabulates errors and
certified bounds over test parameters, ``estimate`` compares full- and
reduced-order parameter estimation, ``report`` summarizes artifacts.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.
"""

import argparse
import json
import sys

import numpy as np

from . import io as rio
from .errors import (ConfigurationError, NonConvergenceError,
                     SingularSystemError)
from .experiments import (ExperimentConfig, benchmark_truth,
                          estimate_parameter, full_order_cost_function,
                          make_benchmark_data, outer_error_table, run_sweep,
                          evaluation_parameters, train_parameters)
from .fem import build_taylor_green_model
from .greedy import GreedyConfig, run_greedy

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

SWEEP_FIELDS = ["variant", "N", "N_Y", "N_U0", "N_U", "mu", "error", "delta",
                "effectivity", "rel_error", "rel_delta", "cg_iterations_rom",
                "cg_iterations_fom", "cost_rom", "cost_fom", "failure"]
ESTIMATE_FIELDS = ["variant", "N", "mu_star_fom", "mu_star_rom", "cost_fom",
                   "cost_rom", "e_mu", "e_J_max"]
TRACE_FIELDS = ["n", "mu_selected", "max_rel_bound", "mu_next", "N_Y",
                "N_U0", "N_U", "wall_time"]


def _load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file: {exc}", path=path)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON: {exc}", path=path)
    cfg = ExperimentConfig.from_dict(raw)
    return cfg, rio.config_hash(cfg.raw)


def _build_model(cfg):
    return build_taylor_green_model(h=cfg.h, tau=cfg.tau,
                                    num_steps=cfg.num_steps)


def _cmd_assemble(args):
    cfg, h = _load_config(args.config)
    fom = _build_model(cfg)
    rio.save_model(args.out, fom, meta={"config_hash": h})
    print(f"assembled model: {fom.n_y} free DOFs, {fom.K} time steps "
          f"-> {args.out}")
    return EXIT_OK


def _cmd_synthesize(args):
    cfg, h = _load_config(args.config)
    fom = rio.load_model(args.model)
    truth = benchmark_truth(fom, mu_true=cfg.mu_true,
                            noise_std=cfg.noise_std, seed=cfg.seed,
                            ic_center=cfg.ic_center, ic_sigma=cfg.ic_sigma,
                            ic_amplitude=cfg.ic_amplitude)
    rio.save_truth(args.out, truth, meta={"config_hash": h})
    print(f"synthesized observations: mu_true={truth.mu_true}, "
          f"noise_std={truth.noise_std}, seed={truth.seed} -> {args.out}")
    return EXIT_OK


def _cmd_train(args, variant):
    cfg, h = _load_config(args.config)
    fom = rio.load_model(args.model)
    truth = rio.load_truth(args.truth)
    data = make_benchmark_data(fom, truth, variant)
    gconf = GreedyConfig(
        train_set=train_parameters(cfg.n_train, fom.mu_domain),
        variant=variant, n_max=cfg.n_max, tol=cfg.greedy_tol)
    result = run_greedy(fom, data, gconf)
    rio.save_greedy(args.out, result, meta={"config_hash": h})
    last = result.trace[-1]
    print(f"trained {variant} basis: N={result.basis.N}, "
          f"dims={result.basis.dims}, "
          f"final max relative bound {last.max_rel_bound:.3e} -> {args.out}")
    return EXIT_OK


def _cmd_sweep(args):
    cfg, _ = _load_config(args.config)
    fom = rio.load_model(args.model)
    truth = rio.load_truth(args.truth)
    greedy = rio.load_greedy(args.basis)
    data = make_benchmark_data(fom, truth, greedy.variant)
    mus = evaluation_parameters(cfg.n_test, fom.mu_domain, cfg.test_seed)
    rows = run_sweep(fom, data, greedy, mus, cfg.N_list)
    out_rows = []
    for r in rows:
        d = r.__dict__.copy()
        d["N_Y"], d["N_U0"], d["N_U"] = d.pop("dims")
        out_rows.append(d)
    rio.write_csv(args.out, out_rows, SWEEP_FIELDS)
    n_fail = sum(1 for r in rows if r.failure)
    print(f"sweep: {len(rows)} rows ({n_fail} failures) -> {args.out}")
    if rows and not all(r.failure for r in rows):
        worst = max((r for r in rows if not r.failure),
                    key=lambda r: r.rel_delta)
        print(f"largest relative bound {worst.rel_delta:.3e} at "
              f"N={worst.N}, mu={worst.mu:.4f}")
    return EXIT_OK


def _cmd_estimate(args):
    cfg, _ = _load_config(args.config)
    fom = rio.load_model(args.model)
    truth = rio.load_truth(args.truth)
    greedy = rio.load_greedy(args.basis)
    data = make_benchmark_data(fom, truth, greedy.variant)
    rows, ref = outer_error_table(fom, data, greedy, cfg.N_list,
                                  tol=cfg.estimation_tol)
    rio.write_csv(args.out, [r.__dict__ for r in rows], ESTIMATE_FIELDS)
    print(f"full-order estimate: mu*={ref.mu_star:.6f} "
          f"(J*={ref.cost_star:.8e}, {ref.n_evaluations} cost evaluations)")
    for r in rows:
        print(f"N={r.N:3d}: mu*={r.mu_star_rom:.6f}  e_mu={r.e_mu:.3e}  "
              f"e_J_max={r.e_J_max:.3e}")
    print(f"-> {args.out}")
    return EXIT_OK


def _cmd_report(args):
    greedy = rio.load_greedy(args.basis)
    print(f"variant: {greedy.variant}")
    print(f"training set: {len(greedy.train_set)} parameters in "
          f"[{greedy.train_set.min():g}, {greedy.train_set.max():g}]")
    print(f"constants: gamma_b={greedy.constants.gamma_b:.6e}, "
          f"gamma_c={greedy.constants.gamma_c:.6e}")
    print(f"{'n':>3} {'mu_selected':>12} {'max_rel_bound':>14} "
          f"{'dims':>14} {'time[s]':>8}")
    for r in greedy.trace:
        print(f"{r.n:>3} {r.mu_selected:>12.4f} {r.max_rel_bound:>14.3e} "
              f"{str(r.dims):>14} {r.wall_time:>8.2f}")
    if args.out:
        rows = [{"n": r.n, "mu_selected": r.mu_selected,
                 "max_rel_bound": r.max_rel_bound, "mu_next": r.mu_next,
                 "N_Y": r.dims[0], "N_U0": r.dims[1], "N_U": r.dims[2],
                 "wall_time": r.wall_time} for r in greedy.trace]
        rio.write_csv(args.out, rows, TRACE_FIELDS)
        print(f"-> {args.out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="rb4dvar",
        description="Certified reduced-order 4D-Var for parametrized "
                    "transport problems")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_, **needs):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True,
                        help="JSON experiment configuration")
        for opt, h in needs.items():
            sp.add_argument(f"--{opt}", required=True, help=h)
        sp.set_defaults(func=func)
        return sp

    add("assemble", _cmd_assemble, "build the discrete model",
        out="output model artifact (.npz)")
    add("synthesize", _cmd_synthesize, "generate noisy observations",
        model="model artifact", out="output truth artifact (.npz)")
    for variant in ("strong", "weak", "combined"):
        add(f"train-{variant}",
            lambda a, v=variant: _cmd_train(a, v),
            f"POD-Greedy training, {variant}-constraint variant",
            model="model artifact", truth="truth artifact",
            out="output trained-basis artifact (.npz)")
    add("sweep", _cmd_sweep, "error/bound table over test parameters",
        model="model artifact", truth="truth artifact",
        basis="trained-basis artifact", out="output CSV")
    add("estimate", _cmd_estimate, "full vs. reduced parameter estimation",
        model="model artifact", truth="truth artifact",
        basis="trained-basis artifact", out="output CSV")
    rp = sub.add_parser("report", help="print a training-trace summary")
    rp.add_argument("--basis", required=True, help="trained-basis artifact")
    rp.add_argument("--out", default=None, help="optional trace CSV")
    rp.set_defaults(func=_cmd_report)
    return p


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergenceError, SingularSystemError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
