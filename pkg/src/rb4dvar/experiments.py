"""Benchmark experiments: data synthesis, error sweeps, parameter estimation.

The outer problem estimates the unknown transport parameter mu by
minimizing the assimilation cost mu -> J(u*(mu); mu) over the parameter
domain, with the inner 4D-Var problem solved either full-order or
reduced-order.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .basis import cost_of_reduced_solution, lift_control, project_model, reduce_data
from .certification import build_offline_residual_data, certify
from .errors import ConfigurationError
from .fem import gaussian_initial_condition
from .optimizer import SolveOptions, solve_4dvar
from .solvers import Control, control_norm, make_data


@dataclass
class TruthData:
    mu_true: float
    y0_true: np.ndarray        # free-DOF vector
    z_clean: np.ndarray        # (K, ell) noiseless outputs
    z_d: np.ndarray            # (K, ell) noisy observations
    noise_std: float
    seed: int


def synthesize_observations(fom, mu_true, y0_true, noise_std=0.05, seed=0):
    """Forward-simulate the truth and add i.i.d. Gaussian output noise."""
    y = _truth_states(fom, mu_true, y0_true)
    z_clean = y[1:] @ fom.C.T
    rng = np.random.default_rng(seed)
    z_d = z_clean + noise_std * rng.standard_normal(z_clean.shape)
    return TruthData(mu_true=float(mu_true), y0_true=y0_true,
                     z_clean=z_clean, z_d=z_d, noise_std=float(noise_std),
                     seed=int(seed))


def _truth_states(fom, mu, y0):
    from .solvers import solve_state
    return solve_state(fom, mu, Control(u0=np.asarray(y0, dtype=float)))


def benchmark_truth(fom, mu_true=30.0, noise_std=0.05, seed=0,
                    ic_center=(-0.1, 0.8), ic_sigma=0.1, ic_amplitude=1.0):
    """Standard benchmark truth: Gaussian initial state, noisy box outputs."""
    y0 = fom.restrict(gaussian_initial_condition(
        fom.mesh, center=ic_center, sigma=ic_sigma, amplitude=ic_amplitude))
    return synthesize_observations(fom, mu_true, y0, noise_std, seed)


def make_benchmark_data(fom, truth: TruthData, variant):
    """Assimilation data for one variant of the benchmark.

    The strong and combined variants use the true initial state as the
    background prior; the weak variant knows the initial state exactly
    and uses the zero (unbiased-model) forcing prior.
    """
    if variant == "strong":
        return make_data(fom, truth.z_d, u_d0=truth.y0_true)
    if variant == "weak":
        return make_data(fom, truth.z_d, y0=truth.y0_true)
    if variant == "combined":
        return make_data(fom, truth.z_d, u_d0=truth.y0_true)
    raise ConfigurationError(f"unknown variant {variant!r}")


def evaluation_parameters(n=5, mu_domain=(10.0, 50.0), seed=2024):
    """Reproducible random test parameters, away from the domain edges."""
    rng = np.random.default_rng(seed)
    lo, hi = mu_domain
    return lo + (hi - lo) * rng.random(n)


def train_parameters(n=10, mu_domain=(10.0, 50.0)):
    return np.linspace(mu_domain[0], mu_domain[1], n)


@dataclass
class SweepRow:
    variant: str
    N: int
    dims: tuple
    mu: float
    error: float               # control-metric error vs. full-order optimum
    delta: float
    effectivity: float
    rel_error: float
    rel_delta: float
    cg_iterations_rom: int
    cg_iterations_fom: int
    cost_rom: float
    cost_fom: float
    failure: Optional[str] = None


def run_sweep(fom, data, greedy_result, test_set, N_list, opts=None,
              constants=None):
    """Error/bound table over reduced dimensions and test parameters.

    A failing row (e.g. non-convergence at one parameter) is recorded
    with its ``failure`` message instead of aborting the sweep.
    """
    variant = greedy_result.variant
    constants = constants or greedy_result.constants
    opts = opts or SolveOptions()

    fom_cache = {}

    def full_solution(mu):
        if mu not in fom_cache:
            fom_cache[mu] = solve_4dvar(fom, mu, data, variant, opts)
        return fom_cache[mu]

    rows = []
    for N in N_list:
        if N > greedy_result.basis.N:
            continue
        basis = greedy_result.basis.truncate(N)
        rom = project_model(fom, basis)
        rdata = reduce_data(fom, basis, data)
        offline = build_offline_residual_data(fom, basis, data, variant)
        for mu in test_set:
            mu = float(mu)
            try:
                rsol = solve_4dvar(rom, mu, rdata, variant, opts)
                fsol = full_solution(mu)
                err_ctrl = lift_control(basis, rsol.control) - fsol.control
                error = control_norm(fom, err_ctrl)
                rep = certify(offline, rsol, mu, data.z_d, constants,
                              error=error)
                norm_full = control_norm(fom, fsol.control)
                cost_rom = cost_of_reduced_solution(fom, basis, rom, rsol,
                                                    data)
                rows.append(SweepRow(
                    variant=variant, N=N, dims=basis.dims, mu=mu,
                    error=error, delta=rep.delta,
                    effectivity=rep.effectivity,
                    rel_error=error / norm_full if norm_full else math.inf,
                    rel_delta=rep.delta / norm_full if norm_full else math.inf,
                    cg_iterations_rom=rsol.cg_iterations,
                    cg_iterations_fom=fsol.cg_iterations,
                    cost_rom=cost_rom, cost_fom=fsol.cost))
            except Exception as exc:  # keep the sweep alive per-row
                rows.append(SweepRow(
                    variant=variant, N=N, dims=basis.dims, mu=mu,
                    error=math.nan, delta=math.nan, effectivity=math.nan,
                    rel_error=math.nan, rel_delta=math.nan,
                    cg_iterations_rom=-1, cg_iterations_fom=-1,
                    cost_rom=math.nan, cost_fom=math.nan,
                    failure=f"{type(exc).__name__}: {exc}"))
    return rows


@dataclass
class EstimationResult:
    mu_star: float
    cost_star: float
    n_evaluations: int


def estimate_parameter(cost_fn, mu_domain=(10.0, 50.0), tol=1e-6):
    """Minimize a scalar cost over the parameter interval (bounded search)."""
    res = minimize_scalar(cost_fn, bounds=mu_domain, method="bounded",
                          options={"xatol": tol})
    return EstimationResult(mu_star=float(res.x), cost_star=float(res.fun),
                            n_evaluations=int(res.nfev))


def full_order_cost_function(fom, data, variant, opts=None):
    def cost_fn(mu):
        return solve_4dvar(fom, float(mu), data, variant, opts).cost
    return cost_fn


def reduced_cost_function(fom, basis, data, variant, opts=None):
    """Outer cost evaluated with the reduced model (true cost via lifting)."""
    rom = project_model(fom, basis)
    rdata = reduce_data(fom, basis, data)

    def cost_fn(mu):
        rsol = solve_4dvar(rom, float(mu), rdata, variant, opts)
        return cost_of_reduced_solution(fom, basis, rom, rsol, data)
    return cost_fn


@dataclass
class OuterErrorRow:
    variant: str
    N: int
    mu_star_fom: float
    mu_star_rom: float
    cost_fom: float            # full-order cost at the full-order minimizer
    cost_rom: float            # reduced cost at the reduced minimizer
    e_mu: float                # relative parameter-estimate error
    e_J_max: float             # max over the grid of the relative cost error


def outer_error_table(fom, data, greedy_result, N_list, tol=1e-6, opts=None,
                      reference=None, grid=None, full_costs=None):
    """Outer-estimation errors of the reduced model against the full one.

    For each retained dimension N this reports the relative error of the
    reduced parameter estimate, e_mu = |mu* - mu_N*| / |mu*|, and the worst
    relative cost error over a parameter grid,
    e_J_max = max_grid |J*(mu) - J_N*(mu)| / |J*(mu)|.  The grid defaults to
    the training set of the greedy run.
    """
    variant = greedy_result.variant
    full_cost_fn = full_order_cost_function(fom, data, variant, opts)
    if reference is None:
        reference = estimate_parameter(full_cost_fn, fom.mu_domain, tol)
    if grid is None:
        grid = greedy_result.train_set
    grid = [float(mu) for mu in grid]
    if full_costs is None:
        full_costs = [full_cost_fn(mu) for mu in grid]
    rows = []
    for N in N_list:
        if N > greedy_result.basis.N:
            continue
        basis = greedy_result.basis.truncate(N)
        reduced_cost_fn = reduced_cost_function(fom, basis, data, variant,
                                                opts)
        est = estimate_parameter(reduced_cost_fn, fom.mu_domain, tol)
        e_J_max = max(abs(J_full - reduced_cost_fn(mu)) / abs(J_full)
                      for mu, J_full in zip(grid, full_costs))
        rows.append(OuterErrorRow(
            variant=variant, N=N,
            mu_star_fom=reference.mu_star, mu_star_rom=est.mu_star,
            cost_fom=reference.cost_star, cost_rom=est.cost_star,
            e_mu=abs(est.mu_star - reference.mu_star) / abs(reference.mu_star),
            e_J_max=e_J_max))
    return rows, reference


# ---------------------------------------------------------------------------
# configuration handling for the command-line interface


_DEFAULT_CONFIG = {
    "mesh": {"h": 0.08},
    "time": {"tau": 0.08, "num_steps": 100},
    "truth": {"mu_true": 30.0, "noise_std": 0.05, "seed": 0,
              "ic_center": [-0.1, 0.8], "ic_sigma": 0.1, "ic_amplitude": 1.0},
    "training": {"n_train": 10, "n_max": 20, "tol": 1e-10},
    "evaluation": {"n_test": 5, "test_seed": 2024, "N_list": [2, 5, 10, 20]},
    "estimation": {"tol": 1e-6},
}


def _require(cfg, path, typ):
    node = cfg
    walked = []
    for key in path.split("."):
        walked.append(key)
        if not isinstance(node, dict) or key not in node:
            raise ConfigurationError("missing required key",
                                     path=".".join(walked))
        node = node[key]
    if typ is float and isinstance(node, int) and not isinstance(node, bool):
        node = float(node)
    if not isinstance(node, typ) or isinstance(node, bool):
        raise ConfigurationError(
            f"expected {typ.__name__}, got {type(node).__name__}", path=path)
    return node


@dataclass
class ExperimentConfig:
    h: float
    tau: float
    num_steps: int
    mu_true: float
    noise_std: float
    seed: int
    ic_center: tuple
    ic_sigma: float
    ic_amplitude: float
    n_train: int
    n_max: int
    greedy_tol: float
    n_test: int
    test_seed: int
    N_list: tuple
    estimation_tol: float
    raw: dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigurationError("configuration must be a JSON object")
        merged = {}
        for section, defaults in _DEFAULT_CONFIG.items():
            user = d.get(section, {})
            if not isinstance(user, dict):
                raise ConfigurationError("expected object", path=section)
            unknown = set(user) - set(defaults)
            if unknown:
                raise ConfigurationError(
                    f"unknown key {sorted(unknown)[0]!r}", path=section)
            merged[section] = {**defaults, **user}
        unknown = set(d) - set(_DEFAULT_CONFIG)
        if unknown:
            raise ConfigurationError(f"unknown section {sorted(unknown)[0]!r}")

        h = _require(merged, "mesh.h", float)
        if h <= 0 or abs(round(2.0 / h) - 2.0 / h) > 1e-9:
            raise ConfigurationError("h must divide the domain side length 2",
                                     path="mesh.h")
        tau = _require(merged, "time.tau", float)
        if tau <= 0:
            raise ConfigurationError("tau must be positive", path="time.tau")
        num_steps = _require(merged, "time.num_steps", int)
        if num_steps < 1:
            raise ConfigurationError("num_steps must be at least 1",
                                     path="time.num_steps")
        mu_true = _require(merged, "truth.mu_true", float)
        if not 10.0 <= mu_true <= 50.0:
            raise ConfigurationError("mu_true outside parameter domain",
                                     path="truth.mu_true")
        noise_std = _require(merged, "truth.noise_std", float)
        if noise_std < 0:
            raise ConfigurationError("noise_std must be nonnegative",
                                     path="truth.noise_std")
        center = _require(merged, "truth.ic_center", list)
        if len(center) != 2 or not all(
                isinstance(c, (int, float)) and not isinstance(c, bool)
                for c in center):
            raise ConfigurationError("ic_center must be [x, y]",
                                     path="truth.ic_center")
        ic_sigma = _require(merged, "truth.ic_sigma", float)
        if ic_sigma <= 0:
            raise ConfigurationError("ic_sigma must be positive",
                                     path="truth.ic_sigma")
        n_train = _require(merged, "training.n_train", int)
        if n_train < 1:
            raise ConfigurationError("n_train must be at least 1",
                                     path="training.n_train")
        n_max = _require(merged, "training.n_max", int)
        if n_max < 1:
            raise ConfigurationError("n_max must be at least 1",
                                     path="training.n_max")
        N_list = _require(merged, "evaluation.N_list", list)
        if not N_list or not all(isinstance(n, int) and not isinstance(n, bool)
                                 and n >= 1 for n in N_list):
            raise ConfigurationError("N_list must be positive integers",
                                     path="evaluation.N_list")
        est_tol = _require(merged, "estimation.tol", float)
        if not 0 < est_tol < 1:
            raise ConfigurationError("tol must lie in (0, 1)",
                                     path="estimation.tol")
        return cls(
            h=h, tau=tau, num_steps=num_steps, mu_true=mu_true,
            noise_std=noise_std, seed=_require(merged, "truth.seed", int),
            ic_center=tuple(float(c) for c in center),
            ic_sigma=ic_sigma,
            ic_amplitude=_require(merged, "truth.ic_amplitude", float),
            n_train=n_train, n_max=n_max,
            greedy_tol=_require(merged, "training.tol", float),
            n_test=_require(merged, "evaluation.n_test", int),
            test_seed=_require(merged, "evaluation.test_seed", int),
            N_list=tuple(N_list), estimation_tol=est_tol, raw=merged)

    @classmethod
    def default(cls, **overrides):
        d = {k: dict(v) for k, v in _DEFAULT_CONFIG.items()}
        for dotted, value in overrides.items():
            section, key = dotted.split(".")
            d[section][key] = value
        return cls.from_dict(d)
