"""End-to-end acceptance suite on the desk-scale benchmark.

One test per criterion; each prints a single CRITERION-n PASS line on
success (visible with ``pytest -rA`` or on failure). The desk
configuration matches configs/desk.json: h = 0.08 (650 free DOFs),
tau = 0.08, 100 steps, 10 equidistant training parameters, N_max = 20,
5 seeded random test parameters, truth at mu = 30 with output noise
std 0.002 (seed 0). Training all three variants takes a few minutes.
"""

import numpy as np
import pytest

from rb4dvar import io as rio
from rb4dvar.basis import lift_control, project_model, reduce_data
from rb4dvar.certification import (build_offline_residual_data, certify,
                                   coercivity_constant,
                                   coercivity_lower_bound, dual_norms,
                                   dual_norms_direct)
from rb4dvar.experiments import (benchmark_truth, estimate_parameter,
                                 evaluation_parameters,
                                 full_order_cost_function,
                                 make_benchmark_data, outer_error_table,
                                 run_sweep, synthesize_observations,
                                 train_parameters)
from rb4dvar.fem import build_taylor_green_model
from rb4dvar.greedy import GreedyConfig, run_greedy
from rb4dvar.optimizer import solve_4dvar
from rb4dvar.solvers import (Control, control_norm, control_pairing, cost,
                             gradient, hessian_apply, zero_control)

VARIANTS = ("strong", "weak", "combined")
NOISE_STD = 0.002
N_LIST = (2, 5, 10, 20)


def _passed(n, msg):
    print(f"CRITERION {n} PASS: {msg}")


@pytest.fixture(scope="module")
def desk_fom():
    return build_taylor_green_model(h=0.08, tau=0.08, num_steps=100)


@pytest.fixture(scope="module")
def desk_truth(desk_fom):
    return benchmark_truth(desk_fom, mu_true=30.0, noise_std=NOISE_STD,
                           seed=0)


@pytest.fixture(scope="module")
def desk_data(desk_fom, desk_truth):
    return {v: make_benchmark_data(desk_fom, desk_truth, v) for v in VARIANTS}


@pytest.fixture(scope="module")
def desk_greedy(desk_fom, desk_data):
    train = train_parameters(10)
    return {v: run_greedy(desk_fom, desk_data[v],
                          GreedyConfig(train_set=train, variant=v, n_max=20))
            for v in VARIANTS}


@pytest.fixture(scope="module")
def desk_test_set():
    return evaluation_parameters(5)


@pytest.fixture(scope="module")
def desk_sweeps(desk_fom, desk_data, desk_greedy, desk_test_set):
    return {v: run_sweep(desk_fom, desk_data[v], desk_greedy[v],
                         desk_test_set, [1] + list(N_LIST))
            for v in VARIANTS}


def test_criterion_1_bound_rigor(desk_sweeps):
    """Certified bound dominates the true control error on every
    (variant, test parameter, reduced dimension) combination."""
    worst = np.inf
    count = 0
    for v in VARIANTS:
        for r in desk_sweeps[v]:
            if r.N not in N_LIST:
                continue
            assert r.failure is None, f"{v} N={r.N} mu={r.mu}: {r.failure}"
            assert r.delta >= r.error * (1 - 1e-6), \
                f"{v} N={r.N} mu={r.mu}: delta={r.delta} < error={r.error}"
            worst = min(worst, r.delta / r.error)
            count += 1
    assert count == len(VARIANTS) * 5 * len(N_LIST)
    _passed(1, f"{count} cases, min effectivity {worst:.3f} >= 1 - 1e-6")


def test_criterion_2_offline_online_equivalence(desk_fom, desk_data,
                                                desk_greedy):
    """Online residual dual norms equal an independent dense Riesz
    computation to 1e-8 relative, 20 random pairs per variant."""
    rng = np.random.default_rng(123)
    worst = 0.0
    for v in VARIANTS:
        basis_full = desk_greedy[v].basis
        data = desk_data[v]
        for _ in range(20):
            n = int(rng.integers(1, basis_full.N + 1))
            basis = basis_full.truncate(n)
            rom = project_model(desk_fom, basis)
            rdata = reduce_data(desk_fom, basis, data)
            offline = build_offline_residual_data(desk_fom, basis, data, v)
            mu = 10.0 + 40.0 * rng.random()
            rsol = solve_4dvar(rom, mu, rdata, v)
            on = dual_norms(offline, rsol, mu, data.z_d)
            di = dual_norms_direct(desk_fom, basis, rsol, mu, data, v)
            for a, b in [(on.R_y, di.R_y), (on.R_p, di.R_p),
                         (on.r_u0, di.r_u0), (on.R_u, di.R_u)]:
                if a is None:
                    assert b is None
                    continue
                rel = abs(a - b) / max(abs(b), 1e-12)
                worst = max(worst, rel)
                assert rel <= 1e-8
    _passed(2, f"60 random pairs, max relative deviation {worst:.3e}")


def test_criterion_3_gradient_hessian_checks(desk_fom, desk_data):
    """Adjoint gradient vs. central differences; Hessian symmetry;
    exact quadratic-model identity."""
    rng = np.random.default_rng(321)
    mu = 26.0
    worst_fd, worst_sym, worst_quad = 0.0, 0.0, 0.0
    for v in VARIANTS:
        data = desk_data[v]

        def rand_ctrl():
            c = zero_control(desk_fom, v)
            if c.u0 is not None:
                c.u0 = rng.standard_normal(desk_fom.n_u0)
            if c.u is not None:
                c.u = rng.standard_normal((desk_fom.K, desk_fom.n_u))
            return c

        ctrl = rand_ctrl()
        g = gradient(desk_fom, mu, ctrl, data)
        eps = 1e-5
        for _ in range(5):
            d = rand_ctrl()
            fd = (cost(desk_fom, mu, ctrl + eps * d, data)
                  - cost(desk_fom, mu, ctrl - eps * d, data)) / (2 * eps)
            rel = abs(fd - control_pairing(g, d)) / max(abs(fd), 1.0)
            worst_fd = max(worst_fd, rel)
            assert rel <= 1e-6
        w1, w2 = rand_ctrl(), rand_ctrl()
        a = control_pairing(hessian_apply(desk_fom, mu, w1), w2)
        b = control_pairing(w1, hessian_apply(desk_fom, mu, w2))
        rel = abs(a - b) / max(abs(a), 1.0)
        worst_sym = max(worst_sym, rel)
        assert rel <= 1e-10
        j0 = cost(desk_fom, mu, zero_control(desk_fom, v), data)
        g0 = gradient(desk_fom, mu, zero_control(desk_fom, v), data)
        jv = cost(desk_fom, mu, ctrl, data)
        model = j0 + control_pairing(g0, ctrl) \
            + 0.5 * control_pairing(hessian_apply(desk_fom, mu, ctrl), ctrl)
        rel = abs(jv - model) / max(abs(jv), 1.0)
        worst_quad = max(worst_quad, rel)
        assert rel <= 1e-9
    _passed(3, f"gradient FD {worst_fd:.2e} <= 1e-6, symmetry "
               f"{worst_sym:.2e} <= 1e-10, quadratic {worst_quad:.2e} <= 1e-9")


def test_criterion_4_coercivity_identity():
    """Lower bound mu_ref/mu equals the generalized-eigenvalue coercivity
    constant on the coarse validation mesh."""
    fom = build_taylor_green_model(h=0.25, tau=0.1, num_steps=5)
    worst = 0.0
    for mu in (10.0, 30.0, 50.0):
        diff = abs(coercivity_constant(fom, mu) - coercivity_lower_bound(mu))
        worst = max(worst, diff)
        assert diff <= 1e-10
    _passed(4, f"max |alpha - mu_ref/mu| = {worst:.2e} <= 1e-10")


def test_criterion_5_greedy_convergence(desk_greedy, desk_sweeps):
    """Strong-variant test-set bound drops >= 2 orders of magnitude from
    N = 1 to N = 20; space dimensions follow the construction invariants."""
    rows = desk_sweeps["strong"]
    rel1 = max(r.rel_delta for r in rows if r.N == 1)
    rel20 = max(r.rel_delta for r in rows if r.N == 20)
    assert rel1 / rel20 >= 100.0, f"decay only {rel1 / rel20:.1f}x"
    for v in VARIANTS:
        for n, (ny, nu0, nu) in enumerate(desk_greedy[v].basis.history, 1):
            if v == "strong":
                assert ny == 2 * n and nu == 0 and nu0 <= n
            elif v == "weak":
                assert ny == 2 * n + 1 and nu == n and nu0 == 0
            else:
                assert ny == 2 * n and nu == n and nu0 <= n
    _passed(5, f"strong bound decay {rel1 / rel20:.0f}x >= 100x; "
               f"dimension invariants hold for all variants")


def test_criterion_6_cg_iteration_cap(desk_sweeps):
    """Strong-variant reduced solves converge within dim(U_N0) + 2 CG
    iterations on every sweep row."""
    worst = 0
    for r in desk_sweeps["strong"]:
        nu0 = r.dims[1]
        assert r.cg_iterations_rom <= nu0 + 2, \
            f"N={r.N} mu={r.mu}: {r.cg_iterations_rom} > {nu0} + 2"
        worst = max(worst, r.cg_iterations_rom - nu0)
    _passed(6, f"max iterations - dim(U_N0) = {worst} <= 2")


def test_criterion_7_exact_data_recovery(desk_fom):
    """Noiseless data with matching prior: the true control is recovered
    to 1e-6 relative and the true parameter to 1e-3 relative."""
    truth = benchmark_truth(desk_fom, mu_true=30.0, noise_std=0.0, seed=0)
    scale = control_norm(desk_fom, Control(u0=truth.y0_true))
    worst = 0.0
    for v in VARIANTS:
        data = make_benchmark_data(desk_fom, truth, v)
        res = solve_4dvar(desk_fom, 30.0, data, v)
        err = 0.0
        if res.control.u0 is not None:
            d = res.control.u0 - truth.y0_true
            err += float(d @ (desk_fom.X_U @ d))
        if res.control.u is not None:
            err += desk_fom.tau * float(np.sum(
                res.control.u * (desk_fom.X_U @ res.control.u.T).T))
        rel = np.sqrt(err) / scale
        worst = max(worst, rel)
        assert rel <= 1e-6, f"{v}: control recovery error {rel:.2e}"
    data = make_benchmark_data(desk_fom, truth, "strong")
    est = estimate_parameter(
        full_order_cost_function(desk_fom, data, "strong"),
        desk_fom.mu_domain, tol=1e-6)
    mu_rel = abs(est.mu_star - 30.0) / 30.0
    assert mu_rel <= 1e-3
    _passed(7, f"control recovery {worst:.2e} <= 1e-6, "
               f"parameter recovery {mu_rel:.2e} <= 1e-3")


def test_criterion_8_outer_estimation_convergence(desk_fom, desk_data,
                                                  desk_greedy):
    """Reduced-order parameter estimation errors fall below 1e-4 by
    N = 20 (strong variant). Known red at desk scale: with only 20
    greedy iterations both errors plateau near 1e-3 at every noise
    level (see the decisions ledger); the threshold is asserted anyway
    so the gap stays visible."""
    rows, ref = outer_error_table(desk_fom, desk_data["strong"],
                                  desk_greedy["strong"], list(N_LIST))
    by_n = {r.N: r for r in rows}
    r20 = by_n[20]
    # errors decrease overall across the sweep
    assert r20.e_J_max <= by_n[2].e_J_max
    assert r20.e_mu <= by_n[2].e_mu
    assert r20.e_mu <= 1e-4 and r20.e_J_max <= 1e-4, \
        (f"attained at N=20: e_mu={r20.e_mu:.3e}, "
         f"e_J_max={r20.e_J_max:.3e} (target 1e-4; "
         f"mu*_full={ref.mu_star:.4f}, mu*_rom={r20.mu_star_rom:.4f})")
    _passed(8, f"strong N=20: e_mu={r20.e_mu:.3e}, "
               f"e_J_max={r20.e_J_max:.3e} <= 1e-4")


def test_criterion_9_determinism(tmp_path, desk_fom, desk_data, desk_greedy,
                                 desk_test_set):
    """Identical configuration reproduces byte-identical CSV numeric
    fields for every pipeline stage."""
    t1 = synthesize_observations(desk_fom, 30.0, desk_data["strong"].u_d0,
                                 NOISE_STD, seed=0)
    t2 = synthesize_observations(desk_fom, 30.0, desk_data["strong"].u_d0,
                                 NOISE_STD, seed=0)
    assert np.array_equal(t1.z_d, t2.z_d)
    paths = []
    for i in (1, 2):
        rows = run_sweep(desk_fom, desk_data["weak"], desk_greedy["weak"],
                         desk_test_set, [5, 20])
        out = []
        for r in rows:
            d = r.__dict__.copy()
            d["N_Y"], d["N_U0"], d["N_U"] = d.pop("dims")
            out.append(d)
        p = tmp_path / f"sweep{i}.csv"
        from rb4dvar.cli import SWEEP_FIELDS
        rio.write_csv(p, out, SWEEP_FIELDS)
        paths.append(p)
    b1, b2 = paths[0].read_bytes(), paths[1].read_bytes()
    assert b1 == b2
    _passed(9, "observation synthesis and sweep CSVs byte-identical "
               "across repeated runs")
