"""End-to-end acceptance checks.

Each test prints one PASS line with its headline numbers; thresholds and
runtime budgets are asserted. The heavy directional-replication runs
share one experiment execution through a session fixture.
"""

import time

import numpy as np
import pytest

from conftest import random_minimal_siso, random_task
from ddsim import (
    BaselineModel,
    DesignProblem,
    ExperimentConfig,
    KernelPrior,
    MatrixKind,
    PriorKind,
    SimulationTask,
    Trajectory,
    covariance,
    design_objective,
    make_prior,
    monotone_link,
    mutual_information,
    run_experiment,
    simulate,
    simulate_dd,
    solve_design,
    solve_smm_relaxed,
)
from ddsim.errors import DegenerateProblemError
from ddsim.harness import (
    compatible_initial_state,
    make_baseline,
    make_task,
    paired_sign_test,
)
from ddsim.lti import benchmark_system
from ddsim.sigmat import build, min_data_length, partition


def random_spd(rng, n, lo=0.5, hi=5.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return Q @ np.diag(rng.uniform(lo, hi, n)) @ Q.T


@pytest.fixture(scope="session")
def grid_run(tmp_path_factory):
    """One full Fig.-1 replication grid with the default configuration."""
    out = tmp_path_factory.mktemp("grid") / "run1"
    config = ExperimentConfig()
    t0 = time.perf_counter()
    run_experiment(config, out_dir=str(out))
    elapsed = time.perf_counter() - t0
    return config, out, elapsed


def read_raw_cells(path):
    cells = {}
    for line in path.read_text().splitlines()[1:]:
        N, sigma2, kind, trial, W = line.split(",")
        cells.setdefault((int(N), float(sigma2), kind), []).append(float(W))
    return {key: np.asarray(vals) for key, vals in cells.items()}


def test_criterion_01_exact_simulation_minimum_length(benchmark):
    t0 = time.perf_counter()
    rng = np.random.default_rng(100)
    u_d = Trajectory.from_values(rng.standard_normal(35))
    y_d, _ = simulate(benchmark, rng.standard_normal(4), u_d)
    worst = 0.0
    for _ in range(50):
        task, y_true = random_task(benchmark, rng, 4, 10)
        sol = simulate_dd(u_d, y_d, task, MatrixKind.HANKEL)
        rel = np.linalg.norm(sol.y_s_hat.vector - y_true.vector) / np.linalg.norm(
            y_true.vector)
        worst = max(worst, rel)
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-6
    assert elapsed < 5.0
    print(f"criterion 1: PASS (max rel error {worst:.2e}, {elapsed:.2f}s)")


def test_criterion_02_relaxed_page_simulation(benchmark):
    t0 = time.perf_counter()
    assert min_data_length(MatrixKind.PAGE, 14, 4, 1) == 1036
    config = ExperimentConfig()
    task, y_true, _ = make_task(benchmark, config)
    # windows proportional to [u_ini; u_s] satisfy the range condition
    ubar = task.ubar
    u = np.tile(ubar, 6)
    u *= np.sqrt(config.E0 * 84 / float(u @ u))
    u_d = Trajectory.from_values(u)
    x0 = compatible_initial_state(benchmark, u_d, task, MatrixKind.PAGE)
    y_d, _ = simulate(benchmark, x0, u_d)
    sol = simulate_dd(u_d, y_d, task, MatrixKind.PAGE)
    rel = np.linalg.norm(sol.y_s_hat.vector - y_true.vector) / np.linalg.norm(
        y_true.vector)
    elapsed = time.perf_counter() - t0
    assert rel <= 1e-6
    assert elapsed < 5.0
    print(f"criterion 2: PASS (N=84 rel error {rel:.2e}, bound 1036, "
          f"{elapsed:.2f}s)")


def test_criterion_03_covariance_monte_carlo():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    L, sigma2, draws = 10, 0.4, 200_000
    worst = 0.0
    for M in (3, 4, 6, 8, 10, 12, 14, 16, 18, 20):
        g = rng.standard_normal(M)
        E = rng.standard_normal((draws, M + L - 1)) * np.sqrt(sigma2)
        Y = np.stack([E[:, i:i + M] @ g for i in range(L)], axis=1)
        mc = Y.T @ Y / draws
        sig = covariance(g, sigma2, L, MatrixKind.HANKEL)
        worst = max(worst, np.linalg.norm(mc - sig) / np.linalg.norm(sig))
        page = covariance(g, sigma2, L, MatrixKind.PAGE)
        assert np.array_equal(page, sigma2 * float(g @ g) * np.eye(L))
    elapsed = time.perf_counter() - t0
    assert worst <= 0.03
    assert elapsed < 60.0
    print(f"criterion 3: PASS (max rel Frobenius {worst:.3%}, {elapsed:.2f}s)")


def test_criterion_04_mutual_information_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(102)
    worst_mi = worst_post = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 8))
        sigma_K = random_spd(rng, n)
        sigma_yf = random_spd(rng, n)
        prior = KernelPrior(sigma_K)
        mi = mutual_information(prior, sigma_yf)
        form_a = 0.5 * np.linalg.slogdet(
            np.eye(n) + sigma_K @ np.linalg.inv(sigma_yf))[1]
        post = np.linalg.inv(np.linalg.inv(sigma_K) + np.linalg.inv(sigma_yf))
        form_b = 0.5 * (np.linalg.slogdet(sigma_K)[1]
                        - np.linalg.slogdet(post)[1])
        worst_mi = max(worst_mi, abs(mi - form_a), abs(mi - form_b))
        gain = sigma_K @ np.linalg.inv(sigma_K + sigma_yf)
        worst_post = max(worst_post,
                         np.abs(post - (sigma_K - gain @ sigma_K)).max())
    elapsed = time.perf_counter() - t0
    assert worst_mi <= 1e-10
    assert worst_post <= 1e-10
    assert elapsed < 5.0
    print(f"criterion 4: PASS (max MI dev {worst_mi:.2e}, max cov dev "
          f"{worst_post:.2e}, {elapsed:.2f}s)")


def test_criterion_05_monotone_link(benchmark):
    t0 = time.perf_counter()
    rng = np.random.default_rng(103)
    zs = np.logspace(-3, 3, 60)
    for _ in range(20):
        prior = KernelPrior(random_spd(rng, int(rng.integers(2, 8))))
        vals = [monotone_link(z, prior) for z in zs]
        assert all(b < a for a, b in zip(vals, vals[1:]))
    # decision level: candidate Page inputs ranked by ||g||^2 ascending
    # equal the ranking by mutual information descending for every prior
    config = ExperimentConfig()
    task, _, _ = make_task(benchmark, config)
    ubar = task.ubar
    v = rng.standard_normal(14)
    sigma2, Ls = 0.001, 10
    priors = [make_prior(PriorKind.IDENTITY, {"scale": 1.0}, Ls),
              make_prior(PriorKind.DIAGONAL_DECAY, {"c": 2.0, "rho": 0.7}, Ls),
              make_prior(PriorKind.CUSTOM, {"matrix": random_spd(rng, Ls)}, Ls)]
    norms, mis = [], {id(p): [] for p in priors}
    for _ in range(15):
        coeff = rng.standard_normal((6, 2))
        u = np.concatenate([c0 * ubar + c1 * v for c0, c1 in coeff])
        U = build(Trajectory.from_values(u), 14, MatrixKind.PAGE).data
        g, *_ = np.linalg.lstsq(U, ubar, rcond=None)
        assert np.linalg.norm(U @ g - ubar) <= 1e-8
        norms.append(float(g @ g))
        for p in priors:
            mis[id(p)].append(
                mutual_information(p, sigma2 * float(g @ g) * np.eye(Ls)))
    order = np.argsort(norms)
    for p in priors:
        assert np.array_equal(order, np.argsort(mis[id(p)])[::-1])
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    print(f"criterion 5: PASS (20 kernels monotone, rankings agree for "
          f"{len(priors)} priors x 15 candidates, {elapsed:.2f}s)")


def test_criterion_06_relaxed_smm_solver():
    t0 = time.perf_counter()
    rng = np.random.default_rng(104)
    worst_kkt = worst_dev = 0.0
    for _ in range(50):
        model = random_minimal_siso(rng, 2)
        L0, Ls, L = 2, 3, 5
        u = Trajectory.from_values(rng.standard_normal(13))
        y, _ = simulate(model, rng.standard_normal(2), u)
        task, _ = random_task(model, rng, L0, Ls)
        part = partition(build(u, L, MatrixKind.HANKEL),
                         build(y, L, MatrixKind.HANKEL), L0, Ls)
        sigma2 = float(10.0 ** rng.uniform(-4, -1))
        sol = solve_smm_relaxed(part, task, sigma2)
        worst_kkt = max(worst_kkt, sol.kkt_residual)
        U = part.U
        F = L * sigma2 * np.eye(part.cols) + part.Yp.T @ part.Yp
        K = np.block([[F, U.T], [U, np.zeros((L, L))]])
        rhs = np.concatenate([part.Yp.T @ task.y_ini.vector, task.ubar])
        z, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        worst_dev = max(worst_dev, np.linalg.norm(sol.g - z[: part.cols]))
    # sigma^2 -> 0 limit on clean benchmark data
    bench = benchmark_system()
    u_d = Trajectory.from_values(rng.standard_normal(40))
    y_d, _ = simulate(bench, rng.standard_normal(4), u_d)
    task, _ = random_task(bench, rng, 4, 10)
    part = partition(build(u_d, 14, MatrixKind.HANKEL),
                     build(y_d, 14, MatrixKind.HANKEL), 4, 10)
    exact = simulate_dd(u_d, y_d, task, MatrixKind.HANKEL)
    limit = solve_smm_relaxed(part, task, 1e-12)
    limit_dev = np.linalg.norm(limit.y_s_hat.vector - exact.y_s_hat.vector)
    elapsed = time.perf_counter() - t0
    assert worst_kkt <= 1e-8
    assert worst_dev <= 1e-8
    assert limit_dev <= 1e-6
    assert elapsed < 10.0
    print(f"criterion 6: PASS (max KKT {worst_kkt:.2e}, max oracle dev "
          f"{worst_dev:.2e}, limit dev {limit_dev:.2e}, {elapsed:.2f}s)")


def test_criterion_07_design_vs_random_search():
    t0 = time.perf_counter()
    rng = np.random.default_rng(105)
    model = random_minimal_siso(rng, 1)
    x_hat = rng.standard_normal(1)
    u_ini = Trajectory.from_values(rng.standard_normal(1))
    y_ini, _ = simulate(model, x_hat, u_ini)
    task = SimulationTask(u_ini=u_ini, y_ini=y_ini,
                          u_s=Trajectory.from_values([1.0]))
    h, _ = simulate(model, np.zeros(1),
                    Trajectory.from_values([1.0] + [0.0] * 5))
    prob = DesignProblem(task=task, baseline=BaselineModel(h.vector),
                         sigma2=0.01, N=6, kind=MatrixKind.HANKEL, E0=0.1)
    result = solve_design(prob, multistart=5, seed=0)
    best = np.inf
    for _ in range(10_000):
        draw = rng.standard_normal(6)
        draw *= np.sqrt(prob.energy_budget / float(draw @ draw))
        draw *= rng.uniform(0.2, 1.0) ** 0.5  # mix of boundary and interior
        try:
            best = min(best, design_objective(
                prob, Trajectory.from_values(draw)))
        except DegenerateProblemError:
            continue
    elapsed = time.perf_counter() - t0
    assert result.objective <= 1.02 * best
    assert elapsed < 60.0
    print(f"criterion 7: PASS (solver {result.objective:.6f} vs oracle "
          f"{best:.6f}, {elapsed:.2f}s)")


def test_criterion_08_fig1_directional(grid_run):
    config, out, elapsed = grid_run
    cells = read_raw_cells(out / "raw.csv")
    worst_p, min_gap = 0.0, np.inf
    for N in config.N_list:
        for sigma2 in config.sigma2_list:
            page = cells[(N, sigma2, "page")]
            hankel = cells[(N, sigma2, "hankel")]
            assert not np.any(np.isnan(page)) and not np.any(np.isnan(hankel))
            gap = float(np.mean(page) - np.mean(hankel))
            pval = paired_sign_test(page, hankel)
            assert gap > 0.0, f"cell N={N} sigma2={sigma2}: mean gap {gap}"
            assert pval < 0.01, f"cell N={N} sigma2={sigma2}: p={pval}"
            worst_p = max(worst_p, pval)
            min_gap = min(min_gap, gap)
    assert elapsed < 1800.0
    print(f"criterion 8: PASS (min mean gap {min_gap:+.2f}, worst sign-test "
          f"p {worst_p:.2e}, {elapsed:.1f}s)")


def test_criterion_09_fig2_directional():
    t0 = time.perf_counter()
    from ddsim.harness import prepare_cell, run_cell

    model = benchmark_system()
    stats = {}
    for zeta in (0.3, 0.03):
        config = ExperimentConfig(task="damped_sine", damped_sine_zeta=zeta,
                                  N_list=(84,), sigma2_list=(0.001,))
        bundle = make_task(model, config)
        baseline = make_baseline(model, config)
        for kind in (MatrixKind.HANKEL, MatrixKind.PAGE):
            cell = prepare_cell(config, 84, 0.001, kind, model=model,
                                baseline=baseline, task_bundle=bundle)
            fits, failures = run_cell(cell)
            assert failures == 0
            q1, q3 = np.percentile(fits, [25, 75])
            stats[(zeta, kind.value)] = (float(np.median(fits)), float(q3 - q1))
    for zeta in (0.3, 0.03):
        med_h, iqr_h = stats[(zeta, "hankel")]
        med_p, iqr_p = stats[(zeta, "page")]
        assert med_p >= med_h, f"zeta={zeta}: medians {med_p} < {med_h}"
        assert iqr_p <= iqr_h, f"zeta={zeta}: IQRs {iqr_p} > {iqr_h}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 900.0
    print("criterion 9: PASS (" + ", ".join(
        f"zeta={z}: dmed {stats[(z, 'page')][0] - stats[(z, 'hankel')][0]:+.2f} "
        f"diqr {stats[(z, 'page')][1] - stats[(z, 'hankel')][1]:+.2f}"
        for z in (0.3, 0.03)) + f", {elapsed:.1f}s)")


def test_criterion_10_determinism(grid_run, tmp_path):
    config, out, _ = grid_run
    t0 = time.perf_counter()
    rerun = tmp_path / "run2"
    run_experiment(config, out_dir=str(rerun))
    elapsed = time.perf_counter() - t0
    first = (out / "raw.csv").read_bytes()
    second = (rerun / "raw.csv").read_bytes()
    assert first == second
    print(f"criterion 10: PASS (raw CSV byte-identical, "
          f"{len(first)} bytes, {elapsed:.1f}s)")
