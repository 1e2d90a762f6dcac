"""Monte-Carlo experiment runner for the Hankel vs Page comparisons.

Builds the benchmark task, estimates the baseline FIR model, designs (or
draws) the input data trajectory, starts the data experiment from a
state compatible with the task so the exact-reconstruction conditions
hold on clean data, and sweeps noise realizations through the SMM
estimator, reporting the normalized-RMS fit per trial.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .design import (
    BaselineModel,
    DesignProblem,
    estimate_baseline_fir,
    solve_design,
)
from .errors import InputContractError, NoSolutionError, UndefinedFitError
from .exact import SimulationTask
from .lti import StateSpaceModel, Trajectory, benchmark_system, estimate_x0, simulate, zeros_trajectory
from .sigmat import MatrixKind, build, partition
from .smm import NoiseModel, noise_inject, solve_smm_relaxed


def fit_metric(y_true: Trajectory, y_hat: Trajectory) -> float:
    """Normalized-RMS fit W = 100*(1 - ||y - yhat|| / ||y - mean(y)||)."""
    if y_true.length != y_hat.length or y_true.channels != y_hat.channels:
        raise InputContractError("trajectories must share shape")
    y = y_true.vector
    yh = y_hat.vector
    denom = np.linalg.norm(y - y.mean())
    if denom == 0.0:
        raise UndefinedFitError("fit undefined for a constant reference trajectory")
    return float(100.0 * (1.0 - np.linalg.norm(y - yh) / denom))


@dataclass(frozen=True)
class ExperimentConfig:
    L0: int = 4
    Ls: int = 10
    E0: float = 0.1
    sigma2_list: tuple = (0.001, 0.01)
    N_list: tuple = (28, 42, 56, 70, 84)
    kinds: tuple = ("hankel", "page")
    realizations: int = 200
    seed: int = 1
    task: str = "impulse"  # impulse | damped_sine | custom:<path>
    damped_sine_omega: float = 0.5
    damped_sine_zeta: float = 0.3
    design: bool = True
    multistart: int = 3
    baseline_length: int = 100
    baseline_snr: float = 10.0
    baseline_n_h: int | None = None  # default 4*Ls
    x_ini_scale: float = 3.0

    def __post_init__(self):
        if self.realizations < 1:
            raise InputContractError("realizations must be >= 1")
        L = self.L0 + self.Ls
        if any(N < L for N in self.N_list):
            raise InputContractError("every N must be at least L = L0 + Ls")

    @property
    def L(self) -> int:
        return self.L0 + self.Ls

    def to_json(self) -> str:
        doc = {k: (list(v) if isinstance(v, tuple) else v)
               for k, v in self.__dict__.items()}
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        doc = json.loads(text)
        for key in ("sigma2_list", "N_list", "kinds"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)


@dataclass(frozen=True)
class FitReport:
    N: int
    sigma2: float
    kind: str
    fits: np.ndarray
    failures: int = 0

    @property
    def mean(self) -> float:
        return float(np.mean(self.fits))

    @property
    def median(self) -> float:
        return float(np.median(self.fits))

    @property
    def quartiles(self) -> tuple:
        return (float(np.percentile(self.fits, 25)),
                float(np.percentile(self.fits, 75)))

    @property
    def iqr(self) -> float:
        q1, q3 = self.quartiles
        return q3 - q1

    @property
    def min(self) -> float:
        return float(np.min(self.fits))

    @property
    def max(self) -> float:
        return float(np.max(self.fits))


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def make_simulation_input(config: ExperimentConfig) -> Trajectory:
    """The input to be simulated (u_s) per the configured task descriptor."""
    Ls = config.Ls
    if config.task == "impulse":
        u = np.zeros(Ls)
        u[0] = 1.0
    elif config.task == "damped_sine":
        t = np.arange(Ls, dtype=float)
        u = np.sin(config.damped_sine_omega * t) * np.exp(-config.damped_sine_zeta * t)
    elif config.task.startswith("custom:"):
        with open(config.task.split(":", 1)[1], encoding="utf-8") as fh:
            u = np.asarray(json.load(fh)["u_s"], dtype=float)
        if u.size != Ls:
            raise InputContractError(f"custom u_s has length {u.size}, expected {Ls}")
    else:
        raise InputContractError(f"unknown task descriptor {config.task!r}")
    return Trajectory.from_values(u)


def make_task(model: StateSpaceModel, config: ExperimentConfig):
    """Benchmark task: fixed random initial state, zero u_ini, configured u_s.

    Returns (task, y_s_true, x_hat) with the oracle simulation output.
    """
    rng = _rng(config.seed, 1)
    x_hat = config.x_ini_scale * rng.standard_normal(model.n_x)
    u_ini = zeros_trajectory(config.L0, model.n_u)
    y_ini, x_ini_traj = simulate(model, x_hat, u_ini)
    u_s = make_simulation_input(config)
    y_s_true, _ = simulate(model, x_ini_traj.samples[-1], u_s)
    return SimulationTask(u_ini=u_ini, y_ini=y_ini, u_s=u_s), y_s_true, x_hat


def make_baseline(model: StateSpaceModel, config: ExperimentConfig) -> BaselineModel:
    """FIR baseline from a prior i.i.d.-input experiment at the configured SNR."""
    rng = _rng(config.seed, 2)
    u_prior = Trajectory.from_values(rng.standard_normal(config.baseline_length))
    y_clean, _ = simulate(model, np.zeros(model.n_x), u_prior)
    noise_var = float(np.var(y_clean.vector)) / config.baseline_snr
    y_noisy = Trajectory.from_values(
        y_clean.vector + np.sqrt(noise_var) * rng.standard_normal(y_clean.length)
    )
    n_h = config.baseline_n_h if config.baseline_n_h is not None else 4 * config.Ls
    return estimate_baseline_fir(u_prior, y_noisy, n_h)


def compatible_initial_state(model: StateSpaceModel, u_d: Trajectory,
                             task: SimulationTask, kind: MatrixKind,
                             tol: float = 1e-6) -> np.ndarray:
    """Data-experiment initial state making the task reachable from the data.

    Picks the minimum-norm g0 solving the input range condition and then
    the x0 for which the data states satisfy Xp g0 = x_hat, so the full
    stacked system is consistent on clean data.
    """
    L = task.L
    N = u_d.length
    U = build(u_d, L, kind)
    su = U.block_size
    Umat = np.vstack([U.data[:task.L0 * su], U.data[task.L0 * su:]])
    ubar = task.ubar
    g0, *_ = np.linalg.lstsq(Umat, ubar, rcond=None)
    residual = float(np.linalg.norm(Umat @ g0 - ubar))
    if residual > tol * (1.0 + np.linalg.norm(ubar)):
        raise NoSolutionError(
            f"input range condition fails for this u_d (residual {residual:.3e})",
            residual=residual,
        )
    x_hat = estimate_x0(model, task.u_ini, task.y_ini)
    stride = 1 if kind is MatrixKind.HANKEL else L
    offsets = [j * stride for j in range(U.cols)]
    weights = dict(zip(offsets, g0))
    _, x_zero = simulate(model, np.zeros(model.n_x), u_d)
    Msum = np.zeros((model.n_x, model.n_x))
    drift = np.zeros(model.n_x)
    P = np.eye(model.n_x)
    for t in range(max(offsets) + 1):
        if t in weights:
            Msum += weights[t] * P
            drift += weights[t] * x_zero.samples[t]
        P = model.A @ P
    rhs = x_hat - drift
    try:
        return np.linalg.solve(Msum, rhs)
    except np.linalg.LinAlgError:
        x0, *_ = np.linalg.lstsq(Msum, rhs, rcond=None)
        return x0


def make_data_input(config: ExperimentConfig, model: StateSpaceModel,
                    baseline: BaselineModel, task: SimulationTask,
                    N: int, sigma2: float, kind: MatrixKind) -> Trajectory:
    """Designed (or energy-matched random) input data trajectory for one cell."""
    if config.design:
        problem = DesignProblem(task=task, baseline=baseline, sigma2=sigma2,
                                N=N, kind=kind, E0=config.E0)
        result = solve_design(problem, multistart=config.multistart,
                              seed=config.seed)
        return result.u_d_opt
    rng = _rng(config.seed, 3, N, int(sigma2 * 1e9),
               0 if kind is MatrixKind.HANKEL else 1)
    u = rng.standard_normal(N)
    u *= np.sqrt(config.E0 * N / float(u @ u))
    return Trajectory.from_values(u)


@dataclass(frozen=True)
class CellSetup:
    """Everything a trial needs, precomputed once per grid cell."""

    config: ExperimentConfig
    task: SimulationTask
    y_s_true: Trajectory
    u_d: Trajectory
    y_d_clean: Trajectory
    N: int
    sigma2: float
    kind: MatrixKind
    noise: NoiseModel


def prepare_cell(config: ExperimentConfig, N: int, sigma2: float,
                 kind: MatrixKind,
                 model: StateSpaceModel | None = None,
                 baseline: BaselineModel | None = None,
                 task_bundle=None,
                 u_d: Trajectory | None = None) -> CellSetup:
    model = model if model is not None else benchmark_system()
    baseline = baseline if baseline is not None else make_baseline(model, config)
    task, y_s_true, _ = (task_bundle if task_bundle is not None
                         else make_task(model, config))
    if u_d is None:
        u_d = make_data_input(config, model, baseline, task, N, sigma2, kind)
    x0 = compatible_initial_state(model, u_d, task, kind)
    y_d_clean, _ = simulate(model, x0, u_d)
    noise = NoiseModel(sigma2=sigma2, seed=config.seed)
    return CellSetup(config=config, task=task, y_s_true=y_s_true, u_d=u_d,
                     y_d_clean=y_d_clean, N=N, sigma2=sigma2, kind=kind,
                     noise=noise)


def run_trial(cell: CellSetup, trial: int) -> float:
    """One noise realization through the SMM pipeline; returns the fit W."""
    y_noisy = noise_inject(cell.y_d_clean, cell.noise, stream=trial)
    part = partition(build(cell.u_d, cell.task.L, cell.kind),
                     build(y_noisy, cell.task.L, cell.kind),
                     cell.task.L0, cell.task.Ls)
    sol = solve_smm_relaxed(part, cell.task, cell.sigma2, strict=False)
    return fit_metric(cell.y_s_true, sol.y_s_hat)


def run_cell(cell: CellSetup):
    """All realizations of one cell; failures recorded, not dropped."""
    fits = []
    failures = 0
    for trial in range(cell.config.realizations):
        try:
            fits.append(run_trial(cell, trial))
        except Exception:
            failures += 1
            fits.append(float("nan"))
    if failures > cell.config.realizations / 2:
        raise NoSolutionError(
            f"cell (N={cell.N}, sigma2={cell.sigma2}, {cell.kind.value}) "
            f"failed {failures} of {cell.config.realizations} trials"
        )
    return np.asarray(fits), failures


def run_experiment(config: ExperimentConfig, out_dir: str | None = None):
    """Full grid over (N, sigma2, kind); returns FitReports per cell.

    When out_dir is given, writes raw per-trial fits (raw.csv), the cell
    statistics (report.csv), and the resolved config (config.json).
    """
    model = benchmark_system()
    baseline = make_baseline(model, config)
    task_bundle = make_task(model, config)
    reports = []
    raw_rows = []
    for N in config.N_list:
        for sigma2 in config.sigma2_list:
            for kind_name in config.kinds:
                kind = MatrixKind(kind_name)
                cell = prepare_cell(config, N, sigma2, kind, model=model,
                                    baseline=baseline, task_bundle=task_bundle)
                fits, failures = run_cell(cell)
                valid = fits[~np.isnan(fits)]
                reports.append(FitReport(N=N, sigma2=sigma2, kind=kind_name,
                                         fits=valid, failures=failures))
                for trial, w in enumerate(fits):
                    raw_rows.append((N, sigma2, kind_name, trial, w))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "raw.csv"), "w", encoding="utf-8") as fh:
            fh.write("N,sigma2,kind,trial,W\n")
            for N, sigma2, kind_name, trial, w in raw_rows:
                fh.write(f"{N},{sigma2!r},{kind_name},{trial},{float(w)!r}\n")
        with open(os.path.join(out_dir, "report.csv"), "w", encoding="utf-8") as fh:
            fh.write("N,sigma2,kind,mean,median,q1,q3,min,max,failures\n")
            for rep in reports:
                q1, q3 = rep.quartiles
                fh.write(
                    f"{rep.N},{rep.sigma2!r},{rep.kind},{rep.mean!r},"
                    f"{rep.median!r},{q1!r},{q3!r},{rep.min!r},{rep.max!r},"
                    f"{rep.failures}\n"
                )
        with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
            fh.write(config.to_json())
    return reports


def paired_sign_test(w_a, w_b) -> float:
    """Two-sided sign-test p-value for paired fit samples (ties dropped)."""
    from scipy.stats import binomtest

    w_a = np.asarray(w_a, dtype=float)
    w_b = np.asarray(w_b, dtype=float)
    if w_a.shape != w_b.shape:
        raise InputContractError("paired samples must share length")
    diff = w_a - w_b
    diff = diff[diff != 0]
    if diff.size == 0:
        return 1.0
    wins = int(np.sum(diff > 0))
    return float(binomtest(wins, diff.size, 0.5, alternative="two-sided").pvalue)
