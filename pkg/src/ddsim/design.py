"""Input design for data-driven simulation with noisy data.

Baseline FIR model estimation, the linear map from a candidate input
trajectory to the predicted past-output block, assembly of the
saddle-point (KKT) system of the estimator, and the nonlinear program
that picks the input minimizing ||g||^2 under a total-energy budget.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import (
    DegenerateProblemError,
    EstimationError,
    InputContractError,
    SolverError,
)
from .exact import SimulationTask
from .lti import Trajectory
from .sigmat import MatrixKind

KKT_TOL = 1e-6


@dataclass(frozen=True)
class BaselineModel:
    """Truncated impulse-response (FIR) model used to predict outputs."""

    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float).ravel()
        if h.size < 1 or not np.all(np.isfinite(h)):
            raise InputContractError("FIR coefficients must be nonempty and finite")
        object.__setattr__(self, "h", h)
        h.setflags(write=False)

    @property
    def n_h(self) -> int:
        return self.h.size

    def predict(self, u: np.ndarray) -> np.ndarray:
        """Causal convolution with zero initial conditions."""
        u = np.asarray(u, dtype=float).ravel()
        return np.convolve(u, self.h)[: u.size]


@dataclass(frozen=True)
class DesignProblem:
    task: SimulationTask
    baseline: BaselineModel
    sigma2: float
    N: int
    kind: MatrixKind
    E0: float

    def __post_init__(self):
        if self.E0 <= 0:
            raise InputContractError("energy budget E0 must be > 0")
        if self.sigma2 < 0:
            raise InputContractError("sigma2 must be >= 0")
        if self.N < self.task.L:
            raise InputContractError("N must be at least L = L0 + Ls")
        if self.kind is MatrixKind.PAGE and self.N // self.task.L < 1:
            raise InputContractError("Page matrix needs at least one full column")

    @property
    def L(self) -> int:
        return self.task.L

    @property
    def M(self) -> int:
        """Column count of the data matrices (decision dimension of g)."""
        if self.kind is MatrixKind.HANKEL:
            return self.N - self.L + 1
        return self.N // self.L

    @property
    def energy_budget(self) -> float:
        return self.E0 * self.N


@dataclass(frozen=True)
class DesignResult:
    u_d_opt: Trajectory
    g_opt: np.ndarray
    nu_opt: np.ndarray
    objective: float
    energy_used: float
    kkt_residual: float
    solver_report: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "u_d_opt": self.u_d_opt.vector.tolist(),
            "g_opt": self.g_opt.tolist(),
            "nu_opt": self.nu_opt.tolist(),
            "objective": self.objective,
            "energy_used": self.energy_used,
            "kkt_residual": self.kkt_residual,
            "solver_report": self.solver_report,
        }


def estimate_baseline_fir(u_prior: Trajectory, y_prior: Trajectory, n_h: int,
                          lam: float | None = None) -> BaselineModel:
    """Ridge-regularized least-squares FIR fit of y on lagged u.

    Zero initial conditions are assumed. The default regularization
    weight is 1e-6 times the input energy.
    """
    if u_prior.channels != 1 or y_prior.channels != 1:
        raise InputContractError("FIR estimation supports scalar channels only")
    if u_prior.length != y_prior.length:
        raise InputContractError("u_prior and y_prior must share length")
    if n_h < 1:
        raise InputContractError("n_h must be >= 1")
    u = u_prior.vector
    y = y_prior.vector
    energy = float(u @ u)
    if energy == 0.0:
        raise EstimationError("zero input carries no information about the response")
    if lam is None:
        lam = 1e-6 * energy
    N = u.size
    Phi = np.zeros((N, n_h))
    for k in range(n_h):
        Phi[k:, k] = u[: N - k]
    gram = Phi.T @ Phi + lam * np.eye(n_h)
    try:
        h = np.linalg.solve(gram, Phi.T @ y)
    except np.linalg.LinAlgError as exc:
        raise EstimationError("rank-deficient FIR regressor") from exc
    return BaselineModel(h)


class PredictedYpMap:
    """Linear map from a candidate input u_d to the predicted past block.

    The predicted output is the causal convolution of u_d with the
    baseline FIR coefficients; the past block stacks its length-L0
    windows at the column start times of the chosen matrix kind. The
    whole map is linear in u_d and is materialized as a tensor
    G[i, j, k] = d Yp[i, j] / d u_k for use in repeated evaluations.
    """

    def __init__(self, baseline: BaselineModel, L0: int, L: int, N: int,
                 kind: MatrixKind):
        if N < L:
            raise InputContractError("N must be at least L")
        self.L0, self.L, self.N, self.kind = L0, L, N, kind
        stride = 1 if kind is MatrixKind.HANKEL else L
        self.M = N - L + 1 if kind is MatrixKind.HANKEL else N // L
        self.offsets = np.arange(self.M) * stride
        # Lower-triangular convolution matrix: yhat = T_h @ u.
        T_h = np.zeros((N, N))
        for k in range(min(baseline.n_h, N)):
            T_h += np.diag(np.full(N - k, baseline.h[k]), -k)
        self.tensor = np.stack(
            [T_h[off:off + L0] for off in self.offsets], axis=1
        )  # (L0, M, N)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.tensor @ np.asarray(u, dtype=float).ravel()


def predicted_Yp(baseline: BaselineModel, u_d: Trajectory, L0: int, L: int,
                 N: int, kind: MatrixKind) -> np.ndarray:
    if u_d.channels != 1:
        raise InputContractError("input design supports scalar inputs only")
    if u_d.length != N:
        raise InputContractError(f"u_d has length {u_d.length}, expected N={N}")
    return PredictedYpMap(baseline, L0, L, N, kind)(u_d.vector)


def _input_matrix(u: np.ndarray, L: int, N: int, kind: MatrixKind) -> np.ndarray:
    stride = 1 if kind is MatrixKind.HANKEL else L
    M = N - L + 1 if kind is MatrixKind.HANKEL else N // L
    return np.stack([u[j * stride:j * stride + L] for j in range(M)], axis=1)


def assemble_kkt(problem: DesignProblem, u_d: Trajectory, strict: bool = True):
    """Saddle-point blocks (F, U, rhs) of the relaxed estimator at u_d.

    F = L*sigma2*I_M + Yp_hat' Yp_hat with the baseline-predicted past
    block; rhs stacks Yp_hat' y_ini and [u_ini; u_s]. With strict=True an
    instance with more constraint rows than columns (M < L*n_u) raises,
    since the reduced system is then generically unsolvable at a fixed
    u_d; the joint design solver assembles non-strictly.
    """
    L, N, M = problem.L, problem.N, problem.M
    if strict and M < L * problem.task.u_ini.channels:
        raise InputContractError(
            f"infeasible dimensions: {L} constraints but only {M} columns"
        )
    Yp_hat = predicted_Yp(problem.baseline, u_d, problem.task.L0, L, N, problem.kind)
    F = L * problem.sigma2 * np.eye(M) + Yp_hat.T @ Yp_hat
    U = _input_matrix(u_d.vector, L, N, problem.kind)
    rhs = np.concatenate([Yp_hat.T @ problem.task.y_ini.vector, problem.task.ubar])
    return F, U, rhs


def _solve_kkt(F: np.ndarray, U: np.ndarray, rhs: np.ndarray,
               tol: float = KKT_TOL):
    """Solve the saddle system, tolerating consistent rank deficiency."""
    M, L = F.shape[0], U.shape[0]
    K = np.block([[F, U.T], [U, np.zeros((L, L))]])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    residual = float(np.linalg.norm(K @ sol - rhs))
    if residual > tol * (1.0 + np.linalg.norm(rhs)):
        rank = np.linalg.matrix_rank(K)
        raise DegenerateProblemError(
            f"singular KKT system (rank {rank} of {K.shape[0]}, "
            f"residual {residual:.3e})"
        )
    return sol[:M], sol[M:], residual


def design_objective(problem: DesignProblem, u_d: Trajectory,
                     tol: float = KKT_TOL) -> float:
    """||g||^2 with g from the exact KKT solve at a fixed u_d."""
    F, U, rhs = assemble_kkt(problem, u_d, strict=False)
    g, _, _ = _solve_kkt(F, U, rhs, tol=tol)
    return float(g @ g)


def _embedding_start(problem: DesignProblem, rng: np.random.Generator) -> np.ndarray:
    """Start with the task input embedded as the first window.

    Guarantees that [u_ini; u_s] lies in the range of the input matrix at
    the starting point, which gives the local solver a consistent
    constraint set even for short Page matrices.
    """
    N, L = problem.N, problem.L
    u = 0.05 * rng.standard_normal(N)
    u[:L] = problem.task.ubar
    budget = problem.energy_budget
    energy = float(u @ u)
    if energy > budget:
        u *= np.sqrt(budget / energy) * (1 - 1e-12)
    return u


def _tiled_start(problem: DesignProblem) -> np.ndarray:
    """Repeat the task input across all stride-L windows at full energy.

    Every non-overlapping window is proportional to [u_ini; u_s], so the
    input range condition holds with g supported on those windows; the
    whole energy budget is spent.
    """
    N, L = problem.N, problem.L
    ubar = problem.task.ubar
    reps = N // L
    u = np.zeros(N)
    for j in range(reps):
        u[j * L:(j + 1) * L] = ubar
    norm2 = float(u @ u)
    if norm2 == 0.0:
        return u
    return u * np.sqrt(problem.energy_budget / norm2) * (1 - 1e-12)


def _restore_page_feasibility(u: np.ndarray, problem: DesignProblem):
    """Exactly re-satisfy U g = ubar by nudging non-overlapping windows.

    With w_j the Page windows and g the least-squares combination, adding
    g_j * r / ||g||^2 to each window (r the constraint residual) makes
    the combination exact. Returns the corrected input scaled back into
    the energy ball, or None when g is numerically zero.
    """
    N, L = problem.N, problem.L
    ubar = problem.task.ubar
    U = _input_matrix(u, L, N, problem.kind)
    g, *_ = np.linalg.lstsq(U, ubar, rcond=None)
    gnorm2 = float(g @ g)
    if gnorm2 < 1e-300:
        return None
    r = ubar - U @ g
    u = u.copy()
    for j in range(problem.M):
        u[j * L:(j + 1) * L] += g[j] * r / gnorm2
    energy = float(u @ u)
    budget = problem.energy_budget
    if energy > budget:
        u *= np.sqrt(budget / energy) * (1 - 1e-12)
    return u


def solve_design(problem: DesignProblem, init_u: Trajectory | None = None,
                 multistart: int = 5, seed: int = 0, maxiter: int = 300,
                 tol: float = KKT_TOL) -> DesignResult:
    """Solve the input-design nonlinear program

        min_{u_d, g, nu}  ||g||^2
        s.t.  [F(u_d) U(u_d)'; U(u_d) 0][g; nu] = [Yp_hat(u_d)' y_ini; ubar]
              sum(u_d^2) <= E0*N

    jointly over (u_d, g, nu) with SLSQP. Multistart: one run from the
    task-embedding start, the rest from i.i.d. Gaussian draws scaled to
    the energy boundary (plus init_u when given); the best feasible
    iterate wins, ties broken by start index.
    """
    if multistart < 1:
        raise InputContractError("multistart must be >= 1")
    N, L, M = problem.N, problem.L, problem.M
    task = problem.task
    budget = problem.energy_budget
    pmap = PredictedYpMap(problem.baseline, task.L0, L, N, problem.kind)
    y_ini = task.y_ini.vector
    ubar = task.ubar
    Ls2 = L * problem.sigma2

    def split(x):
        return x[:N], x[N:N + M], x[N + M:]

    def objective(x):
        g = x[N:N + M]
        return float(g @ g)

    def objective_grad(x):
        grad = np.zeros_like(x)
        grad[N:N + M] = 2.0 * x[N:N + M]
        return grad

    def constraints_eq(x):
        u, g, nu = split(x)
        Yp_hat = pmap(u)
        U = _input_matrix(u, L, N, problem.kind)
        stationarity = Ls2 * g + Yp_hat.T @ (Yp_hat @ g - y_ini) + U.T @ nu
        primal = U @ g - ubar
        return np.concatenate([stationarity, primal])

    G = pmap.tensor  # (L0, M, N)
    offsets = pmap.offsets

    def constraints_eq_jac(x):
        u, g, nu = split(x)
        Yp_hat = pmap(u)
        r = Yp_hat @ g - y_ini
        jac = np.zeros((M + L, N + M + L))
        # d stationarity / du: product rule through Yp_hat plus the U' nu term.
        jac[:M, :N] = (np.einsum("imk,i->mk", G, r)
                       + np.einsum("im,ik->mk", Yp_hat,
                                   np.einsum("ijk,j->ik", G, g)))
        for j, off in enumerate(offsets):
            jac[j, off:off + L] += nu  # d(U' nu)_j / du over window j
        jac[:M, N:N + M] = Ls2 * np.eye(M) + Yp_hat.T @ Yp_hat
        for j, off in enumerate(offsets):
            jac[M:, N + j] = u[off:off + L]  # d primal / dg = U columns
            jac[M + np.arange(L), off + np.arange(L)] += g[j]  # d primal / du
        jac[:M, N + M:] = _input_matrix(u, L, N, problem.kind).T
        return jac

    def constraint_energy(x):
        u = x[:N]
        return budget - float(u @ u)

    def constraint_energy_jac(x):
        jac = np.zeros_like(x)
        jac[:N] = -2.0 * x[:N]
        return jac

    rng = np.random.default_rng(seed)
    starts = [_tiled_start(problem), _embedding_start(problem, rng)]
    if init_u is not None:
        if init_u.length != N or init_u.channels != 1:
            raise InputContractError("init_u must be a scalar trajectory of length N")
        u0 = init_u.vector.copy()
        energy = float(u0 @ u0)
        if energy > budget:
            u0 *= np.sqrt(budget / energy) * (1 - 1e-12)
        starts.append(u0)
    while len(starts) < max(multistart, 2):
        draw = rng.standard_normal(N)
        starts.append(draw * np.sqrt(budget / float(draw @ draw)) * (1 - 1e-12))

    def refine(u):
        """Exact (g, nu) at fixed u; returns (u, g, nu, violation, energy)."""
        energy = float(u @ u)
        if energy > budget:
            u = u * np.sqrt(budget / energy) * (1 - 1e-12)
        if problem.kind is MatrixKind.PAGE:
            restored = _restore_page_feasibility(u, problem)
            if restored is not None:
                u = restored
        try:
            F, U, rhs = assemble_kkt(problem, Trajectory.from_values(u),
                                     strict=False)
            g, nu, _ = _solve_kkt(F, U, rhs, tol=np.inf)
        except DegenerateProblemError:
            return None
        viol = float(np.linalg.norm(
            constraints_eq(np.concatenate([u, g, nu]))))
        return u, g, nu, viol, float(u @ u)

    best = None
    report = {"starts": []}
    for idx, u0 in enumerate(starts):
        refined0 = refine(u0)
        g0, nu0 = ((refined0[1], refined0[2]) if refined0 is not None
                   else (np.zeros(M), np.zeros(L)))
        x0 = np.concatenate([u0, g0, nu0])
        res = minimize(
            objective, x0, jac=objective_grad, method="SLSQP",
            constraints=[
                {"type": "eq", "fun": constraints_eq, "jac": constraints_eq_jac},
                {"type": "ineq", "fun": constraint_energy,
                 "jac": constraint_energy_jac},
            ],
            options={"maxiter": maxiter, "ftol": 1e-12},
        )
        entry = {"index": idx, "converged": bool(res.success),
                 "iterations": int(res.nit)}
        refined = refine(res.x[:N])
        if refined is None and refined0 is not None:
            refined = refined0  # solver left feasibility; keep the start
        if refined is None:
            entry.update({"feasible": False, "objective": float("nan"),
                          "constraint_violation": float("inf")})
            report["starts"].append(entry)
            continue
        u, g, nu, viol, energy = refined
        obj = float(g @ g)
        feasible = (viol <= tol * (1.0 + np.linalg.norm(ubar))
                    and energy <= budget + 1e-9)
        entry.update({"feasible": feasible, "objective": obj,
                      "constraint_violation": viol})
        report["starts"].append(entry)
        if feasible and (best is None or obj < best["obj"]):
            best = {"u": u, "g": g, "nu": nu, "obj": obj,
                    "converged": bool(res.success), "iterations": int(res.nit)}
    if best is None:
        viols = [r["constraint_violation"] for r in report["starts"]]
        raise SolverError(
            "input design failed to reach feasibility "
            f"(best constraint violation {min(viols):.3e})"
        )

    u, g, nu = best["u"], best["g"], best["nu"]
    F, U, rhs = assemble_kkt(problem, Trajectory.from_values(u), strict=False)
    K = np.block([[F, U.T], [U, np.zeros((U.shape[0], U.shape[0]))]])
    kkt_residual = float(np.linalg.norm(K @ np.concatenate([g, nu]) - rhs))
    report.update({"converged": best["converged"], "iterations": best["iterations"]})
    return DesignResult(
        u_d_opt=Trajectory.from_values(u), g_opt=g, nu_opt=nu,
        objective=best["obj"], energy_used=float(u @ u),
        kkt_residual=kkt_residual, solver_report=report,
    )
