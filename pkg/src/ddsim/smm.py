"""Signal-matrix-model (SMM) maximum-likelihood estimation for noisy data.

Gaussian output noise injection, the covariance of Y g under that noise
(banded Toeplitz for Hankel, scalar diagonal for Page), the ML objective,
and the relaxed quadratic solve whose stationarity conditions are the
saddle-point system used by the input-design program.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, null_space, toeplitz

from .errors import (
    DegenerateProblemError,
    EvaluationError,
    InputContractError,
)
from .exact import SimulationTask
from .lti import Trajectory
from .sigmat import MatrixKind, PartitionedData


@dataclass(frozen=True)
class NoiseModel:
    """I.i.d. zero-mean Gaussian output noise with variance sigma2."""

    sigma2: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma2 < 0:
            raise InputContractError("noise variance must be nonnegative")

    def rng(self, stream: int = 0) -> np.random.Generator:
        """Independent generator for one realization index.

        Streams are split from (seed, stream) so concurrent trials never
        share state and results do not depend on execution order.
        """
        return np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(stream,))
        )


@dataclass(frozen=True)
class SmmSolution:
    g: np.ndarray
    y_s_hat: Trajectory
    sigma_y: np.ndarray
    sigma_yf: np.ndarray
    objective: float
    kkt_residual: float
    nu: np.ndarray


def noise_inject(y: Trajectory, nm: NoiseModel, stream: int = 0) -> Trajectory:
    """Add independent N(0, sigma2) noise to a scalar output trajectory."""
    if y.channels != 1:
        raise InputContractError("noise model supports scalar outputs only (n_y=1)")
    if nm.sigma2 == 0.0:
        return y
    w = nm.rng(stream).standard_normal(y.length) * np.sqrt(nm.sigma2)
    return Trajectory((y.vector + w).reshape(-1, 1))


def covariance(g: np.ndarray, sigma2: float, L: int, kind: MatrixKind) -> np.ndarray:
    """Covariance of the noise in Y g.

    Hankel columns share samples, giving a banded Toeplitz matrix with
    band entries sigma2 * sum_k g_k g_{k+d}; Page columns are disjoint,
    collapsing the covariance to sigma2 * ||g||^2 * I_L.
    """
    g = np.asarray(g, dtype=float).ravel()
    if g.size == 0:
        raise InputContractError("g must be nonempty")
    if L < 1:
        raise InputContractError("L must be >= 1")
    if kind is MatrixKind.PAGE:
        return sigma2 * float(g @ g) * np.eye(L)
    band = np.zeros(L)
    for d in range(min(L, g.size)):
        band[d] = sigma2 * float(g[: g.size - d] @ g[d:])
    return toeplitz(band)


def _chol_with_jitter(sigma_y: np.ndarray):
    try:
        return cho_factor(sigma_y, lower=True)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-12 * (np.trace(sigma_y) / sigma_y.shape[0] + 1.0)
    try:
        return cho_factor(sigma_y + jitter * np.eye(sigma_y.shape[0]), lower=True)
    except np.linalg.LinAlgError as exc:
        raise EvaluationError(
            "covariance not positive definite after regularization"
        ) from exc


def smm_objective(g: np.ndarray, part: PartitionedData, y_ini: Trajectory,
                  sigma2: float, check_constraints: bool = False,
                  task: SimulationTask | None = None,
                  constraint_tol: float = 1e-6) -> float:
    """ML objective logdet(Sigma_y(g)) + r' Sigma_y(g)^-1 r, r = [Yp g - y_ini; 0]."""
    g = np.asarray(g, dtype=float).ravel()
    if check_constraints:
        if task is None:
            raise InputContractError("constraint check requires the task")
        viol = np.linalg.norm(np.vstack([part.Up, part.Uf]) @ g - task.ubar)
        if viol > constraint_tol * (1.0 + np.linalg.norm(task.ubar)):
            raise InputContractError(
                f"g violates the input equality constraints (||Ug-ubar||={viol:.3e})"
            )
    sigma_y = covariance(g, sigma2, part.L, part.kind)
    factor = _chol_with_jitter(sigma_y)
    r = np.concatenate([part.Yp @ g - y_ini.vector, np.zeros(part.Ls * part.n_y)])
    logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    return logdet + float(r @ cho_solve(factor, r))


def solve_smm_relaxed(part: PartitionedData, task: SimulationTask, sigma2: float,
                      strict: bool = True,
                      constraint_tol: float = 1e-8) -> SmmSolution:
    """Relaxed SMM estimate: the equality-constrained quadratic program

        min_g  L*sigma2*||g||^2 + ||Yp g - y_ini||^2
        s.t.   Up g = u_ini,  Uf g = u_s.

    Solved by a null-space method, which also handles consistent systems
    with more constraint rows than columns (short Page matrices). With
    strict=True an inconsistent constraint set raises; with strict=False
    the constraints are satisfied in the least-squares sense (used for
    baseline comparisons with unexcited inputs).
    """
    U = np.vstack([part.Up, part.Uf])
    ubar = task.ubar
    M = part.cols
    L = part.L
    g_p, *_ = np.linalg.lstsq(U, ubar, rcond=None)
    cons_residual = float(np.linalg.norm(U @ g_p - ubar))
    if strict and cons_residual > constraint_tol * (1.0 + np.linalg.norm(ubar)):
        rank = np.linalg.matrix_rank(U)
        raise DegenerateProblemError(
            f"input constraints inconsistent (residual {cons_residual:.3e}, "
            f"rank {rank} of {min(U.shape)})"
        )
    Z = null_space(U)
    F = L * sigma2 * np.eye(M) + part.Yp.T @ part.Yp
    b = part.Yp.T @ task.y_ini.vector
    if Z.shape[1] > 0:
        H = Z.T @ F @ Z
        rhs = Z.T @ (b - F @ g_p)
        try:
            t = np.linalg.solve(H, rhs)
        except np.linalg.LinAlgError:
            t, *_ = np.linalg.lstsq(H, rhs, rcond=None)
        g = g_p + Z @ t
    else:
        g = g_p
    nu, *_ = np.linalg.lstsq(U.T, b - F @ g, rcond=None)
    kkt_residual = float(np.hypot(
        np.linalg.norm(F @ g + U.T @ nu - b),
        np.linalg.norm(U @ g - ubar),
    ))
    sigma_y = covariance(g, sigma2, L, part.kind)
    y_hat = Trajectory.from_values(part.Yf @ g, channels=part.n_y)
    obj = L * sigma2 * float(g @ g) + float(
        np.sum((part.Yp @ g - task.y_ini.vector) ** 2)
    )
    ls = part.Ls * part.n_y
    return SmmSolution(
        g=g, y_s_hat=y_hat, sigma_y=sigma_y, sigma_yf=sigma_y[-ls:, -ls:].copy(),
        objective=obj, kkt_residual=kkt_residual, nu=nu,
    )
