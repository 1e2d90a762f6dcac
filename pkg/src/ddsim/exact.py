"""Exact (noise-free) data-driven simulation.

Solves the stacked linear system [Up; Yp; Uf] g = [u_ini; y_ini; u_s] and
predicts the simulated output as Yf g. Also exposes the data-checkable
range condition and the state-based relaxed condition (diagnostic only,
it needs the true state trajectory).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputContractError, NoSolutionError
from .lti import StateSpaceModel, Trajectory, estimate_x0
from .sigmat import MatrixKind, PartitionedData, build, partition

DEFAULT_CONSISTENCY_TOL = 1e-6


@dataclass(frozen=True)
class SimulationTask:
    """Initial window (u_ini, y_ini) plus the input to be simulated (u_s)."""

    u_ini: Trajectory
    y_ini: Trajectory
    u_s: Trajectory

    def __post_init__(self):
        if self.u_ini.length != self.y_ini.length:
            raise InputContractError("u_ini and y_ini must share length")
        if self.u_ini.length < 1 or self.u_s.length < 1:
            raise InputContractError("L0 and Ls must be >= 1")
        if self.u_s.channels != self.u_ini.channels:
            raise InputContractError("u_s channel count must match u_ini")

    @property
    def L0(self) -> int:
        return self.u_ini.length

    @property
    def Ls(self) -> int:
        return self.u_s.length

    @property
    def L(self) -> int:
        return self.L0 + self.Ls

    @property
    def ubar(self) -> np.ndarray:
        """Stacked input constraint right-hand side [u_ini; u_s]."""
        return np.concatenate([self.u_ini.vector, self.u_s.vector])


@dataclass(frozen=True)
class DdSolution:
    g: np.ndarray
    y_s_hat: Trajectory
    residual: float


def _stacked_system(part: PartitionedData, task: SimulationTask):
    if part.L0 != task.L0 or part.Ls != task.Ls:
        raise InputContractError("partition indices do not match the task horizons")
    if part.n_u != task.u_ini.channels or part.n_y != task.y_ini.channels:
        raise InputContractError("partition channel counts do not match the task")
    A = np.vstack([part.Up, part.Yp, part.Uf])
    rhs = np.concatenate([task.u_ini.vector, task.y_ini.vector, task.u_s.vector])
    return A, rhs


def solve_g(part: PartitionedData, task: SimulationTask,
            tol: float = DEFAULT_CONSISTENCY_TOL) -> DdSolution:
    """Minimum-norm g solving the stacked system, with consistency check."""
    A, rhs = _stacked_system(part, task)
    g, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    residual = float(np.linalg.norm(A @ g - rhs))
    if residual > tol * (1.0 + np.linalg.norm(rhs)):
        raise NoSolutionError(
            f"stacked data system is inconsistent (residual {residual:.3e}); "
            "excitation or range conditions are not met",
            residual=residual,
        )
    y_hat = Trajectory.from_values(part.Yf @ g, channels=part.n_y)
    return DdSolution(g=g, y_s_hat=y_hat, residual=residual)


def check_range_condition(part: PartitionedData, task: SimulationTask,
                          tol: float = DEFAULT_CONSISTENCY_TOL) -> bool:
    """Is [u_ini; y_ini; u_s] in the column span of [Up; Yp; Uf]?"""
    A, rhs = _stacked_system(part, task)
    g, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return float(np.linalg.norm(A @ g - rhs)) <= tol * (1.0 + np.linalg.norm(rhs))


def check_relaxed_conditions(model: StateSpaceModel, u_d: Trajectory,
                             y_d: Trajectory, x_d: Trajectory,
                             task: SimulationTask, kind: MatrixKind,
                             tol: float = DEFAULT_CONSISTENCY_TOL) -> bool:
    """State-based excitation condition (diagnostic; needs the true states).

    Checks [u_ini; u_s; x_hat] against the span of [Up; Uf; Xp], where Xp
    collects the data states at the column start times (stride 1 for
    Hankel, stride L for Page) and x_hat is reconstructed from the initial
    window.
    """
    L = task.L
    U = build(u_d, L, kind)
    su = U.block_size
    Up, Uf = U.data[:task.L0 * su], U.data[task.L0 * su:]
    stride = 1 if kind is MatrixKind.HANKEL else L
    starts = [j * stride for j in range(U.cols)]
    Xp = np.stack([x_d.samples[s] for s in starts], axis=1)
    x_hat = estimate_x0(model, task.u_ini, task.y_ini)
    A = np.vstack([Up, Uf, Xp])
    rhs = np.concatenate([task.u_ini.vector, task.u_s.vector, x_hat])
    g, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return float(np.linalg.norm(A @ g - rhs)) <= tol * (1.0 + np.linalg.norm(rhs))


def simulate_dd(u_d: Trajectory, y_d: Trajectory, task: SimulationTask,
                kind: MatrixKind, tol: float = DEFAULT_CONSISTENCY_TOL) -> DdSolution:
    """Build matrices of the requested kind, partition, and solve for g."""
    L = task.L
    part = partition(build(u_d, L, kind), build(y_d, L, kind), task.L0, task.Ls)
    return solve_g(part, task, tol=tol)
