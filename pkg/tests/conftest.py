import numpy as np
import pytest

from ddsim import StateSpaceModel, Trajectory, benchmark_system, simulate


@pytest.fixture(scope="session")
def benchmark():
    return benchmark_system()


def random_minimal_siso(rng, n_x, radius=0.9):
    """Random stable minimal SISO model; retries until minimality holds."""
    for _ in range(50):
        A = rng.standard_normal((n_x, n_x))
        ev = np.abs(np.linalg.eigvals(A)).max()
        if ev > 0:
            A *= radius / ev
        B = rng.standard_normal((n_x, 1))
        C = rng.standard_normal((1, n_x))
        D = rng.standard_normal((1, 1))
        try:
            return StateSpaceModel(A, B, C, D, check_minimal=True)
        except Exception:
            continue
    raise RuntimeError("could not draw a minimal model")


def model_trajectory(model, rng, N, x0=None):
    """Simulate the model under an i.i.d. input; returns (u, y, x)."""
    if x0 is None:
        x0 = rng.standard_normal(model.n_x)
    u = Trajectory(rng.standard_normal((N, model.n_u)))
    y, x = simulate(model, x0, u)
    return u, y, x


def random_task(model, rng, L0, Ls):
    """Consistent random task: initial window simulated, u_s random."""
    from ddsim import SimulationTask

    x_hat = rng.standard_normal(model.n_x)
    u_ini = Trajectory(rng.standard_normal((L0, model.n_u)))
    y_ini, x_traj = simulate(model, x_hat, u_ini)
    u_s = Trajectory(rng.standard_normal((Ls, model.n_u)))
    y_s, _ = simulate(model, x_traj.samples[-1], u_s)
    return SimulationTask(u_ini=u_ini, y_ini=y_ini, u_s=u_s), y_s
