"""Ground-truth LTI machinery.

State-space simulation oracle, structural matrices (block Toeplitz of
impulse-response coefficients, extended observability, reversed extended
controllability), lag computation, initial-state reconstruction from a
short input-output window, and the fourth-order benchmark system used in
the numerical experiments.

All types are immutable after construction and all operations are pure.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InconsistentTrajectoryError,
    InputContractError,
    UnobservableModelError,
)


def numerical_rank(mat: np.ndarray, rtol: float | None = None) -> int:
    """Numerical rank via SVD with the standard max(dim)*eps*sigma_max cutoff.

    `rtol`, when given, overrides the default relative threshold.
    """
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if s[0] == 0.0:
        return 0
    if rtol is None:
        rtol = max(mat.shape) * np.finfo(float).eps
    return int(np.sum(s > rtol * s[0]))


def pinv_with_rank(mat: np.ndarray, rtol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse using the same rank cutoff as numerical_rank."""
    if rtol is None:
        rtol = max(np.asarray(mat).shape) * np.finfo(float).eps
    return np.linalg.pinv(mat, rcond=rtol)


@dataclass(frozen=True)
class Trajectory:
    """A finite multichannel signal, stored time-major.

    `samples` has shape (length, channels); sample (t, c) is the value of
    channel c at time t. `vector` gives the stacked column
    [z_0; z_1; ...; z_{length-1}] used throughout the linear algebra.
    """

    samples: np.ndarray

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if arr.ndim != 2 or arr.size == 0:
            raise InputContractError("trajectory must be a nonempty 2-D array")
        object.__setattr__(self, "samples", arr)
        self.samples.setflags(write=False)

    @classmethod
    def from_values(cls, values, channels: int = 1) -> "Trajectory":
        values = np.asarray(values, dtype=float).ravel()
        if channels < 1 or values.size % channels != 0:
            raise InputContractError(
                f"flat length {values.size} not divisible by channels {channels}"
            )
        return cls(values.reshape(-1, channels))

    @property
    def channels(self) -> int:
        return self.samples.shape[1]

    @property
    def length(self) -> int:
        return self.samples.shape[0]

    @property
    def values(self) -> np.ndarray:
        """Flat time-major copy of the samples."""
        return self.samples.ravel().copy()

    @property
    def vector(self) -> np.ndarray:
        """Stacked column vector z_[0,length-1]."""
        return self.samples.ravel()

    def window(self, start: int, stop: int) -> "Trajectory":
        """Sub-trajectory over time steps [start, stop)."""
        if not (0 <= start < stop <= self.length):
            raise InputContractError(f"window [{start},{stop}) out of range")
        return Trajectory(self.samples[start:stop].copy())

    def concat(self, other: "Trajectory") -> "Trajectory":
        if other.channels != self.channels:
            raise InputContractError("channel mismatch in concatenation")
        return Trajectory(np.vstack([self.samples, other.samples]))

    def to_csv(self) -> str:
        """CSV with header 't,ch0,ch1,...' and one row per time step."""
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["t"] + [f"ch{c}" for c in range(self.channels)])
        for t in range(self.length):
            writer.writerow([t] + [repr(float(v)) for v in self.samples[t]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Trajectory":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if not header or header[0] != "t":
            raise InputContractError("trajectory CSV must start with header 't,ch0,...'")
        rows = [[float(v) for v in row[1:]] for row in reader if row]
        if not rows:
            raise InputContractError("trajectory CSV has no samples")
        return cls(np.asarray(rows))


def zeros_trajectory(length: int, channels: int = 1) -> Trajectory:
    return Trajectory(np.zeros((length, channels)))


@dataclass(frozen=True)
class StateSpaceModel:
    """Minimal discrete-time LTI realization (A, B, C, D)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    check_minimal: bool = field(default=False, compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise InputContractError("A must be square")
        if B.shape[0] != n:
            raise InputContractError("B row count must match A")
        if C.shape[1] != n:
            raise InputContractError("C column count must match A")
        if D.shape != (C.shape[0], B.shape[1]):
            raise InputContractError("D must be n_y x n_u")
        for name, mat in (("A", A), ("B", B), ("C", C), ("D", D)):
            object.__setattr__(self, name, mat)
            mat.setflags(write=False)
        if self.check_minimal:
            if numerical_rank(observability(self, n)) != n:
                raise InputContractError("model flagged minimal but not observable")
            if numerical_rank(controllability_rev(self, n)) != n:
                raise InputContractError("model flagged minimal but not controllable")

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def to_json(self) -> str:
        return json.dumps(
            {"A": self.A.tolist(), "B": self.B.tolist(), "C": self.C.tolist(),
             "D": self.D.tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "StateSpaceModel":
        doc = json.loads(text)
        try:
            return cls(A=np.asarray(doc["A"]), B=np.asarray(doc["B"]),
                       C=np.asarray(doc["C"]), D=np.asarray(doc["D"]))
        except KeyError as exc:
            raise InputContractError(f"model JSON missing field {exc}") from exc


def simulate(model: StateSpaceModel, x0, u: Trajectory):
    """Run the state recursion x+ = A x + B u, y = C x + D u.

    Returns (y, x) where y has the same length as u and x contains
    length(u)+1 samples including the terminal state.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != model.n_x:
        raise InputContractError(f"x0 has {x0.size} entries, expected {model.n_x}")
    if u.channels != model.n_u:
        raise InputContractError(f"input has {u.channels} channels, expected {model.n_u}")
    T = u.length
    xs = np.empty((T + 1, model.n_x))
    ys = np.empty((T, model.n_y))
    xs[0] = x0
    for t in range(T):
        ut = u.samples[t]
        ys[t] = model.C @ xs[t] + model.D @ ut
        xs[t + 1] = model.A @ xs[t] + model.B @ ut
    return Trajectory(ys), Trajectory(xs)


def toeplitz_matrix(model: StateSpaceModel, i: int) -> np.ndarray:
    """Block lower-triangular Toeplitz of the first i impulse-response blocks."""
    if i < 1:
        raise InputContractError("horizon must be >= 1")
    ny, nu, nx = model.n_y, model.n_u, model.n_x
    markov = [model.D]
    Apow = np.eye(nx)
    for _ in range(i - 1):
        markov.append(model.C @ Apow @ model.B)
        Apow = model.A @ Apow
    out = np.zeros((i * ny, i * nu))
    for r in range(i):
        for c in range(r + 1):
            out[r * ny:(r + 1) * ny, c * nu:(c + 1) * nu] = markov[r - c]
    return out


def observability(model: StateSpaceModel, i: int) -> np.ndarray:
    """Extended observability matrix [C; CA; ...; CA^(i-1)]."""
    if i < 1:
        raise InputContractError("horizon must be >= 1")
    blocks = []
    CA = model.C
    for _ in range(i):
        blocks.append(CA)
        CA = CA @ model.A
    return np.vstack(blocks)


def controllability_rev(model: StateSpaceModel, i: int) -> np.ndarray:
    """Reversed extended controllability matrix [A^(i-1)B ... AB B]."""
    if i < 1:
        raise InputContractError("horizon must be >= 1")
    blocks = [model.B]
    AB = model.B
    for _ in range(i - 1):
        AB = model.A @ AB
        blocks.append(AB)
    return np.hstack(blocks[::-1])


def lag(model: StateSpaceModel, rtol: float | None = None) -> int:
    """Smallest horizon i with rank(observability(i)) = n_x."""
    for i in range(1, model.n_x + 1):
        if numerical_rank(observability(model, i), rtol) == model.n_x:
            return i
    raise UnobservableModelError(
        f"observability rank stalls at "
        f"{numerical_rank(observability(model, model.n_x), rtol)} < {model.n_x}"
    )


def estimate_x0(model: StateSpaceModel, u_ini: Trajectory, y_ini: Trajectory,
                tol: float | None = None) -> np.ndarray:
    """Reconstruct the initial state from a length-L0 input-output window.

    Computes pinv(O_L0) @ (y_ini - T_L0 u_ini) and checks that the window
    is consistent with the model within `tol` (default 1e-8*(1+||y_ini||)).
    """
    if u_ini.length != y_ini.length:
        raise InputContractError("u_ini and y_ini must share length")
    L0 = u_ini.length
    if L0 < lag(model):
        raise InputContractError(f"window length {L0} below model lag {lag(model)}")
    O = observability(model, L0)
    Tm = toeplitz_matrix(model, L0)
    rhs = y_ini.vector - Tm @ u_ini.vector
    x0 = pinv_with_rank(O) @ rhs
    residual = float(np.linalg.norm(O @ x0 - rhs))
    if tol is None:
        tol = 1e-8 * (1.0 + np.linalg.norm(y_ini.vector))
    if residual > tol:
        raise InconsistentTrajectoryError(
            f"window is not a model trajectory (residual {residual:.3e})",
            residual=residual,
        )
    return x0


#: Benchmark transfer function G(z) coefficients, descending powers of z.
BENCHMARK_NUM = (0.1159, 0.0, 0.1159 * 0.5, 0.0)
BENCHMARK_DEN = (1.0, -2.2, 2.42, -1.87, 0.7225)


def benchmark_system() -> StateSpaceModel:
    """Controllable-canonical realization of the fourth-order benchmark plant."""
    a = np.asarray(BENCHMARK_DEN[1:])
    A = np.zeros((4, 4))
    A[0] = -a
    A[1:, :3] = np.eye(3)
    B = np.zeros((4, 1))
    B[0, 0] = 1.0
    C = np.asarray(BENCHMARK_NUM).reshape(1, 4)
    D = np.zeros((1, 1))
    return StateSpaceModel(A, B, C, D, check_minimal=True)
