"""Hankel and Page signal matrices, partitions, and excitation tests."""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass

import numpy as np

from .errors import InputContractError, InsufficientDataError
from .lti import Trajectory, numerical_rank


class MatrixKind(enum.Enum):
    HANKEL = "hankel"
    PAGE = "page"


@dataclass(frozen=True)
class SignalMatrix:
    """A Hankel- or Page-structured data matrix built from one trajectory."""

    kind: MatrixKind
    L: int
    block_size: int
    data: np.ndarray
    source_length: int

    def __post_init__(self):
        self.data.setflags(write=False)

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def dropped_samples(self) -> int:
        """Trailing samples unused by a Page matrix (always 0 for Hankel)."""
        if self.kind is MatrixKind.HANKEL:
            return 0
        return self.source_length - self.L * self.cols

    def to_csv(self) -> str:
        buf = io.StringIO()
        np.savetxt(buf, self.data, delimiter=",")
        return buf.getvalue()


@dataclass(frozen=True)
class PartitionedData:
    """Row-block split of input and output signal matrices at index L0."""

    Up: np.ndarray
    Uf: np.ndarray
    Yp: np.ndarray
    Yf: np.ndarray
    L0: int
    Ls: int
    kind: MatrixKind
    n_u: int
    n_y: int

    @property
    def L(self) -> int:
        return self.L0 + self.Ls

    @property
    def cols(self) -> int:
        return self.Up.shape[1]

    @property
    def U(self) -> np.ndarray:
        return np.vstack([self.Up, self.Uf])

    @property
    def Y(self) -> np.ndarray:
        return np.vstack([self.Yp, self.Yf])


def _check_block_rows(z: Trajectory, L: int) -> None:
    if L < 1:
        raise InputContractError("block row count must be >= 1")
    if z.length < L:
        raise InsufficientDataError(
            f"signal length {z.length} shorter than {L} block rows"
        )


def build_hankel(z: Trajectory, L: int) -> SignalMatrix:
    """Block Hankel matrix with L block rows and N-L+1 columns."""
    _check_block_rows(z, L)
    N = z.length
    cols = [z.samples[j:j + L].ravel() for j in range(N - L + 1)]
    return SignalMatrix(MatrixKind.HANKEL, L, z.channels,
                        np.stack(cols, axis=1), N)


def build_page(z: Trajectory, L: int) -> SignalMatrix:
    """Block Page matrix with L block rows and floor(N/L) non-overlapping columns."""
    _check_block_rows(z, L)
    N = z.length
    cols = [z.samples[j * L:(j + 1) * L].ravel() for j in range(N // L)]
    return SignalMatrix(MatrixKind.PAGE, L, z.channels,
                        np.stack(cols, axis=1), N)


def build(z: Trajectory, L: int, kind: MatrixKind) -> SignalMatrix:
    if kind is MatrixKind.HANKEL:
        return build_hankel(z, L)
    return build_page(z, L)


def partition(u_mat: SignalMatrix, y_mat: SignalMatrix, L0: int, Ls: int) -> PartitionedData:
    """Split input/output signal matrices into past (L0) and future (Ls) blocks."""
    if L0 < 1 or Ls < 1:
        raise InputContractError("L0 and Ls must be >= 1")
    if u_mat.kind is not y_mat.kind:
        raise InputContractError("input and output matrices must share kind")
    if u_mat.cols != y_mat.cols:
        raise InputContractError("input and output matrices must share column count")
    if u_mat.L != L0 + Ls or y_mat.L != L0 + Ls:
        raise InputContractError(
            f"matrices have {u_mat.L} block rows, expected L0+Ls={L0 + Ls}"
        )
    su, sy = u_mat.block_size, y_mat.block_size
    return PartitionedData(
        Up=u_mat.data[:L0 * su].copy(),
        Uf=u_mat.data[L0 * su:].copy(),
        Yp=y_mat.data[:L0 * sy].copy(),
        Yf=y_mat.data[L0 * sy:].copy(),
        L0=L0, Ls=Ls, kind=u_mat.kind, n_u=su, n_y=sy,
    )


def is_pe(z: Trajectory, L: int, rtol: float | None = None) -> bool:
    """Persistency of excitation of order L: full row rank of the Hankel matrix."""
    H = build_hankel(z, L)
    return numerical_rank(H.data, rtol) == L * z.channels


def is_page_exciting(z: Trajectory, L: int, M: int, rtol: float | None = None) -> bool:
    """L-Page excitation of order M.

    Stacks the M Page matrices of the L-shifted trajectories, each truncated
    to the shortest common column count, and tests full row rank.
    """
    if M < 1:
        raise InputContractError("order M must be >= 1")
    _check_block_rows(z, L)
    N = z.length
    K = N // L - (M - 1)  # columns of each shifted Page matrix
    if K < 1:
        raise InsufficientDataError(
            f"signal too short for {M} stacked L={L} Page matrices"
        )
    blocks = []
    for k in range(M):
        stop = (N // L) * L - (M - 1 - k) * L
        blocks.append(build_page(z.window(k * L, stop), L).data)
    return numerical_rank(np.vstack(blocks), rtol) == M * L * z.channels


def min_data_length(kind: MatrixKind, L: int, n_x: int, n_u: int) -> int:
    """Classical data-length bound guaranteeing the excitation requirement."""
    if L < 1 or n_x < 0 or n_u < 1:
        raise InputContractError("arguments must be positive (n_x >= 0)")
    if kind is MatrixKind.HANKEL:
        return (L + n_x) * (n_u + 1) - 1
    return L * ((n_u * L + 1) * (n_x + 1) - 1)


def column_gap(N: int, L: int) -> int:
    """Column-count advantage of the Hankel matrix: c_H - c_P for the same N."""
    if L < 1 or N < L:
        raise InputContractError("need N >= L >= 1")
    return (N - L + 1) - N // L
