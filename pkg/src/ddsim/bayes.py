"""Bayesian fusion of the data-based estimate with a kernel prior.

Kalman-form posterior, the mutual information between the simulated
output and the experiment data, and the scalar function whose
monotonicity links mutual information to ||g||^2 when the data
covariance is a scaled identity (Page matrices).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, eigh, solve

from .errors import DegenerateProblemError, InputContractError
from .lti import Trajectory


class PriorKind(enum.Enum):
    IDENTITY = "identity"
    DIAGONAL_DECAY = "diagonal_decay"
    CUSTOM = "custom"


@dataclass(frozen=True)
class KernelPrior:
    sigma_K: np.ndarray
    kind: PriorKind = PriorKind.CUSTOM

    def __post_init__(self):
        mat = np.asarray(self.sigma_K, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise InputContractError("kernel matrix must be square")
        if not np.allclose(mat, mat.T, atol=1e-12 * (1 + np.abs(mat).max())):
            raise InputContractError("kernel matrix must be symmetric")
        if eigh(mat, eigvals_only=True)[0] <= 0:
            raise InputContractError("kernel matrix must be positive definite")
        object.__setattr__(self, "sigma_K", mat)
        mat.setflags(write=False)

    @property
    def Ls(self) -> int:
        return self.sigma_K.shape[0]


@dataclass(frozen=True)
class PosteriorSummary:
    mean: Trajectory
    sigma_post: np.ndarray
    kalman_gain: np.ndarray
    mutual_information: float


def make_prior(kind: PriorKind, params: dict, Ls: int) -> KernelPrior:
    """Build a kernel prior of the requested family.

    identity: {"scale": s} gives s*I. diagonal_decay: {"c": c, "rho": rho}
    gives diag(c*rho^i). custom: {"matrix": M} with a PD matrix.
    """
    if kind is PriorKind.IDENTITY:
        scale = float(params.get("scale", 1.0))
        if scale <= 0:
            raise InputContractError("identity prior scale must be > 0")
        return KernelPrior(scale * np.eye(Ls), kind)
    if kind is PriorKind.DIAGONAL_DECAY:
        c, rho = float(params["c"]), float(params["rho"])
        if c <= 0 or not 0 < rho < 1:
            raise InputContractError("decay prior needs c > 0 and 0 < rho < 1")
        return KernelPrior(np.diag(c * rho ** np.arange(Ls)), kind)
    mat = np.asarray(params["matrix"], dtype=float)
    if mat.shape != (Ls, Ls):
        raise InputContractError(f"custom kernel must be {Ls}x{Ls}")
    return KernelPrior(mat, PriorKind.CUSTOM)


def _posterior_cov(sigma_K: np.ndarray, sigma_yf: np.ndarray) -> np.ndarray:
    total = sigma_K + sigma_yf
    try:
        gain = solve(total, sigma_K, assume_a="sym").T  # K = sigma_K @ total^-1
    except np.linalg.LinAlgError as exc:
        raise DegenerateProblemError("sigma_K + sigma_yf is singular") from exc
    post = sigma_K - gain @ sigma_K
    return gain, 0.5 * (post + post.T)


def posterior(y_s_hat: Trajectory, sigma_yf: np.ndarray,
              prior: KernelPrior) -> PosteriorSummary:
    """Kalman-form fusion of the data estimate with the prior."""
    sigma_yf = np.asarray(sigma_yf, dtype=float)
    if sigma_yf.shape != (prior.Ls, prior.Ls):
        raise InputContractError("sigma_yf shape must match the prior")
    if y_s_hat.length * y_s_hat.channels != prior.Ls:
        raise InputContractError("y_s_hat length must match the prior size")
    gain, post = _posterior_cov(prior.sigma_K, sigma_yf)
    mean = Trajectory.from_values(gain @ y_s_hat.vector, channels=y_s_hat.channels)
    mi = mutual_information(prior, sigma_yf)
    return PosteriorSummary(mean=mean, sigma_post=post, kalman_gain=gain,
                            mutual_information=mi)


def _logdet_pd(mat: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(cholesky(mat, lower=True)))))


def mutual_information(prior: KernelPrior, sigma_yf: np.ndarray) -> float:
    """I(y_s; data) in nats: 0.5*logdet(I + sigma_K sigma_yf^-1).

    Prefers the whitened generalized-eigenvalue form when sigma_yf is PD;
    falls back to 0.5*(logdet sigma_K - logdet sigma_post) otherwise.
    """
    sigma_yf = np.asarray(sigma_yf, dtype=float)
    if sigma_yf.shape != (prior.Ls, prior.Ls):
        raise InputContractError("sigma_yf shape must match the prior")
    try:
        Lf = cholesky(sigma_yf, lower=True)
    except np.linalg.LinAlgError:
        Lf = None
    if Lf is not None:
        white = np.linalg.solve(Lf, np.linalg.solve(Lf, prior.sigma_K).T)
        evals = eigh(0.5 * (white + white.T), eigvals_only=True)
        return 0.5 * float(np.sum(np.log1p(np.maximum(evals, 0.0))))
    _, post = _posterior_cov(prior.sigma_K, sigma_yf)
    try:
        return 0.5 * (_logdet_pd(prior.sigma_K) - _logdet_pd(post))
    except np.linalg.LinAlgError as exc:
        raise DegenerateProblemError(
            "mutual information undefined: both covariance forms singular"
        ) from exc


def monotone_link(z: float, prior: KernelPrior) -> float:
    """f(z) = -Ls*log(z) + sum_i log(1 + z*mu_i), mu_i eigenvalues of sigma_K^-1.

    Strictly decreasing in z; with sigma_yf = z*I it satisfies
    2*MI = f(z) + logdet(sigma_K).
    """
    if z <= 0:
        raise InputContractError("z must be > 0")
    evals = eigh(prior.sigma_K, eigvals_only=True)
    mu = 1.0 / evals
    return -prior.Ls * float(np.log(z)) + float(np.sum(np.log1p(z * mu)))
