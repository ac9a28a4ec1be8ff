"""Clustering-aware structure-constrained low-rank representation solver.

Solves, by a linearized alternating direction method,

    min  ||Z||_* + alpha ||B o Z||_1
         + beta tr(F^T (V - (|Z|+|Z^T|)/2) F) + lam ||E||_err
    s.t. X = X Z + E,   F^T F = I,

where B is a data-driven weight matrix penalizing affinities between
dissimilar samples and the trace term penalizes disagreement between the
coefficients and a spectral embedding F. An auxiliary variable Q with the
constraint Z = Q makes the objective separable; each iteration performs
closed-form updates of Z (singular value thresholding of a linearized
step), Q (entrywise shrinkage), F (smallest eigenvectors of the current
graph Laplacian) and E (group shrinkage), followed by multiplier ascent
and a geometric penalty increase.

Degenerations: beta = 0 drops the clustering coupling (the F update
becomes inert), and alpha = beta = 0 reduces the program to plain
low-rank representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np

from .errors import ConfigError, DataError, DimensionError, NumericalError
from .linalg import (
    as_matrix,
    col_l21_prox,
    elementwise_shrink,
    spectral_norm,
    svt,
    sym_eig_smallest,
)

ERROR_MODE_COLUMNWISE = "columnwise"
ERROR_MODE_BLOCKWISE = "blockwise"

UNIT_NORM_TOL = 1e-8


@dataclass
class FeatureMatrix:
    """An m x N data matrix whose columns are unit-norm feature vectors.

    `block_shape = (n_blocks, bins)` describes the per-column block layout
    used by the blockwise error regularizer: column entries
    [k*bins:(k+1)*bins] form the histogram of block k, so a column reshapes
    to an (n_blocks, bins) matrix in row-major order.
    """

    data: np.ndarray
    block_shape: tuple[int, int] | None = None

    def __post_init__(self):
        self.data = as_matrix(self.data, "feature matrix")
        norms = np.linalg.norm(self.data, axis=0)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            worst = int(np.argmax(np.abs(norms - 1.0)))
            raise DataError(
                f"columns must have unit l2 norm; column {worst} has norm {norms[worst]!r}"
            )
        if self.block_shape is not None:
            n_b, bins = self.block_shape
            if n_b < 1 or bins < 1 or n_b * bins != self.m:
                raise DimensionError(
                    f"block_shape {self.block_shape} incompatible with m={self.m}"
                )

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass
class SolverConfig:
    """Parameters of the representation solver.

    l_max: number of spectral embedding columns carried by F.
    alpha: weight of the structure penalty B o Q.
    beta: weight of the clustering disagreement penalty.
    lam: weight of the error term.
    error_mode: 'columnwise' shrinks whole columns of E; 'blockwise'
        shrinks per-block rows of each reshaped column and requires the
        feature matrix to carry a block_shape.
    coeff_threshold: relative magnitude below which coefficients are
        zeroed before building the affinity matrix.
    """

    l_max: int
    alpha: float
    beta: float
    lam: float
    rho: float = 1.1
    mu0: float = 0.1
    mu_max: float = 1e30
    epsilon: float = 1e-7
    eta_factor: float = 1.02
    max_iters: int = 500
    error_mode: str = ERROR_MODE_COLUMNWISE
    coeff_threshold: float = 0.05

    def __post_init__(self):
        if self.l_max < 1:
            raise ConfigError("l_max must be >= 1")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be nonnegative")
        if self.lam <= 0:
            raise ConfigError("lam must be positive")
        if self.rho <= 1:
            raise ConfigError("rho must be > 1")
        if self.mu0 <= 0 or self.mu_max < self.mu0:
            raise ConfigError("need 0 < mu0 <= mu_max")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.eta_factor <= 1:
            raise ConfigError("eta_factor must be > 1")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.error_mode not in (ERROR_MODE_COLUMNWISE, ERROR_MODE_BLOCKWISE):
            raise ConfigError(f"unknown error_mode {self.error_mode!r}")
        if not 0 <= self.coeff_threshold <= 1:
            raise ConfigError("coeff_threshold must be in [0, 1]")


@dataclass
class SolverState:
    """One iterate of the alternating scheme plus its residual history."""

    z: np.ndarray
    q: np.ndarray
    e: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    f: np.ndarray | None
    theta: np.ndarray
    v: np.ndarray
    mu: float
    t: int
    eta: float
    residuals: list[tuple[float, float]] = field(default_factory=list)


@dataclass
class SolveResult:
    z: np.ndarray
    e: np.ndarray
    f: np.ndarray
    residual_history: np.ndarray  # shape (iterations, 2): inf-norm residuals
    converged: bool
    iterations: int


def build_weight_matrix(x) -> np.ndarray:
    """Data-driven structure weights b_ij = 1 - exp(-(1 - |x_i.x_j|)/sigma).

    sigma is the mean of 1 - |x_i.x_j| over off-diagonal pairs; similar
    columns get small weights, dissimilar ones get weights near 1. The
    diagonal is zero.
    """
    data = x.data if isinstance(x, FeatureMatrix) else as_matrix(x)
    n = data.shape[1]
    if n < 2:
        raise DimensionError("need at least two columns")
    coherence = np.clip(np.abs(data.T @ data), 0.0, 1.0)
    dissim = 1.0 - coherence
    off = ~np.eye(n, dtype=bool)
    sigma = float(dissim[off].mean())
    if sigma <= 0:
        raise DataError("all columns are pairwise parallel; weight scale is degenerate")
    b = 1.0 - np.exp(-dissim / sigma)
    np.fill_diagonal(b, 0.0)
    return b


def init_state(x: FeatureMatrix, config: SolverConfig) -> SolverState:
    n = x.n_samples
    zeros = lambda: np.zeros((n, n))
    eta = config.eta_factor * spectral_norm(x.data) ** 2
    return SolverState(
        z=zeros(),
        q=zeros(),
        e=np.zeros_like(x.data),
        g1=np.zeros_like(x.data),
        g2=zeros(),
        f=None,
        theta=zeros(),
        v=np.zeros(n),
        mu=config.mu0,
        t=0,
        eta=eta,
    )


def update_z(state: SolverState, x: FeatureMatrix, config: SolverConfig) -> np.ndarray:
    """Linearized nuclear-norm step: SVT of Z - grad/(eta*mu) at level 1/(eta*mu)."""
    data = x.data
    grad_over_mu = data.T @ (data @ state.z - data + state.e - state.g1 / state.mu)
    grad_over_mu += state.z - state.q + state.g2 / state.mu
    return svt(state.z - grad_over_mu / state.eta, 1.0 / (state.eta * state.mu))


def update_q(
    state: SolverState, weights: np.ndarray, config: SolverConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Entrywise shrinkage of Z + G2/mu with per-entry thresholds.

    The threshold matrix is (alpha*B + beta*Theta)/mu, which stays well
    defined at alpha = 0. Returns the new Q together with the refreshed
    degree vector v_i = sum_j (|q_ij| + |q_ji|)/2.
    """
    thresholds = (config.alpha * weights + config.beta * state.theta) / state.mu
    q = elementwise_shrink(state.z + state.g2 / state.mu, thresholds, 1.0)
    absq = np.abs(q)
    v = (absq.sum(axis=1) + absq.sum(axis=0)) / 2.0
    return q, v


def update_f(state: SolverState, config: SolverConfig) -> tuple[np.ndarray, np.ndarray]:
    """Smallest-eigenvector embedding of the current Laplacian, plus Theta.

    M = diag(v) - (|Q| + |Q^T|)/2; F collects the eigenvectors of the
    l_max smallest eigenvalues, and theta_ij = 0.5*||f^i - f^j||^2 measures
    row disagreement of the embedding.
    """
    w = (np.abs(state.q) + np.abs(state.q.T)) / 2.0
    m = np.diag(state.v) - w
    f = sym_eig_smallest(m, config.l_max)
    sq = (f * f).sum(axis=1)
    theta = (sq[:, None] + sq[None, :]) / 2.0 - f @ f.T
    theta = np.maximum(theta, 0.0)
    np.fill_diagonal(theta, 0.0)
    return f, theta


def update_e(state: SolverState, x: FeatureMatrix, config: SolverConfig) -> np.ndarray:
    """Group shrinkage of C = X - XZ + G1/mu at level lam/mu.

    Columnwise mode shrinks whole columns; blockwise mode reshapes each
    column to (n_blocks, bins) and shrinks each block row independently.
    """
    c = x.data - x.data @ state.z + state.g1 / state.mu
    tau = config.lam / state.mu
    if config.error_mode == ERROR_MODE_COLUMNWISE:
        return col_l21_prox(c, tau)
    if x.block_shape is None:
        raise ConfigError("blockwise error mode requires a feature block_shape")
    n_b, bins = x.block_shape
    blocks = c.T.reshape(x.n_samples, n_b, bins)
    norms = np.linalg.norm(blocks, axis=2)
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = np.maximum(1.0 - tau / norms[nz], 0.0)
    return (blocks * scale[:, :, None]).reshape(x.n_samples, x.m).T


def cslrr_solve(
    x: FeatureMatrix,
    config: SolverConfig,
    callback: Callable[[SolverState], None] | None = None,
    log_stream: TextIO | None = None,
) -> SolveResult:
    """Run the alternating scheme until both constraint residuals fall below epsilon.

    Iterates Z -> Q -> F -> E updates, multiplier ascent
    G1 += mu(X - XZ - E), G2 += mu(Z - Q), and mu <- min(mu_max, rho*mu),
    stopping when ||X - XZ - E||_inf <= eps and ||Z - Q||_inf <= eps or
    after max_iters iterations (in which case the result is flagged
    non-converged). `callback` is invoked with the state after each
    completed iteration; `log_stream` receives one residual line per
    iteration.
    """
    if x.n_samples < config.l_max:
        raise DimensionError(
            f"need at least l_max={config.l_max} samples, got {x.n_samples}"
        )
    if config.error_mode == ERROR_MODE_BLOCKWISE and x.block_shape is None:
        raise ConfigError("blockwise error mode requires a feature block_shape")

    weights = (
        build_weight_matrix(x)
        if config.alpha > 0
        else np.zeros((x.n_samples, x.n_samples))
    )
    state = init_state(x, config)
    converged = False
    for _ in range(config.max_iters):
        state.z = update_z(state, x, config)
        state.q, state.v = update_q(state, weights, config)
        state.f, state.theta = update_f(state, config)
        state.e = update_e(state, x, config)

        r1_mat = x.data - x.data @ state.z - state.e
        r2_mat = state.z - state.q
        state.g1 = state.g1 + state.mu * r1_mat
        state.g2 = state.g2 + state.mu * r2_mat
        state.mu = min(config.mu_max, config.rho * state.mu)
        if not (
            np.all(np.isfinite(state.z))
            and np.all(np.isfinite(state.q))
            and np.all(np.isfinite(state.e))
        ):
            raise NumericalError(f"non-finite iterate at iteration {state.t}")
        r1 = float(np.abs(r1_mat).max())
        r2 = float(np.abs(r2_mat).max())
        state.residuals.append((r1, r2))
        state.t += 1
        if log_stream is not None:
            print(f"iter={state.t} r1={r1:.6e} r2={r2:.6e} mu={state.mu:.6e}", file=log_stream)
        if callback is not None:
            callback(state)
        if r1 <= config.epsilon and r2 <= config.epsilon:
            converged = True
            break

    history = np.array(state.residuals) if state.residuals else np.zeros((0, 2))
    return SolveResult(
        z=state.z,
        e=state.e,
        f=state.f,
        residual_history=history,
        converged=converged,
        iterations=state.t,
    )


def threshold_coefficients(z, thresh: float) -> np.ndarray:
    """Zero entries with magnitude below thresh * max|z_ij| (relative threshold)."""
    z = as_matrix(z)
    if thresh < 0:
        raise ValueError("thresh must be nonnegative")
    peak = np.abs(z).max()
    out = z.copy()
    out[np.abs(out) < thresh * peak] = 0.0
    return out


def build_affinity(z) -> np.ndarray:
    """Symmetric nonnegative affinity W = (|Z| + |Z^T|)/2."""
    z = as_matrix(z)
    if z.shape[0] != z.shape[1]:
        raise DimensionError(f"coefficient matrix must be square, got {z.shape}")
    return (np.abs(z) + np.abs(z.T)) / 2.0
