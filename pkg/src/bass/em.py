"""Variational EM for MAP estimation.

The E-step carries the factor moments and the per-column indicator
responsibilities; the M-step applies the closed-form coordinate updates.
The gamma-chain scale updates (delta, tau, eta, gamma) are the means of
the corresponding full conditionals, i.e. the stationary points of the
conditional densities in log coordinates; theta, phi, sigma and the
loading columns are plain-coordinate maximizers.
"""

import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit

from .data import GroupedDataset
from .errors import InvalidInputError, NumericError
from .model import (
    VAR_FLOOR,
    ModelState,
    _column_branch_terms,
    log_joint,
)

PI_CLIP = 1e-12


@dataclass(frozen=True)
class EmConfig:
    max_iter: int = 2000
    ll_tol: float = 1e-5
    window_t: int = 50
    prune_eps: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise InvalidInputError("max_iter must be >= 1")
        if self.ll_tol <= 0:
            raise InvalidInputError("ll_tol must be > 0")
        if self.window_t < 1:
            raise InvalidInputError("window_t must be >= 1")


@dataclass
class FactorMoments:
    """E-step sufficient statistics."""

    Ex: np.ndarray    # (k, n) posterior means of the factors
    Exx: np.ndarray   # (k, k) sum of per-sample second moments
    Sxy: np.ndarray   # (k, p) sum of <x_i> y_i'
    Rho: np.ndarray   # (m, k) sparse-branch responsibilities


@dataclass
class FitReport:
    state: ModelState
    log_posterior_trace: np.ndarray
    factor_count_trace: np.ndarray
    n_iter: int
    wall_time: float
    seed: int
    initializer: str = "EM"
    converged: bool = False

    @property
    def final_log_posterior(self) -> float:
        return float(self.log_posterior_trace[-1]) if self.n_iter else np.nan


def responsibilities(state: ModelState, data: GroupedDataset) -> np.ndarray:
    """Posterior probability that each (block, factor) is sparse, in log space."""
    s1, s0 = _column_branch_terms(state, data)
    logit = (np.log(state.Pi) - np.log1p(-state.Pi))[:, None] + s1 - s0
    return expit(logit)


def e_step(state: ModelState, data: GroupedDataset) -> FactorMoments:
    """Factor moments and indicator responsibilities at the current state."""
    k, n = state.k, data.n
    if k == 0:
        return FactorMoments(
            Ex=np.zeros((0, n)),
            Exx=np.zeros((0, 0)),
            Sxy=np.zeros((0, data.p)),
            Rho=np.zeros((state.m, 0)),
        )
    Lam = state.Lambda
    LtSi = Lam.T / state.SigmaDiag
    A = np.eye(k) + LtSi @ Lam
    try:
        cho = cho_factor(A, lower=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError("singular factor posterior precision") from exc
    V = cho_solve(cho, np.eye(k))
    Ex = cho_solve(cho, LtSi @ data.Y)
    Exx = Ex @ Ex.T + n * V
    Sxy = Ex @ data.Y.T
    return FactorMoments(Ex=Ex, Exx=Exx, Sxy=Sxy, Rho=responsibilities(state, data))


def m_step_loading(state: ModelState, moments: FactorMoments, data: GroupedDataset):
    """Coordinate maximization over loading columns, h = 1..k ascending.

    Each column solves a diagonal system: the posterior precision is
    S^XX_hh + sigma^2 (rho/theta + (1-rho)/phi) elementwise.
    """
    Sxx = moments.Exx
    Syx = moments.Sxy.T
    rho_rows = data.per_row(moments.Rho)
    phi_rows = data.per_row(state.Phi)
    Lam = state.Lambda
    for h in range(state.k):
        d_h = rho_rows[:, h] / state.Theta[:, h] + (1.0 - rho_rows[:, h]) / phi_rows[:, h]
        num = Syx[:, h] - Lam @ Sxx[:, h] + Lam[:, h] * Sxx[h, h]
        Lam[:, h] = num / (Sxx[h, h] + state.SigmaDiag * d_h)
    return state.Lambda


def m_step_shrinkage(state: ModelState, moments: FactorMoments, data: GroupedDataset):
    """Closed-form updates of all shrinkage and noise parameters."""
    h = state.hyper
    k = state.k
    if k == 0:
        return state
    rho = moments.Rho
    lam_sq = np.square(state.Lambda)

    t = 2.0 * h.a - 3.0
    theta = (t + np.sqrt(t * t + 8.0 * lam_sq * state.Delta)) / (4.0 * state.Delta)
    state.Theta = np.maximum(theta, VAR_FLOOR)

    phi_rows = data.per_row(state.Phi)
    state.Delta = (h.a + h.b) / (state.Theta + phi_rows)

    p_w = np.asarray(data.block_dims, dtype=np.float64)[:, None]
    delta_sums = data.block_sum(state.Delta)
    lam_sq_sums = data.block_sum(lam_sq)
    p_prime = rho * p_w * h.b - (1.0 - rho) * p_w / 2.0 + h.c
    a_prime = 2.0 * (rho * delta_sums + state.Tau)
    b_prime = (1.0 - rho) * lam_sq_sums
    phi = (p_prime - 1.0 + np.sqrt(np.square(p_prime - 1.0) + a_prime * b_prime)) / a_prime
    state.Phi = np.maximum(phi, VAR_FLOOR)

    state.Tau = (h.c + h.d) / (state.Phi + state.Eta[:, None])
    state.Eta = (h.d * k + h.e) / (state.Gamma_ + state.Tau.sum(axis=1))
    state.Gamma_ = (h.e + h.f) / (state.Eta + h.nu)
    state.Pi = np.clip(rho.mean(axis=1), PI_CLIP, 1.0 - PI_CLIP)

    resid = data.Y - state.Lambda @ moments.Ex
    rate = 0.5 * np.sum(np.square(resid), axis=1) + h.b_sigma
    prec = (data.n / 2.0 + h.a_sigma - 1.0) / rate
    state.SigmaDiag = np.maximum(1.0 / prec, VAR_FLOOR)
    return state


def prune_factors(state: ModelState, eps: float) -> ModelState:
    """Drop every factor column whose largest |loading| falls below eps."""
    if state.k == 0:
        return state
    keep = np.max(np.abs(state.Lambda), axis=0) >= eps
    if np.all(keep):
        return state
    return state.select_factors(keep)


def nonzero_loading_count(state: ModelState, eps: float) -> int:
    return int(np.sum(np.abs(state.Lambda) > eps))


def run_em(
    state: ModelState,
    data: GroupedDataset,
    cfg: EmConfig,
    initializer: str = "EM",
) -> FitReport:
    """Alternate E and M steps with pruning until the sparsity pattern and
    log posterior are both stable over a trailing window."""
    t0 = time.perf_counter()
    state = state.copy()
    lp_trace, k_trace, nnz_trace = [], [], []
    converged = False
    for _ in range(cfg.max_iter):
        if state.k > 0:
            moments = e_step(state, data)
            state.Z = moments.Rho
            m_step_loading(state, moments, data)
            m_step_shrinkage(state, moments, data)
            state = prune_factors(state, cfg.prune_eps)
        lp_trace.append(log_joint(state, data, marginalize_z=True))
        k_trace.append(state.k)
        nnz_trace.append(nonzero_loading_count(state, cfg.prune_eps))
        w = cfg.window_t
        if len(lp_trace) >= w:
            stable = len(set(nnz_trace[-w:])) == 1
            small = abs(lp_trace[-1] - lp_trace[-w]) < cfg.ll_tol
            if stable and small:
                converged = True
                break
    return FitReport(
        state=state,
        log_posterior_trace=np.asarray(lp_trace),
        factor_count_trace=np.asarray(k_trace, dtype=int),
        n_iter=len(lp_trace),
        wall_time=time.perf_counter() - t0,
        seed=cfg.seed,
        initializer=initializer,
        converged=converged,
    )
