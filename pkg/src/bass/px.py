"""Parameter-expanded EM: rotation-augmented iterations ahead of plain EM.

The expanded model carries a PSD k x k matrix R alongside the rotated
loading matrix: factors are N(0, R) and the data see Lambda* (the prior
applies to Lambda*).  Each iteration takes the E-step in the original
space on Lambda* R_L, transforms the moments into the expanded space,
runs the usual M-step updates on Lambda* and the shrinkage chain, then
re-estimates R = S^XX / n.  R is absorbed into the loadings (Lambda =
Lambda* R_L) once, when the phase hands off to plain EM: that mapping
leaves the marginal data likelihood unchanged.  The prior is not
invariant under the expansion, which is why the phase runs for a fixed
small number of iterations.  No pruning happens during the expanded
phase.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .data import GroupedDataset
from .errors import InvalidInputError, NumericError
from .em import (
    EmConfig,
    FactorMoments,
    FitReport,
    e_step,
    m_step_loading,
    m_step_shrinkage,
    responsibilities,
    run_em,
)
from .model import ModelState, log_joint

_JITTER = 1e-10


@dataclass(frozen=True)
class PxConfig:
    n_px_iter: int = 20
    em: EmConfig = field(default_factory=EmConfig)

    def __post_init__(self):
        if self.n_px_iter < 0:
            raise InvalidInputError("n_px_iter must be >= 0")


def update_rotation(moments: FactorMoments, n: int) -> np.ndarray:
    """Maximizer of the expanded objective: R = S^XX / n, symmetrized."""
    R = moments.Exx / float(n)
    R = 0.5 * (R + R.T)
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        R = R + _JITTER * np.eye(R.shape[0])
    return R


def _cholesky_lower(R: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        try:
            return np.linalg.cholesky(R + _JITTER * np.eye(R.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise NumericError("rotation matrix is not positive definite") from exc


def apply_rotation(Lambda_star: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Absorb R into the loadings via its lower Cholesky factor."""
    return Lambda_star @ _cholesky_lower(R)


def expanded_e_step(
    state: ModelState, data: GroupedDataset, R: np.ndarray
) -> FactorMoments:
    """Moments of the expanded-model factors (prior N(0, R)).

    Computed by mapping the loadings to the original space, taking the
    standard E-step there, and transforming by the Cholesky factor of R:
    <x> = R_L <x~>, S^XX = R_L S~ R_L', S^XY = R_L S~^XY.  Indicator
    responsibilities are evaluated on Lambda*, where the prior lives.
    """
    R_L = _cholesky_lower(R)
    eff = state.copy()
    eff.Lambda = state.Lambda @ R_L
    base = e_step(eff, data)
    return FactorMoments(
        Ex=R_L @ base.Ex,
        Exx=R_L @ base.Exx @ R_L.T,
        Sxy=R_L @ base.Sxy,
        Rho=responsibilities(state, data),
    )


def px_iteration(
    state: ModelState,
    data: GroupedDataset,
    R: np.ndarray,
    fixed_rotation: np.ndarray | None = None,
) -> np.ndarray:
    """One expanded iteration; mutates ``state`` (Lambda holds Lambda*),
    returns the updated R.

    ``fixed_rotation`` pins the R-update (tests use the identity, which
    makes the iteration coincide with one plain EM iteration exactly).
    """
    moments = expanded_e_step(state, data, R)
    state.Z = moments.Rho
    m_step_loading(state, moments, data)
    m_step_shrinkage(state, moments, data)
    return update_rotation(moments, data.n) if fixed_rotation is None else fixed_rotation


def reset_shrinkage(state: ModelState):
    """Neutral shrinkage hierarchy, as at initialization.

    Used at the expanded-to-plain handoff: the expanded phase fits the
    chain to Lambda*, whose scale R absorbs, so the carried values are
    inconsistent with Lambda* R_L and strangle the first plain E-step.
    The expanded phase contributes the loading orientation; the chain
    restarts neutral.
    """
    p, m, k = state.p, state.m, state.k
    state.Theta = np.ones((p, k))
    state.Delta = np.ones((p, k))
    state.Phi = np.ones((m, k))
    state.Tau = np.ones((m, k))
    state.Eta = np.ones(m)
    state.Gamma_ = np.ones(m)
    state.Pi = np.full(m, 0.5)
    state.Z = np.full((m, k), 0.5)


def run_px_em(
    state: ModelState,
    data: GroupedDataset,
    cfg: PxConfig,
) -> FitReport:
    """Expanded phase of ``cfg.n_px_iter`` iterations, then plain EM."""
    t0 = time.perf_counter()
    state = state.copy()
    lp_trace, k_trace = [], []
    if cfg.n_px_iter > 0:
        R = np.eye(state.k)
        for _ in range(cfg.n_px_iter):
            R = px_iteration(state, data, R)
            lp_trace.append(log_joint(state, data, marginalize_z=True))
            k_trace.append(state.k)
        state.Lambda = apply_rotation(state.Lambda, R)
        reset_shrinkage(state)
    report = run_em(state, data, cfg.em, initializer="PX-EM")
    return FitReport(
        state=report.state,
        log_posterior_trace=np.concatenate([lp_trace, report.log_posterior_trace])
        if lp_trace
        else report.log_posterior_trace,
        factor_count_trace=np.concatenate([k_trace, report.factor_count_trace]).astype(int)
        if k_trace
        else report.factor_count_trace,
        n_iter=cfg.n_px_iter + report.n_iter,
        wall_time=time.perf_counter() - t0,
        seed=cfg.em.seed,
        initializer="PX-EM",
        converged=report.converged,
    )
