"""Scoring of recovered loading matrices and held-out prediction.

The sparse stability index keeps the convention that the maximal
correlation of a row or column enters its own penalty sum whenever it
exceeds that row/column mean; with only two columns that convention
dominates the score, so the index is meaningful from three columns up.
"""

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .data import GroupedDataset
from .errors import DimensionError, InvalidInputError
from .model import ModelState
from .sim import DENSE, INACTIVE, SPARSE, GroundTruth


def _abs_corr(L1: np.ndarray, L2: np.ndarray) -> np.ndarray:
    """Absolute column-correlation matrix; zero-variance columns give 0."""
    def center_scale(M):
        Mc = M - M.mean(axis=0, keepdims=True)
        norm = np.sqrt(np.sum(Mc * Mc, axis=0))
        good = norm > 0
        Mc[:, good] /= norm[good]
        Mc[:, ~good] = 0.0
        return Mc

    C = center_scale(L1.astype(float).copy()).T @ center_scale(L2.astype(float).copy())
    return np.abs(np.clip(C, -1.0, 1.0))


def ssi(L1: np.ndarray, L2: np.ndarray) -> float:
    """Sparse stability index between two loading matrices (higher is better)."""
    if L1.shape[0] != L2.shape[0]:
        raise DimensionError("loading matrices must share the feature dimension")
    if L1.shape[1] == 0 or L2.shape[1] == 0:
        raise InvalidInputError("need at least one column on each side")
    C = _abs_corr(L1, L2)
    k1, k2 = C.shape

    def one_side(Cm, k_other):
        best = Cm.max(axis=1)
        means = Cm.mean(axis=1, keepdims=True)
        penalty = np.where(Cm > means, Cm, 0.0).sum(axis=1) / max(k_other - 1, 1)
        return np.mean(best - penalty) / 2.0

    return float(one_side(C, k2) + one_side(C.T, k1))


def dsi(M1: np.ndarray, M2: np.ndarray) -> float:
    """Dense stability index: |tr(M1 M1' - M2 M2')| / p^2 (closer to 0 is better)."""
    if M1.shape[0] != M2.shape[0]:
        raise DimensionError("matrices must share the feature dimension")
    p = M1.shape[0]
    return float(abs(np.sum(M1 * M1) - np.sum(M2 * M2)) / p**2)


def classify_factors(
    Lambda: np.ndarray,
    rho: np.ndarray | None,
    data: GroupedDataset,
    global_thresh: float = 0.15,
    counts: int | None = None,
    active_eps: float = 1e-4,
) -> np.ndarray:
    """Label each (block, factor) cell Sparse / Dense / Inactive.

    With ``rho`` given (a fitted responsibility grid), a cell is Sparse
    when its responsibility exceeds 1/2 and the block's loadings are not
    all (numerically) zero, Dense when the responsibility is at most 1/2
    with nonzero loadings, Inactive otherwise.

    With ``counts`` given instead, the method-agnostic protocol applies:
    entries below ``global_thresh`` are zeroed, columns are ranked by
    nonzero count, the ``counts`` emptiest columns are designated sparse
    and the rest dense.
    """
    k = Lambda.shape[1]
    labels = np.full((data.m, k), INACTIVE, dtype="<U1")
    if counts is None:
        if rho is None:
            raise InvalidInputError("need either responsibilities or a sparse count")
        for w in range(data.m):
            block = Lambda[data.block_slice(w)]
            nonzero = np.max(np.abs(block), axis=0) > active_eps if k else np.array([])
            for h in range(k):
                if not nonzero[h]:
                    continue
                labels[w, h] = SPARSE if rho[w, h] > 0.5 else DENSE
        return labels

    if counts > k:
        raise InvalidInputError(f"requested {counts} sparse columns from k={k}")
    thresholded = np.where(np.abs(Lambda) >= global_thresh, Lambda, 0.0)
    order = np.argsort(np.count_nonzero(thresholded, axis=0), kind="stable")
    sparse_cols = set(order[:counts].tolist())
    for w in range(data.m):
        block = Lambda[data.block_slice(w)]
        block_thr = thresholded[data.block_slice(w)]
        for h in range(k):
            if h in sparse_cols:
                if np.any(block_thr[:, h] != 0.0):
                    labels[w, h] = SPARSE
            else:
                if np.max(np.abs(block[:, h])) > global_thresh:
                    labels[w, h] = DENSE
    return labels


def greedy_match(C: np.ndarray) -> list:
    """One-to-one matching by descending correlation; returns (row, col) pairs."""
    C = C.copy()
    pairs = []
    for _ in range(min(C.shape)):
        i, j = np.unravel_index(np.argmax(C), C.shape)
        if C[i, j] < 0:
            break
        pairs.append((int(i), int(j)))
        C[i, :] = -1.0
        C[:, j] = -1.0
    return pairs


def recovery_rate(
    est_lambda: np.ndarray,
    est_labels: np.ndarray,
    truth: GroundTruth,
    corr_thresh: float = 0.9,
) -> float:
    """Fraction of true factors recovered with matching activity pattern.

    Estimated columns are greedily matched to true columns by absolute
    correlation; a true factor counts as identified when its match
    correlates at |corr| >= corr_thresh and reproduces the Sparse / Dense
    / Inactive pattern across all blocks exactly.
    """
    k_true = truth.Lambda_true.shape[1]
    if est_lambda.shape[1] == 0:
        return 0.0
    C = _abs_corr(truth.Lambda_true, est_lambda)
    hits = 0
    for t, e in greedy_match(C):
        if C[t, e] < corr_thresh:
            continue
        if np.array_equal(truth.activity[:, t], est_labels[:, e]):
            hits += 1
    return hits / k_true


def predict_block(
    state: ModelState,
    data: GroupedDataset,
    w: int,
    y_minus: np.ndarray,
) -> np.ndarray:
    """E(y^w | y^(-w)) for new samples, solved through a k x k system.

    ``y_minus`` stacks every block except ``w`` in original order,
    shape (p - p_w, n_new).
    """
    if not 0 <= w < data.m:
        raise InvalidInputError(f"block index {w} out of range")
    rest = data.rows_except(w)
    if y_minus.shape[0] != rest.size:
        raise DimensionError(
            f"y_minus has {y_minus.shape[0]} features, expected {rest.size}"
        )
    Lam_w = state.Lambda[data.block_slice(w)]
    Lam_r = state.Lambda[rest]
    sig_r = state.SigmaDiag[rest]
    # Woodbury: (Lr Lr' + S)^-1 y = S^-1 y - S^-1 Lr (I + Lr' S^-1 Lr)^-1 Lr' S^-1 y
    LtSi = Lam_r.T / sig_r
    A = np.eye(state.k) + LtSi @ Lam_r
    u = y_minus / sig_r[:, None]
    t = u - (Lam_r / sig_r[:, None]) @ cho_solve(cho_factor(A, lower=True), LtSi @ y_minus)
    return Lam_w @ (Lam_r.T @ t)


def mse(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean squared entrywise difference."""
    if pred.shape != truth.shape:
        raise DimensionError(f"shape mismatch {pred.shape} vs {truth.shape}")
    return float(np.mean(np.square(pred - truth)))


def pve(state: ModelState) -> np.ndarray:
    """Proportion of variance explained per factor.

    The per-factor shares plus the noise share tr(Sigma)/tr(LL' + Sigma)
    sum to one.
    """
    col_norms = np.sum(np.square(state.Lambda), axis=0)
    total = col_norms.sum() + state.SigmaDiag.sum()
    return col_norms / total
