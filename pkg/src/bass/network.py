"""Block-specific sparse covariance, partial correlations and consensus edges."""

import warnings
from dataclasses import dataclass

import numpy as np

from .data import GroupedDataset
from .errors import DimensionError, NumericError
from .metrics import SPARSE, INACTIVE
from .model import ModelState


@dataclass
class EdgeList:
    """Undirected weighted edges over the features of one block."""

    nodes: np.ndarray       # feature indices within the block
    edges: np.ndarray       # (n_edges, 2) int pairs, i < j
    weights: np.ndarray     # median partial correlation over supporting runs
    support: np.ndarray     # fraction of runs containing each edge
    edge_thresh: float
    min_frac: float

    def __len__(self):
        return len(self.edges)


def sparse_specific_columns(labels: np.ndarray, w: int) -> np.ndarray:
    """Columns labeled Sparse in block w and Inactive in every other block."""
    m = labels.shape[0]
    own = labels[w] == SPARSE
    others = np.ones_like(own)
    for v in range(m):
        if v != w:
            others &= labels[v] == INACTIVE
    return np.flatnonzero(own & others)


def observation_covariance(
    state: ModelState, labels: np.ndarray, data: GroupedDataset, w: int
) -> np.ndarray:
    """B_s B_s' + Sigma^w with B_s the block's own sparse-specific loadings."""
    rows = data.block_slice(w)
    sigma_w = state.SigmaDiag[rows]
    cols = sparse_specific_columns(labels, w)
    if cols.size == 0:
        warnings.warn(f"block {w} has no sparse-specific factors; returning noise only")
        return np.diag(sigma_w)
    B = state.Lambda[rows][:, cols]
    return B @ B.T + np.diag(sigma_w)


def partial_correlation(Omega: np.ndarray) -> np.ndarray:
    """Normalized negative precision entries; diagonal equals -1 by the formula."""
    try:
        R = np.linalg.inv(Omega)
    except np.linalg.LinAlgError as exc:
        raise NumericError("covariance matrix is singular") from exc
    d = np.sqrt(np.diag(R))
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise NumericError("precision matrix has non-positive diagonal")
    return -R / np.outer(d, d)


def consensus_network(
    runs: list,
    edge_thresh: float = 0.01,
    min_frac: float = 0.5,
) -> EdgeList:
    """Keep edges whose |partial correlation| clears the threshold in at
    least ``min_frac`` of the runs (inclusive at the boundary); the weight
    is the median over the supporting runs."""
    if not runs:
        raise DimensionError("need at least one run")
    mats = [np.asarray(r) for r in runs]
    p = mats[0].shape[0]
    for r in mats:
        if r.shape != (p, p):
            raise DimensionError("runs disagree on matrix dimensions")
    stack = np.stack(mats)
    iu, ju = np.triu_indices(p, k=1)
    vals = stack[:, iu, ju]                      # (n_runs, n_pairs)
    present = np.abs(vals) > edge_thresh
    frac = present.mean(axis=0)
    keep = frac >= min_frac
    weights = np.empty(keep.sum())
    for out_idx, pair_idx in enumerate(np.flatnonzero(keep)):
        weights[out_idx] = np.median(vals[present[:, pair_idx], pair_idx])
    return EdgeList(
        nodes=np.arange(p),
        edges=np.column_stack([iu[keep], ju[keep]]).astype(int),
        weights=weights,
        support=frac[keep],
        edge_thresh=edge_thresh,
        min_frac=min_frac,
    )
