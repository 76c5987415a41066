"""Coupled observation blocks sharing a common set of samples."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InvalidInputError


@dataclass
class GroupedDataset:
    """m observation matrices stacked feature-wise over the same n samples.

    Block ``w`` has shape ``(p_w, n)`` (features x samples).  ``Y`` is the
    vertical concatenation of all blocks, ``feature_offsets[w]`` the first
    joint row of block ``w`` (``feature_offsets[m] == p``).
    """

    blocks: list
    feature_offsets: np.ndarray
    n: int
    p: int
    Y: np.ndarray = field(repr=False)
    block_of_row: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.blocks)

    @property
    def block_dims(self) -> list:
        return [b.shape[0] for b in self.blocks]

    def block_slice(self, w: int) -> slice:
        return slice(int(self.feature_offsets[w]), int(self.feature_offsets[w + 1]))

    def rows_except(self, w: int) -> np.ndarray:
        """Joint row indices of every block other than ``w``."""
        keep = np.ones(self.p, dtype=bool)
        keep[self.block_slice(w)] = False
        return np.flatnonzero(keep)

    def block_sum(self, arr: np.ndarray) -> np.ndarray:
        """Sum a (p, ...) array over features within each block -> (m, ...)."""
        return np.add.reduceat(arr, self.feature_offsets[:-1], axis=0)

    def per_row(self, arr: np.ndarray) -> np.ndarray:
        """Broadcast a (m, ...) array to (p, ...) by repeating block values."""
        return arr[self.block_of_row]


def standardize_dataset(data: GroupedDataset, mean=None, sd=None):
    """Center/scale each feature; returns (dataset, mean, sd).

    Passing the statistics of another dataset (e.g. the training split)
    applies that transformation instead of refitting it.
    """
    if mean is None:
        mean = data.Y.mean(axis=1, keepdims=True)
        sd = np.maximum(data.Y.std(axis=1), 1e-12)[:, None]
    blocks = [
        (b - mean[data.block_slice(w)]) / sd[data.block_slice(w)]
        for w, b in enumerate(data.blocks)
    ]
    return assemble_dataset(blocks), mean, sd


def assemble_dataset(blocks) -> GroupedDataset:
    """Build a :class:`GroupedDataset` from a list of (p_w, n) matrices.

    Data are stored unmodified; any standardization is an explicit,
    separate step.
    """
    if not blocks:
        raise InvalidInputError("need at least one observation block")
    mats = [np.ascontiguousarray(np.asarray(b, dtype=np.float64)) for b in blocks]
    for w, b in enumerate(mats):
        if b.ndim != 2:
            raise InvalidInputError(f"block {w} is not a matrix (ndim={b.ndim})")
        if b.shape[0] == 0:
            raise InvalidInputError(f"block {w} has zero features")
    n = mats[0].shape[1]
    for w, b in enumerate(mats):
        if b.shape[1] != n:
            raise DimensionError(
                f"block {w} has {b.shape[1]} samples, expected {n}"
            )
    dims = [b.shape[0] for b in mats]
    offsets = np.concatenate([[0], np.cumsum(dims)]).astype(np.intp)
    p = int(offsets[-1])
    block_of_row = np.repeat(np.arange(len(mats)), dims)
    return GroupedDataset(
        blocks=mats,
        feature_offsets=offsets,
        n=n,
        p=p,
        Y=np.vstack(mats),
        block_of_row=block_of_row,
    )
