"""Simulation regimes with retained ground truth.

Activity tables use 'S' (sparse), 'D' (dense) and '-' (inactive) per
(block, factor) cell.  Sparse cells draw N(0, sd^2) entries, zero a fixed
fraction at random, then clip small survivors to zero; dense cells stay
fully dense; inactive cells are exactly zero.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import GroupedDataset, assemble_dataset
from .errors import InvalidInputError

SPARSE, DENSE, INACTIVE = "S", "D", "-"

# per-regime activity tables; rows = blocks, columns = factors
_BUILTIN_TABLES = {
    "sim1": (
        [100, 120],
        [
            "SSSS--",
            "SS--SS",
        ],
    ),
    "sim2": (
        [100, 120],
        [
            "SDSSD---",
            "SD---SSD",
        ],
    ),
    "sim3": (
        [70, 60, 50, 40],
        [
            "S--S--",
            "-S-SSS",
            "--S-SS",
            "-----S",
        ],
    ),
    "sim4": (
        [70, 60, 50, 40],
        [
            "S---D---",
            "-S-S-D--",
            "--SS--D-",
            "--S----D",
        ],
    ),
    "sim5": (
        [50] * 10,
        [
            "S-------",
            "S--S----",
            "S--SS---",
            "SS-SS-S-",
            "-S-SS-S-",
            "-S----SS",
            "--S---SS",
            "--S---SS",
            "--S----S",
            "--S--S--",
        ],
    ),
    "sim6": (
        [50] * 10,
        [
            "S-----D---",
            "S--S--D---",
            "---S--DD--",
            "-S-S--DD--",
            "-S-SS--DD-",
            "-S--S--DD-",
            "-SS-S---DD",
            "--S-S---DD",
            "--S------D",
            "--S--S---D",
        ],
    ),
}


@dataclass(frozen=True)
class SimSpec:
    """Declarative description of one simulation regime."""

    block_dims: tuple
    k: int
    activity: tuple          # m strings of length k over {S, D, -}
    n: int
    seed: int = 0
    sparsity_frac: float = 0.9
    loading_sd: float = 2.0
    zero_clip: float = 0.5
    noise_var_range: tuple = (0.5, 1.5)

    def __post_init__(self):
        if not (0.0 <= self.sparsity_frac < 1.0):
            raise InvalidInputError("sparsity_frac must lie in [0, 1)")
        lo, hi = self.noise_var_range
        if not (0 < lo <= hi):
            raise InvalidInputError("noise_var_range must be positive")
        if len(self.activity) != len(self.block_dims):
            raise InvalidInputError("activity rows must match block count")
        for row in self.activity:
            if len(row) != self.k or any(ch not in "SD-" for ch in row):
                raise InvalidInputError(f"bad activity row {row!r}")

    @property
    def m(self) -> int:
        return len(self.block_dims)

    def activity_array(self) -> np.ndarray:
        return np.array([list(row) for row in self.activity])


@dataclass
class GroundTruth:
    Lambda_true: np.ndarray     # (p, k)
    activity: np.ndarray        # (m, k) chars
    X_true: np.ndarray          # (k, n)
    SigmaDiag_true: np.ndarray  # (p,)
    block_dims: list = field(default_factory=list)


def builtin_spec(sim_id: str, n: int, seed: int = 0) -> SimSpec:
    """One of the six named regimes at the requested sample count."""
    key = sim_id.lower()
    if key not in _BUILTIN_TABLES:
        raise InvalidInputError(
            f"unknown simulation id {sim_id!r}; expected sim1..sim6"
        )
    dims, rows = _BUILTIN_TABLES[key]
    return SimSpec(
        block_dims=tuple(dims), k=len(rows[0]), activity=tuple(rows), n=n, seed=seed
    )


def _draw_loadings(spec: SimSpec, rng) -> np.ndarray:
    p = int(sum(spec.block_dims))
    Lam = np.zeros((p, spec.k))
    offset = 0
    for w, p_w in enumerate(spec.block_dims):
        rows = slice(offset, offset + p_w)
        for h, kind in enumerate(spec.activity[w]):
            if kind == INACTIVE:
                continue
            col = rng.normal(0.0, spec.loading_sd, size=p_w)
            if kind == SPARSE:
                n_zero = int(np.ceil(spec.sparsity_frac * p_w))
                col[rng.choice(p_w, size=n_zero, replace=False)] = 0.0
                col[np.abs(col) < spec.zero_clip] = 0.0
            Lam[rows, h] = col
        offset += p_w
    return Lam


def generate(spec: SimSpec) -> tuple:
    """Draw one dataset and its ground truth, deterministically in the seed."""
    rng = np.random.default_rng(spec.seed)
    Lam = _draw_loadings(spec, rng)
    p = Lam.shape[0]
    X = rng.standard_normal((spec.k, spec.n))
    lo, hi = spec.noise_var_range
    sigma = rng.uniform(lo, hi, size=p)
    E = rng.standard_normal((p, spec.n)) * np.sqrt(sigma)[:, None]
    Y = Lam @ X + E
    offsets = np.concatenate([[0], np.cumsum(spec.block_dims)]).astype(int)
    blocks = [Y[offsets[w] : offsets[w + 1]] for w in range(spec.m)]
    truth = GroundTruth(
        Lambda_true=Lam,
        activity=spec.activity_array(),
        X_true=X,
        SigmaDiag_true=sigma,
        block_dims=list(spec.block_dims),
    )
    return assemble_dataset(blocks), truth


def generate_test(truth: GroundTruth, n: int, seed: int) -> GroupedDataset:
    """Fresh samples from the true model parameters (new X and noise)."""
    rng = np.random.default_rng(seed)
    k, p = truth.Lambda_true.shape[1], truth.Lambda_true.shape[0]
    X = rng.standard_normal((k, n))
    E = rng.standard_normal((p, n)) * np.sqrt(truth.SigmaDiag_true)[:, None]
    Y = truth.Lambda_true @ X + E
    offsets = np.concatenate([[0], np.cumsum(truth.block_dims)]).astype(int)
    blocks = [Y[offsets[w] : offsets[w + 1]] for w in range(len(truth.block_dims))]
    return assemble_dataset(blocks)
