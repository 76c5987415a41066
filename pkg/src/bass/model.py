"""Model state, hyperparameters and joint-density evaluation.

The loading prior is parametrized through its gamma-chain form
(theta ~ Ga(a, delta), delta ~ Ga(b, phi), ... , gamma ~ Ga(f, nu)); all
variance-like quantities are variances, never precisions, and gamma
densities are shape/rate throughout.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import gammaln

from .data import GroupedDataset
from .errors import DimensionError, InvalidInputError, NumericError

VAR_FLOOR = 1e-10


@dataclass(frozen=True)
class HyperParams:
    """Shape pairs of the three shrinkage levels plus noise hyperparameters.

    The default 0.5 for every shape recovers horseshoe-like behaviour at
    all three levels; ``a_sigma=1, b_sigma=0.3`` give wide noise support.
    """

    a: float = 0.5
    b: float = 0.5
    c: float = 0.5
    d: float = 0.5
    e: float = 0.5
    f: float = 0.5
    nu: float = 1.0
    a_sigma: float = 1.0
    b_sigma: float = 0.3

    def __post_init__(self):
        for name in ("a", "b", "c", "d", "e", "f", "nu", "a_sigma", "b_sigma"):
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"hyperparameter {name} must be > 0")


@dataclass
class ModelState:
    """All model parameters for a k-factor fit on m blocks of p features.

    ``Z`` carries hard 0/1 indicators during Gibbs sampling and soft
    responsibilities in (0, 1) during EM; both live on the same m x k grid.
    """

    Lambda: np.ndarray          # (p, k) joint loading matrix
    Theta: np.ndarray           # (p, k) local variances
    Delta: np.ndarray           # (p, k) local rates
    Phi: np.ndarray             # (m, k) column scales
    Tau: np.ndarray             # (m, k)
    Eta: np.ndarray             # (m,)
    Gamma_: np.ndarray          # (m,)
    Z: np.ndarray               # (m, k) indicators (Gibbs) / responsibilities (EM)
    Pi: np.ndarray              # (m,) sparse-component weights
    SigmaDiag: np.ndarray       # (p,) residual variances
    hyper: HyperParams = field(default_factory=HyperParams)

    @property
    def k(self) -> int:
        return self.Lambda.shape[1]

    @property
    def p(self) -> int:
        return self.Lambda.shape[0]

    @property
    def m(self) -> int:
        return self.Phi.shape[0]

    def copy(self) -> "ModelState":
        return ModelState(
            Lambda=self.Lambda.copy(),
            Theta=self.Theta.copy(),
            Delta=self.Delta.copy(),
            Phi=self.Phi.copy(),
            Tau=self.Tau.copy(),
            Eta=self.Eta.copy(),
            Gamma_=self.Gamma_.copy(),
            Z=self.Z.copy(),
            Pi=self.Pi.copy(),
            SigmaDiag=self.SigmaDiag.copy(),
            hyper=self.hyper,
        )

    def select_factors(self, keep: np.ndarray) -> "ModelState":
        """Return a state restricted to the factor columns in ``keep``."""
        return replace(
            self,
            Lambda=self.Lambda[:, keep],
            Theta=self.Theta[:, keep],
            Delta=self.Delta[:, keep],
            Phi=self.Phi[:, keep],
            Tau=self.Tau[:, keep],
            Z=self.Z[:, keep],
        )

    def validate(self, data: GroupedDataset | None = None):
        p, k = self.Lambda.shape
        m = self.Phi.shape[0]
        shapes = {
            "Theta": (self.Theta.shape, (p, k)),
            "Delta": (self.Delta.shape, (p, k)),
            "Phi": (self.Phi.shape, (m, k)),
            "Tau": (self.Tau.shape, (m, k)),
            "Z": (self.Z.shape, (m, k)),
            "Eta": (self.Eta.shape, (m,)),
            "Gamma_": (self.Gamma_.shape, (m,)),
            "Pi": (self.Pi.shape, (m,)),
            "SigmaDiag": (self.SigmaDiag.shape, (p,)),
        }
        for name, (got, want) in shapes.items():
            if got != want:
                raise DimensionError(f"{name} has shape {got}, expected {want}")
        if data is not None and (data.p != p or data.m != m):
            raise DimensionError("state dimensions do not match dataset")
        for name in ("Theta", "Delta", "Phi", "Tau", "Eta", "Gamma_", "SigmaDiag"):
            if not np.all(getattr(self, name) > 0):
                raise InvalidInputError(f"{name} must be strictly positive")
        if not (np.all(self.Pi > 0) and np.all(self.Pi < 1)):
            raise InvalidInputError("Pi must lie in (0, 1)")
        if not (np.all(self.Z >= 0) and np.all(self.Z <= 1)):
            raise InvalidInputError("Z must lie in [0, 1]")


def init_state(
    data: GroupedDataset,
    k_init: int,
    hyper: HyperParams | None = None,
    seed=0,
    resp0: float = 1.0,
) -> ModelState:
    """Deterministic random initialization.

    Loadings start at 0.1-scaled standard normals; every shrinkage
    variable starts at 1 so the first updates see a neutral prior.
    ``resp0`` seeds the indicator grid (1 for Gibbs, 0.5 for EM).
    """
    if k_init < 1:
        raise InvalidInputError("k_init must be >= 1")
    hyper = hyper or HyperParams()
    rng = np.random.default_rng(seed)
    p, m, k = data.p, data.m, int(k_init)
    sample_var = np.maximum(data.Y.var(axis=1), 1e-6)
    return ModelState(
        Lambda=0.1 * rng.standard_normal((p, k)),
        Theta=np.ones((p, k)),
        Delta=np.ones((p, k)),
        Phi=np.ones((m, k)),
        Tau=np.ones((m, k)),
        Eta=np.ones(m),
        Gamma_=np.ones(m),
        Z=np.full((m, k), float(resp0)),
        Pi=np.full(m, 0.5),
        SigmaDiag=sample_var,
        hyper=hyper,
    )


# -- log densities (shape/rate gamma) ---------------------------------------

def norm_logpdf(x, var):
    return -0.5 * (np.log(2.0 * np.pi * var) + np.square(x) / var)


def gamma_logpdf(x, shape, rate):
    return shape * np.log(rate) + (shape - 1.0) * np.log(x) - rate * x - gammaln(shape)


def marginal_covariance(state: ModelState) -> np.ndarray:
    """Covariance of one sample with the factors integrated out."""
    return state.Lambda @ state.Lambda.T + np.diag(state.SigmaDiag)


def _factor_posterior(state: ModelState):
    """Cholesky factorization of I + Lambda' Sigma^-1 Lambda."""
    Lam = state.Lambda
    LtSi = Lam.T / state.SigmaDiag
    A = np.eye(state.k) + LtSi @ Lam
    try:
        cho = cho_factor(A, lower=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError("singular factor posterior precision") from exc
    return cho, LtSi


def marginal_loglik(state: ModelState, data: GroupedDataset) -> float:
    """log N(Y; 0, Lambda Lambda' + Sigma), evaluated with k x k solves."""
    cho, LtSi = _factor_posterior(state)
    n, p = data.n, data.p
    logdet = 2.0 * np.sum(np.log(np.diag(cho[0]))) + np.sum(np.log(state.SigmaDiag))
    M = LtSi @ data.Y
    quad = np.sum(data.Y * data.Y / state.SigmaDiag[:, None])
    quad -= np.sum(M * cho_solve(cho, M))
    return -0.5 * (n * p * np.log(2.0 * np.pi) + n * logdet + quad)


def complete_loglik(state: ModelState, data: GroupedDataset, X: np.ndarray) -> float:
    """log p(Y | Lambda, X, Sigma) + log p(X)."""
    resid = data.Y - state.Lambda @ X
    ll = np.sum(norm_logpdf(resid, state.SigmaDiag[:, None]))
    ll += np.sum(norm_logpdf(X, 1.0))
    return float(ll)


def _column_branch_terms(state: ModelState, data: GroupedDataset):
    """Per-(block, factor) log prior mass of the sparse and dense branches.

    Sparse branch: N(lambda; 0, theta) Ga(theta; a, delta) Ga(delta; b, phi)
    summed over the block's rows.  Dense branch: N(lambda; 0, phi) summed
    likewise (theta and delta do not exist under the dense component).
    """
    h = state.hyper
    phi_rows = data.per_row(state.Phi)
    sparse = (
        norm_logpdf(state.Lambda, state.Theta)
        + gamma_logpdf(state.Theta, h.a, state.Delta)
        + gamma_logpdf(state.Delta, h.b, phi_rows)
    )
    dense = norm_logpdf(state.Lambda, phi_rows)
    return data.block_sum(sparse), data.block_sum(dense)


def log_prior(state: ModelState, data: GroupedDataset, marginalize_z: bool = False) -> float:
    """Log prior of all parameters at the current state.

    With ``marginalize_z`` the two mixture branches are combined with
    weights (pi, 1-pi) per column; otherwise the hard indicators in
    ``state.Z`` pick the branch.  The flat Be(1,1) term on pi is zero.
    """
    h = state.hyper
    s1, s0 = _column_branch_terms(state, data)
    logpi = np.log(state.Pi)[:, None]
    log1mpi = np.log1p(-state.Pi)[:, None]
    if marginalize_z:
        mix = np.logaddexp(logpi + s1, log1mpi + s0).sum()
    else:
        z = state.Z
        mix = np.sum(z * (logpi + s1) + (1.0 - z) * (log1mpi + s0))
    lp = mix
    lp += np.sum(gamma_logpdf(state.Phi, h.c, state.Tau))
    lp += np.sum(gamma_logpdf(state.Tau, h.d, state.Eta[:, None]))
    lp += np.sum(gamma_logpdf(state.Eta, h.e, state.Gamma_))
    lp += np.sum(gamma_logpdf(state.Gamma_, h.f, h.nu))
    lp += np.sum(gamma_logpdf(1.0 / state.SigmaDiag, h.a_sigma, h.b_sigma))
    return float(lp)


def log_joint(
    state: ModelState,
    data: GroupedDataset,
    X: np.ndarray | None = None,
    marginalize_z: bool = False,
) -> float:
    """Joint log density of data and parameters.

    Without ``X`` the factors are integrated out analytically (marginal
    Gaussian likelihood); with ``X`` the complete-data likelihood is used,
    which is the form every Gibbs full conditional is proportional to.
    """
    if X is None:
        ll = marginal_loglik(state, data)
    else:
        ll = complete_loglik(state, data, X)
    return ll + log_prior(state, data, marginalize_z=marginalize_z)
