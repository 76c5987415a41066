"""Engine orchestration: single fits and seeded multi-restart runs."""

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import GroupedDataset
from .em import EmConfig, FitReport, run_em
from .errors import InvalidInputError
from .gibbs import GibbsConfig, run_gibbs, sweep
from .model import HyperParams, init_state, log_joint
from .px import PxConfig, run_px_em

ENGINES = ("em", "mcmc-em", "px-em", "gibbs")


@dataclass(frozen=True)
class FitSpec:
    """Everything one restart needs; picklable for worker processes."""

    engine: str
    k_init: int
    hyper: HyperParams = field(default_factory=HyperParams)
    em: EmConfig = field(default_factory=EmConfig)
    n_px_iter: int = 20
    mcmc_init_sweeps: int = 50
    gibbs: GibbsConfig | None = None

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise InvalidInputError(f"unknown engine {self.engine!r}")


def fit_once(data: GroupedDataset, spec: FitSpec, seed: int) -> FitReport:
    """Run one fit of the requested engine, deterministic in ``seed``."""
    if spec.engine == "gibbs":
        t0 = time.perf_counter()
        cfg = spec.gibbs or GibbsConfig(n_iter=1000, burn_in=500, thin=2, seed=seed)
        if cfg.seed != seed:
            cfg = GibbsConfig(cfg.n_iter, cfg.burn_in, cfg.thin, seed)
        state = init_state(data, spec.k_init, spec.hyper, seed=seed, resp0=1.0)
        chain = run_gibbs(state, data, cfg)
        final = chain.final_state
        return FitReport(
            state=final,
            log_posterior_trace=chain.log_joint_trace,
            factor_count_trace=np.full(cfg.n_iter, final.k, dtype=int),
            n_iter=cfg.n_iter,
            wall_time=time.perf_counter() - t0,
            seed=seed,
            initializer="GIBBS",
            converged=True,
        )

    em_cfg = EmConfig(
        max_iter=spec.em.max_iter,
        ll_tol=spec.em.ll_tol,
        window_t=spec.em.window_t,
        prune_eps=spec.em.prune_eps,
        seed=seed,
    )
    if spec.engine == "em":
        state = init_state(data, spec.k_init, spec.hyper, seed=seed, resp0=0.5)
        return run_em(state, data, em_cfg)
    if spec.engine == "px-em":
        state = init_state(data, spec.k_init, spec.hyper, seed=seed, resp0=0.5)
        return run_px_em(state, data, PxConfig(n_px_iter=spec.n_px_iter, em=em_cfg))
    # mcmc-em: a short chain supplies the EM starting point
    rng = np.random.default_rng(seed)
    state = init_state(data, spec.k_init, spec.hyper, seed=rng, resp0=1.0)
    for _ in range(spec.mcmc_init_sweeps):
        sweep(state, data, rng)
    report = run_em(state, data, em_cfg, initializer="MCMC-EM")
    return report


def restart_seeds(seed: int, restarts: int) -> list:
    """Derived seeds: base seed plus restart index."""
    return [seed + i for i in range(restarts)]


def worker_count(restarts: int) -> int:
    cap = os.environ.get("BASS_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(restarts, limit))


def _fit_in_worker(data, spec, seed):
    """Worker entry: the process is the parallel unit, so BLAS threads are
    capped to avoid oversubscription."""
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=1):
            return fit_once(data, spec, seed)
    except ImportError:  # pragma: no cover
        return fit_once(data, spec, seed)


def run_restarts(
    data: GroupedDataset,
    spec: FitSpec,
    seed: int,
    restarts: int,
    return_exceptions: bool = False,
) -> list:
    """Independent fits on derived seeds; parallel when workers allow.

    Results are returned in restart order regardless of scheduling.  With
    ``return_exceptions`` a failed restart yields its exception instead
    of aborting the batch, so completed fits are not lost.
    """
    seeds = restart_seeds(seed, restarts)
    workers = worker_count(restarts)
    results = []
    if workers == 1 or restarts == 1:
        for s in seeds:
            try:
                results.append(fit_once(data, spec, s))
            except Exception as exc:
                if not return_exceptions:
                    raise
                results.append(exc)
        return results
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_fit_in_worker, data, spec, s) for s in seeds]
        for f in futures:
            try:
                results.append(f.result())
            except Exception as exc:
                if not return_exceptions:
                    raise
                results.append(exc)
    return results


def best_fit_index(reports: list) -> int:
    """Index of the restart with the highest final log posterior."""
    lps = [r.final_log_posterior for r in reports]
    return int(np.nanargmax(lps))
