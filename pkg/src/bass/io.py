"""File formats: delimited matrices, states, sim specs, run manifests.

Matrices are plain text, one feature per row, values at 17 significant
digits so float64 round-trips losslessly; the header line carries a name,
the owning block id and the dimensions.
"""

import hashlib
import json
import platform
import time
from pathlib import Path

import numpy as np

from .data import GroupedDataset, assemble_dataset
from .errors import InvalidInputError
from .model import HyperParams, ModelState
from .sim import GroundTruth, SimSpec

_FMT = "%.17g"
_MAGIC = "# bass-matrix"


def write_matrix(path, array: np.ndarray, name: str, block: int | None = None):
    arr = np.atleast_2d(np.asarray(array, dtype=np.float64))
    header = f"{_MAGIC} name={name} block={'-' if block is None else block} rows={arr.shape[0]} cols={arr.shape[1]}"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, arr, fmt=_FMT, delimiter="\t")


def read_matrix(path):
    """Return (array, header-dict)."""
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith(_MAGIC):
            raise InvalidInputError(f"{path}: not a bass matrix file")
        meta = dict(tok.split("=", 1) for tok in first[len(_MAGIC):].split())
        arr = np.loadtxt(fh, delimiter="\t", ndmin=2)
    rows, cols = int(meta["rows"]), int(meta["cols"])
    if arr.shape != (rows, cols):
        raise InvalidInputError(f"{path}: data shape {arr.shape} != header ({rows},{cols})")
    return arr, meta


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command, config, seeds, inputs, outputs, wall_time):
    """Everything needed to reproduce the run bit-for-bit."""
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "config": config,
        "seeds": list(seeds),
        "input_digests": {str(p): sha256_file(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "versions": {
            "bass": _package_version(),
            "numpy": np.__version__,
            "scipy": _scipy_version(),
            "python": platform.python_version(),
        },
        "wall_time_s": wall_time,
        "created_unix": time.time(),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _package_version():
    from . import __version__

    return __version__


def _scipy_version():
    import scipy

    return scipy.__version__


# -- datasets ----------------------------------------------------------------

def write_dataset(out_dir, data: GroupedDataset, prefix: str = "block"):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for w, blk in enumerate(data.blocks):
        path = out_dir / f"{prefix}_{w + 1}.tsv"
        write_matrix(path, blk, name=f"{prefix}_{w + 1}", block=w + 1)
        paths.append(path)
    return paths


def read_dataset(paths) -> GroupedDataset:
    entries = []
    for path in paths:
        arr, meta = read_matrix(path)
        entries.append((int(meta.get("block", 0) if meta.get("block", "-") != "-" else 0), arr))
    entries.sort(key=lambda t: t[0])
    return assemble_dataset([arr for _, arr in entries])


# -- sim specs and ground truth ----------------------------------------------

def write_sim_spec(path, spec: SimSpec):
    lines = [
        "# bass-sim-spec",
        f"block_dims = {','.join(str(d) for d in spec.block_dims)}",
        f"k = {spec.k}",
        f"n = {spec.n}",
        f"seed = {spec.seed}",
        f"sparsity_frac = {spec.sparsity_frac!r}",
        f"loading_sd = {spec.loading_sd!r}",
        f"zero_clip = {spec.zero_clip!r}",
        f"noise_var_low = {spec.noise_var_range[0]!r}",
        f"noise_var_high = {spec.noise_var_range[1]!r}",
    ]
    for w, row in enumerate(spec.activity):
        lines.append(f"activity_{w + 1} = {','.join(row)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_sim_spec(path) -> SimSpec:
    kv = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidInputError(f"{path}: bad spec line {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        kv[key] = val
    try:
        dims = tuple(int(d) for d in kv["block_dims"].split(","))
        activity = tuple(
            kv[f"activity_{w + 1}"].replace(",", "") for w in range(len(dims))
        )
        return SimSpec(
            block_dims=dims,
            k=int(kv["k"]),
            activity=activity,
            n=int(kv["n"]),
            seed=int(kv.get("seed", 0)),
            sparsity_frac=float(kv.get("sparsity_frac", 0.9)),
            loading_sd=float(kv.get("loading_sd", 2.0)),
            zero_clip=float(kv.get("zero_clip", 0.5)),
            noise_var_range=(
                float(kv.get("noise_var_low", 0.5)),
                float(kv.get("noise_var_high", 1.5)),
            ),
        )
    except KeyError as exc:
        raise InvalidInputError(f"{path}: missing spec key {exc}") from exc


def write_truth(out_dir, truth: GroundTruth):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_matrix(out_dir / "truth_lambda.tsv", truth.Lambda_true, "truth_lambda")
    write_matrix(out_dir / "truth_x.tsv", truth.X_true, "truth_x")
    write_matrix(out_dir / "truth_sigma.tsv", truth.SigmaDiag_true[None, :], "truth_sigma")
    acts = ["".join(row) for row in truth.activity]
    (out_dir / "truth_activity.txt").write_text("\n".join(acts) + "\n")
    (out_dir / "truth_dims.json").write_text(
        json.dumps({"block_dims": [int(d) for d in truth.block_dims]}) + "\n"
    )


def read_truth(out_dir) -> GroundTruth:
    out_dir = Path(out_dir)
    lam, _ = read_matrix(out_dir / "truth_lambda.tsv")
    x, _ = read_matrix(out_dir / "truth_x.tsv")
    sigma, _ = read_matrix(out_dir / "truth_sigma.tsv")
    acts = (out_dir / "truth_activity.txt").read_text().split()
    dims = json.loads((out_dir / "truth_dims.json").read_text())["block_dims"]
    return GroundTruth(
        Lambda_true=lam,
        activity=np.array([list(row) for row in acts]),
        X_true=x,
        SigmaDiag_true=sigma[0],
        block_dims=dims,
    )


# -- fitted states -----------------------------------------------------------

_STATE_FIELDS = [
    ("lambda", "Lambda"),
    ("theta", "Theta"),
    ("delta", "Delta"),
    ("phi", "Phi"),
    ("tau", "Tau"),
    ("rho", "Z"),
]
_STATE_VECTORS = [("eta", "Eta"), ("gamma", "Gamma_"), ("pi", "Pi"), ("sigma", "SigmaDiag")]


def write_state(out_dir, state: ModelState):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for fname, attr in _STATE_FIELDS:
        write_matrix(out_dir / f"{fname}.tsv", getattr(state, attr), fname)
    for fname, attr in _STATE_VECTORS:
        write_matrix(out_dir / f"{fname}.tsv", getattr(state, attr)[None, :], fname)
    (out_dir / "hyper.json").write_text(json.dumps(vars(state.hyper)) + "\n")


def read_state(out_dir) -> ModelState:
    out_dir = Path(out_dir)
    arrays = {}
    for fname, attr in _STATE_FIELDS:
        arrays[attr], _ = read_matrix(out_dir / f"{fname}.tsv")
    for fname, attr in _STATE_VECTORS:
        mat, _ = read_matrix(out_dir / f"{fname}.tsv")
        arrays[attr] = mat[0]
    hyper = HyperParams(**json.loads((out_dir / "hyper.json").read_text()))
    return ModelState(hyper=hyper, **arrays)


def write_standardization(out_dir, mean: np.ndarray, sd: np.ndarray):
    """Per-feature statistics a standardized fit was trained under."""
    stats = np.vstack([mean.reshape(1, -1), sd.reshape(1, -1)])
    write_matrix(Path(out_dir) / "standardize.tsv", stats, "standardize")


def read_standardization(out_dir):
    """Return (mean, sd) as column vectors, or None if the fit was raw."""
    path = Path(out_dir) / "standardize.tsv"
    if not path.exists():
        return None
    stats, _ = read_matrix(path)
    return stats[0][:, None], stats[1][:, None]


def write_report(out_dir, report, engine: str, standardization=None):
    """Persist a FitReport: state plus traces plus a summary document."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_state(out_dir, report.state)
    if standardization is not None:
        write_standardization(out_dir, *standardization)
    trace = np.column_stack([
        np.arange(1, report.n_iter + 1),
        report.log_posterior_trace,
        report.factor_count_trace,
    ])
    write_matrix(out_dir / "trace.tsv", trace, "trace")
    summary = {
        "engine": engine,
        "initializer": report.initializer,
        "seed": int(report.seed),
        "iterations": int(report.n_iter),
        "wall_time_s": float(report.wall_time),
        "converged": bool(report.converged),
        "k_final": int(report.state.k),
        "log_posterior": float(report.final_log_posterior),
    }
    (out_dir / "report.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary
