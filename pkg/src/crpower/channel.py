"""Seeded fading-ensemble generation, oracle labeling, and dataset file I/O.

Channel power gains are exponential (Rayleigh amplitude fading) and drawn via
the inverse CDF from a counter-based Philox generator, so identical seeds give
bit-identical ensembles regardless of how the work is split.
"""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .model import ChannelRealization, DualState, PolicyKind, SystemParams, power_array
from .solver import SolverOptions, solve_ee, solve_se_duals

MAGIC = b"CRDS"
FORMAT_VERSION = 1
RNG_ALGORITHM = "philox4x64-10"

_KIND_BYTE = {PolicyKind.SE: 0, PolicyKind.EE: 1}
_BYTE_KIND = {v: k for k, v in _KIND_BYTE.items()}

# magic, version u8, kind u8, rows u64, 6 system params f64, 3 duals f64, seed u64
_HEADER = struct.Struct("<4sBBQ6d3dQ")


class DatasetFormatError(ValueError):
    """Malformed, truncated, or version-mismatched dataset file."""


class SolverConvergenceError(RuntimeError):
    """Labeling solve did not converge within its iteration caps."""


@dataclass(frozen=True)
class ChannelDistribution:
    mean_ss: float = 1.0
    mean_sp: float = 0.5
    mean_ps: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.mean_ss <= 0 or self.mean_sp <= 0 or self.mean_ps <= 0:
            raise ValueError("distribution means must be > 0")


@dataclass
class Dataset:
    inputs: np.ndarray   # (n, 3) gains: g_ss, g_sp, h_ps
    targets: np.ndarray  # (n,) oracle-optimal powers
    params: SystemParams
    kind: PolicyKind
    duals: DualState     # exact duals used for labeling
    seed: int
    created_at: float | None = field(default=None, compare=False)

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        self.targets = np.ascontiguousarray(self.targets, dtype=np.float64)
        if self.inputs.ndim != 2 or self.inputs.shape[1] != 3:
            raise ValueError("inputs must have shape (n, 3)")
        if self.targets.shape != (self.inputs.shape[0],):
            raise ValueError("targets row count must match inputs")
        if np.any(self.targets < 0):
            raise ValueError("targets must be >= 0")

    def __len__(self):
        return self.inputs.shape[0]


def sample_gain_matrix(dist: ChannelDistribution, n: int) -> np.ndarray:
    """(n, 3) exponential gains via inverse CDF of Philox uniforms."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.Generator(np.random.Philox(dist.seed))
    u = rng.random((n, 3))
    means = np.array([dist.mean_ss, dist.mean_sp, dist.mean_ps])
    return -means * np.log1p(-u)


def sample_ensemble(dist: ChannelDistribution, n: int):
    gains = sample_gain_matrix(dist, n)
    return [ChannelRealization(g_ss=row[0], g_sp=row[1], h_ps=row[2]) for row in gains]


def label_gains(gains: np.ndarray, duals: DualState, kind: PolicyKind,
                params: SystemParams) -> np.ndarray:
    """Closed-form optimal power for every row of a gain matrix."""
    eta = duals.eta if kind is PolicyKind.EE else 0.0
    return power_array(gains[:, 0], gains[:, 1], gains[:, 2],
                       duals.tau, duals.mu, eta, params)


def generate_dataset(dist: ChannelDistribution, n: int, params: SystemParams,
                     kind: PolicyKind,
                     opts: SolverOptions = SolverOptions()) -> Dataset:
    """Sample an ensemble, converge the duals once, label every realization."""
    ensemble = sample_ensemble(dist, n)
    solve = solve_se_duals if kind is PolicyKind.SE else solve_ee
    report = solve(ensemble, params, opts)
    if not report.converged:
        raise SolverConvergenceError(
            f"labeling solve did not converge (residuals at avg_power="
            f"{report.avg_power:.6g}, avg_interference={report.avg_interference:.6g})")
    gains = sample_gain_matrix(dist, n)
    targets = label_gains(gains, report.duals, kind, params)
    return Dataset(inputs=gains, targets=targets, params=params, kind=kind,
                   duals=report.duals, seed=dist.seed, created_at=time.time())


def write_dataset(ds: Dataset, path):
    p = ds.params
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, _KIND_BYTE[ds.kind], len(ds),
        p.p_p, p.noise_var, p.zeta, p.p_c, p.p_th, p.p_in,
        ds.duals.tau, ds.duals.mu, ds.duals.eta, ds.seed)
    rows = np.column_stack([ds.inputs, ds.targets]).astype("<f8")
    with open(path, "wb") as f:
        f.write(header)
        f.write(rows.tobytes())


def read_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError("file shorter than header")
    (magic, version, kind_byte, n, p_p, noise_var, zeta, p_c, p_th, p_in,
     tau, mu, eta, seed) = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported format version {version}")
    if kind_byte not in _BYTE_KIND:
        raise DatasetFormatError(f"unknown policy-kind byte {kind_byte}")
    body = raw[_HEADER.size:]
    expected = n * 4 * 8
    if len(body) != expected:
        raise DatasetFormatError(
            f"row-count mismatch: header says {n} rows ({expected} bytes), "
            f"found {len(body)} bytes")
    rows = np.frombuffer(body, dtype="<f8").reshape(n, 4)
    return Dataset(
        inputs=rows[:, :3].copy(),
        targets=rows[:, 3].copy(),
        params=SystemParams(p_p=p_p, noise_var=noise_var, zeta=zeta,
                            p_c=p_c, p_th=p_th, p_in=p_in),
        kind=_BYTE_KIND[kind_byte],
        duals=DualState(tau=tau, mu=mu, eta=eta),
        seed=seed,
    )


def export_csv(ds: Dataset, path):
    """Interop export; the binary format remains the source of truth."""
    with open(path, "w") as f:
        f.write("g_ss,g_sp,h_ps,p_opt\n")
        for row, t in zip(ds.inputs, ds.targets):
            f.write(f"{float(row[0])!r},{float(row[1])!r},"
                    f"{float(row[2])!r},{float(t)!r}\n")


def dataset_checksum(ds: Dataset) -> str:
    h = hashlib.sha256()
    h.update(ds.inputs.tobytes())
    h.update(ds.targets.tobytes())
    return h.hexdigest()
