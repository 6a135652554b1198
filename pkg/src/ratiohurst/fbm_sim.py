"""Exact simulation of fractional Brownian motion on the grid i/n, i = 0..n.

Two generators share one distributional contract:

* ``generate_cholesky`` factors the full covariance of the unit-grid path.
  Cubic cost, used as the small-n oracle.
* ``generate_circulant`` embeds the fGn autocovariance in a circulant matrix
  and samples it with FFTs (Davies-Harte). This is the production path.

Both sample the unit grid t = 1..n and rescale by n^{-H}, which by
self-similarity gives the law of (B_{i/n}).

Randomness comes from ``numpy.random.Generator(PCG64(seed))``; normals use
numpy's ziggurat sampler, so identical (H, n, seed, method) gives identical
output for a given numpy release. Replicate seeds are derived with
``derive_seed`` (a ``SeedSequence`` hash of the master seed and the index).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import DomainError, SimulationError

__all__ = [
    "Method",
    "FbmPath",
    "CovarianceOracle",
    "fbm_cov",
    "fgn_autocov",
    "generate_cholesky",
    "generate_circulant",
    "generate",
    "derive_seed",
    "write_path",
    "read_sidecar",
    "TOL_EIG",
]

# relative to the largest circulant eigenvalue
TOL_EIG = 1e-9


class Method(str, Enum):
    cholesky = "cholesky"
    circulant = "circulant"


def _check_hurst(hurst: float) -> float:
    hurst = float(hurst)
    if not 0.0 < hurst < 1.0:
        raise DomainError(f"hurst must lie in the open interval (0, 1), got {hurst}")
    return hurst


@dataclass(frozen=True)
class FbmPath:
    hurst: float
    n: int
    values: np.ndarray = field(repr=False)
    seed: int
    method: Method

    def __post_init__(self):
        _check_hurst(self.hurst)
        if len(self.values) != self.n + 1:
            raise ValueError(f"expected {self.n + 1} values, got {len(self.values)}")
        if self.values[0] != 0.0:
            raise ValueError("fBm path must start at 0")
        self.values.setflags(write=False)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) / self.n

    def metadata(self) -> dict:
        return {
            "hurst": self.hurst,
            "n": self.n,
            "seed": self.seed,
            "method": self.method.value,
        }


@dataclass(frozen=True)
class CovarianceOracle:
    hurst: float

    def __post_init__(self):
        _check_hurst(self.hurst)

    def __call__(self, t, s):
        return fbm_cov(self, t, s)

    def matrix(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        return fbm_cov(self, times[:, None], times[None, :])


def fbm_cov(oracle: CovarianceOracle | float, t, s):
    """Cov(B_t, B_s) = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2 for t, s >= 0."""
    hurst = oracle.hurst if isinstance(oracle, CovarianceOracle) else _check_hurst(oracle)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < 0):
        raise DomainError("fbm_cov is defined for non-negative times only")
    two_h = 2.0 * hurst
    out = 0.5 * (t**two_h + s**two_h - np.abs(t - s) ** two_h)
    return float(out) if out.ndim == 0 else out


def fgn_autocov(hurst: float, k):
    """Autocovariance of unit-step fBm increments at lag k >= 0."""
    hurst = _check_hurst(hurst)
    k = np.asarray(k, dtype=float)
    if np.any(k < 0):
        raise DomainError("lag must be non-negative")
    two_h = 2.0 * hurst
    out = 0.5 * ((k + 1) ** two_h - 2.0 * k**two_h + np.abs(k - 1) ** two_h)
    return float(out) if out.ndim == 0 else out


def derive_seed(master_seed: int, *keys: int) -> int:
    """Seed for the replicate identified by ``keys`` under ``master_seed``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _check_n(n: int) -> int:
    if int(n) != n or n < 4:
        raise DomainError(f"n must be an integer >= 4, got {n}")
    return int(n)


@lru_cache(maxsize=16)
def _cholesky_factor(hurst: float, n: int) -> np.ndarray:
    grid = np.arange(1, n + 1, dtype=float)
    cov = CovarianceOracle(hurst).matrix(grid)
    try:
        factor = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        w = np.linalg.eigvalsh(cov)
        raise SimulationError(
            f"fBm covariance is not positive definite (H={hurst}, n={n}, "
            f"min eigenvalue {w[0]:.3e})"
        ) from exc
    factor.setflags(write=False)
    return factor


def generate_cholesky(hurst: float, n: int, seed: int) -> FbmPath:
    hurst = _check_hurst(hurst)
    n = _check_n(n)
    factor = _cholesky_factor(hurst, n)
    z = np.random.default_rng(seed).standard_normal(n)
    values = np.empty(n + 1)
    values[0] = 0.0
    values[1:] = (factor @ z) * float(n) ** -hurst
    return FbmPath(hurst, n, values, int(seed), Method.cholesky)


@lru_cache(maxsize=32)
def _circulant_sqrt_eigs(hurst: float, n: int) -> np.ndarray:
    gamma = fgn_autocov(hurst, np.arange(n + 1))
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eigs = np.fft.fft(row).real
    tol = TOL_EIG * eigs.max()
    worst = eigs.min()
    if worst < -tol:
        raise SimulationError(
            f"circulant embedding has negative eigenvalue {worst:.3e} "
            f"(tolerance {-tol:.3e}) for H={hurst}, n={n}"
        )
    eigs = np.clip(eigs, 0.0, None)
    out = np.sqrt(eigs / len(row))
    out.setflags(write=False)
    return out


def circulant_eigenvalues(hurst: float, n: int) -> np.ndarray:
    """Eigenvalues of the size-2n circulant embedding of fGn (unclipped)."""
    hurst = _check_hurst(hurst)
    gamma = fgn_autocov(hurst, np.arange(_check_n(n) + 1))
    return np.fft.fft(np.concatenate([gamma, gamma[-2:0:-1]])).real


def generate_circulant(hurst: float, n: int, seed: int) -> FbmPath:
    hurst = _check_hurst(hurst)
    n = _check_n(n)
    scale = _circulant_sqrt_eigs(hurst, n)
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)
    # real part of F diag(sqrt(lambda/2n)) xi has covariance equal to the circulant
    noise = np.fft.fft(scale * xi).real[:n]
    values = np.empty(n + 1)
    values[0] = 0.0
    np.cumsum(noise, out=values[1:])
    values[1:] *= float(n) ** -hurst
    return FbmPath(hurst, n, values, int(seed), Method.circulant)


def generate(hurst: float, n: int, seed: int, method: Method | str = Method.circulant) -> FbmPath:
    method = Method(method)
    if method is Method.cholesky:
        return generate_cholesky(hurst, n, seed)
    return generate_circulant(hurst, n, seed)


def write_path(path: FbmPath, csv_path: str | Path) -> Path:
    """Write ``t,value`` CSV with 17 significant digits plus a JSON sidecar.

    Returns the sidecar path (``<csv stem>.json`` next to the CSV).
    """
    csv_path = Path(csv_path)
    lines = ["t,value"]
    lines.extend(f"{t:.17g},{v:.17g}" for t, v in zip(path.times, path.values))
    csv_path.write_text("\n".join(lines) + "\n")
    sidecar = csv_path.with_suffix(".json")
    sidecar.write_text(json.dumps(path.metadata(), indent=2, sort_keys=True) + "\n")
    return sidecar


def read_sidecar(csv_path: str | Path) -> dict:
    return json.loads(Path(csv_path).with_suffix(".json").read_text())
