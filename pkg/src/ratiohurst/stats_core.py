"""Second-order differences, their ratios, and the sample mean of h over the ratios.

For an fBm path the ratio r_i = d_{i+1}/d_i of consecutive second differences
is a ratio of two standard-variance Gaussians with correlation rho(H), so it
has the Cauchy law with location rho and scale sqrt(1 - rho^2). The built-in
h-functions carry closed-form expectations under that law, written as
functions of rho.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, ZeroDifferenceError
from .fbm_sim import FbmPath

__all__ = [
    "SecondDiffs",
    "RatioSeq",
    "HFunction",
    "second_differences",
    "ratios",
    "h_bar",
    "builtin_sin",
    "builtin_ir",
    "custom_h",
    "get_h",
    "BUILTIN_IDS",
    "read_trajectory",
]


@dataclass(frozen=True)
class SecondDiffs:
    values: np.ndarray
    n: int


@dataclass(frozen=True)
class RatioSeq:
    values: np.ndarray

    @property
    def count(self) -> int:
        return len(self.values)


def second_differences(path) -> SecondDiffs:
    """d_i = x_{i+1} - 2 x_i + x_{i-1}, i = 1..n-1, from n+1 samples."""
    x = path.values if isinstance(path, FbmPath) else np.asarray(path, dtype=float)
    if x.ndim != 1 or len(x) < 4:
        raise DomainError(f"need a 1-d trajectory of at least 4 samples, got shape {x.shape}")
    d = x[2:] - 2.0 * x[1:-1] + x[:-2]
    return SecondDiffs(d, len(x) - 1)


def ratios(diffs: SecondDiffs) -> RatioSeq:
    d = diffs.values
    if len(d) < 2:
        raise DomainError("need at least two second differences to form a ratio")
    zero = np.flatnonzero(d == 0.0)
    if zero.size:
        raise ZeroDifferenceError(int(zero[0]) + 1)
    return RatioSeq(d[1:] / d[:-1])


@dataclass(frozen=True)
class HFunction:
    """An admissible h together with what the estimator needs to invert it.

    ``mean_of_rho`` and ``dmean_drho`` give E h(rho + sqrt(1-rho^2) K) and its
    rho-derivative in closed form. When absent the estimator falls back to
    Cauchy quadrature and finite differences. ``bounds`` is the closed range
    of h if known.
    """

    id: str
    func: Callable[[np.ndarray], np.ndarray]
    mean_of_rho: Optional[Callable[[float], float]] = None
    dmean_drho: Optional[Callable[[float], float]] = None
    second_moment_of_rho: Optional[Callable[[float], float]] = None
    bounds: Optional[tuple[float, float]] = None

    def __call__(self, x):
        return self.func(x)

    @property
    def mean_strategy(self) -> str:
        return "closed_form" if self.mean_of_rho is not None else "cauchy_quadrature"

    @property
    def derivative_strategy(self) -> str:
        return "closed_form" if self.dmean_drho is not None else "finite_difference"


def h_bar(r: RatioSeq, h: HFunction) -> float:
    if r.count < 1:
        raise DomainError("empty ratio sequence")
    return float(np.mean(h(r.values)))


def _scale(rho: float) -> float:
    return np.sqrt(1.0 - rho * rho)


def _sin_mean(rho):
    # E sin(rho + sK) = sin(rho) * E cos(sK) = sin(rho) exp(-s)
    return np.sin(rho) * np.exp(-_scale(rho))


def _sin_dmean(rho):
    s = _scale(rho)
    return np.exp(-s) * (np.cos(rho) + np.sin(rho) * rho / s)


def _sin_second_moment(rho):
    return 0.5 * (1.0 - np.cos(2.0 * rho) * np.exp(-2.0 * _scale(rho)))


def builtin_sin() -> HFunction:
    return HFunction(
        id="sin",
        func=np.sin,
        mean_of_rho=_sin_mean,
        dmean_drho=_sin_dmean,
        second_moment_of_rho=_sin_second_moment,
        bounds=(-1.0, 1.0),
    )


def _ir(x):
    return np.abs(1.0 + x) / (1.0 + np.abs(x))


def _ir_mean(rho):
    return (
        np.arccos(-rho) + np.sqrt((1.0 + rho) / (1.0 - rho)) * np.log(2.0 / (1.0 + rho))
    ) / np.pi


def _ir_dmean(rho):
    # the arccos term cancels against the derivative of the log factor
    return np.log(2.0 / (1.0 + rho)) / ((1.0 - rho) ** 1.5 * np.sqrt(1.0 + rho)) / np.pi


def builtin_ir() -> HFunction:
    return HFunction(
        id="ir",
        func=_ir,
        mean_of_rho=_ir_mean,
        dmean_drho=_ir_dmean,
        bounds=(0.0, 1.0),
    )


BUILTIN_IDS = ("sin", "ir")


def get_h(h_id: str) -> HFunction:
    if h_id == "sin":
        return builtin_sin()
    if h_id == "ir":
        return builtin_ir()
    raise KeyError(f"unknown h-function {h_id!r}; built-ins are {', '.join(BUILTIN_IDS)}")


def custom_h(
    func: Callable[[np.ndarray], np.ndarray],
    name: str = "custom",
    mean_of_rho: Optional[Callable[[float], float]] = None,
    dmean_drho: Optional[Callable[[float], float]] = None,
    bounds: Optional[tuple[float, float]] = None,
    validate: bool = True,
) -> HFunction:
    """Register a user h-function.

    With ``validate`` the finiteness of E h^2 and the monotonicity of the mean
    map are checked numerically on the standard 199-point H grid; see
    ``estimator.mean_map`` for the failure modes.
    """
    h = HFunction(
        id=name,
        func=func,
        mean_of_rho=mean_of_rho,
        dmean_drho=dmean_drho,
        bounds=bounds,
    )
    if validate:
        from .estimator import mean_map

        mean_map(h)
    return h


def read_trajectory(path, column=None) -> np.ndarray:
    """Load a trajectory from CSV: one column, or several with an optional header.

    ``column`` is a header name or a 0-based index. The default is the
    ``value`` column when a header names one, otherwise the last column.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: no data")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    if column is None:
        idx = header.index("value") if header and "value" in header else len(rows[0]) - 1
    elif isinstance(column, int) or str(column).lstrip("-").isdigit():
        idx = int(column)
    else:
        if not header or column not in header:
            raise ValueError(f"{path}: no column named {column!r} (header: {header})")
        idx = header.index(column)
    try:
        return np.array([float(r[idx]) for r in rows])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}: cannot read column {column if column is not None else idx}: {exc}") from exc
