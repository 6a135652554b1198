"""From the sample mean of h(r_i) to a Hurst estimate with a confidence interval.

The lag-k correlation of unit-grid second differences is ``rho_k``; its lag-1
value is ``rho``. The mean map m(H) = E h(rho(H) + sqrt(1 - rho(H)^2) K), K
standard Cauchy, is inverted by bisection. Asymptotic variance follows the
long-run variance of h(R_i) and the delta method:

    sigma_f2 = Var h(R_1) + 2 sum_{k>=1} Cov(h(R_1), h(R_{1+k}))
    sigma_h2 = sigma_f2 / m'(H)^2
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Protocol

import numpy as np
from scipy import optimize, special, stats
from scipy.integrate import IntegrationWarning, quad

from .errors import ConditionError, DomainError, QuadratureError, SimulationError
from .stats_core import HFunction, get_h, h_bar, ratios, second_differences

__all__ = [
    "RHO_LOW",
    "RHO_HIGH",
    "H_LOW",
    "H_HIGH",
    "rho",
    "rho_prime",
    "rho_k",
    "cauchy_expectation",
    "MeanMap",
    "mean_map",
    "invert_mean_map",
    "VarianceModel",
    "sigma_f2",
    "VarianceConfig",
    "VarianceTable",
    "EstimateResult",
    "estimate",
    "normal_quantile",
]

RHO_LOW = -2.0 / 3.0
RHO_HIGH = -2.0 + 9.0 / 8.0 * math.log(9.0) / math.log(4.0)

# working domain; rho has removable singularities at 0 and 1
H_LOW = 1e-6
H_HIGH = 1.0 - 1e-6

DEFAULT_VARIANCE_SEED = 20160301
QUAD_TOL = 1e-10


def _check_h(hurst) -> np.ndarray:
    h = np.asarray(hurst, dtype=float)
    if np.any(~((h > 0.0) & (h < 1.0))):
        raise DomainError(f"H must lie in (0, 1), got {hurst}")
    return h


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def rho(hurst):
    """Lag-1 correlation of second differences of fBm.

    Evaluated in the form (9 expm1(u ln 9) - 16 expm1(u ln 4)) / (8 expm1(u ln 4))
    with u = H - 1, which is free of cancellation near H = 1.
    """
    u = _check_h(hurst) - 1.0
    e4 = np.expm1(u * math.log(4.0))
    e9 = np.expm1(u * math.log(9.0))
    return _out((9.0 * e9 - 16.0 * e4) / (8.0 * e4))


def rho_prime(hurst):
    x = _check_h(hurst)
    num = -(9.0**x) * 4.0 * math.log(9.0) + 4.0**x * 9.0 * math.log(4.0) + 36.0**x * math.log(9.0 / 4.0)
    return _out(0.5 * num / (4.0 - 4.0**x) ** 2)


_SERIES_FROM = 16
_SERIES_TERMS = 40


def rho_k(hurst, k):
    """Lag-k correlation of unit-grid second differences.

    Fourth difference of |j|^{2H} around k, normalized by the variance 4 - 4^H.
    For k >= 16 the five-term sum cancels catastrophically, so it is replaced by
    its expansion k^{2H} sum_m binom(2H, m) (8 - 2^{m+1}) k^{-m} over even m >= 4.
    """
    hurst = float(_check_h(hurst))
    k = np.asarray(k, dtype=float)
    if np.any(k < 0) or np.any(k != np.round(k)):
        raise DomainError("lag must be a non-negative integer")
    two_h = 2.0 * hurst
    out = np.empty_like(k)
    near = k < _SERIES_FROM
    kn = k[near]
    out[near] = (
        -np.abs(kn - 2) ** two_h
        + 4.0 * np.abs(kn - 1) ** two_h
        - 6.0 * kn**two_h
        + 4.0 * (kn + 1) ** two_h
        - (kn + 2) ** two_h
    )
    kf = k[~near]
    if kf.size:
        m = np.arange(4, 4 + 2 * _SERIES_TERMS, 2, dtype=float)
        coef = special.binom(two_h, m) * (8.0 - 2.0 ** (m + 1))
        out[~near] = kf**two_h * (coef[None, :] * kf[:, None] ** -m[None, :]).sum(axis=1)
    out /= 2.0 * (4.0 - 4.0**hurst)
    return _out(out)


def cauchy_expectation(func: Callable, loc: float, scale: float = 1.0, tol: float = QUAD_TOL) -> float:
    """E func(loc + scale*K) by adaptive quadrature in theta, x = loc + scale*tan(theta)."""
    def integrand(theta):
        return func(loc + scale * math.tan(theta))

    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            val, err = quad(integrand, -math.pi / 2, math.pi / 2, epsabs=tol * math.pi, epsrel=0.0, limit=500)
        except IntegrationWarning as exc:
            val, err = quad(integrand, -math.pi / 2, math.pi / 2, epsabs=tol * math.pi, epsrel=0.0, limit=500, full_output=1)[:2]
            raise QuadratureError(
                f"Cauchy quadrature did not converge at loc={loc}: achieved error {err / math.pi:.2e}, "
                f"requested {tol:.1e}"
            ) from exc
    if not math.isfinite(val):
        raise QuadratureError(f"Cauchy quadrature returned {val} at loc={loc}")
    return val / math.pi


def ratio_scale(r):
    return np.sqrt(1.0 - np.asarray(r) ** 2)


@dataclass(frozen=True)
class MeanMap:
    h_id: str
    domain: tuple[float, float]
    eval: Callable[[float], float] = field(repr=False)
    deriv: Callable[[float], float] = field(repr=False)
    increasing: bool = True

    def __call__(self, hurst):
        return self.eval(hurst)

    @property
    def range(self) -> tuple[float, float]:
        a, b = self.eval(self.domain[0]), self.eval(self.domain[1])
        return (min(a, b), max(a, b))


GRID_199 = np.linspace(0.005, 0.995, 199)


@lru_cache(maxsize=64)
def mean_map(h: HFunction | str, rho_shift: float = 0.0, allow_partial: bool = False) -> MeanMap:
    """Mean map H -> E h(R_1) for an h-function.

    ``rho_shift`` perturbs rho(H) and exists only as a negative-control hook.
    For h without a closed form, the map is evaluated by quadrature, and
    finiteness of E h^2 and strict monotonicity are checked on a 199-point grid.
    """
    if isinstance(h, str):
        h = get_h(h)

    def rho_of(hh):
        return np.clip(rho(hh) + rho_shift, -1 + 1e-12, 1 - 1e-12)

    if h.mean_of_rho is not None:
        def m(hh):
            return _out(h.mean_of_rho(rho_of(hh)))
    else:
        def m(hh):
            r = float(rho_of(hh))
            return cauchy_expectation(h.func, r, float(ratio_scale(r)))

    if h.dmean_drho is not None:
        def dm(hh):
            return _out(h.dmean_drho(rho_of(hh)) * rho_prime(hh))
    else:
        def dm(hh, step=1e-5):
            hh = float(np.clip(hh, H_LOW + step, H_HIGH - step))
            return (m(hh + step) - m(hh - step)) / (2 * step)

    domain = (H_LOW, H_HIGH)
    if h.mean_of_rho is None:
        domain = _check_custom(h, m, rho_of, allow_partial)
    increasing = m(domain[1]) > m(domain[0])
    return MeanMap(h.id, domain, m, dm, increasing)


def _check_custom(h, m, rho_of, allow_partial):
    for hh in GRID_199:
        r = float(rho_of(hh))
        try:
            cauchy_expectation(lambda x: h.func(x) ** 2, r, float(ratio_scale(r)), tol=1e-8)
        except QuadratureError as exc:
            raise ConditionError(
                f"condition (i) fails for h={h.id!r}: E h^2 not finite at H={hh:.3f} ({exc})"
            ) from exc
    vals = np.array([m(hh) for hh in GRID_199])
    sign = np.sign(np.diff(vals))
    if np.all(sign > 0) or np.all(sign < 0):
        return (H_LOW, H_HIGH)
    # longest run of constant non-zero sign
    best, start = (0, 0), 0
    for i in range(1, len(sign) + 1):
        if i == len(sign) or sign[i] != sign[start] or sign[i] == 0:
            if sign[start] != 0 and i - start > best[1] - best[0]:
                best = (start, i)
            start = i
    lo, hi = GRID_199[best[0]], GRID_199[best[1]]
    if not allow_partial or best[1] - best[0] < 2:
        raise ConditionError(
            f"condition (ii) fails for h={h.id!r}: mean map not strictly monotone on (0, 1); "
            f"longest monotone sub-interval is [{lo:.3f}, {hi:.3f}]"
        )
    warnings.warn(f"mean map of {h.id!r} restricted to [{lo:.3f}, {hi:.3f}]")
    return (float(lo), float(hi))


def invert_mean_map(mm: MeanMap, y: float) -> tuple[float, bool]:
    """Solve m(H) = y by bisection to |dH| <= 1e-10; clamp to the domain if y is out of range."""
    y = float(y)
    if not math.isfinite(y):
        raise DomainError(f"cannot invert non-finite value {y}")
    lo, hi = mm.domain
    m_lo, m_hi = mm(lo), mm(hi)
    if not mm.increasing:
        if y >= m_lo:
            return lo, y > m_lo
        if y <= m_hi:
            return hi, y < m_hi
    else:
        if y <= m_lo:
            return lo, y < m_lo
        if y >= m_hi:
            return hi, y > m_hi
    root = optimize.bisect(lambda x: mm(x) - y, lo, hi, xtol=1e-10, rtol=4 * np.finfo(float).eps, maxiter=200)
    return float(root), False


@dataclass(frozen=True)
class VarianceModel:
    h_id: str
    hurst: float
    sigma_f2: float
    var_term: float
    m_prime: float
    sigma_h2: float
    k_max: int
    mc_samples: int
    mc_stderr: float
    tail_bound: float
    expansion_from: int
    expansion_bound: float
    seed: int
    lag_covs: np.ndarray = field(repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("lag_covs")
        return d


def _sym_sqrt(mat: np.ndarray, what: str) -> np.ndarray:
    w, v = np.linalg.eigh(mat)
    if w[0] < -1e-10 * max(w[-1], 1.0):
        raise SimulationError(f"{what} is not positive semi-definite (min eigenvalue {w[0]:.3e})")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _canonical_corr(hurst: float, ks: np.ndarray) -> np.ndarray:
    """Largest canonical correlation between (X_1, X_2) and (X_{1+k}, X_{2+k})."""
    r1 = rho_k(hurst, 1)
    c11 = np.array([[1.0, r1], [r1, 1.0]])
    w = _sym_sqrt(np.linalg.inv(c11), "inverse lag-0 block")
    rk, rp, rm = rho_k(hurst, ks), rho_k(hurst, ks + 1), rho_k(hurst, ks - 1)
    out = np.empty(len(ks))
    for i in range(len(ks)):
        c12 = np.array([[rk[i], rp[i]], [rm[i], rk[i]]])
        out[i] = np.linalg.norm(w @ c12 @ w, 2)
    return out


def _tail_bound(hurst: float, k_max: int, var_term: float) -> float:
    # h(X_2/X_1) is even in (X_1, X_2), so its Hermite rank is >= 2 and
    # |Cov| <= r_k^2 Var by the Gaussian (Gebelein) correlation inequality.
    ks = np.arange(k_max + 1, 20 * k_max + 1, dtype=float)
    r2 = _canonical_corr(hurst, ks) ** 2
    exponent = 8.0 - 4.0 * hurst
    rest = r2[-1] * ks[-1] / (exponent - 1.0)
    return float(2.0 * var_term * (r2.sum() + rest))


_CHUNK = 1 << 14
# lags whose canonical correlation is below this use the second-order Hermite term
R_CUT = 0.02


def sigma_f2(
    h: HFunction | str,
    hurst: float,
    k_max: int = 200,
    mc_samples: int = 100_000,
    seed: int = DEFAULT_VARIANCE_SEED,
) -> VarianceModel:
    """Long-run variance of h(R_i) with the delta-method variance of the estimate.

    Var h(R_1) comes from one-dimensional quadrature or a closed form.

    Strongly correlated lags (canonical correlation r_k >= R_CUT) are Monte
    Carlo averages over exact draws of (X_1, X_2, X_{1+k}, X_{2+k}). The second
    pair is drawn as A (X_1, X_2) + S^{1/2} W, and the same W feeds an
    independent copy C^{1/2} W, so

        Cov(h(R_1), h(R_{1+k})) = E[h(R_1) (h(R_{1+k}) - h(R'_{1+k}))].

    h(X_2/X_1) is even in (X_1, X_2), hence of Hermite rank >= 2. For weakly
    correlated lags the covariance is (1/2) tr(B G_k B G_k^T) up to an error of
    at most r_k^4 Var h(R_1), where G_k is the whitened cross-covariance and B
    the second-order Hermite coefficients, estimated from the same draws.
    ``mc_stderr`` is the standard error of the lag sum (linearized in B).
    """
    if isinstance(h, str):
        h = get_h(h)
    hurst = float(_check_h(hurst))
    if k_max < 1:
        raise DomainError("k_max must be >= 1")
    if mc_samples < 2:
        raise DomainError("mc_samples must be >= 2")

    r1 = rho(hurst)
    s1 = float(ratio_scale(r1))
    if h.mean_of_rho is not None:
        mean = float(h.mean_of_rho(r1))
    else:
        mean = cauchy_expectation(h.func, r1, s1)
    if h.second_moment_of_rho is not None:
        second = float(h.second_moment_of_rho(r1))
    else:
        second = cauchy_expectation(lambda x: h.func(x) ** 2, r1, s1)
    var_term = max(second - mean * mean, 0.0)

    ks = np.arange(1, k_max + 1, dtype=float)
    rk, rp, rm = rho_k(hurst, ks), rho_k(hurst, ks + 1), rho_k(hurst, ks - 1)
    c11 = np.array([[1.0, r1], [r1, 1.0]])
    c11_inv = np.linalg.inv(c11)
    c11_half = _sym_sqrt(c11, "lag-0 covariance")
    whiten = _sym_sqrt(c11_inv, "inverse lag-0 covariance")
    canon = _canonical_corr(hurst, ks)
    # lags are simulated up to the last one with strong correlation
    strong = np.flatnonzero(canon >= R_CUT)
    n_mc = int(strong[-1]) + 1 if strong.size else 0

    gains, noise, cross = [], [], []
    for i in range(k_max):
        c12 = np.array([[rk[i], rp[i]], [rm[i], rk[i]]])
        if i < n_mc:
            _sym_sqrt(np.block([[c11, c12], [c12.T, c11]]), f"4x4 covariance at lag {i + 1}")
            a = c12.T @ c11_inv
            gains.append(a)
            noise.append(_sym_sqrt(c11 - a @ c12, f"conditional covariance at lag {i + 1}"))
        else:
            cross.append(whiten @ c12 @ whiten)

    rng = np.random.default_rng(seed)
    lag_sum = np.zeros(n_mc)
    per_sample = np.empty(mc_samples)
    hermite = np.empty((mc_samples, 3))
    done = 0
    while done < mc_samples:
        c = min(_CHUNK, mc_samples - done)
        u = rng.standard_normal((c, 2))
        w = rng.standard_normal((c, 2))
        x = u @ c11_half.T
        base = h.func(x[:, 1] / x[:, 0])
        sl = slice(done, done + c)
        # centring leaves the Hermite coefficients unchanged and removes the constant part of h
        hc = base - mean
        hermite[sl, 0] = hc * (u[:, 0] ** 2 - 1.0)
        hermite[sl, 1] = hc * (u[:, 1] ** 2 - 1.0)
        hermite[sl, 2] = hc * u[:, 0] * u[:, 1]
        acc = np.zeros(c)
        if n_mc:
            yt = w @ c11_half.T
            indep = h.func(yt[:, 1] / yt[:, 0])
            for i in range(n_mc):
                y = x @ gains[i].T + w @ noise[i].T
                g = base * (h.func(y[:, 1] / y[:, 0]) - indep)
                lag_sum[i] += g.sum()
                acc += g
        per_sample[sl] = acc
        done += c

    coef = hermite.mean(axis=0)
    b = np.array([[coef[0], coef[2]], [coef[2], coef[1]]])
    weak = np.array([0.5 * np.trace(b @ g @ b @ g.T) for g in cross])
    grad = sum((0.5 * (g @ b @ g.T + g.T @ b @ g) for g in cross), np.zeros((2, 2)))
    # d/dB of sum_k T_k, contracted with per-sample Hermite terms
    lin = hermite[:, 0] * grad[0, 0] + hermite[:, 1] * grad[1, 1] + 2.0 * hermite[:, 2] * grad[0, 1]
    spread = per_sample + lin
    mc_stderr = 2.0 * float(np.std(spread, ddof=1)) / math.sqrt(mc_samples)

    lag_covs = np.concatenate([lag_sum / mc_samples, weak])
    sf2 = var_term + 2.0 * float(lag_covs.sum())
    remainder = 2.0 * var_term * float((canon[n_mc:] ** 4).sum())

    mm = mean_map(h)
    m_prime = float(mm.deriv(hurst))
    if m_prime == 0.0:
        raise ConditionError(f"condition (ii) fails: m'(H) = 0 at H={hurst} for h={h.id!r}")
    return VarianceModel(
        h_id=h.id,
        hurst=hurst,
        sigma_f2=sf2,
        var_term=float(var_term),
        m_prime=m_prime,
        sigma_h2=float(sf2 / m_prime**2),
        k_max=int(k_max),
        mc_samples=int(mc_samples),
        mc_stderr=mc_stderr,
        tail_bound=_tail_bound(hurst, k_max, var_term),
        expansion_from=n_mc + 1,
        expansion_bound=remainder,
        seed=int(seed),
        lag_covs=lag_covs,
    )


class PlugInVariance(Protocol):
    def sigma_h2(self, h: HFunction, hurst: float) -> float: ...


@dataclass(frozen=True)
class VarianceConfig:
    """Compute sigma_h2 afresh at each requested H."""

    k_max: int = 200
    mc_samples: int = 100_000
    seed: int = DEFAULT_VARIANCE_SEED

    def model(self, h: HFunction, hurst: float) -> VarianceModel:
        return _cached_model(h, float(hurst), self.k_max, self.mc_samples, self.seed)

    def sigma_h2(self, h: HFunction, hurst: float) -> float:
        return self.model(h, hurst).sigma_h2


@lru_cache(maxsize=512)
def _cached_model(h, hurst, k_max, mc_samples, seed):
    return sigma_f2(h, hurst, k_max, mc_samples, seed)


class VarianceTable:
    """sigma_h2 interpolated from lazily computed nodes on a uniform H grid.

    Used by the Monte Carlo harness, where thousands of plug-in evaluations
    would otherwise each need a full Monte Carlo run. Interpolation is cubic
    in log sigma_h2 over the four surrounding nodes; H outside
    [first node, last node] uses the end node.
    """

    def __init__(self, config: VarianceConfig = VarianceConfig(), step: float = 0.01):
        self.config = config
        self.step = step
        self.nodes = np.round(np.arange(step, 1.0 - step / 2, step), 12)
        self._cache: dict[tuple[str, int], float] = {}

    def _node(self, h: HFunction, i: int) -> float:
        key = (h.id, i)
        if key not in self._cache:
            self._cache[key] = math.log(self.config.sigma_h2(h, float(self.nodes[i])))
        return self._cache[key]

    def sigma_h2(self, h: HFunction, hurst: float) -> float:
        last = len(self.nodes) - 1
        pos = (float(np.clip(hurst, self.nodes[0], self.nodes[-1])) - self.nodes[0]) / self.step
        i0 = int(np.clip(math.floor(pos) - 1, 0, last - 3))
        idx = np.arange(i0, i0 + 4)
        vals = np.array([self._node(h, i) for i in idx])
        w = np.array([
            np.prod([(pos - idx[j]) / (idx[i] - idx[j]) for j in range(4) if j != i])
            for i in range(4)
        ])
        return float(math.exp(w @ vals))


def normal_quantile(p: float) -> float:
    return float(stats.norm.ppf(p))


@dataclass(frozen=True)
class EstimateResult:
    h_hat: float
    h_bar: float
    std_error: float
    ci_low: float
    ci_high: float
    alpha: float
    n: int
    n_ratios: int
    clamped: bool
    h_id: str
    diagnostics: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "h_hat": self.h_hat,
            "h_bar": self.h_bar,
            "std_error": self.std_error,
            "ci": [self.ci_low, self.ci_high],
            "alpha": self.alpha,
            "n": self.n,
            "n_ratios": self.n_ratios,
            "clamped": self.clamped,
            "h_id": self.h_id,
            "diagnostics": self.diagnostics,
        }


def estimate(
    sample,
    h: HFunction | str = "sin",
    alpha: float = 0.05,
    variance: Optional[PlugInVariance] = None,
    rho_shift: float = 0.0,
) -> EstimateResult:
    """Estimate H from a trajectory sampled on a uniform grid.

    ``variance`` supplies the plug-in sigma_h2; the default runs the Monte
    Carlo long-run variance at the estimate with ``VarianceConfig()``.
    """
    if isinstance(h, str):
        h = get_h(h)
    x = np.asarray(getattr(sample, "values", sample), dtype=float)
    if x.ndim != 1 or len(x) < 16:
        raise DomainError(f"need a 1-d sample of at least 16 values, got shape {x.shape}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    variance = VarianceConfig() if variance is None else variance

    r = ratios(second_differences(x))
    hb = h_bar(r, h)
    mm = mean_map(h, rho_shift)
    h_hat, clamped = invert_mean_map(mm, hb)

    s2 = variance.sigma_h2(h, h_hat)
    se = math.sqrt(s2) / math.sqrt(r.count)
    z = normal_quantile(1.0 - alpha / 2.0)
    diagnostics = {"sigma_h2": s2, "mean_map_range": list(mm.range)}
    if isinstance(variance, VarianceConfig):
        vm = variance.model(h, h_hat)
        diagnostics.update(sigma_f2=vm.sigma_f2, m_prime=vm.m_prime, mc_stderr=vm.mc_stderr, k_max=vm.k_max)
    if clamped:
        diagnostics["warning"] = (
            f"h_bar={hb:.6g} lies outside the mean-map range {mm.range}; estimate clamped to the domain edge"
        )
    return EstimateResult(
        h_hat=h_hat,
        h_bar=hb,
        std_error=se,
        ci_low=max(h_hat - z * se, 0.0),
        ci_high=min(h_hat + z * se, 1.0),
        alpha=alpha,
        n=len(x) - 1,
        n_ratios=r.count,
        clamped=clamped,
        h_id=h.id,
        diagnostics=diagnostics,
    )
