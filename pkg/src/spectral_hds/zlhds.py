"""Zero-leakage quantisation (first helper-data stage).

Each component x is mapped to a symbol ``s`` (equiprobable interval index)
and a helper value ``w`` in [0, 1): the position of F(x) inside its
interval.  Because W is uniform whatever S is, the helper data reveals
nothing about the symbol when the component is Gaussian.  Reconstruction
uses the decision boundaries tau_{alpha,w} of the Gaussian noise model
``y = lambda * x + v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ChannelUselessError, DegenerateError, ParameterError, ShapeError
from .spectral import KINDS, SpectralGrid, SpectralMap

P_CLAMP = 1e-12
LAMBDA_FLOOR = 1e-6
ONE_MINUS = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class GaussianModel:
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if not self.std > 0:
            raise ParameterError("std must be positive")

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.std
        return np.exp(-0.5 * z * z) / (self.std * math.sqrt(2 * math.pi))

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mean) / self.std)

    def ppf(self, p):
        """Inverse cdf with ``p`` clamped to [1e-12, 1 - 1e-12]."""
        return self.mean + self.std * _std_ppf(np.asarray(p, dtype=float))


def _std_ppf(p, q=None):
    """Standard normal quantile; ``q = 1 - p`` may be passed for accuracy in the upper tail."""
    p = np.clip(p, P_CLAMP, 1.0 - P_CLAMP)
    if q is None:
        q = 1.0 - p
    q = np.clip(q, P_CLAMP, 1.0 - P_CLAMP)
    return np.where(p <= 0.5, ndtri(p), -ndtri(q))


@dataclass(frozen=True)
class QuantizerConfig:
    """Number of intervals and their probabilities (equiprobable by default)."""

    n_intervals: int = 2
    probabilities: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.n_intervals not in (2, 3):
            raise ParameterError("n_intervals must be 2 or 3")
        p = self.probabilities
        if p is None:
            p = (1.0 / self.n_intervals,) * self.n_intervals
        p = tuple(float(v) for v in p)
        if len(p) != self.n_intervals or min(p) <= 0 or abs(sum(p) - 1.0) > 1e-12:
            raise ParameterError("probabilities must be positive, one per interval, summing to 1")
        object.__setattr__(self, "probabilities", p)

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.probabilities)

    @property
    def cum_below(self) -> np.ndarray:
        """``sum_{j < alpha} p_j`` for alpha = 0..N (first 0, last 1)."""
        return np.concatenate([[0.0], np.cumsum(self.p)[:-1], [1.0]])

    @property
    def cum_above(self) -> np.ndarray:
        """``sum_{j >= alpha} p_j`` for alpha = 0..N, accumulated from the top."""
        return np.concatenate([np.cumsum(self.p[::-1])[::-1], [0.0]])

    def boundaries(self, model: GaussianModel = GaussianModel()) -> np.ndarray:
        """Quantisation boundaries Omega_0..Omega_N (first -inf, last +inf)."""
        inner = model.ppf(self.cum_below[1:-1])
        return np.concatenate([[-np.inf], inner, [np.inf]])


@dataclass(frozen=True, eq=False)
class ChannelStats:
    """Per-component population std, within-finger noise std and attenuation.

    Components are ordered kind by kind (``kinds`` order); within a kind all
    real parts (grid-major) come first, then all imaginary parts.
    """

    sigma_x: np.ndarray
    sigma_v: np.ndarray
    lam: np.ndarray
    kinds: tuple[str, ...] = ("xtheta",)
    grid: SpectralGrid | None = None

    def __post_init__(self):
        sx = np.asarray(self.sigma_x, dtype=float)
        sv = np.asarray(self.sigma_v, dtype=float)
        lam = np.asarray(self.lam, dtype=float)
        if not (sx.shape == sv.shape == lam.shape and sx.ndim == 1):
            raise ShapeError("sigma_x, sigma_v and lam must be 1-d arrays of equal length")
        if np.any(sx < 0) or np.any(sv < 0):
            raise ParameterError("standard deviations must be non-negative")
        for arr in (sx, sv, lam):
            arr.setflags(write=False)
        object.__setattr__(self, "sigma_x", sx)
        object.__setattr__(self, "sigma_v", sv)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "kinds", tuple(self.kinds))

    @classmethod
    def from_sigmas(cls, sigma_x, sigma_v, **kw) -> "ChannelStats":
        """Derive lambda from the identical-conditions relation ``lambda^2 = 1 - sigma_v^2 / sigma_x^2``."""
        sx = np.asarray(sigma_x, dtype=float)
        sv = np.asarray(sigma_v, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            lam2 = np.where(sx > 0, 1.0 - (sv / np.where(sx > 0, sx, 1.0)) ** 2, 0.0)
        lam = np.clip(np.sqrt(np.clip(lam2, 0.0, 1.0)), LAMBDA_FLOOR, 1.0)
        return cls(sx, sv, lam, **kw)

    def __len__(self):
        return len(self.sigma_x)

    @property
    def dead(self) -> np.ndarray:
        """Components with zero population variance; excluded downstream."""
        return self.sigma_x <= 0

    @property
    def noise_ratio(self) -> np.ndarray:
        """sigma_v / sigma_x, infinite for dead components."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.dead, np.inf, self.sigma_v / np.where(self.dead, 1.0, self.sigma_x))

    def subset(self, index) -> "ChannelStats":
        return ChannelStats(self.sigma_x[index], self.sigma_v[index], self.lam[index], self.kinds, self.grid)

    def superfinger(self, t: int) -> "ChannelStats":
        """Statistics of an average of ``t`` images: noise std scaled by 1/sqrt(t)."""
        if t < 1:
            raise ParameterError("t must be >= 1")
        if t == 1:
            return self
        return ChannelStats.from_sigmas(self.sigma_x, self.sigma_v / math.sqrt(t),
                                        kinds=self.kinds, grid=self.grid)

    def to_dict(self) -> dict:
        return {
            "kinds": list(self.kinds),
            "grid": self.grid.to_dict() if self.grid is not None else None,
            "sigma_x": self.sigma_x.tolist(),
            "sigma_v": self.sigma_v.tolist(),
            "lambda": self.lam.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelStats":
        grid = SpectralGrid(**d["grid"]) if d.get("grid") else None
        return cls(np.array(d["sigma_x"]), np.array(d["sigma_v"]), np.array(d["lambda"]),
                   tuple(d["kinds"]), grid)


def estimate_stats_from_components(groups) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(sigma_x, sigma_v)`` from per-finger component arrays.

    ``groups`` is a sequence of arrays of shape ``(images, components)``, one
    per finger (or a single 3-d array). sigma_x^2 is the variance over all
    images; sigma_v^2 the within-finger variance averaged over fingers.
    """
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2:
        raise DegenerateError("need at least two fingers")
    if any(g.ndim != 2 or g.shape[0] < 2 for g in groups):
        raise DegenerateError("need at least two images per finger")
    if len({g.shape[1] for g in groups}) != 1:
        raise ShapeError("all fingers must have the same component count")
    pooled = np.concatenate(groups, axis=0)
    sigma_x = pooled.std(axis=0, ddof=1)
    within = np.mean([g.var(axis=0, ddof=1) for g in groups], axis=0)
    return sigma_x, np.sqrt(within)


def estimate_stats(database, grid: SpectralGrid, kinds=("xtheta",)) -> ChannelStats:
    """Estimate channel statistics from a database grouped by finger.

    ``database`` is a sequence of image lists (one list per finger) or a
    :class:`~spectral_hds.minutiae.SyntheticDatabase`.
    """
    from .pipeline import component_vector

    fingers = getattr(database, "fingers", database)
    groups = [np.stack([component_vector(img, grid, kinds) for img in imgs]) for imgs in fingers]
    sigma_x, sigma_v = estimate_stats_from_components(groups)
    return ChannelStats.from_sigmas(sigma_x, sigma_v, kinds=tuple(kinds), grid=grid)


def _as_std(sigma):
    return np.asarray(sigma, dtype=float)


def gen1(x, model: GaussianModel = GaussianModel(), config: QuantizerConfig = QuantizerConfig()):
    """Quantise ``x`` into ``(s, w)``; works elementwise on arrays.

    ``s = max{alpha : x >= Omega_alpha}`` and ``w = (F(x) - P_s) / p_s`` where
    P_s is the probability mass below interval s.
    """
    x = np.asarray(x, dtype=float)
    z = (x - model.mean) / model.std
    omega = _std_ppf(config.cum_below[1:-1])
    s = np.sum(z[..., None] >= omega, axis=-1)
    p = config.p[s]
    lower = ndtr(z)
    upper = ndtr(-z)
    # measure from whichever end keeps the most precision
    w_low = (lower - config.cum_below[s]) / p
    w_high = 1.0 - (upper - config.cum_above[s + 1]) / p
    w = np.where(z <= 0, w_low, w_high)
    w = np.clip(w, 0.0, ONE_MINUS)
    if w.ndim == 0:
        return int(s), float(w)
    return s.astype(np.int64), w


def xi(s, w, model: GaussianModel = GaussianModel(), config: QuantizerConfig = QuantizerConfig()):
    """Inverse of :func:`gen1`: the x whose quantisation is ``(s, w)``."""
    s = np.asarray(s)
    w = np.asarray(w, dtype=float)
    p = config.p
    prob = config.cum_below[s] + w * p[s]
    tail = config.cum_above[s + 1] + (1.0 - w) * p[s]
    return model.mean + model.std * _std_ppf(prob, tail)


def decision_boundaries(w, sigma_x, sigma_v, lam, config: QuantizerConfig = QuantizerConfig()):
    """Thresholds tau_1..tau_{N-1} for each element of ``w``; shape ``w.shape + (N-1,)``."""
    w = np.asarray(w, dtype=float)
    sigma_x = _as_std(sigma_x)
    sigma_v = _as_std(sigma_v)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ChannelUselessError("lambda = 0: the verification value carries no information")
    n = config.n_intervals
    p = config.p
    taus = []
    for alpha in range(1, n):
        lo = xi(np.full(w.shape, alpha - 1), w, config=config) * sigma_x
        hi = xi(np.full(w.shape, alpha), w, config=config) * sigma_x
        tau = lam * (lo + hi) / 2.0
        log_ratio = math.log(p[alpha - 1] / p[alpha])
        if log_ratio != 0.0:
            tau = tau + sigma_v ** 2 * log_ratio / (lam * (hi - lo))
        taus.append(tau)
    return np.stack(taus, axis=-1)


def rec1(y, w, sigma_x=1.0, sigma_v=0.0, lam=1.0, config: QuantizerConfig = QuantizerConfig()):
    """Estimate the enrolled symbol from a verification value ``y`` and helper ``w``.

    A value exactly on a boundary is assigned the higher symbol.
    """
    y = np.asarray(y, dtype=float)
    tau = decision_boundaries(w, sigma_x, sigma_v, lam, config)
    s_hat = np.sum(y[..., None] >= tau, axis=-1)
    if s_hat.ndim == 0:
        return int(s_hat)
    return s_hat.astype(np.int64)


@dataclass(frozen=True, eq=False)
class StageOneOutput:
    symbols: np.ndarray
    helper: np.ndarray

    def __post_init__(self):
        if len(self.symbols) != len(self.helper):
            raise ShapeError("symbols and helper differ in length")


def _components(maps) -> np.ndarray:
    if isinstance(maps, SpectralMap):
        maps = [maps]
    maps = sorted(maps, key=lambda m: KINDS.index(m.kind))
    return np.concatenate([m.components() for m in maps])


def gen1_map(maps, stats: ChannelStats, config: QuantizerConfig = QuantizerConfig()) -> StageOneOutput:
    """Quantise every component of the (normalized) maps; order xtheta before xbeta."""
    x = maps if isinstance(maps, np.ndarray) else _components(maps)
    if len(x) != len(stats):
        raise ShapeError(f"{len(x)} components but statistics for {len(stats)}")
    alive = ~stats.dead
    s = np.zeros(len(x), dtype=np.int64)
    w = np.zeros(len(x))
    if np.any(alive):
        s[alive], w[alive] = gen1(x[alive] / stats.sigma_x[alive], config=config)
    return StageOneOutput(s, w)


def rec1_map(maps, helper, stats: ChannelStats, config: QuantizerConfig = QuantizerConfig()) -> np.ndarray:
    y = maps if isinstance(maps, np.ndarray) else _components(maps)
    helper = np.asarray(helper, dtype=float)
    if not len(y) == len(helper) == len(stats):
        raise ShapeError("verification components, helper data and statistics differ in length")
    alive = ~stats.dead
    s_hat = np.zeros(len(y), dtype=np.int64)
    if np.any(alive):
        s_hat[alive] = rec1(y[alive], helper[alive], stats.sigma_x[alive], stats.sigma_v[alive],
                            stats.lam[alive], config)
    return s_hat


def symbol_error_probability(ratio: float, config: QuantizerConfig = QuantizerConfig(),
                             n_nodes: int = 4096) -> float:
    """Average P(s_hat != s) for a unit-variance source at noise ratio sigma_v/sigma_x.

    Midpoint rule over w; each node is an exact Gaussian tail computation.
    """
    if not 0 <= ratio < 1:
        raise ParameterError("ratio must lie in [0, 1)")
    if ratio == 0:
        return 0.0
    lam = math.sqrt(1.0 - ratio * ratio)
    w = (np.arange(n_nodes) + 0.5) / n_nodes
    tau = decision_boundaries(w, 1.0, ratio, lam, config)
    edges = np.concatenate([np.full((n_nodes, 1), -np.inf), tau, np.full((n_nodes, 1), np.inf)], axis=1)
    err = 0.0
    for s in range(config.n_intervals):
        mu = lam * xi(np.full(n_nodes, s), w, config=config)
        correct = ndtr((edges[:, s + 1] - mu) / ratio) - ndtr((edges[:, s] - mu) / ratio)
        err += config.p[s] * np.mean(1.0 - correct)
    return float(err)


def conditional_mutual_information(s, s_hat, w, n_symbols: int, n_bins: int = 64) -> float:
    """Plug-in estimate of I(S; S_hat | W) in bits, stratifying W into equal-probability bins."""
    s = np.asarray(s)
    s_hat = np.asarray(s_hat)
    w = np.asarray(w, dtype=float)
    edges = np.quantile(w, np.linspace(0, 1, n_bins + 1))
    bins = np.clip(np.searchsorted(edges, w, side="right") - 1, 0, n_bins - 1)
    total = 0.0
    for b in range(n_bins):
        sel = bins == b
        count = int(sel.sum())
        if count == 0:
            continue
        total += count * mutual_information(s[sel], s_hat[sel], n_symbols, n_symbols)
    return total / len(w)


def mutual_information(a, b, n_a: int, n_b: int) -> float:
    """Plug-in mutual information (bits) between two discrete samples."""
    joint = np.zeros((n_a, n_b))
    np.add.at(joint, (np.asarray(a), np.asarray(b)), 1.0)
    joint /= joint.sum()
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log2(joint[nz] / (pa @ pb)[nz])))


@dataclass(frozen=True)
class TradeoffPoint:
    ratio: float
    mutual_information: float
    error_rate: float


def tradeoff_curve(n_intervals: int, ratios, n_samples: int = 10 ** 6, seed: int = 0,
                   n_bins: int = 64) -> list[TradeoffPoint]:
    """Monte-Carlo mutual information I(S; S_hat | W) and symbol error rate per noise ratio."""
    config = QuantizerConfig(n_intervals)
    rng = np.random.default_rng(seed)
    out = []
    for ratio in ratios:
        ratio = float(ratio)
        if not 0 < ratio < 1:
            raise ParameterError("ratios must lie in (0, 1)")
        lam = math.sqrt(1.0 - ratio * ratio)
        x = rng.standard_normal(n_samples)
        y = lam * x + ratio * rng.standard_normal(n_samples)
        s, w = gen1(x, config=config)
        s_hat = rec1(y, w, 1.0, ratio, lam, config)
        mi = conditional_mutual_information(s, s_hat, w, n_intervals, n_bins)
        out.append(TradeoffPoint(ratio, mi, float(np.mean(s != s_hat))))
    return out
