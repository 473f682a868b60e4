"""Enrollment and verification through both helper-data stages.

image -> spectral maps -> normalize -> Gen1/Rec1 per component
      -> keep globally reliable components -> Gen2/Rep2 -> hash compare
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import com, polar
from .errors import ConfigurationError, ParameterError, ShapeError
from .minutiae import MinutiaSet
from .spectral import KINDS, SpectralGrid, SpectralMap, normalize, spectral
from .zlhds import ChannelStats, QuantizerConfig, gen1_map, rec1_map, symbol_error_probability

METHODS = ("E1", "E2", "E3")
RELIABLE_PER_KIND = 512


def _check_kinds(kinds) -> tuple[str, ...]:
    kinds = tuple(kinds)
    if not kinds or any(k not in KINDS for k in kinds) or len(set(kinds)) != len(kinds):
        raise ParameterError(f"kinds must be a non-empty subset of {KINDS}")
    return tuple(sorted(kinds, key=KINDS.index))


@dataclass(frozen=True)
class EnrollmentPolicy:
    """E1: one image. E2: average of t maps (superfinger). E3: bitwise majority of t strings."""

    method: str = "E1"
    t: int = 1
    kinds: tuple[str, ...] = ("xtheta",)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown enrollment method {self.method!r}")
        if self.t < 1:
            raise ParameterError("t must be >= 1")
        if self.method == "E1" and self.t != 1:
            raise ParameterError("E1 uses exactly one image")
        if self.method == "E3" and self.t % 2 == 0:
            raise ParameterError("E3 majority voting needs an odd t")
        object.__setattr__(self, "kinds", _check_kinds(self.kinds))

    @property
    def fusion(self) -> bool:
        return len(self.kinds) == 2


def normalized_maps(image: MinutiaSet, grid: SpectralGrid, kinds=("xtheta",)) -> list[SpectralMap]:
    return [normalize(spectral(image, grid, k)) for k in _check_kinds(kinds)]


def maps_to_components(maps) -> np.ndarray:
    maps = sorted(maps, key=lambda m: KINDS.index(m.kind))
    return np.concatenate([m.components() for m in maps])


def component_vector(image: MinutiaSet, grid: SpectralGrid, kinds=("xtheta",)) -> np.ndarray:
    """Normalized real components of all requested kinds, xtheta first, re before im."""
    return maps_to_components(normalized_maps(image, grid, kinds))


def average_maps(map_lists) -> list[SpectralMap]:
    """Pointwise mean of several images' normalized maps, renormalized per kind."""
    if len(map_lists) == 1:
        return list(map_lists[0])
    out = []
    for per_kind in zip(*map_lists):
        mean = np.mean([m.values for m in per_kind], axis=0)
        out.append(normalize(SpectralMap(per_kind[0].grid, mean, per_kind[0].kind)))
    return out


@dataclass(frozen=True, eq=False)
class ReliableSelection:
    retained: np.ndarray
    target_count: int

    def __post_init__(self):
        r = np.asarray(self.retained, dtype=np.int64)
        if len(r) != self.target_count or np.any(np.diff(r) <= 0):
            raise ShapeError("retained indices must be target_count sorted distinct values")
        r.setflags(write=False)
        object.__setattr__(self, "retained", r)


def select_reliable(stats: ChannelStats, count: int) -> ReliableSelection:
    """Keep the ``count`` components with the smallest sigma_v / sigma_x.

    Only database-wide statistics enter; ties go to the lower index and dead
    components rank last.
    """
    if not isinstance(stats, ChannelStats):
        raise TypeError("selection is computed from ChannelStats only")
    if not 0 < count <= len(stats):
        raise ParameterError(f"cannot retain {count} of {len(stats)} components")
    ratio = stats.noise_ratio
    order = np.lexsort((np.arange(len(ratio)), ratio))
    return ReliableSelection(np.sort(order[:count]), count)


def default_reliable_count(kinds) -> int:
    return RELIABLE_PER_KIND * len(_check_kinds(kinds))


@dataclass(frozen=True, eq=False)
class Scheme:
    """Public system parameters shared by every enrollee."""

    grid: SpectralGrid
    stats: ChannelStats
    selection: ReliableSelection
    code: polar.PolarCode
    config: QuantizerConfig = QuantizerConfig()

    def __post_init__(self):
        if self.code.n != self.selection.target_count:
            raise ParameterError(f"code length {self.code.n} != retained component count "
                                 f"{self.selection.target_count}")
        if self.config.n_intervals != 2:
            raise ParameterError("the code-offset stage needs one bit per component (N = 2)")
        if self.stats.grid is not None and self.stats.grid != self.grid:
            raise ConfigurationError("statistics were estimated on a different grid")

    @property
    def kinds(self) -> tuple[str, ...]:
        return self.stats.kinds

    def meta(self, policy: EnrollmentPolicy) -> dict:
        return {"n_intervals": self.config.n_intervals, "grid_hash": self.grid.digest(),
                "kinds": list(self.kinds), "policy": policy.method, "t": policy.t}


def average_component_vectors(vectors, n_kinds: int) -> np.ndarray:
    """Component-domain twin of :func:`average_maps` for ``(t, C)`` arrays."""
    vectors = np.asarray(vectors, dtype=float)
    if vectors.shape[0] == 1:
        return vectors[0].copy()
    mean = vectors.mean(axis=0).reshape(n_kinds, -1)
    mu = mean.mean(axis=1, keepdims=True)
    sd = np.sqrt(np.mean((mean - mu) ** 2, axis=1, keepdims=True))
    return ((mean - mu) / sd).ravel()


def enroll_components(vectors, policy: EnrollmentPolicy, stats: ChannelStats,
                      config: QuantizerConfig = QuantizerConfig()):
    """Stage-1 enrollment from ``(t, C)`` normalized component vectors.

    Returns ``(symbols, helper, stats_used)``.
    """
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2 or vectors.shape[0] != policy.t:
        raise ParameterError(f"policy {policy.method} expects {policy.t} images, got {vectors.shape[0]}")
    if tuple(stats.kinds) != policy.kinds:
        raise ConfigurationError(f"statistics cover {stats.kinds}, policy asks for {policy.kinds}")
    used = stats.superfinger(policy.t)
    out = gen1_map(average_component_vectors(vectors, len(policy.kinds)), used, config)
    if policy.method != "E3":
        return out.symbols, out.helper, used
    strings = np.stack([gen1_map(v, used, config).symbols for v in vectors])
    majority = np.median(strings, axis=0).astype(np.int64)
    return majority, out.helper, used


def enrollment_string(images, policy: EnrollmentPolicy, grid: SpectralGrid, stats: ChannelStats,
                      config: QuantizerConfig = QuantizerConfig()):
    """Symbols and helper data for all components under the given policy.

    Returns ``(symbols, helper, stats_used)`` where ``stats_used`` are the
    statistics the helper data was generated with.
    """
    if len(images) != policy.t:
        raise ParameterError(f"policy {policy.method} expects {policy.t} images, got {len(images)}")
    if len({img.finger_id for img in images}) != 1:
        raise ParameterError("all enrollment images must come from one finger")
    if tuple(stats.kinds) != policy.kinds:
        raise ConfigurationError(f"statistics cover {stats.kinds}, policy asks for {policy.kinds}")
    vectors = np.stack([component_vector(img, grid, policy.kinds) for img in images])
    return enroll_components(vectors, policy, stats, config)


def enroll(images, policy: EnrollmentPolicy, scheme: Scheme, salt_source=None) -> com.HelperRecord:
    symbols, helper, _ = enrollment_string(images, policy, scheme.grid, scheme.stats, scheme.config)
    k = symbols[scheme.selection.retained].astype(np.uint8)
    record = com.gen2(k, scheme.code, salt_source)
    return record.with_stage1(helper, scheme.selection.retained, scheme.meta(policy))


def verification_string(image: MinutiaSet, record: com.HelperRecord, scheme: Scheme) -> np.ndarray:
    """The reconstructed first-stage string k' restricted to the record's retained components."""
    meta = record.meta
    if meta.get("grid_hash") != scheme.grid.digest():
        raise ConfigurationError("record was enrolled on a different grid")
    if tuple(meta.get("kinds", ())) != scheme.kinds:
        raise ConfigurationError("record was enrolled with different spectral kinds")
    if meta.get("n_intervals") != scheme.config.n_intervals:
        raise ConfigurationError("record was enrolled with a different quantizer")
    used = scheme.stats.superfinger(int(meta.get("t", 1)))
    y = component_vector(image, scheme.grid, scheme.kinds)
    s_hat = rec1_map(y, record.stage1_helper, used, scheme.config)
    return s_hat[record.reliable_mask].astype(np.uint8)


def verify(image: MinutiaSet, record: com.HelperRecord, scheme: Scheme) -> bool:
    k_prime = verification_string(image, record, scheme)
    accepted, _ = com.rep2(k_prime, record, scheme.code)
    return accepted


_DESIGN_RATIOS = np.linspace(0.0, 0.999, 1000)
_design_table: np.ndarray | None = None


def _error_table() -> np.ndarray:
    global _design_table
    if _design_table is None:
        _design_table = np.array([symbol_error_probability(r, n_nodes=1024) for r in _DESIGN_RATIOS])
    return _design_table


def design_channels(stats: ChannelStats, selection: ReliableSelection, t: int = 1) -> np.ndarray:
    """Predicted bit error probability of each retained component.

    Enrollment noise shrinks by 1/sqrt(t) while verification keeps the
    single-image noise, so the effective ratio is ``ratio * sqrt((1 + 1/t) / 2)``.
    Ratios at or above the table end count as useless channels (p = 0.5).
    """
    ratio = stats.noise_ratio[selection.retained] * math.sqrt((1.0 + 1.0 / t) / 2.0)
    p = np.interp(ratio, _DESIGN_RATIOS, _error_table(), right=0.5)
    return np.where(np.isfinite(ratio) & (ratio < _DESIGN_RATIOS[-1]), p, 0.5)


def design_code(stats: ChannelStats, selection: ReliableSelection, m: int, t: int = 1) -> polar.PolarCode:
    """Polar code over the retained components, tuned to their predicted error rates."""
    return polar.construct(design_channels(stats, selection, t), m)


def build_scheme(grid: SpectralGrid, stats: ChannelStats, m: int, count: int | None = None,
                 t: int = 1) -> Scheme:
    """Public parameters from database statistics: selection, then a matched code."""
    selection = select_reliable(stats, count if count is not None else default_reliable_count(stats.kinds))
    return Scheme(grid, stats, selection, design_code(stats, selection, m, t))
