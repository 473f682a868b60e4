"""Experiment configuration read from TOML (or JSON) files."""

from __future__ import annotations

import json
import sys
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigurationError, HDSError
from .minutiae import NoiseModel
from .pipeline import EnrollmentPolicy, RELIABLE_PER_KIND
from .protocol import IMPOSTOR_MODES
from .spectral import DEFAULT_Q, DEFAULT_R, SIGMA_HIGH_QUALITY, SpectralGrid
from .zlhds import QuantizerConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DOMAINS = ("analog", "hard", "zlhds", "zlhds_reliable")


@dataclass(frozen=True)
class CorpusConfig:
    n_fingers: int = 20
    n_images: int = 4
    z_mean: float = 35.0
    field_width: float = 500.0
    field_height: float = 500.0


@dataclass(frozen=True)
class NoiseConfig:
    jitter_sigma: float = 1.0
    angle_sigma: float = 0.1
    drop_prob: float = 0.05
    insert_rate: float = 2.0
    global_shift_max: float = 20.0
    global_rot_max: float = 0.05


@dataclass(frozen=True)
class GridConfig:
    r_values: tuple = DEFAULT_R
    q_values: tuple = DEFAULT_Q
    sigma: float = SIGMA_HIGH_QUALITY


@dataclass(frozen=True)
class PolicyConfig:
    method: str = "E1"
    t: int = 1
    kinds: tuple = ("xtheta",)


@dataclass(frozen=True)
class CodeConfig:
    n: int = 512
    m: tuple = (8, 16, 32)
    codebook_ell: tuple = ()


@dataclass(frozen=True)
class EvaluateConfig:
    domain: str = "zlhds_reliable"
    impostors: str = "auto"


@dataclass(frozen=True)
class RunConfig:
    """Everything an experiment depends on besides the command-line seed and paths."""

    seed: int = 0
    n_intervals: int = 2
    reliable_count: int = 0  # 0 selects 512 per spectral function
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    code: CodeConfig = field(default_factory=CodeConfig)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)

    def __post_init__(self):
        try:
            self.enrollment_policy()
            self.spectral_grid()
            self.quantizer()
            self.noise_model()
        except HDSError as exc:
            raise ConfigurationError(str(exc)) from exc
        bits = 2 * self.spectral_grid().size * len(self.enrollment_policy().kinds)
        if not 0 < self.retained_count <= bits:
            raise ConfigurationError(f"reliable_count {self.retained_count} outside 1..{bits}")
        if self.code.n != self.retained_count:
            raise ConfigurationError(f"code.n = {self.code.n} must equal the retained component count "
                                     f"{self.retained_count} (no zero padding)")
        if self.code.n & (self.code.n - 1):
            raise ConfigurationError("code.n must be a power of two")
        if any(not 0 <= m <= self.code.n for m in self.code.m):
            raise ConfigurationError("every code.m must lie in 0..code.n")
        if (self.code.m or self.code.codebook_ell) and self.n_intervals != 2:
            raise ConfigurationError("codes need one bit per component (n_intervals = 2)")
        for ell in self.code.codebook_ell:
            if not 0 <= ell <= 16 or self.code.n % 4:
                raise ConfigurationError("codebook_ell must lie in 0..16 and code.n split into 4 groups")
        if self.evaluate.domain not in DOMAINS:
            raise ConfigurationError(f"evaluate.domain must be one of {DOMAINS}")
        if self.evaluate.impostors not in IMPOSTOR_MODES:
            raise ConfigurationError(f"evaluate.impostors must be one of {IMPOSTOR_MODES}")
        c = self.corpus
        if c.n_fingers < 2 or c.n_images < 2:
            raise ConfigurationError("corpus needs at least two fingers with two images each")
        if self.policy.method != "E1" and c.n_images <= self.policy.t:
            raise ConfigurationError("corpus.n_images must exceed policy.t")

    @property
    def retained_count(self) -> int:
        if self.reliable_count:
            return self.reliable_count
        return RELIABLE_PER_KIND * len(self.enrollment_policy().kinds)

    def enrollment_policy(self) -> EnrollmentPolicy:
        return EnrollmentPolicy(self.policy.method, self.policy.t, tuple(self.policy.kinds))

    def spectral_grid(self) -> SpectralGrid:
        return SpectralGrid(tuple(self.grid.r_values), tuple(self.grid.q_values), self.grid.sigma)

    def quantizer(self) -> QuantizerConfig:
        return QuantizerConfig(self.n_intervals)

    def noise_model(self, seed: int = 0) -> NoiseModel:
        return NoiseModel(**asdict(self.noise), seed=seed)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return _build(cls, d, "")


def _build(cls, d: dict, where: str):
    if not isinstance(d, dict):
        raise ConfigurationError(f"section [{where}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(d) - set(known))
    if unknown:
        raise ConfigurationError(f"unknown key(s) {unknown} in [{where or 'top level'}]")
    kw = {}
    for name, value in d.items():
        factory = known[name].default_factory
        if factory is not MISSING:  # nested section
            kw[name] = _build(factory, value, name)
        elif isinstance(value, list):
            kw[name] = tuple(value)
        else:
            kw[name] = value
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def load_config(path) -> RunConfig:
    """Read a ``.toml`` or ``.json`` configuration file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text) if path.suffix.lower() == ".json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return RunConfig.from_dict(data)


CONFIG_KEYS = """\
configuration keys (TOML, or JSON with the same nesting):
  seed                     base seed of the synthetic corpus (overridden by --seed)
  n_intervals              quantization intervals per component, 2 or 3
  reliable_count           retained components; 0 = 512 per spectral function
  [corpus]   n_fingers, n_images, z_mean, field_width, field_height
  [noise]    jitter_sigma, angle_sigma, drop_prob, insert_rate,
             global_shift_max, global_rot_max
  [grid]     r_values (list), q_values (list), sigma
  [policy]   method (E1|E2|E3), t, kinds (list of xtheta/xbeta; both = fusion)
  [code]     n (= retained count), m (list of message lengths),
             codebook_ell (list; random codebook baseline, 4 groups)
  [evaluate] domain (analog|hard|zlhds|zlhds_reliable) for roc.csv/summary eer,
             impostors (all|random|auto)
"""
