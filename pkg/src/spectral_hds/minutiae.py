"""Minutia types, the text file format, and a synthetic finger generator.

The generator and noise model stand in for a real fingerprint database:
one call to :func:`generate_finger` produces the "true" minutiae of a
finger, and every image of that finger is a :func:`perturb` of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateError, ParameterError, ParseError

TWO_PI = 2.0 * math.pi
MIN_MINUTIAE = 2
MAX_MINUTIAE = 512


def _wrap_angle(theta: float) -> float:
    t = math.fmod(theta, TWO_PI)
    if t < 0.0:
        t += TWO_PI
    # fmod of a tiny negative number can round up to exactly 2*pi
    if t >= TWO_PI:
        t = 0.0
    return t


@dataclass(frozen=True)
class Minutia:
    """A single minutia: position in pixels and orientation in radians."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        x, y, theta = float(self.x), float(self.y), float(self.theta)
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(theta)):
            raise ParameterError(f"non-finite minutia ({x}, {y}, {theta})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "theta", _wrap_angle(theta))


@dataclass(frozen=True)
class MinutiaSet:
    """All minutiae found in one image of one finger."""

    minutiae: tuple[Minutia, ...]
    finger_id: str
    image_id: str

    def __post_init__(self):
        object.__setattr__(self, "minutiae", tuple(self.minutiae))
        if not str(self.finger_id) or not str(self.image_id):
            raise ParameterError("finger_id and image_id must be non-empty")
        z = len(self.minutiae)
        if z < MIN_MINUTIAE:
            raise DegenerateError(f"need at least {MIN_MINUTIAE} minutiae, got {z}")
        if z > MAX_MINUTIAE:
            raise ParameterError(f"at most {MAX_MINUTIAE} minutiae supported, got {z}")

    def __len__(self):
        return len(self.minutiae)

    @cached_property
    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(x, y, theta)`` as float64 arrays."""
        data = np.array([(m.x, m.y, m.theta) for m in self.minutiae], dtype=np.float64)
        return data[:, 0].copy(), data[:, 1].copy(), data[:, 2].copy()

    @classmethod
    def from_arrays(cls, x, y, theta, finger_id: str, image_id: str) -> "MinutiaSet":
        ms = tuple(Minutia(float(a), float(b), float(c)) for a, b, c in zip(x, y, theta))
        return cls(ms, finger_id, image_id)


@dataclass(frozen=True)
class NoiseModel:
    """Acquisition noise applied by :func:`perturb`.

    Attributes
    ----------
    jitter_sigma : float
        Std of i.i.d. Gaussian position noise per coordinate, pixels.
    angle_sigma : float
        Std of Gaussian orientation noise, radians.
    drop_prob : float
        Probability that a minutia is missed.
    insert_rate : float
        Expected number of spurious minutiae (Poisson).
    global_shift_max, global_rot_max : float
        Half-widths of the uniform global translation (pixels, per axis) and
        rotation about the centroid (radians).
    seed : int
        Seed of the generator used for this one perturbation.
    """

    jitter_sigma: float = 1.0
    angle_sigma: float = 0.1
    drop_prob: float = 0.05
    insert_rate: float = 2.0
    global_shift_max: float = 20.0
    global_rot_max: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for name in ("jitter_sigma", "angle_sigma", "insert_rate", "global_shift_max", "global_rot_max"):
            if not getattr(self, name) >= 0:
                raise ParameterError(f"{name} must be >= 0")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ParameterError("drop_prob must lie in [0, 1]")


def generate_finger(z_mean: float = 35, field_width: float = 500.0, field_height: float = 500.0,
                    seed: int = 0, finger_id: str | None = None) -> MinutiaSet:
    """Draw the true minutiae of a synthetic finger.

    The count is Poisson(``z_mean``) clamped to [2, 512]; positions are
    uniform in the field and orientations uniform in [0, 2*pi).
    """
    if not z_mean >= MIN_MINUTIAE:
        raise ParameterError(f"z_mean must be >= {MIN_MINUTIAE}")
    if not (field_width > 0 and field_height > 0):
        raise ParameterError("field dimensions must be positive")
    rng = np.random.default_rng(seed)
    z = int(np.clip(rng.poisson(z_mean), MIN_MINUTIAE, MAX_MINUTIAE))
    x = rng.uniform(0.0, field_width, z)
    y = rng.uniform(0.0, field_height, z)
    theta = rng.uniform(0.0, TWO_PI, z)
    fid = finger_id if finger_id is not None else f"f{seed}"
    return MinutiaSet.from_arrays(x, y, theta, fid, "true")


def perturb(mset: MinutiaSet, model: NoiseModel, image_id: str | None = None) -> MinutiaSet:
    """Simulate one noisy image of the finger described by ``mset``.

    Spurious minutiae are inserted uniformly inside the bounding box of the
    input set.
    """
    rng = np.random.default_rng(model.seed)
    x, y, theta = (a.copy() for a in mset.arrays)
    x_lo, x_hi, y_lo, y_hi = x.min(), x.max(), y.min(), y.max()

    dx, dy = rng.uniform(-model.global_shift_max, model.global_shift_max, 2)
    rot = rng.uniform(-model.global_rot_max, model.global_rot_max)
    cx, cy = x.mean(), y.mean()
    c, s = math.cos(rot), math.sin(rot)
    x, y = cx + c * (x - cx) - s * (y - cy) + dx, cy + s * (x - cx) + c * (y - cy) + dy
    theta = theta + rot

    z = len(x)
    x = x + rng.normal(0.0, model.jitter_sigma, z)
    y = y + rng.normal(0.0, model.jitter_sigma, z)
    theta = theta + rng.normal(0.0, model.angle_sigma, z)

    keep = rng.random(z) >= model.drop_prob
    x, y, theta = x[keep], y[keep], theta[keep]

    n_new = rng.poisson(model.insert_rate) if model.insert_rate > 0 else 0
    if n_new:
        x = np.concatenate([x, rng.uniform(x_lo, x_hi, n_new) + dx])
        y = np.concatenate([y, rng.uniform(y_lo, y_hi, n_new) + dy])
        theta = np.concatenate([theta, rng.uniform(0.0, TWO_PI, n_new)])

    if len(x) < MIN_MINUTIAE:
        raise DegenerateError(f"perturbation left {len(x)} minutiae")
    x, y, theta = x[:MAX_MINUTIAE], y[:MAX_MINUTIAE], theta[:MAX_MINUTIAE]
    new_id = image_id if image_id is not None else f"{mset.image_id}+{model.seed}"
    return MinutiaSet.from_arrays(x, y, theta, mset.finger_id, new_id)


def rotate_minutiae(mset: MinutiaSet, delta: float) -> MinutiaSet:
    """Rotate all positions about the origin by ``delta`` and shift orientations by ``delta``."""
    x, y, theta = mset.arrays
    c, s = math.cos(delta), math.sin(delta)
    return MinutiaSet.from_arrays(c * x - s * y, s * x + c * y, theta + delta,
                                  mset.finger_id, mset.image_id)


def translate_minutiae(mset: MinutiaSet, dx: float, dy: float) -> MinutiaSet:
    x, y, theta = mset.arrays
    return MinutiaSet.from_arrays(x + dx, y + dy, theta, mset.finger_id, mset.image_id)


@dataclass
class SyntheticDatabase:
    """Images grouped by finger, in generation order."""

    fingers: list[list[MinutiaSet]] = field(default_factory=list)

    @property
    def n_fingers(self):
        return len(self.fingers)

    def all_sets(self) -> list[MinutiaSet]:
        return [s for imgs in self.fingers for s in imgs]

    @classmethod
    def from_sets(cls, sets: Iterable[MinutiaSet]) -> "SyntheticDatabase":
        groups: dict[str, list[MinutiaSet]] = {}
        for s in sets:
            groups.setdefault(s.finger_id, []).append(s)
        return cls(list(groups.values()))


def generate_database(n_fingers: int, n_images: int, noise: NoiseModel, z_mean: float = 35,
                      field_width: float = 500.0, field_height: float = 500.0,
                      seed: int = 0) -> SyntheticDatabase:
    """Generate ``n_fingers`` synthetic fingers with ``n_images`` noisy images each.

    Every finger and every image gets its own seed derived from ``seed`` so
    the corpus is a pure function of its arguments.
    """
    if n_fingers < 1 or n_images < 1:
        raise ParameterError("need at least one finger and one image")
    seeds = np.random.SeedSequence(seed).generate_state(n_fingers * (n_images + 1), dtype=np.uint64)
    seeds = seeds.reshape(n_fingers, n_images + 1)
    fingers = []
    for f in range(n_fingers):
        true = generate_finger(z_mean, field_width, field_height, int(seeds[f, 0]), finger_id=f"f{f:04d}")
        images = []
        for i in range(n_images):
            m = NoiseModel(noise.jitter_sigma, noise.angle_sigma, noise.drop_prob, noise.insert_rate,
                           noise.global_shift_max, noise.global_rot_max, int(seeds[f, i + 1]))
            images.append(perturb(true, m, image_id=f"i{i:02d}"))
        fingers.append(images)
    return SyntheticDatabase(fingers)


def write_minutia_file(sets: Sequence[MinutiaSet], path) -> None:
    """Write records as ``# finger=<id> image=<id>`` headers followed by ``x y theta`` lines."""
    lines = []
    for s in sets:
        lines.append(f"# finger={s.finger_id} image={s.image_id}")
        lines.extend(f"{m.x:.9g} {m.y:.9g} {m.theta:.9g}" for m in s.minutiae)
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")


def _parse_header(line: str, lineno: int) -> tuple[str, str]:
    fields = dict(tok.split("=", 1) for tok in line[1:].split() if "=" in tok)
    if "finger" not in fields or "image" not in fields:
        raise ParseError("header must read '# finger=<id> image=<id>'", lineno)
    return fields["finger"], fields["image"]


def read_minutia_file(path) -> list[MinutiaSet]:
    text = Path(path).read_text(encoding="utf-8")
    sets: list[MinutiaSet] = []
    header = None
    rows: list[Minutia] = []

    def flush(lineno):
        nonlocal header, rows
        if header is not None:
            try:
                sets.append(MinutiaSet(tuple(rows), header[0], header[1]))
            except DegenerateError as exc:
                raise ParseError(f"record {header}: {exc}", lineno) from exc
        header, rows = None, []

    lineno = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            flush(lineno)
            continue
        if line.startswith("#"):
            flush(lineno)
            header = _parse_header(line, lineno)
            continue
        if header is None:
            raise ParseError("minutia line outside a record", lineno)
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"expected 'x y theta', got {line!r}", lineno)
        try:
            rows.append(Minutia(*(float(p) for p in parts)))
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from exc
    flush(lineno + 1)
    return sets
