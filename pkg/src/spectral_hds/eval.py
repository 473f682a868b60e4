"""Error-rate metrics: ROC/EER, bit error rates, and code operating points."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import com, polar
from .errors import ParameterError, ShapeError

HIGHER = "higher"  # larger values are more genuine (similarity scores)
LOWER = "lower"    # smaller values are more genuine (Hamming distances)


@dataclass(frozen=True)
class ScoreSample:
    label: str
    value: float

    def __post_init__(self):
        if self.label not in ("genuine", "impostor"):
            raise ParameterError(f"unknown label {self.label!r}")
        if not np.isfinite(self.value):
            raise ParameterError("score must be finite")


@dataclass(frozen=True, eq=False)
class RocCurve:
    """FAR/FRR per threshold, ordered from most permissive to strictest."""

    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    eer: float
    eer_threshold: float
    direction: str

    @property
    def points(self):
        return list(zip(self.thresholds.tolist(), self.far.tolist(), self.frr.tolist()))

    def check_monotone(self) -> bool:
        return bool(np.all(np.diff(self.far) <= 0) and np.all(np.diff(self.frr) >= 0))

    def to_csv(self, path) -> None:
        lines = ["threshold,far,frr"]
        lines += [f"{t:.9g},{a:.9g},{r:.9g}" for t, a, r in self.points]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def _split_samples(samples: Iterable[ScoreSample]):
    gen, imp = [], []
    for s in samples:
        (gen if s.label == "genuine" else imp).append(s.value)
    return np.asarray(gen, dtype=float), np.asarray(imp, dtype=float)


def _crossing(far, frr, thresholds):
    d = far - frr
    # d is nonincreasing; take the segment where it leaves the non-negative side
    j = int(np.flatnonzero(d >= 0)[-1])
    if d[j] == 0 or j == len(d) - 1:
        return float(far[j]), float(thresholds[j])
    num = far[j] * frr[j + 1] - frr[j] * far[j + 1]
    den = d[j] - d[j + 1]
    alpha = d[j] / den
    t0, t1 = thresholds[j], thresholds[j + 1]
    thr = float(t0 + alpha * (t1 - t0)) if np.isfinite(t0) and np.isfinite(t1) else float(t0)
    return float(num / den), thr


def roc(genuine, impostor=None, direction: str = HIGHER) -> RocCurve:
    """ROC over every distinct observed value.

    Either pass a list of :class:`ScoreSample` or two arrays of genuine and
    impostor values.  With ``direction="higher"`` a trial is accepted when its
    score is >= the threshold; with ``"lower"`` when its distance is <= it.
    The EER is where the polyline of (FAR, FRR) points meets FAR = FRR.
    """
    if impostor is None:
        genuine, impostor = _split_samples(genuine)
    gen = np.asarray(genuine, dtype=float).ravel()
    imp = np.asarray(impostor, dtype=float).ravel()
    if gen.size == 0 or imp.size == 0:
        raise ParameterError("need at least one genuine and one impostor sample")
    if direction not in (HIGHER, LOWER):
        raise ParameterError(f"direction must be {HIGHER!r} or {LOWER!r}")
    values = np.unique(np.concatenate([gen, imp]))
    if direction == HIGHER:
        thr = np.append(values, np.inf)
        g, i = np.sort(gen), np.sort(imp)
        frr = np.searchsorted(g, thr, side="left") / g.size
        far = 1.0 - np.searchsorted(i, thr, side="left") / i.size
    else:
        thr = np.append(values[::-1], -np.inf)
        g, i = np.sort(gen), np.sort(imp)
        far = np.searchsorted(i, thr, side="right") / i.size
        frr = 1.0 - np.searchsorted(g, thr, side="right") / g.size
    eer, eer_thr = _crossing(far, frr, thr)
    return RocCurve(thr, far, frr, eer, eer_thr, direction)


def eer(genuine, impostor, direction: str = HIGHER) -> float:
    return roc(genuine, impostor, direction).eer


def bit_error_rates(a, b) -> np.ndarray:
    """Fractional Hamming distance row by row."""
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape != b.shape:
        raise ShapeError(f"bit strings differ in shape: {a.shape} vs {b.shape}")
    return np.mean(a != b, axis=-1)


def ber(genuine_pairs: Sequence, impostor_pairs: Sequence) -> tuple[float, float]:
    """Mean fractional Hamming distance of genuine and of impostor (k, k_hat) pairs."""
    def mean_rate(pairs):
        if len(pairs) == 0:
            return float("nan")
        return float(np.mean([bit_error_rates(k, kh) for k, kh in pairs]))
    return mean_rate(genuine_pairs), mean_rate(impostor_pairs)


@dataclass(frozen=True, eq=False)
class ReconstructionCorpus:
    """Enrolled strings k and verification strings k' for genuine and impostor attempts."""

    genuine_k: np.ndarray
    genuine_k_prime: np.ndarray
    impostor_k: np.ndarray
    impostor_k_prime: np.ndarray

    def __post_init__(self):
        for name in ("genuine_k", "genuine_k_prime", "impostor_k", "impostor_k_prime"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=np.uint8)))
        if self.genuine_k.shape != self.genuine_k_prime.shape or self.impostor_k.shape != self.impostor_k_prime.shape:
            raise ShapeError("enrolled and verification strings must pair up")
        if self.genuine_k.shape[-1] != self.impostor_k.shape[-1]:
            raise ShapeError("genuine and impostor strings differ in length")

    @property
    def length(self) -> int:
        return self.genuine_k.shape[-1]

    @property
    def empty(self) -> bool:
        return self.genuine_k.size == 0 or self.impostor_k.size == 0


@dataclass(frozen=True)
class OperatingPoint:
    n: int
    m: int
    far: float
    frr: float


def _polar_accepts(code: polar.PolarCode, k, k_prime, salt_source=None, batch: int = 2000) -> np.ndarray:
    accepted = np.zeros(len(k), dtype=bool)
    for lo in range(0, len(k), batch):
        hi = min(lo + batch, len(k))
        records = [com.gen2(row, code, salt_source) for row in k[lo:hi]]
        syn = np.stack([r.syndrome for r in records]) if code.m < code.n else np.zeros((hi - lo, 0), np.uint8)
        k_hat = polar.syndrome_decode(code, k_prime[lo:hi], syn)
        accepted[lo:hi] = [com.hash_bits(kh, r.salt) == r.digest for kh, r in zip(k_hat, records)]
    return accepted


def code_operating_points(codes: Sequence[polar.PolarCode], corpus: ReconstructionCorpus,
                          salt_source=None) -> list[OperatingPoint]:
    """FAR and FRR of each code from full enrollment and reconstruction of every attempt."""
    if corpus.empty:
        raise ParameterError("corpus needs genuine and impostor attempts")
    out = []
    for code in codes:
        if code.n != corpus.length:
            raise ShapeError(f"code length {code.n} != string length {corpus.length}")
        frr = 1.0 - _polar_accepts(code, corpus.genuine_k, corpus.genuine_k_prime, salt_source).mean()
        far = _polar_accepts(code, corpus.impostor_k, corpus.impostor_k_prime, salt_source).mean()
        out.append(OperatingPoint(code.n, code.m, float(far), float(frr)))
    return out


def _codebook_accepts(book: com.RandomCodebook, k, k_prime, seed: int, batch: int = 1000) -> np.ndarray:
    rng = np.random.default_rng(seed)
    records = [com.codebook_gen2(row, book, rng) for row in k]
    accepted = np.zeros(len(k), dtype=bool)
    for lo in range(0, len(k), batch):
        hi = min(lo + batch, len(k))
        offsets = np.stack([r.offsets for r in records[lo:hi]])
        idx = com.codebook_decode(k_prime[lo:hi], offsets, book)
        bits = com._message_bits(idx, book.ell)
        accepted[lo:hi] = [com.hash_bits(b, r.salt) == r.digest for b, r in zip(bits, records[lo:hi])]
    return accepted


def codebook_operating_points(books: Sequence[com.RandomCodebook], corpus: ReconstructionCorpus,
                              seed: int = 0) -> list[OperatingPoint]:
    """Same as :func:`code_operating_points` for random-codebook sketches (m = total message bits)."""
    if corpus.empty:
        raise ParameterError("corpus needs genuine and impostor attempts")
    out = []
    for book in books:
        frr = 1.0 - _codebook_accepts(book, corpus.genuine_k, corpus.genuine_k_prime, seed).mean()
        far = _codebook_accepts(book, corpus.impostor_k, corpus.impostor_k_prime, seed + 1).mean()
        out.append(OperatingPoint(book.length, book.ell * len(book.tables), float(far), float(frr)))
    return out


def write_codes_csv(points: Sequence[OperatingPoint], path) -> None:
    lines = ["n,m,far,frr"] + [f"{p.n},{p.m},{p.far:.9g},{p.frr:.9g}" for p in points]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
