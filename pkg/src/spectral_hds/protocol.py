"""Genuine/impostor pairing and batched scoring over a whole corpus.

Every image is transformed once into its normalized component vector.
Enrollments and verification attempts are then index arithmetic on a
``(fingers, images, components)`` array, which keeps the large sweeps
(hundreds of thousands of impostor pairs) cheap.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import eval as metrics
from .errors import ParameterError, ShapeError
from .minutiae import SyntheticDatabase
from .pipeline import (EnrollmentPolicy, ReliableSelection, _check_kinds, average_component_vectors,
                       component_vector, enroll_components)
from .spectral import KINDS, SpectralGrid
from .zlhds import ChannelStats, QuantizerConfig, decision_boundaries, estimate_stats_from_components

IMPOSTOR_MODES = ("all", "random", "auto")
AUTO_ALL_LIMIT = 1000  # images; larger corpora use one random image per impostor finger


@dataclass(frozen=True, eq=False)
class ComponentCorpus:
    """Normalized component vectors of every image, shaped ``(fingers, images, components)``."""

    components: np.ndarray
    grid: SpectralGrid
    kinds: tuple[str, ...] = KINDS
    finger_ids: tuple[str, ...] = ()

    def __post_init__(self):
        c = np.asarray(self.components, dtype=float)
        kinds = _check_kinds(self.kinds)
        if c.ndim != 3 or c.shape[2] != 2 * self.grid.size * len(kinds):
            raise ShapeError(f"components must be (fingers, images, {2 * self.grid.size * len(kinds)})")
        c.setflags(write=False)
        object.__setattr__(self, "components", c)
        object.__setattr__(self, "kinds", kinds)

    @property
    def n_fingers(self) -> int:
        return self.components.shape[0]

    @property
    def n_images(self) -> int:
        return self.components.shape[1]

    @property
    def block(self) -> int:
        return 2 * self.grid.size

    def select(self, kinds) -> "ComponentCorpus":
        kinds = _check_kinds(kinds)
        if kinds == self.kinds:
            return self
        idx = np.concatenate([np.arange(self.block) + self.kinds.index(k) * self.block for k in kinds])
        return ComponentCorpus(self.components[:, :, idx], self.grid, kinds, self.finger_ids)

    def stats(self) -> ChannelStats:
        sx, sv = estimate_stats_from_components(list(self.components))
        return ChannelStats.from_sigmas(sx, sv, kinds=self.kinds, grid=self.grid)


def build_corpus(db: SyntheticDatabase, grid: SpectralGrid, kinds=KINDS) -> ComponentCorpus:
    counts = {len(imgs) for imgs in db.fingers}
    if len(counts) != 1:
        raise ShapeError("every finger needs the same number of images")
    kinds = _check_kinds(kinds)
    comps = np.stack([np.stack([component_vector(img, grid, kinds) for img in imgs]) for imgs in db.fingers])
    return ComponentCorpus(comps, grid, kinds, tuple(imgs[0].finger_id for imgs in db.fingers))


@dataclass(frozen=True)
class PairingProtocol:
    """Which enrollments exist and which images each one is tested against.

    E1 enrolls every image.  ``ordered`` keeps both directions of each
    genuine pair (needed when enrollment and verification differ, as with
    helper data); otherwise only ``i < j``.  E2/E3 enroll the first ``t``
    images and test against the remaining ones.  Impostor attempts use all
    images of every other finger or one random image per other finger.
    """

    policy: EnrollmentPolicy = EnrollmentPolicy()
    ordered: bool = True
    impostors: str = "auto"
    seed: int = 0

    def __post_init__(self):
        if self.impostors not in IMPOSTOR_MODES:
            raise ParameterError(f"impostors must be one of {IMPOSTOR_MODES}")

    def enrollments(self, n_fingers: int, n_images: int) -> list[tuple[int, tuple[int, ...]]]:
        t = self.policy.t
        if self.policy.method == "E1":
            return [(f, (i,)) for f in range(n_fingers) for i in range(n_images)]
        if n_images <= t:
            raise ParameterError(f"need more than t={t} images per finger")
        return [(f, tuple(range(t))) for f in range(n_fingers)]

    def impostor_mode(self, n_fingers: int, n_images: int) -> str:
        if self.impostors != "auto":
            return self.impostors
        return "all" if n_fingers * n_images <= AUTO_ALL_LIMIT else "random"

    def attempts(self, n_fingers: int, n_images: int):
        """Per enrollment, flat image indices ``f * n_images + j`` of genuine and impostor attempts."""
        if n_fingers < 2 or n_images < 2:
            raise ParameterError("need at least two fingers with two images each")
        rng = np.random.default_rng(self.seed)
        mode = self.impostor_mode(n_fingers, n_images)
        out = []
        for f, imgs in self.enrollments(n_fingers, n_images):
            if self.policy.method == "E1":
                i = imgs[0]
                js = [j for j in range(n_images) if j != i and (self.ordered or j > i)]
            else:
                js = list(range(self.policy.t, n_images))
            gen = np.array([f * n_images + j for j in js], dtype=np.int64)
            others = np.array([g for g in range(n_fingers) if g != f], dtype=np.int64)
            if mode == "all":
                imp = (others[:, None] * n_images + np.arange(n_images)[None, :]).ravel()
            else:
                imp = others * n_images + rng.integers(0, n_images, len(others))
            out.append((f, imgs, gen, imp))
        return out


@dataclass(frozen=True, eq=False)
class DomainScores:
    """Per-attempt scores of one processing domain; ``direction`` as in :func:`eval.roc`."""

    genuine: np.ndarray
    impostor: np.ndarray
    direction: str

    def roc(self) -> metrics.RocCurve:
        return metrics.roc(self.genuine, self.impostor, self.direction)

    @property
    def eer(self) -> float:
        return self.roc().eer

    @property
    def genuine_ber(self) -> float:
        return float(np.mean(self.genuine))

    @property
    def impostor_ber(self) -> float:
        return float(np.mean(self.impostor))


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


def _index(index, n: int) -> np.ndarray:
    return np.arange(n) if index is None else np.asarray(index.retained if isinstance(index, ReliableSelection)
                                                        else index, dtype=np.int64)


def _collect(results, direction: str) -> DomainScores:
    gen = np.concatenate([g for g, _ in results]) if results else np.zeros(0)
    imp = np.concatenate([i for _, i in results]) if results else np.zeros(0)
    return DomainScores(gen, imp, direction)


def analog_scores(corpus: ComponentCorpus, protocol: PairingProtocol, threads: int = 1) -> DomainScores:
    """Correlation of normalized maps, summed over kinds (score-level fusion)."""
    flat = corpus.components.reshape(-1, corpus.components.shape[2])
    n_kinds = len(corpus.kinds)
    size = corpus.grid.size

    def one(item):
        f, imgs, gen, imp = item
        ref = average_component_vectors(corpus.components[f, list(imgs)], n_kinds)
        # mean Re(a conj b) per kind is the per-kind dot product over the grid size
        return flat[gen] @ ref / size, flat[imp] @ ref / size

    items = protocol.attempts(corpus.n_fingers, corpus.n_images)
    return _collect(_map(one, items, threads), metrics.HIGHER)


def hard_scores(corpus: ComponentCorpus, protocol: PairingProtocol, index=None,
                threads: int = 1) -> DomainScores:
    """Fractional Hamming distance of sign-quantized components, no helper data."""
    flat = corpus.components.reshape(-1, corpus.components.shape[2])
    idx = _index(index, flat.shape[1])
    bits = flat[:, idx] >= 0
    n_kinds = len(corpus.kinds)

    def one(item):
        f, imgs, gen, imp = item
        if protocol.policy.method == "E3":
            votes = corpus.components[f, list(imgs)][:, idx] >= 0
            ref = votes.sum(axis=0) * 2 > len(imgs)
        else:
            ref = average_component_vectors(corpus.components[f, list(imgs)], n_kinds)[idx] >= 0
        return np.mean(bits[gen] != ref, axis=1), np.mean(bits[imp] != ref, axis=1)

    items = protocol.attempts(corpus.n_fingers, corpus.n_images)
    return _collect(_map(one, items, threads), metrics.LOWER)


def _enroll(corpus, f, imgs, policy, stats, config):
    return enroll_components(corpus.components[f, list(imgs)], policy, stats, config)


def _reconstruct(y, helper, used: ChannelStats, config: QuantizerConfig) -> np.ndarray:
    """Batched rec1 of rows ``y`` against one enrollment's helper data."""
    alive = ~used.dead
    s_hat = np.zeros(y.shape, dtype=np.int64)
    if np.any(alive):
        tau = decision_boundaries(helper[alive], used.sigma_x[alive], used.sigma_v[alive],
                                  used.lam[alive], config)
        s_hat[:, alive] = np.sum(y[:, alive, None] >= tau[None], axis=-1)
    return s_hat


def zlhds_scores(corpus: ComponentCorpus, protocol: PairingProtocol, stats: ChannelStats, index=None,
                 config: QuantizerConfig = QuantizerConfig(), threads: int = 1) -> DomainScores:
    """Symbol error rate between enrolled and reconstructed strings under the zero-leakage scheme."""
    flat = corpus.components.reshape(-1, corpus.components.shape[2])
    idx = _index(index, flat.shape[1])

    def one(item):
        f, imgs, gen, imp = item
        s, w, used = _enroll(corpus, f, imgs, protocol.policy, stats, config)
        sub = used.subset(idx)
        g = _reconstruct(flat[gen][:, idx], w[idx], sub, config)
        i = _reconstruct(flat[imp][:, idx], w[idx], sub, config)
        return np.mean(g != s[idx], axis=1), np.mean(i != s[idx], axis=1)

    items = protocol.attempts(corpus.n_fingers, corpus.n_images)
    return _collect(_map(one, items, threads), metrics.LOWER)


def zlhds_strings(corpus: ComponentCorpus, protocol: PairingProtocol, stats: ChannelStats, index,
                  config: QuantizerConfig = QuantizerConfig(), threads: int = 1) -> metrics.ReconstructionCorpus:
    """Enrolled strings ``k`` and reconstructed strings ``k'`` for every attempt, restricted to ``index``."""
    flat = corpus.components.reshape(-1, corpus.components.shape[2])
    idx = _index(index, flat.shape[1])

    def one(item):
        f, imgs, gen, imp = item
        s, w, used = _enroll(corpus, f, imgs, protocol.policy, stats, config)
        sub = used.subset(idx)
        k = s[idx].astype(np.uint8)
        g = _reconstruct(flat[gen][:, idx], w[idx], sub, config).astype(np.uint8)
        i = _reconstruct(flat[imp][:, idx], w[idx], sub, config).astype(np.uint8)
        return np.broadcast_to(k, g.shape), g, np.broadcast_to(k, i.shape), i

    items = protocol.attempts(corpus.n_fingers, corpus.n_images)
    parts = _map(one, items, threads)
    return metrics.ReconstructionCorpus(*(np.concatenate([p[j] for p in parts]) for j in range(4)))
