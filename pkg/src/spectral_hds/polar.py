"""Polar codes in natural (non bit-reversed) order.

The transform is ``x = u F^{(x)log2 n}`` over GF(2) with kernel
``F = [[1, 0], [1, 1]]``.  Splitting u into halves (u_a, u_b) gives
``x = ((u_a ^ u_b) F', u_b F')``; construction, encoding and the
successive-cancellation decoder all follow this one recursion.

Every routine accepts a leading batch dimension so Monte-Carlo harnesses
decode many words per call.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError, ShapeError

LLR_MAX = 40.0
# SC decisions are only equivariant under coset shifts when no LLR is exactly
# zero; a fixed tiny per-position scale keeps sums of equal magnitudes apart.
LLR_MIN = 1e-6
_TIE_SCALE = 1e-9


def _check_length(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise ShapeError(f"length {n} is not a power of two")
    return n.bit_length() - 1


def _as_bits(bits) -> np.ndarray:
    return np.asarray(bits, dtype=np.uint8) & 1


def polar_transform(u) -> np.ndarray:
    """Compute ``u F^{(x)log2 n}`` over GF(2) along the last axis. Involutory."""
    x = _as_bits(u).copy()
    n = x.shape[-1]
    _check_length(n)
    lead = x.shape[:-1]
    h = 1
    while h < n:
        v = x.reshape(lead + (n // (2 * h), 2, h))
        v[..., 0, :] ^= v[..., 1, :]
        h *= 2
    return x


def bhattacharyya(p) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=float), 0.0, 0.5)
    return 2.0 * np.sqrt(p * (1.0 - p))


def polarize(z) -> np.ndarray:
    """Propagate per-channel Bhattacharyya parameters to the n synthesized channels."""
    z = np.asarray(z, dtype=float)
    if len(z) == 1:
        return z.copy()
    half = len(z) // 2
    za, zb = z[:half], z[half:]
    worse = np.minimum(za + zb - za * zb, 1.0)
    better = za * zb
    return np.concatenate([polarize(worse), polarize(better)])


@dataclass(frozen=True, eq=False)
class PolarCode:
    """A polar code with frozen set chosen for a given per-position channel.

    Attributes
    ----------
    n, m : int
        Block and message length.
    frozen_set : ndarray
        Sorted transform positions fixed to known values.
    reliabilities : ndarray
        Bhattacharyya parameter of every synthesized channel (larger is worse).
    channel_p : ndarray
        Crossover probability of every codeword position the code was designed for.
    """

    n: int
    m: int
    frozen_set: np.ndarray
    reliabilities: np.ndarray
    channel_p: np.ndarray

    def __post_init__(self):
        _check_length(self.n)
        if self.n > 4096:
            raise ParameterError("block length above 4096 not supported")
        if not 0 <= self.m <= self.n:
            raise ParameterError("need 0 <= m <= n")
        frozen = np.asarray(self.frozen_set, dtype=np.int64)
        if len(frozen) != self.n - self.m or np.any(np.diff(frozen) <= 0):
            raise ShapeError("frozen set must be n - m sorted distinct indices")
        mask = np.zeros(self.n, dtype=bool)
        mask[frozen] = True
        for name, arr in (("frozen_set", frozen), ("_frozen_mask", mask),
                          ("reliabilities", np.asarray(self.reliabilities, dtype=float)),
                          ("channel_p", np.asarray(self.channel_p, dtype=float))):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_hash", None)

    @property
    def frozen_mask(self) -> np.ndarray:
        return self._frozen_mask

    @property
    def info_set(self) -> np.ndarray:
        return np.flatnonzero(~self._frozen_mask)

    def descriptor(self) -> dict:
        return {"n": self.n, "m": self.m, "frozen_set": self.frozen_set.tolist(),
                "p": self.channel_p.tolist()}

    def content_hash(self) -> str:
        if self._hash is None:
            blob = json.dumps(self.descriptor(), sort_keys=True, separators=(",", ":"))
            object.__setattr__(self, "_hash", hashlib.sha256(blob.encode()).hexdigest())
        return self._hash

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.descriptor(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "PolarCode":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_descriptor(d)

    @classmethod
    def from_descriptor(cls, d: dict) -> "PolarCode":
        p = np.asarray(d["p"], dtype=float)
        return cls(int(d["n"]), int(d["m"]), np.asarray(d["frozen_set"]), polarize(bhattacharyya(p)), p)


def construct(channels, m: int) -> PolarCode:
    """Freeze the ``n - m`` synthesized channels with the largest Bhattacharyya parameter.

    ``channels`` holds the crossover probability of every codeword position.
    Ties are frozen lowest index first.
    """
    p = np.asarray(channels, dtype=float)
    n = len(p)
    _check_length(n)
    if np.any((p < 0) | (p > 0.5)):
        raise ParameterError("crossover probabilities must lie in [0, 0.5]")
    if not 0 <= m <= n:
        raise ParameterError(f"message length {m} outside [0, {n}]")
    z = polarize(bhattacharyya(p))
    order = np.lexsort((np.arange(n), -z))
    frozen = np.sort(order[: n - m])
    return PolarCode(n, m, frozen, z, p)


def _bits_with_batch(bits, length: int, what: str) -> np.ndarray:
    b = _as_bits(bits)
    if b.shape[-1] != length:
        raise ShapeError(f"{what} has length {b.shape[-1]}, expected {length}")
    return b


def encode(code: PolarCode, message, frozen_values=None) -> np.ndarray:
    msg = _bits_with_batch(message, code.m, "message")
    lead = msg.shape[:-1]
    u = np.zeros(lead + (code.n,), dtype=np.uint8)
    if frozen_values is not None:
        u[..., code.frozen_set] = _bits_with_batch(frozen_values, code.n - code.m, "frozen values")
    u[..., code.info_set] = msg
    return polar_transform(u)


def _f_exact(a, b):
    # 2 atanh(tanh(a/2) tanh(b/2)) in a form that never overflows; odd in a and in b
    return (np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
            + (np.log1p(np.exp(-np.abs(a + b))) - np.log1p(np.exp(-np.abs(a - b)))))


def _f_minsum(a, b):
    return np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))


def _sc(llr, frozen_mask, frozen_u, offset, u_out, f, leaf_llr):
    """Decode the subtree covering u positions [offset, offset + len); return its codeword."""
    n = llr.shape[-1]
    mask = frozen_mask[offset:offset + n]
    if leaf_llr is None and mask.all():
        u = frozen_u[:, offset:offset + n]
        u_out[:, offset:offset + n] = u
        return polar_transform(u)
    if n == 1:
        if leaf_llr is not None:
            leaf_llr[:, offset] = llr[:, 0]
        if mask[0]:
            bit = frozen_u[:, offset]
        else:
            bit = (llr[:, 0] < 0).astype(np.uint8)
        u_out[:, offset] = bit
        return bit[:, None]
    half = n // 2
    la, lb = llr[:, :half], llr[:, half:]
    ca = _sc(f(la, lb), frozen_mask, frozen_u, offset, u_out, f, leaf_llr)
    cb = _sc(lb + (1.0 - 2.0 * ca) * la, frozen_mask, frozen_u, offset + half, u_out, f, leaf_llr)
    return np.concatenate([ca ^ cb, cb], axis=1)


def _run_sc(code: PolarCode, llr, frozen_values, min_sum: bool, leaf_llr=None):
    llr = np.asarray(llr, dtype=float)
    single = llr.ndim == 1
    llr = np.atleast_2d(llr)
    if llr.shape[-1] != code.n:
        raise ShapeError(f"llr has length {llr.shape[-1]}, expected {code.n}")
    batch = llr.shape[0]
    frozen_u = np.zeros((batch, code.n), dtype=np.uint8)
    if frozen_values is not None:
        fv = np.broadcast_to(_bits_with_batch(frozen_values, code.n - code.m, "frozen values"),
                             (batch, code.n - code.m))
        frozen_u[:, code.frozen_set] = fv
    u_hat = np.zeros((batch, code.n), dtype=np.uint8)
    _sc(llr, code.frozen_mask, frozen_u, 0, u_hat, _f_minsum if min_sum else _f_exact, leaf_llr)
    return u_hat, single


def sc_decode(code: PolarCode, llr, frozen_values=None, min_sum: bool = False):
    """Successive-cancellation decoding.

    Parameters
    ----------
    llr : array_like, shape (n,) or (batch, n)
        Channel log-likelihood ratios ln P(x=0)/P(x=1); positive favours 0.
    frozen_values : array_like, optional
        Values of the frozen positions (zeros by default).
    min_sum : bool
        Use the min-sum approximation instead of the exact check-node rule.

    Returns
    -------
    message, u_hat : ndarray
        Decoded information bits and the full decoded transform input.
    """
    u_hat, single = _run_sc(code, llr, frozen_values, min_sum)
    msg = u_hat[:, code.info_set]
    if single:
        return msg[0], u_hat[0]
    return msg, u_hat


def syndrome(code: PolarCode, k) -> np.ndarray:
    """The frozen-position part of ``polar_transform(k)``; zero exactly on zero-frozen codewords."""
    k = _bits_with_batch(k, code.n, "input")
    return polar_transform(k)[..., code.frozen_set]


def channel_llr_magnitude(channels, n: int) -> np.ndarray:
    p = np.clip(np.asarray(channels, dtype=float), 0.0, 0.5)
    if p.shape != (n,):
        raise ShapeError(f"channel probabilities have length {p.shape}, expected ({n},)")
    with np.errstate(divide="ignore"):
        mag = np.log1p(-p) - np.log(p)
    mag = np.clip(mag, LLR_MIN, LLR_MAX)
    tie = np.random.default_rng(0x5EED).random(n)
    return mag * (1.0 + _TIE_SCALE * tie)


def syndrome_decode(code: PolarCode, noisy, r, channels=None, min_sum: bool = False) -> np.ndarray:
    """Return the member of the coset with syndrome ``r`` that SC decoding finds nearest to ``noisy``.

    ``channels`` defaults to the crossover probabilities the code was designed
    for.  The output always has syndrome ``r``.
    """
    noisy = _bits_with_batch(noisy, code.n, "noisy word")
    p = code.channel_p if channels is None else channels
    mag = channel_llr_magnitude(p, code.n)
    llr = (1.0 - 2.0 * noisy.astype(float)) * mag
    _, u_hat = sc_decode(code, llr, r, min_sum)
    return polar_transform(u_hat)


def syndrome_decoder(code: PolarCode, s, channels=None, min_sum: bool = False) -> np.ndarray:
    """SynDec: the most likely error pattern (under the channel model) with syndrome ``s``."""
    s = _bits_with_batch(s, code.n - code.m, "syndrome")
    zeros = np.zeros(s.shape[:-1] + (code.n,), dtype=np.uint8)
    return syndrome_decode(code, zeros, s, channels, min_sum)


def genie_error_rates(channels, trials: int, seed: int = 0, batch: int = 10000) -> np.ndarray:
    """Per-position error rate of genie-aided SC on the all-zero word over a binary symmetric channel.

    Every earlier bit is supplied correctly, so each position's rate measures
    the quality of its synthesized channel.
    """
    p = np.asarray(channels, dtype=float)
    n = len(p)
    code = PolarCode(n, 0, np.arange(n), polarize(bhattacharyya(p)), p)
    mag = channel_llr_magnitude(p, n)
    rng = np.random.default_rng(seed)
    errors = np.zeros(n)
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        flips = rng.random((b, n)) < p
        llr = np.where(flips, -mag, mag)
        leaf = np.zeros((b, n))
        _run_sc(code, llr, None, False, leaf_llr=leaf)
        errors += np.sum(leaf < 0, axis=0)
        done += b
    return errors / trials


def block_success_rate(code: PolarCode, channels, trials: int, seed: int = 0,
                       batch: int = 1000) -> float:
    """Monte-Carlo probability that a random k is recovered from a BSC-corrupted copy."""
    p = np.asarray(channels, dtype=float)
    rng = np.random.default_rng(seed)
    ok = 0
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        k = rng.integers(0, 2, (b, code.n), dtype=np.uint8)
        noisy = k ^ (rng.random((b, code.n)) < p).astype(np.uint8)
        k_hat = syndrome_decode(code, noisy, syndrome(code, k))
        ok += int(np.sum(np.all(k_hat == k, axis=1)))
        done += b
    return ok / trials
