"""Second helper-data stage: code-offset secure sketch and salted hash.

Enrollment stores the syndrome ``r = Syn(k)``, a fresh salt ``z`` and
``H(k || z)``.  Verification recovers ``k_hat`` as the member of the coset
``r`` nearest to the noisy string and accepts when the hashes agree.

A random-codebook variant (several independent groups, nearest-codeword
decoding by exhaustive Hamming distance) serves as a baseline.
"""

from __future__ import annotations

import base64
import hashlib
import json
import secrets
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import polar
from .errors import ConfigurationError, ParameterError, ShapeError

SALT_BYTES = 16


def _bits(k) -> np.ndarray:
    return np.asarray(k, dtype=np.uint8) & 1


def hash_bits(bits, salt: bytes) -> bytes:
    """SHA-256 of the packed bit string followed by the salt."""
    return hashlib.sha256(np.packbits(_bits(bits)).tobytes() + salt).digest()


def default_salt_source() -> bytes:
    return secrets.token_bytes(SALT_BYTES)


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"), validate=True)


@dataclass(frozen=True, eq=False)
class HelperRecord:
    """Everything stored for one enrollment.

    ``digest`` is SHA-256 over ``packbits(k) || salt``; ``code_hash`` binds the
    record to one code descriptor.  ``meta`` echoes the first-stage
    configuration (interval count, grid hash, kind order, policy).
    """

    syndrome: np.ndarray
    salt: bytes
    digest: bytes
    code_hash: str
    stage1_helper: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reliable_mask: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "syndrome", _bits(self.syndrome))
        object.__setattr__(self, "stage1_helper", np.asarray(self.stage1_helper, dtype="<f8"))
        object.__setattr__(self, "reliable_mask", np.asarray(self.reliable_mask, dtype=np.int64))
        if len(self.salt) != SALT_BYTES:
            raise ShapeError(f"salt must be {SALT_BYTES} bytes")
        if len(self.digest) != 32:
            raise ShapeError("digest must be 32 bytes")

    def to_json(self) -> str:
        d = {
            "stage1_helper": _b64(self.stage1_helper.astype("<f8").tobytes()),
            "syndrome": _b64(np.packbits(self.syndrome).tobytes()),
            "syndrome_bits": int(len(self.syndrome)),
            "salt": _b64(self.salt),
            "digest": _b64(self.digest),
            "code_hash": self.code_hash,
            "reliable_mask": self.reliable_mask.tolist(),
            "meta": self.meta,
        }
        return json.dumps(d, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "HelperRecord":
        d = json.loads(text)
        nbits = int(d["syndrome_bits"])
        syn = np.unpackbits(np.frombuffer(_unb64(d["syndrome"]), dtype=np.uint8))[:nbits]
        return cls(
            syndrome=syn,
            salt=_unb64(d["salt"]),
            digest=_unb64(d["digest"]),
            code_hash=d["code_hash"],
            stage1_helper=np.frombuffer(_unb64(d["stage1_helper"]), dtype="<f8").copy(),
            reliable_mask=np.asarray(d["reliable_mask"], dtype=np.int64),
            meta=d.get("meta", {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "HelperRecord":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def with_stage1(self, helper, reliable_mask, meta) -> "HelperRecord":
        return replace(self, stage1_helper=helper, reliable_mask=reliable_mask, meta=dict(meta))


def gen2(k, code: polar.PolarCode, salt_source: Callable[[], bytes] | None = None) -> HelperRecord:
    k = _bits(k)
    if k.shape != (code.n,):
        raise ShapeError(f"k has length {k.shape}, code expects {code.n}")
    salt = (salt_source or default_salt_source)()
    return HelperRecord(polar.syndrome(code, k), salt, hash_bits(k, salt), code.content_hash())


def _check_code(record: HelperRecord, code: polar.PolarCode):
    if record.code_hash != code.content_hash():
        raise ConfigurationError("record was made with a different code descriptor")


def reconstruct(k_prime, record: HelperRecord, code: polar.PolarCode, channels=None) -> np.ndarray:
    """Nearest member of the coset ``record.syndrome`` to ``k_prime`` (batched over rows)."""
    _check_code(record, code)
    return polar.syndrome_decode(code, k_prime, record.syndrome, channels)


def reconstruct_xor(k_prime, record: HelperRecord, code: polar.PolarCode, channels=None) -> np.ndarray:
    """``k' xor SynDec(r xor Syn k')``: the error-pattern form of :func:`reconstruct`."""
    _check_code(record, code)
    k_prime = _bits(k_prime)
    s = record.syndrome ^ polar.syndrome(code, k_prime)
    return k_prime ^ polar.syndrome_decoder(code, s, channels)


def rep2(k_prime, record: HelperRecord, code: polar.PolarCode, channels=None):
    """Return ``(accepted, k_hat)``; ``k_hat`` is ``None`` on reject."""
    k_prime = _bits(k_prime)
    if k_prime.shape != (code.n,):
        raise ShapeError(f"k' has length {k_prime.shape}, code expects {code.n}")
    k_hat = reconstruct(k_prime, record, code, channels)
    if hash_bits(k_hat, record.salt) == record.digest:
        return True, k_hat
    return False, None


# --- random codebook baseline -------------------------------------------------

@dataclass(frozen=True, eq=False)
class RandomCodebook:
    """``groups`` tables of ``2**ell`` random codewords each, stored as bits."""

    tables: tuple[np.ndarray, ...]
    seed: int | None = None

    def __post_init__(self):
        tables = tuple(_bits(t) for t in self.tables)
        if not tables:
            raise ShapeError("codebook needs at least one group")
        rows, length = tables[0].shape
        if rows & (rows - 1) or any(t.shape != (rows, length) for t in tables):
            raise ShapeError("every group needs the same power-of-two number of equal-length codewords")
        if rows > 2 ** 16:
            raise ParameterError("at most 2**16 codewords per group")
        object.__setattr__(self, "tables", tables)
        object.__setattr__(self, "_packed", tuple(np.packbits(t, axis=1) for t in tables))

    @classmethod
    def random(cls, ell: int, groups: int = 4, group_length: int = 256, seed: int = 0) -> "RandomCodebook":
        if not 0 <= ell <= 16:
            raise ParameterError("ell must lie in [0, 16]")
        rng = np.random.default_rng(seed)
        return cls(tuple(rng.integers(0, 2, (2 ** ell, group_length), dtype=np.uint8) for _ in range(groups)), seed)

    @property
    def ell(self) -> int:
        return self.tables[0].shape[0].bit_length() - 1

    @property
    def group_length(self) -> int:
        return self.tables[0].shape[1]

    @property
    def length(self) -> int:
        return self.group_length * len(self.tables)

    def decode_group(self, g: int, words) -> np.ndarray:
        """Index of the nearest codeword (lowest index on ties) for each row of ``words``."""
        words = np.atleast_2d(_bits(words))
        packed = np.packbits(words, axis=1)
        dist = np.bitwise_count(packed[:, None, :] ^ self._packed[g][None, :, :]).sum(axis=2, dtype=np.int64)
        return np.argmin(dist, axis=1)


@dataclass(frozen=True, eq=False)
class CodebookRecord:
    offsets: np.ndarray
    salt: bytes
    digest: bytes


def _message_bits(indices, ell: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    shifts = np.arange(ell - 1, -1, -1)
    return ((idx[..., None] >> shifts) & 1).astype(np.uint8).reshape(idx.shape[:-1] + (-1,))


def _split(k, book: RandomCodebook) -> np.ndarray:
    k = _bits(k)
    if k.shape[-1] != book.length:
        raise ShapeError(f"string has length {k.shape[-1]}, codebook covers {book.length}")
    return k.reshape(k.shape[:-1] + (len(book.tables), book.group_length))


def codebook_gen2(k, book: RandomCodebook, rng=None, salt_source=None) -> CodebookRecord:
    """Pick a random message per group and store ``k_g xor codeword(c_g)``."""
    rng = rng if rng is not None else np.random.default_rng(secrets.randbits(64))
    groups = _split(k, book)
    idx = rng.integers(0, 2 ** book.ell, len(book.tables))
    offsets = np.stack([groups[g] ^ book.tables[g][idx[g]] for g in range(len(book.tables))])
    salt = (salt_source or default_salt_source)()
    return CodebookRecord(offsets, salt, hash_bits(_message_bits(idx, book.ell), salt))


def codebook_decode(k_prime, offsets, book: RandomCodebook) -> np.ndarray:
    """Decoded message indices per group; batched over leading axes of ``k_prime``."""
    groups = _split(k_prime, book)
    single = groups.ndim == 2
    groups = groups.reshape((-1,) + groups.shape[-2:])
    offsets = np.asarray(offsets, dtype=np.uint8).reshape((-1,) + groups.shape[-2:])
    idx = np.stack([book.decode_group(g, groups[:, g] ^ offsets[:, g]) for g in range(len(book.tables))], axis=1)
    return idx[0] if single else idx


def codebook_rep2(k_prime, record: CodebookRecord, book: RandomCodebook) -> bool:
    idx = codebook_decode(k_prime, record.offsets, book)
    return hash_bits(_message_bits(idx, book.ell), record.salt) == record.digest
