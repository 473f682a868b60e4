import numpy as np
import pytest

from spectral_hds.com import (SALT_BYTES, HelperRecord, RandomCodebook, codebook_decode, codebook_gen2,
                              codebook_rep2, gen2, hash_bits, reconstruct, reconstruct_xor, rep2)
from spectral_hds.errors import ConfigurationError, ShapeError
from spectral_hds.polar import block_success_rate, construct


def fixed_salt(b=7):
    return lambda: bytes([b]) * SALT_BYTES


@pytest.fixture(scope="module")
def code():
    return construct(np.full(256, 0.08), 64)


def noisy_copy(k, p, rng):
    return k ^ (rng.random(k.shape) < p).astype(np.uint8)


def test_hash_is_salted_and_bit_exact():
    k = np.array([1, 0, 1, 1, 0, 0, 0, 1, 1], dtype=np.uint8)
    assert hash_bits(k, b"a" * 16) != hash_bits(k, b"b" * 16)
    assert hash_bits(k, b"a" * 16) == hash_bits(k.copy(), b"a" * 16)
    assert hash_bits(k ^ np.eye(9, dtype=np.uint8)[3], b"a" * 16) != hash_bits(k, b"a" * 16)


def test_noiseless_accept(code):
    k = np.random.default_rng(0).integers(0, 2, 256, dtype=np.uint8)
    ok, k_hat = rep2(k, gen2(k, code), code)
    assert ok
    np.testing.assert_array_equal(k_hat, k)


def test_xor_form_equals_direct_decode(code):
    rng = np.random.default_rng(1)
    for _ in range(100):
        k = rng.integers(0, 2, 256, dtype=np.uint8)
        rec = gen2(k, code, fixed_salt())
        k_prime = noisy_copy(k, 0.15, rng)
        np.testing.assert_array_equal(reconstruct(k_prime, rec, code), reconstruct_xor(k_prime, rec, code))


def test_salts_are_unique():
    small = construct(np.full(16, 0.1), 8)
    k = np.zeros(16, dtype=np.uint8)
    salts = {gen2(k, small).salt for _ in range(10 ** 4)}
    assert len(salts) == 10 ** 4


def test_complement_rejected(code):
    k = np.random.default_rng(2).integers(0, 2, 256, dtype=np.uint8)
    ok, k_hat = rep2(1 - k, gen2(k, code), code)
    assert not ok and k_hat is None


def test_tampered_digest_rejected(code):
    k = np.random.default_rng(3).integers(0, 2, 256, dtype=np.uint8)
    rec = gen2(k, code)
    bad = HelperRecord(rec.syndrome, rec.salt, bytes(32), rec.code_hash)
    assert not rep2(k, bad, code)[0]


def test_record_json_round_trip(code, tmp_path):
    k = np.random.default_rng(4).integers(0, 2, 256, dtype=np.uint8)
    rec = gen2(k, code).with_stage1(np.linspace(0, 0.9, 640), np.arange(256) * 2, {"n_intervals": 2})
    text = rec.to_json()
    back = HelperRecord.from_json(text)
    assert back.to_json() == text
    np.testing.assert_array_equal(back.syndrome, rec.syndrome)
    np.testing.assert_array_equal(back.stage1_helper, rec.stage1_helper)
    assert (back.salt, back.digest, back.code_hash, back.meta) == (rec.salt, rec.digest, rec.code_hash, rec.meta)
    rec.save(tmp_path / "r.json")
    assert HelperRecord.load(tmp_path / "r.json").to_json() == text


def test_code_mismatch_is_configuration_error(code):
    k = np.zeros(256, dtype=np.uint8)
    rec = gen2(k, code)
    with pytest.raises(ConfigurationError):
        rep2(k, rec, construct(np.full(256, 0.08), 65))


def test_shape_checks(code):
    with pytest.raises(ShapeError):
        gen2(np.zeros(255), code)
    with pytest.raises(ShapeError):
        HelperRecord(np.zeros(4), b"x", bytes(32), "h")


def test_accept_rate_matches_block_success(code):
    rng = np.random.default_rng(5)
    trials, accepted = 1000, 0
    for _ in range(trials):
        k = rng.integers(0, 2, 256, dtype=np.uint8)
        accepted += rep2(noisy_copy(k, 0.08, rng), gen2(k, code, fixed_salt()), code)[0]
    expected = block_success_rate(code, code.channel_p, 4000, seed=6)
    assert abs(accepted / trials - expected) < 0.02


def test_single_bit_codebook_is_majority_vote():
    book = RandomCodebook((np.array([[0] * 15, [1] * 15], dtype=np.uint8),))
    words = np.random.default_rng(7).integers(0, 2, (200, 15), dtype=np.uint8)
    np.testing.assert_array_equal(book.decode_group(0, words), (words.sum(axis=1) > 7).astype(int))


@pytest.mark.parametrize("ell", [5, 10, 15])
def test_codebook_smoke(ell):
    book = RandomCodebook.random(ell, groups=4, group_length=256, seed=ell)
    assert book.ell == ell and book.length == 1024
    rng = np.random.default_rng(ell)
    k = rng.integers(0, 2, 1024, dtype=np.uint8)
    rec = codebook_gen2(k, book, rng=rng)
    assert codebook_rep2(k, rec, book)
    assert codebook_rep2(noisy_copy(k, 0.1, rng), rec, book)
    assert not codebook_rep2(rng.integers(0, 2, 1024, dtype=np.uint8), rec, book)


def test_codebook_decode_batches():
    book = RandomCodebook.random(4, groups=2, group_length=32, seed=1)
    rng = np.random.default_rng(8)
    ks = rng.integers(0, 2, (5, 64), dtype=np.uint8)
    recs = [codebook_gen2(k, book, rng=rng) for k in ks]
    batch = codebook_decode(ks, np.stack([r.offsets for r in recs]), book)
    for row, k, r in zip(batch, ks, recs):
        np.testing.assert_array_equal(row, codebook_decode(k, r.offsets, book))
