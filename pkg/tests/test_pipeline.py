import dataclasses

import numpy as np
import pytest

from spectral_hds.com import SALT_BYTES, HelperRecord
from spectral_hds.errors import ConfigurationError, ParameterError
from spectral_hds.minutiae import NoiseModel, generate_database, generate_finger, perturb
from spectral_hds.pipeline import (EnrollmentPolicy, Scheme, build_scheme, component_vector, design_channels,
                                   default_reliable_count, enroll, enrollment_string, select_reliable,
                                   verification_string, verify)
from spectral_hds.polar import construct
from spectral_hds.protocol import PairingProtocol, build_corpus, zlhds_strings
from spectral_hds.spectral import SpectralGrid
from spectral_hds.zlhds import ChannelStats, gen1_map

GRID = SpectralGrid()
E1 = EnrollmentPolicy()


def fixed_salt():
    return b"\x01" * SALT_BYTES


@pytest.fixture(scope="module")
def setup():
    db = generate_database(30, 4, NoiseModel(), seed=3)
    corpus = build_corpus(db, GRID, ("xtheta",))
    stats = corpus.stats()
    return db, corpus, stats, build_scheme(GRID, stats, m=32)


def test_policy_invariants():
    for kw in (dict(method="E1", t=2), dict(method="E3", t=2), dict(method="E2", t=0),
               dict(method="E4"), dict(kinds=()), dict(kinds=("xtheta", "xtheta"))):
        with pytest.raises(ParameterError):
            EnrollmentPolicy(**kw)
    assert EnrollmentPolicy(kinds=("xbeta", "xtheta")).kinds == ("xtheta", "xbeta")
    assert default_reliable_count(("xtheta", "xbeta")) == 1024


def test_enrollment_preconditions(setup):
    db, _, stats, _ = setup
    with pytest.raises(ParameterError):
        enrollment_string(db.fingers[0][:2], E1, GRID, stats)
    with pytest.raises(ParameterError):
        enrollment_string([db.fingers[0][0], db.fingers[1][0], db.fingers[0][1]],
                          EnrollmentPolicy("E2", 3), GRID, stats)
    with pytest.raises(ConfigurationError):
        enrollment_string(db.fingers[0][:1], EnrollmentPolicy(kinds=("xbeta",)), GRID, stats)


def test_e1_self_accept(setup):
    db, _, _, scheme = setup
    for imgs in db.fingers[:5]:
        assert verify(imgs[0], enroll([imgs[0]], E1, scheme), scheme)


def test_e2_identical_images_equal_e1(setup):
    db, _, stats, _ = setup
    img = db.fingers[2][1]
    s1, w1, _ = enrollment_string([img], E1, GRID, stats)
    s3, w3, used = enrollment_string([img] * 3, EnrollmentPolicy("E2", 3), GRID, stats)
    np.testing.assert_array_equal(s3, s1)
    np.testing.assert_allclose(w3, w1, atol=1e-12)
    np.testing.assert_allclose(used.sigma_v, np.asarray(stats.sigma_v) / np.sqrt(3))


def test_e2_single_image_is_e1(setup):
    db, _, stats, _ = setup
    img = db.fingers[3][0]
    a = enrollment_string([img], E1, GRID, stats)
    b = enrollment_string([img], EnrollmentPolicy("E2", 1), GRID, stats)
    for x, y in zip(a[:2], b[:2]):
        np.testing.assert_array_equal(x, y)
    assert b[2] is stats


def test_e3_majority_recount(setup):
    _, _, stats, _ = setup
    true = generate_finger(seed=77, finger_id="maj")
    clean = [perturb(true, NoiseModel(jitter_sigma=0.5, drop_prob=0.02, seed=s)) for s in (1, 2)]
    bad = perturb(true, NoiseModel(jitter_sigma=8.0, angle_sigma=1.0, drop_prob=0.5, insert_rate=0.5, seed=3))
    images = [clean[0], bad, clean[1]]
    symbols, helper, used = enrollment_string(images, EnrollmentPolicy("E3", 3), GRID, stats)
    strings = np.stack([gen1_map(component_vector(img, GRID), used).symbols for img in images])
    recount = (strings.sum(axis=0) >= 2).astype(int)
    np.testing.assert_array_equal(symbols, recount)
    agree = strings[0] == strings[2]
    np.testing.assert_array_equal(symbols[agree], strings[0][agree])
    _, w2, _ = enrollment_string(images, EnrollmentPolicy("E2", 3), GRID, stats)
    np.testing.assert_array_equal(helper, w2)


def test_select_reliable_examples():
    rng = np.random.default_rng(0)
    sx = rng.uniform(0.5, 2, 640)
    sv = rng.uniform(0.1, 1.5, 640)
    sx[5] = 0.0
    st = ChannelStats.from_sigmas(sx, sv)
    np.testing.assert_array_equal(select_reliable(st, 640).retained, np.arange(640))
    sel = select_reliable(st, 512)
    ratio = st.noise_ratio
    expected = sorted(sorted(range(640), key=lambda i: (ratio[i], i))[:512])
    assert sel.retained.tolist() == expected
    assert 5 not in select_reliable(st, 639).retained
    with pytest.raises(ParameterError):
        select_reliable(st, 641)
    with pytest.raises(TypeError):
        select_reliable(rng.standard_normal((3, 640)), 512)


def test_selection_ties_take_lower_index():
    st = ChannelStats.from_sigmas(np.ones(8), np.r_[np.full(4, 0.5), np.full(4, 0.2)])
    assert select_reliable(st, 6).retained.tolist() == [0, 1, 4, 5, 6, 7]


def test_pipeline_matches_protocol_path(setup):
    db, corpus, stats, scheme = setup
    np.testing.assert_allclose(corpus.components[4, 2], component_vector(db.fingers[4][2], GRID), atol=1e-12)
    proto = PairingProtocol(E1, impostors="all")
    strings = zlhds_strings(corpus, proto, stats, scheme.selection)
    record = enroll([db.fingers[0][0]], E1, scheme, fixed_salt)
    k = enrollment_string([db.fingers[0][0]], E1, GRID, stats)[0][scheme.selection.retained]
    np.testing.assert_array_equal(strings.genuine_k[0], k)
    for row, j in enumerate((1, 2, 3)):
        np.testing.assert_array_equal(strings.genuine_k_prime[row], verification_string(db.fingers[0][j], record, scheme))


def test_impostors_rejected(setup):
    db, _, _, scheme = setup
    records = [enroll([imgs[0]], E1, scheme) for imgs in db.fingers[:20]]
    rejected = trials = 0
    for f, rec in enumerate(records):
        for g in range(20):
            if g != f and trials < 200 and (g - f) % 20 < 11:
                rejected += not verify(db.fingers[g][1], rec, scheme)
                trials += 1
    assert trials == 200 and rejected / trials >= 0.99


def test_low_noise_genuine_accept_rate(setup):
    _, _, _, scheme = setup
    accepted = 0
    for f in range(20):
        true = generate_finger(seed=900 + f, finger_id=f"low{f}")
        a, b = (perturb(true, NoiseModel(jitter_sigma=0.5, drop_prob=0.02, seed=10 * f + s)) for s in (0, 1))
        accepted += verify(b, enroll([a], E1, scheme), scheme)
    print(f"low-noise genuine accept rate: {accepted / 20:.2f}")
    assert accepted >= 10


def test_determinism_except_salt(setup):
    db, _, _, scheme = setup
    img = db.fingers[1][0]
    assert enroll([img], E1, scheme, fixed_salt).to_json() == enroll([img], E1, scheme, fixed_salt).to_json()
    a, b = enroll([img], E1, scheme), enroll([img], E1, scheme)
    assert a.salt != b.salt
    np.testing.assert_array_equal(a.syndrome, b.syndrome)
    np.testing.assert_array_equal(a.stage1_helper, b.stage1_helper)


def test_configuration_mismatch(setup):
    db, _, stats, scheme = setup
    rec = enroll([db.fingers[0][0]], E1, scheme)
    moved = dataclasses.replace(rec, meta={**rec.meta, "grid_hash": SpectralGrid(sigma=3.2).digest()})
    with pytest.raises(ConfigurationError):
        verify(db.fingers[0][0], moved, scheme)
    other = build_scheme(GRID, stats, m=33)
    with pytest.raises(ConfigurationError):
        verify(db.fingers[0][0], rec, other)
    with pytest.raises(ConfigurationError):
        Scheme(SpectralGrid(sigma=3.2), stats, scheme.selection, scheme.code)
    with pytest.raises(ParameterError):
        Scheme(GRID, stats, scheme.selection, construct(np.full(256, 0.1), 32))
    assert isinstance(HelperRecord.from_json(rec.to_json()), HelperRecord)


def test_design_channels_follow_noise_ratio(setup):
    _, _, stats, scheme = setup
    sel = scheme.selection
    p1 = design_channels(stats, sel)
    p3 = design_channels(stats, sel, t=3)
    ratio = stats.noise_ratio[sel.retained]
    order = np.argsort(ratio)
    assert np.all(np.diff(p1[order]) >= -1e-12)
    assert np.all(p3 <= p1 + 1e-12) and np.all((p1 >= 0) & (p1 <= 0.5))
    dead = ChannelStats.from_sigmas(np.r_[0.0, np.ones(3)], np.r_[0.0, np.full(3, 0.3)])
    assert design_channels(dead, select_reliable(dead, 4))[0] == 0.5
