import math

import numpy as np
import pytest
from scipy import stats

from spectral_hds.errors import DegenerateError, ParameterError, ParseError
from spectral_hds.minutiae import (Minutia, MinutiaSet, NoiseModel, SyntheticDatabase, generate_database,
                                   generate_finger, perturb, read_minutia_file, rotate_minutiae,
                                   translate_minutiae, write_minutia_file)

ZERO_NOISE = NoiseModel(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, seed=3)


def test_minutia_wraps_angle_and_rejects_nonfinite():
    assert Minutia(0, 0, -math.pi / 2).theta == pytest.approx(3 * math.pi / 2)
    assert Minutia(0, 0, 2 * math.pi).theta == 0.0
    assert 0.0 <= Minutia(0, 0, -1e-300).theta < 2 * math.pi
    with pytest.raises(ParameterError):
        Minutia(float("nan"), 0, 0)


def test_set_size_limits():
    one = (Minutia(0, 0, 0),)
    with pytest.raises(DegenerateError):
        MinutiaSet(one, "f", "i")
    with pytest.raises(ParameterError):
        MinutiaSet(tuple(Minutia(i, 0, 0) for i in range(513)), "f", "i")
    with pytest.raises(ParameterError):
        MinutiaSet(one * 2, "", "i")


def test_generate_finger_range_and_determinism():
    a = generate_finger(35, 500, 500, seed=1)
    b = generate_finger(35, 500, 500, seed=1)
    c = generate_finger(35, 500, 500, seed=2)
    assert a == b
    assert a != c
    assert 15 <= len(a) <= 60
    x, y, _ = a.arrays
    assert np.all((x >= 0) & (x < 500) & (y >= 0) & (y < 500))


@pytest.mark.parametrize("kw", [dict(z_mean=1), dict(field_width=0), dict(field_height=-1)])
def test_generate_finger_rejects_bad_parameters(kw):
    with pytest.raises(ParameterError):
        generate_finger(**kw)


def test_orientations_uniform_chi_square():
    thetas = np.concatenate([generate_finger(200, seed=s).arrays[2] for s in range(500)])
    assert len(thetas) >= 10 ** 5
    counts, _ = np.histogram(thetas, bins=36, range=(0, 2 * math.pi))
    assert stats.chisquare(counts).pvalue > 0.001


def test_zero_noise_perturb_is_identity():
    f = generate_finger(seed=4)
    g = perturb(f, ZERO_NOISE)
    assert g.finger_id == f.finger_id and g.image_id != f.image_id
    for a, b in zip(f.arrays, g.arrays):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_perturb_full_drop_is_degenerate():
    f = generate_finger(seed=4)
    with pytest.raises(DegenerateError):
        perturb(f, NoiseModel(0, 0, 1.0, 0.0, 0, 0, seed=1))


def test_perturb_jitter_std():
    f = generate_finger(seed=5)
    model = dict(angle_sigma=0, drop_prob=0, insert_rate=0, global_shift_max=0, global_rot_max=0)
    x0 = f.arrays[0]
    dx = np.concatenate([perturb(f, NoiseModel(jitter_sigma=1.0, seed=s, **model)).arrays[0] - x0
                         for s in range(10 ** 4 // len(f) + 1)])
    assert abs(dx.std() - 1.0) < 0.05


def test_perturb_deterministic_per_seed():
    f = generate_finger(seed=6)
    assert perturb(f, NoiseModel(seed=9)) == perturb(f, NoiseModel(seed=9))
    assert perturb(f, NoiseModel(seed=9)) != perturb(f, NoiseModel(seed=10))


def test_noise_model_validation():
    with pytest.raises(ParameterError):
        NoiseModel(drop_prob=1.5)
    with pytest.raises(ParameterError):
        NoiseModel(jitter_sigma=-1)


def test_rigid_helpers():
    f = generate_finger(seed=7)
    r = rotate_minutiae(rotate_minutiae(f, 0.3), -0.3)
    t = translate_minutiae(f, 5, -2)
    np.testing.assert_allclose(r.arrays[0], f.arrays[0], atol=1e-9)
    np.testing.assert_allclose(t.arrays[1], f.arrays[1] - 2)


def test_file_round_trip(tmp_path):
    sets = [generate_finger(seed=s, finger_id=f"f{s}") for s in range(3)]
    path = tmp_path / "m.txt"
    write_minutia_file(sets, path)
    back = read_minutia_file(path)
    assert [(s.finger_id, s.image_id) for s in back] == [(s.finger_id, s.image_id) for s in sets]
    for a, b in zip(sets, back):
        for u, v in zip(a.arrays, b.arrays):
            np.testing.assert_allclose(u, v, atol=1e-6)


def test_file_single_line_record(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("# finger=a image=b\n10.0 20.0 1.5708\n5 5 0\n")
    (s,) = read_minutia_file(path)
    assert s.minutiae[0] == Minutia(10.0, 20.0, 1.5708)


def test_file_one_minutia_record_rejected(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("# finger=a image=b\n10.0 20.0 1.5708\n")
    with pytest.raises(ParseError):
        read_minutia_file(path)


@pytest.mark.parametrize("body, line", [
    ("# finger=a image=b\n1 2\n", 2),
    ("# finger=a image=b\n1 2 3\n1 x 3\n", 3),
    ("1 2 3\n", 1),
    ("# nothing here\n", 1),
    ("# finger=a image=b\n\n", 2),
])
def test_file_errors_carry_line_number(tmp_path, body, line):
    path = tmp_path / "m.txt"
    path.write_text(body)
    with pytest.raises(ParseError) as info:
        read_minutia_file(path)
    assert info.value.line == line


def test_generate_database_layout():
    db = generate_database(3, 4, NoiseModel(), seed=2)
    assert db.n_fingers == 3 and all(len(imgs) == 4 for imgs in db.fingers)
    assert len({s.finger_id for s in db.all_sets()}) == 3
    again = SyntheticDatabase.from_sets(db.all_sets())
    assert [[s.image_id for s in f] for f in again.fingers] == [[s.image_id for s in f] for f in db.fingers]
    assert generate_database(3, 4, NoiseModel(), seed=2).all_sets() == db.all_sets()
