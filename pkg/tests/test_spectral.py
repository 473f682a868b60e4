import math

import numpy as np
import pytest

from oracles import spectral_reference
from spectral_hds.errors import DegenerateError, ShapeError, UnsupportedKindError
from spectral_hds.minutiae import (Minutia, MinutiaSet, NoiseModel, generate_finger, perturb,
                                   rotate_minutiae, translate_minutiae)
from spectral_hds.spectral import (KINDS, SpectralGrid, SpectralMap, fuse_scores, normalize, rotate_map,
                                   similarity, spectral, spectral_xbeta, spectral_xtheta, write_spectral_csv)

GRID = SpectralGrid()


def random_set(seed, z=None):
    rng = np.random.default_rng(seed)
    z = z or int(rng.integers(2, 21))
    return MinutiaSet.from_arrays(rng.uniform(0, 300, z), rng.uniform(0, 300, z),
                                  rng.uniform(0, 2 * math.pi, z), "f", "i")


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


def test_default_grid():
    assert GRID.shape == (16, 20)
    assert GRID.r_values[0] == 16 and GRID.r_values[-1] == 130
    assert GRID.sigma == 2.3


@pytest.mark.parametrize("kw", [dict(r_values=(5, 5)), dict(r_values=(-1, 2)), dict(q_values=(2, 1)),
                                dict(sigma=0), dict(r_values=())])
def test_grid_validation(kw):
    with pytest.raises(ShapeError):
        SpectralGrid(**kw)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("seed", range(5))
def test_matches_triple_loop(kind, seed):
    s = random_set(seed, z=5 + seed)
    x, y, t = s.arrays
    ref = spectral_reference(x, y, t, GRID.r_values, GRID.q_values, GRID.sigma, kind)
    assert rel_err(spectral(s, GRID, kind).values, ref) < 1e-9


def test_two_minutiae_xtheta_unit_magnitude():
    s = MinutiaSet((Minutia(0, 0, 1.0), Minutia(30, 40, 1.0)), "f", "i")
    grid = SpectralGrid(r_values=(50.0,), q_values=(1, 2, 3))
    m = spectral_xtheta(s, grid)
    np.testing.assert_allclose(np.abs(m.values), 1.0, atol=1e-12)
    phi = math.atan2(0 - 40, 0 - 30)
    np.testing.assert_allclose(m.values[:, 0], np.exp(1j * np.array([1, 2, 3]) * phi), atol=1e-12)


def test_two_minutiae_xbeta_q2():
    s = MinutiaSet((Minutia(0, 0, 0), Minutia(30, 40, 0)), "f", "i")
    m = spectral_xbeta(s, SpectralGrid(r_values=(50.0,), q_values=(2,)))
    assert m.values[0, 0] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_translation_invariance(kind):
    s = random_set(11, 20)
    a = spectral(s, GRID, kind).values
    b = spectral(translate_minutiae(s, 123.4, -56.7), GRID, kind).values
    assert rel_err(b, a) < 1e-9


def test_pair_orientation_follows_list_order():
    # swapping a pair turns phi into phi + pi; for xbeta that is exactly a factor (-1)^q
    s = random_set(12, 15)
    rev = MinutiaSet(tuple(reversed(s.minutiae)), "f", "i")
    sign = (-1.0) ** np.asarray(GRID.q_values)[:, None]
    assert rel_err(spectral_xbeta(rev, GRID).values, sign * spectral_xbeta(s, GRID).values) < 1e-9
    assert rel_err(spectral_xtheta(rev, GRID).values, spectral_xtheta(s, GRID).values) > 1e-3


def test_rotation_law_xtheta():
    s = random_set(13, 20)
    for delta in (0.1, -0.7, 2.0):
        rotated = spectral_xtheta(rotate_minutiae(s, delta), GRID).values
        predicted = rotate_map(spectral_xtheta(s, GRID), delta).values
        assert rel_err(rotated, predicted) < 1e-9


def test_rotate_map_identities():
    m = spectral_xtheta(random_set(14), GRID)
    np.testing.assert_array_equal(rotate_map(m, 0.0).values, m.values)
    np.testing.assert_allclose(rotate_map(m, 2 * math.pi).values, m.values, rtol=0, atol=1e-12 * np.abs(m.values).max())
    with pytest.raises(UnsupportedKindError):
        rotate_map(spectral_xbeta(random_set(14), GRID), 0.1)


def test_degenerate_inputs():
    with pytest.raises(DegenerateError):
        normalize(SpectralMap(GRID, np.full(GRID.shape, 2 + 2j), "xtheta"))
    with pytest.raises(ShapeError):
        SpectralMap(GRID, np.ones((2, 2), dtype=complex), "xtheta")
    with pytest.raises(UnsupportedKindError):
        spectral(random_set(1), GRID, "xgamma")


def test_normalize_symmetric_example():
    grid = SpectralGrid(r_values=(1.0, 2.0), q_values=(1, 2))
    m = normalize(SpectralMap(grid, np.array([[1, -1], [1j, -1j]]), "xtheta"))
    pooled = np.concatenate([m.values.real.ravel(), m.values.imag.ravel()])
    assert pooled.mean() == pytest.approx(0, abs=1e-12)
    assert pooled.var() == pytest.approx(1, abs=1e-12)
    np.testing.assert_allclose(m.values, np.array([[1, -1], [1j, -1j]]) * math.sqrt(2))


def test_normalize_statistics_and_idempotence():
    m = normalize(spectral_xbeta(random_set(15, 20), GRID))
    pooled = np.concatenate([m.values.real.ravel(), m.values.imag.ravel()])
    assert abs(pooled.mean()) < 1e-9 and abs(pooled.var() - 1) < 1e-9
    np.testing.assert_allclose(normalize(m).values, m.values, atol=1e-9)


def test_similarity_algebra():
    m = normalize(spectral_xtheta(random_set(16, 20), GRID))
    neg = SpectralMap(GRID, -m.values, "xtheta")
    assert similarity(m, m) == pytest.approx(np.mean(np.abs(m.values) ** 2))
    assert similarity(m, neg) == pytest.approx(-similarity(m, m))
    other = normalize(spectral_xtheta(random_set(17, 20), GRID))
    assert similarity(m, other) == pytest.approx(similarity(other, m))
    with pytest.raises(ShapeError):
        similarity(m, normalize(spectral_xtheta(random_set(16), SpectralGrid(sigma=3.2))))


def test_genuine_scores_exceed_impostor_scores():
    gen, imp = [], []
    for f in range(100):
        true = generate_finger(seed=1000 + f)
        a, b = (normalize(spectral_xtheta(perturb(true, NoiseModel(seed=s)), GRID)) for s in (2 * f, 2 * f + 1))
        gen.append(similarity(a, b))
        c = normalize(spectral_xtheta(generate_finger(seed=5000 + f), GRID))
        imp.append(similarity(a, c))
    assert np.mean(gen) > np.mean(imp) + 0.1


def test_fuse_scores():
    assert fuse_scores(0.3, 0.2) == pytest.approx(0.5)
    assert fuse_scores(0, 0) == 0
    assert fuse_scores(0.7, -0.7) == 0


def test_spectral_csv(tmp_path):
    s = random_set(18)
    maps = [spectral(s, GRID, k) for k in KINDS]
    path = tmp_path / "s.csv"
    write_spectral_csv(maps, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "kind,q,R,re,im"
    assert len(lines) == 1 + 2 * GRID.size
    kind, q, r, re, im = lines[1].split(",")
    assert (kind, int(q), float(r)) == ("xtheta", 1, 16.0)
    assert float(re) == pytest.approx(maps[0].values[0, 0].real, rel=1e-8, abs=1e-12)


def test_components_layout():
    m = spectral_xtheta(random_set(19), GRID)
    c = m.components()
    assert c.shape == (640,)
    np.testing.assert_array_equal(c[:320], m.values.real.ravel())
    np.testing.assert_array_equal(c[320:], m.values.imag.ravel())
