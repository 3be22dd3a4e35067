"""Tests des noyaux de corrélation et des matrices de covariance"""
import math
import logging

import numpy as np

import kernels
from errors import SingularCovarianceError
from kernels import MaternParams, RationalQuadParams


def _unit_vector(lon, lat):
    lon, lat = math.radians(lon), math.radians(lat)
    return np.array([math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)])


def test_matern_valeurs():
    p = MaternParams(length_scale=10.0)
    assert kernels.matern32(0.0, p) == 1.0
    assert kernels.matern32(1e6, p) < 1e-12
    np.testing.assert_allclose(kernels.matern32(10.0, p), (1 + math.sqrt(3)) * math.exp(-math.sqrt(3)), rtol=1e-12)
    np.testing.assert_allclose(kernels.matern32(10.0, p), 0.48335, atol=1e-5)


def test_rationnel_quadratique_valeurs():
    p = RationalQuadParams(length_scale=3.0, squared_distance=False)
    assert kernels.rational_quadratic(0.0, p) == 1.0
    np.testing.assert_allclose(kernels.rational_quadratic(4 * 3.0 ** 2, p), 0.25, rtol=1e-12)
    w = np.linspace(0, 200, 101)
    rho = kernels.rational_quadratic(w, p)
    assert np.all(np.diff(rho) < 0) and np.all(rho > 0)


def test_variante_distance_carree():
    p = RationalQuadParams(length_scale=2.0, squared_distance=True)
    np.testing.assert_allclose(kernels.rational_quadratic(4.0, p), 0.25, rtol=1e-12)


def test_distance_negative_refusee():
    try:
        kernels.matern32(-1.0, MaternParams(1.0))
        assert False, "distance négative doit être refusée"
    except ValueError:
        pass


def test_derivees_longueur():
    w = np.linspace(0.0, 30.0, 13)
    h = 1e-6
    for p, make in ((MaternParams(5.0), MaternParams),
                    (RationalQuadParams(5.0, squared_distance=False), lambda l: RationalQuadParams(l, False))):
        fd = (kernels.correlation(w, make(5.0 + h)) - kernels.correlation(w, make(5.0 - h))) / (2 * h)
        np.testing.assert_allclose(kernels.correlation_dl(w, p), fd, rtol=1e-5, atol=1e-9)


def test_distance_cordale():
    assert kernels.chordal_distance((8.5, 47.4), (8.5, 47.4)) == 0.0
    np.testing.assert_allclose(kernels.chordal_distance((0.0, 0.0), (180.0, 0.0)), 2 * 6371.0, rtol=1e-12)
    expected = 6371.0 * np.linalg.norm(_unit_vector(8.5, 47.4) - _unit_vector(8.6, 47.5))
    np.testing.assert_allclose(kernels.chordal_distance((8.5, 47.4), (8.6, 47.5)), expected, rtol=1e-9)


def test_distance_cordale_plongement_3d():
    rng = np.random.default_rng(12)
    lon = rng.uniform(-180.0, 180.0, size=(1000, 2))
    lat = rng.uniform(-90.0, 90.0, size=(1000, 2))
    got = kernels.chordal_distance((lon[:, 0], lat[:, 0]), (lon[:, 1], lat[:, 1]))
    expected = [6371.0 * np.linalg.norm(_unit_vector(a, b) - _unit_vector(c, d))
                for a, c, b, d in zip(lon[:, 0], lon[:, 1], lat[:, 0], lat[:, 1])]
    np.testing.assert_allclose(got, expected, rtol=1e-9, atol=1e-9)
    assert np.all(got <= 2 * 6371.0 + 1e-9)


def test_distance_cordale_echelle_cantonale():
    # corde et arc quasi confondus sur quelques km
    chord = kernels.chordal_distance((8.5, 47.4), (8.6, 47.4))
    planar = 6371.0 * math.radians(0.1) * math.cos(math.radians(47.4))
    np.testing.assert_allclose(chord, planar, rtol=1e-3)


def test_matrice_distances_cordales_symetrique():
    lonlat = np.array([[8.4, 47.3], [8.6, 47.5], [8.9, 47.2]])
    d = kernels.distance_matrix(lonlat, 'chordal')
    np.testing.assert_allclose(d, d.T)
    assert np.all(np.diag(d) == 0.0)


def test_covariance_une_localisation():
    cov = kernels.build_covariance([[0.0, 0.0]], MaternParams(1.0))
    assert cov.entries.shape == (1, 1)
    np.testing.assert_allclose(cov.entries[0, 0], 1.0 + cov.jitter)


def test_covariance_localisations_confondues():
    cov = kernels.build_covariance([[1.0, 1.0], [1.0, 1.0]], MaternParams(2.0))
    np.testing.assert_allclose(cov.entries[0, 1], 1.0)
    assert cov.jitter > 0
    np.testing.assert_allclose(cov.chol @ cov.chol.T, cov.entries, atol=1e-12)


def test_covariance_paire_par_paire():
    rng = np.random.default_rng(3)
    lonlat = np.column_stack([rng.uniform(8.4, 8.9, 5), rng.uniform(47.2, 47.6, 5)])
    p = MaternParams(10.0)
    cov = kernels.build_covariance(lonlat, p, distance='chordal')
    for i in range(5):
        for j in range(5):
            expected = kernels.matern32(kernels.chordal_distance(lonlat[i], lonlat[j]), p)
            expected += cov.jitter if i == j else 0.0
            np.testing.assert_allclose(cov.entries[i, j], expected, rtol=1e-12)


def test_covariance_singuliere():
    import config
    saved = (config.JITTER_START, config.JITTER_MAX)
    # Pépites absorbées par l'arrondi: la matrice reste exactement singulière
    config.JITTER_START, config.JITTER_MAX = 1e-300, 1e-299
    try:
        kernels.build_covariance(np.zeros((20, 2)), MaternParams(1.0))
        assert False, "matrice singulière attendue"
    except SingularCovarianceError:
        pass
    finally:
        config.JITTER_START, config.JITTER_MAX = saved


def test_log_densite_contre_scipy():
    from scipy import stats
    rng = np.random.default_rng(4)
    xy = rng.uniform(0, 20, size=(6, 2))
    cov = kernels.build_covariance(xy, MaternParams(8.0))
    v = rng.normal(size=6)
    expected = stats.multivariate_normal(mean=np.zeros(6), cov=cov.entries).logpdf(v)
    np.testing.assert_allclose(cov.log_density(v), expected, rtol=1e-10)


def test_correlation_empirique_des_tirages():
    cov = kernels.build_covariance([[0.0, 0.0], [5.0, 0.0]], MaternParams(10.0))
    draws = cov.sample(np.random.default_rng(5), size=10000)
    r = np.corrcoef(draws)[0, 1]
    target = kernels.matern32(5.0, MaternParams(10.0))
    assert abs(r - target) < 3 * (1 - target ** 2) / math.sqrt(10000)


def test_derivee_cholesky():
    xy = np.random.default_rng(6).uniform(0, 10, size=(4, 2))
    h = 1e-6
    cov = kernels.build_covariance(xy, MaternParams(3.0))
    d_chol = cov.chol_derivative(cov.derivative_dl())
    plus = kernels.build_covariance(xy, MaternParams(3.0 + h)).chol
    minus = kernels.build_covariance(xy, MaternParams(3.0 - h)).chol
    np.testing.assert_allclose(d_chol, (plus - minus) / (2 * h), atol=1e-5)


if __name__ == "__main__":
    logging.basicConfig(level=logging.WARNING)
    tests = [(name, fn) for name, fn in sorted(globals().items()) if name.startswith('test_') and callable(fn)]
    failed = 0
    for name, fn in tests:
        try:
            fn()
            print(f"✅ {name}")
        except Exception as e:
            failed += 1
            print(f"❌ {name}: {e!r}")
    print(f"\n📊 {len(tests) - failed}/{len(tests)} test(s) réussi(s)")
