"""Tests de la géométrie des lignes aléatoires"""
import math
import logging

import numpy as np

import geometry
from geometry import LineState, PlanarPoint
from kernels import chordal_distance


def test_rotation_cas_simples():
    line = LineState(theta=0.7, alpha=3.0, sigma_m=2.0)
    p = geometry.rotate_to_line(PlanarPoint(0.0, 3.0), line)
    assert abs(p.x) < 1e-12 and abs(p.y) < 1e-12

    p = geometry.rotate_to_line(PlanarPoint(3.0, 4.0), LineState(0.0, 0.0, 2.0))
    assert (p.x, p.y) == (3.0, 4.0)

    p = geometry.rotate_to_line(PlanarPoint(1.0, 0.0), LineState(math.pi / 4, 0.0, 2.0))
    np.testing.assert_allclose([p.x, p.y], [math.sqrt(2) / 2, -math.sqrt(2) / 2], atol=1e-15)


def test_rotation_isometrie():
    rng = np.random.default_rng(0)
    line = LineState(theta=1.1, alpha=-2.5, sigma_m=1.5)
    pts = rng.normal(scale=20.0, size=(30, 2))
    x, y = geometry.rotate_coords(pts[:, 0], pts[:, 1], line.theta, line.alpha)
    before = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))
    after = np.hypot(x[:, None] - x[None, :], y[:, None] - y[None, :])
    np.testing.assert_allclose(before, after, atol=1e-10)


def test_distance_ligne():
    line = LineState(0.0, 0.0, 2.0)
    for x in (-5.0, 0.0, 12.0):
        assert geometry.distance_to_line(PlanarPoint(x, -2.5), line) == 2.5

    theta, alpha = 0.4, 1.0
    s = PlanarPoint(3.0, alpha + 3.0 * math.tan(theta))
    assert geometry.distance_to_line(s, LineState(theta, alpha, 2.0)) < 1e-12

    # Minimum par force brute sur des points denses de la ligne
    t = np.linspace(-5, 5, 200001)
    brute = np.min(np.hypot(t * math.cos(math.pi / 4) - 1.0, t * math.sin(math.pi / 4)))
    d = geometry.distance_to_line(PlanarPoint(1.0, 0.0), LineState(math.pi / 4, 0.0, 2.0))
    np.testing.assert_allclose(d, math.sqrt(2) / 2, rtol=1e-12)
    np.testing.assert_allclose(d, brute, atol=1e-4)


def test_distance_egale_ordonnee_tournee():
    rng = np.random.default_rng(1)
    for _ in range(50):
        line = LineState(rng.uniform(-math.pi, math.pi), rng.normal(scale=10), 2.0)
        s = PlanarPoint(*rng.normal(scale=15, size=2))
        assert abs(geometry.distance_to_line(s, line) - abs(geometry.rotate_to_line(s, line).y)) < 1e-12


def test_distance_invariante_par_translation_le_long_de_la_ligne():
    line = LineState(0.9, 2.0, 3.0)
    s = PlanarPoint(4.0, -1.0)
    shifted = PlanarPoint(s.x + 7.0 * math.cos(line.theta), s.y + 7.0 * math.sin(line.theta))
    assert abs(geometry.distance_to_line(s, line) - geometry.distance_to_line(shifted, line)) < 1e-12


def test_ligne_verticale():
    line = LineState(math.pi / 2, 0.0, 2.0)
    assert line.theta == math.pi / 2
    assert abs(geometry.distance_to_line(PlanarPoint(3.0, 100.0), line) - 3.0) < 1e-12
    # theta + pi décrit la même ligne
    assert abs(LineState(-math.pi / 2, 0.0, 2.0).theta - math.pi / 2) < 1e-15


def test_moyenne_ligne():
    line = LineState(0.0, 0.0, 2.0)
    assert geometry.line_mean(PlanarPoint(0.0, 0.0), line) == 1.0
    assert geometry.line_mean(PlanarPoint(0.0, 1.0), line) == 0.0
    assert abs(geometry.line_mean(PlanarPoint(0.0, 1e12), line) + 1.0) < 1e-9
    d = np.linspace(0, 50, 200)
    m = geometry.mean_from_distance(d, 2.0)
    assert np.all(np.diff(m) < 0)
    assert np.all((m > -1.0) & (m <= 1.0))


def test_sigma_m_invalide():
    try:
        LineState(0.0, 0.0, 0.0)
        assert False, "sigma_m = 0 doit être refusé"
    except ValueError:
        pass


def test_gradient_moyenne_differences_finies():
    rng = np.random.default_rng(2)
    x, y = rng.normal(scale=10, size=(2, 25))
    theta, alpha, sigma_m = 0.3, 1.2, 2.5
    _, grads = geometry.line_mean_with_gradient(x, y, theta, alpha, sigma_m)
    h = 1e-6
    for name, idx in (('theta', 0), ('alpha', 1), ('sigma_m', 2)):
        plus, minus = [theta, alpha, sigma_m], [theta, alpha, sigma_m]
        plus[idx] += h
        minus[idx] -= h
        fd = (geometry.line_mean_with_gradient(x, y, *plus)[0] - geometry.line_mean_with_gradient(x, y, *minus)[0]) / (2 * h)
        np.testing.assert_allclose(grads[name], fd, rtol=1e-4, atol=1e-7)


def test_vent_vers_angle():
    # Vent d'ouest (270°): ligne est-ouest
    assert abs(geometry.wind_to_line_angle(270.0)) < 1e-12
    assert abs(geometry.wind_to_line_angle(0.0) - math.pi / 2) < 1e-12


def test_projection():
    x, y = geometry.project_lonlat(8.5, 47.4, 8.5, 47.4)
    assert (x, y) == (0.0, 0.0)
    x, y = geometry.project_lonlat(8.5, 48.4, 8.5, 47.4)
    assert abs(x) < 1e-12
    np.testing.assert_allclose(y, 111.195, atol=1e-3)

    lon, lat = geometry.unproject_lonlat(*geometry.project_lonlat(8.7, 47.6, 8.5, 47.4), 8.5, 47.4)
    np.testing.assert_allclose([lon, lat], [8.7, 47.6], atol=1e-12)


def test_projection_proche_de_la_corde():
    origin = (8.55, 47.45)
    a, b = (8.35, 47.25), (8.85, 47.65)
    xa, ya = geometry.project_lonlat(*a, *origin)
    xb, yb = geometry.project_lonlat(*b, *origin)
    planar = math.hypot(xb - xa, yb - ya)
    chord = chordal_distance(a, b)
    assert abs(planar - chord) / chord < 1e-3


def test_projection_aux_poles():
    try:
        geometry.project_lonlat(0.0, 90.0, 0.0, 0.0)
        assert False, "latitude 90 doit être refusée"
    except ValueError:
        pass


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
