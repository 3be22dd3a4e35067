"""Tests des métriques d'évaluation et de la combinaison des prédictions"""
import itertools
import math
import logging

import numpy as np

import evaluation as ev


def _dft_power(image):
    ny, nx = image.shape
    fy = np.exp(-2j * np.pi * np.outer(np.arange(ny), np.arange(ny)) / ny)
    fx = np.exp(-2j * np.pi * np.outer(np.arange(nx), np.arange(nx)) / nx)
    return np.abs(fy @ image @ fx.T) ** 2


def _ks_oracle(a, b):
    pooled = np.union1d(a, b)
    fa = np.array([np.mean(a <= x) for x in pooled])
    fb = np.array([np.mean(b <= x) for x in pooled])
    return np.max(np.abs(fa - fb))


def test_lsd_facteur_dix():
    target = np.random.default_rng(1).uniform(1.0, 5.0, size=(3, 6, 8))
    np.testing.assert_allclose(ev.lsd(target, target / 10.0), 20.0, rtol=1e-10)
    np.testing.assert_allclose(ev.lsd_per_day(target, target), 0.0, atol=1e-12)


def test_lsd_contre_tfd_matricielle():
    rng = np.random.default_rng(2)
    target, predicted = rng.uniform(0.5, 3.0, size=(2, 2, 5, 4))
    ratio = 10.0 * np.log10(np.array([_dft_power(t) for t in target]) / np.array([_dft_power(p) for p in predicted]))
    expected = math.sqrt(np.sum(ratio ** 2) / (2 * 2 * 10))
    np.testing.assert_allclose(ev.lsd(target, predicted), expected, rtol=1e-8)


def test_lsd_cartes_nulles():
    target = np.zeros((1, 4, 4))
    assert np.isfinite(ev.lsd(target, np.ones((1, 4, 4))))


def test_skss_contre_fdr_empiriques():
    rng = np.random.default_rng(3)
    target = rng.poisson(2.0, size=(2, 7, 7)).astype(float)
    predicted = rng.poisson(2.5, size=(2, 7, 7)).astype(float)
    table = ev.skss_per_patch(target, predicted, patch=5)
    assert len(table) == 8
    assert sorted(table.loc[table['day'] == 0, 'n_cells']) == [4, 10, 10, 25]
    expected = 0.0
    for t in range(2):
        for y0 in (0, 5):
            for x0 in (0, 5):
                a = target[t, y0:y0 + 5, x0:x0 + 5].ravel()
                b = predicted[t, y0:y0 + 5, x0:x0 + 5].ravel()
                expected += _ks_oracle(a, b)
    np.testing.assert_allclose(ev.skss(target, predicted, patch=5), expected, rtol=1e-12)
    assert ev.skss(target, target, patch=5) == 0.0


def test_formes_incompatibles():
    try:
        ev.skss(np.zeros((1, 3, 3)), np.zeros((1, 3, 4)))
        assert False, "ValueError attendue"
    except ValueError:
        pass


def test_table_de_confusion():
    pred = np.array([True] * 9 + [True] * 3 + [False] * 3 + [False] * 7)
    obs = np.array([True] * 9 + [False] * 3 + [True] * 3 + [False] * 7)
    summary = ev.confusion_metrics(pred[None], obs[None])
    assert (summary.a, summary.b, summary.c, summary.d) == (9, 3, 3, 7)
    rates = summary.rates()
    np.testing.assert_allclose([rates['far'], rates['sensitivity'], rates['specificity'], rates['ppv']],
                               [30.0, 75.0, 70.0, 75.0])


def test_confusion_moyenne_par_jour_et_taux_non_definis():
    pred = np.array([[1, 0], [1, 1]])
    obs = np.array([[1, 0], [0, 0]])
    summary = ev.confusion_metrics(pred, obs)
    assert (summary.a, summary.b, summary.c, summary.d) == (0.5, 1.0, 0.0, 0.5)
    empty = ev.ConfusionSummary(0.0, 0.0, 0.0, 4.0)
    assert math.isnan(empty.sensitivity) and math.isnan(empty.ppv)
    assert empty.far == 0.0


def test_combinaison_par_enumeration():
    cells = np.array([0, 0, 1])
    insured = np.array([1e5, 5e5, 2e5])  # le bâtiment 1 est touché en premier dans la cellule 0
    counts = np.array([[1, 0], [2, 1], [5, 1]])  # le dernier est tronqué à 2
    values = np.array([[10.0, 20.0, 30.0], [1.0, 2.0, 3.0]])
    pred = ev.combine_predictions(counts, values, cells, insured)

    rank = {0: 1, 1: 0, 2: 0}
    totals, buildings = [], []
    for n_draw, m_draw in itertools.product(range(3), range(2)):
        hit = [b for b in range(3) if rank[b] < counts[n_draw, cells[b]]]
        row = np.zeros(3)
        row[hit] = values[m_draw, hit]
        buildings.append(row)
        totals.append(row.sum())
    np.testing.assert_allclose(pred.total_mean, [np.mean(totals)])
    np.testing.assert_allclose(pred.building_mean[0], np.mean(buildings, axis=0))
    np.testing.assert_allclose(pred.cell_mean[0], [np.mean([r[0] + r[1] for r in buildings]),
                                                   np.mean([r[2] for r in buildings])])
    assert pred.diagnostics['clamped_counts'] == 1
    np.testing.assert_allclose(pred.total_lower, np.percentile(totals, 2.5))
    assert list(pred.day_frame().columns) == ['date', 'mean', 'lower', 'upper']
    assert len(pred.building_frame(['a', 'b', 'c'])) == 3


def test_rang_d_exposition():
    rank = ev.exposure_rank(np.array([2, 0, 2, 0, 2]), np.array([5.0, 1.0, 9.0, 3.0, 7.0]))
    assert list(rank) == [2, 1, 0, 0, 1]


def test_correlogramme():
    rng = np.random.default_rng(4)
    base = rng.normal(size=200)
    series = np.column_stack([base, base, rng.normal(size=200)])
    xy = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]])
    gram = ev.extremal_correlation(series, xy, u=1.0, distance_bins=[0.0, 2.0, 5.0, 12.0])
    frame = gram.to_frame()
    assert list(frame['n_pairs']) == [1, 0, 2]
    np.testing.assert_allclose(frame['extremal_mean'].iloc[0], 1.0)
    np.testing.assert_allclose(frame['spearman_mean'].iloc[0], 1.0)
    assert math.isnan(frame['extremal_mean'].iloc[1])
    assert frame['extremal_mean'].iloc[2] < 0.6
    try:
        ev.extremal_correlation(series, xy, u=100.0, distance_bins=[0.0, 12.0])
        assert False, "seuil hors étendue refusé"
    except ValueError:
        pass


def test_paa_par_meshs():
    observed = np.array([[2, 0], [1, 4]])
    predicted = np.stack([observed, 2 * observed])
    meshs = np.array([[1.0, 0.0], [3.0, 3.5]])
    table = ev.paa_by_meshs(observed, predicted, np.array([10, 20]), meshs, bins=[0.0, 2.0, 4.0, 6.0])
    assert list(table['n_cell_days']) == [1, 2, 0]
    np.testing.assert_allclose(table['observed'].iloc[1], (10.0 + 20.0) / 2)
    np.testing.assert_allclose(table['predicted_mean'].iloc[0], 1.5 * 20.0)
    assert math.isnan(table['observed'].iloc[2])


def test_donnees_qq():
    observed = np.arange(1.0, 10.0)
    table = ev.qq_data(observed, np.tile(observed, (4, 1)))
    np.testing.assert_allclose(table['predicted'], table['observed'])
    np.testing.assert_allclose(table['lower'], table['upper'])


def test_difference_de_metriques():
    rng = np.random.default_rng(5)
    target = rng.uniform(1.0, 2.0, size=(2, 4, 4))
    bench = target * 3.0
    frame = ev.metric_difference(target, target, bench, patch=4)
    np.testing.assert_allclose(frame['lsd_model'], 0.0, atol=1e-12)
    np.testing.assert_allclose(frame['lsd_scaled_diff'], -1.0)
    same = ev.metric_difference(target, target, target, patch=4)
    assert same['skss_scaled_diff'].isna().all()


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
