"""Tests du simulateur de catalogues synthétiques"""
import logging

import numpy as np
import pandas as pd

import simulate
from errors import ConfigError
from simulate import ScenarioConfig


def _small(**overrides):
    base = dict(nx=4, ny=3, n_days=12, storm_prob=0.6, buildings_per_cell=8, seed=5)
    base.update(overrides)
    return ScenarioConfig.from_dict(base)


def test_catalogue_deterministe():
    a = simulate.generate_catalog(_small())
    b = simulate.generate_catalog(_small())
    pd.testing.assert_frame_equal(a.claims, b.claims)
    assert np.array_equal(a.counts, b.counts)
    np.testing.assert_array_equal(a.grid.poh, b.grid.poh)
    c = simulate.generate_catalog(_small(seed=6))
    assert not (np.array_equal(a.grid.poh, c.grid.poh) and a.claims.equals(c.claims))


def test_formes_et_supports():
    catalog = simulate.generate_catalog(_small())
    grid = catalog.grid
    assert (grid.n_days, grid.n_cells) == (12, 12)
    assert catalog.counts.shape == (12, 12) and catalog.latent_field.shape == (12, 12)
    assert len(catalog.lines) == 12 and catalog.eps.shape == (12,)
    assert np.all(grid.dates.month.isin([4, 5, 6, 7, 8, 9]))
    assert np.all((grid.poh >= 0) & (grid.poh <= 1)) and np.all(grid.meshs >= 0)
    assert np.all(catalog.claims['value'] > 0)
    assert catalog.claims['claim_id'].is_unique
    assert set(catalog.claims['building_id']) <= set(catalog.buildings['building_id'])
    assert len(catalog.claims) == catalog.counts.sum()


def test_jours_sans_orage():
    catalog = simulate.generate_catalog(_small(storm_prob=0.0))
    grid = catalog.grid
    for name in ('poh', 'meshs', 'exposure', 'climada_count', 'climada_value'):
        assert np.all(getattr(grid, name) == 0.0), name
    assert catalog.counts.sum() == 0 and catalog.claims.empty
    assert np.all(catalog.daily_totals() == 0.0)


def test_exposition_et_impact():
    catalog = simulate.generate_catalog(_small(storm_prob=1.0))
    grid = catalog.grid
    hit = grid.meshs > 0
    assert np.all(grid.exposure[~hit] == 0.0)
    assert np.all(grid.climada_count[~hit] == 0.0)
    insured = np.bincount(catalog.buildings['cell'], weights=catalog.buildings['insured_value'],
                          minlength=grid.n_cells)
    assert np.all(grid.climada_value <= insured[None, :] + 1e-6)


def test_jours_par_annee():
    dates = _small(n_days=20, days_per_year=8, start_date='2014-04-01').season_dates()
    assert len(dates) == 20
    assert list(dates.year.value_counts().sort_index()) == [8, 8, 4]
    assert dates.is_monotonic_increasing


def test_table_de_verite():
    catalog = simulate.generate_catalog(_small())
    truth = simulate.truth_frame(catalog)
    assert list(truth.columns) == ['date', 'theta', 'alpha', 'eps', 'n_claims', 'total_value']
    np.testing.assert_allclose(truth['total_value'].sum(), catalog.claims['value'].sum())


def test_comptages_plafonnes_aux_batiments():
    # mu très au-dessus de la densité de bâtiments
    catalog = simulate.generate_catalog(_small(storm_prob=1.0, buildings_per_cell=3,
                                               count_params={'mu0': 4.0, 'psi0': 5.0}))
    capacity = np.bincount(catalog.buildings['cell'], minlength=catalog.grid.n_cells)
    assert np.all(catalog.counts <= capacity[None, :])
    hit = capacity > 0
    assert np.any(catalog.counts[:, hit] == capacity[None, hit])
    truth = simulate.truth_frame(catalog)
    per_day = catalog.claims.groupby('date').size().reindex(catalog.grid.dates, fill_value=0)
    np.testing.assert_array_equal(truth['n_claims'].to_numpy(), per_day.to_numpy())
    assert not catalog.claims.duplicated(['date', 'building_id']).any()


def test_parametres_par_defaut_sous_la_densite():
    catalog = simulate.generate_catalog(_small(n_days=30, storm_prob=1.0, buildings_per_cell=20))
    capacity = np.bincount(catalog.buildings['cell'], minlength=catalog.grid.n_cells)
    assert np.mean((catalog.counts == capacity[None, :]) & (capacity[None, :] > 0)) < 0.02
    assert catalog.counts.sum() > 0


def test_scenario_invalide():
    for bad in ({'nx': 0}, {'storm_prob': 1.5}, {'unknown_key': 1}, {'count_params': {'alpha': -1.0}}):
        try:
            _small(**bad)
            assert False, f"{bad} doit être refusé"
        except ConfigError:
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
