"""Tests de la ligne de commande (configuration, codes de sortie, simulate -> preprocess)"""
import json
import logging
import tempfile
from pathlib import Path

import pandas as pd

import config
import cli
import data_io
from cli import RunConfig
from errors import ConfigError

SCENARIO = {'nx': 3, 'ny': 3, 'start_date': '2014-04-01', 'n_days': 16, 'days_per_year': 4,
            'storm_prob': 0.8, 'buildings_per_cell': 10}


def _write_config(tmp: Path, **overrides) -> Path:
    data = {'seed': 3, 'out_dir': str(tmp / 'out'), 'scenario': SCENARIO}
    data.update(overrides)
    path = tmp / 'run.json'
    path.write_text(json.dumps(data), encoding='utf-8')
    return path


def _run(argv):
    saved = (config.TRAIN_LAST_YEAR, config.VALIDATION_YEARS)
    try:
        return cli.main(argv)
    finally:
        config.TRAIN_LAST_YEAR, config.VALIDATION_YEARS = saved


def test_cle_inconnue_refusee():
    try:
        RunConfig.from_dict({'seed': 1, 'sampler_typo': {}})
        assert False, "ConfigError attendue"
    except ConfigError as e:
        assert 'sampler_typo' in str(e)


def test_configuration_invalide():
    for bad in ({'chains': 0}, {'predict_split': 'holdout'}, {'threshold_series': 'region'},
                {'validation_years': [2014, 2015]}):
        try:
            RunConfig.from_dict(bad)
            assert False, f"{bad} doit être refusé"
        except ConfigError:
            pass
    assert RunConfig().nuts('counts_sampler', 1).seed == 1
    try:
        RunConfig(counts_sampler={'tuning_iters': 0}).nuts('counts_sampler', 1)
        assert False, "ConfigError attendue"
    except ConfigError:
        pass


def test_graines_derivees():
    run = RunConfig(seed=7)
    assert run.subseed('fit-counts') == RunConfig(seed=7).subseed('fit-counts')
    assert run.subseed('fit-counts') != run.subseed('fit-values')
    assert run.subseed('fit-counts') != RunConfig(seed=8).subseed('fit-counts')


def test_codes_de_sortie_usage_et_config():
    assert _run([]) == 2
    assert _run(['bogus']) == 2
    assert _run(['simulate', '--seed', 'abc']) == 2
    with tempfile.TemporaryDirectory() as tmp:
        assert _run(['preprocess', '--config', str(Path(tmp) / 'absent.json')]) == 3
        path = Path(tmp) / 'bad.json'
        path.write_text('{"seed": 1, "unknown": 2}', encoding='utf-8')
        assert _run(['simulate', '--config', str(path)]) == 3
        assert _run(['preprocess', '--out-dir', str(Path(tmp) / 'empty')]) == 3


def test_surcharges_des_options():
    with tempfile.TemporaryDirectory() as tmp:
        path = _write_config(Path(tmp), counts_sampler={'tuning_iters': 10, 'draw_iters': 10})
        args = cli.build_parser().parse_args(['fit-counts', '--config', str(path), '--seed', '11',
                                              '--draw-iters', '25', '--train-last-year', '2014'])
        run = cli.resolve_config(args)
    assert run.seed == 11
    assert run.counts_sampler == {'tuning_iters': 10, 'draw_iters': 25}
    assert run.validation_years == [2015, 2016]


def test_simulation_puis_pretraitement():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        path = _write_config(tmp)
        assert _run(['simulate', '--config', str(path)]) == 0
        out = tmp / 'out'
        for name in ('buildings.csv', 'claims.csv', 'covariates.csv', 'truth.csv'):
            assert (out / 'catalog' / name).exists(), name
        assert data_io.read_header(out / 'catalog' / 'claims.csv')['seed'] == '3'
        saved = json.loads((out / 'config' / 'simulate.json').read_text(encoding='utf-8'))
        assert saved['command'] == 'simulate' and saved['seed'] == 3

        grid = data_io.read_covariates(out / 'catalog' / 'covariates.csv')
        assert (grid.nx, grid.ny, grid.n_days) == (3, 3, 16)

        assert _run(['preprocess', '--config', str(path)]) == 0
        sizes = {}
        for split in ('train', 'validation', 'test'):
            frame = data_io.read_enriched_claims(out / 'preprocessed' / f'claims_{split}.csv')
            sizes[split] = len(frame)
            if split == 'train' and len(frame):
                assert frame['date'].dt.year.max() <= 2015
        assert sizes['test'] == 0

        first = (out / 'catalog' / 'claims.csv').read_text(encoding='utf-8')
        assert _run(['simulate', '--config', str(path), '--out-dir', str(tmp / 'again')]) == 0
        assert (tmp / 'again' / 'catalog' / 'claims.csv').read_text(encoding='utf-8') == first


def _metrics(path: Path) -> dict:
    table = pd.read_csv(path, skiprows=len(data_io.read_header(path)))
    return dict(zip(table['metric'], table['value']))


def test_chaine_complete_scenario_small():
    small = json.loads((Path(__file__).parent / 'scenarios' / 'small.json').read_text(encoding='utf-8'))
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        path = _write_config(tmp, **{k: v for k, v in small.items() if k != 'out_dir'})
        for command in ('simulate', 'preprocess', 'select-threshold', 'fit-counts', 'fit-values', 'predict',
                        'evaluate', 'diagnose'):
            assert _run([command, '--config', str(path)]) == 0, command
        out = tmp / 'out'
        value_meta = json.loads((out / 'fits' / 'value_model.json').read_text(encoding='utf-8'))
        assert value_meta['threshold_source'] in ('selected', 'fallback_quantile')
        metrics = _metrics(out / 'evaluation' / 'test' / 'metrics.csv')
        assert metrics['day_total_coverage'] >= 0.85, metrics['day_total_coverage']

        days = (out / 'predictions' / 'test' / 'days.csv').read_text(encoding='utf-8')
        assert _run(['predict', '--config', str(path)]) == 0
        assert (out / 'predictions' / 'test' / 'days.csv').read_text(encoding='utf-8') == days


def test_repli_du_seuil_sans_exces():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        samplers = {'tuning_iters': 20, 'draw_iters': 10, 'max_tree_depth': 3}
        path = _write_config(tmp, scenario={**SCENARIO, 'n_days': 24, 'days_per_year': 6, 'buildings_per_cell': 30},
                             min_coarse_claims=1, exceedance_sampler=samplers, tail_sampler=samplers,
                             body_sampler={'n_chains': 4, 'tuning_iters': 10, 'draw_iters': 10})
        assert _run(['simulate', '--config', str(path)]) == 0
        assert _run(['preprocess', '--config', str(path)]) == 0
        selected = tmp / 'out' / 'threshold' / 'selected.json'
        selected.parent.mkdir(parents=True, exist_ok=True)
        # seuil au-delà de tout résidu simulé
        selected.write_text(json.dumps({'threshold_u': 30.0}), encoding='utf-8')
        saved = config.MAX_DIVERGENCE_RATE
        config.MAX_DIVERGENCE_RATE = 1.0
        try:
            assert _run(['fit-values', '--config', str(path)]) == 0
        finally:
            config.MAX_DIVERGENCE_RATE = saved
        meta = json.loads((tmp / 'out' / 'fits' / 'value_model.json').read_text(encoding='utf-8'))
        assert meta['threshold_source'] == 'fallback_quantile'
        assert meta['threshold_u'] < 30.0
        # seuil imposé: conservé, l'ajustement échoue faute d'excès
        assert _run(['fit-values', '--config', str(path), '--threshold', '30']) != 0


def test_artefact_manquant():
    with tempfile.TemporaryDirectory() as tmp:
        path = _write_config(Path(tmp))
        assert _run(['simulate', '--config', str(path)]) == 0
        assert _run(['fit-values', '--config', str(path)]) == 3


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
