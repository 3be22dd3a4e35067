"""
Ligne de commande du modèle de dommages grêle

Sous-commandes (un fichier de configuration JSON + surcharges par options):
    simulate          catalogue synthétique (bâtiments, sinistres, covariables)
    preprocess        regroupement des dates, filtre saisonnier, découpage par année
    select-threshold  balayage du seuil GPD (distance QQ l1)
    fit-counts        modèle de comptage ligne aléatoire + ZINB (NUTS)
    fit-values        modèle de valeurs Beta/GPD (NUTS + DE-MC snooker)
    predict           combinaison comptages x valeurs sur une période
    evaluate          table de confusion, SKSS, LSD, courbes PAA et QQ
    diagnose          ACF, traces, ESS et R-hat des tirages

Exemple:
    python cli.py simulate --config scenarios/small.json --seed 7
"""

import sys
import json
import zlib
import logging
import argparse
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

import data_io
from count_model import CountDesign, fit_counts, predict_counts
from distributions import f_transform
from errors import ConfigError, HailModelError, UsageError
from evaluation import (
    combine_predictions, confusion_metrics, extremal_correlation, lsd, metric_difference,
    paa_by_meshs, qq_data, skss, skss_per_patch,
)
from report import write_report
from samplers import DemcConfig, NutsConfig, acf_table, summarize, trace_table
from simulate import ScenarioConfig, generate_catalog, truth_frame
from threshold import (
    canton_total_series, cell_total_series, fit_gpd_ml, qq_table, residual_series, select_threshold,
)
from value_model import (
    CoarseGrid, CovariateScaler, ValueDesign, ValueFit, build_coarse_grid, fit_values, predict_values,
    season_half,
)

try:
    import config
except ImportError:
    config = None

logger = logging.getLogger(__name__)


def _cfg(name: str, default):
    return getattr(config, name, default) if config else default


SPLITS = ('train', 'validation', 'test')
CATALOG_FILES = {
    'buildings': 'catalog/buildings.csv',
    'claims': 'catalog/claims.csv',
    'covariates': 'catalog/covariates.csv',
}

THRESHOLD_SERIES = {
    'cell': cell_total_series,
    'canton': canton_total_series,
    'residual': residual_series,
}


# ============================================================================
# CONFIGURATION D'EXÉCUTION
# ============================================================================

@dataclass
class RunConfig:
    """Configuration déclarative d'une exécution (fichier JSON, surchargée par les options)"""
    seed: int = field(default_factory=lambda: _cfg('DEFAULT_SEED', 7))
    out_dir: str = field(default_factory=lambda: _cfg('DEFAULT_OUTPUT_DIR', 'outputs'))
    buildings: Optional[str] = None
    claims: Optional[str] = None
    covariates: Optional[str] = None
    scenario: Dict = field(default_factory=dict)
    chains: int = field(default_factory=lambda: _cfg('DEFAULT_CHAINS', 1))
    train_last_year: int = field(default_factory=lambda: _cfg('TRAIN_LAST_YEAR', 2015))
    validation_years: List[int] = field(default_factory=lambda: list(_cfg('VALIDATION_YEARS', (2016, 2017))))
    threshold_u: Optional[float] = None
    threshold_series: str = 'cell'
    min_coarse_claims: int = field(default_factory=lambda: _cfg('MIN_CLAIMS_PER_COARSE_CELL', 100))
    counts_sampler: Dict = field(default_factory=dict)
    exceedance_sampler: Dict = field(default_factory=dict)
    tail_sampler: Dict = field(default_factory=dict)
    body_sampler: Dict = field(default_factory=dict)
    store_latent: bool = False
    prediction_draws: int = field(default_factory=lambda: _cfg('PREDICTION_DRAWS', 32))
    predict_split: str = 'test'
    skss_patch: int = field(default_factory=lambda: _cfg('SKSS_PATCH', 10))

    def __post_init__(self):
        if self.chains < 1:
            raise ConfigError("chains doit être >= 1")
        if self.prediction_draws < 1:
            raise ConfigError("prediction_draws doit être >= 1")
        if self.predict_split not in SPLITS:
            raise ConfigError(f"predict_split inconnu: {self.predict_split}")
        if self.threshold_series not in THRESHOLD_SERIES:
            raise ConfigError(f"threshold_series inconnu: {self.threshold_series}")
        if len(self.validation_years) != 2 or self.validation_years[0] <= self.train_last_year:
            raise ConfigError("validation_years doit être [première, dernière] après train_last_year")

    @classmethod
    def from_dict(cls, data: Dict) -> 'RunConfig':
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Clé(s) de configuration inconnue(s): {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: Optional[str]) -> 'RunConfig':
        if path is None:
            return cls()
        try:
            with open(path, encoding='utf-8') as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"Fichier de configuration introuvable: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"Configuration JSON invalide ({path}): {e}")
        logger.info(f"📥 Configuration chargée depuis {path}")
        return cls.from_dict(data)

    def to_dict(self) -> Dict:
        return asdict(self)

    def input_path(self, name: str) -> Path:
        """Chemin d'un fichier d'entrée; doit exister"""
        path = Path(getattr(self, name) or Path(self.out_dir) / CATALOG_FILES[name])
        if not path.exists():
            raise ConfigError(f"Fichier d'entrée '{name}' introuvable: {path}")
        return path

    def output(self, *parts: str) -> Path:
        return Path(self.out_dir).joinpath(*parts)

    def artifact(self, *parts: str) -> Path:
        """Artefact produit par une sous-commande précédente; doit exister"""
        path = self.output(*parts)
        if not path.exists():
            raise ConfigError(f"Artefact manquant: {path} (lancer l'étape précédente)")
        return path

    def subseed(self, label: str) -> int:
        """Graine dérivée de la graine maîtresse, stable par sous-commande"""
        seq = np.random.SeedSequence([self.seed, zlib.crc32(label.encode('utf-8'))])
        return int(seq.generate_state(1)[0])

    def nuts(self, key: str, seed: int) -> NutsConfig:
        try:
            return NutsConfig(**{**getattr(self, key), 'seed': seed})
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Configuration '{key}' invalide: {e}")

    def demc(self, seed: int) -> DemcConfig:
        try:
            return DemcConfig(**{**self.body_sampler, 'seed': seed})
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Configuration 'body_sampler' invalide: {e}")

    @property
    def header(self) -> Dict:
        return {'seed': self.seed}


def _apply_split_years(run: RunConfig):
    if config is not None:
        config.TRAIN_LAST_YEAR = run.train_last_year
        config.VALIDATION_YEARS = tuple(run.validation_years)


def _write_json(data: Dict, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write('\n')
    logger.info(f"💾 {path.name} écrit")


def _read_json(path: Path) -> Dict:
    with open(path, encoding='utf-8') as f:
        return json.load(f)


def count_design_from_grid(grid: data_io.CovariateGrid) -> CountDesign:
    """Conception du modèle de comptage: jours actifs = jours avec un signal de grêle"""
    return CountDesign(cell_xy=grid.cell_xy(), climada_count=grid.climada_count, wind_dir=grid.daily_wind(),
                       in_hail_season=grid.in_hail_season(), active=grid.active_days(), dates=list(grid.dates))


def _split_claims(run: RunConfig, split: str) -> pd.DataFrame:
    return data_io.read_enriched_claims(run.artifact('preprocessed', f'claims_{split}.csv'))


def _split_grid(run: RunConfig, split: str) -> data_io.CovariateGrid:
    grid = data_io.read_covariates(run.input_path('covariates'))
    return data_io.split_grid_by_year(grid)[split]


# ============================================================================
# SOUS-COMMANDES
# ============================================================================

def cmd_simulate(run: RunConfig, args) -> None:
    scenario = dict(run.scenario)
    if getattr(args, 'scenario', None):
        scenario.update(_read_json(Path(args.scenario)))
    if getattr(args, 'n_days', None):
        scenario['n_days'] = args.n_days
    scenario['seed'] = run.seed
    catalog = generate_catalog(ScenarioConfig.from_dict(scenario))

    data_io.write_table(catalog.buildings, run.output(CATALOG_FILES['buildings']), 'buildings', run.header)
    data_io.write_table(catalog.claims, run.output(CATALOG_FILES['claims']), 'claims', run.header)
    data_io.write_covariates(catalog.grid, run.output(CATALOG_FILES['covariates']), seed=run.seed)
    data_io.write_table(truth_frame(catalog), run.output('catalog', 'truth.csv'), header=run.header)


def cmd_preprocess(run: RunConfig, args) -> None:
    grid = data_io.read_covariates(run.input_path('covariates'))
    buildings = data_io.assign_cells(data_io.read_buildings(run.input_path('buildings')), grid)
    claims = data_io.read_claims(run.input_path('claims'))
    enriched = data_io.preprocess_claims(claims, buildings, grid)
    for split, frame in data_io.split_by_year(enriched).items():
        data_io.write_enriched_claims(frame, run.output('preprocessed', f'claims_{split}.csv'), seed=run.seed)
        logger.info(f"📊 {split}: {len(frame)} sinistre(s)")


def cmd_select_threshold(run: RunConfig, args) -> None:
    train = _split_claims(run, 'train')
    series = THRESHOLD_SERIES[run.threshold_series](train)
    values = series.to_numpy(float)
    scan = select_threshold(values)
    u = scan.selected
    excess = np.sort(values[values > u] - u)
    fit = fit_gpd_ml(excess)

    data_io.write_table(scan.to_frame(), run.output('threshold', 'scan.csv'), header=run.header)
    data_io.write_table(qq_table(excess, fit), run.output('threshold', 'qq.csv'), header=run.header)
    _write_json({'threshold_u': u, 'series': run.threshold_series, 'sigma_hat': fit.sigma, 'xi_hat': fit.xi,
                 'xi_interval': list(fit.xi_interval), 'n_exceedances': int(excess.size), 'seed': run.seed},
                run.output('threshold', 'selected.json'))


def _threshold(run: RunConfig) -> Tuple[float, str]:
    """Seuil u et son origine: 'config', 'selected' ou 'default'"""
    if run.threshold_u is not None:
        return float(run.threshold_u), 'config'
    selected = run.output('threshold', 'selected.json')
    if selected.exists():
        return float(_read_json(selected)['threshold_u']), 'selected'
    u = _cfg('DEFAULT_THRESHOLD_U', 8.06)
    logger.warning(f"⚠️ Aucun seuil sélectionné: valeur par défaut u={u}")
    return u, 'default'


def _value_design(run: RunConfig, train: pd.DataFrame, coarse: CoarseGrid):
    """
    Conception du modèle de valeurs au seuil retenu

    Un seuil sélectionné (ou par défaut) qui laisse moins de MIN_EXCEEDANCES
    résidus au-dessus de u est remplacé par le quantile THRESHOLD_FALLBACK_QUANTILE
    des f(Z) d'entraînement; un seuil imposé par la configuration est conservé.
    """
    u, source = _threshold(run)
    design, scaler = ValueDesign.from_frame(train, coarse, u)
    n_exceed = int(design.exceeds.sum())
    min_n = _cfg('MIN_EXCEEDANCES', 10)
    if n_exceed < min_n and source != 'config':
        q = _cfg('THRESHOLD_FALLBACK_QUANTILE', 0.9)
        fallback = float(np.quantile(f_transform(design.residual), q))
        logger.warning(f"⚠️ u={u:.3f} ({source}) ne laisse que {n_exceed} excès sur {design.n_claims} résidu(s): "
                       f"repli sur le quantile {q:.0%} des f(Z), u={fallback:.3f}")
        u, source = fallback, 'fallback_quantile'
        design, scaler = ValueDesign.from_frame(train, coarse, u)
    return design, scaler, source


def cmd_fit_counts(run: RunConfig, args) -> None:
    grid = _split_grid(run, 'train')
    train = _split_claims(run, 'train')
    design = count_design_from_grid(grid)
    counts = data_io.counts_from_claims(train, grid)
    samples = fit_counts(design, counts, run.nuts('counts_sampler', run.subseed('fit-counts')),
                         chains=run.chains, store_latent=run.store_latent)
    data_io.write_posterior(samples, run.output('fits', 'counts_posterior.csv'), seed=run.seed)
    data_io.write_table(summarize(samples), run.output('fits', 'counts_summary.csv'), header=run.header)


def cmd_fit_values(run: RunConfig, args) -> None:
    grid = _split_grid(run, 'train')
    train = _split_claims(run, 'train')
    per_cell = np.bincount(train['cell'].to_numpy(int), minlength=grid.n_cells)
    coarse = build_coarse_grid(grid.nx, grid.ny, grid.cell_lonlat(), per_cell, min_claims=run.min_coarse_claims)
    design, scaler, source = _value_design(run, train, coarse)
    u = design.threshold_u
    configs = {
        'exceedance': run.nuts('exceedance_sampler', run.subseed('fit-values/exceedance')),
        'tail': run.nuts('tail_sampler', run.subseed('fit-values/tail')),
        'body': run.demc(run.subseed('fit-values/body')),
    }
    fit = fit_values(design, configs, chains=run.chains)

    for part in ('exceedance', 'body', 'tail'):
        samples = getattr(fit, part)
        data_io.write_posterior(samples, run.output('fits', f'values_{part}_posterior.csv'), seed=run.seed)
        data_io.write_table(summarize(samples), run.output('fits', f'values_{part}_summary.csv'), header=run.header)
    _write_json({
        'threshold_u': u,
        'threshold_source': source,
        'scaler': scaler.to_dict(),
        'fine_to_coarse': coarse.fine_to_coarse.tolist(),
        'centroids_lonlat': coarse.centroids_lonlat.tolist(),
        'coarse_claims': coarse.claims.tolist(),
        'season_keys': design.season_keys,
        'seed': run.seed,
    }, run.output('fits', 'value_model.json'))


def _load_value_fit(run: RunConfig):
    meta = _read_json(run.artifact('fits', 'value_model.json'))
    parts = {part: data_io.read_posterior(run.artifact('fits', f'values_{part}_posterior.csv'))
             for part in ('exceedance', 'body', 'tail')}
    fit = ValueFit(threshold_u=float(meta['threshold_u']), **parts)
    coarse = CoarseGrid(np.asarray(meta['fine_to_coarse'], dtype=int), np.asarray(meta['centroids_lonlat']),
                        np.asarray(meta['coarse_claims']))
    return fit, CovariateScaler.from_dict(meta['scaler']), coarse


def _building_frame(grid: data_io.CovariateGrid, buildings: pd.DataFrame, coarse: CoarseGrid,
                    climada_value: np.ndarray, day: int) -> pd.DataFrame:
    cells = buildings['cell'].to_numpy(int)
    return pd.DataFrame({
        'poh': grid.poh[day, cells],
        'meshs': grid.meshs[day, cells],
        'exposure': grid.exposure[day, cells],
        'coarse_cell': coarse.fine_to_coarse[cells],
        'in_hail_season': np.full(cells.size, grid.in_hail_season()[day]),
        'climada_value': climada_value[day],
        'season': season_half([grid.dates[day]] * cells.size).to_numpy(),
    })


def cmd_predict(run: RunConfig, args) -> None:
    split = run.predict_split
    grid = _split_grid(run, split)
    buildings = data_io.assign_cells(data_io.read_buildings(run.input_path('buildings')), grid)
    counts_posterior = data_io.read_posterior(run.artifact('fits', 'counts_posterior.csv'))
    value_fit, scaler, coarse = _load_value_fit(run)
    rng = np.random.default_rng(run.subseed(f'predict/{split}'))
    n = m = run.prediction_draws

    design = count_design_from_grid(grid)
    count_draws = predict_counts(counts_posterior, design, n, rng)
    climada_value = data_io.downscale_climada_value(grid, buildings)
    value_draws = np.zeros((m, grid.n_days, len(buildings)))
    for t in np.flatnonzero(count_draws.sum(axis=(0, 2)) > 0):
        frame = _building_frame(grid, buildings, coarse, climada_value, t)
        value_draws[:, t, :] = predict_values(value_fit, frame, scaler, m, rng)
    prediction = combine_predictions(count_draws, value_draws, buildings['cell'].to_numpy(int),
                                     buildings['insured_value'].to_numpy(float), n_cells=grid.n_cells)

    out = ('predictions', split)
    data_io.write_table(prediction.day_frame(grid.dates), run.output(*out, 'days.csv'), 'day_predictions',
                        run.header)
    data_io.write_table(prediction.cell_frame(grid.dates), run.output(*out, 'cells.csv'), 'cell_predictions',
                        run.header)
    per_building = prediction.building_frame(buildings['building_id'], grid.dates)
    data_io.write_table(per_building[per_building['upper'] > 0], run.output(*out, 'buildings.csv'),
                        header=run.header)
    draw, day, cell = np.nonzero(count_draws)
    sparse = pd.DataFrame({'draw': draw, 'date': grid.dates[day], 'cell': cell,
                           'count': count_draws[draw, day, cell]})
    data_io.write_table(sparse, run.output(*out, 'count_draws.csv'), 'count_draws',
                        {**run.header, 'n_draws': n})
    if prediction.diagnostics.get('clamped_counts'):
        logger.warning(f"⚠️ {prediction.diagnostics['clamped_counts']} comptage(s) tronqué(s) à la combinaison")


def _dense_count_draws(path: Path, grid: data_io.CovariateGrid) -> np.ndarray:
    table = data_io.read_table(path, 'count_draws')
    n_draws = int(table.attrs['header']['n_draws'])
    draws = np.zeros((n_draws, grid.n_days, grid.n_cells))
    day = grid.day_index(table['date'])
    draws[table['draw'].to_numpy(int), day, table['cell'].to_numpy(int)] = table['count'].to_numpy(float)
    return draws


def _cell_day_sums(claims: pd.DataFrame, grid: data_io.CovariateGrid) -> np.ndarray:
    sums = np.zeros((grid.n_days, grid.n_cells))
    day = grid.day_index(claims['date'])
    known = day >= 0
    np.add.at(sums, (day[known], claims['cell'].to_numpy(int)[known]), claims['value'].to_numpy(float)[known])
    return sums


def cmd_evaluate(run: RunConfig, args) -> None:
    split = run.predict_split
    grid = _split_grid(run, split)
    claims = _split_claims(run, split)
    buildings = data_io.assign_cells(data_io.read_buildings(run.input_path('buildings')), grid)
    pred_dir = ('predictions', split)
    draws = _dense_count_draws(run.artifact(*pred_dir, 'count_draws.csv'), grid)
    cells = data_io.read_table(run.artifact(*pred_dir, 'cells.csv'), 'cell_predictions')
    days = data_io.read_table(run.artifact(*pred_dir, 'days.csv'), 'day_predictions')

    shape = (grid.n_days, grid.ny, grid.nx)
    observed = data_io.counts_from_claims(claims, grid)
    model_positive = (draws > 0).mean(axis=0) >= 0.5
    model_counts = draws.mean(axis=0)
    benchmark_counts = grid.climada_count
    rows = [('CLIMADA', confusion_metrics(benchmark_counts, observed)),
            ('Model', confusion_metrics(model_positive, observed))]

    observed_damage = _cell_day_sums(claims, grid)
    model_damage = np.zeros((grid.n_days, grid.n_cells))
    model_damage[grid.day_index(cells['date']), cells['cell'].to_numpy(int)] = cells['mean'].to_numpy(float)
    benchmark_damage = grid.climada_value
    patch = run.skss_patch

    observed_totals = observed_damage.sum(axis=1)
    inside = (observed_totals >= days['lower'].to_numpy()) & (observed_totals <= days['upper'].to_numpy())
    metrics = {
        'skss_counts_model': skss(observed.reshape(shape), model_counts.reshape(shape), patch),
        'skss_counts_benchmark': skss(observed.reshape(shape), benchmark_counts.reshape(shape), patch),
        'skss_counts_model_patch_mean': float(skss_per_patch(observed.reshape(shape), model_counts.reshape(shape),
                                                             patch)['ks'].mean()),
        'lsd_counts_model': lsd(observed.reshape(shape), model_counts.reshape(shape)),
        'lsd_counts_benchmark': lsd(observed.reshape(shape), benchmark_counts.reshape(shape)),
        'skss_damage_model': skss(observed_damage.reshape(shape), model_damage.reshape(shape), patch),
        'skss_damage_benchmark': skss(observed_damage.reshape(shape), benchmark_damage.reshape(shape), patch),
        'lsd_damage_model': lsd(observed_damage.reshape(shape), model_damage.reshape(shape)),
        'lsd_damage_benchmark': lsd(observed_damage.reshape(shape), benchmark_damage.reshape(shape)),
        'day_total_coverage': float(inside.mean()) if inside.size else float('nan'),
    }

    n_buildings = np.bincount(buildings['cell'].to_numpy(int), minlength=grid.n_cells)
    active = grid.active_days()
    tables = {
        'metric_difference_counts': metric_difference(observed.reshape(shape), model_counts.reshape(shape),
                                                      benchmark_counts.reshape(shape), patch),
        'metric_difference_damage': metric_difference(observed_damage.reshape(shape), model_damage.reshape(shape),
                                                      benchmark_damage.reshape(shape), patch),
        'paa_by_meshs': paa_by_meshs(observed, draws, n_buildings, grid.meshs,
                                     bins=[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, np.inf]),
    }
    if active.any():
        tables['qq_counts'] = qq_data(observed[active].ravel(), draws[:, active, :].reshape(draws.shape[0], -1))
    series = np.asarray(f_transform(observed_damage))
    if grid.n_cells >= 2 and np.any(series > 0):
        u = float(np.quantile(series[series > 0], 0.5))
        xy = grid.cell_xy()
        max_distance = float(np.hypot(*(xy.max(axis=0) - xy.min(axis=0))))
        tables['correlogram'] = extremal_correlation(series, xy, u, np.linspace(0.0, max_distance, 6)).to_frame()
    write_report(run.output('evaluation', split), rows, metrics, tables, header=run.header)
    for label, summary in rows:
        rates = ', '.join(f"{k}={v:.1f}" for k, v in summary.rates().items())
        logger.info(f"📊 {label}: {rates}")


def cmd_diagnose(run: RunConfig, args) -> None:
    paths = [Path(p) for p in args.posterior] if getattr(args, 'posterior', None) else \
        sorted(run.artifact('fits').glob('*_posterior.csv'))
    if not paths:
        raise ConfigError(f"Aucun fichier de tirages dans {run.output('fits')}")
    for path in paths:
        if not path.exists():
            raise ConfigError(f"Fichier de tirages introuvable: {path}")
        samples = data_io.read_posterior(path)
        stem = path.stem.replace('_posterior', '')
        scalars = [n for n in samples.names if '[' not in n]
        out = run.output('diagnostics')
        data_io.write_table(acf_table(samples, getattr(args, 'max_lag', None), scalars),
                            out / f'{stem}_acf.csv', header=run.header)
        data_io.write_table(trace_table(samples, scalars), out / f'{stem}_trace.csv', header=run.header)
        data_io.write_table(summarize(samples), out / f'{stem}_summary.csv', header=run.header)


COMMANDS = {
    'simulate': cmd_simulate,
    'preprocess': cmd_preprocess,
    'select-threshold': cmd_select_threshold,
    'fit-counts': cmd_fit_counts,
    'fit-values': cmd_fit_values,
    'predict': cmd_predict,
    'evaluate': cmd_evaluate,
    'diagnose': cmd_diagnose,
}


# ============================================================================
# ANALYSE DES ARGUMENTS
# ============================================================================

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    d = RunConfig()
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, default=None, help='Configuration JSON (défaut: aucune)')
    common.add_argument('--seed', type=int, default=None, help=f'Graine maîtresse (défaut: {d.seed})')
    common.add_argument('--out-dir', type=str, default=None, help=f'Répertoire de sortie (défaut: {d.out_dir})')
    common.add_argument('--chains', type=int, default=None, help=f'Chaînes indépendantes (défaut: {d.chains})')
    for name in CATALOG_FILES:
        common.add_argument(f'--{name}', type=str, default=None,
                            help=f'CSV {name} (défaut: <out-dir>/{CATALOG_FILES[name]})')
    common.add_argument('--train-last-year', type=int, default=None,
                        help=f"Dernière année d'entraînement (défaut: {d.train_last_year})")
    common.add_argument('--log-level', type=str, default=None, choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help=f"Niveau de log (défaut: {_cfg('LOG_LEVEL', 'INFO')})")

    parser = _Parser(description='Modèle bayésien de dommages grêle', prog='cli.py')
    sub = parser.add_subparsers(dest='command', required=True, parser_class=_Parser)

    p = sub.add_parser('simulate', parents=[common], help='Catalogue synthétique')
    p.add_argument('--scenario', type=str, default=None, help='Scénario JSON (défaut: clé "scenario" de la config)')
    p.add_argument('--n-days', type=int, default=None, help='Nombre de jours (défaut: celui du scénario)')

    sub.add_parser('preprocess', parents=[common], help='Dates, saison et découpage par année')

    p = sub.add_parser('select-threshold', parents=[common], help='Balayage du seuil GPD')
    p.add_argument('--series', type=str, default=None, choices=list(THRESHOLD_SERIES),
                   help=f'Série: totaux journaliers par cellule, de la région ou résidus f(Z) (défaut: {d.threshold_series})')

    for name, label in (('fit-counts', 'Ajustement du modèle de comptage'),
                        ('fit-values', 'Ajustement du modèle de valeurs')):
        p = sub.add_parser(name, parents=[common], help=label)
        p.add_argument('--tuning-iters', type=int, default=None,
                       help=f"Itérations de réglage (défaut: {_cfg('NUTS_TUNING_ITERS', 500)})")
        p.add_argument('--draw-iters', type=int, default=None,
                       help=f"Itérations conservées (défaut: {_cfg('NUTS_DRAW_ITERS', 1000)})")
    sub.choices['fit-counts'].add_argument('--store-latent', action='store_true',
                                           help=f'Enregistrer X^mu (défaut: {d.store_latent})')
    sub.choices['fit-values'].add_argument('--threshold', type=float, default=None,
                                           help='Seuil u (défaut: threshold/selected.json, sinon '
                                                f"{_cfg('DEFAULT_THRESHOLD_U', 8.06)})")
    sub.choices['fit-values'].add_argument('--min-coarse-claims', type=int, default=None,
                                           help=f'Sinistres min. par cellule grossière (défaut: {d.min_coarse_claims})')

    for name, label in (('predict', 'Prédiction des dommages'), ('evaluate', 'Évaluation des prédictions')):
        p = sub.add_parser(name, parents=[common], help=label)
        p.add_argument('--split', type=str, default=None, choices=list(SPLITS),
                       help=f'Période (défaut: {d.predict_split})')
    sub.choices['predict'].add_argument('--draws', type=int, default=None,
                                        help=f'Tirages n = m (défaut: {d.prediction_draws})')
    sub.choices['evaluate'].add_argument('--patch', type=int, default=None,
                                         help=f'Taille des patchs SKSS (défaut: {d.skss_patch})')

    p = sub.add_parser('diagnose', parents=[common], help='ACF, traces, ESS et R-hat')
    p.add_argument('--posterior', type=str, nargs='*', default=None,
                   help='Fichiers de tirages (défaut: <out-dir>/fits/*_posterior.csv)')
    p.add_argument('--max-lag', type=int, default=None, help=f"Retard max de l'ACF (défaut: {_cfg('ACF_MAX_LAG', 50)})")
    return parser


FLAG_FIELDS = {
    'seed': 'seed', 'out_dir': 'out_dir', 'chains': 'chains', 'buildings': 'buildings', 'claims': 'claims',
    'covariates': 'covariates', 'train_last_year': 'train_last_year', 'series': 'threshold_series',
    'store_latent': 'store_latent', 'threshold': 'threshold_u', 'min_coarse_claims': 'min_coarse_claims',
    'split': 'predict_split', 'draws': 'prediction_draws', 'patch': 'skss_patch',
}


def resolve_config(args) -> RunConfig:
    """Configuration effective: fichier JSON puis options de la ligne de commande"""
    data = RunConfig.from_file(args.config).to_dict()
    for flag, key in FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None and value is not False:
            data[key] = value
    if getattr(args, 'train_last_year', None) is not None:
        data['validation_years'] = [args.train_last_year + 1, args.train_last_year + 2]
    for key in ('tuning_iters', 'draw_iters'):
        value = getattr(args, key, None)
        if value is None:
            continue
        targets = ['counts_sampler'] if args.command == 'fit-counts' else \
            ['exceedance_sampler', 'tail_sampler', 'body_sampler']
        for target in targets:
            data[target] = {**data[target], key: value}
    return RunConfig.from_dict(data)


def _escape(message: str) -> str:
    return message.replace('\\', '\\\\').replace('"', '\\"').replace('\n', ' ')


def main(argv: Optional[List[str]] = None) -> int:
    """Point d'entrée: renvoie le code de sortie"""
    logging.basicConfig(level=getattr(logging, _cfg('LOG_LEVEL', 'INFO')),
                        format=_cfg('LOG_FORMAT', '%(asctime)s - %(name)s - %(levelname)s - %(message)s'))
    try:
        args = build_parser().parse_args(argv)
        if args.log_level:
            logging.getLogger().setLevel(getattr(logging, args.log_level))
        try:
            run = resolve_config(args)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Configuration invalide: {e}")
        _apply_split_years(run)
        _write_json({'command': args.command, **run.to_dict()},
                    run.output('config', f"{args.command}.json"))
        logger.info(f"⏳ {args.command} (graine {run.seed}, sortie {run.out_dir})")
        COMMANDS[args.command](run, args)
        logger.info(f"✅ {args.command} terminé")
        return 0
    except HailModelError as e:
        logger.error(f"❌ {e}")
        print(f'error={e.kind} message="{_escape(str(e))}"', file=sys.stderr)
        return e.exit_code.value
    except Exception as e:
        logger.error(f"❌ Erreur inattendue: {e}", exc_info=True)
        print(f'error=unexpected message="{_escape(str(e))}"', file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
