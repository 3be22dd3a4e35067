"""
Modèle génératif: covariables synthétiques, lignes journalières, comptages ZINB
et valeurs de sinistres à partir de paramètres connus

Sert de source de données pour les tests de recouvrement et de générateur
de catalogues stochastiques au format CSV de data_io.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

import geometry
from count_model import CountModelParams
from data_io import CovariateGrid
from distributions import expit
from errors import ConfigError
from kernels import MaternParams, RationalQuadParams, build_covariance
from value_model import (
    BetaModelParams, CovariateScaler, ExceedanceParams, GpdModelParams, ValueModelParams,
    sample_values, season_half,
)

try:
    import config
except ImportError:
    config = None

logger = logging.getLogger(__name__)


def _cfg(name: str, default):
    return getattr(config, name, default) if config else default


DEFAULT_COUNT_PARAMS = {
    'psi0': -1.5, 'psi1': 1.0, 'psi2': 0.5, 'mu0': -2.5, 'mu1': [0.15, 0.0, 0.0], 'mu2': 0.05,
    'alpha': 2.0, 'sigma_m': 3.0, 'length_scale_mu': 6.0, 'eps_var_season': 0.3, 'eps_var_off': 0.1,
}

DEFAULT_VALUE_PARAMS = {
    'p': [-2.0, 0.3, 0.5, 0.2, 0.2], 'chi_var': 0.2, 'eps_p_var': 0.1,
    'nu': [-0.5, 0.2, 0.3, 0.1], 'kappa': 3.0, 'length_scale_beta': 15.0,
    'sigma': [0.0, 0.3, 0.1, 0.1], 'length_scale_sigma': 15.0, 'xi1': 0.3, 'xi2': -0.1,
    'threshold_u': 8.06,
}


@dataclass
class ScenarioConfig:
    """Scénario de simulation; tous les champs latents sont tirés à neuf"""
    nx: int = 10
    ny: int = 10
    cell_km: float = 2.0
    origin_lon: float = 8.35
    origin_lat: float = 47.15
    start_date: str = '2014-04-01'
    n_days: int = 60
    days_per_year: Optional[int] = None  # jours répartis sur la saison de chaque année successive
    storm_prob: float = 0.5  # probabilité qu'un jour porte un orage
    storm_width_km: float = 4.0
    storm_length_km: float = 20.0
    meshs_scale_cm: float = 3.0
    buildings_per_cell: float = 20.0
    insured_log_mean: float = 13.5  # log CHF
    insured_log_sd: float = 0.5
    impact_count_coef: float = 0.01  # M^NC = round(c.MESHS².n_bâtiments)
    impact_value_coef: float = 0.002  # M^YC = c.MESHS.exposition
    count_params: Dict = field(default_factory=lambda: dict(DEFAULT_COUNT_PARAMS))
    value_params: Dict = field(default_factory=lambda: dict(DEFAULT_VALUE_PARAMS))
    feature_means: Tuple[float, ...] = (0.5, 2.0, 1.0, 1.0e7)
    feature_sds: Tuple[float, ...] = (0.3, 1.5, 1.0, 1.0e7)
    seed: int = 7

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1 or self.n_days < 1:
            raise ConfigError("Dimensions de grille et nombre de jours doivent être >= 1")
        if not 0.0 <= self.storm_prob <= 1.0:
            raise ConfigError("storm_prob hors de [0, 1]")
        if self.days_per_year is not None and self.days_per_year < 1:
            raise ConfigError("days_per_year doit être >= 1")
        if self.cell_km <= 0 or self.buildings_per_cell < 0:
            raise ConfigError("cell_km doit être > 0 et buildings_per_cell >= 0")
        try:
            self.count_truth()
        except (ValueError, TypeError, KeyError) as e:
            raise ConfigError(f"Paramètres de comptage invalides: {e}")

    @classmethod
    def from_dict(cls, data: Dict) -> 'ScenarioConfig':
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Clé(s) de scénario inconnue(s): {sorted(unknown)}")
        data = dict(data)
        data['count_params'] = {**DEFAULT_COUNT_PARAMS, **data.get('count_params', {})}
        data['value_params'] = {**DEFAULT_VALUE_PARAMS, **data.get('value_params', {})}
        for key in ('feature_means', 'feature_sds'):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def count_truth(self) -> CountModelParams:
        p = dict(self.count_params)
        p['mu1'] = tuple(p['mu1'])
        return CountModelParams(**p)

    def scaler(self) -> CovariateScaler:
        return CovariateScaler(np.asarray(self.feature_means, dtype=float), np.asarray(self.feature_sds, dtype=float))

    def season_dates(self) -> pd.DatetimeIndex:
        """
        n_days jours de la saison des sinistres (avril-septembre) à partir de start_date:
        consécutifs, ou days_per_year jours régulièrement espacés par année
        """
        months = _cfg('CLAIM_SEASON_MONTHS', (4, 5, 6, 7, 8, 9))
        start = pd.Timestamp(self.start_date)
        if self.days_per_year:
            dates = []
            year = start.year
            while len(dates) < self.n_days:
                season = pd.date_range(f"{year}-01-01", f"{year}-12-31", freq='D')
                season = season[season.month.isin(months) & (season >= start)]
                if season.empty:
                    year += 1
                    continue
                picks = np.linspace(0, len(season) - 1, self.days_per_year).round().astype(int)
                dates.extend(season[np.unique(picks)])
                year += 1
            return pd.DatetimeIndex(dates[:self.n_days])
        dates = []
        day = start
        while len(dates) < self.n_days:
            if day.month in months:
                dates.append(day)
            day += pd.Timedelta(days=1)
        return pd.DatetimeIndex(dates)


# ============================================================================
# SCÉNARIO
# ============================================================================

class Scenario:
    """État tiré une fois par scénario: bâtiments, lignes, champs grossiers, vérité des paramètres"""

    def __init__(self, scenario: ScenarioConfig):
        self.config = scenario
        root = np.random.SeedSequence(scenario.seed)
        static_seq, lines_seq, covar_seq, days_seq = root.spawn(4)
        self.day_seeds = days_seq.spawn(scenario.n_days)
        self.covariate_seeds = covar_seq.spawn(scenario.n_days)
        self.dates = scenario.season_dates()
        self.count_truth = scenario.count_truth()
        self.scaler = scenario.scaler()

        rng = np.random.default_rng(static_seq)
        self.template = CovariateGrid(
            self.dates[:0], scenario.nx, scenario.ny, scenario.cell_km, scenario.origin_lon, scenario.origin_lat,
            {name: np.zeros((0, scenario.nx * scenario.ny)) for name in
             ['poh', 'meshs', 'exposure', 'climada_count', 'climada_value', 'wind_dir']})
        self.cell_xy = self.template.cell_xy()
        self.buildings = self._place_buildings(rng)
        self.coarse_cell, self.coarse_lonlat = self._coarse_blocks()
        self.value_truth = self._value_truth(rng)
        self.storm_days, self.wind_dir, self.lines = self._draw_lines(np.random.default_rng(lines_seq))
        self._grid = None

    def _place_buildings(self, rng: np.random.Generator) -> pd.DataFrame:
        c = self.config
        per_cell = rng.poisson(c.buildings_per_cell, size=self.template.n_cells)
        cells = np.repeat(np.arange(self.template.n_cells), per_cell)
        iy, ix = np.divmod(cells, c.nx)
        x = (ix + rng.random(cells.size)) * c.cell_km
        y = (iy + rng.random(cells.size)) * c.cell_km
        lon, lat = geometry.unproject_lonlat(x, y, c.origin_lon, c.origin_lat)
        insured = np.round(rng.lognormal(c.insured_log_mean, c.insured_log_sd, cells.size), 2)
        frame = pd.DataFrame({
            'building_id': [f"B{i:06d}" for i in range(cells.size)],
            'lon': np.atleast_1d(lon),
            'lat': np.atleast_1d(lat),
            'volume': np.round(insured / (600.0 * rng.uniform(0.8, 1.2, cells.size)), 1),
            'insured_value': insured,
            'construction_year': rng.integers(1900, 2016, cells.size),
            'cell': cells,
        })
        logger.info(f"📊 {len(frame)} bâtiment(s) placé(s) sur {self.template.n_cells} cellule(s)")
        return frame

    def _coarse_blocks(self) -> Tuple[np.ndarray, np.ndarray]:
        block = _cfg('COARSE_BLOCK', 5)
        ix, iy = self.template.cell_indices()
        n_bx = (self.config.nx + block - 1) // block
        coarse = (iy // block) * n_bx + ix // block
        _, coarse = np.unique(coarse, return_inverse=True)
        lonlat = self.template.cell_lonlat()
        centroids = np.array([lonlat[coarse == k].mean(axis=0) for k in range(coarse.max() + 1)])
        return coarse, centroids

    def _value_truth(self, rng: np.random.Generator) -> ValueModelParams:
        v = self.config.value_params
        n_coarse = self.coarse_lonlat.shape[0]
        seasons = sorted(season_half(self.dates).unique())
        self.season_keys = seasons
        beta_cov = build_covariance(self.coarse_lonlat, RationalQuadParams(v['length_scale_beta']), distance='chordal')
        sigma_cov = build_covariance(self.coarse_lonlat, MaternParams(v['length_scale_sigma']), distance='chordal')
        return ValueModelParams(
            exceedance=ExceedanceParams(
                p=v['p'], chi=math.sqrt(v['chi_var']) * rng.standard_normal(n_coarse), chi_var=v['chi_var'],
                eps_p=math.sqrt(v['eps_p_var']) * rng.standard_normal(len(seasons)), eps_p_var=v['eps_p_var']),
            body=BetaModelParams(nu=v['nu'], kappa=v['kappa'], x_beta=beta_cov.sample(rng),
                                 length_scale_beta=v['length_scale_beta']),
            tail=GpdModelParams(sigma=v['sigma'], x_sigma=sigma_cov.sample(rng),
                                length_scale_sigma=v['length_scale_sigma'],
                                xi_season=(v['xi1'], v['xi2']), threshold_u=v['threshold_u']),
        )

    def _draw_lines(self, rng: np.random.Generator):
        c = self.config
        lo = float(self.cell_xy[:, 1].min() - _cfg('ALPHA_MARGIN_KM', 20.0))
        hi = float(self.cell_xy[:, 1].max() + _cfg('ALPHA_MARGIN_KM', 20.0))
        theta_sd = math.radians(_cfg('THETA_PRIOR_SD_DEG', 15.0))
        storm = rng.random(c.n_days) < c.storm_prob
        wind = rng.uniform(180.0, 300.0, c.n_days)  # vents dominants de secteur sud-ouest à ouest
        theta = np.asarray(geometry.wind_to_line_angle(wind)) + theta_sd * rng.standard_normal(c.n_days)
        # alpha_t près de la grille pour que l'orage la traverse
        alpha = rng.uniform(0.5 * lo, 0.5 * hi, c.n_days)
        lines = [geometry.LineState(theta[t], alpha[t], self.count_truth.sigma_m) for t in range(c.n_days)]
        return storm, np.where(storm, wind, 0.0), lines

    @property
    def grid(self) -> CovariateGrid:
        if self._grid is None:
            self._grid = simulate_covariates(self)
        return self._grid


# ============================================================================
# COVARIABLES
# ============================================================================

def _storm_field(scenario: Scenario, day: int, rng: np.random.Generator) -> np.ndarray:
    """Champ gaussien lisse, anisotrope le long de la ligne du jour, modulé par la distance à la ligne"""
    c = scenario.config
    line = scenario.lines[day]
    x_rot, y_rot = geometry.rotate_coords(scenario.cell_xy[:, 0], scenario.cell_xy[:, 1], line.theta, line.alpha)
    scaled = np.column_stack([np.asarray(x_rot) / c.storm_length_km, np.asarray(y_rot) / c.storm_width_km])
    cov = build_covariance(scaled, MaternParams(1.0), distance='planar')
    noise = cov.sample(rng)
    core = np.exp(-0.5 * (np.asarray(y_rot) / c.storm_width_km) ** 2)
    return 2.0 * core + 0.5 * noise - 1.0


def simulate_covariates(scenario: Scenario) -> CovariateGrid:
    """
    POH et MESHS comme champs seuillés allongés le long de la ligne, vent par jour,
    M^NC et M^YC par une fonction d'impact monotone simple

    Returns:
        CovariateGrid (tous les champs à 0 les jours sans orage)
    """
    c = scenario.config
    n_cells = scenario.template.n_cells
    fields = {name: np.zeros((c.n_days, n_cells)) for name in
              ['poh', 'meshs', 'exposure', 'climada_count', 'climada_value', 'wind_dir']}
    b = scenario.buildings
    n_buildings = np.bincount(b['cell'], minlength=n_cells)
    insured = np.bincount(b['cell'], weights=b['insured_value'], minlength=n_cells)

    for t in range(c.n_days):
        if not scenario.storm_days[t]:
            continue
        rng = np.random.default_rng(scenario.covariate_seeds[t])
        signal = _storm_field(scenario, t, rng)
        poh = np.clip(signal, 0.0, 1.0)
        meshs = c.meshs_scale_cm * np.clip(signal - 0.5, 0.0, None)
        hit = meshs > 0
        fields['poh'][t] = poh
        fields['meshs'][t] = np.round(meshs, 3)
        fields['exposure'][t] = np.where(hit, insured, 0.0)
        fields['climada_count'][t] = np.minimum(np.round(c.impact_count_coef * meshs ** 2 * n_buildings),
                                                n_buildings)
        fields['climada_value'][t] = np.round(np.minimum(c.impact_value_coef * meshs * insured, insured), 2)
        fields['wind_dir'][t] = scenario.wind_dir[t]
    grid = CovariateGrid(scenario.dates, c.nx, c.ny, c.cell_km, c.origin_lon, c.origin_lat, fields)
    logger.info(f"✅ Covariables simulées: {int(scenario.storm_days.sum())} jour(s) d'orage sur {c.n_days}")
    return grid


# ============================================================================
# JOURS ET CATALOGUE
# ============================================================================

@dataclass
class DayOutcome:
    line: geometry.LineState
    counts: np.ndarray  # (n_cells,)
    claims: pd.DataFrame  # building_id, value
    latent_field: np.ndarray
    eps: float
    capped: int = 0  # cellules dont le tirage ZINB dépassait le nombre de bâtiments


def simulate_day(scenario: Scenario, day: int, rng: np.random.Generator) -> DayOutcome:
    """
    Ligne, X^mu, eps(t), comptages ZINB par cellule, puis bâtiments touchés
    (les plus exposés d'abord) et leur valeur de sinistre
    """
    grid = scenario.grid
    p = scenario.count_truth
    line = scenario.lines[day]
    n_cells = grid.n_cells
    hail = bool(grid.in_hail_season()[day])
    x, y = scenario.cell_xy[:, 0], scenario.cell_xy[:, 1]
    m_t = np.asarray(geometry.line_mean_coords(x, y, line), dtype=float)

    cov = build_covariance(scenario.cell_xy, MaternParams(p.length_scale_mu), distance='planar')
    latent = cov.sample(rng, mean=m_t)
    eps = math.sqrt(p.eps_var(hail)) * rng.standard_normal()
    m_nc = grid.climada_count[day]
    psi = expit(p.psi0 + p.psi1 * (m_nc > 0) + p.psi2 * m_nc * m_t)
    bound = _cfg('LINEAR_PREDICTOR_CLAMP', 30.0)
    eta = np.clip(p.mu0 + p.mu1[0] * m_nc + p.mu1[1] * m_nc ** 2 + p.mu1[2] * m_nc ** 3
                  + p.mu2 * m_nc * m_t + latent + eps, -bound, bound)
    mu = np.exp(eta)
    active = rng.random(n_cells) < psi
    nb = rng.negative_binomial(p.alpha, p.alpha / (p.alpha + mu))
    counts = np.where(active, nb, 0) if grid.active_days()[day] else np.zeros(n_cells, dtype=int)

    b = scenario.buildings
    # au plus un sinistre par bâtiment: le comptage retenu est celui des sinistres tirés
    capacity = np.bincount(b['cell'], minlength=n_cells)
    capped = int(np.sum(counts > capacity))
    counts = np.minimum(counts, capacity)
    chosen = []
    for cell in np.flatnonzero(counts):
        members = b.index[b['cell'] == cell]
        order = members[np.argsort(-b.loc[members, 'insured_value'].to_numpy(), kind='stable')]
        chosen.extend(order[:int(counts[cell])])
    chosen = np.asarray(chosen, dtype=int)

    claims = pd.DataFrame({'building_id': b.loc[chosen, 'building_id'].to_numpy(), 'value': np.zeros(chosen.size)})
    if chosen.size:
        cells = b.loc[chosen, 'cell'].to_numpy()
        features = scenario.scaler.transform(grid.poh[day, cells], grid.meshs[day, cells], grid.exposure[day, cells])
        cell_insured = np.bincount(b['cell'], weights=b['insured_value'], minlength=n_cells)
        climada_value = grid.climada_value[day, cells] * b.loc[chosen, 'insured_value'].to_numpy() / cell_insured[cells]
        season = scenario.season_keys.index(season_half([grid.dates[day]]).iloc[0])
        eps_p = scenario.value_truth.exceedance.eps_p[season]
        values = sample_values(features, scenario.coarse_cell[cells], np.full(chosen.size, hail),
                               climada_value, scenario.value_truth, rng, eps_p=eps_p)
        claims['value'] = np.maximum(np.round(values, 2), 0.01)
    return DayOutcome(line=line, counts=counts, claims=claims, latent_field=latent, eps=eps, capped=capped)


@dataclass
class Catalog:
    grid: CovariateGrid
    buildings: pd.DataFrame
    claims: pd.DataFrame
    counts: np.ndarray  # (n_days, n_cells)
    lines: List[geometry.LineState]
    latent_field: np.ndarray
    eps: np.ndarray

    def daily_totals(self) -> pd.Series:
        """Somme journalière des sinistres (tous les jours, 0 sans sinistre)"""
        totals = self.claims.groupby('date')['value'].sum()
        return totals.reindex(self.grid.dates, fill_value=0.0)


def generate_catalog(scenario_config: ScenarioConfig) -> Catalog:
    """Catalogue complet, entièrement déterminé par la graine du scénario"""
    scenario = Scenario(scenario_config)
    grid = scenario.grid
    frames, counts, latent, eps = [], [], [], []
    capped = 0
    for t in range(scenario_config.n_days):
        outcome = simulate_day(scenario, t, np.random.default_rng(scenario.day_seeds[t]))
        day_claims = outcome.claims.copy()
        day_claims.insert(0, 'claim_id', [f"C{t:05d}-{k:04d}" for k in range(len(day_claims))])
        day_claims['date'] = grid.dates[t]
        frames.append(day_claims)
        counts.append(outcome.counts)
        latent.append(outcome.latent_field)
        eps.append(outcome.eps)
        capped += outcome.capped
    claims = pd.concat(frames, ignore_index=True)[['claim_id', 'building_id', 'date', 'value']]
    if capped:
        logger.warning(f"⚠️ {capped} comptage(s) cellule-jour ramené(s) au nombre de bâtiments de la cellule")
    logger.info(f"✅ Catalogue simulé: {len(claims)} sinistre(s) sur {scenario_config.n_days} jour(s)")
    return Catalog(grid=grid, buildings=scenario.buildings, claims=claims, counts=np.asarray(counts),
                   lines=scenario.lines, latent_field=np.asarray(latent), eps=np.asarray(eps))


def truth_frame(catalog: Catalog) -> pd.DataFrame:
    """Lignes et totaux vrais par jour (pour la vérification des prédictions)"""
    return pd.DataFrame({
        'date': catalog.grid.dates,
        'theta': [l.theta for l in catalog.lines],
        'alpha': [l.alpha for l in catalog.lines],
        'eps': catalog.eps,
        'n_claims': catalog.counts.sum(axis=1),
        'total_value': catalog.daily_totals().to_numpy(),
    })
