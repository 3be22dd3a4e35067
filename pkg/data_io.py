"""
Ingestion, validation, prétraitement et persistance des données

Formats CSV (UTF-8, en-têtes déclarés, lignes de commentaire '# clé=valeur' en tête):
- bâtiments: building_id, lon, lat, volume, insured_value, construction_year
- sinistres: claim_id, building_id, date, value
- covariables (format long): date, cell_x, cell_y, poh, meshs, exposure,
  climada_count, climada_value, wind_dir
- tirages a posteriori: chain, iteration, parameter, value
"""

import json
import math
import logging
from dataclasses import dataclass, asdict
from datetime import date as Date
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

import geometry
from errors import SchemaError
from samplers import PosteriorSamples

try:
    import config
except ImportError:
    config = None

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _cfg(name: str, default):
    return getattr(config, name, default) if config else default


SCHEMAS: Dict[str, List[Tuple[str, str]]] = {
    'buildings': [('building_id', 'str'), ('lon', 'float'), ('lat', 'float'), ('volume', 'float'),
                  ('insured_value', 'float'), ('construction_year', 'int')],
    'claims': [('claim_id', 'str'), ('building_id', 'str'), ('date', 'date'), ('value', 'float')],
    'covariates': [('date', 'date'), ('cell_x', 'int'), ('cell_y', 'int'), ('poh', 'float'),
                   ('meshs', 'float'), ('exposure', 'float'), ('climada_count', 'float'),
                   ('climada_value', 'float'), ('wind_dir', 'float')],
    'posterior': [('chain', 'int'), ('iteration', 'int'), ('parameter', 'str'), ('value', 'float')],
    'enriched_claims': [('claim_id', 'str'), ('building_id', 'str'), ('date', 'date'), ('original_date', 'date'),
                        ('date_flag', 'str'), ('value', 'float'), ('cell', 'int'), ('insured_value', 'float'),
                        ('in_hail_season', 'int'), ('poh', 'float'), ('meshs', 'float'), ('exposure', 'float'),
                        ('climada_value', 'float')],
    'count_draws': [('draw', 'int'), ('date', 'date'), ('cell', 'int'), ('count', 'int')],
    'cell_predictions': [('date', 'date'), ('cell', 'int'), ('mean', 'float'), ('lower', 'float'),
                         ('upper', 'float')],
    'day_predictions': [('date', 'date'), ('mean', 'float'), ('lower', 'float'), ('upper', 'float')],
}

GRID_FIELDS = ['poh', 'meshs', 'exposure', 'climada_count', 'climada_value', 'wind_dir']


# ============================================================================
# ENREGISTREMENTS
# ============================================================================

@dataclass(frozen=True)
class BuildingRecord:
    building_id: str
    lon: float
    lat: float
    volume: float
    insured_value: float
    construction_year: int

    def __post_init__(self):
        if not self.insured_value > 0:
            raise ValueError(f"Valeur assurée non positive pour {self.building_id}")


@dataclass(frozen=True)
class ClaimRecord:
    claim_id: str
    building_id: str
    date: Date
    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"Montant de sinistre non positif pour {self.claim_id}")


def records_to_frame(records: Sequence) -> pd.DataFrame:
    frame = pd.DataFrame([asdict(r) for r in records])
    if 'date' in frame:
        frame['date'] = pd.to_datetime(frame['date'])
    return frame


def frame_to_claims(frame: pd.DataFrame) -> List[ClaimRecord]:
    return [ClaimRecord(str(r.claim_id), str(r.building_id), pd.Timestamp(r.date).date(), float(r.value))
            for r in frame.itertuples(index=False)]


def frame_to_buildings(frame: pd.DataFrame) -> List[BuildingRecord]:
    return [BuildingRecord(str(r.building_id), float(r.lon), float(r.lat), float(r.volume),
                           float(r.insured_value), int(r.construction_year))
            for r in frame.itertuples(index=False)]


# ============================================================================
# LECTURE / ÉCRITURE CSV
# ============================================================================

def read_header(path: PathLike) -> Dict[str, str]:
    """Lignes '# clé=valeur' en tête de fichier"""
    header = {}
    with open(path, encoding='utf-8') as f:
        for line in f:
            if not line.startswith('#'):
                break
            key, _, value = line[1:].strip().partition('=')
            header[key.strip()] = value.strip()
    return header


def _coerce(frame: pd.DataFrame, schema: str, header_lines: int) -> pd.DataFrame:
    missing = [c for c, _ in SCHEMAS[schema] if c not in frame.columns]
    if missing:
        raise SchemaError(f"Colonne manquante dans le fichier '{schema}'", column=missing[0])
    out = pd.DataFrame(index=frame.index)
    for column, kind in SCHEMAS[schema]:
        raw = frame[column]
        if kind == 'str':
            values = raw.astype(str)
            bad = values.str.len() == 0
        elif kind == 'date':
            values = pd.to_datetime(raw, format='%Y-%m-%d', errors='coerce')
            bad = values.isna()
        else:
            values = pd.to_numeric(raw, errors='coerce')
            bad = values.isna() | ~np.isfinite(values.astype(float))
            if kind == 'int' and not bad.any():
                non_integer = values != np.round(values)
                bad = bad | non_integer
                values = values.astype('int64') if not bad.any() else values
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise SchemaError(f"Valeur invalide '{raw.iloc[row]}'", column=column,
                              line=header_lines + row + 2)
        out[column] = values
    return out


def read_table(path: PathLike, schema: str) -> pd.DataFrame:
    """Lit et valide un CSV selon son schéma; les erreurs indiquent colonne et ligne"""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"Fichier introuvable: {path}")
    header = read_header(path)
    frame = pd.read_csv(path, skiprows=len(header), dtype=str, keep_default_na=False)
    table = _coerce(frame, schema, len(header))
    table.attrs['header'] = header
    logger.info(f"📥 {len(table)} ligne(s) '{schema}' chargée(s) depuis {path.name}")
    return table


def write_table(frame: pd.DataFrame, path: PathLike, schema: Optional[str] = None,
                header: Optional[Dict] = None):
    """Écrit un CSV avec ses lignes d'en-tête '# clé=valeur' (la graine en premier)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = frame.copy()
    if schema is not None:
        out = out[[c for c, _ in SCHEMAS[schema]]]
    for column in out.columns:
        if pd.api.types.is_datetime64_any_dtype(out[column]):
            out[column] = out[column].dt.strftime('%Y-%m-%d')
    with open(path, 'w', encoding='utf-8', newline='') as f:
        for key, value in (header or {}).items():
            f.write(f"# {key}={value}\n")
        out.to_csv(f, index=False, lineterminator='\n')
    logger.info(f"💾 {len(out)} ligne(s) écrite(s) dans {path.name}")


def read_buildings(path: PathLike, bounds: Optional[Tuple[float, float, float, float]] = None) -> pd.DataFrame:
    """
    Args:
        bounds: (lon_min, lat_min, lon_max, lat_max) de la région
    """
    table = read_table(path, 'buildings')
    lon_min, lat_min, lon_max, lat_max = bounds or (-180.0, -90.0, 180.0, 90.0)
    checks = [
        ('insured_value', table['insured_value'] <= 0),
        ('lon', (table['lon'] < lon_min) | (table['lon'] > lon_max)),
        ('lat', (table['lat'] < lat_min) | (table['lat'] > lat_max)),
        ('building_id', table['building_id'].duplicated()),
    ]
    _raise_first(table, checks)
    return table


def read_claims(path: PathLike) -> pd.DataFrame:
    table = read_table(path, 'claims')
    _raise_first(table, [('value', table['value'] <= 0), ('claim_id', table['claim_id'].duplicated())])
    return table


def _raise_first(table: pd.DataFrame, checks):
    header_lines = len(table.attrs.get('header', {}))
    for column, bad in checks:
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise SchemaError(f"Valeur hors domaine '{table[column].iloc[row]}'", column=column,
                              line=header_lines + row + 2)


# ============================================================================
# GRILLE DE COVARIABLES
# ============================================================================

@dataclass
class CovariateGrid:
    """
    Covariables journalières par cellule de 2 km

    Les cellules sont indexées iy * nx + ix; l'origine (origin_lon, origin_lat)
    est le coin sud-ouest de la grille.
    """
    dates: pd.DatetimeIndex
    nx: int
    ny: int
    cell_km: float
    origin_lon: float
    origin_lat: float
    fields: Dict[str, np.ndarray]  # nom -> (n_days, n_cells)

    def __post_init__(self):
        self.dates = pd.DatetimeIndex(self.dates)
        for name in GRID_FIELDS:
            values = np.asarray(self.fields[name], dtype=float)
            if values.shape != (self.n_days, self.n_cells):
                raise SchemaError(f"Champ '{name}' de forme {values.shape}", column=name)
            if not np.all(np.isfinite(values)):
                raise SchemaError("Valeurs manquantes dans la grille", column=name)
            self.fields[name] = values
        if np.any((self.poh < 0) | (self.poh > 1)):
            raise SchemaError("POH hors de [0, 1]", column='poh')
        if np.any(self.meshs < 0):
            raise SchemaError("MESHS négatif", column='meshs')

    def __getattr__(self, name):
        fields = self.__dict__.get('fields', {})
        if name in fields:
            return fields[name]
        raise AttributeError(name)

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def cell_indices(self) -> Tuple[np.ndarray, np.ndarray]:
        iy, ix = np.divmod(np.arange(self.n_cells), self.nx)
        return ix, iy

    def cell_xy(self) -> np.ndarray:
        """Centroïdes en km relatifs au centre de la grille (s_0)"""
        ix, iy = self.cell_indices()
        x = (ix + 0.5) * self.cell_km - 0.5 * self.nx * self.cell_km
        y = (iy + 0.5) * self.cell_km - 0.5 * self.ny * self.cell_km
        return np.column_stack([x, y])

    def cell_lonlat(self) -> np.ndarray:
        ix, iy = self.cell_indices()
        lon, lat = geometry.unproject_lonlat((ix + 0.5) * self.cell_km, (iy + 0.5) * self.cell_km,
                                             self.origin_lon, self.origin_lat)
        return np.column_stack([lon, lat])

    def cell_of(self, lon, lat) -> np.ndarray:
        """Cellule de chaque point; sur une arête, la cellule sud-ouest; -1 hors grille"""
        x, y = geometry.project_lonlat(np.asarray(lon, dtype=float), np.asarray(lat, dtype=float),
                                       self.origin_lon, self.origin_lat)
        ix = np.ceil(np.asarray(x) / self.cell_km).astype(int) - 1
        iy = np.ceil(np.asarray(y) / self.cell_km).astype(int) - 1
        # Un point sur le bord sud ou ouest de la grille reste dans la première cellule
        ix = np.where(np.isclose(x, 0.0), 0, ix)
        iy = np.where(np.isclose(y, 0.0), 0, iy)
        inside = (ix >= 0) & (ix < self.nx) & (iy >= 0) & (iy < self.ny)
        return np.where(inside, iy * self.nx + ix, -1)

    def daily_wind(self) -> np.ndarray:
        """Direction moyenne du vent par jour (moyenne circulaire, degrés)"""
        rad = np.radians(self.wind_dir)
        mean = np.degrees(np.arctan2(np.sin(rad).mean(axis=1), np.cos(rad).mean(axis=1)))
        return np.mod(mean, 360.0)

    def in_hail_season(self) -> np.ndarray:
        return np.isin(self.dates.month, _cfg('HAIL_SEASON_MONTHS', (5, 6, 7, 8)))

    def active_days(self) -> np.ndarray:
        """Jours avec un signal de grêle: M^NC > 0 ou POH > 0 quelque part"""
        return np.any(self.climada_count > 0, axis=1) | np.any(self.poh > 0, axis=1)

    def day_index(self, dates) -> np.ndarray:
        """Indice de chaque date dans la grille, -1 si absente"""
        return self.dates.get_indexer(pd.DatetimeIndex(pd.to_datetime(dates)))

    def subset(self, mask: np.ndarray) -> 'CovariateGrid':
        mask = np.asarray(mask, dtype=bool)
        return CovariateGrid(self.dates[mask], self.nx, self.ny, self.cell_km, self.origin_lon, self.origin_lat,
                             {k: v[mask] for k, v in self.fields.items()})

    def header(self) -> Dict[str, object]:
        return {'origin_lon': self.origin_lon, 'origin_lat': self.origin_lat, 'cell_km': self.cell_km,
                'nx': self.nx, 'ny': self.ny}

    def to_frame(self) -> pd.DataFrame:
        ix, iy = self.cell_indices()
        frame = pd.DataFrame({
            'date': np.repeat(self.dates.values, self.n_cells),
            'cell_x': np.tile(ix, self.n_days),
            'cell_y': np.tile(iy, self.n_days),
        })
        for name in GRID_FIELDS:
            frame[name] = self.fields[name].ravel()
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, header: Dict[str, str]) -> 'CovariateGrid':
        try:
            nx, ny = int(header['nx']), int(header['ny'])
            cell_km = float(header['cell_km'])
            origin_lon, origin_lat = float(header['origin_lon']), float(header['origin_lat'])
        except (KeyError, ValueError) as e:
            raise SchemaError(f"En-tête de grille incomplet ou invalide: {e}")
        if np.any((frame['cell_x'] < 0) | (frame['cell_x'] >= nx) | (frame['cell_y'] < 0) | (frame['cell_y'] >= ny)):
            raise SchemaError("Cellule hors de la grille déclarée", column='cell_x')
        dates = pd.DatetimeIndex(sorted(frame['date'].unique()))
        day = dates.get_indexer(frame['date'])
        cell = frame['cell_y'].to_numpy() * nx + frame['cell_x'].to_numpy()
        flat = day * nx * ny + cell
        if pd.Series(flat).duplicated().any():
            raise SchemaError("Ligne de grille dupliquée (date, cellule)")
        present = np.zeros(len(dates) * nx * ny, dtype=bool)
        present[flat] = True
        if not present.all():
            holes = np.flatnonzero(~present)[:5]
            listed = ', '.join(f"({dates[h // (nx * ny)].date()}, {h % (nx * ny) % nx}/{h % (nx * ny) // nx})"
                               for h in holes)
            raise SchemaError(f"Grille incomplète: {(~present).sum()} cellule(s)-jour(s) manquante(s): {listed}")
        fields = {}
        for name in GRID_FIELDS:
            values = np.empty(len(dates) * nx * ny)
            values[flat] = frame[name].to_numpy(float)
            fields[name] = values.reshape(len(dates), nx * ny)
        return cls(dates, nx, ny, cell_km, origin_lon, origin_lat, fields)


def read_covariates(path: PathLike) -> CovariateGrid:
    table = read_table(path, 'covariates')
    return CovariateGrid.from_frame(table, table.attrs['header'])


def write_covariates(grid: CovariateGrid, path: PathLike, seed: Optional[int] = None):
    header = {'seed': seed} if seed is not None else {}
    header.update(grid.header())
    write_table(grid.to_frame(), path, 'covariates', header)


# ============================================================================
# TIRAGES A POSTERIORI
# ============================================================================

def write_posterior(samples: PosteriorSamples, path: PathLike, seed: Optional[int] = None):
    """CSV (chain, iteration, parameter, value) + métadonnées JSON à côté"""
    path = Path(path)
    header = {'seed': seed} if seed is not None else {}
    header['sampler'] = samples.meta.get('sampler', samples.meta.get('model', 'unknown'))
    header['divergences'] = samples.divergences
    write_table(samples.to_frame(), path, 'posterior', header)
    meta = {k: v for k, v in samples.meta.items() if _json_safe(v)}
    meta['divergences'] = samples.divergences
    with open(path.with_suffix('.json'), 'w', encoding='utf-8') as f:
        json.dump(meta, f, indent=2, sort_keys=True)


def _json_safe(value) -> bool:
    try:
        json.dumps(value)
        return True
    except (TypeError, ValueError):
        return False


def read_posterior(path: PathLike) -> PosteriorSamples:
    path = Path(path)
    table = read_table(path, 'posterior')
    meta = {}
    if path.with_suffix('.json').exists():
        with open(path.with_suffix('.json'), encoding='utf-8') as f:
            meta = json.load(f)
    samples = PosteriorSamples.from_frame(table, meta)
    samples.divergences = int(meta.get('divergences', table.attrs['header'].get('divergences', 0)))
    return samples


# ============================================================================
# PRÉTRAITEMENT
# ============================================================================

def assign_cells(buildings: pd.DataFrame, grid: CovariateGrid) -> pd.DataFrame:
    """Ajoute la cellule 2 km de chaque bâtiment; ceux hors grille sont écartés"""
    out = buildings.copy()
    out['cell'] = grid.cell_of(out['lon'].to_numpy(), out['lat'].to_numpy())
    outside = out['cell'] < 0
    if outside.any():
        logger.warning(f"⚠️ {int(outside.sum())} bâtiment(s) hors de la grille écarté(s)")
    return out.loc[~outside].reset_index(drop=True)


def attach_buildings(claims: pd.DataFrame, buildings: pd.DataFrame) -> pd.DataFrame:
    """Joint les sinistres à leur bâtiment (cellule, valeur assurée)"""
    cols = ['building_id', 'cell', 'insured_value', 'lon', 'lat']
    merged = claims.merge(buildings[cols], on='building_id', how='left', validate='many_to_one')
    orphans = merged['cell'].isna()
    if orphans.any():
        logger.warning(f"⚠️ {int(orphans.sum())} sinistre(s) sans bâtiment connu écarté(s)")
    merged = merged.loc[~orphans].copy()
    merged['cell'] = merged['cell'].astype(int)
    return merged.reset_index(drop=True)


def cluster_claim_dates(claims: pd.DataFrame, grid: CovariateGrid) -> pd.DataFrame:
    """
    Regroupe les dates de sinistre sur le jour de POH maximal de la fenêtre +-2 jours

    Si un jour de la fenêtre a, dans la cellule du sinistre, une POH supérieure à
    50% de celle du jour déclaré, le sinistre passe au jour de POH maximale (égalité:
    date d'origine conservée). La fenêtre est toujours centrée sur la date déclarée
    (colonne original_date), ce qui rend l'opération idempotente.

    Args:
        claims: sinistres avec colonnes date et cell
        grid: grille de covariables (POH)

    Returns:
        copie avec date ajustée, original_date et date_flag ('moved', 'unchanged', 'missing_poh')
    """
    window = _cfg('DATE_WINDOW_DAYS', 2)
    ratio = _cfg('POH_RATIO', 0.5)
    out = claims.copy()
    if 'original_date' not in out:
        out['original_date'] = pd.to_datetime(out['date'])
    anchor = pd.DatetimeIndex(out['original_date'])
    cells = out['cell'].to_numpy(int)
    new_dates = anchor.copy().to_numpy()
    flags = np.full(len(out), 'unchanged', dtype=object)

    offsets = np.arange(-window, window + 1)
    for k, (day0, cell) in enumerate(zip(anchor, cells)):
        idx = grid.day_index([day0 + pd.Timedelta(days=int(o)) for o in offsets])
        centre = idx[window]
        if centre < 0 or np.all(idx[np.arange(len(idx)) != window] < 0):
            flags[k] = 'missing_poh'
            continue
        poh = np.where(idx >= 0, grid.poh[np.maximum(idx, 0), cell], -np.inf)
        others = np.arange(len(offsets)) != window
        if not np.any(poh[others] > ratio * poh[window]):
            continue
        best = poh.max()
        # Égalité: la date d'origine d'abord, puis le jour le plus proche
        candidates = np.flatnonzero(poh == best)
        choice = window if window in candidates else candidates[np.argmin(np.abs(candidates - window))]
        if choice != window:
            new_dates[k] = (day0 + pd.Timedelta(days=int(offsets[choice]))).to_datetime64()
            flags[k] = 'moved'

    out['date'] = pd.to_datetime(new_dates)
    out['date_flag'] = flags
    moved, missing = int((flags == 'moved').sum()), int((flags == 'missing_poh').sum())
    logger.info(f"📊 Regroupement des dates: {moved} sinistre(s) déplacé(s)")
    if missing:
        logger.warning(f"⚠️ {missing} sinistre(s) sans fenêtre POH, date conservée")
    return out


def season_filter(claims: pd.DataFrame) -> pd.DataFrame:
    """Garde avril-septembre et marque la saison de grêle (mai-août)"""
    months = pd.to_datetime(claims['date']).dt.month
    keep = months.isin(_cfg('CLAIM_SEASON_MONTHS', (4, 5, 6, 7, 8, 9)))
    dropped = int((~keep).sum())
    out = claims.loc[keep].copy()
    out['in_hail_season'] = months[keep].isin(_cfg('HAIL_SEASON_MONTHS', (5, 6, 7, 8))).to_numpy()
    logger.info(f"📊 {dropped} sinistre(s) hors saison supprimé(s)")
    return out.reset_index(drop=True)


def split_by_year(records: pd.DataFrame, date_column: str = 'date') -> Dict[str, pd.DataFrame]:
    """Partition disjointe et exhaustive: entraînement <= 2015, validation 2016-2017, test >= 2018"""
    years = pd.to_datetime(records[date_column]).dt.year
    last_train = _cfg('TRAIN_LAST_YEAR', 2015)
    validation = _cfg('VALIDATION_YEARS', (2016, 2017))
    masks = {
        'train': years <= last_train,
        'validation': years.between(min(validation), max(validation)),
        'test': years > max(validation),
    }
    return {name: records.loc[mask].reset_index(drop=True) for name, mask in masks.items()}


def split_grid_by_year(grid: CovariateGrid) -> Dict[str, CovariateGrid]:
    years = grid.dates.year
    last_train = _cfg('TRAIN_LAST_YEAR', 2015)
    validation = _cfg('VALIDATION_YEARS', (2016, 2017))
    return {
        'train': grid.subset(years <= last_train),
        'validation': grid.subset((years >= min(validation)) & (years <= max(validation))),
        'test': grid.subset(years > max(validation)),
    }


def counts_from_claims(claims: pd.DataFrame, grid: CovariateGrid) -> np.ndarray:
    """Matrice (n_days, n_cells) des comptages de sinistres"""
    counts = np.zeros((grid.n_days, grid.n_cells), dtype=int)
    day = grid.day_index(claims['date'])
    known = day >= 0
    if (~known).any():
        logger.warning(f"⚠️ {int((~known).sum())} sinistre(s) hors des dates de la grille ignoré(s)")
    np.add.at(counts, (day[known], claims['cell'].to_numpy(int)[known]), 1)
    return counts


def downscale_climada_value(grid: CovariateGrid, buildings: pd.DataFrame) -> np.ndarray:
    """
    M^YC par bâtiment et par jour: valeur CLIMADA de la cellule répartie au
    prorata de la valeur assurée des bâtiments de la cellule

    Returns:
        (n_days, n_buildings)
    """
    cells = buildings['cell'].to_numpy(int)
    insured = buildings['insured_value'].to_numpy(float)
    cell_total = np.bincount(cells, weights=insured, minlength=grid.n_cells)
    share = insured / cell_total[cells]
    return grid.climada_value[:, cells] * share


def enrich_claims(claims: pd.DataFrame, grid: CovariateGrid, buildings: pd.DataFrame) -> pd.DataFrame:
    """Ajoute aux sinistres les covariables du jour et de la cellule, et M^YC réduit d'échelle"""
    out = claims.copy()
    day = grid.day_index(out['date'])
    known = day >= 0
    if (~known).any():
        logger.warning(f"⚠️ {int((~known).sum())} sinistre(s) sans covariables écarté(s)")
    out, day = out.loc[known].reset_index(drop=True), day[known]
    cells = out['cell'].to_numpy(int)
    for name in ['poh', 'meshs', 'exposure']:
        out[name] = grid.fields[name][day, cells]
    cell_total = np.bincount(buildings['cell'].to_numpy(int), weights=buildings['insured_value'].to_numpy(float),
                             minlength=grid.n_cells)
    share = out['insured_value'].to_numpy(float) / cell_total[cells]
    out['climada_value'] = grid.climada_value[day, cells] * share
    return out


def preprocess_claims(claims: pd.DataFrame, buildings: pd.DataFrame, grid: CovariateGrid) -> pd.DataFrame:
    """
    Chaîne complète: cellule des bâtiments, jointure, regroupement des dates,
    filtre saisonnier et covariables

    Args:
        buildings: bâtiments avec colonne cell (voir assign_cells)

    Returns:
        sinistres enrichis au schéma 'enriched_claims'
    """
    out = attach_buildings(claims, buildings)
    out = cluster_claim_dates(out, grid)
    out = season_filter(out)
    out = enrich_claims(out, grid, buildings)
    out['in_hail_season'] = out['in_hail_season'].astype(int)
    return out[[c for c, _ in SCHEMAS['enriched_claims']]]


def write_enriched_claims(claims: pd.DataFrame, path: PathLike, seed: Optional[int] = None):
    header = {'seed': seed} if seed is not None else {}
    out = claims.copy()
    out['in_hail_season'] = out['in_hail_season'].astype(int)
    write_table(out, path, 'enriched_claims', header)


def read_enriched_claims(path: PathLike) -> pd.DataFrame:
    table = read_table(path, 'enriched_claims')
    table['in_hail_season'] = table['in_hail_season'].astype(bool)
    return table
