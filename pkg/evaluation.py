"""
Assemblage des prédictions (comptages x valeurs) et métriques d'évaluation:
SKSS, LSD, table de confusion, corrélation extrémale et de Spearman, données QQ
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

try:
    import config
except ImportError:
    config = None

logger = logging.getLogger(__name__)


def _cfg(name: str, default):
    return getattr(config, name, default) if config else default


# ============================================================================
# COMBINAISON DES PRÉDICTIONS
# ============================================================================

@dataclass
class DamagePrediction:
    """
    Dommages prédits: moyenne et bornes 2.5/97.5 sur les mn échantillons composites

    Tableaux indexés par jour en première dimension.
    """
    building_mean: np.ndarray  # (n_days, n_buildings)
    building_lower: np.ndarray
    building_upper: np.ndarray
    cell_mean: np.ndarray  # (n_days, n_cells)
    cell_lower: np.ndarray
    cell_upper: np.ndarray
    total_mean: np.ndarray  # (n_days,)
    total_lower: np.ndarray
    total_upper: np.ndarray
    diagnostics: Dict[str, int] = field(default_factory=dict)

    @property
    def n_days(self) -> int:
        return self.total_mean.shape[0]

    def coverage(self, observed_totals) -> float:
        """Part des jours dont le total observé tombe dans l'intervalle à 95%"""
        obs = np.asarray(observed_totals, dtype=float)
        return float(np.mean((obs >= self.total_lower) & (obs <= self.total_upper)))

    def day_frame(self, dates=None) -> pd.DataFrame:
        return pd.DataFrame({
            'date': dates if dates is not None else np.arange(self.n_days),
            'mean': self.total_mean,
            'lower': self.total_lower,
            'upper': self.total_upper,
        })

    def cell_frame(self, dates=None) -> pd.DataFrame:
        n_days, n_cells = self.cell_mean.shape
        days = dates if dates is not None else np.arange(n_days)
        return pd.DataFrame({
            'date': np.repeat(np.asarray(days), n_cells),
            'cell': np.tile(np.arange(n_cells), n_days),
            'mean': self.cell_mean.ravel(),
            'lower': self.cell_lower.ravel(),
            'upper': self.cell_upper.ravel(),
        })

    def building_frame(self, building_ids: Sequence[str], dates=None) -> pd.DataFrame:
        n_days, n_buildings = self.building_mean.shape
        days = dates if dates is not None else np.arange(n_days)
        return pd.DataFrame({
            'date': np.repeat(np.asarray(days), n_buildings),
            'building_id': np.tile(np.asarray(building_ids), n_days),
            'mean': self.building_mean.ravel(),
            'lower': self.building_lower.ravel(),
            'upper': self.building_upper.ravel(),
        })


def exposure_rank(cells: np.ndarray, insured_value: np.ndarray) -> np.ndarray:
    """Rang de chaque bâtiment dans sa cellule par valeur assurée décroissante (0 = le plus exposé)"""
    cells = np.asarray(cells, dtype=int)
    order = np.lexsort((-np.asarray(insured_value, dtype=float), cells))
    rank = np.empty(cells.size, dtype=int)
    sorted_cells = cells[order]
    starts = np.r_[0, np.flatnonzero(np.diff(sorted_cells)) + 1]
    first = np.repeat(starts, np.diff(np.r_[starts, cells.size]))
    rank[order] = np.arange(cells.size) - first
    return rank


def combine_predictions(
    count_draws: np.ndarray,
    value_draws: np.ndarray,
    building_cells: np.ndarray,
    insured_value: np.ndarray,
    n_cells: Optional[int] = None
) -> DamagePrediction:
    """
    Combine n tirages de comptages par cellule et m tirages de valeurs par bâtiment

    Pour chaque paire (tirage de comptage, tirage de valeur), les N premiers
    bâtiments de chaque cellule (valeur assurée décroissante) sont touchés et
    leurs valeurs sommées.

    Args:
        count_draws: (n, n_cells) ou (n, n_days, n_cells)
        value_draws: (m, n_buildings) ou (m, n_days, n_buildings)
        building_cells: cellule de chaque bâtiment
        insured_value: valeur assurée de chaque bâtiment (ordre de sélection)

    Returns:
        DamagePrediction; diagnostics['clamped_counts'] compte les N tronqués
    """
    counts = np.asarray(count_draws)
    values = np.asarray(value_draws, dtype=float)
    if counts.ndim == 2:
        counts = counts[:, None, :]
    if values.ndim == 2:
        values = values[:, None, :]
    n, n_days, n_cells_counts = counts.shape
    m = values.shape[0]
    if n < 1 or m < 1:
        raise ValueError("Au moins un tirage de comptage et un tirage de valeur sont requis")
    if values.shape[1] != n_days:
        raise ValueError(f"Jours incohérents: {n_days} (comptages) vs {values.shape[1]} (valeurs)")
    cells = np.asarray(building_cells, dtype=int)
    n_cells = n_cells or n_cells_counts
    if cells.size != values.shape[2]:
        raise ValueError("Un tirage de valeur par bâtiment est requis")

    rank = exposure_rank(cells, insured_value)
    per_cell = np.bincount(cells, minlength=n_cells)
    clamped = int(np.sum(counts > per_cell[None, None, :]))
    if clamped:
        logger.warning(f"⚠️ {clamped} comptage(s) supérieur(s) au nombre de bâtiments de la cellule, tronqué(s)")
    counts = np.minimum(counts, per_cell[None, None, :])

    lo, hi = _cfg('PREDICTION_PERCENTILES', (2.5, 97.5))
    nb = cells.size
    out = {key: np.zeros((n_days, nb)) for key in ('b_mean', 'b_lo', 'b_hi')}
    out.update({key: np.zeros((n_days, n_cells)) for key in ('c_mean', 'c_lo', 'c_hi')})
    totals = np.zeros((3, n_days))
    onehot = np.zeros((nb, n_cells))
    onehot[np.arange(nb), cells] = 1.0

    for t in range(n_days):
        selected = (rank[None, :] < counts[:, t, cells]).astype(float)  # (n, nb)
        composite = selected[:, None, :] * values[:, t, :][None, :, :]  # (n, m, nb)
        flat = composite.reshape(n * m, nb)
        out['b_mean'][t] = flat.mean(axis=0)
        out['b_lo'][t], out['b_hi'][t] = np.percentile(flat, [lo, hi], axis=0)
        cell_sums = flat @ onehot  # (n*m, n_cells)
        out['c_mean'][t] = cell_sums.mean(axis=0)
        out['c_lo'][t], out['c_hi'][t] = np.percentile(cell_sums, [lo, hi], axis=0)
        day_total = cell_sums.sum(axis=1)
        totals[:, t] = day_total.mean(), *np.percentile(day_total, [lo, hi])

    return DamagePrediction(
        building_mean=out['b_mean'], building_lower=out['b_lo'], building_upper=out['b_hi'],
        cell_mean=out['c_mean'], cell_lower=out['c_lo'], cell_upper=out['c_hi'],
        total_mean=totals[0], total_lower=totals[1], total_upper=totals[2],
        diagnostics={'clamped_counts': clamped},
    )


# ============================================================================
# MÉTRIQUES SPATIALES
# ============================================================================

def _as_maps(target_maps, predicted_maps):
    target = np.asarray(target_maps, dtype=float)
    predicted = np.asarray(predicted_maps, dtype=float)
    if target.shape != predicted.shape:
        raise ValueError(f"Formes incompatibles: {target.shape} vs {predicted.shape}")
    if target.ndim == 2:
        target, predicted = target[None], predicted[None]
    if target.ndim != 3:
        raise ValueError("Cartes attendues en (n_days, ny, nx) ou (ny, nx)")
    return target, predicted


def skss_per_patch(target_maps, predicted_maps, patch: Optional[int] = None) -> pd.DataFrame:
    """
    Statistique KS à deux échantillons par jour et par patch

    Les cellules restantes quand la carte n'est pas divisible forment des
    patchs de bord plus petits.
    """
    target, predicted = _as_maps(target_maps, predicted_maps)
    patch = patch or _cfg('SKSS_PATCH', 10)
    _, ny, nx = target.shape
    rows = []
    for t in range(target.shape[0]):
        for py, y0 in enumerate(range(0, ny, patch)):
            for px, x0 in enumerate(range(0, nx, patch)):
                a = target[t, y0:y0 + patch, x0:x0 + patch].ravel()
                b = predicted[t, y0:y0 + patch, x0:x0 + patch].ravel()
                ks = 0.0 if np.array_equal(a, b) else float(stats.ks_2samp(a, b).statistic)
                rows.append((t, py, px, a.size, ks))
    return pd.DataFrame(rows, columns=['day', 'patch_y', 'patch_x', 'n_cells', 'ks'])


def skss(target_maps, predicted_maps, patch: Optional[int] = None) -> float:
    """Somme sur les jours et les patchs des distances KS"""
    return float(skss_per_patch(target_maps, predicted_maps, patch)['ks'].sum())


def _power_spectra(maps: np.ndarray) -> np.ndarray:
    power = np.abs(np.fft.fft2(maps, axes=(-2, -1))) ** 2
    peak = power.reshape(power.shape[0], -1).max(axis=1)
    floor = np.maximum(_cfg('LSD_FLOOR', 1e-12) * peak, np.finfo(float).tiny)
    return np.maximum(power, floor[:, None, None])


def lsd_per_day(target_maps, predicted_maps) -> np.ndarray:
    """Distance log-spectrale de chaque jour"""
    target, predicted = _as_maps(target_maps, predicted_maps)
    ratio_db = 10.0 * np.log10(_power_spectra(target) / _power_spectra(predicted))
    # Spectre à symétrie hermitienne: P = la moitié des coefficients de la TFD
    n_retained = 0.5 * ratio_db[0].size
    return np.sqrt(np.sum(ratio_db ** 2, axis=(1, 2)) / (2.0 * n_retained))


def lsd(target_maps, predicted_maps) -> float:
    """
    sqrt{ 1/(2 N_T P) sum_{t,i} [10 log10(|g(c)|²/|g(ĉ)|²)]² }

    La somme porte sur tous les coefficients de la TFD 2-D; le spectre est
    planché à LSD_FLOOR fois la puissance maximale de chaque carte.
    """
    per_day = lsd_per_day(target_maps, predicted_maps)
    return float(np.sqrt(np.mean(per_day ** 2)))


# ============================================================================
# TABLE DE CONFUSION
# ============================================================================

@dataclass
class ConfusionSummary:
    """Comptages moyens par jour et taux en pourcentage (NaN si non défini)"""
    a: float  # vrais positifs
    b: float  # faux positifs
    c: float  # faux négatifs
    d: float  # vrais négatifs

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("Les comptages de confusion doivent être >= 0")

    @staticmethod
    def _rate(num: float, den: float) -> float:
        return 100.0 * num / den if den > 0 else float('nan')

    @property
    def far(self) -> float:
        return self._rate(self.b, self.b + self.d)

    @property
    def sensitivity(self) -> float:
        return self._rate(self.a, self.a + self.c)

    @property
    def specificity(self) -> float:
        return self._rate(self.d, self.b + self.d)

    @property
    def ppv(self) -> float:
        return self._rate(self.a, self.a + self.b)

    def rates(self) -> Dict[str, float]:
        return {'far': self.far, 'sensitivity': self.sensitivity,
                'specificity': self.specificity, 'ppv': self.ppv}


def confusion_metrics(predicted_positive, observed_positive) -> ConfusionSummary:
    """
    a, b, c, d comptés par jour sur les cellules puis moyennés sur les jours

    Args:
        predicted_positive: (n_days, n_cells) booléens ou comptages (> 0 = positif)
        observed_positive: même forme
    """
    pred = np.asarray(predicted_positive) > 0
    obs = np.asarray(observed_positive) > 0
    if pred.shape != obs.shape:
        raise ValueError(f"Formes incompatibles: {pred.shape} vs {obs.shape}")
    if pred.ndim == 1:
        pred, obs = pred[None], obs[None]
    axes = tuple(range(1, pred.ndim))
    a = np.sum(pred & obs, axis=axes).mean()
    b = np.sum(pred & ~obs, axis=axes).mean()
    c = np.sum(~pred & obs, axis=axes).mean()
    d = np.sum(~pred & ~obs, axis=axes).mean()
    return ConfusionSummary(float(a), float(b), float(c), float(d))


# ============================================================================
# CORRÉLATIONS SPATIALES
# ============================================================================

@dataclass
class SpatialCorrelogram:
    bin_lower: np.ndarray
    bin_upper: np.ndarray
    n_pairs: np.ndarray
    spearman_mean: np.ndarray
    spearman_low: np.ndarray
    spearman_high: np.ndarray
    extremal_mean: np.ndarray
    extremal_low: np.ndarray
    extremal_high: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.bin_lower) < 0):
            raise ValueError("Les distances doivent être >= 0")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'distance_lower': self.bin_lower,
            'distance_upper': self.bin_upper,
            'n_pairs': self.n_pairs,
            'spearman_mean': self.spearman_mean,
            'spearman_low': self.spearman_low,
            'spearman_high': self.spearman_high,
            'extremal_mean': self.extremal_mean,
            'extremal_low': self.extremal_low,
            'extremal_high': self.extremal_high,
        })


def _binned(values: np.ndarray, bins: np.ndarray, n_bins: int, lo: float, hi: float):
    mean, low, high = (np.full(n_bins, np.nan) for _ in range(3))
    for k in range(n_bins):
        v = values[(bins == k) & np.isfinite(values)]
        if v.size:
            mean[k] = v.mean()
            low[k], high[k] = np.percentile(v, [lo, hi])
    return mean, low, high


def extremal_correlation(series_by_cell, cell_xy, u: float, distance_bins) -> SpatialCorrelogram:
    """
    pi_h(u) = P(X_{s+h} >= u | X_s >= u) et rho de Spearman par paire de cellules, regroupés par distance

    Args:
        series_by_cell: (n_days, n_cells)
        cell_xy: centroïdes (n_cells, 2) en km
        u: seuil sur l'échelle des séries
        distance_bins: bornes des classes de distance (km)

    Returns:
        SpatialCorrelogram; classes vides à NaN avec n_pairs = 0
    """
    x = np.asarray(series_by_cell, dtype=float)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError("Au moins 2 cellules sont requises")
    if not x.min() <= u <= x.max():
        raise ValueError(f"Seuil {u} hors de l'étendue des données [{x.min()}, {x.max()}]")
    edges = np.asarray(distance_bins, dtype=float)
    n_bins = edges.size - 1
    xy = np.asarray(cell_xy, dtype=float)

    i, j = np.triu_indices(x.shape[1], k=1)
    dist = np.hypot(*(xy[i] - xy[j]).T)
    exceed = x >= u
    joint = (exceed[:, i] & exceed[:, j]).sum(axis=0)
    n_i, n_j = exceed[:, i].sum(axis=0), exceed[:, j].sum(axis=0)
    with np.errstate(invalid='ignore', divide='ignore'):
        # Moyenne des deux conditionnements pour une paire non ordonnée
        pi = 0.5 * (np.where(n_i > 0, joint / n_i, np.nan) + np.where(n_j > 0, joint / n_j, np.nan))
    with np.errstate(invalid='ignore', divide='ignore'):
        rho_matrix = np.atleast_2d(stats.spearmanr(x)[0])
    if rho_matrix.shape == (1, 1):
        r = rho_matrix[0, 0]
        rho_matrix = np.array([[1.0, r], [r, 1.0]])
    rho = rho_matrix[i, j]

    bins = np.digitize(dist, edges) - 1
    bins = np.where(dist == edges[-1], n_bins - 1, bins)
    lo, hi = _cfg('CORRELOGRAM_ENVELOPE', (5.0, 95.0))
    n_pairs = np.array([(bins == k).sum() for k in range(n_bins)])
    if np.any(n_pairs == 0):
        logger.info(f"📊 {int((n_pairs == 0).sum())} classe(s) de distance sans paire")
    s_mean, s_low, s_high = _binned(rho, bins, n_bins, lo, hi)
    e_mean, e_low, e_high = _binned(pi, bins, n_bins, lo, hi)
    return SpatialCorrelogram(edges[:-1], edges[1:], n_pairs, s_mean, s_low, s_high, e_mean, e_low, e_high)


# ============================================================================
# DIAGNOSTICS PRÉDICTIFS
# ============================================================================

def paa_by_meshs(
    observed_counts: np.ndarray,
    predicted_counts: np.ndarray,
    n_buildings: np.ndarray,
    meshs: np.ndarray,
    bins: Sequence[float]
) -> pd.DataFrame:
    """
    Pourcentage de bâtiments touchés par cellule-jour, regroupé par MESHS

    Args:
        observed_counts: (n_days, n_cells)
        predicted_counts: (n_draws, n_days, n_cells)
        n_buildings: bâtiments par cellule
        meshs: (n_days, n_cells) en cm
        bins: bornes des classes de MESHS

    Returns:
        DataFrame meshs_lower, meshs_upper, n_cell_days, observed, predicted_mean, predicted_lower, predicted_upper
    """
    obs = np.asarray(observed_counts, dtype=float)
    pred = np.asarray(predicted_counts, dtype=float)
    n_b = np.asarray(n_buildings, dtype=float)
    meshs = np.asarray(meshs, dtype=float)
    valid = (meshs > 0) & (n_b[None, :] > 0)
    with np.errstate(invalid='ignore', divide='ignore'):
        paa_obs = 100.0 * obs / n_b[None, :]
        paa_pred = 100.0 * pred / n_b[None, None, :]
    edges = np.asarray(bins, dtype=float)
    lo, hi = _cfg('PREDICTION_PERCENTILES', (2.5, 97.5))
    rows = []
    for k in range(edges.size - 1):
        mask = valid & (meshs >= edges[k]) & (meshs < edges[k + 1])
        if not mask.any():
            rows.append((edges[k], edges[k + 1], 0, np.nan, np.nan, np.nan, np.nan))
            continue
        per_draw = paa_pred[:, mask].mean(axis=1)
        rows.append((edges[k], edges[k + 1], int(mask.sum()), paa_obs[mask].mean(),
                     per_draw.mean(), *np.percentile(per_draw, [lo, hi])))
    return pd.DataFrame(rows, columns=['meshs_lower', 'meshs_upper', 'n_cell_days', 'observed',
                                       'predicted_mean', 'predicted_lower', 'predicted_upper'])


def qq_data(observed, predicted_draws, probs: Optional[Sequence[float]] = None) -> pd.DataFrame:
    """
    Quantiles réalisés vs prédits avec bande à 95% sur les tirages

    Args:
        observed: valeurs réalisées (1-D)
        predicted_draws: (n_draws, n_values) une réalisation prédite par tirage
    """
    obs = np.asarray(observed, dtype=float).ravel()
    draws = np.atleast_2d(np.asarray(predicted_draws, dtype=float))
    draws = draws.reshape(draws.shape[0], -1)
    if probs is None:
        probs = np.arange(1, obs.size + 1) / (obs.size + 1)
    probs = np.asarray(probs, dtype=float)
    per_draw = np.quantile(draws, probs, axis=1).T  # (n_draws, n_probs)
    lo, hi = _cfg('PREDICTION_PERCENTILES', (2.5, 97.5))
    return pd.DataFrame({
        'probability': probs,
        'observed': np.quantile(obs, probs),
        'predicted': per_draw.mean(axis=0),
        'lower': np.percentile(per_draw, lo, axis=0),
        'upper': np.percentile(per_draw, hi, axis=0),
    })


def metric_difference(target_maps, model_maps, benchmark_maps, patch: Optional[int] = None) -> pd.DataFrame:
    """
    SKSS et LSD par jour du modèle et de la référence, et différence (modèle - référence) / référence

    Une référence nulle donne une différence relative NaN.
    """
    target, model = _as_maps(target_maps, model_maps)
    _, benchmark = _as_maps(target_maps, benchmark_maps)
    skss_model = skss_per_patch(target, model, patch).groupby('day')['ks'].sum().to_numpy()
    skss_bench = skss_per_patch(target, benchmark, patch).groupby('day')['ks'].sum().to_numpy()
    lsd_model = lsd_per_day(target, model)
    lsd_bench = lsd_per_day(target, benchmark)
    with np.errstate(invalid='ignore', divide='ignore'):
        frame = pd.DataFrame({
            'day': np.arange(target.shape[0]),
            'skss_model': skss_model,
            'skss_benchmark': skss_bench,
            'skss_scaled_diff': np.where(skss_bench > 0, (skss_model - skss_bench) / skss_bench, np.nan),
            'lsd_model': lsd_model,
            'lsd_benchmark': lsd_bench,
            'lsd_scaled_diff': np.where(lsd_bench > 0, (lsd_model - lsd_bench) / lsd_bench, np.nan),
        })
    return frame
