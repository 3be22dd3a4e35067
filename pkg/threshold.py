"""
Sélection du seuil GPD par minimisation d'une distance l1 entre quantiles
empiriques et quantiles ajustés, sur une grille de seuils candidats
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import optimize, stats

from distributions import f_transform, gpd_excess_quantile, gpd_logpdf_excess
from errors import FitError

try:
    import config
except ImportError:
    config = None

logger = logging.getLogger(__name__)


def _cfg(name: str, default):
    return getattr(config, name, default) if config else default


_XI_MIN, _XI_MAX = -0.99, 3.0  # domaine de recherche de xi


@dataclass
class GpdFit:
    """Ajustement par maximum de vraisemblance des excès (échelle originale)"""
    sigma: float
    xi: float
    loglik: float
    n: int
    xi_interval: Tuple[float, float] = (math.nan, math.nan)
    profile: Optional[pd.DataFrame] = field(default=None, repr=False)

    def quantiles(self, probs) -> np.ndarray:
        return gpd_excess_quantile(probs, self.sigma, self.xi)

    def quantile_band(self, probs) -> Tuple[np.ndarray, np.ndarray]:
        """Enveloppe des quantiles sur l'ensemble de confiance à 95% de la vraisemblance profilée"""
        if self.profile is None or self.profile.empty:
            q = self.quantiles(probs)
            return q, q
        inside = self.profile[self.profile['inside']]
        curves = np.array([gpd_excess_quantile(probs, s, x) for s, x in zip(inside['sigma'], inside['xi'])])
        return curves.min(axis=0), curves.max(axis=0)


def _negative_loglik(params: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
    log_sigma, xi = params
    lp, g = gpd_logpdf_excess(y, math.exp(log_sigma), xi)
    total = float(np.sum(lp))
    if not np.isfinite(total):
        return 1e20, np.zeros(2)
    return -total, -np.array([g['log_sigma'].sum(), g['xi'].sum()])


def _profile_sigma(y: np.ndarray, xi: float, log_sigma0: float) -> Tuple[float, float]:
    """max_sigma log L(sigma, xi) à xi fixé"""
    floor = math.log(max(-xi * y.max(), 1e-12)) + 1e-9 if xi < 0 else log_sigma0 - 20.0
    res = optimize.minimize_scalar(lambda ls: _negative_loglik(np.array([ls, xi]), y)[0],
                                   bounds=(floor, log_sigma0 + 10.0), method='bounded')
    return float(res.x), -float(res.fun)


def fit_gpd_ml(exceedances, profile: bool = True) -> GpdFit:
    """
    Maximum de vraisemblance GPD par L-BFGS-B borné, multi-départ en xi

    Args:
        exceedances: excès y = x - u >= 0
        profile: calculer la vraisemblance profilée de xi et son intervalle à 95%

    Returns:
        GpdFit
    """
    y = np.asarray(exceedances, dtype=float)
    min_n = _cfg('MIN_EXCEEDANCES', 10)
    if y.size < min_n:
        raise FitError(f"{y.size} excès: au moins {min_n} sont requis")
    if np.any(y < 0) or not np.all(np.isfinite(y)):
        raise FitError("Les excès doivent être finis et positifs ou nuls")

    # Mise à l'échelle: sigma suit l'échelle des données, xi est invariant
    scale = float(np.std(y)) or float(np.mean(y)) or 1.0
    z = y / scale
    best = None
    for xi0 in _cfg('GPD_START_XI', (-0.4, 0.0, 0.4)):
        sigma0 = max(z.mean() * (1.0 - xi0), -xi0 * z.max() * 1.05, 1e-6)
        res = optimize.minimize(_negative_loglik, np.array([math.log(sigma0), xi0]), args=(z,),
                                jac=True, method='L-BFGS-B', bounds=[(-20.0, 20.0), (_XI_MIN, _XI_MAX)])
        if not np.isfinite(res.fun) or res.fun >= 1e20:
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise FitError("Échec de l'ajustement GPD pour tous les points de départ")

    log_sigma, xi = best.x
    fit = GpdFit(sigma=math.exp(log_sigma) * scale, xi=float(xi),
                 loglik=-float(best.fun) - y.size * math.log(scale), n=y.size)
    if profile:
        _attach_profile(fit, z, float(log_sigma), scale)
    return fit


def _attach_profile(fit: GpdFit, z: np.ndarray, log_sigma_hat: float, scale: float, n_grid: int = 61):
    cutoff = 0.5 * stats.chi2.ppf(0.95, 1)
    shift = z.size * math.log(scale)
    ll_hat = fit.loglik + shift

    def deficit(xi: float) -> float:
        return ll_hat - _profile_sigma(z, xi, log_sigma_hat)[1] - cutoff

    fit.xi_interval = (_profile_crossing(deficit, fit.xi, -1.0), _profile_crossing(deficit, fit.xi, 1.0))

    # grille symétrique autour de xi_hat pour la bande QQ uniquement
    half = max(fit.xi - fit.xi_interval[0], fit.xi_interval[1] - fit.xi)
    grid = fit.xi + half * np.linspace(-1.0, 1.0, n_grid if n_grid % 2 else n_grid + 1)
    grid = grid[(grid >= _XI_MIN) & (grid <= _XI_MAX)]
    rows = []
    for xi in grid:
        log_sigma, ll = _profile_sigma(z, float(xi), log_sigma_hat)
        rows.append({'xi': xi, 'sigma': math.exp(log_sigma) * scale, 'loglik': ll - shift})
    table = pd.DataFrame(rows)
    table['inside'] = (fit.loglik - table['loglik']) <= cutoff + 1e-9
    fit.profile = table


def _profile_crossing(deficit, xi_hat: float, direction: float) -> float:
    """Racine de la vraisemblance profilée d'un côté de xi_hat, bornée au domaine de xi"""
    limit = _XI_MIN if direction < 0 else _XI_MAX
    inner, step = xi_hat, 0.02
    while True:
        outer = xi_hat + direction * step
        if (outer - limit) * direction >= 0:
            outer = limit
            if deficit(outer) <= 0:
                return float(limit)
        if deficit(outer) > 0:
            return float(optimize.brentq(deficit, min(inner, outer), max(inner, outer), xtol=1e-10))
        if outer == limit:
            return float(limit)
        inner, step = outer, 2.0 * step


def qq_l1_distance(exceedances, fit: GpdFit) -> float:
    """Moyenne des écarts absolus entre statistiques d'ordre et quantiles ajustés en i/(n+1)"""
    y = np.sort(np.asarray(exceedances, dtype=float))
    probs = np.arange(1, y.size + 1) / (y.size + 1)
    return float(np.mean(np.abs(y - fit.quantiles(probs))))


def qq_table(exceedances, fit: GpdFit) -> pd.DataFrame:
    """Quantiles empiriques vs ajustés avec bande à 95%, prêts à tracer"""
    y = np.sort(np.asarray(exceedances, dtype=float))
    probs = np.arange(1, y.size + 1) / (y.size + 1)
    lower, upper = fit.quantile_band(probs)
    return pd.DataFrame({'probability': probs, 'empirical': y, 'fitted': fit.quantiles(probs),
                         'lower': lower, 'upper': upper})


@dataclass
class ThresholdScan:
    thresholds: np.ndarray
    distances: np.ndarray
    sigma_hat: np.ndarray
    xi_hat: np.ndarray
    n_exceedances: np.ndarray

    @property
    def selected(self) -> float:
        return float(self.thresholds[int(np.argmin(self.distances))])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'threshold': self.thresholds,
            'l1_distance': self.distances,
            'sigma_hat': self.sigma_hat,
            'xi_hat': self.xi_hat,
            'n_exceedances': self.n_exceedances,
        })


def default_candidate_grid(values) -> np.ndarray:
    lo, hi = _cfg('THRESHOLD_QUANTILE_RANGE', (0.50, 0.99))
    levels = np.linspace(lo, hi, _cfg('THRESHOLD_GRID_SIZE', 81))
    return np.unique(np.quantile(np.asarray(values, dtype=float), levels))


def select_threshold(values, candidate_grid: Optional[Sequence[float]] = None) -> ThresholdScan:
    """
    Balaye les seuils candidats et retient celui qui minimise la distance QQ l1

    Args:
        values: données sur l'échelle transformée (p. ex. log des sommes de sinistres)
        candidate_grid: seuils candidats; par défaut une grille de quantiles

    Returns:
        ThresholdScan trié par seuil croissant
    """
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise FitError("Aucune valeur pour la sélection du seuil")
    grid = np.sort(np.asarray(candidate_grid if candidate_grid is not None else default_candidate_grid(x),
                              dtype=float))
    min_n = _cfg('MIN_EXCEEDANCES', 10)

    rows = []
    for u in grid:
        y = x[x > u] - u
        if y.size < min_n:
            continue
        try:
            fit = fit_gpd_ml(y, profile=False)
        except FitError as e:
            logger.debug(f"⚠️ Seuil {u:.3f} ignoré: {e}")
            continue
        rows.append((u, qq_l1_distance(y, fit), fit.sigma, fit.xi, y.size))
    if not rows:
        raise FitError("Aucun seuil candidat faisable (moins de "
                       f"{min_n} dépassements ou ajustement impossible)")

    thresholds, distances, sigmas, xis, counts = (np.array(col) for col in zip(*rows))
    scan = ThresholdScan(thresholds, distances, sigmas, xis, counts.astype(int))
    logger.info(f"✅ Seuil retenu u={scan.selected:.3f} parmi {len(rows)} candidat(s) faisable(s)")
    return scan


def cell_total_series(claims: pd.DataFrame) -> pd.Series:
    """log(1 + somme journalière des sinistres par cellule)"""
    totals = claims.groupby(['date', 'cell'], sort=True)['value'].sum()
    return pd.Series(f_transform(totals.to_numpy(float)), index=totals.index, name='log_total')


def canton_total_series(claims: pd.DataFrame) -> pd.Series:
    """log(1 + somme journalière des sinistres sur toute la région)"""
    totals = claims.groupby('date', sort=True)['value'].sum()
    return pd.Series(f_transform(totals.to_numpy(float)), index=totals.index, name='log_total')


def residual_series(claims: pd.DataFrame) -> pd.Series:
    """f(Z) des sinistres à résidu positif, Z = valeur - M^YC (échelle du modèle de queue)"""
    residual = claims['value'].to_numpy(float) - claims['climada_value'].to_numpy(float)
    keep = residual > 0
    return pd.Series(f_transform(residual[keep]), index=claims.index[keep], name='log_residual')
