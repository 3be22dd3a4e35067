"""
Modèle des valeurs résiduelles Z = Y - M^YC sur la grille grossière (~10 km)

Trois parties ajustées indépendamment:
- dépassement du seuil R ~ Bernoulli(p), effets chi(s) et eps_p(t) (NUTS)
- corps Z / f^-1(u) ~ Beta(nu, kappa), champ X^beta rationnel quadratique (DE-MC snooker)
- queue f(Z) - u ~ GPD(sigma_u, xi(t)), champ X^sigma Matérn (NUTS)
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from distributions import (
    BetaMeanPrecision, GpdParams, beta_log_pdf, beta_logpdf_mean, expit, f_inverse,
    f_transform, gpd_excess_quantile, gpd_log_pdf, gpd_logpdf_excess, log_expit,
)
from errors import FitError, SingularCovarianceError, SupportError
from kernels import MaternParams, RationalQuadParams, build_covariance, distance_matrix
from samplers import (
    DemcConfig, NutsConfig, PosteriorSamples, demc_snooker_sample, nuts_sample, run_chains,
)
from threshold import fit_gpd_ml

try:
    import config
except ImportError:
    config = None

logger = logging.getLogger(__name__)


def _cfg(name: str, default):
    return getattr(config, name, default) if config else default


FEATURES = ['poh', 'meshs', 'meshs_poh', 'exposure']
BODY_FEATURES = [0, 1, 3]  # POH, MESHS, exposition
TAIL_FEATURES = [1, 2, 3]  # MESHS, MESHS.POH, exposition


# ============================================================================
# GRILLE GROSSIÈRE ET STANDARDISATION
# ============================================================================

@dataclass
class CoarseGrid:
    """Regroupement des cellules 2 km en cellules grossières"""
    fine_to_coarse: np.ndarray  # (n_fine,)
    centroids_lonlat: np.ndarray  # (n_coarse, 2)
    claims: np.ndarray  # sinistres d'entraînement par cellule grossière

    @property
    def n_coarse(self) -> int:
        return self.centroids_lonlat.shape[0]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'fine_cell': np.arange(self.fine_to_coarse.size),
                             'coarse_cell': self.fine_to_coarse})


def build_coarse_grid(
    nx: int,
    ny: int,
    fine_lonlat: np.ndarray,
    claims_per_fine: np.ndarray,
    block: Optional[int] = None,
    min_claims: Optional[int] = None
) -> CoarseGrid:
    """
    Blocs block x block de cellules fines, puis fusion gloutonne du bloc le plus
    pauvre avec son plus proche voisin jusqu'à ce que chacun ait min_claims sinistres

    Args:
        nx, ny: dimensions de la grille fine (indice de cellule = iy * nx + ix)
        fine_lonlat: centroïdes (n_fine, 2) en degrés
        claims_per_fine: sinistres d'entraînement par cellule fine
    """
    block = block or _cfg('COARSE_BLOCK', 5)
    min_claims = _cfg('MIN_CLAIMS_PER_COARSE_CELL', 100) if min_claims is None else min_claims
    fine_lonlat = np.asarray(fine_lonlat, dtype=float)
    claims_per_fine = np.asarray(claims_per_fine, dtype=float)
    iy, ix = np.divmod(np.arange(nx * ny), nx)
    block_id = (iy // block) * ((nx + block - 1) // block) + ix // block
    _, groups = np.unique(block_id, return_inverse=True)

    members = {g: set(np.flatnonzero(groups == g)) for g in np.unique(groups)}
    while len(members) > 1:
        totals = {g: claims_per_fine[list(cells)].sum() for g, cells in members.items()}
        poorest = min(totals, key=lambda g: (totals[g], g))
        if totals[poorest] >= min_claims:
            break
        centre = fine_lonlat[list(members[poorest])].mean(axis=0)
        others = [g for g in members if g != poorest]
        dists = [np.linalg.norm(fine_lonlat[list(members[g])].mean(axis=0) - centre) for g in others]
        target = others[int(np.argmin(dists))]
        members[target] |= members.pop(poorest)

    fine_to_coarse = np.empty(nx * ny, dtype=int)
    centroids, claims = [], []
    for new_id, g in enumerate(sorted(members, key=lambda g: min(members[g]))):
        cells = sorted(members[g])
        fine_to_coarse[cells] = new_id
        centroids.append(fine_lonlat[cells].mean(axis=0))
        claims.append(claims_per_fine[cells].sum())
    grid = CoarseGrid(fine_to_coarse, np.asarray(centroids), np.asarray(claims))
    logger.info(f"📊 Grille grossière: {grid.n_coarse} cellule(s), min {grid.claims.min():.0f} sinistre(s)")
    if grid.claims.min() < min_claims:
        logger.warning(f"⚠️ Moins de {min_claims} sinistres d'entraînement au total: cellule unique")
    return grid


@dataclass
class CovariateScaler:
    """Centrage-réduction des covariables sur les sinistres d'entraînement"""
    means: np.ndarray
    sds: np.ndarray

    @classmethod
    def fit(cls, poh, meshs, exposure) -> 'CovariateScaler':
        raw = raw_features(poh, meshs, exposure)
        sds = raw.std(axis=0)
        return cls(means=raw.mean(axis=0), sds=np.where(sds > 0, sds, 1.0))

    def transform(self, poh, meshs, exposure) -> np.ndarray:
        return (raw_features(poh, meshs, exposure) - self.means) / self.sds

    def to_dict(self) -> Dict:
        return {'means': self.means.tolist(), 'sds': self.sds.tolist()}

    @classmethod
    def from_dict(cls, data: Dict) -> 'CovariateScaler':
        return cls(np.asarray(data['means'], dtype=float), np.asarray(data['sds'], dtype=float))


def raw_features(poh, meshs, exposure) -> np.ndarray:
    poh, meshs, exposure = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (poh, meshs, exposure))
    return np.column_stack([poh, meshs, meshs * poh, exposure])


def season_half(dates) -> pd.Series:
    """Clé (année, moitié de saison): avril-juin -> 0, juillet-septembre -> 1"""
    dates = pd.to_datetime(pd.Series(dates))
    return dates.dt.year.astype(str) + '-' + np.where(dates.dt.month <= 6, '0', '1')


# ============================================================================
# CONCEPTION
# ============================================================================

@dataclass
class ValueDesign:
    features: np.ndarray  # (n, 4) standardisées
    coarse_cell: np.ndarray  # (n,)
    coarse_lonlat: np.ndarray  # (n_coarse, 2)
    season_index: np.ndarray  # (n,) indice (année, moitié)
    in_hail_season: np.ndarray  # (n,)
    residual: np.ndarray  # (n,) Z en CHF
    threshold_u: float
    season_keys: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.coarse_cell = np.asarray(self.coarse_cell, dtype=int)
        self.coarse_lonlat = np.atleast_2d(np.asarray(self.coarse_lonlat, dtype=float))
        self.season_index = np.asarray(self.season_index, dtype=int)
        self.in_hail_season = np.asarray(self.in_hail_season, dtype=bool)
        self.residual = np.asarray(self.residual, dtype=float)
        if np.any(self.residual <= 0):
            raise ValueError("Seuls les résidus Z > 0 sont modélisés")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("Covariables non finies")

    @property
    def n_claims(self) -> int:
        return self.residual.size

    @property
    def n_coarse(self) -> int:
        return self.coarse_lonlat.shape[0]

    @property
    def n_seasons(self) -> int:
        return int(self.season_index.max()) + 1 if self.season_index.size else 0

    @property
    def scale(self) -> float:
        """f^-1(u): borne supérieure du corps sur l'échelle Z"""
        return float(f_inverse(self.threshold_u))

    @property
    def exceeds(self) -> np.ndarray:
        return np.asarray(f_transform(self.residual)) > self.threshold_u

    @property
    def body_fraction(self) -> np.ndarray:
        """Z / f^-1(u) des sinistres du corps, décalés d'un demi-centime des bords"""
        nudge = _cfg('BETA_NUDGE_CHF', 0.005) / self.scale
        x = self.residual[~self.exceeds] / self.scale
        return np.clip(x, nudge, 1.0 - nudge)

    @property
    def tail_excess(self) -> np.ndarray:
        return np.asarray(f_transform(self.residual[self.exceeds])) - self.threshold_u

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, coarse: CoarseGrid, threshold_u: float,
                   scaler: Optional[CovariateScaler] = None) -> Tuple['ValueDesign', CovariateScaler]:
        """
        Construit la conception depuis les sinistres enrichis

        Colonnes requises: date, value, climada_value, poh, meshs, exposure, cell.
        Les sinistres où M^YC surestime la valeur (Z <= 0) sont exclus.
        """
        residual = frame['value'].to_numpy(float) - frame['climada_value'].to_numpy(float)
        keep = residual > 0
        if (~keep).sum():
            logger.info(f"📊 {(~keep).sum()} sinistre(s) à résidu négatif ou nul exclu(s) "
                        f"({(~keep).mean():.1%})")
        frame = frame.loc[keep]
        if frame.empty:
            raise FitError("Aucun sinistre à résidu positif")
        scaler = scaler or CovariateScaler.fit(frame['poh'], frame['meshs'], frame['exposure'])
        keys = season_half(frame['date'])
        season_keys = sorted(keys.unique())
        season_index = keys.map({k: i for i, k in enumerate(season_keys)}).to_numpy()
        months = pd.to_datetime(frame['date']).dt.month.to_numpy()
        design = cls(
            features=scaler.transform(frame['poh'], frame['meshs'], frame['exposure']),
            coarse_cell=coarse.fine_to_coarse[frame['cell'].to_numpy(int)],
            coarse_lonlat=coarse.centroids_lonlat,
            season_index=season_index,
            in_hail_season=np.isin(months, _cfg('HAIL_SEASON_MONTHS', (5, 6, 7, 8))),
            residual=residual[keep],
            threshold_u=threshold_u,
            season_keys=season_keys,
        )
        return design, scaler


# ============================================================================
# PARAMÈTRES
# ============================================================================

@dataclass
class ExceedanceParams:
    p: np.ndarray  # p0..p4
    chi: np.ndarray  # effet par cellule grossière
    chi_var: float
    eps_p: np.ndarray  # effet par (année, moitié de saison)
    eps_p_var: float

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p.size != 5:
            raise ValueError("p doit contenir p0..p4")
        if not (self.chi_var > 0 and self.eps_p_var > 0):
            raise ValueError("Les variances des effets aléatoires doivent être > 0")

    @classmethod
    def from_named(cls, names: Sequence[str], row: np.ndarray) -> 'ExceedanceParams':
        s = pd.Series(row, index=names)
        return cls(p=s[[f'p{i}' for i in range(5)]].to_numpy(),
                   chi=s[[n for n in names if n.startswith('chi[')]].to_numpy(),
                   chi_var=float(s['chi_var']),
                   eps_p=s[[n for n in names if n.startswith('eps_p[')]].to_numpy(),
                   eps_p_var=float(s['eps_p_var']))


@dataclass
class BetaModelParams:
    nu: np.ndarray  # nu0..nu3
    kappa: float
    x_beta: np.ndarray
    length_scale_beta: float

    def __post_init__(self):
        self.nu = np.asarray(self.nu, dtype=float)
        if not self.kappa > 0:
            raise ValueError(f"kappa doit être > 0 (reçu {self.kappa})")

    @classmethod
    def from_named(cls, names: Sequence[str], row: np.ndarray) -> 'BetaModelParams':
        s = pd.Series(row, index=names)
        return cls(nu=s[[f'nu{i}' for i in range(4)]].to_numpy(), kappa=float(s['kappa']),
                   x_beta=s[[n for n in names if n.startswith('x_beta[')]].to_numpy(),
                   length_scale_beta=float(s['length_scale_beta']))


@dataclass
class GpdModelParams:
    sigma: np.ndarray  # sigma0..sigma3
    x_sigma: np.ndarray
    length_scale_sigma: float
    xi_season: Tuple[float, float]  # (xi1 mai-août, xi2 sinon)
    threshold_u: float

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)

    def xi(self, in_hail_season) -> np.ndarray:
        return np.where(in_hail_season, self.xi_season[0], self.xi_season[1])

    @classmethod
    def from_named(cls, names: Sequence[str], row: np.ndarray, threshold_u: float) -> 'GpdModelParams':
        s = pd.Series(row, index=names)
        return cls(sigma=s[[f'sigma{i}' for i in range(4)]].to_numpy(),
                   x_sigma=s[[n for n in names if n.startswith('x_sigma[')]].to_numpy(),
                   length_scale_sigma=float(s['length_scale_sigma']),
                   xi_season=(float(s['xi1']), float(s['xi2'])), threshold_u=threshold_u)


@dataclass
class ValueModelParams:
    exceedance: ExceedanceParams
    body: BetaModelParams
    tail: GpdModelParams


# ============================================================================
# PRÉDICTEURS ET VRAISEMBLANCES PAR SINISTRE
# ============================================================================

def exceedance_eta(features: np.ndarray, cells: np.ndarray, seasons, params: ExceedanceParams) -> np.ndarray:
    eta = params.p[0] + np.atleast_2d(features) @ params.p[1:] + params.chi[cells]
    if seasons is not None:
        eta = eta + params.eps_p[seasons]
    return eta


def body_mean(features: np.ndarray, cells: np.ndarray, params: BetaModelParams) -> np.ndarray:
    """nu_t(s) = expit(nu0 + nu1.POH + nu2.MESHS + nu3.Exp + X^beta(s))"""
    f = np.atleast_2d(features)[:, BODY_FEATURES]
    return expit(params.nu[0] + f @ params.nu[1:] + params.x_beta[cells])


def tail_scale(features: np.ndarray, cells: np.ndarray, params: GpdModelParams) -> np.ndarray:
    """sigma_u = exp(sigma0 + sigma1.MESHS + sigma2.MESHS.POH + sigma3.Exp + X^sigma(s))"""
    f = np.atleast_2d(features)[:, TAIL_FEATURES]
    return np.exp(params.sigma[0] + f @ params.sigma[1:] + params.x_sigma[cells])


def exceedance_prob(claim: int, params: ExceedanceParams, design: ValueDesign) -> float:
    eta = exceedance_eta(design.features[claim], design.coarse_cell[[claim]],
                         design.season_index[[claim]], params)
    return float(expit(eta[0]))


def beta_body_log_lik(claim: int, params: BetaModelParams, design: ValueDesign) -> float:
    """log Beta(Z / f^-1(u); nu, kappa) - log f^-1(u)"""
    z = design.residual[claim]
    if not 0 < z < design.scale:
        raise SupportError(f"Z = {z} hors du corps (0, {design.scale:.1f})")
    nu = body_mean(design.features[claim], design.coarse_cell[[claim]], params)[0]
    return beta_log_pdf(z / design.scale, BetaMeanPrecision(float(nu), params.kappa)) - math.log(design.scale)


def gpd_tail_log_lik(claim: int, params: GpdModelParams, design: ValueDesign) -> float:
    """log GPD(f(Z) - u; sigma_u, xi(t)) + log f'(Z), f'(Z) = 1/(1+Z)"""
    z = design.residual[claim]
    sigma = tail_scale(design.features[claim], design.coarse_cell[[claim]], params)[0]
    xi = float(params.xi(design.in_hail_season[claim]))
    lp = gpd_log_pdf(float(f_transform(z)), GpdParams(design.threshold_u, float(sigma), xi))
    return lp - math.log1p(z)


# ============================================================================
# LOG-POSTÉRIEURES DES TROIS PARTIES
# ============================================================================

def _scale_prior(log_scale: np.ndarray, sd) -> Tuple[float, np.ndarray]:
    """half-Normal(0, sd²) sur exp(w) avec jacobien, et son gradient en w"""
    s = np.exp(log_scale)
    return float(np.sum(-0.5 * (s / sd) ** 2 + log_scale)), -(s / sd) ** 2 + 1.0


class ExceedancePosterior:
    """Logistique à effets chi (cellule) et eps_p (saison), non centrée"""

    def __init__(self, design: ValueDesign):
        self.design = design
        self.r = design.exceeds.astype(float)
        self.n_coarse, self.n_seasons = design.n_coarse, design.n_seasons
        self.coef_sd = _cfg('COEF_PRIOR_SD', 10.0)
        self.scale_sd = _cfg('SCALE_PRIOR_SD', 5.0)

    @property
    def dimension(self) -> int:
        return 7 + self.n_coarse + self.n_seasons

    @property
    def names(self) -> List[str]:
        return ([f'p{i}' for i in range(5)] + ['log_tau_chi', 'log_tau_eps']
                + [f'chi_raw[{c}]' for c in range(self.n_coarse)]
                + [f'eps_raw[{s}]' for s in range(self.n_seasons)])

    def output_names(self) -> List[str]:
        return ([f'p{i}' for i in range(5)] + ['chi_var', 'eps_p_var']
                + [f'chi[{c}]' for c in range(self.n_coarse)]
                + [f'eps_p[{s}]' for s in range(self.n_seasons)])

    def constrain(self, vec: np.ndarray) -> np.ndarray:
        tau_c, tau_e = np.exp(vec[5]), np.exp(vec[6])
        chi = tau_c * vec[7:7 + self.n_coarse]
        eps = tau_e * vec[7 + self.n_coarse:]
        return np.concatenate([vec[:5], [tau_c ** 2, tau_e ** 2], chi, eps])

    def __call__(self, vec: np.ndarray) -> Tuple[float, np.ndarray]:
        d = self.design
        p = vec[:5]
        tau_c, tau_e = np.exp(vec[5]), np.exp(vec[6])
        chi_raw = vec[7:7 + self.n_coarse]
        eps_raw = vec[7 + self.n_coarse:]
        eta = p[0] + d.features @ p[1:] + tau_c * chi_raw[d.coarse_cell] + tau_e * eps_raw[d.season_index]
        lp = float(np.sum(self.r * log_expit(eta) + (1.0 - self.r) * log_expit(-eta)))
        g = self.r - expit(eta)

        grad = np.zeros_like(vec)
        grad[0] = g.sum()
        grad[1:5] = d.features.T @ g
        g_cell = np.bincount(d.coarse_cell, weights=g, minlength=self.n_coarse)
        g_season = np.bincount(d.season_index, weights=g, minlength=self.n_seasons)
        grad[5] = tau_c * float(g_cell @ chi_raw)
        grad[6] = tau_e * float(g_season @ eps_raw)
        grad[7:7 + self.n_coarse] = tau_c * g_cell - chi_raw
        grad[7 + self.n_coarse:] = tau_e * g_season - eps_raw

        lp += -0.5 * float(chi_raw @ chi_raw + eps_raw @ eps_raw)
        lp += -0.5 * float(np.sum((p / self.coef_sd) ** 2))
        grad[:5] -= p / self.coef_sd ** 2
        prior, g_prior = _scale_prior(vec[5:7], self.scale_sd)
        lp += prior
        grad[5:7] += g_prior
        return lp, grad

    def initial_point(self) -> np.ndarray:
        vec = np.zeros(self.dimension)
        rate = np.clip(self.r.mean(), 0.01, 0.99)
        vec[0] = math.log(rate / (1 - rate))
        vec[5:7] = math.log(0.5)
        return vec


class BodyPosterior:
    """Beta moyenne-précision avec champ X^beta = L z (noyau rationnel quadratique, distance cordale)"""

    def __init__(self, design: ValueDesign):
        self.design = design
        keep = ~design.exceeds
        self.x = design.body_fraction
        self.features = design.features[keep][:, BODY_FEATURES]
        self.cells = design.coarse_cell[keep]
        self.n_coarse = design.n_coarse
        self.distances = distance_matrix(design.coarse_lonlat, 'chordal')
        self.log_scale = math.log(design.scale)
        self.coef_sd = _cfg('COEF_PRIOR_SD', 10.0)
        self.scale_sd = np.array([_cfg('SCALE_PRIOR_SD', 5.0), _cfg('LENGTH_SCALE_PRIOR_SD_KM', 20.0)])
        if self.x.size == 0:
            raise FitError("Aucun sinistre dans le corps de la distribution")

    @property
    def dimension(self) -> int:
        return 6 + self.n_coarse

    @property
    def names(self) -> List[str]:
        return ([f'nu{i}' for i in range(4)] + ['log_kappa', 'log_length_scale_beta']
                + [f'z_beta[{c}]' for c in range(self.n_coarse)])

    def output_names(self) -> List[str]:
        return ([f'nu{i}' for i in range(4)] + ['kappa', 'length_scale_beta']
                + [f'x_beta[{c}]' for c in range(self.n_coarse)])

    def _field(self, vec: np.ndarray) -> np.ndarray:
        cov = build_covariance(None, RationalQuadParams(math.exp(vec[5])), distances=self.distances)
        return cov.chol @ vec[6:]

    def constrain(self, vec: np.ndarray) -> np.ndarray:
        return np.concatenate([vec[:4], np.exp(vec[4:6]), self._field(vec)])

    def __call__(self, vec: np.ndarray) -> float:
        try:
            x_beta = self._field(vec)
        except (SingularCovarianceError, OverflowError):
            return -math.inf
        nu = expit(vec[0] + self.features @ vec[1:4] + x_beta[self.cells])
        nu = np.clip(nu, 1e-12, 1 - 1e-12)
        lp, _ = beta_logpdf_mean(self.x, nu, math.exp(vec[4]))
        total = float(np.sum(lp)) - self.x.size * self.log_scale
        total += -0.5 * float(vec[6:] @ vec[6:]) - 0.5 * float(np.sum((vec[:4] / self.coef_sd) ** 2))
        total += _scale_prior(vec[4:6], self.scale_sd)[0]
        return total if np.isfinite(total) else -math.inf

    def initial_point(self) -> np.ndarray:
        vec = np.zeros(self.dimension)
        mean = float(np.clip(self.x.mean(), 1e-3, 1 - 1e-3))
        var = float(self.x.var()) if self.x.size > 1 else mean * (1 - mean) / 3
        kappa = max(mean * (1 - mean) / max(var, 1e-9) - 1.0, 0.5)
        vec[0] = math.log(mean / (1 - mean))
        vec[4] = math.log(kappa)
        vec[5] = math.log(10.0)
        return vec


class TailPosterior:
    """GPD des excès avec log sigma_u lié aux covariables et champ X^sigma Matérn (distance cordale)"""

    def __init__(self, design: ValueDesign):
        self.design = design
        keep = design.exceeds
        self.y = design.tail_excess
        if self.y.size == 0:
            raise FitError("Aucun dépassement du seuil: ajustement de la queue impossible")
        self.features = design.features[keep][:, TAIL_FEATURES]
        self.cells = design.coarse_cell[keep]
        self.hail = design.in_hail_season[keep]
        self.log_jacobian = -float(np.sum(np.log1p(design.residual[keep])))
        self.n_coarse = design.n_coarse
        self.distances = distance_matrix(design.coarse_lonlat, 'chordal')
        self.coef_sd = _cfg('COEF_PRIOR_SD', 10.0)
        self.length_sd = _cfg('LENGTH_SCALE_PRIOR_SD_KM', 20.0)
        self.xi_sd = _cfg('XI_PRIOR_SD', 0.5)

    @property
    def dimension(self) -> int:
        return 7 + self.n_coarse

    @property
    def names(self) -> List[str]:
        return ([f'sigma{i}' for i in range(4)] + ['log_length_scale_sigma', 'xi1', 'xi2']
                + [f'z_sigma[{c}]' for c in range(self.n_coarse)])

    def output_names(self) -> List[str]:
        return ([f'sigma{i}' for i in range(4)] + ['length_scale_sigma', 'xi1', 'xi2']
                + [f'x_sigma[{c}]' for c in range(self.n_coarse)])

    def constrain(self, vec: np.ndarray) -> np.ndarray:
        cov = build_covariance(None, MaternParams(math.exp(vec[4])), distances=self.distances)
        return np.concatenate([vec[:4], [math.exp(vec[4])], vec[5:7], cov.chol @ vec[7:]])

    def __call__(self, vec: np.ndarray) -> Tuple[float, np.ndarray]:
        grad = np.zeros_like(vec)
        length = math.exp(vec[4])
        try:
            cov = build_covariance(None, MaternParams(length), distances=self.distances)
        except SingularCovarianceError:
            return -math.inf, grad
        z = vec[7:]
        x_sigma = cov.chol @ z
        log_sigma = vec[0] + self.features @ vec[1:4] + x_sigma[self.cells]
        xi = np.where(self.hail, vec[5], vec[6])
        lp_obs, g = gpd_logpdf_excess(self.y, np.exp(log_sigma), xi)
        lp = float(np.sum(lp_obs)) + self.log_jacobian
        if not np.isfinite(lp):
            return -math.inf, grad

        g_ls = g['log_sigma']
        grad[0] = g_ls.sum()
        grad[1:4] = self.features.T @ g_ls
        g_cell = np.bincount(self.cells, weights=g_ls, minlength=self.n_coarse)
        grad[7:] = cov.chol.T @ g_cell - z
        chol_dl = cov.chol_derivative(cov.derivative_dl())
        grad[4] = length * float(g_cell @ (chol_dl @ z))
        grad[5] = g['xi'][self.hail].sum()
        grad[6] = g['xi'][~self.hail].sum()

        # xi ~ Normal(0, XI_PRIOR_SD²), coefficients ~ Normal(0, COEF_PRIOR_SD²)
        lp += -0.5 * float(z @ z) - 0.5 * float(np.sum((vec[:4] / self.coef_sd) ** 2))
        lp += -0.5 * float(np.sum((vec[5:7] / self.xi_sd) ** 2))
        grad[:4] -= vec[:4] / self.coef_sd ** 2
        grad[5:7] -= vec[5:7] / self.xi_sd ** 2
        prior, g_prior = _scale_prior(vec[4:5], self.length_sd)
        lp += prior
        grad[4] += g_prior[0]
        return lp, grad

    def initial_point(self) -> np.ndarray:
        vec = np.zeros(self.dimension)
        vec[4] = math.log(10.0)
        try:
            fit = fit_gpd_ml(self.y, profile=False)
            vec[0], vec[5], vec[6] = math.log(fit.sigma), fit.xi, fit.xi
        except FitError:
            vec[0] = math.log(max(self.y.mean(), 1e-3))
        return vec


# ============================================================================
# AJUSTEMENT
# ============================================================================

@dataclass
class ValueFit:
    exceedance: PosteriorSamples
    body: PosteriorSamples
    tail: PosteriorSamples
    threshold_u: float

    def draw(self, rng: np.random.Generator) -> ValueModelParams:
        """Un jeu de paramètres tiré indépendamment dans chacune des trois postérieures"""
        pick = lambda s: s.flat()[rng.integers(s.n_iter * s.n_chains)]
        return ValueModelParams(
            exceedance=ExceedanceParams.from_named(self.exceedance.names, pick(self.exceedance)),
            body=BetaModelParams.from_named(self.body.names, pick(self.body)),
            tail=GpdModelParams.from_named(self.tail.names, pick(self.tail), self.threshold_u),
        )


def _nuts_part(posterior, nuts_config: NutsConfig, chains: int, label: str) -> PosteriorSamples:
    def sample_one(chain: int, seed: int) -> PosteriorSamples:
        rng = np.random.default_rng(seed)
        init = posterior.initial_point()
        if chain > 0:
            init = init + 0.05 * rng.standard_normal(init.size)
        chain_config = NutsConfig(tuning_iters=nuts_config.tuning_iters, draw_iters=nuts_config.draw_iters,
                                  target_accept=nuts_config.target_accept,
                                  max_tree_depth=nuts_config.max_tree_depth, seed=seed,
                                  adapt_mass=nuts_config.adapt_mass)
        raw = nuts_sample(posterior, init, chain_config, names=posterior.names)
        draws = np.array([posterior.constrain(row) for row in raw.draws[:, :, 0]])
        return PosteriorSamples(names=posterior.output_names(), draws=draws, accept_stats=raw.accept_stats,
                                divergences=raw.divergences, meta=dict(raw.meta, chain=chain))

    logger.info(f"⏳ Ajustement '{label}' par NUTS (dimension {posterior.dimension})")
    samples = run_chains(sample_one, chains, nuts_config.seed)
    rate = samples.divergences / max(samples.n_iter * samples.n_chains, 1)
    if rate > _cfg('MAX_DIVERGENCE_RATE', 0.10):
        raise FitError(f"Partie '{label}': taux de divergence {rate:.1%}")
    samples.meta['model'] = label
    return samples


def _demc_part(posterior: BodyPosterior, demc_config: DemcConfig) -> PosteriorSamples:
    rng = np.random.default_rng(demc_config.seed)
    init = posterior.initial_point()
    d = init.size
    inits = init + 0.1 * rng.standard_normal((demc_config.n_chains, d))
    archive = init + 0.3 * rng.standard_normal((10 * d, d))
    logger.info(f"⏳ Ajustement 'body' par DE-MC snooker (dimension {d}, {demc_config.n_chains} chaînes)")
    raw = demc_snooker_sample(posterior, inits, demc_config, names=posterior.names, initial_archive=archive)
    draws = np.stack([np.array([posterior.constrain(raw.draws[i, :, c]) for i in range(raw.n_iter)])
                      for c in range(raw.n_chains)], axis=2)
    samples = PosteriorSamples(names=posterior.output_names(), draws=draws, accept_stats=raw.accept_stats,
                               meta=dict(raw.meta, model='body'))
    return samples


def fit_values(
    design: ValueDesign,
    sampler_configs: Dict[str, object],
    chains: int = 1
) -> ValueFit:
    """
    Ajuste les trois parties du modèle de valeurs

    Args:
        design: conception d'entraînement (seuil u fixé)
        sampler_configs: {'exceedance': NutsConfig, 'body': DemcConfig, 'tail': NutsConfig}
        chains: chaînes NUTS indépendantes par partie
    """
    n_exceed = int(design.exceeds.sum())
    logger.info(f"📊 Modèle de valeurs: {design.n_claims} sinistre(s), {n_exceed} au-dessus de "
                f"u={design.threshold_u:.2f}, {design.n_coarse} cellule(s) grossière(s)")
    if n_exceed == 0:
        raise FitError("Aucun dépassement du seuil: ajustement de la queue impossible")
    tail = _nuts_part(TailPosterior(design), sampler_configs['tail'], chains, 'tail')
    exceedance = _nuts_part(ExceedancePosterior(design), sampler_configs['exceedance'], chains, 'exceedance')
    body = _demc_part(BodyPosterior(design), sampler_configs['body'])
    logger.info("✅ Modèle de valeurs ajusté")
    return ValueFit(exceedance=exceedance, body=body, tail=tail, threshold_u=design.threshold_u)


# ============================================================================
# SIMULATION DES VALEURS
# ============================================================================

@dataclass
class ClaimContext:
    """Contexte d'un bâtiment touché: covariables standardisées, cellule grossière, saison, M^YC"""
    features: np.ndarray  # (4,)
    coarse_cell: int
    in_hail_season: bool
    climada_value: float
    eps_p: float = 0.0


def sample_values(
    features: np.ndarray,
    cells: np.ndarray,
    in_hail_season: np.ndarray,
    climada_value: np.ndarray,
    params: ValueModelParams,
    rng: np.random.Generator,
    eps_p=0.0
) -> np.ndarray:
    """Version vectorisée de sample_claim_value"""
    features = np.atleast_2d(features)
    n = features.shape[0]
    u = params.tail.threshold_u
    eta = params.exceedance.p[0] + features @ params.exceedance.p[1:] + params.exceedance.chi[cells] + eps_p
    tail = rng.random(n) < expit(eta)

    nu = np.clip(body_mean(features, cells, params.body), 1e-12, 1 - 1e-12)
    body_z = f_inverse(u) * rng.beta(nu * params.body.kappa, (1 - nu) * params.body.kappa)
    sigma = tail_scale(features, cells, params.tail)
    excess = gpd_excess_quantile(rng.random(n), sigma, params.tail.xi(in_hail_season))
    tail_z = f_inverse(u + excess)
    z = np.where(tail, tail_z, body_z)
    return np.asarray(climada_value, dtype=float) + z


def sample_claim_value(context: ClaimContext, params: ValueModelParams, rng: np.random.Generator) -> float:
    """
    Tire Y = M^YC + Z: R ~ Bernoulli(p); corps Z = f^-1(u).Beta(nu, kappa),
    queue Z = f^-1(u + E) avec E ~ GPD(sigma_u, xi(t))
    """
    y = sample_values(np.asarray(context.features)[None, :], np.array([context.coarse_cell]),
                      np.array([context.in_hail_season]), np.array([context.climada_value]),
                      params, rng, eps_p=context.eps_p)
    return float(y[0])


def predict_values(
    fit: ValueFit,
    buildings: pd.DataFrame,
    scaler: CovariateScaler,
    m: int,
    rng: np.random.Generator
) -> np.ndarray:
    """
    m tirages de valeur de sinistre par bâtiment

    Args:
        buildings: colonnes poh, meshs, exposure, coarse_cell, in_hail_season, climada_value
                   (et optionnellement season pour partager eps_p)

    Returns:
        (m, n_buildings) valeurs Y en CHF
    """
    if buildings.empty:
        return np.empty((m, 0))
    features = scaler.transform(buildings['poh'], buildings['meshs'], buildings['exposure'])
    cells = buildings['coarse_cell'].to_numpy(int)
    hail = buildings['in_hail_season'].to_numpy(bool)
    climada_value = buildings['climada_value'].to_numpy(float)
    if 'season' in buildings:
        season_codes, _ = pd.factorize(buildings['season'])
    else:
        season_codes = np.zeros(len(buildings), dtype=int)
    out = np.empty((m, len(buildings)))
    for k in range(m):
        params = fit.draw(rng)
        # Nouvelles saisons: effet eps_p tiré de son prior
        eps_new = math.sqrt(params.exceedance.eps_p_var) * rng.standard_normal(season_codes.max() + 1)
        out[k] = sample_values(features, cells, hail, climada_value, params, rng, eps_p=eps_new[season_codes])
    return out
