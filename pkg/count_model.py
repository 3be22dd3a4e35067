"""
Modèle de comptage des sinistres sur la grille 2 km

N(s,t) ~ ZINB(psi(s,t), mu(s,t), alpha), avec la ligne journalière (Theta_t, alpha_t),
le champ latent X^mu(., t) ~ GP(m_t, Matérn) et le bruit saisonnier eps(t).
"""

import math
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

import geometry
from distributions import expit, log_expit, zinb_loglik_eta
from errors import FitError, NonFiniteError, SingularCovarianceError
from kernels import MaternParams, build_covariance, distance_matrix
from samplers import NutsConfig, PosteriorSamples, nuts_sample, run_chains

try:
    import config
except ImportError:
    config = None

logger = logging.getLogger(__name__)


def _cfg(name: str, default):
    return getattr(config, name, default) if config else default


COEF_NAMES = ['psi0', 'psi1', 'psi2', 'mu0', 'mu11', 'mu12', 'mu13', 'mu2']
SCALE_NAMES = ['alpha', 'sigma_m', 'length_scale_mu', 'eps_var_season', 'eps_var_off']
SCALAR_NAMES = COEF_NAMES + SCALE_NAMES


# ============================================================================
# TYPES
# ============================================================================

@dataclass
class CountDesign:
    """Données de conception: M^NC par jour et cellule, vent moyen, centroïdes (km, relatifs à s_0)"""
    cell_xy: np.ndarray  # (n_cells, 2)
    climada_count: np.ndarray  # (n_days, n_cells)
    wind_dir: np.ndarray  # (n_days,) degrés
    in_hail_season: np.ndarray  # (n_days,) bool
    active: Optional[np.ndarray] = None  # (n_days,) jours avec un signal de grêle
    dates: Optional[Sequence] = None

    def __post_init__(self):
        self.cell_xy = np.asarray(self.cell_xy, dtype=float).reshape(-1, 2)
        self.climada_count = np.atleast_2d(np.asarray(self.climada_count, dtype=float))
        self.wind_dir = np.atleast_1d(np.asarray(self.wind_dir, dtype=float))
        self.in_hail_season = np.atleast_1d(np.asarray(self.in_hail_season, dtype=bool))
        if self.climada_count.shape != (self.n_days, self.n_cells):
            raise ValueError(f"M^NC de forme {self.climada_count.shape}, attendu ({self.n_days}, {self.n_cells})")
        if self.in_hail_season.shape != (self.n_days,):
            raise ValueError("in_hail_season doit avoir une entrée par jour")
        if not (np.all(np.isfinite(self.climada_count)) and np.all(np.isfinite(self.wind_dir))):
            raise ValueError("Valeurs manquantes dans la conception du modèle de comptage")
        if self.active is None:
            self.active = np.any(self.climada_count > 0, axis=1)
        self.active = np.asarray(self.active, dtype=bool)

    @property
    def n_days(self) -> int:
        return self.wind_dir.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cell_xy.shape[0]

    @property
    def alpha_bounds(self) -> Tuple[float, float]:
        """Support uniforme de alpha_t: étendue verticale de la grille +- marge"""
        margin = _cfg('ALPHA_MARGIN_KM', 20.0)
        return float(self.cell_xy[:, 1].min() - margin), float(self.cell_xy[:, 1].max() + margin)

    @property
    def wind_theta(self) -> np.ndarray:
        return np.asarray(geometry.wind_to_line_angle(self.wind_dir), dtype=float).reshape(-1)

    def subset(self, days: np.ndarray) -> 'CountDesign':
        days = np.asarray(days)
        idx = np.flatnonzero(days) if days.dtype == bool else days
        return CountDesign(
            cell_xy=self.cell_xy,
            climada_count=self.climada_count[days],
            wind_dir=self.wind_dir[days],
            in_hail_season=self.in_hail_season[days],
            active=self.active[days],
            dates=None if self.dates is None else [self.dates[i] for i in idx],
        )


@dataclass
class CountModelParams:
    psi0: float
    psi1: float
    psi2: float
    mu0: float
    mu1: Tuple[float, float, float]
    mu2: float
    alpha: float
    sigma_m: float
    length_scale_mu: float
    eps_var_season: float
    eps_var_off: float
    latent_field: np.ndarray = None  # (n_days, n_cells)
    eps_values: np.ndarray = None  # (n_days,)
    line_states: np.ndarray = None  # (n_days, 2): theta, alpha_t

    def __post_init__(self):
        for name in SCALE_NAMES:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} doit être > 0 (reçu {getattr(self, name)})")
        self.mu1 = tuple(float(v) for v in self.mu1)
        if len(self.mu1) != 3:
            raise ValueError("mu1 doit contenir trois coefficients")

    def line(self, day: int) -> geometry.LineState:
        theta, alpha_t = self.line_states[day]
        return geometry.LineState(theta=float(theta), alpha=float(alpha_t), sigma_m=self.sigma_m)

    def eps_var(self, in_hail_season: bool) -> float:
        return self.eps_var_season if in_hail_season else self.eps_var_off

    def scalar_vector(self) -> np.ndarray:
        return np.array([self.psi0, self.psi1, self.psi2, self.mu0, *self.mu1, self.mu2,
                         self.alpha, self.sigma_m, self.length_scale_mu, self.eps_var_season, self.eps_var_off])

    @classmethod
    def from_named(cls, names: Sequence[str], values: np.ndarray,
                   n_days: int = 0, n_cells: int = 0) -> 'CountModelParams':
        """Reconstruit les paramètres depuis un vecteur nommé (une ligne de PosteriorSamples)"""
        index = {n: i for i, n in enumerate(names)}
        get = lambda n: float(values[index[n]])
        params = cls(psi0=get('psi0'), psi1=get('psi1'), psi2=get('psi2'), mu0=get('mu0'),
                     mu1=(get('mu11'), get('mu12'), get('mu13')), mu2=get('mu2'),
                     alpha=get('alpha'), sigma_m=get('sigma_m'), length_scale_mu=get('length_scale_mu'),
                     eps_var_season=get('eps_var_season'), eps_var_off=get('eps_var_off'))
        if n_days and f'theta[{n_days - 1}]' in index:
            params.line_states = np.array([[get(f'theta[{t}]'), get(f'alpha_t[{t}]')] for t in range(n_days)])
            params.eps_values = np.array([get(f'eps[{t}]') for t in range(n_days)])
            if n_cells and f'x_mu[{n_days - 1},{n_cells - 1}]' in index:
                params.latent_field = np.array([[get(f'x_mu[{t},{i}]') for i in range(n_cells)]
                                                for t in range(n_days)])
        return params


# ============================================================================
# PRÉDICTEURS
# ============================================================================

def _line_mean_cell(cell: int, day: int, params: CountModelParams, design: CountDesign) -> float:
    x, y = design.cell_xy[cell]
    return geometry.line_mean(geometry.PlanarPoint(float(x), float(y)), params.line(day))


def psi_predictor(cell: int, day: int, params: CountModelParams, design: CountDesign) -> float:
    """expit{psi0 + psi1.1[M>0] + psi2.M.m_t(s)}"""
    m_nc = design.climada_count[day, cell]
    m_t = _line_mean_cell(cell, day, params, design)
    return float(expit(params.psi0 + params.psi1 * float(m_nc > 0) + params.psi2 * m_nc * m_t))


def mu_predictor(cell: int, day: int, params: CountModelParams, design: CountDesign,
                 diagnostics: Optional[Dict[str, int]] = None) -> float:
    """
    exp{mu0 + sum_i mu1i.M^i + mu2.M.m_t(s) + X^mu(s,t) + eps(t)}

    Le prédicteur linéaire est borné à +-LINEAR_PREDICTOR_CLAMP; chaque
    écrêtage incrémente diagnostics['clamped_predictor'].
    """
    m_nc = design.climada_count[day, cell]
    m_t = _line_mean_cell(cell, day, params, design)
    x_mu = 0.0 if params.latent_field is None else params.latent_field[day, cell]
    eps = 0.0 if params.eps_values is None else params.eps_values[day]
    eta = (params.mu0 + sum(c * m_nc ** (k + 1) for k, c in enumerate(params.mu1))
           + params.mu2 * m_nc * m_t + x_mu + eps)
    return float(math.exp(_clamp(eta, diagnostics)))


def polynomial_scale(climada_count: np.ndarray) -> np.ndarray:
    """
    Échelle de chaque coefficient (ordre COEF_NAMES) pour l'échantillonneur

    Moyenne quadratique de la covariable multipliée: M pour psi2, mu11 et
    mu2, M² pour mu12, M³ pour mu13; 1 pour les ordonnées et psi1.
    """
    m = np.abs(np.asarray(climada_count, dtype=float)).ravel()
    rms = [math.sqrt(float(np.mean(m ** (2 * k)))) if m.size else 0.0 for k in (1, 2, 3)]
    rms = [r if r >= 1.0 else 1.0 for r in rms]
    return np.array([1.0, 1.0, rms[0], 1.0, rms[0], rms[1], rms[2], rms[0]])


def _clamp(eta: float, diagnostics: Optional[Dict[str, int]]) -> float:
    bound = _cfg('LINEAR_PREDICTOR_CLAMP', 30.0)
    if abs(eta) > bound:
        if diagnostics is not None:
            diagnostics['clamped_predictor'] = diagnostics.get('clamped_predictor', 0) + 1
        return math.copysign(bound, eta)
    return eta


# ============================================================================
# LOG-POSTÉRIEURE (FORME CENTRÉE)
# ============================================================================

def _half_normal_logpdf(x: float, sd: float) -> float:
    return math.log(2.0) + float(stats.norm.logpdf(x, 0.0, sd)) if x > 0 else -math.inf


def _theta_prior_logpdf(theta, wind_theta) -> np.ndarray:
    """Gaussienne sur l'écart d'angle (ramené dans (-pi/2, pi/2]) au vent moyen"""
    sd = math.radians(_cfg('THETA_PRIOR_SD_DEG', 15.0))
    diff = np.asarray(geometry.normalize_angle(np.asarray(theta) - np.asarray(wind_theta)), dtype=float)
    return stats.norm.logpdf(diff, 0.0, sd)


def count_log_posterior_terms(
    params: CountModelParams,
    design: CountDesign,
    observed_counts: np.ndarray,
    diagnostics: Optional[Dict[str, int]] = None
) -> Dict[str, float]:
    """
    Termes de la log-postérieure du modèle de comptage, jours actifs uniquement

    Returns:
        {'likelihood', 'latent_field', 'eps', 'line_prior', 'coef_prior', 'scale_prior'}
    """
    counts = np.asarray(observed_counts, dtype=float)
    days = np.flatnonzero(design.active)
    coef_sd = _cfg('COEF_PRIOR_SD', 10.0)
    scale_sd = _cfg('SCALE_PRIOR_SD', 5.0)
    length_sd = _cfg('LENGTH_SCALE_PRIOR_SD_KM', 20.0)
    bound = _cfg('LINEAR_PREDICTOR_CLAMP', 30.0)

    cov = build_covariance(design.cell_xy, MaternParams(params.length_scale_mu), distance='planar')
    x, y = design.cell_xy[:, 0], design.cell_xy[:, 1]
    lo, hi = design.alpha_bounds
    mu1 = np.asarray(params.mu1)

    terms = {'likelihood': 0.0, 'latent_field': 0.0, 'eps': 0.0, 'line_prior': 0.0}
    for t in days:
        line = params.line(t)
        m_t = np.asarray(geometry.line_mean_coords(x, y, line), dtype=float)
        m_nc = design.climada_count[t]
        x_mu = params.latent_field[t]
        eps = params.eps_values[t]
        eta_psi = params.psi0 + params.psi1 * (m_nc > 0) + params.psi2 * m_nc * m_t
        eta_mu = (params.mu0 + mu1[0] * m_nc + mu1[1] * m_nc ** 2 + mu1[2] * m_nc ** 3
                  + params.mu2 * m_nc * m_t + x_mu + eps)
        clamped = np.abs(eta_mu) > bound
        if diagnostics is not None and np.any(clamped):
            diagnostics['clamped_predictor'] = diagnostics.get('clamped_predictor', 0) + int(clamped.sum())
        ll, _ = zinb_loglik_eta(counts[t], eta_psi, np.clip(eta_mu, -bound, bound), params.alpha)
        terms['likelihood'] += float(np.sum(ll))
        terms['latent_field'] += cov.log_density(x_mu, m_t)
        terms['eps'] += float(stats.norm.logpdf(eps, 0.0, math.sqrt(params.eps_var(design.in_hail_season[t]))))
        in_range = lo <= line.alpha <= hi
        terms['line_prior'] += float(_theta_prior_logpdf(line.theta, design.wind_theta[t])) + (
            -math.log(hi - lo) if in_range else -math.inf)

    coefs = np.array([params.psi0, params.psi1, params.psi2, params.mu0, *params.mu1, params.mu2])
    terms['coef_prior'] = float(np.sum(stats.norm.logpdf(coefs, 0.0, coef_sd)))
    terms['scale_prior'] = (
        _half_normal_logpdf(params.alpha, scale_sd)
        + _half_normal_logpdf(params.sigma_m, scale_sd)
        + _half_normal_logpdf(params.length_scale_mu, length_sd)
        + _half_normal_logpdf(params.eps_var_season, scale_sd)
        + _half_normal_logpdf(params.eps_var_off, scale_sd)
    )
    return terms


def count_log_posterior(
    params: CountModelParams,
    design: CountDesign,
    observed_counts: np.ndarray,
    diagnostics: Optional[Dict[str, int]] = None
) -> float:
    """Somme des termes; un terme non fini lève NonFiniteError en le nommant"""
    terms = count_log_posterior_terms(params, design, observed_counts, diagnostics)
    for name, value in terms.items():
        if not np.isfinite(value):
            raise NonFiniteError(name, value)
    return float(sum(terms.values()))


# ============================================================================
# LOG-POSTÉRIEURE NON CENTRÉE (ESPACE NON CONTRAINT, POUR NUTS)
# ============================================================================

class CountPosterior:
    """
    Log-postérieure et gradient analytique en paramétrisation non centrée

    Vecteur: coefficients réduits, log des échelles, puis par jour actif
    theta_t, logit de alpha_t sur son support, e_t (eps = sqrt(v).e_t) et
    z_t (X^mu = m_t + L z_t).

    Les coefficients des termes en M^NC sont échantillonnés multipliés par
    la moyenne quadratique de leur covariable (coef_scale); les priors et
    les tirages restent sur l'échelle brute du modèle.
    """

    def __init__(self, design: CountDesign, observed_counts: np.ndarray):
        counts = np.asarray(observed_counts)
        if counts.shape != (design.n_days, design.n_cells):
            raise ValueError(f"Comptages de forme {counts.shape}, attendu ({design.n_days}, {design.n_cells})")
        if np.any(counts < 0) or not np.all(np.equal(np.mod(counts, 1), 0)):
            raise ValueError("Les comptages doivent être des entiers positifs ou nuls")
        self.design = design
        self.days = np.flatnonzero(design.active)
        if self.days.size == 0:
            raise FitError("Aucun jour actif dans la conception du modèle de comptage")
        self.counts = counts[self.days].astype(float)
        self.m_nc = design.climada_count[self.days]
        self.indicator = (self.m_nc > 0).astype(float)
        self.season = design.in_hail_season[self.days]
        self.wind_theta = design.wind_theta[self.days]
        self.x, self.y = design.cell_xy[:, 0], design.cell_xy[:, 1]
        self.lo, self.hi = design.alpha_bounds
        self.distances = distance_matrix(design.cell_xy, 'planar')
        self.n_days, self.n_cells = self.days.size, design.n_cells
        self.n_scalar = len(SCALAR_NAMES)
        self.coef_scale = polynomial_scale(self.m_nc)
        self.clamped = 0

        self.coef_sd = _cfg('COEF_PRIOR_SD', 10.0)
        self.scale_sd = np.array([_cfg('SCALE_PRIOR_SD', 5.0), _cfg('SCALE_PRIOR_SD', 5.0),
                                  _cfg('LENGTH_SCALE_PRIOR_SD_KM', 20.0),
                                  _cfg('SCALE_PRIOR_SD', 5.0), _cfg('SCALE_PRIOR_SD', 5.0)])
        self.theta_sd = math.radians(_cfg('THETA_PRIOR_SD_DEG', 15.0))
        self.bound = _cfg('LINEAR_PREDICTOR_CLAMP', 30.0)

    @property
    def dimension(self) -> int:
        return self.n_scalar + self.n_days * (3 + self.n_cells)

    @property
    def names(self) -> List[str]:
        """Noms des paramètres non contraints"""
        names = [n if s == 1.0 else n + '_std' for n, s in zip(COEF_NAMES, self.coef_scale)]
        names += ['log_' + n for n in SCALE_NAMES]
        names += [f'theta[{t}]' for t in self.days]
        names += [f'alpha_raw[{t}]' for t in self.days]
        names += [f'eps_raw[{t}]' for t in self.days]
        names += [f'z[{t},{i}]' for t in self.days for i in range(self.n_cells)]
        return names

    def output_names(self, store_latent: bool = True) -> List[str]:
        """Noms des paramètres contraints enregistrés dans PosteriorSamples"""
        names = list(SCALAR_NAMES)
        names += [f'theta[{t}]' for t in self.days]
        names += [f'alpha_t[{t}]' for t in self.days]
        names += [f'eps[{t}]' for t in self.days]
        if store_latent:
            names += [f'x_mu[{t},{i}]' for t in self.days for i in range(self.n_cells)]
        return names

    def _split(self, vec: np.ndarray):
        k, T, n = self.n_scalar, self.n_days, self.n_cells
        coefs = vec[:8] / self.coef_scale
        log_scales = vec[8:k]
        theta = vec[k:k + T]
        alpha_raw = vec[k + T:k + 2 * T]
        e = vec[k + 2 * T:k + 3 * T]
        z = vec[k + 3 * T:].reshape(T, n)
        return coefs, log_scales, theta, alpha_raw, e, z

    def _alpha_t(self, alpha_raw: np.ndarray) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * expit(alpha_raw)

    def _eps_var(self, scales: np.ndarray) -> np.ndarray:
        return np.where(self.season, scales[3], scales[4])

    def constrain(self, vec: np.ndarray, store_latent: bool = True) -> np.ndarray:
        """Vecteur non contraint -> vecteur contraint dans l'ordre de output_names"""
        coefs, log_scales, theta, alpha_raw, e, z = self._split(np.asarray(vec, dtype=float))
        scales = np.exp(log_scales)
        alpha_t = self._alpha_t(alpha_raw)
        eps = np.sqrt(self._eps_var(scales)) * e
        parts = [coefs, scales, np.asarray(geometry.normalize_angle(theta), dtype=float).reshape(-1),
                 alpha_t, eps]
        if store_latent:
            cov = build_covariance(None, MaternParams(scales[2]), distances=self.distances)
            field_ = np.empty((self.n_days, self.n_cells))
            for j in range(self.n_days):
                line = geometry.LineState(theta[j], alpha_t[j], scales[1])
                field_[j] = geometry.line_mean_coords(self.x, self.y, line) + cov.chol @ z[j]
            parts.append(field_.ravel())
        return np.concatenate(parts)

    def unconstrain(self, params: CountModelParams) -> np.ndarray:
        """Inverse de constrain pour un jeu de paramètres complet (jours de la conception)"""
        scales = np.array([params.alpha, params.sigma_m, params.length_scale_mu,
                           params.eps_var_season, params.eps_var_off])
        coefs = np.array([params.psi0, params.psi1, params.psi2, params.mu0, *params.mu1, params.mu2])
        states = params.line_states[self.days]
        share = np.clip((states[:, 1] - self.lo) / (self.hi - self.lo), 1e-9, 1 - 1e-9)
        alpha_raw = np.log(share) - np.log1p(-share)
        e = params.eps_values[self.days] / np.sqrt(self._eps_var(scales))
        cov = build_covariance(None, MaternParams(params.length_scale_mu), distances=self.distances)
        z = np.empty((self.n_days, self.n_cells))
        for j, t in enumerate(self.days):
            z[j] = cov.whiten(params.latent_field[t], geometry.line_mean_coords(self.x, self.y, params.line(t)))
        theta = self.wind_theta + np.asarray(geometry.normalize_angle(states[:, 0] - self.wind_theta),
                                             dtype=float).reshape(-1)
        return np.concatenate([coefs * self.coef_scale, np.log(scales), theta, alpha_raw, e, z.ravel()])

    def __call__(self, vec: np.ndarray) -> Tuple[float, np.ndarray]:
        return self.log_density_and_gradient(vec)

    def log_density_and_gradient(self, vec: np.ndarray) -> Tuple[float, np.ndarray]:
        vec = np.asarray(vec, dtype=float)
        coefs, log_scales, theta, alpha_raw, e, z = self._split(vec)
        psi0, psi1, psi2, mu0, mu11, mu12, mu13, mu2 = coefs
        scales = np.exp(log_scales)
        alpha, sigma_m, length = scales[0], scales[1], scales[2]
        grad = np.zeros_like(vec)
        g_coefs, g_log_scales = grad[:8], grad[8:self.n_scalar]
        k, T = self.n_scalar, self.n_days
        g_theta, g_alpha_raw, g_e = grad[k:k + T], grad[k + T:k + 2 * T], grad[k + 2 * T:k + 3 * T]
        g_z = grad[k + 3 * T:].reshape(T, self.n_cells)

        try:
            cov = build_covariance(None, MaternParams(length), distances=self.distances)
        except SingularCovarianceError:
            return -math.inf, grad
        chol = cov.chol

        alpha_t = self._alpha_t(alpha_raw)
        var_t = self._eps_var(scales)
        sd_t = np.sqrt(var_t)
        eps = sd_t * e

        m = np.empty((T, self.n_cells))
        dm_theta = np.empty_like(m)
        dm_alpha = np.empty_like(m)
        dm_sigma = np.empty_like(m)
        for j in range(T):
            m[j], g = geometry.line_mean_with_gradient(self.x, self.y, theta[j], alpha_t[j], sigma_m)
            dm_theta[j], dm_alpha[j], dm_sigma[j] = g['theta'], g['alpha'], g['sigma_m']
        field_ = m + z @ chol.T

        M = self.m_nc
        eta_psi = psi0 + psi1 * self.indicator + psi2 * M * m
        eta_raw = mu0 + mu11 * M + mu12 * M ** 2 + mu13 * M ** 3 + mu2 * M * m + field_ + eps[:, None]
        clamped = np.abs(eta_raw) > self.bound
        self.clamped += int(clamped.sum())
        eta_mu = np.clip(eta_raw, -self.bound, self.bound)

        ll, g = zinb_loglik_eta(self.counts, eta_psi, eta_mu, alpha)
        g_psi = g['eta_psi']
        g_mu = np.where(clamped, 0.0, g['eta_mu'])

        # Vraisemblance
        g_coefs[0] = g_psi.sum()
        g_coefs[1] = (g_psi * self.indicator).sum()
        g_coefs[2] = (g_psi * M * m).sum()
        g_coefs[3] = g_mu.sum()
        g_coefs[4] = (g_mu * M).sum()
        g_coefs[5] = (g_mu * M ** 2).sum()
        g_coefs[6] = (g_mu * M ** 3).sum()
        g_coefs[7] = (g_mu * M * m).sum()
        g_log_scales[0] = g['log_alpha'].sum()

        dm_total = g_psi * psi2 * M + g_mu * (mu2 * M + 1.0)
        g_theta += (dm_total * dm_theta).sum(axis=1)
        share = expit(alpha_raw)
        g_alpha_raw += (dm_total * dm_alpha).sum(axis=1) * (self.hi - self.lo) * share * (1.0 - share)
        g_log_scales[1] = (dm_total * dm_sigma).sum() * sigma_m

        g_z += g_mu @ chol
        chol_dl = cov.chol_derivative(cov.derivative_dl())
        g_log_scales[2] = length * np.sum(g_mu * (z @ chol_dl.T))

        g_mu_day = g_mu.sum(axis=1)
        g_e += sd_t * g_mu_day
        half_eps_grad = 0.5 * eps * g_mu_day
        g_log_scales[3] = half_eps_grad[self.season].sum()
        g_log_scales[4] = half_eps_grad[~self.season].sum()

        lp = float(ll.sum())

        # Priors des variables latentes standardisées
        lp += -0.5 * float(np.sum(z ** 2)) - 0.5 * float(np.sum(e ** 2))
        g_z -= z
        g_e -= e

        # Ligne: gaussienne non repliée autour du vent (densité propre sur R),
        # alpha_t uniforme (jacobien du logit)
        diff = theta - self.wind_theta
        lp += float(np.sum(-0.5 * (diff / self.theta_sd) ** 2))
        g_theta -= diff / self.theta_sd ** 2
        lp += float(np.sum(log_expit(alpha_raw) + log_expit(-alpha_raw)))
        g_alpha_raw += 1.0 - 2.0 * share

        # Coefficients Normal(0, sd²); échelles half-Normal + jacobien du log
        lp += float(np.sum(-0.5 * (coefs / self.coef_sd) ** 2))
        g_coefs -= coefs / self.coef_sd ** 2
        lp += float(np.sum(-0.5 * (scales / self.scale_sd) ** 2 + log_scales))
        g_log_scales += -(scales / self.scale_sd) ** 2 + 1.0
        g_coefs /= self.coef_scale

        if not np.isfinite(lp):
            return -math.inf, np.zeros_like(vec)
        return lp, grad

    def initial_point(self, rng: Optional[np.random.Generator] = None, spread: float = 0.0) -> np.ndarray:
        """Point de départ raisonnable, éventuellement dispersé"""
        active_counts = self.counts
        nonzero = np.clip(np.mean(active_counts > 0), 0.05, 0.95)
        positive = active_counts[active_counts > 0]
        vec = np.zeros(self.dimension)
        vec[0] = math.log(nonzero / (1 - nonzero))
        vec[3] = math.log(max(positive.mean(), 1.0)) if positive.size else 0.0
        cell_km = _cfg('CELL_SIZE_KM', 2.0)
        vec[8:self.n_scalar] = np.log([1.0, 2.0, max(2.5 * cell_km, 1.0), 0.5, 0.5])
        k, T = self.n_scalar, self.n_days
        vec[k:k + T] = self.wind_theta
        if rng is not None and spread > 0:
            vec[:k + T] += spread * rng.standard_normal(k + T)
        return vec


# ============================================================================
# AJUSTEMENT ET PRÉDICTION
# ============================================================================

def fit_counts(
    design: CountDesign,
    observed_counts: np.ndarray,
    sampler_config: NutsConfig,
    chains: int = 1,
    store_latent: bool = True
) -> PosteriorSamples:
    """
    Ajuste le modèle de comptage par NUTS

    Args:
        design: conception (jours d'entraînement)
        observed_counts: (n_days, n_cells)
        sampler_config: configuration NUTS (graine maîtresse incluse)
        chains: nombre de chaînes indépendantes
        store_latent: enregistrer X^mu dans les tirages

    Returns:
        PosteriorSamples des paramètres contraints, réglage exclu
    """
    reference = CountPosterior(design, observed_counts)
    logger.info(f"📊 Modèle de comptage: {reference.n_days} jour(s) actif(s) sur {design.n_days}, "
                f"{design.n_cells} cellule(s), dimension {reference.dimension}")

    def sample_one(chain: int, seed: int) -> PosteriorSamples:
        posterior = CountPosterior(design, observed_counts)
        rng = np.random.default_rng(seed)
        init = posterior.initial_point(rng, spread=0.1 if chain > 0 else 0.0)
        chain_config = NutsConfig(tuning_iters=sampler_config.tuning_iters, draw_iters=sampler_config.draw_iters,
                                  target_accept=sampler_config.target_accept,
                                  max_tree_depth=sampler_config.max_tree_depth, seed=seed,
                                  adapt_mass=sampler_config.adapt_mass)
        raw = nuts_sample(posterior, init, chain_config, names=posterior.names)
        draws = np.array([posterior.constrain(row, store_latent) for row in raw.draws[:, :, 0]])
        if posterior.clamped:
            logger.warning(f"⚠️ Chaîne {chain}: prédicteur linéaire écrêté {posterior.clamped} fois")
        meta = dict(raw.meta, chain=chain, clamped_predictor=posterior.clamped,
                    coef_scale=posterior.coef_scale.tolist())
        return PosteriorSamples(names=posterior.output_names(store_latent), draws=draws,
                                accept_stats=raw.accept_stats, divergences=raw.divergences, meta=meta)

    samples = run_chains(sample_one, chains, sampler_config.seed)
    _check_divergences(samples)
    samples.meta['active_days'] = reference.days.tolist()
    samples.meta['model'] = 'counts'
    return samples


def _check_divergences(samples: PosteriorSamples):
    rate = samples.divergences / max(samples.n_iter * samples.n_chains, 1)
    limit = _cfg('MAX_DIVERGENCE_RATE', 0.10)
    if rate > limit:
        raise FitError(f"Taux de divergence {rate:.1%} supérieur à {limit:.0%}")
    if samples.divergences:
        logger.warning(f"⚠️ {samples.divergences} transition(s) divergente(s) ({rate:.1%})")


def predict_counts(
    samples: PosteriorSamples,
    design: CountDesign,
    n_draws: int,
    rng: np.random.Generator
) -> np.ndarray:
    """
    Tirages prédictifs de comptages pour de nouveaux jours

    Pour chaque vecteur de paramètres retenu: ligne tirée de son prior
    (centrée sur le vent), X^mu, eps(t), puis comptages ZINB.

    Returns:
        tableau (n_draws, n_days, n_cells) d'entiers
    """
    rows = samples.thin_to(n_draws, rng)
    x, y = design.cell_xy[:, 0], design.cell_xy[:, 1]
    lo, hi = design.alpha_bounds
    theta_sd = math.radians(_cfg('THETA_PRIOR_SD_DEG', 15.0))
    bound = _cfg('LINEAR_PREDICTOR_CLAMP', 30.0)
    wind_theta = design.wind_theta
    out = np.zeros((n_draws, design.n_days, design.n_cells), dtype=int)
    for k, row in enumerate(rows):
        p = CountModelParams.from_named(samples.names, row)
        cov = build_covariance(design.cell_xy, MaternParams(p.length_scale_mu), distance='planar')
        mu1 = np.asarray(p.mu1)
        for t in range(design.n_days):
            if not design.active[t]:
                continue
            line = geometry.LineState(wind_theta[t] + theta_sd * rng.standard_normal(),
                                      rng.uniform(lo, hi), p.sigma_m)
            m_t = np.asarray(geometry.line_mean_coords(x, y, line), dtype=float)
            field_ = cov.sample(rng, mean=m_t)
            eps = math.sqrt(p.eps_var(design.in_hail_season[t])) * rng.standard_normal()
            m_nc = design.climada_count[t]
            psi = expit(p.psi0 + p.psi1 * (m_nc > 0) + p.psi2 * m_nc * m_t)
            eta = np.clip(p.mu0 + mu1[0] * m_nc + mu1[1] * m_nc ** 2 + mu1[2] * m_nc ** 3
                          + p.mu2 * m_nc * m_t + field_ + eps, -bound, bound)
            mu = np.exp(eta)
            active = rng.random(design.n_cells) < psi
            nb = rng.negative_binomial(p.alpha, p.alpha / (p.alpha + mu))
            out[k, t] = np.where(active, nb, 0)
    logger.info(f"✅ {n_draws} tirage(s) prédictif(s) de comptages sur {int(design.active.sum())} jour(s) actif(s)")
    return out
