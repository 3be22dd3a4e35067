"""
Lois de probabilité des deux modèles: binomiale négative zéro-gonflée,
Pareto généralisée, Beta moyenne-précision, et fonctions de lien
"""

import math
import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
from scipy import special

from errors import SupportError

try:
    import config
except ImportError:
    config = None

logger = logging.getLogger(__name__)

GPD_XI_EPS = getattr(config, 'GPD_XI_EPS', 1e-6) if config else 1e-6
EXPIT_CLIP = getattr(config, 'EXPIT_CLIP', 700.0) if config else 700.0


# ============================================================================
# LIENS ET TRANSFORMATIONS
# ============================================================================

def expit(x):
    """{1 + exp(-x)}^-1, stable jusqu'à |x| = 700"""
    return special.expit(np.clip(x, -EXPIT_CLIP, EXPIT_CLIP))


def log_expit(x):
    """log expit(x) = -log(1 + exp(-x))"""
    return -np.logaddexp(0.0, -np.asarray(x, dtype=float))


def f_transform(x):
    """f(x) = log(1 + x)"""
    x = np.asarray(x, dtype=float)
    if np.any(x <= -1.0):
        raise SupportError("f_transform exige x > -1")
    y = np.log1p(x)
    return float(y) if np.ndim(y) == 0 else y


def f_inverse(y):
    """f^-1(y) = exp(y) - 1"""
    x = np.expm1(np.asarray(y, dtype=float))
    return float(x) if np.ndim(x) == 0 else x


# ============================================================================
# BINOMIALE NÉGATIVE ZÉRO-GONFLÉE
# ============================================================================

@dataclass(frozen=True)
class ZinbParams:
    """psi: probabilité d'activation de la composante NB; mu: moyenne NB; alpha: forme"""
    psi: float
    mu: float
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.psi <= 1.0:
            raise ValueError(f"psi hors de [0, 1]: {self.psi}")
        if not self.mu > 0 or not self.alpha > 0:
            raise ValueError(f"mu et alpha doivent être > 0 (mu={self.mu}, alpha={self.alpha})")


def zinb_log_pmf(x, p: ZinbParams) -> float:
    """Log-probabilité de x sous NB_{psi, mu, alpha}"""
    if isinstance(x, bool) or not float(x).is_integer() or x < 0:
        raise ValueError(f"Comptage invalide: {x}")
    x = int(x)
    log_q = p.alpha * (math.log(p.alpha) - math.log(p.alpha + p.mu))
    if x == 0:
        return float(np.log((1.0 - p.psi) + p.psi * math.exp(log_q)))
    if p.psi == 0.0:
        return -math.inf
    return (math.log(p.psi)
            + special.gammaln(x + p.alpha) - special.gammaln(p.alpha) - special.gammaln(x + 1)
            + log_q + x * (math.log(p.mu) - math.log(p.alpha + p.mu)))


def zinb_sample(p: ZinbParams, rng: np.random.Generator, size=None):
    """0 avec probabilité 1 - psi, sinon un tirage NB de moyenne mu et forme alpha"""
    active = rng.random(size) < p.psi
    counts = rng.negative_binomial(p.alpha, p.alpha / (p.alpha + p.mu), size)
    out = np.where(active, counts, 0)
    return int(out) if size is None else out


def zinb_loglik_eta(
    x: np.ndarray,
    eta_psi: np.ndarray,
    eta_mu: np.ndarray,
    alpha: float
) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """
    Log-vraisemblance ZINB vectorisée en fonction des prédicteurs linéaires

    Args:
        x: comptages observés
        eta_psi: logit(psi)
        eta_mu: log(mu)
        alpha: forme NB

    Returns:
        (ll, {'eta_psi': dll/deta_psi, 'eta_mu': dll/deta_mu, 'log_alpha': dll/dlog(alpha)})
    """
    x = np.asarray(x, dtype=float)
    eta_psi = np.asarray(eta_psi, dtype=float)
    eta_mu = np.asarray(eta_mu, dtype=float)
    log_alpha = math.log(alpha)

    log_psi = log_expit(eta_psi)
    log1m_psi = log_expit(-eta_psi)
    log_alpha_mu = np.logaddexp(log_alpha, eta_mu)
    log_ratio = log_alpha - log_alpha_mu  # log(alpha / (alpha + mu))
    share_mu = expit(eta_mu - log_alpha)  # mu / (alpha + mu)
    log_q = alpha * log_ratio

    zero = x == 0
    ll = np.empty_like(x)
    g_psi = np.empty_like(x)
    g_mu = np.empty_like(x)
    g_alpha = np.empty_like(x)

    # x = 0
    ll0 = np.logaddexp(log1m_psi[zero], log_psi[zero] + log_q[zero])
    w = np.exp(log_psi[zero] + log_q[zero] - ll0)
    a0 = np.exp(log1m_psi[zero] - ll0)
    psi0 = np.exp(log_psi[zero])
    ll[zero] = ll0
    g_psi[zero] = (1.0 - psi0) * w - psi0 * a0
    g_mu[zero] = -w * alpha * share_mu[zero]
    g_alpha[zero] = w * alpha * (log_ratio[zero] + share_mu[zero])

    # x >= 1
    pos = ~zero
    xp = x[pos]
    ll[pos] = (log_psi[pos] + special.gammaln(xp + alpha) - special.gammaln(alpha)
               - special.gammaln(xp + 1) + log_q[pos] + xp * (eta_mu[pos] - log_alpha_mu[pos]))
    g_psi[pos] = np.exp(log1m_psi[pos])
    g_mu[pos] = xp - (xp + alpha) * share_mu[pos]
    g_alpha[pos] = alpha * (special.digamma(xp + alpha) - special.digamma(alpha)
                            + log_ratio[pos] + share_mu[pos] - xp / (alpha * np.exp(-log_ratio[pos])))
    return ll, {'eta_psi': g_psi, 'eta_mu': g_mu, 'log_alpha': g_alpha}


# ============================================================================
# PARETO GÉNÉRALISÉE
# ============================================================================

@dataclass(frozen=True)
class GpdParams:
    threshold_u: float
    sigma_u: float
    xi: float

    def __post_init__(self):
        if not self.sigma_u > 0:
            raise ValueError(f"sigma_u doit être > 0 (reçu {self.sigma_u})")

    @property
    def upper_endpoint(self) -> float:
        if self.xi < 0:
            return self.threshold_u - self.sigma_u / self.xi
        return math.inf


def _gpd_excess(x, p: GpdParams) -> np.ndarray:
    y = np.asarray(x, dtype=float) - p.threshold_u
    if np.any(y < 0) or np.any(np.asarray(x, dtype=float) > p.upper_endpoint):
        raise SupportError(f"Observation hors du support de la GPD [{p.threshold_u}, {p.upper_endpoint}]")
    return y


def gpd_cdf(x, p: GpdParams):
    """1 - (1 + xi (x-u)/sigma)_+^(-1/xi), limite exponentielle si |xi| < GPD_XI_EPS"""
    y = _gpd_excess(x, p)
    if abs(p.xi) < GPD_XI_EPS:
        cdf = -np.expm1(-y / p.sigma_u)
    else:
        # z >= 0 sur le support; pour xi < 0 l'exposant est positif
        z = np.maximum(1.0 + p.xi * y / p.sigma_u, 0.0)
        cdf = 1.0 - np.power(z, -1.0 / p.xi)
    return float(cdf) if np.ndim(cdf) == 0 else cdf


def gpd_log_pdf(x, p: GpdParams):
    y = _gpd_excess(x, p)
    lp, _ = gpd_logpdf_excess(y, p.sigma_u, p.xi)
    return float(lp) if np.ndim(lp) == 0 else lp


def gpd_quantile(q, p: GpdParams):
    """Inverse exacte de gpd_cdf"""
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q >= 1)):
        raise SupportError("Niveau de quantile hors de [0, 1)")
    if abs(p.xi) < GPD_XI_EPS:
        x = p.threshold_u - p.sigma_u * np.log1p(-q)
    else:
        x = p.threshold_u + p.sigma_u * np.expm1(-p.xi * np.log1p(-q)) / p.xi
    return float(x) if np.ndim(x) == 0 else x


def gpd_sample(p: GpdParams, rng: np.random.Generator, size=None):
    """Tirage par inversion"""
    return gpd_quantile(rng.random(size), p)


def gpd_excess_quantile(q, sigma, xi) -> np.ndarray:
    """Quantile des excès, vectorisé en (q, sigma, xi)"""
    q, sigma, xi = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (q, sigma, xi)))
    small = np.abs(xi) < GPD_XI_EPS
    safe_xi = np.where(small, 1.0, xi)
    general = sigma * np.expm1(-safe_xi * np.log1p(-q)) / safe_xi
    return np.where(small, -sigma * np.log1p(-q), general)


def gpd_logpdf_excess(y, sigma, xi) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """
    Log-densité GPD des excès y >= 0, vectorisée en sigma et xi, avec gradient

    Les points hors support reçoivent -inf (gradient nul), sans exception.

    Returns:
        (logpdf, {'log_sigma': d/dlog(sigma), 'xi': d/dxi})
    """
    y = np.asarray(y, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
    xi = np.broadcast_to(np.asarray(xi, dtype=float), y.shape)
    t = y / sigma
    small = np.abs(xi) < GPD_XI_EPS
    z = 1.0 + xi * t
    valid = (y >= 0) & (small | (z > 0))

    lp = np.full(y.shape, -np.inf)
    g_ls = np.zeros(y.shape)
    g_xi = np.zeros(y.shape)

    s = valid & small
    lp[s] = -np.log(sigma[s]) - t[s]
    g_ls[s] = -1.0 + t[s]
    g_xi[s] = 0.5 * t[s] ** 2 - t[s]

    g = valid & ~small
    log_z = np.log(z[g])
    lp[g] = -np.log(sigma[g]) - (1.0 / xi[g] + 1.0) * log_z
    g_ls[g] = -1.0 + (1.0 + xi[g]) * t[g] / z[g]
    g_xi[g] = log_z / xi[g] ** 2 - (1.0 / xi[g] + 1.0) * t[g] / z[g]
    return lp, {'log_sigma': g_ls, 'xi': g_xi}


# ============================================================================
# BETA MOYENNE-PRÉCISION
# ============================================================================

@dataclass(frozen=True)
class BetaMeanPrecision:
    nu_mean: float
    kappa: float

    def __post_init__(self):
        if not 0.0 < self.nu_mean < 1.0 or not self.kappa > 0:
            raise ValueError(f"Paramètres Beta invalides: nu={self.nu_mean}, kappa={self.kappa}")

    @property
    def shapes(self) -> Tuple[float, float]:
        return self.nu_mean * self.kappa, (1.0 - self.nu_mean) * self.kappa


def log_beta_function(a, b):
    """log B(a, b) = log Gamma(a) + log Gamma(b) - log Gamma(a + b)"""
    return special.betaln(a, b)


def beta_log_pdf(x, p: BetaMeanPrecision):
    x = np.asarray(x, dtype=float)
    if np.any((x <= 0) | (x >= 1)):
        raise SupportError("Observation Beta hors de (0, 1)")
    lp, _ = beta_logpdf_mean(x, p.nu_mean, p.kappa)
    return float(lp) if np.ndim(lp) == 0 else lp


def beta_sample(p: BetaMeanPrecision, rng: np.random.Generator, size=None):
    a, b = p.shapes
    return rng.beta(a, b, size)


def beta_logpdf_mean(x, nu, kappa) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """
    Log-densité Beta(nu.kappa, (1-nu).kappa) vectorisée, avec gradient

    Returns:
        (logpdf, {'nu': d/dnu, 'kappa': d/dkappa})
    """
    x = np.asarray(x, dtype=float)
    nu = np.asarray(nu, dtype=float)
    a = nu * kappa
    b = (1.0 - nu) * kappa
    log_x = np.log(x)
    log_1mx = np.log1p(-x)
    lp = (a - 1.0) * log_x + (b - 1.0) * log_1mx - log_beta_function(a, b)
    dg_ab = special.digamma(a + b)
    d_a = log_x - special.digamma(a) + dg_ab
    d_b = log_1mx - special.digamma(b) + dg_ab
    return lp, {'nu': kappa * (d_a - d_b), 'kappa': nu * d_a + (1.0 - nu) * d_b}
